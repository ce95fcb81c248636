"""Command-line front end.

Exit codes: 0 success, 1 runtime failure (divergence, singular Hessian),
2 usage or config error.
"""

from __future__ import annotations

import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from . import plots
from .data import ConfigError, gen_polar_grid, load_dataset, save_dataset
from .diagnostics import DEFAULT_BINS, orthogonality_defect, penalty_shapes, PENALTY_SHAPE_COLUMNS, self_consistency_residual
from .diffmath import NonFiniteError
from .gnorm import METHODS, DivergenceError, SingularHessianError, classify_terminal, get_function
from .io import write_csv
from .network import CheckpointError, load_checkpoint, reconstruct
from .risks import cem_orthogonality_risk, contractive_penalty, normalized_ortho_penalty, ortho_contractive_penalty, uls_risk
from .training import TrainDivergedError, map_grid, train

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _usage(message):
    return _Fail(EXIT_USAGE, message)


def _load_cfg(path, seed):
    if path is None:
        cfg = cfgmod.normalize({})
    else:
        try:
            cfg = cfgmod.load(path)
        except ConfigError as err:
            raise _usage(str(err)) from None
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def _write_train_artifacts(exp, record, out: Path) -> None:
    record.save(out / "run.csv", out / "checkpoint.txt")
    net = record.net
    ds = exp.dataset
    save_dataset(ds, out / "dataset.csv")
    recon = reconstruct(net, ds.points)
    split = np.empty(len(ds), dtype=object)
    split[ds.train_idx] = "train"
    split[ds.test_idx] = "test"
    write_csv(
        out / "reconstruction.csv",
        ["x0", "x1", "r0", "r1", "split"],
        ([*p[:2], *q[:2], s] for p, q, s in zip(ds.points, recon, split)),
        dict(record.meta, kind="reconstruction"),
    )
    g = exp.cfg["grid"]
    grid = gen_polar_grid(int(g["n_rays"]), int(g["n_circles"]), float(g["r_max"]), int(g["samples_per_line"]))
    mapped = map_grid(net, grid)
    rows = []
    for i, (line, moved) in enumerate(zip(grid.polylines, mapped.polylines)):
        kind = "ray" if i < len(grid.rays) else "circle"
        rows.extend([i, kind, *p, *q] for p, q in zip(line, moved))
    write_csv(out / "grid.csv", ["line", "kind", "x0", "x1", "m0", "m1"], rows, dict(grid.meta, kind="mapped_grid"))
    plots.plot_run(out / "run.csv", out / "run.svg")
    plots.plot_fit(out / "reconstruction.csv", out / "grid.csv", out / "fit.svg")


def _run_cell(cfg: dict, out: Path) -> tuple[str, float, float]:
    """Train one config into ``out``; returns (status, train_rmse, test_rmse)."""
    try:
        exp = cfgmod.build_experiment(cfg)
    except ConfigError as err:
        raise _usage(str(err)) from None
    if exp.dataset.dim != 2:
        raise _usage("only 2-D datasets are supported by the train artifacts")
    out.mkdir(parents=True, exist_ok=True)
    try:
        record = train(exp.train, exp.dataset)
    except TrainDivergedError as err:
        err.record.save(out / "run.csv", out / "checkpoint.txt")
        if err.record.rows:
            try:
                _write_train_artifacts(exp, err.record, out)
            except NonFiniteError:
                pass  # the retained state may be finite yet overflow on the grid
        return f"diverged@{err.iteration}", float("nan"), float("nan")
    _write_train_artifacts(exp, record, out)
    return "ok", record.final.train_rmse, record.final.test_rmse


def _cell_job(args):
    cfg, out = args
    try:
        return _run_cell(cfg, Path(out))
    except _Fail as err:
        return f"error: {err}", float("nan"), float("nan")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Autoencoder risk-landscape experiments."""


def _common(fn):
    fn = click.option("--seed", type=int, default=None, help="Override the config seed.")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), default=Path("out"), show_default=True)(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None)(fn)
    return fn


def _guard(fn):
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except _Fail as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(err.code)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@main.command("train")
@_common
@_guard
def cmd_train(config_path, out, seed):
    """Train one autoencoder and write run, checkpoint, grid, and plot artifacts."""
    if config_path is None:
        raise _usage("train requires --config")
    cfg = _load_cfg(config_path, seed)
    status, tr, te = _run_cell(cfg, out)
    if status != "ok":
        click.echo(f"training {status}; partial artifacts in {out}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"final train_rmse={tr:.6g} test_rmse={te:.6g}")


@main.command("sweep")
@_common
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True)
@_guard
def cmd_sweep(config_path, out, seed, threads):
    """Run the cartesian product of sweep axes; one subdirectory per cell plus summary.csv."""
    if config_path is None:
        raise _usage("sweep requires --config")
    cfg = _load_cfg(config_path, seed)
    try:
        cells = cfgmod.sweep_cells(cfg)
    except ConfigError as err:
        raise _usage(str(err)) from None
    fields = [ax["field"] for ax in cfg["sweep"]["axes"]]
    jobs = [(cell, str(out / f"cell_{i:03d}")) for i, (_, cell) in enumerate(cells)]
    for cell, _ in jobs:
        try:
            cfgmod.build_experiment(cell)
        except ConfigError as err:
            raise _usage(str(err)) from None
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    rows = []
    for i, ((assign, _), (status, tr, te)) in enumerate(zip(cells, results)):
        rows.append([f"cell_{i:03d}", *(_cellval(assign[f]) for f in fields), tr, te, status])
    write_csv(
        out / "summary.csv",
        ["cell", *fields, "final_train_rmse", "final_test_rmse", "status"],
        rows,
        {"kind": "sweep_summary", "name": cfg["name"], "axes": cfg["sweep"]["axes"], "seed": cfg["seed"]},
    )
    click.echo(f"{len(rows)} cells written to {out}")
    if any(r[-1] != "ok" for r in rows):
        sys.exit(EXIT_RUNTIME)


def _cellval(v):
    return v if isinstance(v, (int, float)) and not isinstance(v, bool) else str(v)


@main.command("gnorm")
@_common
@click.option("--function", "function", default=None, help="Test function name.")
@click.option("--x0", default=None, help="Comma-separated start point.")
@click.option("--method", type=click.Choice(sorted(METHODS)), default=None)
@_guard
def cmd_gnorm(config_path, out, seed, function, x0, method):
    """Run gradient-norm descent, Newton, or plain descent on a test function."""
    cfg = _load_cfg(config_path, seed)
    g = cfg["gnorm"]
    name = function or g["function"]
    method = method or g["method"]
    if method not in METHODS:
        raise _usage(f"unknown method {method!r}")
    try:
        f = get_function(name)
    except KeyError as err:
        raise _usage(err.args[0]) from None
    try:
        start = [float(v) for v in x0.split(",")] if x0 else [float(v) for v in np.atleast_1d(g["x0"])]
    except ValueError:
        raise _usage(f"bad x0 {x0!r}") from None
    if len(start) != f.dim:
        raise _usage(f"{name} takes {f.dim}-dimensional x0, got {len(start)}")
    failed = None
    try:
        traj = METHODS[method](f, start, float(g["step"]), int(g["max_iters"]), float(g["tol"]))
    except (DivergenceError,) as err:
        traj, failed = err.trajectory, str(err)
    except SingularHessianError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_RUNTIME)
    terminal = classify_terminal(f, traj.terminal, float(g["tol"]))
    meta = {
        "kind": "gnorm_trajectory",
        "function": name,
        "method": method,
        "x0": start,
        "step": float(g["step"]),
        "max_iters": int(g["max_iters"]),
        "tol": float(g["tol"]),
    }
    header = ["k", *(f"x{i}" for i in range(f.dim)), "f", "grad_norm", "hess_grad_norm"]
    rows = (
        [k, *x, f.value(x), np.linalg.norm(f.gradient(x)), np.linalg.norm(f.hessian(x) @ f.gradient(x))]
        for k, x in enumerate(traj.points)
    )
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trajectory.csv", header, rows, meta)
    write_csv(
        out / "terminal.csv",
        ["function", "method", "iterations", "converged", *(f"x{i}" for i in range(f.dim)), "classification"],
        [[name, method, traj.iterations, str(traj.converged).lower(), *traj.terminal, terminal.value]],
        meta,
    )
    plots.plot_trajectory(out / "trajectory.csv", out / "trajectory.svg")
    click.echo(f"{name}/{method}: {terminal.value} at {np.array2string(traj.terminal, precision=6)}")
    if failed:
        click.echo(f"error: {failed}", err=True)
        sys.exit(EXIT_RUNTIME)


@main.command("diagnose")
@_common
@click.option("--checkpoint", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--dataset", "dataset_csv", type=click.Path(dir_okay=False, path_type=Path), default=None)
@_guard
def cmd_diagnose(config_path, out, seed, checkpoint, dataset_csv):
    """Audit a checkpoint against the critical-point conditions."""
    cfg = _load_cfg(config_path, seed)
    ckpt = checkpoint
    if ckpt is None and cfg["diagnose"]["checkpoint"]:
        ckpt = Path(cfg["diagnose"]["checkpoint"])
        if not ckpt.is_absolute() and config_path is not None:
            ckpt = config_path.parent / ckpt
    if ckpt is None:
        raise _usage("diagnose needs --checkpoint or diagnose.checkpoint in the config")
    try:
        net = load_checkpoint(ckpt)
    except OSError as err:
        raise _usage(f"cannot read checkpoint {ckpt}: {err.strerror}") from None
    except CheckpointError as err:
        raise _usage(f"{ckpt}: {err}") from None
    try:
        ds = load_dataset(dataset_csv) if dataset_csv else cfgmod.build_dataset(cfg)
    except (OSError, ValueError) as err:
        raise _usage(f"dataset: {err}") from None
    if ds.dim != net.input_dim:
        raise _usage(f"dataset dimension {ds.dim} does not match checkpoint input_dim {net.input_dim}")
    X = ds.train
    n_bins = int(cfg["diagnose"]["n_bins"] or DEFAULT_BINS)
    rows = [
        ["uls_risk", uls_risk(net, X)],
        ["contractive", contractive_penalty(net, X)],
        ["ortho_contractive", ortho_contractive_penalty(net, X)],
        ["normalized_ortho", normalized_ortho_penalty(net, X, float(cfg["risk"]["epsilon_floor"]))],
        ["orthogonality_defect", orthogonality_defect(net, X)],
    ]
    if net.latent_dim == 1:
        for label, fn in (
            ("self_consistency", lambda: self_consistency_residual(net, X, n_bins)),
            ("cem_orthogonality", lambda: cem_orthogonality_risk(net, X, n_bins)),
        ):
            try:
                rows.append([label, fn()])
            except ValueError:
                rows.append([label, float("nan")])
    meta = {"kind": "diagnostics", "checkpoint_arch": net.arch.to_string(), "dataset": ds.meta, "n_bins": n_bins}
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "diagnostics.csv", ["metric", "value"], rows, meta)
    for label, value in rows:
        click.echo(f"{label}: {value:.6g}")


@main.command("shapes")
@_common
@click.option("--alpha", type=float, default=None)
@_guard
def cmd_shapes(config_path, out, seed, alpha):
    """Tabulate and plot the idealized penalty shapes for one penalty weight."""
    cfg = _load_cfg(config_path, seed)
    alpha = float(cfg["shapes"]["alpha"] if alpha is None else alpha)
    n = int(cfg["shapes"]["n_samples"])
    try:
        table = penalty_shapes(alpha, n)
    except ValueError as err:
        raise _usage(str(err)) from None
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "shapes.csv", PENALTY_SHAPE_COLUMNS, table.tolist(), {"kind": "penalty_shapes", "alpha": alpha, "n_samples": n})
    plots.plot_shapes(out / "shapes.csv", out / "shapes.svg")
    t = table[:, 0]
    click.echo(
        f"alpha={alpha:g}: argmin total_ortho t={t[np.argmin(table[:, 4])]:.4f}, "
        f"argmin total_normalized t={t[np.argmin(table[:, 5])]:.4f}"
    )


if __name__ == "__main__":
    main()
