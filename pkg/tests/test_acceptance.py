"""Acceptance criteria, each checked at its stated tolerance.

Every test appends one PASS/FAIL line to the acceptance section of the
pytest terminal summary before asserting.
"""

import functools
import time

import numpy as np
import pytest
from click.testing import CliRunner

from aeshape import data as dt
from aeshape import diagnostics as dg
from aeshape import diffmath as dm
from aeshape import gnorm as gn
from aeshape import network as nw
from aeshape import risks as rk
from aeshape import training as tr
from aeshape.cli import main
from aeshape.rng import CounterRNG

from conftest import ACCEPTANCE_LINES, fd_gradient, rel_err

FIG1_ARCHS = {
    "a": "50-100-200-100-50-1-50-100-200-100-50",
    "b": "50-100-50-1-50-100-50",
    "c": "200-1-200",
}
SEEDS = (0, 1, 2)


def report(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def majority(check, seeds=SEEDS):
    """Run ``check(seed) -> (ok, detail)`` until a majority verdict is certain."""
    need = len(seeds) // 2 + 1
    passed, failed, details = 0, 0, []
    for seed in seeds:
        ok, detail = check(seed)
        details.append(f"seed {seed}: {'ok' if ok else 'no'} ({detail})")
        passed += ok
        failed += not ok
        if passed >= need or failed > len(seeds) - need:
            break
    return passed >= need, "; ".join(details)


# -- 1. gradient correctness ---------------------------------------------------


def _objectives():
    spec_all = rk.RiskSpec(
        penalties=(
            rk.Penalty.constant("contractive", 0.3),
            rk.Penalty.constant("ortho_contractive", 0.7),
            rk.Penalty.constant("normalized_ortho", 0.5),
        )
    )
    return {
        "uls_risk": (rk.uls_risk, 1e-5),
        "contractive_penalty": (rk.contractive_penalty, 1e-4),
        "ortho_contractive_penalty": (rk.ortho_contractive_penalty, 1e-4),
        "normalized_ortho_penalty": (rk.normalized_ortho_penalty, 1e-4),
        "total_objective": (lambda m, X: rk.total_objective(m, X, spec_all)[0], 1e-4),
    }


def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = {}
    for name, (fn, tol) in _objectives().items():
        errs = []
        for _ in range(20):
            widths = rng.integers(1, 9, size=rng.integers(1, 4))
            arch = nw.parse_arch("-".join(map(str, widths)), 2)
            assert arch.n_params <= 500
            net = nw.Net(arch, rng.normal(size=arch.n_params))
            X = rng.normal(size=(int(rng.integers(1, 11)), 2))
            _, g, _ = nw.value_and_grad_params(net, lambda b: fn(b, dm.Tensor(X)))
            with dm.no_record():
                fd = fd_gradient(lambda p: float(fn(net.with_params(p), X)), net.params)
            errs.append(rel_err(g, fd))
        worst[name] = (max(errs), tol)
    elapsed = time.perf_counter() - start
    ok = all(e < tol for e, tol in worst.values()) and elapsed < 30
    detail = ", ".join(f"{k} max rel err {e:.1e} (<{t:g})" for k, (e, t) in worst.items())
    report(1, ok, f"{detail}; {elapsed:.1f}s (<30s)")


# -- 2. linear-case oracle -----------------------------------------------------


def test_criterion_2_linear_principal_subspace():
    start = time.perf_counter()
    rng = CounterRNG(2, "gaussian")
    rot = np.array([[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]])
    # covariance eigenvalues {4, 1}
    X = (rng.normal(1000).reshape(500, 2) * [2.0, 1.0]) @ rot.T
    ds = dt.Dataset(X, np.arange(500), np.arange(0), {"generator": "gaussian"})
    cfg = tr.TrainConfig(
        nw.parse_arch("1", 2, activation="identity"),
        optimizer=tr.OptimizerSpec("adam", 1e-2),
        iterations=2000,
        eval_every=2000,
    )
    net = tr.train(cfg, ds).net
    direction = net.views()[1][0].reshape(-1)
    top = np.linalg.eigh(np.cov(X.T))[1][:, -1]
    angle = float(np.arccos(min(1.0, abs(direction @ top) / np.linalg.norm(direction))))
    elapsed = time.perf_counter() - start
    report(2, angle < 0.01 and elapsed < 60, f"decoder direction {angle:.2e} rad from top eigenvector (<0.01); {elapsed:.1f}s (<60s)")


# -- 3. critical-point conditions at a constructed model --------------------------


def test_criterion_3_constructed_critical_point():
    start = time.perf_counter()
    ds = dt.gen_fixture("circle", n=2000, sigma=0.05, seed=3)
    e1, e2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    model = nw.FunctionalAutoencoder(
        lambda X: dm.atan2(dm.matmul(X, e2), dm.matmul(X, e1)),
        lambda Z: dm.add(dm.matmul(dm.cos(Z), e1.T), dm.matmul(dm.sin(Z), e2.T)),
        2,
        1,
    )
    penalty = rk.ortho_contractive_penalty(model, ds.points)
    n_bins = 32
    z = nw.encode(model, ds.points).reshape(-1)
    w = np.ptp(z) / n_bins
    # farthest in-bin point on the decoded circle from the bin-center image
    bound = 2 * np.sin(w / 4)
    scr = dg.self_consistency_residual(model, ds.points, n_bins)
    elapsed = time.perf_counter() - start
    ok = penalty < 1e-10 and scr < 2 * bound and elapsed < 5
    report(3, ok, f"ortho penalty {penalty:.1e} (<1e-10), self-consistency {scr:.3e} (<{2 * bound:.3e}); {elapsed:.2f}s (<5s)")


# -- 4. gradient-norm saddle finding ------------------------------------------------


def test_criterion_4_gnorm_saddle_finding():
    start = time.perf_counter()
    saddle, cubic = gn.get_function("saddle"), gn.get_function("cubic")
    starts = np.random.default_rng(4).uniform(-1, 1, size=(10, 2))
    gnorm_ok, gd_ok = [], []
    for x0 in starts:
        traj = gn.gnorm_descent(saddle, x0, max_iters=100_000)
        gnorm_ok.append(np.linalg.norm(saddle.gradient(traj.terminal)) < 1e-6 and traj.iterations <= 100_000)
        try:
            points = gn.gradient_descent(saddle, x0).points
        except gn.DivergenceError as err:
            points = err.trajectory.points
        gd_ok.append(max(np.linalg.norm(p) for p in points) > 10)
    spurious = gn.classify_terminal(cubic, gn.gnorm_descent(cubic, [0.5]).terminal)
    elapsed = time.perf_counter() - start
    ok = all(gnorm_ok) and all(gd_ok) and spurious is gn.Terminal.SPURIOUS and elapsed < 10
    report(
        4,
        ok,
        f"gnorm reached |grad|<1e-6 in {sum(gnorm_ok)}/10, plain descent escaped past |x|>10 in {sum(gd_ok)}/10, "
        f"cubic terminal {spurious.value}; {elapsed:.2f}s (<10s)",
    )


# -- 5. penalty shapes ----------------------------------------------------------


def test_criterion_5_penalty_shapes():
    start = time.perf_counter()
    cols = {c: i for i, c in enumerate(dg.PENALTY_SHAPE_COLUMNS)}
    errs, ortho_argmins = [], []
    for alpha in (0.5, 1.0, 2.0):
        table = dg.penalty_shapes(alpha, 10_001)
        t = table[:, 0]
        errs.append(abs(t[np.argmin(table[:, cols["total_normalized"]])] - alpha / (1 + alpha)))
    for alpha in (0.25, 0.5, 1.0):
        table = dg.penalty_shapes(alpha, 10_001)
        ortho_argmins.append(float(table[np.argmin(table[:, cols["total_ortho"]]), 0]))
    elapsed = time.perf_counter() - start
    ok = max(errs) < 1e-3 and all(a == 0.0 for a in ortho_argmins) and elapsed < 1
    report(5, ok, f"normalized argmin error {max(errs):.1e} (<1e-3), ortho argmins {ortho_argmins} (all 0); {elapsed:.3f}s (<1s)")


# -- 6 and 7. trained spiral orderings -----------------------------------------------


@functools.lru_cache(maxsize=None)
def spiral():
    return dt.gen_spiral()


@functools.lru_cache(maxsize=None)
def fit(hidden, seed, weight=0.0):
    pens = (rk.Penalty.constant("normalized_ortho", weight),) if weight else ()
    cfg = tr.TrainConfig(nw.parse_arch(hidden, 2), rk.RiskSpec(penalties=pens), iterations=20000, seed=seed)
    return tr.train(cfg, spiral())


def mean_residual(net):
    X = spiral().train
    return float(np.mean(np.linalg.norm(nw.reconstruct(net, X) - X, axis=1)))


@pytest.mark.slow
def test_criterion_6_architecture_ordering():
    def check(seed):
        f = {k: fit(a, seed).final for k, a in FIG1_ARCHS.items()}
        ok = f["a"].train_rmse < f["b"].train_rmse < f["c"].train_rmse and f["a"].test_rmse <= f["b"].test_rmse
        detail = "train a/b/c " + "/".join(f"{f[k].train_rmse:.4f}" for k in "abc")
        return ok, detail + ", test a/b " + "/".join(f"{f[k].test_rmse:.4f}" for k in "ab")

    ok, detail = majority(check)
    report(6, ok, detail)


@pytest.mark.slow
def test_criterion_7_normalized_penalty_leaves_identity():
    def check(seed):
        free = fit("50-100-200-100-50", seed)
        pen = fit("50-100-200-100-50", seed, 0.02)
        underfit = fit(FIG1_ARCHS["c"], seed).final.train_rmse
        r_free, r_pen = mean_residual(free.net), mean_residual(pen.net)
        ok = r_pen > 5 * r_free and pen.final.train_rmse < underfit
        return ok, f"mean |r-x| {r_pen:.4f} vs {r_free:.4f} (ratio {r_pen / r_free:.1f}, >5), train rmse {pen.final.train_rmse:.4f} < {underfit:.4f}"

    ok, detail = majority(check)
    report(7, ok, detail)


# -- 8. determinism ---------------------------------------------------------------

SMALL = """
version: 1
seed: 5
dataset: {kind: spiral, n: 150}
arch: {hidden: 6-1-6}
train: {iterations: 30, eval_every: 10, lr: 0.01}
risk:
  penalties: [{kind: normalized_ortho, weight: 0.02}, {kind: contractive, weight: 0.01}]
grid: {n_rays: 4, n_circles: 2, samples_per_line: 10}
sweep:
  axes: [{field: risk.penalties.0.weight, values: [0.0, 0.04]}]
"""


def test_criterion_8_cli_determinism(tmp_path):
    cfg = tmp_path / "small.yaml"
    cfg.write_text(SMALL)
    runner = CliRunner()

    def invoke(*args):
        res = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
        assert res.exit_code == 0, res.output
        return res

    invoke("train", "--config", cfg, "--out", tmp_path / "seed_run")
    ck, data_csv = tmp_path / "seed_run" / "checkpoint.txt", tmp_path / "seed_run" / "dataset.csv"
    commands = {
        "train": ["train", "--config", cfg],
        "sweep": ["sweep", "--config", cfg],
        "gnorm": ["gnorm", "--function", "rosenbrock", "--x0", "-1.2,1", "--method", "newton"],
        "diagnose": ["diagnose", "--checkpoint", ck, "--dataset", data_csv],
        "shapes": ["shapes", "--alpha", 0.5],
    }
    identical = {}
    for name, args in commands.items():
        outs = [tmp_path / f"{name}_{k}" for k in range(2)]
        for o in outs:
            invoke(*args, "--out", o)
        files = [{p.relative_to(o).as_posix(): p.read_bytes() for p in sorted(o.rglob("*.csv"))} for o in outs]
        identical[name] = bool(files[0]) and files[0] == files[1]
    report(8, all(identical.values()), ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in identical.items()))
