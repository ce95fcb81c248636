import numpy as np
import pytest
from click.testing import CliRunner

from aeshape import network as nw
from aeshape.cli import main
from aeshape.io import read_csv

SMALL_TRAIN = """
version: 1
name: small
seed: 3
dataset: {kind: spiral, n: 200, seed: 1}
arch: {hidden: 8-1-8}
train: {iterations: 40, eval_every: 10, lr: 0.01}
risk:
  penalties: [{kind: normalized_ortho, weight: 0.02}]
grid: {n_rays: 4, n_circles: 2, samples_per_line: 10}
"""


def run(args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def config(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def csv_bytes(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*.csv"))}


def table(path):
    return {r[0]: float(r[1]) for r in read_csv(path)[2]}


def test_train_writes_all_artifacts(tmp_path):
    res = run(["train", "--config", config(tmp_path, SMALL_TRAIN), "--out", tmp_path / "o"])
    assert res.exit_code == 0, res.output
    for name in ("run.csv", "checkpoint.txt", "dataset.csv", "reconstruction.csv", "grid.csv", "run.svg", "fit.svg"):
        assert (tmp_path / "o" / name).exists(), name
    meta, header, rows = read_csv(tmp_path / "o" / "run.csv")
    assert header[:4] == ["iteration", "train_rmse", "test_rmse", "train_objective"]
    assert [int(r[0]) for r in rows] == [10, 20, 30, 40]
    assert meta["seed"] == 3


def test_seed_override_changes_output(tmp_path):
    c = config(tmp_path, SMALL_TRAIN)
    run(["train", "--config", c, "--out", tmp_path / "a"])
    run(["train", "--config", c, "--out", tmp_path / "b", "--seed", 4])
    assert (tmp_path / "a" / "run.csv").read_bytes() != (tmp_path / "b" / "run.csv").read_bytes()


def test_every_command_is_byte_deterministic(tmp_path):
    c = config(tmp_path, SMALL_TRAIN + "sweep:\n  axes: [{field: arch.hidden, values: ['4-1-4', '6-1-6']}]\n")
    commands = [
        ["train", "--config", c],
        ["sweep", "--config", c, "--threads", 2],
        ["gnorm", "--function", "saddle", "--x0", "0.5,0.5"],
        ["shapes", "--alpha", 1.0],
    ]
    for i, cmd in enumerate(commands):
        outs = [tmp_path / f"{i}_{k}" for k in range(2)]
        for o in outs:
            assert run([*cmd, "--out", o]).exit_code == 0
        a, b = csv_bytes(outs[0]), csv_bytes(outs[1])
        assert a and a == b, cmd[0]
        svgs = [sorted(o.rglob("*.svg")) for o in outs]
        assert [p.read_bytes() for p in svgs[0]] == [p.read_bytes() for p in svgs[1]]
    ck = tmp_path / "0_0" / "checkpoint.txt"
    ds = tmp_path / "0_0" / "dataset.csv"
    diag = [tmp_path / f"d{k}" for k in range(2)]
    for o in diag:
        assert run(["diagnose", "--checkpoint", ck, "--dataset", ds, "--out", o]).exit_code == 0
    assert csv_bytes(diag[0]) == csv_bytes(diag[1])


def test_missing_config_exits_2(tmp_path):
    assert run(["train", "--config", tmp_path / "nope.yaml", "--out", tmp_path]).exit_code == 2
    assert run(["train", "--out", tmp_path]).exit_code == 2


def test_bad_config_exits_2_with_field(tmp_path):
    res = run(["train", "--config", config(tmp_path, "version: 1\ntrain: {itrations: 3}\n"), "--out", tmp_path])
    assert res.exit_code == 2
    assert "train.itrations" in res.output


def test_divergence_exits_1_with_partial_artifacts(tmp_path):
    text = """
dataset: {kind: spiral, n: 100}
arch: {hidden: 4-1-4, activation: identity}
train: {optimizer: sgd, lr: 1000.0, iterations: 200, eval_every: 1}
"""
    res = run(["train", "--config", config(tmp_path, text), "--out", tmp_path / "o"])
    assert res.exit_code == 1
    assert (tmp_path / "o" / "run.csv").exists() and (tmp_path / "o" / "checkpoint.txt").exists()


def test_sweep_rows(tmp_path):
    text = """
dataset: {kind: spiral, n: 100}
arch: {hidden: 50-50-50-50}
train: {iterations: 2, eval_every: 1}
risk: {penalties: [{kind: ortho_contractive, weight: 0.0}]}
sweep:
  axes: [{field: risk.penalties.0.weight, values: [0.04, 0.02, 0.005]}]
"""
    res = run(["sweep", "--config", config(tmp_path, text), "--out", tmp_path / "s"])
    assert res.exit_code == 0, res.output
    _, header, rows = read_csv(tmp_path / "s" / "summary.csv")
    assert header == ["cell", "risk.penalties.0.weight", "final_train_rmse", "final_test_rmse", "status"]
    assert [float(r[1]) for r in rows] == [0.04, 0.02, 0.005]
    assert all((tmp_path / "s" / r[0] / "run.csv").exists() for r in rows)


def test_sweep_empty_axes_is_single_train(tmp_path):
    res = run(["sweep", "--config", config(tmp_path, SMALL_TRAIN), "--out", tmp_path / "s"])
    assert res.exit_code == 0
    assert len(read_csv(tmp_path / "s" / "summary.csv")[2]) == 1
    run(["train", "--config", config(tmp_path, SMALL_TRAIN), "--out", tmp_path / "t"])
    assert (tmp_path / "s" / "cell_000" / "run.csv").read_bytes() == (tmp_path / "t" / "run.csv").read_bytes()


def test_sweep_two_axes(tmp_path):
    text = SMALL_TRAIN.replace("iterations: 40", "iterations: 2") + (
        "sweep:\n  axes:\n    - {field: seed, values: [0, 1]}\n    - {field: arch.hidden, values: ['2-1-2', '3-1-3', '4-1-4']}\n"
    )
    assert run(["sweep", "--config", config(tmp_path, text), "--out", tmp_path / "s"]).exit_code == 0
    assert len(read_csv(tmp_path / "s" / "summary.csv")[2]) == 6


@pytest.mark.parametrize(
    "function, x0, expected",
    [("saddle", "0.5,0.5", "TrueCritical"), ("cubic", "0.5", "SpuriousGnormCritical")],
)
def test_gnorm_terminal(tmp_path, function, x0, expected):
    res = run(["gnorm", "--function", function, "--x0", x0, "--out", tmp_path])
    assert res.exit_code == 0
    _, header, rows = read_csv(tmp_path / "terminal.csv")
    assert rows[0][header.index("classification")] == expected
    assert (tmp_path / "trajectory.svg").exists()


def test_gnorm_usage_errors(tmp_path):
    assert run(["gnorm", "--function", "nope", "--out", tmp_path]).exit_code == 2
    assert run(["gnorm", "--function", "saddle", "--x0", "1", "--out", tmp_path]).exit_code == 2
    assert run(["gnorm", "--function", "cubic", "--x0", "0", "--method", "newton", "--out", tmp_path]).exit_code == 1


def write_ckpt(path, hidden, params, input_dim=2):
    nw.save_checkpoint(nw.Net(nw.parse_arch(hidden, input_dim, activation="identity"), np.asarray(params, float)), path)
    return path


def test_diagnose_identity_checkpoint(tmp_path):
    ck = write_ckpt(tmp_path / "id.txt", "2", [1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0])
    assert run(["diagnose", "--checkpoint", ck, "--out", tmp_path]).exit_code == 0
    vals = table(tmp_path / "diagnostics.csv")
    assert vals["orthogonality_defect"] == 0.0
    assert vals["uls_risk"] == 0.0


def test_diagnose_projection_checkpoint_on_circle(tmp_path):
    # orthogonal projection onto a diameter: residuals are perpendicular to the decoded line
    ck = write_ckpt(tmp_path / "proj.txt", "1", [1, 0, 0, 1, 0, 0, 0])
    c = config(tmp_path, "dataset: {kind: circle, n: 300, sigma: 0.0}\n")
    assert run(["diagnose", "--config", c, "--checkpoint", ck, "--out", tmp_path / "o"]).exit_code == 0
    vals = table(tmp_path / "o" / "diagnostics.csv")
    assert vals["orthogonality_defect"] < 1e-6
    assert vals["ortho_contractive"] < 1e-20


def test_diagnose_dimension_mismatch(tmp_path):
    ck = write_ckpt(tmp_path / "c3.txt", "1", np.zeros(3 + 1 + 3 + 3), input_dim=3)
    assert run(["diagnose", "--checkpoint", ck, "--out", tmp_path]).exit_code == 2
    assert run(["diagnose", "--checkpoint", tmp_path / "missing.txt", "--out", tmp_path]).exit_code == 2


def test_shapes_command(tmp_path):
    res = run(["shapes", "--alpha", 1.0, "--out", tmp_path])
    assert res.exit_code == 0
    meta, header, rows = read_csv(tmp_path / "shapes.csv")
    assert meta["alpha"] == 1.0 and len(rows) == 1001
    t = np.array([float(r[0]) for r in rows])
    col = np.array([float(r[header.index("total_normalized")]) for r in rows])
    assert t[np.argmin(col)] == 0.5
    assert (tmp_path / "shapes.svg").read_text().startswith("<?xml")


@pytest.mark.slow
def test_long_run_has_one_hundred_eval_rows(tmp_path):
    text = "arch: {hidden: 200-1-200}\ngrid: {samples_per_line: 10}\n"
    assert run(["train", "--config", config(tmp_path, text), "--out", tmp_path / "o"]).exit_code == 0
    rows = read_csv(tmp_path / "o" / "run.csv")[2]
    assert len(rows) == 100 and rows[-1][0] == "20000"
