"""Mini-batch training of autoencoders with logging and checkpoints."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import diffmath as dm
from .data import Dataset, PolarGrid
from .io import write_csv
from .network import ArchSpec, Net, init, reconstruct, save_checkpoint, value_and_grad_params
from .risks import RiskSpec, total_objective
from .rng import CounterRNG


class TrainDivergedError(RuntimeError):
    """Loss or parameters went non-finite. ``record`` holds the last finite state."""

    def __init__(self, iteration: int, record: "RunRecord", cause: str = ""):
        msg = f"training diverged at iteration {iteration}"
        super().__init__(f"{msg}: {cause}" if cause else msg)
        self.iteration = iteration
        self.record = record


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class OptimizerSpec:
    kind: OptimizerKind = OptimizerKind.ADAM
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", OptimizerKind(self.kind))
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    arch: ArchSpec
    risk: RiskSpec = RiskSpec()
    optimizer: OptimizerSpec = OptimizerSpec()
    iterations: int = 20000
    batch_size: int = 100
    eval_every: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("iterations, batch_size and eval_every must be >= 1")


@dataclass
class EvalRow:
    iteration: int
    train_rmse: float
    test_rmse: float
    train_objective: float
    penalties: dict[str, float]


@dataclass
class RunRecord:
    rows: list[EvalRow]
    net: Net
    penalty_names: list[str]
    wall_clock: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def header(self) -> list[str]:
        return ["iteration", "train_rmse", "test_rmse", "train_objective", *self.penalty_names]

    def table(self) -> list[list]:
        return [
            [r.iteration, r.train_rmse, r.test_rmse, r.train_objective, *(r.penalties[k] for k in self.penalty_names)]
            for r in self.rows
        ]

    def save(self, csv_path, checkpoint_path=None) -> None:
        write_csv(csv_path, self.header, self.table(), self.meta)
        if checkpoint_path is not None:
            save_checkpoint(self.net, checkpoint_path)

    @property
    def final(self) -> EvalRow:
        return self.rows[-1]


class _Adam:
    def __init__(self, spec: OptimizerSpec, size: int):
        self.spec = spec
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, g):
        s = self.spec
        self.t += 1
        self.m *= s.beta1
        self.m += (1.0 - s.beta1) * g
        self.v *= s.beta2
        self.v += (1.0 - s.beta2) * (g * g)
        mhat = self.m / (1.0 - s.beta1**self.t)
        vhat = self.v / (1.0 - s.beta2**self.t)
        return params - s.lr * mhat / (np.sqrt(vhat) + s.eps)


class _SGD:
    def __init__(self, spec: OptimizerSpec, size: int):
        self.spec = spec

    def step(self, params, g):
        return params - self.spec.lr * g


def evaluate(net, dataset: Dataset, risk: RiskSpec, iteration: int = 0):
    """Full-split statistics on clean inputs; returns (train, test) BatchStats.

    The test entry is None when the dataset has no test points.
    """
    train_stats = total_objective(net, dataset.train, risk, iteration)[1]
    test_stats = total_objective(net, dataset.test, risk, iteration)[1] if dataset.test_idx.size else None
    return train_stats, test_stats


def _row(net, dataset, risk, iteration) -> EvalRow:
    tr, te = evaluate(net, dataset, risk, iteration)
    return EvalRow(iteration, tr.rmse, te.rmse if te else float("nan"), tr.objective, dict(tr.penalties))


class _Batches:
    """Seeded reshuffle every epoch; the last batch of an epoch may be short."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n, self.bs, self.seed = n, min(batch_size, n), seed
        self.epoch, self.pos = -1, n
        self.order = np.arange(n)

    def next(self) -> np.ndarray:
        if self.pos >= self.n:
            self.epoch += 1
            self.order = CounterRNG(self.seed, f"shuffle/{self.epoch}").permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos : self.pos + self.bs]
        self.pos += self.bs
        return idx


def train(config: TrainConfig, dataset: Dataset, net: Net | None = None, progress=None) -> RunRecord:
    """Run exactly ``config.iterations`` updates; deterministic in (config, dataset)."""
    if dataset.dim != config.arch.input_dim:
        raise dm.ShapeError(f"dataset dimension {dataset.dim} != arch input_dim {config.arch.input_dim}")
    if dataset.train_idx.size == 0:
        raise ValueError("dataset has no training points")
    net = init(config.arch, config.seed) if net is None else net
    risk = config.risk
    opt = (_Adam if config.optimizer.kind is OptimizerKind.ADAM else _SGD)(config.optimizer, net.params.size)
    batches = _Batches(dataset.train_idx.size, config.batch_size, config.seed)
    X = dataset.train
    record = RunRecord([], net, risk.penalty_names, meta=_record_meta(config, dataset))
    start = time.perf_counter()
    params = net.params
    for it in range(1, config.iterations + 1):
        Xb = X[batches.next()]
        try:
            value, g, _ = value_and_grad_params(
                net, lambda b: total_objective(b, Xb, risk, it - 1, noise_seed=config.seed)
            )
        except dm.NonFiniteError as err:
            record.wall_clock = time.perf_counter() - start
            raise TrainDivergedError(it, record, str(err)) from err
        new = opt.step(params, g)
        if not (np.isfinite(value) and np.isfinite(new).all()):
            record.wall_clock = time.perf_counter() - start
            raise TrainDivergedError(it, record, "non-finite loss or parameters")
        params = new
        net = net.with_params(params)
        record.net = net
        if it % config.eval_every == 0 or it == config.iterations:
            try:
                record.rows.append(_row(net, dataset, risk, it))
            except dm.NonFiniteError as err:
                raise TrainDivergedError(it, record, str(err)) from err
            if progress is not None:
                progress(record.rows[-1])
    record.wall_clock = time.perf_counter() - start
    return record


def _record_meta(config: TrainConfig, dataset: Dataset) -> dict:
    r = config.risk
    return {
        "kind": "run_record",
        "arch": config.arch.to_string(),
        "latent_index": config.arch.latent_index,
        "activation": config.arch.activation.value,
        "optimizer": config.optimizer.kind.value,
        "lr": config.optimizer.lr,
        "iterations": config.iterations,
        "batch_size": config.batch_size,
        "eval_every": config.eval_every,
        "seed": config.seed,
        "base": r.base.value,
        "noise_sigma": r.noise_sigma,
        "penalties": [
            [p.kind.value, p.schedule.start, p.schedule.stop, p.schedule.ramp_iterations] for p in r.penalties
        ],
        "dataset": dataset.meta,
    }


def map_grid(net, grid: PolarGrid) -> PolarGrid:
    """Push every grid vertex through the autoencoder."""
    rays = [reconstruct(net, line) for line in grid.rays]
    circles = [reconstruct(net, line) for line in grid.circles]
    return PolarGrid(rays, circles, dict(grid.meta, mapped=True))


def with_overrides(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, **changes)
