"""Versioned YAML experiment configs.

Unknown keys are errors. Defaults are filled into a plain nested dict first,
so sweep axes can address any field by a dotted path (list items by index,
e.g. ``risk.penalties.0.weight``) before the typed objects are built.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass
from pathlib import Path

import yaml

from .data import ConfigError, Dataset, FixtureKind, gen_fixture, gen_spiral
from .network import ParseError, parse_arch
from .risks import Penalty, PenaltyKind, RiskConfigError, RiskSpec
from .training import OptimizerSpec, TrainConfig

SCHEMA_VERSION = 1
DEFAULT_MAX_CELLS = 64

DEFAULTS = {
    "version": SCHEMA_VERSION,
    "name": "experiment",
    "seed": 0,
    "dataset": {
        "kind": "spiral",
        "n": 1000,
        "turns": 2.0,
        "r0": 0.3,
        "r1": 2.0,
        "sigma": 0.05,
        "seed": 0,
        "train_fraction": 0.8,
    },
    "arch": {"hidden": "50-100-50-1-50-100-50", "latent": "auto", "activation": "tanh"},
    "train": {
        "optimizer": "adam",
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "iterations": 20000,
        "batch_size": 100,
        "eval_every": 200,
    },
    "risk": {"base": "uls", "noise_sigma": 0.0, "epsilon_floor": 1e-8, "penalties": []},
    "grid": {"n_rays": 12, "n_circles": 6, "r_max": 2.5, "samples_per_line": 100},
    "sweep": {"axes": [], "max_cells": DEFAULT_MAX_CELLS},
    "gnorm": {"function": "saddle", "x0": [0.5, 0.5], "method": "gnorm", "step": 0.1, "max_iters": 100000, "tol": 1e-8},
    "shapes": {"alpha": 1.0, "n_samples": 1001},
    "diagnose": {"checkpoint": None, "n_bins": 32},
}

PENALTY_DEFAULTS = {"kind": None, "weight": 0.0, "ramp_to": None, "ramp_iterations": None}
SPIRAL_KEYS = {"kind", "n", "turns", "r0", "r1", "sigma", "seed", "train_fraction"}
FIXTURE_KEYS = {"kind", "n", "sigma", "seed", "train_fraction"}


def _merge(defaults: dict, given: dict, path: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(given).__name__}")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key {where}{unknown[0]}")
    out = {}
    for key, default in defaults.items():
        sub = f"{path}.{key}" if path else key
        if key not in given:
            out[key] = copy.deepcopy(default)
        elif isinstance(default, dict) and default:
            out[key] = _merge(default, given[key] if given[key] is not None else {}, sub)
        else:
            out[key] = given[key]
    return out


def normalize(raw: dict | None) -> dict:
    """Validate keys and fill defaults; returns the full nested dict."""
    raw = raw or {}
    if raw.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"version: unsupported config version {raw.get('version')!r}")
    cfg = _merge(DEFAULTS, raw, "")
    pens = cfg["risk"]["penalties"]
    if not isinstance(pens, list):
        raise ConfigError("risk.penalties: expected a list")
    cfg["risk"]["penalties"] = [_merge(PENALTY_DEFAULTS, p, f"risk.penalties.{i}") for i, p in enumerate(pens)]
    axes = cfg["sweep"]["axes"]
    if not isinstance(axes, list):
        raise ConfigError("sweep.axes: expected a list")
    for i, ax in enumerate(axes):
        _merge({"field": None, "values": None}, ax, f"sweep.axes.{i}")
        if not isinstance(ax.get("values"), list) or not ax["values"]:
            raise ConfigError(f"sweep.axes.{i}.values: expected a nonempty list")
        get_path(cfg, ax["field"])
    return cfg


def load(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(err, 'problem', err)}") from None
    return normalize(raw)


def _split(path: str) -> list:
    if not isinstance(path, str) or not path:
        raise ConfigError(f"bad field path {path!r}")
    return [int(p) if p.isdigit() else p for p in path.split(".")]


def get_path(cfg: dict, path: str):
    node = cfg
    for part in _split(path):
        try:
            node = node[part]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"sweep field {path!r} does not name a config field") from None
    return node


def set_path(cfg: dict, path: str, value) -> dict:
    out = copy.deepcopy(cfg)
    parts = _split(path)
    get_path(out, path)
    node = out
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value
    return out


def sweep_cells(cfg: dict) -> list[tuple[dict, dict]]:
    """Cartesian product of sweep axes as (assignment, cell config) pairs."""
    axes = cfg["sweep"]["axes"]
    if not axes:
        return [({}, cfg)]
    fields = [ax["field"] for ax in axes]
    size = 1
    for ax in axes:
        size *= len(ax["values"])
    if size > cfg["sweep"]["max_cells"]:
        raise ConfigError(f"sweep has {size} cells, above max_cells={cfg['sweep']['max_cells']}")
    cells = []
    for combo in itertools.product(*(ax["values"] for ax in axes)):
        cell = cfg
        for f, v in zip(fields, combo):
            cell = set_path(cell, f, v)
        cells.append((dict(zip(fields, combo)), cell))
    return cells


def build_dataset(cfg: dict) -> Dataset:
    d = cfg["dataset"]
    kind = d["kind"]
    try:
        if kind == "spiral":
            return gen_spiral(
                n=int(d["n"]), turns=float(d["turns"]), r0=float(d["r0"]), r1=float(d["r1"]),
                sigma=float(d["sigma"]), seed=int(d["seed"]), train_fraction=float(d["train_fraction"]),
            )
        if kind in {k.value for k in FixtureKind}:
            return gen_fixture(
                kind, n=int(d["n"]), sigma=float(d["sigma"]), seed=int(d["seed"]),
                train_fraction=float(d["train_fraction"]),
            )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"dataset: {err}") from None
    raise ConfigError(f"dataset.kind: unknown dataset kind {kind!r}")


def build_risk(cfg: dict) -> RiskSpec:
    r = cfg["risk"]
    penalties = []
    for i, p in enumerate(r["penalties"]):
        try:
            kind = PenaltyKind(p["kind"])
        except ValueError:
            raise ConfigError(
                f"risk.penalties.{i}.kind: expected one of {[k.value for k in PenaltyKind]}, got {p['kind']!r}"
            ) from None
        try:
            if p["ramp_to"] is None:
                penalties.append(Penalty.constant(kind, float(p["weight"])))
            else:
                penalties.append(Penalty.ramp(kind, float(p["weight"]), float(p["ramp_to"]), int(p["ramp_iterations"] or 0)))
        except (TypeError, ValueError) as err:
            raise ConfigError(f"risk.penalties.{i}: {err}") from None
    try:
        return RiskSpec(r["base"], float(r["noise_sigma"]), tuple(penalties), float(r["epsilon_floor"]))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"risk: {err}") from None


def build_train(cfg: dict, input_dim: int) -> TrainConfig:
    a, t = cfg["arch"], cfg["train"]
    try:
        arch = parse_arch(str(a["hidden"]), input_dim, a["latent"], a["activation"])
    except ParseError as err:
        raise ConfigError(f"arch: {err}") from None
    try:
        opt = OptimizerSpec(t["optimizer"], float(t["lr"]), float(t["beta1"]), float(t["beta2"]), float(t["eps"]))
        return TrainConfig(
            arch=arch,
            risk=build_risk(cfg),
            optimizer=opt,
            iterations=int(t["iterations"]),
            batch_size=int(t["batch_size"]),
            eval_every=int(t["eval_every"]),
            seed=int(cfg["seed"]),
        )
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"train: {err}") from None


@dataclass
class Experiment:
    cfg: dict
    dataset: Dataset
    train: TrainConfig


def build_experiment(cfg: dict) -> Experiment:
    ds = build_dataset(cfg)
    return Experiment(cfg, ds, build_train(cfg, ds.dim))


__all__ = [
    "ConfigError",
    "RiskConfigError",
    "DEFAULTS",
    "normalize",
    "load",
    "get_path",
    "set_path",
    "sweep_cells",
    "build_dataset",
    "build_risk",
    "build_train",
    "build_experiment",
]
