"""Synthetic point clouds: noisy spiral, polar grid, and analytic fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .io import read_csv, write_csv
from .rng import CounterRNG

DATASET_VERSION = 1


class ConfigError(ValueError):
    pass


class FixtureKind(str, Enum):
    LINE = "line"
    CIRCLE = "circle"
    STRIP = "strip"


@dataclass
class Dataset:
    points: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def train(self) -> np.ndarray:
        return self.points[self.train_idx]

    @property
    def test(self) -> np.ndarray:
        return self.points[self.test_idx]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


@dataclass
class PolarGrid:
    rays: list[np.ndarray]
    circles: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def polylines(self) -> list[np.ndarray]:
        return [*self.rays, *self.circles]


def split_indices(n: int, train_fraction: float, seed: int):
    if not 0 < train_fraction <= 1:
        raise ConfigError("train_fraction must be in (0, 1]")
    perm = CounterRNG(seed, "split").permutation(n)
    n_train = int(round(train_fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def gen_spiral(
    n: int = 1000,
    turns: float = 2.0,
    r0: float = 0.3,
    r1: float = 2.0,
    sigma: float = 0.05,
    seed: int = 0,
    train_fraction: float = 0.8,
) -> Dataset:
    """Archimedean spiral with radius running r0 -> r1 over ``turns`` revolutions."""
    if n < 2:
        raise ConfigError("spiral needs n >= 2")
    if not r1 >= r0 >= 0:
        raise ConfigError("spiral needs r1 >= r0 >= 0")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    t = CounterRNG(seed, "spiral/t").uniform(n)
    points = spiral_curve(t, turns, r0, r1)
    if sigma > 0:
        points = points + sigma * CounterRNG(seed, "spiral/noise").normal(2 * n).reshape(n, 2)
    meta = {
        "generator": "spiral",
        "n": n,
        "turns": turns,
        "r0": r0,
        "r1": r1,
        "sigma": sigma,
        "seed": seed,
        "train_fraction": train_fraction,
        "version": DATASET_VERSION,
    }
    return Dataset(points, *split_indices(n, train_fraction, seed), meta)


def spiral_curve(t, turns, r0, r1) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    radius = r0 + (r1 - r0) * t
    angle = 2.0 * np.pi * turns * t
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)


def gen_polar_grid(n_rays: int = 12, n_circles: int = 6, r_max: float = 2.5, samples_per_line: int = 100) -> PolarGrid:
    if min(n_rays, n_circles) < 1 or samples_per_line < 2:
        raise ConfigError("grid counts must be >= 1 and samples_per_line >= 2")
    s = np.linspace(0.0, 1.0, samples_per_line)
    angles = 2.0 * np.pi * np.arange(n_rays) / n_rays
    rays = [np.stack([r_max * s * np.cos(a), r_max * s * np.sin(a)], axis=1) for a in angles]
    radii = r_max * np.arange(1, n_circles + 1) / n_circles
    phi = 2.0 * np.pi * s
    circles = [np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1) for r in radii]
    meta = {
        "generator": "polar_grid",
        "n_rays": n_rays,
        "n_circles": n_circles,
        "r_max": r_max,
        "samples_per_line": samples_per_line,
    }
    return PolarGrid(rays, circles, meta)


def gen_fixture(kind, n: int = 500, sigma: float = 0.0, seed: int = 0, train_fraction: float = 0.8) -> Dataset:
    """Analytic test clouds.

    line: t*(0.8, 0.6) for t uniform in [-1, 1]; circle: unit circle at
    uniform angles; strip: x uniform in [-1, 1], y = 0. Isotropic noise of
    std ``sigma`` is added to all three, so the strip's second coordinate
    is pure noise.
    """
    kind = FixtureKind(kind)
    if n < 1 or sigma < 0:
        raise ConfigError("fixture needs n >= 1 and sigma >= 0")
    u = CounterRNG(seed, f"{kind.value}/t").uniform(n)
    if kind is FixtureKind.LINE:
        t = 2.0 * u - 1.0
        points = np.outer(t, [0.8, 0.6])
    elif kind is FixtureKind.CIRCLE:
        a = 2.0 * np.pi * u
        points = np.stack([np.cos(a), np.sin(a)], axis=1)
    else:
        points = np.stack([2.0 * u - 1.0, np.zeros(n)], axis=1)
    if sigma > 0:
        points = points + sigma * CounterRNG(seed, f"{kind.value}/noise").normal(2 * n).reshape(n, 2)
    meta = {
        "generator": kind.value,
        "n": n,
        "sigma": sigma,
        "seed": seed,
        "train_fraction": train_fraction,
        "version": DATASET_VERSION,
    }
    return Dataset(points, *split_indices(n, train_fraction, seed), meta)


def from_meta(meta: dict) -> Dataset:
    """Regenerate a dataset from its provenance record."""
    params = {k: v for k, v in meta.items() if k not in ("generator", "version")}
    gen = meta.get("generator")
    if gen == "spiral":
        return gen_spiral(**params)
    if gen in {k.value for k in FixtureKind}:
        return gen_fixture(gen, **params)
    raise ConfigError(f"unknown dataset generator {gen!r}")


def save_dataset(ds: Dataset, path) -> Path:
    split = np.empty(len(ds), dtype=object)
    split[ds.train_idx] = "train"
    split[ds.test_idx] = "test"
    header = [f"x{i}" for i in range(ds.dim)] + ["split"]
    rows = ([*p, s] for p, s in zip(ds.points, split))
    return write_csv(path, header, rows, ds.meta)


def load_dataset(path, verify: bool = True) -> Dataset:
    """Read a dataset CSV; with ``verify`` the points must match regeneration from meta."""
    meta, header, rows = read_csv(path)
    if not header or header[-1] != "split":
        raise ConfigError(f"{path}: expected a trailing 'split' column")
    points = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=np.float64)
    labels = np.array([r[-1] for r in rows])
    ds = Dataset(points, np.flatnonzero(labels == "train"), np.flatnonzero(labels == "test"), meta)
    if verify and meta.get("generator") in {"spiral", *(k.value for k in FixtureKind)}:
        fresh = from_meta(meta)
        if not (np.array_equal(fresh.points, ds.points) and np.array_equal(fresh.train_idx, ds.train_idx)):
            raise ConfigError(f"{path}: points do not match regeneration from meta")
    return ds
