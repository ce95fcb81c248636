"""Saddle finding on analytic functions by minimizing the squared gradient norm.

Descending ``||grad f||^2`` moves along ``-H(x) grad f(x)``: every critical
point of f becomes a minimum, saddles included. Points where the Hessian
annihilates a nonzero gradient are minima too, and those are spurious.
Newton's method (solve ``H v = grad f``) is the comparator.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

DEFAULT_TOL = 1e-8
DIVERGENCE_RADIUS = 1e8
MAX_CONDITION = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


class SingularHessianError(np.linalg.LinAlgError):
    pass


class Terminal(str, Enum):
    TRUE_CRITICAL = "TrueCritical"
    SPURIOUS = "SpuriousGnormCritical"
    NOT_CRITICAL = "NotCritical"


@dataclass(frozen=True)
class TestFunction:
    name: str
    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]

    __test__ = False  # not a pytest class


@dataclass
class Trajectory:
    points: list[np.ndarray]
    converged: bool = False

    @property
    def terminal(self) -> np.ndarray:
        return self.points[-1]

    @property
    def iterations(self) -> int:
        return len(self.points) - 1


def _fn(name, dim, value, gradient, hessian) -> TestFunction:
    return TestFunction(
        name,
        dim,
        lambda x: float(value(np.asarray(x, dtype=np.float64))),
        lambda x: np.atleast_1d(np.asarray(gradient(np.asarray(x, dtype=np.float64)), dtype=np.float64)),
        lambda x: np.atleast_2d(np.asarray(hessian(np.asarray(x, dtype=np.float64)), dtype=np.float64)),
    )


GALLERY: dict[str, TestFunction] = {
    f.name: f
    for f in [
        _fn("square", 1, lambda x: x[0] ** 2, lambda x: [2 * x[0]], lambda x: [[2.0]]),
        _fn(
            "bowl",
            2,
            lambda x: x[0] ** 2 + x[1] ** 2,
            lambda x: [2 * x[0], 2 * x[1]],
            lambda x: [[2.0, 0.0], [0.0, 2.0]],
        ),
        _fn(
            "saddle",
            2,
            lambda x: x[0] ** 2 - x[1] ** 2,
            lambda x: [2 * x[0], -2 * x[1]],
            lambda x: [[2.0, 0.0], [0.0, -2.0]],
        ),
        _fn("cubic", 1, lambda x: x[0] ** 3 + x[0], lambda x: [3 * x[0] ** 2 + 1], lambda x: [[6 * x[0]]]),
        _fn(
            "rosenbrock",
            2,
            lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2,
            lambda x: [-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)],
            lambda x: [[2 - 400 * x[1] + 1200 * x[0] ** 2, -400 * x[0]], [-400 * x[0], 200.0]],
        ),
        _fn(
            "illcond",
            2,
            lambda x: 0.5 * (x[0] ** 2 + 100 * x[1] ** 2),
            lambda x: [x[0], 100 * x[1]],
            lambda x: [[1.0, 0.0], [0.0, 100.0]],
        ),
    ]
}


def get_function(name: str) -> TestFunction:
    try:
        return GALLERY[name]
    except KeyError:
        raise KeyError(f"unknown test function {name!r}; choose from {sorted(GALLERY)}") from None


def _check_x0(f: TestFunction, x0) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x.shape != (f.dim,):
        raise ValueError(f"{f.name} takes {f.dim}-dimensional points, got shape {x.shape}")
    return x


def _guard(x, traj):
    if np.linalg.norm(x) > DIVERGENCE_RADIUS or not np.isfinite(x).all():
        raise DivergenceError(f"iterate left the radius-{DIVERGENCE_RADIUS:g} ball", traj)


def gnorm_descent(f: TestFunction, x0, step: float = 0.1, max_iters: int = 100000, tol: float = DEFAULT_TOL) -> Trajectory:
    """Steepest descent on ``||grad f||^2`` (up to the factor 2), halving the
    step whenever the squared gradient norm would increase."""
    if not step > 0:
        raise ValueError("step must be > 0")
    x = _check_x0(f, x0)
    traj = Trajectory([x.copy()])
    g = f.gradient(x)
    gn = g @ g
    for _ in range(max_iters):
        d = f.hessian(x) @ g
        if np.linalg.norm(d) < tol:
            traj.converged = True
            break
        h = step
        while True:
            cand = x - h * d
            gc = f.gradient(cand)
            if gc @ gc <= gn or h < 1e-16:
                break
            h *= 0.5
        x, g, gn = cand, gc, gc @ gc
        traj.points.append(x.copy())
        _guard(x, traj)
    else:
        traj.converged = np.linalg.norm(f.hessian(x) @ g) < tol
    return traj


def gradient_descent(f: TestFunction, x0, step: float = 0.1, max_iters: int = 100000, tol: float = DEFAULT_TOL) -> Trajectory:
    """Plain fixed-step descent on f; walks away from saddles."""
    if not step > 0:
        raise ValueError("step must be > 0")
    x = _check_x0(f, x0)
    traj = Trajectory([x.copy()])
    for _ in range(max_iters):
        g = f.gradient(x)
        if np.linalg.norm(g) < tol:
            traj.converged = True
            break
        x = x - step * g
        traj.points.append(x.copy())
        _guard(x, traj)
    else:
        traj.converged = np.linalg.norm(f.gradient(x)) < tol
    return traj


def newton_saddle(f: TestFunction, x0, step: float = 1.0, max_iters: int = 1000, tol: float = DEFAULT_TOL) -> Trajectory:
    """Damped Newton iteration on grad f = 0; converges to saddles as readily as minima."""
    if not step > 0:
        raise ValueError("step must be > 0")
    x = _check_x0(f, x0)
    traj = Trajectory([x.copy()])
    for _ in range(max_iters):
        g = f.gradient(x)
        if np.linalg.norm(g) < tol:
            traj.converged = True
            break
        H = f.hessian(x)
        cond = np.linalg.cond(H)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularHessianError(f"Hessian at {x.tolist()} has condition number {cond:.3g}")
        x = x - step * np.linalg.solve(H, g)
        traj.points.append(x.copy())
        _guard(x, traj)
    else:
        traj.converged = np.linalg.norm(f.gradient(x)) < tol
    return traj


def classify_terminal(f: TestFunction, x, tol: float = DEFAULT_TOL) -> Terminal:
    x = _check_x0(f, x)
    g = f.gradient(x)
    if np.linalg.norm(g) < tol:
        return Terminal.TRUE_CRITICAL
    if np.linalg.norm(f.hessian(x) @ g) < tol:
        return Terminal.SPURIOUS
    return Terminal.NOT_CRITICAL


METHODS = {"gnorm": gnorm_descent, "newton": newton_saddle, "gd": gradient_descent}
