"""Reconstruction risks and Jacobian penalties for autoencoders.

Every function accepts a model and a batch of row vectors. Given a plain
:class:`~aeshape.network.Net` and arrays it returns a float; given a
:class:`~aeshape.network.BoundNet` (layers on the tape) or a tensor batch it
returns a tape tensor so the value can be differentiated in parameters.

The orthogonal contractive penalty penalizes the decoder Jacobian only along
the residual: per point it is ``||J_g(z)^T r||^2`` with ``z = encoder(x)``
and ``r = decoder(z) - x``. This is the squared first variation of the
least-squares risk with respect to the encoder, so it vanishes exactly where
residuals are orthogonal to the decoded manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import diffmath as dm
from .binning import BinnedDecoder
from .network import BoundNet, encode
from .rng import CounterRNG

DEFAULT_EPSILON_FLOOR = 1e-8


class EmptyBatchError(ValueError):
    pass


class RiskConfigError(ValueError):
    pass


class PenaltyKind(str, Enum):
    CONTRACTIVE = "contractive"
    ORTHO = "ortho_contractive"
    NORMALIZED_ORTHO = "normalized_ortho"


class BaseRisk(str, Enum):
    ULS = "uls"
    DENOISING = "denoising"


@dataclass(frozen=True)
class Schedule:
    """Penalty weight as a function of iteration: constant, or a linear ramp
    from ``start`` to ``stop`` over ``ramp_iterations`` then held."""

    start: float
    stop: float | None = None
    ramp_iterations: int | None = None

    def __post_init__(self):
        if self.start < 0 or (self.stop is not None and self.stop < 0):
            raise RiskConfigError("penalty weights must be >= 0")
        if self.stop is not None and (self.ramp_iterations is None or self.ramp_iterations < 1):
            raise RiskConfigError("a linear ramp needs ramp_iterations >= 1")

    def at(self, iteration: int) -> float:
        if self.stop is None:
            return self.start
        frac = min(iteration / self.ramp_iterations, 1.0)
        return self.start + (self.stop - self.start) * frac


@dataclass(frozen=True)
class Penalty:
    kind: PenaltyKind
    schedule: Schedule

    @classmethod
    def constant(cls, kind, weight: float) -> "Penalty":
        return cls(PenaltyKind(kind), Schedule(float(weight)))

    @classmethod
    def ramp(cls, kind, start: float, stop: float, iterations: int) -> "Penalty":
        return cls(PenaltyKind(kind), Schedule(float(start), float(stop), int(iterations)))


@dataclass(frozen=True)
class RiskSpec:
    base: BaseRisk = BaseRisk.ULS
    noise_sigma: float = 0.0
    penalties: tuple[Penalty, ...] = ()
    epsilon_floor: float = DEFAULT_EPSILON_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "base", BaseRisk(self.base))
        object.__setattr__(self, "penalties", tuple(self.penalties))
        if self.noise_sigma < 0:
            raise RiskConfigError("noise_sigma must be >= 0")
        if not self.epsilon_floor > 0:
            raise RiskConfigError("epsilon_floor must be > 0")

    @property
    def penalty_names(self) -> list[str]:
        names, seen = [], {}
        for p in self.penalties:
            k = p.kind.value
            seen[k] = seen.get(k, 0) + 1
            names.append(k if seen[k] == 1 else f"{k}_{seen[k]}")
        return names


@dataclass
class BatchStats:
    base_risk: float
    rmse: float
    objective: float
    penalties: dict[str, float] = field(default_factory=dict)


# -- plumbing ---------------------------------------------------------------


def _tensor_mode(model, batch) -> bool:
    return isinstance(model, BoundNet) or isinstance(batch, dm.Tensor)


def _batch(model, batch, targets=None):
    X = batch if isinstance(batch, dm.Tensor) else dm.Tensor(np.asarray(batch, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyBatchError("batch must be a nonempty (n_points, dim) array")
    if X.shape[1] != model.input_dim:
        raise dm.ShapeError(f"batch dimension {X.shape[1]} != model input_dim {model.input_dim}")
    if targets is None:
        T = X
    else:
        T = targets if isinstance(targets, dm.Tensor) else dm.Tensor(np.asarray(targets, dtype=np.float64))
        if T.shape != X.shape:
            raise dm.ShapeError(f"targets shape {T.shape} != batch shape {X.shape}")
    return X, T


def row_mean(v):
    """Mean of per-point terms, summed in ascending order of value.

    Sorting fixes a canonical summation order, which makes the result
    bit-identical under any permutation of the batch.
    """
    v = dm.as_tensor(v)
    perm = np.argsort(v.value, kind="stable")
    return dm.div(dm.sum(dm.take_rows(v, perm)), float(v.shape[0]))


def _row_sq(A):
    return dm.sum(dm.mul(A, A), axis=1)


class _Pass:
    """Shared forward quantities for one (model, batch) evaluation, computed lazily."""

    def __init__(self, model, batch, targets=None):
        self.tensor_mode = _tensor_mode(model, batch)
        self.model = model.bind()
        self.X, self.T = _batch(self.model, batch, targets)
        self._z = self._zt = self._y = self._r = self._jtr = None

    @property
    def z(self):
        if self._z is None:
            self._z = self.model.encode(self.X)
        return self._z

    def _decode(self):
        z = self.z
        # the decoder pullback needs a tracked starting node and a recorded decode
        self._zt = z if z.tracked else dm.Tensor.leaf(z.value)
        with dm.recording():
            self._y = self.model.decode(self._zt)
            self._r = dm.sub(self._y, self.T)

    @property
    def y(self):
        if self._y is None:
            self._decode()
        return self._y

    @property
    def residual(self):
        if self._r is None:
            self._decode()
        return self._r

    @property
    def jtr(self):
        """Decoder Jacobian transpose applied to the residual, one row per point."""
        if self._jtr is None:
            r = self.residual
            (g,) = dm.backward([self._y], [self._zt], [r], create_graph=self.tensor_mode)
            self._jtr = g if g is not None else dm.Tensor(np.zeros_like(self._zt.value))
        return self._jtr

    def out(self, t):
        return t if self.tensor_mode else float(t.value)


# -- risks and penalties ----------------------------------------------------


def uls_risk(model, batch, targets=None):
    """Half the mean squared residual norm."""
    p = _Pass(model, batch, targets)
    return p.out(dm.mul(0.5, row_mean(_row_sq(p.residual))))


def contractive_penalty(model, batch):
    """Mean squared Frobenius norm of the encoder Jacobian, one forward sweep per input axis."""
    p = _Pass(model, batch)
    return p.out(_contractive(p))


def _contractive(p: _Pass):
    n_pts, n = p.X.shape
    total = None
    for j in range(n):
        e = np.zeros((n_pts, n))
        e[:, j] = 1.0
        out = p.model.encode(dm.Dual(p.X, e))
        if not isinstance(out, dm.Dual) or out.tangent is None:
            continue
        term = _row_sq(out.tangent)
        total = term if total is None else dm.add(total, term)
    if total is None:
        total = dm.Tensor(np.zeros(n_pts))
    return row_mean(total)


def ortho_contractive_penalty(model, batch, targets=None):
    """Mean of ``||J_g^T r||^2``: decoder Jacobian contracted along the residual."""
    p = _Pass(model, batch, targets)
    return p.out(row_mean(_row_sq(p.jtr)))


def normalized_ortho_penalty(model, batch, epsilon_floor=DEFAULT_EPSILON_FLOOR, targets=None):
    """Mean of ``||J_g^T r||^2 / max(||r||^2, epsilon_floor)``."""
    if not epsilon_floor > 0:
        raise RiskConfigError("epsilon_floor must be > 0")
    p = _Pass(model, batch, targets)
    return p.out(_normalized(p, epsilon_floor))


def _normalized(p: _Pass, eps: float):
    return row_mean(dm.div(_row_sq(p.jtr), dm.maximum(_row_sq(p.residual), eps)))


def denoise_corrupt(batch, sigma: float, seed: int, batch_index: int = 0) -> np.ndarray:
    """Add isotropic Gaussian noise, deterministic in (seed, batch_index)."""
    if sigma < 0:
        raise RiskConfigError("sigma must be >= 0")
    X = np.asarray(batch, dtype=np.float64)
    if sigma == 0:
        return X.copy()
    rng = CounterRNG(seed, f"denoise/{int(batch_index)}")
    return X + sigma * rng.normal(X.size).reshape(X.shape)


def cem_orthogonality_risk(model, batch, n_bins: int = 32) -> float:
    """Mean squared residual-tangent inner product for the conditional-mean decoder.

    The decoder is not the model's own: it is the binned conditional
    expectation of the inputs given the model's (1-D) encoding.
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyBatchError("batch must be a nonempty (n_points, dim) array")
    if model.latent_dim != 1:
        raise dm.ShapeError("cem_orthogonality_risk needs a 1-D latent")
    z = encode(model, X).reshape(-1)
    binned = BinnedDecoder.fit(z, X, n_bins)
    value, tangent = binned.curve(z)
    inner = np.sum((value - X) * tangent, axis=1)
    return float(np.sort(inner**2).sum() / X.shape[0])


def total_objective(model, batch, spec: RiskSpec, iteration: int = 0, noise_seed: int | None = None):
    """Base risk plus scheduled penalties; returns (objective, BatchStats).

    For the denoising base the batch is corrupted (when ``noise_seed`` is
    given) and reconstructions are compared against the clean batch.
    """
    targets = None
    if spec.base is BaseRisk.DENOISING and spec.noise_sigma > 0 and noise_seed is not None:
        clean = batch.value if isinstance(batch, dm.Tensor) else np.asarray(batch, dtype=np.float64)
        targets = clean
        batch = denoise_corrupt(clean, spec.noise_sigma, noise_seed, iteration)
    p = _Pass(model, batch, targets)
    sq = _row_sq(p.residual)
    mean_sq = row_mean(sq)
    base = dm.mul(0.5, mean_sq)
    total = base
    values = {}
    for name, pen in zip(spec.penalty_names, spec.penalties):
        if pen.kind is PenaltyKind.CONTRACTIVE:
            term = _contractive(p)
        elif pen.kind is PenaltyKind.ORTHO:
            term = row_mean(_row_sq(p.jtr))
        else:
            term = _normalized(p, spec.epsilon_floor)
        values[name] = float(term.value)
        weight = pen.schedule.at(iteration)
        if weight != 0.0:
            total = dm.add(total, dm.mul(weight, term))
    stats = BatchStats(
        base_risk=float(base.value),
        rmse=float(np.sqrt(mean_sq.value / model.input_dim)),
        objective=float(total.value),
        penalties=values,
    )
    return p.out(total), stats
