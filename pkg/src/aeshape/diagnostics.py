"""Critical-point diagnostics for trained autoencoders.

At a critical point of the least-squares risk the decoder is the
conditional mean of the data given the code (self-consistency) and every
residual is orthogonal to the decoder's tangent space at its code. Both
conditions are measured here on finite samples, for any model exposing
``encode``/``decode``.
"""

from __future__ import annotations

import numpy as np

from . import diffmath as dm
from .binning import BinnedDecoder, DegenerateLatentError, InsufficientBinsError
from .network import decode, encode

DEFAULT_BINS = 32
DEFECT_EPS = 1e-12

__all__ = [
    "BinnedDecoder",
    "DegenerateLatentError",
    "InsufficientBinsError",
    "self_consistency_residual",
    "orthogonality_defect",
    "decoder_jacobian",
    "penalty_shapes",
    "PENALTY_SHAPE_COLUMNS",
]


def _points(dataset):
    return dataset.train if hasattr(dataset, "train_idx") else np.asarray(dataset, dtype=np.float64)


def self_consistency_residual(model, dataset, n_bins: int = DEFAULT_BINS) -> float:
    """Mean over nonempty latent bins of ||decoder(bin center) - mean of inputs in bin||."""
    if model.latent_dim != 1:
        raise dm.ShapeError("self-consistency binning needs a 1-D latent")
    if n_bins < 3:
        raise ValueError("n_bins must be >= 3")
    X = _points(dataset)
    z = encode(model, X).reshape(-1)
    binned = BinnedDecoder.fit(z, X, n_bins)
    keep = binned.nonempty
    if keep.size < 2:
        raise DegenerateLatentError("all points fall into a single latent bin")
    decoded = decode(model, binned.centers[keep].reshape(-1, 1))
    gaps = np.linalg.norm(decoded - binned.means[keep], axis=1)
    return float(gaps.sum() / keep.size)


def decoder_jacobian(model, Z) -> np.ndarray:
    """Decoder Jacobians (n_points, input_dim, latent_dim), one jvp per latent axis."""
    Z = np.asarray(Z, dtype=np.float64)
    bound = model.bind()
    cols = []
    with dm.no_record():
        for j in range(model.latent_dim):
            e = np.zeros_like(Z)
            e[:, j] = 1.0
            out = bound.decode(dm.Dual(Z, e))
            tangent = out.tangent if isinstance(out, dm.Dual) else None
            cols.append(np.zeros((Z.shape[0], model.input_dim)) if tangent is None else tangent.value)
    return np.stack(cols, axis=2)


def orthogonality_defect(model, dataset, eps: float = DEFECT_EPS) -> float:
    """Mean of ||J_g^T r|| / (||r|| ||J_g||_F + eps): a scale-free cosine in [0, 1].

    Zero residuals contribute zero.
    """
    X = _points(dataset)
    Z = encode(model, X)
    R = decode(model, Z) - X
    J = decoder_jacobian(model, Z)
    jtr = np.einsum("nij,ni->nj", J, R)
    num = np.linalg.norm(jtr, axis=1)
    den = np.linalg.norm(R, axis=1) * np.linalg.norm(J, axis=(1, 2)) + eps
    return float(np.sort(num / den).sum() / X.shape[0])


PENALTY_SHAPE_COLUMNS = [
    "t",
    "squared_residual",
    "ortho_penalty",
    "normalized_penalty",
    "total_ortho",
    "total_normalized",
]


def penalty_shapes(alpha: float, n_samples: int = 1001) -> np.ndarray:
    """Idealized one-parameter penalty curves.

    ``t`` runs from the identity solution (0) to the principal manifold (1);
    the residual grows as t while the Jacobian along it shrinks as 1 - t.
    Columns follow ``PENALTY_SHAPE_COLUMNS``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    t = np.linspace(0.0, 1.0, n_samples)
    res = t**2
    ortho = t**2 * (1.0 - t) ** 2
    normalized = (1.0 - t) ** 2
    return np.column_stack([t, res, ortho, normalized, res + alpha * ortho, res + alpha * normalized])
