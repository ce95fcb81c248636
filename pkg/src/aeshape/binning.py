"""Equal-width binning of a 1-D latent variable and the induced conditional-mean curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateLatentError(ValueError):
    """All latent values coincide, so no binning is possible."""


class InsufficientBinsError(ValueError):
    pass


@dataclass
class BinnedDecoder:
    edges: np.ndarray  # (n_bins + 1,)
    counts: np.ndarray  # (n_bins,)
    means: np.ndarray  # (n_bins, n), NaN rows where empty
    latent_means: np.ndarray  # (n_bins,), NaN where empty

    @classmethod
    def fit(cls, z, X, n_bins: int = 32) -> "BinnedDecoder":
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        X = np.asarray(X, dtype=np.float64)
        if n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        lo, hi = float(z.min()), float(z.max())
        if not hi > lo:
            raise DegenerateLatentError(f"latent values are constant ({lo!r}); cannot bin")
        edges = np.linspace(lo, hi, n_bins + 1)
        idx = np.clip(np.searchsorted(edges, z, side="right") - 1, 0, n_bins - 1)
        counts = np.bincount(idx, minlength=n_bins)
        means = np.full((n_bins, X.shape[1]), np.nan)
        latent_means = np.full(n_bins, np.nan)
        for b in np.flatnonzero(counts):
            members = idx == b
            means[b] = X[members].sum(axis=0) / counts[b]
            latent_means[b] = z[members].sum() / counts[b]
        return cls(edges, counts, means, latent_means)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def nonempty(self) -> np.ndarray:
        return np.flatnonzero(self.counts)

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        keep = self.nonempty
        return self.latent_means[keep], self.means[keep]

    def curve(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Conditional-mean curve and its derivative at latent values ``z``.

        The curve interpolates the (latent mean, input mean) knots linearly and
        extrapolates the end segments; the derivative is estimated at the knots
        by central differences and interpolated between them.
        """
        kz, kx = self.knots()
        if kz.size < 3:
            raise InsufficientBinsError(f"only {kz.size} nonempty bins; need at least 3")
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        seg = np.clip(np.searchsorted(kz, z, side="right") - 1, 0, kz.size - 2)
        z0, z1 = kz[seg], kz[seg + 1]
        w = ((z - z0) / (z1 - z0))[:, None]
        value = kx[seg] * (1.0 - w) + kx[seg + 1] * w
        slopes = np.gradient(kx, kz, axis=0)
        wc = np.clip(w, 0.0, 1.0)
        tangent = slopes[seg] * (1.0 - wc) + slopes[seg + 1] * wc
        return value, tangent
