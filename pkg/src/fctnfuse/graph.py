"""Band-similarity graph over the spectral mode and its Laplacian penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpectralGraph:
    weights: np.ndarray
    laplacian: np.ndarray
    sigma: float
    k: int

    @property
    def bands(self) -> int:
        return self.weights.shape[0]


def laplacian(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return np.diag(w.sum(axis=1)) - w


def build_weights(y, sigma: float = 10.0, k: int = 1) -> SpectralGraph:
    """Gaussian band-similarity weights on an index window ``0 < |i-j| <= k``.

    ``W(i, j) = exp(-||Y_i - Y_j||_F^2 / sigma^2)`` where ``Y_i`` is band ``i``
    of the observed cube.  The intensity scale of ``y`` matters: with the
    default ``sigma=10`` inputs are expected in roughly ``[0, 1]``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim < 2:
        raise ValueError("expected a cube with the band mode last")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    s = y.shape[-1]
    if s < 2:
        raise ValueError("a spectral graph needs at least two bands")
    bands = y.reshape(-1, s, order="F")
    w = np.zeros((s, s))
    for off in range(1, min(k, s - 1) + 1):
        diff = bands[:, off:] - bands[:, :-off]
        vals = np.exp(-np.sum(diff * diff, axis=0) / sigma**2)
        idx = np.arange(s - off)
        w[idx, idx + off] = vals
        w[idx + off, idx] = vals
    return SpectralGraph(w, laplacian(w), float(sigma), int(k))


def wgr_value(u, graph: SpectralGraph) -> float:
    """``trace(u.T @ L @ u)`` for the band-by-column matrix ``u``."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != graph.bands:
        raise ValueError(f"expected {graph.bands} rows, got shape {u.shape}")
    return float(np.sum(u * (graph.laplacian @ u)))
