"""Multiscale tensorization of image cubes and the observation model.

An ``M x N x S`` cube is reshaped to ``(M1..Md, N1..Nd, S)`` column-major, the
spatial modes are interleaved as ``(M1, N1, M2, N2, ...)`` and each pair is
merged, giving an order ``d+1`` tensor of shape ``(M1*N1, ..., Md*Nd, S)``.
Scale 1 is the finest: its mode indexes the position inside an ``M1 x N1``
pixel cell.
"""

from __future__ import annotations

import logging
import math
import re
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .tensor import mode_n_product, permute, reshape

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TensorizationPlan:
    """Factorizations ``M = prod(m_factors)`` and ``N = prod(n_factors)``."""

    m_factors: tuple
    n_factors: tuple
    bands: int

    def __post_init__(self):
        m = tuple(int(v) for v in self.m_factors)
        n = tuple(int(v) for v in self.n_factors)
        object.__setattr__(self, "m_factors", m)
        object.__setattr__(self, "n_factors", n)
        if len(m) != len(n) or not m:
            raise ValueError("m_factors and n_factors need the same nonzero length")
        if any(v < 1 for v in m + n) or int(self.bands) < 1:
            raise ValueError("all factors and the band count must be >= 1")

    @classmethod
    def parse(cls, text: str, bands: int) -> "TensorizationPlan":
        """Parse ``"8x8,5x5,2x2"`` into per-scale ``(M_t, N_t)`` pairs."""
        pairs = []
        for part in text.split(","):
            match = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", part)
            if not match:
                raise ValueError(f"bad plan entry {part!r}; expected e.g. '8x8'")
            pairs.append((int(match.group(1)), int(match.group(2))))
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), bands)

    def __str__(self) -> str:
        return ",".join(f"{a}x{b}" for a, b in zip(self.m_factors, self.n_factors))

    @property
    def d(self) -> int:
        return len(self.m_factors)

    @property
    def rows(self) -> int:
        return math.prod(self.m_factors)

    @property
    def cols(self) -> int:
        return math.prod(self.n_factors)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.rows, self.cols, self.bands)

    @property
    def tensor_shape(self) -> tuple[int, ...]:
        cells = tuple(a * b for a, b in zip(self.m_factors, self.n_factors))
        return cells + (self.bands,)

    def with_bands(self, bands: int) -> "TensorizationPlan":
        return TensorizationPlan(self.m_factors, self.n_factors, bands)

    def downsampled(self, p: int) -> "TensorizationPlan":
        """Plan of a ``p``-fold block-averaged image; scale 1 absorbs ``p``."""
        m1, n1 = self.m_factors[0], self.n_factors[0]
        if m1 % p or n1 % p:
            raise ValueError(f"p={p} must divide M1={m1} and N1={n1}")
        return TensorizationPlan(
            (m1 // p,) + self.m_factors[1:], (n1 // p,) + self.n_factors[1:], self.bands
        )


def _interleave(d: int) -> tuple[int, ...]:
    perm = []
    for t in range(d):
        perm += [t, d + t]
    return tuple(perm) + (2 * d,)


def _check_image(x: np.ndarray, plan: TensorizationPlan) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.shape != plan.image_shape:
        raise ValueError(f"image shape {x.shape} does not match plan {plan.image_shape}")
    return x


def tensorize(x, plan: TensorizationPlan) -> np.ndarray:
    x = _check_image(x, plan)
    d = plan.d
    t = reshape(x, plan.m_factors + plan.n_factors + (plan.bands,))
    t = permute(t, _interleave(d))
    return reshape(t, plan.tensor_shape)


def detensorize(t, plan: TensorizationPlan) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.shape != plan.tensor_shape:
        raise ValueError(f"tensor shape {t.shape} does not match plan {plan.tensor_shape}")
    d = plan.d
    split = []
    for a, b in zip(plan.m_factors, plan.n_factors):
        split += [a, b]
    t = reshape(t, tuple(split) + (plan.bands,))
    inv = np.argsort(_interleave(d))
    t = permute(t, inv)
    return reshape(t, plan.image_shape)


def spatial_downsample(x, p: int) -> np.ndarray:
    """Mean over disjoint ``p x p`` pixel blocks, per band."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("expected an M x N x S cube")
    p = int(p)
    m, n, s = x.shape
    if p < 1 or m % p or n % p:
        raise ValueError(f"p={p} must divide both spatial extents {m}x{n}")
    blocks = x.reshape(m // p, p, n // p, p, s, order="C")
    return np.asfortranarray(blocks.mean(axis=(1, 3)))


def spectral_downsample(x, srf) -> np.ndarray:
    """Apply the spectral response ``srf`` (``s x S``) to every pixel."""
    x = np.asarray(x, dtype=np.float64)
    srf = np.asarray(srf, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("expected an M x N x S cube")
    return mode_n_product(x, srf, 2)


def noise_sigma(x, snr_db: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    power = float(np.sum(x * x)) / x.size
    return math.sqrt(power / 10.0 ** (snr_db / 10.0))


def add_noise(x, snr_db: Optional[float], seed) -> np.ndarray:
    """Add white Gaussian noise at the requested SNR (dB); ``None`` is noiseless."""
    x = np.asarray(x, dtype=np.float64)
    if snr_db is None:
        return x.copy()
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    rng = np.random.default_rng(seed)
    return x + noise_sigma(x, snr_db) * rng.standard_normal(x.shape)


def downsample_first_factor(u1, p: int, plan: TensorizationPlan) -> np.ndarray:
    """Average the data mode (mode 0) of the first factor over ``p x p`` cells.

    The data index of the first factor is ``a + M1 * b`` for an ``M1 x N1``
    cell; averaging over ``p x p`` sub-blocks mirrors
    :func:`spatial_downsample` in image space.
    """
    u1 = np.asarray(u1, dtype=np.float64)
    m1, n1 = plan.m_factors[0], plan.n_factors[0]
    if p < 1 or m1 % p or n1 % p:
        raise ValueError(f"p={p} must divide M1={m1} and N1={n1}")
    if u1.shape[0] != m1 * n1:
        raise ValueError(f"first factor data extent {u1.shape[0]} != M1*N1={m1 * n1}")
    rest = u1.shape[1:]
    # data index = a + p*b + M1*(c + p*e) -> split as (p, m1/p, p, n1/p)
    split = np.reshape(u1, (p, m1 // p, p, n1 // p) + rest, order="F")
    avg = split.mean(axis=(0, 2))
    return np.reshape(avg, ((m1 // p) * (n1 // p),) + rest, order="F")


def normalize_srf(srf, tol: float = 1e-6) -> np.ndarray:
    """Scale SRF rows to sum to one, warning if they were off by more than ``tol``."""
    srf = np.atleast_2d(np.asarray(srf, dtype=np.float64))
    if np.any(srf < 0):
        raise ValueError("SRF entries must be nonnegative")
    sums = srf.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("every SRF row needs a positive sum")
    if np.any(np.abs(sums - 1.0) > tol):
        warnings.warn("SRF rows do not sum to 1; normalizing", stacklevel=2)
    return srf / sums[:, None]


def load_srf(path) -> np.ndarray:
    """Read an ``s x S`` SRF from a plain comma-separated file."""
    srf = np.loadtxt(path, delimiter=",", ndmin=2)
    return normalize_srf(srf)


def save_srf(path, srf) -> None:
    np.savetxt(path, np.asarray(srf), delimiter=",", fmt="%.17g")


@dataclass(frozen=True)
class DegradationModel:
    srf: np.ndarray
    p: int
    snr_hsi_db: Optional[float] = None
    snr_msi_db: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "srf", normalize_srf(self.srf))
        if int(self.p) < 1:
            raise ValueError("p must be a positive integer")

    def check_plan(self, plan: TensorizationPlan) -> None:
        plan.downsampled(self.p)
        if self.srf.shape[1] != plan.bands:
            raise ValueError(
                f"SRF has {self.srf.shape[1]} columns but the cube has {plan.bands} bands"
            )

    def observe(self, x, seed_hsi=None, seed_msi=None) -> tuple[np.ndarray, np.ndarray]:
        """Return the noisy low-resolution HSI and high-resolution MSI of ``x``."""
        y = add_noise(spatial_downsample(x, self.p), self.snr_hsi_db, seed_hsi)
        z = add_noise(spectral_downsample(x, self.srf), self.snr_msi_db, seed_msi)
        return y, z


def box_srf(n_msi: int, n_hsi: int, overlap: float = 0.5) -> np.ndarray:
    """Broad overlapping Gaussian bands covering ``n_hsi`` narrow bands."""
    centers = np.linspace(0, n_hsi - 1, n_msi + 2)[1:-1] if n_msi > 1 else [0.5 * (n_hsi - 1)]
    width = max(n_hsi / (n_msi + 1) * (1 + overlap) / 2, 0.5)
    idx = np.arange(n_hsi)
    srf = np.exp(-0.5 * ((idx[None, :] - np.asarray(centers)[:, None]) / width) ** 2)
    return srf / srf.sum(axis=1, keepdims=True)
