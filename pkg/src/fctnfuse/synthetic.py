"""Synthetic scenes drawn from an FCTN with smooth spectral factors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fctn import FctnFactors, contract_full, factor_shape, rank_matrix
from .solver import FusionConfig
from .tensor import fold
from .tensorize import DegradationModel, TensorizationPlan, box_srf, detensorize


@dataclass
class Scene:
    x: np.ndarray
    factors: FctnFactors
    plan: TensorizationPlan
    srf: np.ndarray


def smooth_spectra(n_bands: int, n_spectra: int, rng, n_bumps: int = 3) -> np.ndarray:
    """``n_bands x n_spectra`` nonnegative Gaussian-mixture curves."""
    s = np.arange(n_bands)[:, None]
    out = np.zeros((n_bands, n_spectra))
    for _ in range(n_bumps):
        centers = rng.uniform(-0.2, 1.2, n_spectra) * (n_bands - 1)
        widths = rng.uniform(0.25, 0.6, n_spectra) * n_bands
        amps = rng.uniform(0.2, 1.0, n_spectra)
        out += amps * np.exp(-0.5 * ((s - centers) / widths) ** 2)
    return out


def make_scene(
    plan: TensorizationPlan,
    ranks,
    seed,
    n_msi: int = 3,
    smooth: bool = True,
) -> Scene:
    """Random nonnegative FCTN scene scaled so its peak value is 1.

    With ``smooth`` the spectral factor's columns are smooth curves over the
    band index; otherwise all factors are i.i.d. uniform.
    """
    n = plan.d + 1
    ranks = rank_matrix(n, ranks)
    rng = np.random.default_rng(seed)
    extents = plan.tensor_shape
    factors = [rng.random(factor_shape(ranks, t, e)) for t, e in enumerate(extents)]
    if smooth:
        shape = factors[-1].shape
        spectra = smooth_spectra(plan.bands, int(np.prod(shape[:-1])), rng)
        factors[-1] = fold(spectra, n - 1, shape)
    f = FctnFactors(tuple(factors), ranks)
    scale = float(contract_full(f).max())
    factors[-1] = factors[-1] / scale
    f = FctnFactors(tuple(factors), ranks)
    x = detensorize(contract_full(f), plan)
    return Scene(x=x, factors=f, plan=plan, srf=box_srf(n_msi, plan.bands))


# Desk-scale noisy benchmark: 32 x 32 x 16 scene, rank-3 FCTN, p = 4, 25 dB.
BENCHMARK_PLAN = TensorizationPlan((4, 8), (4, 8), 16)
BENCHMARK_SETTINGS = {
    "p": 4,
    "n_msi": 4,
    "ranks": 3,
    "snr_db": 25.0,
    "lam": 0.1,
    "mu": 0.3,
    "beta": 0.1,
    "sigma": 10.0,
    "max_iter": 100,
}


@dataclass
class Benchmark:
    scene: Scene
    y: np.ndarray
    z: np.ndarray
    p: int
    init_seed: int

    def config(self, **overrides):
        """Fusion settings for this benchmark; keywords override them."""
        s = BENCHMARK_SETTINGS
        kw = dict(plan=self.scene.plan, p=self.p, ranks=s["ranks"], lam=s["lam"], mu=s["mu"],
                  beta=s["beta"], sigma=s["sigma"], max_iter=s["max_iter"], seed=self.init_seed)
        kw.update(overrides)
        return FusionConfig(**kw)


def noisy_benchmark(seed: int) -> Benchmark:
    """Scene ``seed`` of the bundled benchmark with its degraded observations."""
    s = BENCHMARK_SETTINGS
    scene = make_scene(BENCHMARK_PLAN, s["ranks"], seed, n_msi=s["n_msi"])
    model = DegradationModel(scene.srf, s["p"], s["snr_db"], s["snr_db"])
    y, z = model.observe(scene.x, seed_hsi=10 * seed + 1, seed_msi=10 * seed + 2)
    return Benchmark(scene, y, z, s["p"], 1000 + seed)


def nearest_upsample(y: np.ndarray, p: int) -> np.ndarray:
    """Replicate each low-resolution pixel into a ``p x p`` block."""
    return np.repeat(np.repeat(y, p, axis=0), p, axis=1)
