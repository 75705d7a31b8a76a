"""Full-reference quality metrics for ``M x N x S`` cubes.

Conventions: PSNR uses the per-band maximum of ``|ref|`` as peak and is
capped at :data:`PSNR_CAP` for exact matches; SAM is the mean angle in
degrees over pixels whose spectra are nonzero in both images; UIQI is the
band average of the blockwise universal image quality index, reported in
place of Q2^n.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

PSNR_CAP = 300.0
CSV_FIELDS = ("run_id", "psnr_db", "sam_deg", "ergas", "uiqi", "iterations", "seconds")


def _pair(ref, est):
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {est.shape}")
    if ref.ndim == 2:
        ref, est = ref[:, :, None], est[:, :, None]
    if ref.ndim != 3:
        raise ValueError("expected M x N x S cubes")
    return ref, est


def psnr(ref, est) -> tuple[np.ndarray, float]:
    """Per-band PSNR (dB) and its mean."""
    ref, est = _pair(ref, est)
    mse = np.mean((ref - est) ** 2, axis=(0, 1))
    peak = np.max(np.abs(ref), axis=(0, 1))
    with np.errstate(divide="ignore"):
        per_band = 10.0 * np.log10(peak**2 / mse)
    per_band = np.where(mse == 0, PSNR_CAP, np.minimum(per_band, PSNR_CAP))
    return per_band, float(per_band.mean())


def sam(ref, est, return_skipped: bool = False):
    """Mean spectral angle in degrees; zero-norm pixels are skipped."""
    ref, est = _pair(ref, est)
    r = ref.reshape(-1, ref.shape[2])
    e = est.reshape(-1, est.shape[2])
    norms = np.linalg.norm(r, axis=1) * np.linalg.norm(e, axis=1)
    valid = norms > 0
    cos = np.sum(r[valid] * e[valid], axis=1) / norms[valid]
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    value = float(angles.mean()) if angles.size else float("nan")
    skipped = int((~valid).sum())
    return (value, skipped) if return_skipped else value


def ergas(ref, est, p: float) -> float:
    """``100/p * sqrt(mean_b(MSE_b / mean_b^2))``; zero-mean bands are skipped."""
    if p <= 0:
        raise ValueError("p must be positive")
    ref, est = _pair(ref, est)
    mse = np.mean((ref - est) ** 2, axis=(0, 1))
    mean = np.mean(ref, axis=(0, 1))
    ok = mean != 0
    if not np.all(ok):
        warnings.warn(f"skipping {int((~ok).sum())} zero-mean band(s) in ERGAS", stacklevel=2)
    if not np.any(ok):
        return float("nan")
    return float(100.0 / p * math.sqrt(np.mean(mse[ok] / mean[ok] ** 2)))


def _uiqi_block(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cxy = np.mean((x - mx) * (y - my))
    den = (vx + vy) * (mx * mx + my * my)
    if den == 0:
        return None
    return float(4.0 * cxy * mx * my / den)


def uiqi(ref, est, window: Optional[int] = None) -> float:
    """Band-averaged UIQI over non-overlapping ``window x window`` blocks.

    ``window`` defaults to 32, clipped to the image size.
    """
    ref, est = _pair(ref, est)
    m, n, s = ref.shape
    if window is None:
        window = min(32, m, n)
    if not 1 <= window <= min(m, n):
        raise ValueError(f"window {window} must lie in [1, {min(m, n)}]")
    band_means = []
    for b in range(s):
        vals = []
        for i in range(0, m - window + 1, window):
            for j in range(0, n - window + 1, window):
                q = _uiqi_block(ref[i:i + window, j:j + window, b],
                                est[i:i + window, j:j + window, b])
                if q is not None:
                    vals.append(q)
        if vals:
            band_means.append(np.mean(vals))
    return float(np.mean(band_means)) if band_means else float("nan")


@dataclass
class MetricReport:
    psnr_db: float
    sam_deg: float
    ergas: float
    uiqi: float
    p: float
    psnr_per_band: list = field(default_factory=list)

    def row(self, run_id: str, iterations: int, seconds: float) -> dict:
        return {
            "run_id": run_id,
            "psnr_db": self.psnr_db,
            "sam_deg": self.sam_deg,
            "ergas": self.ergas,
            "uiqi": self.uiqi,
            "iterations": iterations,
            "seconds": seconds,
        }


def evaluate(ref, est, p: float, window: Optional[int] = None) -> MetricReport:
    per_band, mean = psnr(ref, est)
    return MetricReport(
        psnr_db=mean,
        sam_deg=sam(ref, est),
        ergas=ergas(ref, est, p),
        uiqi=uiqi(ref, est, window),
        p=p,
        psnr_per_band=[float(v) for v in per_band],
    )


def empty_report(p: float) -> MetricReport:
    nan = float("nan")
    return MetricReport(nan, nan, nan, nan, p)


def append_csv(path, rows) -> None:
    """Append rows to a metrics CSV, writing the header for a new file."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in CSV_FIELDS})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def report_dict(report: MetricReport) -> dict:
    return asdict(report)
