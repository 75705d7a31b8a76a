"""Dense tensor primitives under a column-major (first index fastest) convention.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Every function
here interprets linear order as Fortran order regardless of the memory layout
numpy happens to use, so ``reshape`` / ``unfold`` agree with the usual
Kolda-Bader matricization.  Mode indices are 0-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Raised when an iterative solver hits non-finite values."""


def _as_tensor(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        raise ValueError("tensor must have at least one mode")
    return t


def reshape(t, new_shape: Sequence[int]) -> np.ndarray:
    """Reshape keeping column-major linear order."""
    t = _as_tensor(t)
    new_shape = tuple(int(s) for s in new_shape)
    if any(s < 1 for s in new_shape) or not new_shape:
        raise ValueError(f"invalid shape {new_shape}")
    if int(np.prod(new_shape)) != t.size:
        raise ValueError(
            f"cannot reshape {t.shape} ({t.size} entries) into {new_shape}"
        )
    return np.reshape(t, new_shape, order="F")


def permute(t, perm: Sequence[int]) -> np.ndarray:
    """Reorder modes: mode ``k`` of the result is mode ``perm[k]`` of ``t``."""
    t = _as_tensor(t)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(t.ndim)):
        raise ValueError(f"{perm} is not a permutation of {t.ndim} modes")
    return np.asfortranarray(np.transpose(t, perm))


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for k, p in enumerate(perm):
        inv[p] = k
    return tuple(inv)


def unfold(t, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization.

    Rows index ``mode``; columns run over the remaining modes in ascending
    order, column-major.  Always returns a copy.
    """
    t = _as_tensor(t)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")
    moved = np.moveaxis(t, mode, 0)
    return np.array(moved.reshape((t.shape[mode], -1), order="F"), order="F")


def fold(m, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1:]
    if m.ndim != 2 or m.shape != (shape[mode], int(np.prod(rest))):
        raise ValueError(
            f"matrix of shape {m.shape} cannot fold into {shape} along mode {mode}"
        )
    full = np.reshape(m, (shape[mode],) + rest, order="F")
    return np.asfortranarray(np.moveaxis(full, 0, mode))


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """Multiply matrix ``m`` into mode ``mode`` of ``t``."""
    t = _as_tensor(t)
    m = np.asarray(m, dtype=np.float64)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix {m.shape} incompatible with mode {mode} extent {t.shape[mode]}"
        )
    out = np.tensordot(m, t, axes=([1], [mode]))
    return np.asfortranarray(np.moveaxis(out, 0, mode))


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Trace inner product ``trace(a.T @ b)``."""
    return float(np.vdot(a, b))


@dataclass
class CGResult:
    x: np.ndarray
    converged: bool
    iterations: int
    relative_residual: float
    restarts: int = 0


def _true_norm(rhs, apply, x) -> float:
    return float(np.linalg.norm(rhs - apply(x)))


def cg_solve(
    apply: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 500,
    x0: Optional[np.ndarray] = None,
    stagnation_window: Optional[int] = None,
) -> CGResult:
    """Conjugate gradients for a symmetric PSD operator on matrices.

    The inner product is the trace inner product, so ``apply`` may act on
    arrays of any shape as long as it is self-adjoint.  Converged when
    ``||apply(x) - rhs||_F <= tol * ||rhs||_F``.  If the residual does not
    improve for ``stagnation_window`` iterations the recurrence restarts from
    the true residual.  When ``max_iter`` is exhausted the best iterate seen
    is returned with ``converged=False``.

    ``stagnation_window`` defaults to ``max(50, 2 * rhs.size)``: on an
    ill-conditioned system the residual can plateau for somewhat more steps
    than there are unknowns before dropping (finite precision loses
    orthogonality), and restarting inside that plateau
    discards the Krylov space CG needs to get past it.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    rhs_norm = float(np.linalg.norm(rhs))
    if stagnation_window is None:
        stagnation_window = max(50, 2 * rhs.size)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.float64)
    if rhs_norm == 0.0:
        return CGResult(np.zeros_like(rhs), True, 0, 0.0)

    r = rhs - apply(x) if x0 is not None else rhs.copy()
    res = float(np.linalg.norm(r))
    best_x, best_res = x.copy(), res
    if res <= tol * rhs_norm:
        return CGResult(x, True, 0, res / rhs_norm)

    p = r.copy()
    rr = inner(r, r)
    since_best = 0
    restarts = 0
    it = 0
    while it < max_iter:
        it += 1
        ap = apply(p)
        pap = inner(p, ap)
        if not np.isfinite(pap):
            raise NumericalError(f"non-finite curvature at CG iteration {it}")
        if pap <= 0.0:
            # direction in the null space of a semidefinite operator
            break
        alpha = rr / pap
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = inner(r, r)
        if not np.isfinite(rr_new):
            raise NumericalError(f"non-finite residual at CG iteration {it}")
        res = float(np.sqrt(rr_new))
        if res < best_res:
            best_x, best_res = x.copy(), res
            since_best = 0
        else:
            since_best += 1
        if res <= tol * rhs_norm or since_best >= stagnation_window:
            # the recursive residual drifts from b - Ax; check the true one
            r_true = rhs - apply(x)
            true_res = float(np.linalg.norm(r_true))
            if true_res <= tol * rhs_norm:
                return CGResult(x, True, it, true_res / rhs_norm, restarts)
            if true_res < _true_norm(rhs, apply, best_x):
                best_x = x.copy()
            log.debug("CG restart at iteration %d (residual %.3e)", it, true_res)
            x = best_x.copy()
            r = rhs - apply(x)
            rr_new = inner(r, r)
            # rebaseline on the true residual so later progress is recognized
            best_res = float(np.sqrt(rr_new))
            p = r.copy()
            rr = rr_new
            since_best = 0
            restarts += 1
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new

    true_res = float(np.linalg.norm(rhs - apply(best_x)))
    converged = true_res <= tol * rhs_norm
    return CGResult(best_x, converged, it, true_res / rhs_norm, restarts)
