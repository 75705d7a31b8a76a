"""FCTN fusion by block-coordinate minimization.

Objective (weights default to ``w_y = 1``, ``w_z = lam``)::

    w_y/2 ||T{Y} - F(Q, U2, .., UD)||^2
  + w_z/2 ||T{Z} - F(U1, .., UD x_D R)||^2
  + beta/2 tr(UD_(D)^T L UD_(D))
  + mu/2 (sum_{t<D} ||Ut||^2 + ||Q||^2)

Each sweep updates Q, U1, U2..U_{D-1} by exact ridge solves and the spectral
factor UD by conjugate gradients on its generalized Sylvester equation.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .fctn import FctnFactors, composite_except, contract_full, random_init, rank_matrix
from .graph import SpectralGraph, build_weights, wgr_value
from .tensor import NumericalError, cg_solve, fold, mode_n_product, unfold
from .tensorize import TensorizationPlan, detensorize, normalize_srf, tensorize

log = logging.getLogger(__name__)


class FusionError(RuntimeError):
    """A subproblem failed; the message names the iteration and block."""


# midpoints of the published rank ranges, keyed by factor count
_PRESET_RANKS = {
    4: [44, 2, 2, 8, 5, 5],
    5: [38, 3, 3, 2, 9, 4, 2, 4, 2, 2],
}


def default_ranks(n_factors: int, fallback: int = 3) -> np.ndarray:
    """Preset bond ranks for 4- or 5-factor networks, uniform otherwise."""
    return rank_matrix(n_factors, _PRESET_RANKS.get(n_factors, fallback))


@dataclass
class FusionConfig:
    plan: TensorizationPlan
    p: int
    ranks: Optional[np.ndarray] = None
    lam: float = 0.1
    mu: float = 120.0
    beta: float = 0.1
    sigma: float = 10.0
    graph_k: int = 1
    max_iter: int = 480
    seed: int = 0
    cg_tol: float = 1e-8
    cg_max_iter: int = 500
    objective_log_every: int = 1
    # put lam on the Y term instead of the Z term
    lam_on_y: bool = False
    early_stop_tol: Optional[float] = None
    early_stop_window: int = 10
    audit: bool = False

    def __post_init__(self):
        if min(self.lam, self.mu, self.beta) < 0:
            raise ValueError("lam, mu and beta must be nonnegative")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        n = self.plan.d + 1
        if self.ranks is None:
            self.ranks = default_ranks(n)
        else:
            self.ranks = rank_matrix(n, self.ranks)

    @property
    def weights(self) -> tuple[float, float]:
        """``(w_y, w_z)``."""
        return (self.lam, 1.0) if self.lam_on_y else (1.0, self.lam)

    def to_dict(self) -> dict:
        iu = np.triu_indices(self.ranks.shape[0], 1)
        return {
            "plan": str(self.plan),
            "bands": self.plan.bands,
            "p": self.p,
            "ranks": [int(v) for v in self.ranks[iu]],
            "lam": self.lam,
            "mu": self.mu,
            "beta": self.beta,
            "sigma": self.sigma,
            "graph_k": self.graph_k,
            "max_iter": self.max_iter,
            "seed": self.seed,
            "cg_tol": self.cg_tol,
            "cg_max_iter": self.cg_max_iter,
            "objective_log_every": self.objective_log_every,
            "lam_on_y": self.lam_on_y,
            "early_stop_tol": self.early_stop_tol,
            "early_stop_window": self.early_stop_window,
        }


@dataclass
class FusionState:
    factors: FctnFactors
    q: np.ndarray
    graph: SpectralGraph
    srf: np.ndarray
    objective_history: list = field(default_factory=list)
    history_iterations: list = field(default_factory=list)
    iterations: int = 0
    # filled when cfg.audit is set: (iteration, block, objective, residual)
    audit_log: list = field(default_factory=list)
    cg_failures: int = 0
    last_residuals: dict = field(default_factory=dict)

    @property
    def y_network(self) -> FctnFactors:
        return self.factors.replace(0, self.q)

    @property
    def z_network(self) -> FctnFactors:
        n = self.factors.n_factors
        return self.factors.replace(n - 1, mode_n_product(self.factors[n - 1], self.srf, n - 1))


def objective(state: FusionState, ty, tz, cfg: FusionConfig) -> float:
    w_y, w_z = cfg.weights
    n = state.factors.n_factors
    fit_y = np.sum((ty - contract_full(state.y_network)) ** 2)
    fit_z = np.sum((tz - contract_full(state.z_network)) ** 2)
    spectral = unfold(state.factors[n - 1], n - 1)
    reg = wgr_value(spectral, state.graph) if cfg.beta else 0.0
    ridge = sum(np.sum(u * u) for u in state.factors.factors[:-1]) + np.sum(state.q**2)
    return float(0.5 * w_y * fit_y + 0.5 * w_z * fit_z + 0.5 * cfg.beta * reg + 0.5 * cfg.mu * ridge)


def _ridge_solve(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve ``X @ gram = rhs`` for symmetric PSD ``gram``; returns ``(X, rel. residual)``."""
    try:
        xt = scipy.linalg.solve(gram, rhs.T, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(
            "normal matrix is singular; use mu > 0"
        ) from exc
    if not np.all(np.isfinite(xt)):
        raise NumericalError("non-finite solution of the normal equations")
    denom = float(np.linalg.norm(rhs)) or 1.0
    res = float(np.linalg.norm(gram @ xt - rhs.T)) / denom
    return xt.T, res


def normal_equations(state: FusionState, ty, tz, cfg: FusionConfig, block):
    """Gram matrix and right-hand side of a ridge block.

    ``block`` is ``"q"`` or a factor index ``t < D-1``.  The block minimizer
    ``X`` (mode-``t`` unfolding) satisfies ``X @ gram = rhs`` and the block
    gradient is ``X @ gram - rhs``.
    """
    n = state.factors.n_factors
    w_y, w_z = cfg.weights
    if block == "q":
        h = composite_except(state.y_network, 0)
        gram = w_y * (h.T @ h)
        rhs = w_y * (unfold(ty, 0) @ h)
    elif block == 0:
        o = composite_except(state.factors, 0, state.srf)
        gram = w_z * (o.T @ o)
        rhs = w_z * (unfold(tz, 0) @ o)
    elif 1 <= block <= n - 2:
        o = composite_except(state.factors, block, state.srf)
        h = composite_except(state.y_network, block)
        gram = w_z * (o.T @ o) + w_y * (h.T @ h)
        rhs = w_z * (unfold(tz, block) @ o) + w_y * (unfold(ty, block) @ h)
    else:
        raise ValueError(f"no ridge block {block!r}")
    gram = gram + cfg.mu * np.eye(gram.shape[0])
    return gram, rhs


def update_q(state: FusionState, ty, cfg: FusionConfig) -> FusionState:
    gram, rhs = normal_equations(state, ty, None, cfg, "q")
    q1, res = _ridge_solve(gram, rhs)
    state = replace(state, q=fold(q1, 0, state.q.shape))
    state.last_residuals = {**state.last_residuals, "q": res}
    return state


def update_u1(state: FusionState, tz, cfg: FusionConfig) -> FusionState:
    gram, rhs = normal_equations(state, None, tz, cfg, 0)
    u1, res = _ridge_solve(gram, rhs)
    factors = state.factors.replace(0, fold(u1, 0, state.factors[0].shape))
    state = replace(state, factors=factors)
    state.last_residuals = {**state.last_residuals, "u1": res}
    return state


def update_ut(state: FusionState, ty, tz, t: int, cfg: FusionConfig) -> FusionState:
    """Joint ridge update of a middle factor (``1 <= t <= D-2``, 0-based)."""
    n = state.factors.n_factors
    if not 1 <= t <= n - 2:
        raise ValueError(f"middle factor index must lie in [1, {n - 2}], got {t}")
    gram, rhs = normal_equations(state, ty, tz, cfg, t)
    ut, res = _ridge_solve(gram, rhs)
    factors = state.factors.replace(t, fold(ut, t, state.factors[t].shape))
    state = replace(state, factors=factors)
    state.last_residuals = {**state.last_residuals, f"u{t + 1}": res}
    return state


def spectral_system(state: FusionState, ty, tz, cfg: FusionConfig):
    """Operator and right-hand side of the spectral-factor normal equations.

    ``op(U) = w_z R^T R U A_o + w_y U A_h + beta L U`` with ``A_o = O^T O``
    and ``A_h = H^T H``.  The operator is self-adjoint and PSD under the
    trace inner product.
    """
    n = state.factors.n_factors
    w_y, w_z = cfg.weights
    r = state.srf
    o = composite_except(state.factors, n - 1)
    h = composite_except(state.y_network, n - 1)
    a_o = w_z * (o.T @ o)
    a_h = w_y * (h.T @ h)
    rtr = r.T @ r
    lap = cfg.beta * state.graph.laplacian

    def op(u):
        return rtr @ u @ a_o + u @ a_h + lap @ u

    rhs = w_z * (r.T @ (unfold(tz, n - 1) @ o)) + w_y * (unfold(ty, n - 1) @ h)
    return op, rhs


def update_spectral(state: FusionState, ty, tz, cfg: FusionConfig) -> FusionState:
    n = state.factors.n_factors
    op, rhs = spectral_system(state, ty, tz, cfg)
    u0 = unfold(state.factors[n - 1], n - 1)
    result = cg_solve(op, rhs, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter, x0=u0)
    if not result.converged:
        # nearly singular operator: retry once with a tiny ridge
        scale = float(np.sum(u0 * op(np.ones_like(u0)))) / u0.size
        eps = 1e-10 * max(abs(scale), 1.0)
        log.info("spectral CG stalled (rel. residual %.2e); adding ridge %.1e",
                 result.relative_residual, eps)
        retry = cg_solve(lambda u: op(u) + eps * u, rhs, tol=cfg.cg_tol,
                         max_iter=cfg.cg_max_iter, x0=result.x)
        if retry.relative_residual < result.relative_residual:
            result = retry
    failures = state.cg_failures + (0 if result.converged else 1)
    factors = state.factors.replace(n - 1, fold(result.x, n - 1, state.factors[n - 1].shape))
    state = replace(state, factors=factors, cg_failures=failures)
    state.last_residuals = {**state.last_residuals, "spectral": result.relative_residual}
    return state


def init_state(ty, srf, graph: SpectralGraph, cfg: FusionConfig, lr_plan: TensorizationPlan) -> FusionState:
    rng = np.random.default_rng(cfg.seed)
    factors = random_init(cfg.ranks, cfg.plan.tensor_shape, rng)
    q_shape = (lr_plan.tensor_shape[0],) + factors[0].shape[1:]
    q = rng.random(q_shape)
    return FusionState(factors=factors, q=q, graph=graph, srf=srf)


def sweep(state: FusionState, ty, tz, cfg: FusionConfig, iteration: int = 0) -> FusionState:
    """One pass over all blocks in the fixed order Q, U1, U2..U_{D-1}, UD."""
    n = state.factors.n_factors
    blocks = [("q", lambda s: update_q(s, ty, cfg)), ("u1", lambda s: update_u1(s, tz, cfg))]
    for t in range(1, n - 1):
        blocks.append((f"u{t + 1}", lambda s, t=t: update_ut(s, ty, tz, t, cfg)))
    blocks.append(("spectral", lambda s: update_spectral(s, ty, tz, cfg)))
    for name, step in blocks:
        try:
            state = step(state)
        except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise FusionError(f"iteration {iteration}, block {name}: {exc}") from exc
        if cfg.audit:
            state.audit_log.append(
                (iteration, name, objective(state, ty, tz, cfg), state.last_residuals[name])
            )
    return state


def _check_inputs(y, z, srf, cfg: FusionConfig):
    plan = cfg.plan
    lr_plan = plan.downsampled(cfg.p)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    srf = np.atleast_2d(np.asarray(srf, dtype=np.float64))
    if y.shape != lr_plan.image_shape:
        raise ValueError(f"HSI shape {y.shape} != expected {lr_plan.image_shape}")
    if srf.shape != (z.shape[-1], plan.bands):
        raise ValueError(f"SRF shape {srf.shape} != ({z.shape[-1]}, {plan.bands})")
    if z.shape != plan.with_bands(srf.shape[0]).image_shape:
        raise ValueError(f"MSI shape {z.shape} does not match plan {plan.image_shape[:2]}")
    return y, z, normalize_srf(srf), lr_plan


def fuse(y, z, srf, cfg: FusionConfig) -> tuple[np.ndarray, FusionState]:
    """Estimate the high-resolution cube from the LR-HSI ``y`` and HR-MSI ``z``.

    Returns the reconstructed ``M x N x S`` cube and the final solver state.
    """
    y, z, srf, lr_plan = _check_inputs(y, z, srf, cfg)
    ty = tensorize(y, lr_plan)
    tz = tensorize(z, cfg.plan.with_bands(srf.shape[0]))
    graph = build_weights(y, cfg.sigma, cfg.graph_k)
    state = init_state(ty, srf, graph, cfg, lr_plan)
    state.objective_history.append(objective(state, ty, tz, cfg))
    state.history_iterations.append(0)

    t0 = time.perf_counter()
    for it in range(1, cfg.max_iter + 1):
        state = sweep(state, ty, tz, cfg, it)
        state.iterations = it
        if it % cfg.objective_log_every == 0 or it == cfg.max_iter:
            state.objective_history.append(objective(state, ty, tz, cfg))
            state.history_iterations.append(it)
            log.debug("iter %d objective %.6e", it, state.objective_history[-1])
        if cfg.early_stop_tol is not None and _stalled(state.objective_history, cfg):
            log.info("early stop at iteration %d", it)
            break
    log.info("fused %d iterations in %.2fs", state.iterations, time.perf_counter() - t0)
    xhat = detensorize(contract_full(state.factors), cfg.plan)
    return xhat, state


def _stalled(history: list, cfg: FusionConfig) -> bool:
    w = cfg.early_stop_window
    if len(history) <= w:
        return False
    old, new = history[-1 - w], history[-1]
    return (old - new) <= cfg.early_stop_tol * max(abs(old), np.finfo(float).tiny)
