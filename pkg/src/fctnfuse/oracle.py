"""Brute-force reference evaluations and the ``oracle-check`` self-test.

Everything here is deliberately naive and limited to tiny instances.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import fctn, tensor
from .fctn import FctnFactors, contract_full, factor_unfold, random_init, rank_matrix
from .graph import SpectralGraph, build_weights, wgr_value
from .tensorize import TensorizationPlan, detensorize, spatial_downsample, tensorize

MAX_BRUTE_TERMS = 2_000_000


def brute_force_contract(f: FctnFactors) -> np.ndarray:
    """Evaluate the FCTN multi-sum by enumerating every bond assignment.

    For each assignment of all bond indices, the contribution is the outer
    product of the matching data fibres of every factor.
    """
    n = f.n_factors
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    bond_sizes = [int(f.ranks[i, j]) for i, j in pairs]
    extents = f.data_extents
    terms = int(np.prod(bond_sizes)) * int(np.prod(extents))
    if terms > MAX_BRUTE_TERMS:
        raise ValueError(f"instance too large for brute force ({terms} terms)")
    out = np.zeros(extents)
    for assignment in itertools.product(*(range(s) for s in bond_sizes)):
        bond = dict(zip(pairs, assignment))
        fibres = []
        for t in range(n):
            idx = tuple(
                slice(None) if k == t else bond[(min(t, k), max(t, k))]
                for k in range(n)
            )
            fibres.append(f[t][idx])
        term = fibres[0]
        for fib in fibres[1:]:
            term = np.multiply.outer(term, fib)
        out += term
    return out


def pairwise_wgr(u: np.ndarray, w: np.ndarray) -> float:
    """``1/2 sum_ij W_ij ||u_i - u_j||^2`` by explicit double loop."""
    total = 0.0
    s = u.shape[0]
    for i in range(s):
        for j in range(s):
            d = u[i] - u[j]
            total += w[i, j] * float(d @ d)
    return 0.5 * total


def random_instance(rng, n_factors: int, max_extent: int = 4, max_rank: int = 3) -> FctnFactors:
    extents = rng.integers(1, max_extent + 1, size=n_factors)
    n_bonds = n_factors * (n_factors - 1) // 2
    ranks = rank_matrix(n_factors, rng.integers(1, max_rank + 1, size=n_bonds))
    f = random_init(ranks, extents, rng)
    # signed entries make cancellation errors visible
    return FctnFactors(tuple(2.0 * u - 1.0 for u in f.factors), ranks)


def rel_err(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(float(np.linalg.norm(b)), np.finfo(float).tiny)
    return float(np.linalg.norm(a - b)) / scale


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: float
    tol: float
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34} err={self.error:.3e}  tol={self.tol:.0e}  ({self.seconds:.2f}s)"


def _check(name: str, tol: float, fn: Callable[[], float]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        err = float(fn())
    except Exception:  # a crashing check is a failed check
        err = float("inf")
    return CheckResult(name, bool(err <= tol), err, tol, time.perf_counter() - t0)


def check_contraction(rng, n_instances: int = 100) -> float:
    worst = 0.0
    for i in range(n_instances):
        f = random_instance(rng, 2 + i % 3)
        worst = max(worst, rel_err(contract_full(f), brute_force_contract(f)))
    return worst


def check_factorization(rng, n_instances: int = 100, composite=None) -> float:
    composite = composite or fctn.composite_except
    worst = 0.0
    for i in range(n_instances):
        f = random_instance(rng, 2 + i % 3)
        full = brute_force_contract(f)
        for t in range(f.n_factors):
            lhs = tensor.unfold(full, t)
            rhs = factor_unfold(f, t) @ composite(f, t).T
            worst = max(worst, rel_err(rhs, lhs))
    return worst


def check_unfold_roundtrip(rng) -> float:
    worst = 0.0
    for order in range(1, 7):
        shape = tuple(rng.integers(1, 4, size=order))
        t = rng.standard_normal(shape)
        for mode in range(order):
            back = tensor.fold(tensor.unfold(t, mode), mode, shape)
            worst = max(worst, float(np.max(np.abs(back - t))))
        perm = rng.permutation(order)
        back = tensor.permute(tensor.permute(t, perm), tensor.inverse_permutation(perm))
        worst = max(worst, float(np.max(np.abs(back - t))))
    return worst


def check_tensorization(rng) -> float:
    worst = 0.0
    for m_f, n_f, p in [((4, 2), (4, 3), 2), ((2, 3, 2), (4, 1, 2), 2), ((6, 2), (3, 2), 3)]:
        plan = TensorizationPlan(m_f, n_f, 3)
        x = rng.standard_normal(plan.image_shape)
        tx = tensorize(x, plan)
        worst = max(worst, float(np.max(np.abs(detensorize(tx, plan) - x))))
        lr = tensorize(spatial_downsample(x, p), plan.downsampled(p))
        # average the within-block part of mode 0 directly on the tensor
        m1, n1 = m_f[0], n_f[0]
        split = tensor.reshape(tx, (p, m1 // p, p, n1 // p) + tx.shape[1:])
        direct = tensor.reshape(split.mean(axis=(0, 2)), lr.shape)
        worst = max(worst, float(np.max(np.abs(direct - lr))))
    return worst


def _random_spectral_operator(rng):
    s, q, m = 5, 4, 3
    r = rng.random((m, s))
    a_o = rng.standard_normal((q, q))
    a_o = a_o @ a_o.T
    a_h = rng.standard_normal((q, q))
    a_h = a_h @ a_h.T
    graph = build_weights(rng.random((4, 4, s)), sigma=1.0, k=2)
    rtr = r.T @ r

    def op(u):
        return rtr @ u @ a_o + u @ a_h + 0.1 * graph.laplacian @ u

    return op, (s, q)


def check_spectral_adjoint(rng, trials: int = 20) -> float:
    worst = 0.0
    for _ in range(trials):
        op, shape = _random_spectral_operator(rng)
        a, b = rng.standard_normal(shape), rng.standard_normal(shape)
        lhs, rhs = tensor.inner(op(a), b), tensor.inner(a, op(b))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
        curvature = tensor.inner(a, op(a))
        if curvature < -1e-10:
            return float("inf")
    return worst


def check_cg(rng, trials: int = 10) -> float:
    worst = 0.0
    for _ in range(trials):
        a = rng.standard_normal((6, 6))
        a = a @ a.T + 0.5 * np.eye(6)
        b = rng.standard_normal((6, 1))
        res = tensor.cg_solve(lambda x: a @ x, b, tol=1e-12, max_iter=200)
        worst = max(worst, rel_err(res.x, np.linalg.solve(a, b)))
    return worst


def check_wgr(rng, trials: int = 20) -> float:
    worst = 0.0
    for _ in range(trials):
        s = int(rng.integers(2, 8))
        w = rng.random((s, s))
        w = np.triu(w, 1) + np.triu(w, 1).T
        graph = SpectralGraph(w, np.diag(w.sum(1)) - w, 1.0, s)
        u = rng.standard_normal((s, 3))
        a, b = wgr_value(u, graph), pairwise_wgr(u, w)
        worst = max(worst, abs(a - b) / max(abs(b), 1.0))
    return worst


FAULTS = {
    "composite-sign": lambda f, t, spectral_map=None: -fctn.composite_except(f, t, spectral_map),
}


def run_checks(seed: int = 0, fault: Optional[str] = None) -> list[CheckResult]:
    """Run every self-check; ``fault`` injects a known bug as a negative control."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {sorted(FAULTS)}")
    composite = FAULTS.get(fault)
    rng = np.random.default_rng(seed)
    return [
        _check("contraction_vs_brute_force", 1e-10, lambda: check_contraction(rng)),
        _check("factorization_identity", 1e-10,
               lambda: check_factorization(rng, composite=composite)),
        _check("unfold_permute_roundtrip", 0.0, lambda: check_unfold_roundtrip(rng)),
        _check("tensorize_bijection_commutation", 1e-12, lambda: check_tensorization(rng)),
        _check("spectral_operator_adjoint_psd", 1e-10, lambda: check_spectral_adjoint(rng)),
        _check("cg_vs_dense_solve", 1e-8, lambda: check_cg(rng)),
        _check("wgr_trace_vs_pairwise", 1e-12, lambda: check_wgr(rng)),
    ]
