"""Fully-connected tensor network (FCTN) factor sets and their contractions.

A network of ``D`` factors represents an order-``D`` tensor.  Factor ``t`` is
itself order ``D``: its mode ``t`` carries the data extent and every other mode
``k`` is the bond shared with factor ``k`` (extent ``ranks[t, k]``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .tensor import mode_n_product, unfold


def rank_matrix(n_factors: int, ranks) -> np.ndarray:
    """Build a symmetric bond-rank matrix.

    ``ranks`` is either a scalar (all bonds equal), a full ``n x n`` matrix, or
    the upper triangle listed row by row: ``r12, r13, ..., r1n, r23, ...``.
    The diagonal is set to 0 and never read.
    """
    n = int(n_factors)
    if n < 2:
        raise ValueError("an FCTN needs at least two factors")
    arr = np.asarray(ranks)
    r = np.zeros((n, n), dtype=int)
    iu = np.triu_indices(n, k=1)
    if arr.ndim == 0:
        r[iu] = int(arr)
    elif arr.ndim == 1:
        if arr.size != len(iu[0]):
            raise ValueError(
                f"expected {len(iu[0])} upper-triangular ranks for {n} factors, "
                f"got {arr.size}"
            )
        r[iu] = arr.astype(int)
    elif arr.shape == (n, n):
        if not np.array_equal(np.triu(arr, 1), np.triu(arr.T, 1)):
            raise ValueError("rank matrix must be symmetric")
        r[iu] = arr[iu].astype(int)
    else:
        raise ValueError(f"cannot interpret ranks of shape {arr.shape}")
    r = r + r.T
    if np.any(r[iu] < 1):
        raise ValueError("all bond ranks must be >= 1")
    return r


def factor_shape(ranks: np.ndarray, t: int, extent: int) -> tuple[int, ...]:
    shape = [int(x) for x in ranks[t]]
    shape[t] = int(extent)
    return tuple(shape)


@dataclass(frozen=True)
class FctnFactors:
    """The factor tensors of an FCTN together with their bond ranks."""

    factors: tuple
    ranks: np.ndarray

    def __post_init__(self):
        factors = tuple(np.asarray(u, dtype=np.float64) for u in self.factors)
        object.__setattr__(self, "factors", factors)
        n = len(factors)
        ranks = np.asarray(self.ranks, dtype=int)
        if ranks.shape != (n, n):
            raise ValueError(f"rank matrix must be {n}x{n}, got {ranks.shape}")
        object.__setattr__(self, "ranks", ranks)
        for t, u in enumerate(factors):
            if u.ndim != n:
                raise ValueError(f"factor {t} has order {u.ndim}, expected {n}")
            for k in range(n):
                if k != t and u.shape[k] != ranks[t, k]:
                    raise ValueError(
                        f"factor {t} mode {k} has extent {u.shape[k]}, "
                        f"bond rank is {ranks[t, k]}"
                    )

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def data_extents(self) -> tuple[int, ...]:
        return tuple(u.shape[t] for t, u in enumerate(self.factors))

    def __getitem__(self, t: int) -> np.ndarray:
        return self.factors[t]

    def replace(self, t: int, factor) -> "FctnFactors":
        """Return a copy with factor ``t`` swapped for ``factor``."""
        factors = list(self.factors)
        factors[t] = factor
        return FctnFactors(tuple(factors), self.ranks)

    def copy(self) -> "FctnFactors":
        return FctnFactors(tuple(u.copy() for u in self.factors), self.ranks.copy())


def _bond_label(n: int, a: int, b: int) -> int:
    i, j = min(a, b), max(a, b)
    return n + i * (2 * n - i - 1) // 2 + (j - i - 1)


def _labels(n: int, t: int) -> list[int]:
    """Einsum labels of factor ``t``: data label ``t``, bond labels after ``n``."""
    return [t if k == t else _bond_label(n, t, k) for k in range(n)]


def _contract_sequential(
    tensors: Sequence[np.ndarray],
    labels: Sequence[Sequence[int]],
    out_labels: Sequence[int],
) -> np.ndarray:
    """Pairwise contraction in the given order, summing bonds once closed."""
    keep = set(out_labels)
    acc, acc_labels = tensors[0], list(labels[0])
    for idx in range(1, len(tensors)):
        later = set()
        for lab in labels[idx + 1:]:
            later.update(lab)
        nxt = list(labels[idx])
        merged = []
        for lab in acc_labels + nxt:
            if lab in merged:
                continue
            if lab in keep or lab in later or (lab in acc_labels) != (lab in nxt):
                merged.append(lab)
        acc = np.einsum(acc, acc_labels, tensors[idx], nxt, merged)
        acc_labels = merged
    return np.einsum(acc, acc_labels, list(out_labels))


def contract_full(f: FctnFactors) -> np.ndarray:
    """Contract every bond of the network, giving a tensor of ``f.data_extents``."""
    n = f.n_factors
    labels = [_labels(n, t) for t in range(n)]
    return np.asfortranarray(
        _contract_sequential(f.factors, labels, list(range(n)))
    )


def factor_unfold(f: FctnFactors, t: int) -> np.ndarray:
    if not 0 <= t < f.n_factors:
        raise IndexError(f"factor index {t} out of range")
    return unfold(f[t], t)


def composite_except(
    f: FctnFactors, t: int, spectral_map: Optional[np.ndarray] = None
) -> np.ndarray:
    """Contract every factor except ``t`` and matricize the result.

    Rows run over the data modes ``k != t`` (ascending, column-major) and
    columns over the bonds ``(t, k)``, ``k != t``, in ascending ``k``.  With
    this layout ``unfold(contract_full(f), t) == factor_unfold(f, t) @ C.T``.

    ``spectral_map`` is multiplied into the data mode of the last factor first,
    which is how the network for the multispectral observation is formed.
    """
    n = f.n_factors
    if not 0 <= t < n:
        raise IndexError(f"factor index {t} out of range")
    factors = list(f.factors)
    if spectral_map is not None and t != n - 1:
        factors[-1] = mode_n_product(factors[-1], spectral_map, n - 1)
    others = [k for k in range(n) if k != t]
    tensors = [factors[k] for k in others]
    labels = [_labels(n, k) for k in others]
    bonds = [_bond_label(n, t, k) for k in others]
    out = _contract_sequential(tensors, labels, others + bonds)
    n_rows = int(np.prod([out.shape[i] for i in range(len(others))]))
    return np.reshape(out, (n_rows, -1), order="F")


def random_init(ranks: np.ndarray, data_extents: Sequence[int], seed) -> FctnFactors:
    """Uniform [0, 1) factors, deterministic in ``seed``."""
    ranks = np.asarray(ranks, dtype=int)
    if len(data_extents) != ranks.shape[0]:
        raise ValueError("one data extent per factor is required")
    rng = np.random.default_rng(seed)
    factors = tuple(
        rng.random(factor_shape(ranks, t, e)) for t, e in enumerate(data_extents)
    )
    return FctnFactors(factors, ranks)
