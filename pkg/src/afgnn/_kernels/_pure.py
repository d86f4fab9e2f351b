"""Reference implementations of the numeric kernels (numpy only)."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["average_linkage", "expected_mutual_info"]


def expected_mutual_info(a, b, n: int) -> float:
    """E[MI] of two labelings with marginals ``a`` and ``b`` under random permutation.

    Sums over every admissible cell count with its hypergeometric probability.
    """
    a = [int(x) for x in a]
    b = [int(x) for x in b]
    lg = [math.lgamma(k + 1) for k in range(n + 1)]
    lgn = lg[n]
    total = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            base = lg[ai] + lg[bj] + lg[n - ai] + lg[n - bj] - lgn
            for nij in range(lo, hi + 1):
                logp = base - lg[nij] - lg[ai - nij] - lg[bj - nij] - lg[n - ai - bj + nij]
                total += nij / n * math.log(n * nij / (ai * bj)) * math.exp(logp)
    return total


def average_linkage(dist, weights):
    """Size-weighted average-linkage merge sequence.

    ``dist`` is a symmetric ``m x m`` matrix over initial groups of sizes
    ``weights``.  Returns an ``(m-1) x 2`` int array of merged slot pairs
    ``(i, j)`` with ``i < j``; the merged group keeps slot ``i``.  Ties go to
    the lexicographically smallest pair.
    """
    d = np.array(dist, dtype=float, copy=True)
    w = np.array(weights, dtype=float, copy=True)
    m = d.shape[0]
    alive = np.ones(m, dtype=bool)
    upper = np.triu(np.ones((m, m), dtype=bool), 1)
    merges = np.zeros((max(m - 1, 0), 2), dtype=np.int64)
    for step in range(m - 1):
        live = upper & alive[:, None] & alive[None, :]
        flat = int(np.argmin(np.where(live, d, np.inf)))  # row-major: smallest (i, j) on ties
        bi, bj = divmod(flat, m)
        merges[step] = (bi, bj)
        wi, wj = w[bi], w[bj]
        row = (wi * d[bi] + wj * d[bj]) / (wi + wj)
        d[bi, :] = row
        d[:, bi] = row
        w[bi] = wi + wj
        alive[bj] = False
    return merges
