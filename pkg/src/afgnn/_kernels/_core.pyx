# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pure``; same signatures and results."""
import numpy as np
cimport numpy as cnp
from libc.math cimport lgamma, log, exp, INFINITY

cnp.import_array()


def expected_mutual_info(a, b, long n):
    cdef cnp.int64_t[:] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef cnp.int64_t[:] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef double[:] lg = np.empty(n + 1)
    cdef Py_ssize_t i, j
    cdef long ai, bj, lo, hi, nij
    cdef double base, logp, total = 0.0, lgn
    for i in range(n + 1):
        lg[i] = lgamma(i + 1.0)
    lgn = lg[n]
    for i in range(av.shape[0]):
        ai = av[i]
        for j in range(bv.shape[0]):
            bj = bv[j]
            lo = ai + bj - n
            if lo < 1:
                lo = 1
            hi = ai if ai < bj else bj
            if lo > hi:
                continue
            base = lg[ai] + lg[bj] + lg[n - ai] + lg[n - bj] - lgn
            for nij in range(lo, hi + 1):
                logp = base - lg[nij] - lg[ai - nij] - lg[bj - nij] - lg[n - ai - bj + nij]
                total += <double>nij / n * log(<double>n * nij / (<double>ai * bj)) * exp(logp)
    return total


def average_linkage(dist, weights):
    cdef double[:, :] d = np.array(dist, dtype=np.float64, copy=True)
    cdef double[:] w = np.array(weights, dtype=np.float64, copy=True)
    cdef Py_ssize_t m = d.shape[0]
    cdef Py_ssize_t step, i, j, k, bi, bj
    cdef double best, wi, wj, v
    cdef cnp.uint8_t[:] alive = np.ones(m, dtype=np.uint8)
    out = np.zeros((m - 1 if m > 1 else 0, 2), dtype=np.int64)
    cdef cnp.int64_t[:, :] merges = out
    for step in range(m - 1):
        best = INFINITY
        bi = -1
        bj = -1
        for i in range(m):
            if not alive[i]:
                continue
            for j in range(i + 1, m):
                if alive[j] and d[i, j] < best:
                    best = d[i, j]
                    bi = i
                    bj = j
        merges[step, 0] = bi
        merges[step, 1] = bj
        wi = w[bi]
        wj = w[bj]
        for k in range(m):
            if alive[k] and k != bi and k != bj:
                v = (wi * d[bi, k] + wj * d[bj, k]) / (wi + wj)
                d[bi, k] = v
                d[k, bi] = v
        w[bi] = wi + wj
        alive[bj] = 0
    return out
