"""Hamming-space hot loops: packed popcount distances and ranked-list
metrics. Each kernel has a numba version and a numpy version; the public
names dispatch on ``_accel.USE_NUMBA``.

Codes are packed little-endian into uint64 words: bit j of word w holds
position 64*w + j, set when the code entry is +1.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit, prange

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


def pack_codes(B: np.ndarray) -> np.ndarray:
    """(N, L) +-1 codes -> (N, ceil(L/64)) uint64."""
    B = np.asarray(B)
    N, L = B.shape
    W = (L + 63) // 64
    bits = np.zeros((N, W * 64), dtype=np.uint8)
    bits[:, :L] = B > 0
    packed = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").reshape(N, W).astype(np.uint64, copy=False)


def unpack_codes(P: np.ndarray, L: int) -> np.ndarray:
    P = np.ascontiguousarray(P, dtype=np.uint64)
    bits = np.unpackbits(P.view(np.uint8).reshape(P.shape[0], -1), axis=1, bitorder="little")[:, :L]
    return np.where(bits == 1, 1, -1).astype(np.int8)


# ---------------------------------------------------------------- numba


@njit(cache=True, inline="always")
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


@njit(cache=True, parallel=True)
def _hamming_matrix_nb(Q, G):
    nq, W = Q.shape
    ng = G.shape[0]
    out = np.empty((nq, ng), dtype=np.int32)
    for i in prange(nq):
        for j in range(ng):
            s = 0
            for w in range(W):
                s += _popcount64(Q[i, w] ^ G[j, w])
            out[i, j] = s
    return out


@njit(cache=True)
def _stable_rank_nb(dist_row, L):
    # counting sort: distances lie in [0, L], ties keep gallery order
    counts = np.zeros(L + 2, dtype=np.int64)
    for d in dist_row:
        counts[d + 1] += 1
    for k in range(1, L + 2):
        counts[k] += counts[k - 1]
    order = np.empty(dist_row.shape[0], dtype=np.int64)
    for j in range(dist_row.shape[0]):
        d = dist_row[j]
        order[counts[d]] = j
        counts[d] += 1
    return order


@njit(cache=True, parallel=True)
def _ranked_metrics_nb(D, R, L, grid):
    nq, ng = D.shape
    P = grid.shape[0]
    ap = np.zeros(nq)
    prec = np.full((nq, P), np.nan)
    nrel = np.zeros(nq, dtype=np.int64)
    for i in prange(nq):
        order = _stable_rank_nb(D[i], L)
        total = 0
        for j in range(ng):
            if R[i, j]:
                total += 1
        nrel[i] = total
        if total == 0:
            continue
        hits = 0
        acc = 0.0
        p = 0
        for k in range(ng):
            if R[i, order[k]]:
                hits += 1
                acc += hits / (k + 1)
                while p < P and hits / total >= grid[p]:
                    prec[i, p] = hits / (k + 1)
                    p += 1
        ap[i] = acc / total
    return ap, prec, nrel


# ---------------------------------------------------------------- numpy


def _hamming_matrix_np(Q, G, chunk=256):
    out = np.empty((Q.shape[0], G.shape[0]), dtype=np.int32)
    for s in range(0, Q.shape[0], chunk):
        x = np.bitwise_xor(Q[s : s + chunk, None, :], G[None, :, :])
        out[s : s + chunk] = np.bitwise_count(x).sum(axis=2, dtype=np.int32)
    return out


def _stable_rank_np(D):
    return np.argsort(D, axis=1, kind="stable")


def _ranked_metrics_np(D, R, L, grid):
    nq, ng = D.shape
    order = _stable_rank_np(D)
    rel = np.take_along_axis(R, order, axis=1).astype(np.int64)
    hits = np.cumsum(rel, axis=1)
    nrel = hits[:, -1] if ng else np.zeros(nq, dtype=np.int64)
    depth = np.arange(1, ng + 1)
    prec_at = hits / depth
    ap = np.zeros(nq)
    prec = np.full((nq, grid.shape[0]), np.nan)
    for i in np.flatnonzero(nrel):
        mask = rel[i] == 1
        # sequential accumulation to mirror the compiled kernel's rounding
        ap[i] = np.add.accumulate(prec_at[i][mask])[-1] / nrel[i]
        recall = hits[i] / nrel[i]
        pos = np.flatnonzero(mask)
        # first relevant position whose recall reaches each grid level
        first = np.searchsorted(recall[pos], grid, side="left")
        prec[i] = prec_at[i][pos[first]]
    return ap, prec, nrel


# ---------------------------------------------------------------- dispatch


def hamming_matrix(Q: np.ndarray, G: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    Q = np.ascontiguousarray(Q, dtype=np.uint64)
    G = np.ascontiguousarray(G, dtype=np.uint64)
    if _pick(use_numba):
        return _hamming_matrix_nb(Q, G)
    return _hamming_matrix_np(Q, G)


def ranked_metrics(D: np.ndarray, R: np.ndarray, L: int, grid: np.ndarray, use_numba: bool | None = None):
    """Per-query AP, precision at each recall level (NaN when the query has
    no relevant item) and relevant counts, ranking by ascending distance
    with ties by gallery index."""
    D = np.ascontiguousarray(D, dtype=np.int64)
    R = np.ascontiguousarray(R, dtype=np.bool_)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if _pick(use_numba):
        return _ranked_metrics_nb(D, R, int(L), grid)
    return _ranked_metrics_np(D, R, int(L), grid)


def stable_rank(dist_row: np.ndarray, L: int, use_numba: bool | None = None) -> np.ndarray:
    dist_row = np.ascontiguousarray(dist_row, dtype=np.int64)
    if _pick(use_numba):
        return _stable_rank_nb(dist_row, int(L))
    return _stable_rank_np(dist_row[None, :])[0]


def _pick(use_numba):
    if use_numba is None:
        return _accel.USE_NUMBA
    return bool(use_numba) and _accel.HAVE_NUMBA
