"""Pairwise-likelihood hashing objective shared by the teacher and student
stages.

For two modalities a, b with continuous codes H_a, H_b (rows are items),
the objective is

    sum_ij [softplus(phi_ij) - S_ij * phi_ij]
      + w * (sum_i |B_a[i] - H_a[i]|^2 + sum_j |B_b[j] - H_b[j]|^2)

with phi = 0.5 * H_a @ H_b.T. Its gradients are

    dH_a = 0.5 * (sigmoid(phi) - S) @ H_b + 2w (H_a - B_a)
    dH_b = 0.5 * (sigmoid(phi) - S).T @ H_a + 2w (H_b - B_b)
"""

from __future__ import annotations

import numpy as np

from .errors import InputError


def softplus(x):
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def pair_similarity(h_a, h_b) -> float:
    h_a, h_b = np.asarray(h_a, dtype=np.float64), np.asarray(h_b, dtype=np.float64)
    if h_a.shape != h_b.shape or h_a.ndim != 1:
        raise InputError(f"pair_similarity needs equal-length vectors, got {h_a.shape} and {h_b.shape}")
    return 0.5 * float(h_a @ h_b)


def nll_term(phi, s):
    """-(s*phi - log(1+e^phi)). Written as s*softplus(-phi) + (1-s)*softplus(phi)
    so that large |phi| loses no precision."""
    s_arr = np.asarray(s)
    if not np.all((s_arr == 0) | (s_arr == 1)):
        raise InputError("similarity entries must be 0 or 1")
    phi = np.asarray(phi, dtype=np.float64)
    out = np.where(s_arr == 1, softplus(-phi), softplus(phi))
    return float(out) if out.ndim == 0 else out


def quantization_term(b, h) -> float:
    b, h = np.asarray(b, dtype=np.float64), np.asarray(h, dtype=np.float64)
    if b.shape != h.shape:
        raise InputError(f"code/representation shapes differ: {b.shape} vs {h.shape}")
    if not np.all(np.abs(b) == 1):
        raise InputError("binary codes must have entries in {-1, +1}")
    d = b - h
    return float(np.sum(d * d))


def sign_pm1(x) -> np.ndarray:
    """Entrywise sign into {-1, +1} as int8, with sign(0) = +1."""
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise InputError("cannot binarize NaN entries")
    return np.where(x >= 0, 1, -1).astype(np.int8)


def unified_codes(H_a, H_b) -> np.ndarray:
    """sign(H_a + H_b) with ties going to +1."""
    H_a, H_b = np.asarray(H_a, dtype=np.float64), np.asarray(H_b, dtype=np.float64)
    if H_a.shape != H_b.shape:
        raise InputError(f"representation shapes differ: {H_a.shape} vs {H_b.shape}")
    return sign_pm1(H_a + H_b)


def _check_pairwise(H_a, H_b, S, mask):
    if H_a.ndim != 2 or H_b.ndim != 2 or H_a.shape[1] != H_b.shape[1]:
        raise InputError(f"representation shapes {H_a.shape} and {H_b.shape} are incompatible")
    if S.shape != (H_a.shape[0], H_b.shape[0]):
        raise InputError(f"similarity shape {S.shape} does not match ({H_a.shape[0]}, {H_b.shape[0]})")
    if mask is not None and mask.shape != S.shape:
        raise InputError("pair mask must match the similarity matrix")


def pairwise_objective(H_a, H_b, S, B_a=None, B_b=None, weight=0.0, mask=None, with_grads=True):
    """Loss (and gradients w.r.t. H_a, H_b) of the pairwise objective above.

    ``mask`` (0/1, same shape as S) drops pairs from the likelihood sum.
    With ``weight == 0`` the quantization terms are never evaluated and the
    codes may be None.
    """
    H_a = np.asarray(H_a, dtype=np.float64)
    H_b = np.asarray(H_b, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    _check_pairwise(H_a, H_b, S, mask)
    if weight < 0:
        raise InputError("tradeoff weight must be nonnegative")

    phi = 0.5 * (H_a @ H_b.T)
    # s*softplus(-phi) + (1-s)*softplus(phi) == softplus(phi) - s*phi, exact for s in {0,1}
    pair_loss = np.where(S > 0.5, softplus(-phi), softplus(phi))
    if mask is not None:
        pair_loss = pair_loss * mask
    loss = float(pair_loss.sum())

    if weight > 0:
        if B_a is None or B_b is None:
            raise InputError("codes are required when the quantization weight is positive")
        B_a = np.asarray(B_a, dtype=np.float64)
        B_b = np.asarray(B_b, dtype=np.float64)
        if B_a.shape != H_a.shape or B_b.shape != H_b.shape:
            raise InputError("code matrices must match representation shapes")
        Da, Db = H_a - B_a, H_b - B_b
        loss += weight * (float(np.sum(Da * Da)) + float(np.sum(Db * Db)))

    if not with_grads:
        return loss
    G = sigmoid(phi) - S
    if mask is not None:
        G = G * mask
    dH_a = 0.5 * (G @ H_b)
    dH_b = 0.5 * (G.T @ H_a)
    if weight > 0:
        dH_a += 2.0 * weight * Da
        dH_b += 2.0 * weight * Db
    return loss, dH_a, dH_b
