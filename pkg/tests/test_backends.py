import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xmhash import _accel, _kernels
from xmhash.retrieval import DEFAULT_RECALL_GRID, pack_codes

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _random_case(seed, nq, ng, L):
    r = np.random.default_rng(seed)
    Q = np.where(r.random((nq, L)) < 0.5, -1, 1)
    G = np.where(r.random((ng, L)) < 0.5, -1, 1)
    R = r.random((nq, ng)) < 0.3
    return Q, G, R


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 40), st.sampled_from([1, 16, 63, 64, 65, 128, 200]))
def test_numba_and_numpy_kernels_agree(seed, nq, ng, L):
    Q, G, R = _random_case(seed, nq, ng, L)
    Pq, Pg = pack_codes(Q), pack_codes(G)
    D1 = _kernels.hamming_matrix(Pq, Pg, use_numba=True)
    D2 = _kernels.hamming_matrix(Pq, Pg, use_numba=False)
    assert np.array_equal(D1, D2)
    grid = np.asarray(DEFAULT_RECALL_GRID)
    ap1, p1, n1 = _kernels.ranked_metrics(D1, R, L, grid, use_numba=True)
    ap2, p2, n2 = _kernels.ranked_metrics(D2, R, L, grid, use_numba=False)
    assert np.array_equal(n1, n2)
    np.testing.assert_allclose(ap1, ap2, rtol=0, atol=1e-12)
    np.testing.assert_allclose(p1, p2, rtol=0, atol=1e-12)
    for i in range(nq):
        assert np.array_equal(_kernels.stable_rank(D1[i], L, True), _kernels.stable_rank(D1[i], L, False))


def test_env_flag_selects_numpy_backend():
    env = {**os.environ, "XMHASH_BACKEND": "numpy"}
    out = subprocess.run(
        [sys.executable, "-c", "from xmhash import _accel; print(_accel.backend_name())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
    env = {k: v for k, v in os.environ.items() if k not in ("XMHASH_BACKEND", "XMHASH_DISABLE_NUMBA")}
    env["XMHASH_DISABLE_NUMBA"] = "1"
    out = subprocess.run(
        [sys.executable, "-c", "from xmhash import _accel; print(_accel.backend_name())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
