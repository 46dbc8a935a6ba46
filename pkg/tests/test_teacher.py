import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xmhash.config import RunConfig
from xmhash.data import gen_synthetic, similarity_from_labels, split_query_gallery
from xmhash.errors import InputError, NumericError
from xmhash.hashing import pairwise_objective, sigmoid
from xmhash.nn import finite_diff_grad, forward, init_head, max_relative_error
from xmhash.teacher import (
    nll_term,
    pair_similarity,
    quantization_term,
    teacher_grads,
    teacher_loss,
    train_teacher,
    unified_codes,
)

LN2 = math.log(2.0)
# log(1 + e^-50) and log(1 + e^-8), evaluated with mpmath at 40 digits
SOFTPLUS_NEG50 = 1.928749847963917782910704459191907815604e-22
SOFTPLUS_NEG8 = 0.0003354063728957688315739098560328689437753


def test_pair_similarity_examples():
    assert pair_similarity([1, 2], [3, -1]) == 0.5
    assert pair_similarity([1, 0], [0, 5]) == 0.0
    assert pair_similarity(np.ones(16), np.ones(16)) == 8.0
    with pytest.raises(InputError):
        pair_similarity([1, 2], [1, 2, 3])


def test_nll_term_examples():
    assert abs(nll_term(0.0, 1) - LN2) < 1e-12
    assert abs(nll_term(0.0, 0) - LN2) < 1e-12
    v = nll_term(50.0, 1)
    assert v < 1e-20 and math.isclose(v, SOFTPLUS_NEG50, rel_tol=1e-12)
    assert nll_term(-800.0, 0) == 0.0
    assert nll_term(800.0, 0) == pytest.approx(800.0)
    with pytest.raises(InputError):
        nll_term(0.0, 2)


@settings(max_examples=200, deadline=None)
@given(st.floats(-300, 300), st.floats(1e-3, 10))
def test_nll_term_monotone_and_nonnegative(phi, step):
    assert nll_term(phi, 1) >= 0 and nll_term(phi, 0) >= 0
    # strict monotonicity only where the value is not already below float resolution
    if nll_term(phi, 1) > 1e-300:
        assert nll_term(phi + step, 1) < nll_term(phi, 1)
    if nll_term(phi + step, 0) > 1e-300:
        assert nll_term(phi + step, 0) > nll_term(phi, 0)


def test_nll_matches_naive_formula_in_safe_range():
    for phi in np.linspace(-20, 20, 41):
        for s in (0, 1):
            naive = -(s * phi - math.log(1 + math.exp(phi)))
            assert math.isclose(nll_term(phi, s), naive, rel_tol=1e-9, abs_tol=1e-12)


def test_quantization_term_examples():
    h = np.array([1.0, -1.0, 1.0])
    assert quantization_term(np.sign(h), h) == 0.0
    assert quantization_term([1, -1], [0, 0]) == 2.0
    assert quantization_term([1], [0.5]) == 0.25
    with pytest.raises(InputError):
        quantization_term([0.5], [0.5])


def test_unified_codes_examples():
    assert unified_codes([[0.7, -0.2]], [[0.1, -0.5]]).tolist() == [[1, -1]]
    H = np.array([[0.3, -1.2, 4.0]])
    assert unified_codes(H, -H).tolist() == [[1, 1, 1]]
    assert unified_codes([[-3.0, 2.0]], [[-3.0, 2.0]]).tolist() == [[-1, 1]]
    with pytest.raises(InputError):
        unified_codes(np.zeros((1, 2)), np.zeros((2, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_unified_codes_scale_invariant(seed, c):
    r = np.random.default_rng(seed)
    A, B = r.standard_normal((4, 6)), r.standard_normal((4, 6))
    U = unified_codes(A, B)
    assert set(np.unique(U)) <= {-1, 1}
    np.testing.assert_array_equal(U, unified_codes(c * A, c * B))


def test_teacher_loss_closed_forms():
    Z = np.zeros((2, 4))
    S = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert abs(teacher_loss(Z, Z, S, None, 0.0) - 4 * LN2) < 1e-12
    one = np.ones((1, 16))
    val = teacher_loss(one, one, np.ones((1, 1)), one.astype(np.int8), 1.0)
    assert math.isclose(val, SOFTPLUS_NEG8, rel_tol=1e-9)
    assert round(val, 8) == 0.00033541


def test_teacher_loss_matches_elementwise_definition(rng):
    Hv, Hy = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    Y = rng.integers(0, 2, (4, 3)); Y[:, 0] = 1 - Y[:, 1] * Y[:, 2]
    S = similarity_from_labels(Y, Y)
    B = unified_codes(Hv, Hy)
    alpha = 0.7
    ref = sum(nll_term(pair_similarity(Hv[i], Hy[j]), int(S[i, j])) for i in range(4) for j in range(4))
    ref += alpha * sum(quantization_term(B[i], Hv[i]) + quantization_term(B[i], Hy[i]) for i in range(4))
    assert math.isclose(teacher_loss(Hv, Hy, S, B, alpha), ref, rel_tol=1e-12)


def test_alpha_zero_never_touches_codes():
    Z = np.zeros((3, 2))
    # codes of the wrong shape would raise if they were read
    assert teacher_loss(Z, Z, np.eye(3), np.zeros((7, 7)), 0.0) == pytest.approx(9 * LN2)


def test_gradient_stationary_point():
    # sigmoid(phi) == S and h == b -> zero gradient; S = 0.5 is fed directly
    # to the objective here, which accepts real-valued targets
    Hv = np.array([[1.0, 1.0]])
    Hy = np.array([[1.0, -1.0]])  # phi = 0 -> sigmoid = 0.5
    S = np.array([[0.5]])  # only used through sigmoid(phi) - S
    B = np.array([[1, 1]])
    _, gv, _ = pairwise_objective(Hv, Hy, S, B, np.array([[1, -1]]), 1.0)
    assert not gv.any()


def test_single_pair_gradient_closed_form():
    hv = np.array([[0.0, 0.0, 0.0]])
    hy = np.array([[1.0, -2.0, 0.5]])
    _, gv, _ = pairwise_objective(hv, hy, np.ones((1, 1)), None, None, 0.0)
    np.testing.assert_allclose(gv, -0.25 * hy, atol=1e-15)


def _teacher_case(seed, N=4, L=8, d_v=10, d_y=5, alpha=0.8):
    r = np.random.default_rng(seed)
    pv = init_head(d_v, L, hidden=(7,), rng=r)
    py = init_head(d_y, L, hidden=(6,), rng=r, hidden_activation="tanh")
    Xv = r.standard_normal((N, d_v))
    Yl = (r.random((N, d_y)) < 0.4).astype(float)
    Yl[np.arange(N), r.integers(0, d_y, N)] = 1.0
    S = similarity_from_labels(Yl, Yl)
    B = unified_codes(forward(pv, Xv), forward(py, Yl))
    return pv, py, Xv, Yl, S, B, alpha


def test_teacher_grads_match_finite_differences():
    pv, py, Xv, Yl, S, B, alpha = _teacher_case(0)
    _, gv, gy = teacher_grads(pv, py, Xv, Yl, S, B, alpha)
    nv = len(pv.arrays())

    def loss(arrays):
        return teacher_loss(forward(pv.with_arrays(arrays[:nv]), Xv), forward(py.with_arrays(arrays[nv:]), Yl), S, B, alpha)

    fd = finite_diff_grad(loss, pv.arrays() + py.arrays(), 1e-5)
    assert max_relative_error(gv + gy, fd) <= 1e-4


def test_teacher_loss_descends_along_negative_gradient(rng):
    for _ in range(10):
        Hv, Hy = rng.standard_normal((5, 6)), rng.standard_normal((5, 6))
        S = (rng.random((5, 5)) < 0.5).astype(float)
        B = unified_codes(Hv, Hy)
        loss, gv, gy = pairwise_objective(Hv, Hy, S, B, B, 0.5)
        step = 1e-4
        assert pairwise_objective(Hv - step * gv, Hy - step * gy, S, B, B, 0.5, with_grads=False) < loss


def test_sigmoid_stable():
    assert sigmoid(-1000.0) == 0.0 and sigmoid(1000.0) == 1.0
    assert math.isclose(float(sigmoid(0.3)), 1 / (1 + math.exp(-0.3)), rel_tol=1e-15)


def _small_run(**kw):
    ds = gen_synthetic(K=3, per_label=10, d_v=8, d_t=8, noise_sigma=0.0, seed=0)
    split = split_query_gallery(ds, 1, 29, seed=0)
    cfg = RunConfig(**{"code_length": 16, "epochs": 50, "hidden": (32,), "batch_size": 8, "seed": 3, **kw})
    return ds, split, cfg


def test_train_teacher_decreases_loss_and_is_deterministic():
    ds, split, cfg = _small_run()
    a = train_teacher(ds, split, cfg)
    b = train_teacher(ds, split, cfg)
    assert a.loss_history == b.loss_history and len(a.loss_history) == 50
    assert a.loss_history[-1] < a.loss_history[0]
    assert a.codes.shape == (29, 16) and set(np.unique(a.codes)) <= {-1, 1}
    assert a.image_params.digest() == b.image_params.digest()


def test_alpha_zero_history_is_pure_likelihood(monkeypatch):
    ds, split, cfg = _small_run(alpha=0.0, epochs=2)
    import xmhash.hashing as hashing

    calls = []
    real = hashing.pairwise_objective

    def spy(H_a, H_b, S, B_a=None, B_b=None, weight=0.0, *a, **k):
        calls.append(weight)
        return real(H_a, H_b, S, None, None, weight, *a, **k)

    monkeypatch.setattr("xmhash.teacher.pairwise_objective", spy)
    st_ = train_teacher(ds, split, cfg)
    assert calls and all(w == 0.0 for w in calls)
    assert all(np.isfinite(st_.loss_history))


def test_divergence_names_epoch():
    ds, split, cfg = _small_run(epochs=3, learning_rate=1e150)
    with pytest.raises(NumericError, match="epoch"):
        train_teacher(ds, split, cfg)
