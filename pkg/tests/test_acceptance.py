"""Acceptance gate. Each check prints one PASS/FAIL line; run with ``-s``
to see them."""

import math
import time

import numpy as np
import pytest

import xmhash.student as student_mod
from xmhash.config import RunConfig
from xmhash.data import Dataset, gen_synthetic, make_instance, similarity_from_labels, split_five_fold, split_query_gallery
from xmhash.nn import finite_diff_grad, forward, init_head, max_relative_error, mlp_forward
from xmhash.retrieval import evaluate, hamming_distance, hamming_matrix, map_score, random_ranking_map
from xmhash.student import student_grads, student_loss, train_label_anchored, train_student, unified_codes_student
from xmhash.teacher import nll_term, teacher_grads, teacher_loss, train_teacher, unified_codes

LN2 = math.log(2.0)


def verdict(n, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def _away_from_kinks(params, X, gap=1e-3):
    return all(np.min(np.abs(z)) >= gap for z in mlp_forward(params, X).pre[:-1])


def _grad_case(r):
    """Random (params, batch) with relu hidden layers; redrawn while any
    hidden pre-activation sits within 1e-3 of the relu kink."""
    while True:
        N, L = int(r.integers(1, 7)), int(r.integers(1, 9))
        d_v, d_t, d_y = (int(x) for x in r.integers(1, 17, 3))
        hidden = (int(r.integers(1, 17)),)
        pv, pt, py = (init_head(d, L, hidden, r) for d in (d_v, d_t, d_y))
        Xv, Xt = r.standard_normal((N, d_v)), r.standard_normal((N, d_t))
        Y = (r.random((N, d_y)) < 0.4).astype(float)
        Y[np.arange(N), r.integers(0, d_y, N)] = 1.0
        if all(_away_from_kinks(p, X) for p, X in ((pv, Xv), (pt, Xt), (py, Y))):
            return pv, pt, py, Xv, Xt, Y, float(r.uniform(0, 2)), float(r.uniform(0, 2))


def test_criterion_1_gradients():
    t0 = time.perf_counter()
    r = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        pv, pt, py, Xv, Xt, Y, alpha, beta = _grad_case(r)
        S = similarity_from_labels(Y, Y)
        B = unified_codes(forward(pv, Xv), forward(py, Y))
        _, gv, gy = teacher_grads(pv, py, Xv, Y, S, B, alpha)
        nv = len(pv.arrays())

        def tea(arrays):
            return teacher_loss(forward(pv.with_arrays(arrays[:nv]), Xv), forward(py.with_arrays(arrays[nv:]), Y), S, B, alpha)

        worst = max(worst, max_relative_error(gv + gy, finite_diff_grad(tea, pv.arrays() + py.arrays(), 1e-5)))

        Hv = forward(pv, Xv)
        Bs = unified_codes_student(Hv, forward(pt, Xt))
        _, gt = student_grads(pt, Xt, Hv, S, Bs, beta)

        def stu(arrays):
            return student_loss(Hv, forward(pt.with_arrays(arrays), Xt), S, Bs, beta)

        worst = max(worst, max_relative_error(gt, finite_diff_grad(stu, pt.arrays(), 1e-5)))
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 1e-4 and elapsed < 30, f"max rel. error {worst:.2e} over 20 cases x 2 objectives in {elapsed:.2f}s")


def _brute_map(Q, G, Yq, Yg):
    aps = []
    for q, yq in zip(Q.tolist(), Yq):
        d = [sum(a != b for a, b in zip(q, g)) for g in G.tolist()]
        order = sorted(range(len(d)), key=lambda j: (d[j], j))
        hits, acc = 0, 0.0
        for k, j in enumerate(order, start=1):
            if set(yq) & set(Yg[j]):
                hits += 1
                acc += hits / k
        aps.append(acc / hits if hits else 0.0)
    return sum(aps) / len(aps)


def test_criterion_2_map_oracle():
    t0 = time.perf_counter()
    r = np.random.default_rng(77)
    worst = 0.0
    for _ in range(50):
        L = int(r.choice([8, 16, 32, 64, 128]))
        nq, ng, K = int(r.integers(1, 11)), int(r.integers(1, 31)), int(r.integers(2, 6))
        Q = np.where(r.random((nq, L)) < 0.5, -1, 1).astype(np.int8)
        G = np.where(r.random((ng, L)) < 0.5, -1, 1).astype(np.int8)
        Yq = [set(r.choice(K, int(r.integers(1, 3)), replace=False).tolist()) for _ in range(nq)]
        Yg = [set(r.choice(K, int(r.integers(1, 3)), replace=False).tolist()) for _ in range(ng)]
        rel = lambda i, j: bool(Yq[i] & Yg[j])  # noqa: E731
        worst = max(worst, abs(map_score(Q, G, rel) - _brute_map(Q, G, Yq, Yg)))
    elapsed = time.perf_counter() - t0
    verdict(2, worst <= 1e-12 and elapsed < 10, f"max |MAP - brute force| {worst:.1e} over 50 configurations in {elapsed:.2f}s")


def test_criterion_3_hamming_suite():
    r = np.random.default_rng(3)
    failures = 0
    for _ in range(1000):
        L = int(r.choice([16, 64, 128]))
        a, b, c = (np.where(r.random(L) < 0.5, -1, 1).astype(np.int8) for _ in range(3))
        D = hamming_matrix(np.stack([a, b, c]), np.stack([a, b, c]))
        dot = {(i, j): (L - int(x.astype(int) @ y.astype(int))) // 2 for i, x in enumerate((a, b, c)) for j, y in enumerate((a, b, c))}
        ok = (
            (D >= 0).all()
            and (np.diag(D) == 0).all()
            and (D == D.T).all()
            and D[0, 2] <= D[0, 1] + D[1, 2]
            and all(D[i, j] == v for (i, j), v in dot.items())
            and hamming_distance(a, b) == D[0, 1]
        )
        failures += not ok
    verdict(3, failures == 0, f"{1000 - failures}/1000 triples satisfy all metric and packed-vs-dot checks")


def test_criterion_4_loss_analytics():
    checks = [abs(nll_term(0.0, s) - LN2) <= 1e-12 for s in (0, 1)]
    with np.errstate(all="raise"):
        v = nll_term(50.0, 1)
    checks.append(v < 1e-20)
    for N in (1, 2, 5, 17):
        Z = np.zeros((N, 16))
        Y = np.eye(3)[np.arange(N) % 3]
        checks.append(abs(teacher_loss(Z, Z, similarity_from_labels(Y, Y), None, 0.0) - N * N * LN2) <= 1e-9)
    verdict(4, all(checks), f"nll(0)=ln2, nll(50,1)={v:.3e}, zero-representation loss = N^2 ln2 for N in 1,2,5,17")


def _end_to_end():
    t0 = time.perf_counter()
    ds = gen_synthetic(K=3, per_label=100, d_v=32, d_t=32, noise_sigma=0.3, seed=1)
    split = split_query_gallery(ds, 50, 200, seed=1)
    cfg = RunConfig(code_length=16, epochs=100, alpha=1.0, beta=1.0, seed=1)
    teacher = train_teacher(ds, split, cfg)
    image_before = teacher.image_params.digest()
    student = train_student(ds, split, teacher, cfg)
    report = evaluate(teacher.image_params, student.text_params, ds, split)
    return {
        "teacher": teacher,
        "student": student,
        "report": report,
        "image_before": image_before,
        "elapsed": time.perf_counter() - t0,
        "dataset": ds,
        "split": split,
    }


@pytest.fixture(scope="module")
def e2e():
    return _end_to_end()


def test_criterion_5_end_to_end(e2e):
    rep, tea, stu = e2e["report"], e2e["teacher"], e2e["student"]
    ds, split = e2e["dataset"], e2e["split"]
    Yq, Yg = ds.label_matrix(split.query), ds.label_matrix(split.gallery)
    base = random_ranking_map(similarity_from_labels(Yq, Yg) > 0)
    gains = (rep.map_i2t - base, rep.map_t2i - base)
    ratios = (tea.loss_history[-1] / tea.loss_history[0], stu.loss_history[-1] / stu.loss_history[0])
    ok = min(gains) >= 0.3 and max(ratios) < 0.5 and e2e["elapsed"] < 120
    verdict(
        5,
        ok,
        f"MAP i2t={rep.map_i2t:.4f} t2i={rep.map_t2i:.4f} vs random {base:.4f}; "
        f"loss ratio teacher={ratios[0]:.3f} student={ratios[1]:.3f}; {e2e['elapsed']:.1f}s",
    )


def test_criterion_6_freeze_contracts(e2e, monkeypatch):
    image_ok = e2e["image_before"] == e2e["teacher"].image_params.digest() == e2e["student"].image_params.digest()

    # spy on every optimizer step: the label head (third created) must not move in stage 2
    steps = []
    stage = {"now": 1}

    class Spy(student_mod.HeadOptimizer):
        count = 0

        def __init__(self, *a, **k):
            super().__init__(*a, **k)
            self.slot = Spy.count
            Spy.count += 1

        def step(self, trace, grad):
            steps.append((stage["now"], self.slot))
            super().step(trace, grad)

    def hook(s, epoch, loss):
        # called after the epoch's steps, so the last stage-1 call opens stage 2
        if s == 2 or epoch == cfg.epochs - 1:
            stage["now"] = 2

    monkeypatch.setattr(student_mod, "HeadOptimizer", Spy)
    ds = gen_synthetic(K=3, per_label=20, d_v=16, d_t=16, noise_sigma=0.3, seed=1)
    split = split_query_gallery(ds, 10, 40, seed=1)
    cfg = RunConfig(code_length=16, epochs=10, hidden=(32,), seed=1)
    st = train_label_anchored(ds, split, cfg, on_epoch=hook)
    label_ok = st.label_params.digest() == st.frozen_label_digest and (2, 2) not in steps and (1, 2) in steps
    verdict(6, image_ok and label_ok, f"image head digest unchanged by student={image_ok}; label head frozen through stage 2={label_ok}")


def test_criterion_7_determinism(e2e):
    again = _end_to_end()
    a, b = e2e["report"], again["report"]
    same = (
        a.body() == b.body()
        and e2e["teacher"].loss_history == again["teacher"].loss_history
        and e2e["student"].loss_history == again["student"].loss_history
        and e2e["teacher"].image_params.digest() == again["teacher"].image_params.digest()
        and e2e["student"].text_params.digest() == again["student"].text_params.digest()
        and np.array_equal(e2e["teacher"].codes, again["teacher"].codes)
    )
    verdict(7, same, "second run of criterion 5 reproduces MAP, P-R points, loss histories and parameters bit-exactly")


def test_criterion_8_five_fold_bookkeeping():
    r = np.random.default_rng(8)
    bad = 0
    cases = 0
    for _ in range(40):
        n_train = 5 * int(r.integers(1, 30))
        n_query = int(r.integers(1, 20))
        N = n_train + n_query + int(r.integers(0, 30))
        ds = Dataset([make_instance(f"x{k}", [0.0], [0.0], [k % 2]) for k in range(N)], ["a", "b"], 1, 1)
        base = split_query_gallery(ds, n_query, n_train, seed=int(r.integers(0, 1000)))
        seed = int(r.integers(0, 1000))
        folds = [split_five_fold(ds, base, k, seed) for k in range(5)]
        qs = [q for f in folds for q in f.query]
        partition = len(qs) == len(set(qs)) == n_train and set(qs) == set(base.train)
        galleries = all(set(f.gallery) == set(ds.ids) - set(f.query) and len(f.gallery) == N - len(f.query) for f in folds)
        bad += not (partition and galleries)
        cases += 1
    verdict(8, bad == 0, f"{cases - bad}/{cases} random datasets: fold queries partition train, galleries = dataset minus query")
