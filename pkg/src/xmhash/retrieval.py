"""Binarization, Hamming ranking and MAP / precision-recall evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .data import Dataset, SplitSpec, check_split, similarity_from_labels
from .errors import ArtifactIOError, InputError
from .hashing import sign_pm1
from .nn import EncoderParams, forward

DEFAULT_RECALL_GRID = tuple(np.arange(1, 10) / 10)

pack_codes = _kernels.pack_codes
unpack_codes = _kernels.unpack_codes


def binarize(H) -> np.ndarray:
    """Entrywise sign into int8 {-1, +1}; zero maps to +1."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise InputError(f"expected an (N, L) matrix, got shape {H.shape}")
    return sign_pm1(H)


def _check_codes(B, name="codes"):
    B = np.asarray(B)
    if not np.all((B == 1) | (B == -1)):
        raise InputError(f"{name} must contain only -1 and +1")
    return B


def hamming_distance(b1, b2) -> int:
    b1 = _check_codes(b1)
    b2 = _check_codes(b2)
    if b1.shape != b2.shape or b1.ndim != 1:
        raise InputError(f"code shapes differ: {b1.shape} vs {b2.shape}")
    L = b1.shape[0]
    return (L - int(np.dot(b1.astype(np.int64), b2.astype(np.int64)))) // 2


def hamming_matrix(Bq, Bg, use_numba: bool | None = None) -> np.ndarray:
    """All query-to-gallery distances via packed popcount."""
    Bq, Bg = np.atleast_2d(Bq), np.atleast_2d(Bg)
    if Bq.shape[1] != Bg.shape[1]:
        raise InputError(f"code lengths differ: {Bq.shape[1]} vs {Bg.shape[1]}")
    return _kernels.hamming_matrix(pack_codes(Bq), pack_codes(Bg), use_numba)


def rank_gallery(query_code, gallery, use_numba: bool | None = None) -> np.ndarray:
    """Gallery indices by ascending Hamming distance, ties by index."""
    query_code = np.asarray(query_code)
    gallery = np.atleast_2d(gallery)
    if query_code.shape != (gallery.shape[1],):
        raise InputError("query and gallery code lengths differ")
    d = hamming_matrix(query_code[None, :], gallery, use_numba)[0]
    return _kernels.stable_rank(d, gallery.shape[1], use_numba)


def average_precision(relevance: Sequence) -> float:
    rel = np.asarray(relevance).astype(bool)
    if rel.size == 0:
        raise InputError("relevance list is empty")
    hits = 0
    acc = 0.0
    for k, r in enumerate(rel, start=1):
        if r:
            hits += 1
            acc += hits / k
    return acc / hits if hits else 0.0


def _relevance_matrix(relevance, nq, ng) -> np.ndarray:
    if callable(relevance):
        R = np.array([[bool(relevance(i, j)) for j in range(ng)] for i in range(nq)], dtype=bool).reshape(nq, ng)
    else:
        R = np.asarray(relevance).astype(bool)
    if R.shape != (nq, ng):
        raise InputError(f"relevance shape {R.shape} != ({nq}, {ng})")
    return R


def map_score(query_codes, gallery_codes, relevance, use_numba: bool | None = None) -> float:
    """MAP over the full gallery ranking. ``relevance`` is an (nq, ng) 0/1
    matrix or a callable (query index, gallery index) -> bool."""
    Q, G = np.atleast_2d(query_codes), np.atleast_2d(gallery_codes)
    if Q.shape[0] == 0:
        raise InputError("query set is empty")
    R = _relevance_matrix(relevance, Q.shape[0], G.shape[0])
    D = hamming_matrix(Q, G, use_numba)
    ap, _, _ = _kernels.ranked_metrics(D, R, Q.shape[1], np.asarray(DEFAULT_RECALL_GRID), use_numba)
    return float(np.mean(ap))


@dataclass
class PRCurve:
    points: list[tuple[float, float]]
    skipped_queries: int


def _check_grid(recall_grid):
    grid = np.asarray(recall_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(grid > 1) or np.any(np.diff(grid) <= 0):
        raise InputError("recall grid must be strictly increasing within (0, 1]")
    return grid


def pr_curve(query_codes, gallery_codes, relevance, recall_grid=DEFAULT_RECALL_GRID, use_numba: bool | None = None) -> PRCurve:
    """Mean precision at the shallowest depth reaching each recall level;
    queries without any relevant gallery item are skipped and counted."""
    grid = _check_grid(recall_grid)
    Q, G = np.atleast_2d(query_codes), np.atleast_2d(gallery_codes)
    R = _relevance_matrix(relevance, Q.shape[0], G.shape[0])
    D = hamming_matrix(Q, G, use_numba)
    _, prec, nrel = _kernels.ranked_metrics(D, R, Q.shape[1], grid, use_numba)
    return _pr_from(prec, nrel, grid)


def _pr_from(prec, nrel, grid) -> PRCurve:
    keep = nrel > 0
    skipped = int((~keep).sum())
    if keep.any():
        mean = prec[keep].mean(axis=0)
    else:
        mean = np.full(grid.shape, np.nan)
    return PRCurve([(float(r), float(p)) for r, p in zip(grid, mean)], skipped)


def expected_random_ap(n_relevant: int, n_items: int) -> float:
    """Expected AP of a uniformly random ranking of n_items with n_relevant
    relevant: a relevant item at depth k sees on average
    (k-1)(R-1)/(n-1) other relevant items above it."""
    R, n = int(n_relevant), int(n_items)
    if R == 0:
        return 0.0
    if n == 1:
        return 1.0
    k = np.arange(1, n + 1)
    return float(np.mean((1.0 + (k - 1) * (R - 1) / (n - 1)) / k))


def random_ranking_map(relevance) -> float:
    """MAP a random-code retriever scores in expectation on this relevance
    matrix."""
    R = np.asarray(relevance).astype(bool)
    ng = R.shape[1]
    return float(np.mean([expected_random_ap(r, ng) for r in R.sum(axis=1)]))


# ---------------------------------------------------------------- end-to-end evaluation


@dataclass
class DirectionResult:
    direction: str
    map: float
    pr_points: list[tuple[float, float]]
    skipped_queries: int
    random_map: float


@dataclass
class EvalReport:
    map_i2t: float
    map_t2i: float
    pr_i2t: list[tuple[float, float]]
    pr_t2i: list[tuple[float, float]]
    code_length: int
    split: dict
    seed: int | None
    skipped_queries: dict = field(default_factory=dict)
    random_map: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    @property
    def pr_points(self):
        return {"i2t": self.pr_i2t, "t2i": self.pr_t2i}

    def body(self) -> dict:
        d = asdict(self)
        d.pop("timestamp")
        d["pr_i2t"] = [list(p) for p in self.pr_i2t]
        d["pr_t2i"] = [list(p) for p in self.pr_t2i]
        return d

    def to_dict(self) -> dict:
        return {**self.body(), "timestamp": self.timestamp}

    def write(self, out_dir: str | Path, stem: str = "report") -> list[Path]:
        out_dir = Path(out_dir)
        paths = [out_dir / f"{stem}.json", out_dir / f"{stem}_pr_i2t.csv", out_dir / f"{stem}_pr_t2i.csv"]
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            paths[0].write_text(json.dumps(self.to_dict(), indent=2) + "\n")
            for path, pts in zip(paths[1:], (self.pr_i2t, self.pr_t2i)):
                path.write_text("recall,precision\n" + "".join(f"{r!r},{p!r}\n" for r, p in pts))
        except OSError as exc:
            raise ArtifactIOError(f"cannot write report to {out_dir}: {exc}") from exc
        return paths


def evaluate_direction(
    image_head: EncoderParams,
    text_head: EncoderParams,
    dataset: Dataset,
    split: SplitSpec,
    direction: str,
    recall_grid=DEFAULT_RECALL_GRID,
    use_numba: bool | None = None,
) -> DirectionResult:
    if direction not in ("i2t", "t2i"):
        raise InputError(f"direction must be i2t or t2i, got {direction!r}")
    if image_head.output_dim != text_head.output_dim:
        raise InputError(f"heads disagree on code length: {image_head.output_dim} vs {text_head.output_dim}")
    check_split(dataset, split)
    grid = _check_grid(recall_grid)
    if direction == "i2t":
        Bq = binarize(forward(image_head, dataset.image_matrix(split.query)))
        Bg = binarize(forward(text_head, dataset.text_matrix(split.gallery)))
    else:
        Bq = binarize(forward(text_head, dataset.text_matrix(split.query)))
        Bg = binarize(forward(image_head, dataset.image_matrix(split.gallery)))
    R = similarity_from_labels(dataset.label_matrix(split.query), dataset.label_matrix(split.gallery)) > 0
    D = hamming_matrix(Bq, Bg, use_numba)
    ap, prec, nrel = _kernels.ranked_metrics(D, R, Bq.shape[1], grid, use_numba)
    pr = _pr_from(prec, nrel, grid)
    return DirectionResult(direction, float(np.mean(ap)), pr.points, pr.skipped_queries, random_ranking_map(R))


def evaluate(
    image_head: EncoderParams,
    text_head: EncoderParams,
    dataset: Dataset,
    split: SplitSpec,
    recall_grid=DEFAULT_RECALL_GRID,
    config: dict | None = None,
    use_numba: bool | None = None,
) -> EvalReport:
    res = {d: evaluate_direction(image_head, text_head, dataset, split, d, recall_grid, use_numba) for d in ("i2t", "t2i")}
    return EvalReport(
        map_i2t=res["i2t"].map,
        map_t2i=res["t2i"].map,
        pr_i2t=res["i2t"].pr_points,
        pr_t2i=res["t2i"].pr_points,
        code_length=image_head.output_dim,
        split=split.describe(),
        seed=split.seed,
        skipped_queries={d: r.skipped_queries for d, r in res.items()},
        random_map={d: r.random_map for d, r in res.items()},
        config=dict(config or {}),
    )
