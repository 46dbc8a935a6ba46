"""Full teacher -> student -> evaluation runs, five-fold cross-validation and
alpha/beta sweeps."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .data import Dataset, SplitSpec, split_five_fold
from .errors import InputError, XMHashError
from .retrieval import EvalReport, evaluate
from .student import StudentState, train_student
from .teacher import TeacherState, train_teacher

log = logging.getLogger("xmhash.experiments")

SWEEP_VALUES = tuple(float(v) for v in np.arange(1, 11) / 10)


@dataclass
class PipelineResult:
    teacher: TeacherState
    student: StudentState
    report: EvalReport


def run_pipeline(dataset: Dataset, split: SplitSpec, config: RunConfig, echo: dict | None = None) -> PipelineResult:
    teacher = train_teacher(dataset, split, config)
    student = train_student(dataset, split, teacher, config)
    report = evaluate(teacher.image_params, student.text_params, dataset, split, config={**config.to_dict(), **(echo or {})})
    return PipelineResult(teacher, student, report)


class FoldError(XMHashError):
    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold} failed: {cause}")
        self.fold = fold
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        self.category = getattr(cause, "category", "error")

    def __reduce__(self):
        return (FoldError, (self.fold, self.cause))


@dataclass
class CrossValResult:
    reports: list[EvalReport]
    splits: list[SplitSpec]

    def summary(self) -> dict:
        i2t = [r.map_i2t for r in self.reports]
        t2i = [r.map_t2i for r in self.reports]
        return {
            "folds": [
                {"fold": k, "map_i2t": a, "map_t2i": b, "n_query": len(s.query), "n_train": len(s.train), "n_gallery": len(s.gallery)}
                for k, (a, b, s) in enumerate(zip(i2t, t2i, self.splits))
            ],
            "mean_map_i2t": float(np.mean(i2t)),
            "mean_map_t2i": float(np.mean(t2i)),
        }


def _fold_job(args):
    dataset, base_split, config, fold, split_seed = args
    split = split_five_fold(dataset, base_split, fold, split_seed)
    try:
        result = run_pipeline(dataset, split, config.replace(seed=config.seed + fold), {"fold": fold})
    except XMHashError as exc:
        raise FoldError(fold, exc) from exc
    return split, result.report


def cross_validate(dataset: Dataset, base_split: SplitSpec, config: RunConfig, workers: int = 1) -> CrossValResult:
    """Each fold trains with seed ``config.seed + fold``; the fold assignment
    itself uses the base split's seed."""
    jobs = [(dataset, base_split, config, k, base_split.seed) for k in range(5)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_fold_job, jobs))
    else:
        out = []
        for job in jobs:
            out.append(_fold_job(job))
            log.info("fold %d: map_i2t=%.4f map_t2i=%.4f", job[3], out[-1][1].map_i2t, out[-1][1].map_t2i)
    return CrossValResult([r for _, r in out], [s for s, _ in out])


@dataclass
class SweepRow:
    alpha: float
    beta: float
    map_i2t: float | None
    map_t2i: float | None
    error: str | None = None


def sweep_grid(values=SWEEP_VALUES, grid_mode: str = "tied") -> list[tuple[float, float]]:
    if grid_mode == "tied":
        points = [(v, v) for v in values]
    elif grid_mode == "independent":
        points = [(a, b) for a in values for b in values]
    else:
        raise InputError(f"grid mode must be tied or independent, got {grid_mode!r}")
    return sorted(points)


def _sweep_job(args):
    dataset, split, config, index, alpha, beta = args
    try:
        cfg = config.replace(alpha=alpha, beta=beta, seed=config.seed + index)
        rep = run_pipeline(dataset, split, cfg).report
        return SweepRow(alpha, beta, rep.map_i2t, rep.map_t2i)
    except XMHashError as exc:
        return SweepRow(alpha, beta, None, None, f"{type(exc).__name__}: {exc}")


def sweep(
    dataset: Dataset,
    split: SplitSpec,
    config: RunConfig,
    values=SWEEP_VALUES,
    grid_mode: str = "tied",
    workers: int = 1,
) -> list[SweepRow]:
    """Rows sorted by alpha then beta; a failing point is recorded with its
    error and the sweep carries on."""
    jobs = [(dataset, split, config, k, a, b) for k, (a, b) in enumerate(sweep_grid(values, grid_mode))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    return sorted(rows, key=lambda r: (r.alpha, r.beta))
