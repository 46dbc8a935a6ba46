"""Stage two: fit the text head to the frozen image space, plus the
label-anchored ablation where label codes supervise both image and text."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._train import HeadOptimizer, batches, epoch_guard, finish_epoch, new_head, pair_mask, train_ids
from .config import RunConfig
from .data import Dataset, SplitSpec, similarity_from_labels
from .errors import ConfigError, NumericError
from .hashing import pair_similarity, pairwise_objective, sign_pm1, unified_codes
from .nn import EncoderParams, forward, mlp_backward, mlp_forward
from .teacher import TeacherState

__all__ = [
    "StudentState",
    "LabelAnchoredState",
    "student_pair_similarity",
    "unified_codes_student",
    "student_loss",
    "student_grads",
    "train_student",
    "train_label_anchored",
]


@dataclass
class StudentState:
    text_params: EncoderParams
    image_params: EncoderParams
    codes: np.ndarray
    beta: float
    loss_history: list[float] = field(default_factory=list)
    teacher_digest: str = ""
    train_ids: tuple[str, ...] = ()
    config: RunConfig | None = None


student_pair_similarity = pair_similarity


def unified_codes_student(H_v_frozen, H_t) -> np.ndarray:
    return unified_codes(H_v_frozen, H_t)


def student_loss(H_v, H_t, S, B, beta: float, mask=None) -> float:
    """Reported loss includes beta * |B - H_v|^2 even though it is constant
    in the text parameters."""
    return pairwise_objective(H_v, H_t, S, B, B, beta, mask, with_grads=False)


def student_grads(text_params: EncoderParams, X_text, H_v, S, B, beta: float, mask=None):
    """(loss, text grads). No gradient is formed for the image head."""
    tt = mlp_forward(text_params, X_text)
    loss, _, gt = pairwise_objective(H_v, tt.output, S, B, B, beta, mask)
    grads, _ = mlp_backward(text_params, tt, gt)
    return loss, grads


def train_student(
    dataset: Dataset,
    split: SplitSpec,
    teacher: TeacherState,
    config: RunConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> StudentState:
    if teacher.code_length != config.code_length:
        raise ConfigError(f"teacher code length {teacher.code_length} != student code length {config.code_length}")
    ids = train_ids(dataset, split)
    if teacher.train_ids and tuple(teacher.train_ids) != ids:
        raise ConfigError("teacher was trained on a different train split")
    frozen = teacher.image_params
    digest = frozen.digest()

    Hv_all = forward(frozen, dataset.image_matrix(ids))
    Hv_all.setflags(write=False)
    Xt = dataset.text_matrix(ids)
    Y = dataset.label_matrix(ids)

    rng = np.random.default_rng(config.seed)
    text = HeadOptimizer(new_head(Xt.shape[1], config, rng), config.learning_rate)
    B = unified_codes_student(Hv_all, forward(text.params, Xt))

    history: list[float] = []
    for epoch in range(config.epochs):
        with epoch_guard("student", epoch):
            losses = []
            for idx in batches(len(ids), config.batch_size, rng):
                S = similarity_from_labels(Y[idx], Y[idx])
                Bb = B[idx]
                tt = mlp_forward(text.params, Xt[idx])
                loss, _, gt = pairwise_objective(Hv_all[idx], tt.output, S, Bb, Bb, config.beta, pair_mask(len(idx), config))
                if not np.isfinite(loss):
                    raise NumericError(f"student diverged at epoch {epoch}: non-finite batch loss")
                losses.append(loss)
                text.step(tt, gt)
            value = finish_epoch(history, losses, epoch, "student")
            if on_epoch:
                on_epoch(epoch, value)
            B = unified_codes_student(Hv_all, forward(text.params, Xt))

    return StudentState(text.params, frozen, B, config.beta, history, digest, ids, config)


@dataclass
class LabelAnchoredState:
    image_params: EncoderParams
    text_params: EncoderParams
    label_params: EncoderParams
    label_codes: np.ndarray
    stage1_history: list[float] = field(default_factory=list)
    stage2_history: list[float] = field(default_factory=list)
    train_ids: tuple[str, ...] = ()
    config: RunConfig | None = None
    frozen_label_digest: str = ""


def train_label_anchored(
    dataset: Dataset,
    split: SplitSpec,
    config: RunConfig,
    on_epoch: Callable[[int, int, float], None] | None = None,
) -> LabelAnchoredState:
    """Ablation: the label head is pulled toward image and text at once,
    then its codes supervise both other heads.

    Stage 1 trains all three heads simultaneously on
    obj(v, y) + obj(t, y) with alpha and codes sign(H_v + H_t + H_y).
    Stage 2 freezes the label head and fine-tunes image and text heads on
    obj(v, y) + obj(t, y) with beta and the fixed codes sign(H_y).
    """
    ids = train_ids(dataset, split)
    X = dataset.image_matrix(ids)
    Xt = dataset.text_matrix(ids)
    Xy = dataset.label_input_matrix(ids, config.label_mode)
    Y = dataset.label_matrix(ids)

    rng = np.random.default_rng(config.seed)
    image = HeadOptimizer(new_head(X.shape[1], config, rng), config.learning_rate)
    text = HeadOptimizer(new_head(Xt.shape[1], config, rng), config.learning_rate)
    label = HeadOptimizer(new_head(Xy.shape[1], config, rng), config.learning_rate)

    def joint_codes():
        return sign_pm1(forward(image.params, X) + forward(text.params, Xt) + forward(label.params, Xy))

    B = joint_codes()
    hist1: list[float] = []
    for epoch in range(config.epochs):
        with epoch_guard("label-anchored stage 1", epoch):
            losses = []
            for idx in batches(len(ids), config.batch_size, rng):
                S = similarity_from_labels(Y[idx], Y[idx])
                mask = pair_mask(len(idx), config)
                Bb = B[idx]
                tv = mlp_forward(image.params, X[idx])
                tt = mlp_forward(text.params, Xt[idx])
                ty = mlp_forward(label.params, Xy[idx])
                l1, gv, gy1 = pairwise_objective(tv.output, ty.output, S, Bb, Bb, config.alpha, mask)
                l2, gt, gy2 = pairwise_objective(tt.output, ty.output, S, Bb, Bb, config.alpha, mask)
                if not np.isfinite(l1 + l2):
                    raise NumericError(f"label-anchored stage 1 diverged at epoch {epoch}")
                losses.append(l1 + l2)
                image.step(tv, gv)
                text.step(tt, gt)
                label.step(ty, gy1 + gy2)
            value = finish_epoch(hist1, losses, epoch, "label-anchored stage 1")
            if on_epoch:
                on_epoch(1, epoch, value)
            B = joint_codes()

    frozen_label = label.params
    frozen_digest = frozen_label.digest()
    Hy_all = forward(frozen_label, Xy)
    Hy_all.setflags(write=False)
    By = sign_pm1(Hy_all)

    hist2: list[float] = []
    for epoch in range(config.epochs):
        with epoch_guard("label-anchored stage 2", epoch):
            losses = []
            for idx in batches(len(ids), config.batch_size, rng):
                S = similarity_from_labels(Y[idx], Y[idx])
                mask = pair_mask(len(idx), config)
                Bb = By[idx]
                tv = mlp_forward(image.params, X[idx])
                tt = mlp_forward(text.params, Xt[idx])
                l1, gv, _ = pairwise_objective(tv.output, Hy_all[idx], S, Bb, Bb, config.beta, mask)
                l2, gt, _ = pairwise_objective(tt.output, Hy_all[idx], S, Bb, Bb, config.beta, mask)
                if not np.isfinite(l1 + l2):
                    raise NumericError(f"label-anchored stage 2 diverged at epoch {epoch}")
                losses.append(l1 + l2)
                image.step(tv, gv)
                text.step(tt, gt)
            value = finish_epoch(hist2, losses, epoch, "label-anchored stage 2")
            if on_epoch:
                on_epoch(2, epoch, value)

    return LabelAnchoredState(image.params, text.params, frozen_label, By, hist1, hist2, ids, config, frozen_digest)
