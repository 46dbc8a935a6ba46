"""Stage one: align the image head and the label head in a shared Hamming
space."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._train import HeadOptimizer, batches, epoch_guard, finish_epoch, new_head, pair_mask, train_ids
from .config import RunConfig
from .data import Dataset, SplitSpec, similarity_from_labels
from .errors import NumericError
from .hashing import nll_term, pair_similarity, pairwise_objective, quantization_term, unified_codes
from .nn import EncoderParams, forward, mlp_backward, mlp_forward

__all__ = [
    "TeacherState",
    "pair_similarity",
    "nll_term",
    "quantization_term",
    "unified_codes",
    "teacher_loss",
    "teacher_grads",
    "train_teacher",
]


@dataclass
class TeacherState:
    image_params: EncoderParams
    label_params: EncoderParams
    codes: np.ndarray  # (N_train, L) int8 in {-1, +1}
    alpha: float
    code_length: int
    loss_history: list[float] = field(default_factory=list)
    train_ids: tuple[str, ...] = ()
    config: RunConfig | None = None


def teacher_loss(H_v, H_y, S, B, alpha: float, mask=None) -> float:
    """Pairwise likelihood over all (image i, label j) pairs plus alpha times
    the quantization gap of every image and label representation to its
    unified code."""
    return pairwise_objective(H_v, H_y, S, B, B, alpha, mask, with_grads=False)


def teacher_grads(
    image_params: EncoderParams,
    label_params: EncoderParams,
    X_image,
    X_label,
    S,
    B,
    alpha: float,
    mask=None,
):
    """Returns (loss, image grads, label grads) for one batch; grads are
    flat [W0, b0, ...] lists."""
    tv = mlp_forward(image_params, X_image)
    ty = mlp_forward(label_params, X_label)
    loss, gv, gy = pairwise_objective(tv.output, ty.output, S, B, B, alpha, mask)
    grads_v, _ = mlp_backward(image_params, tv, gv)
    grads_y, _ = mlp_backward(label_params, ty, gy)
    return loss, grads_v, grads_y


def train_teacher(
    dataset: Dataset,
    split: SplitSpec,
    config: RunConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TeacherState:
    """Mini-batch Adam on both heads. Within a batch the image head steps
    first, then the label head sees the updated image outputs. Unified codes
    are refreshed over the whole train set at the end of every epoch."""
    ids = train_ids(dataset, split)
    X = dataset.image_matrix(ids)
    Xy = dataset.label_input_matrix(ids, config.label_mode)
    Y = dataset.label_matrix(ids)

    rng = np.random.default_rng(config.seed)
    image = HeadOptimizer(new_head(X.shape[1], config, rng), config.learning_rate)
    label = HeadOptimizer(new_head(Xy.shape[1], config, rng), config.learning_rate)
    B = unified_codes(forward(image.params, X), forward(label.params, Xy))

    history: list[float] = []
    for epoch in range(config.epochs):
        with epoch_guard("teacher", epoch):
            losses = []
            for idx in batches(len(ids), config.batch_size, rng):
                S = similarity_from_labels(Y[idx], Y[idx])
                mask = pair_mask(len(idx), config)
                Bb = B[idx]
                tv = mlp_forward(image.params, X[idx])
                ty = mlp_forward(label.params, Xy[idx])
                loss, gv, _ = pairwise_objective(tv.output, ty.output, S, Bb, Bb, config.alpha, mask)
                if not np.isfinite(loss):
                    raise NumericError(f"teacher diverged at epoch {epoch}: non-finite batch loss")
                losses.append(loss)
                image.step(tv, gv)

                Hv = forward(image.params, X[idx])
                _, _, gy = pairwise_objective(Hv, ty.output, S, Bb, Bb, config.alpha, mask)
                label.step(ty, gy)
            value = finish_epoch(history, losses, epoch, "teacher")
            if on_epoch:
                on_epoch(epoch, value)
            B = unified_codes(forward(image.params, X), forward(label.params, Xy))

    return TeacherState(image.params, label.params, B, config.alpha, config.code_length, history, ids, config)

