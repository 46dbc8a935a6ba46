"""Small helpers shared by the training loops."""

from __future__ import annotations

import logging
from contextlib import contextmanager

import numpy as np

from .config import RunConfig
from .data import Dataset, SplitSpec
from .errors import DataError, NumericError
from .nn import AdamState, EncoderParams, adam_step, init_head, mlp_backward

log = logging.getLogger("xmhash.train")


class HeadOptimizer:
    """An encoder head together with its Adam state."""

    def __init__(self, params: EncoderParams, lr: float):
        self.params = params
        self.lr = lr
        self.state = AdamState.zeros_like(params.arrays())

    def step(self, trace, output_grad):
        grads, _ = mlp_backward(self.params, trace, output_grad)
        arrays, self.state = adam_step(self.params.arrays(), grads, self.state, self.lr)
        self.params = self.params.with_arrays(arrays)


def new_head(in_dim: int, config: RunConfig, rng: np.random.Generator) -> EncoderParams:
    return init_head(
        in_dim,
        config.code_length,
        config.hidden,
        rng,
        hidden_activation=config.hidden_activation,
        output_activation=config.output_activation,
    )


def batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def pair_mask(size: int, config: RunConfig):
    if config.pair_scope == "full":
        return None
    return 1.0 - np.eye(size)


def train_ids(dataset: Dataset, split: SplitSpec) -> tuple[str, ...]:
    if not split.train:
        raise DataError("train set is empty")
    dataset.index_of(split.train)  # raises on unknown ids
    return tuple(split.train)


def finish_epoch(history: list, losses: list, epoch: int, stage: str) -> float:
    value = float(np.mean(losses))
    if not np.isfinite(value):
        raise NumericError(f"{stage} diverged at epoch {epoch}: loss is {value}")
    history.append(value)
    log.debug("%s epoch %d loss %.6g", stage, epoch, value)
    return value


@contextmanager
def epoch_guard(stage: str, epoch: int):
    """Re-raise numeric failures inside an epoch with the stage and epoch named."""
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            yield
    except NumericError as exc:
        if "diverged" in str(exc):
            raise
        raise NumericError(f"{stage} diverged at epoch {epoch}: {exc}") from exc
