"""Supervised training loop with early stopping, applied to all three agents.

Batches group same-length sequences where possible (sorted by length before
chunking); the validation metric for early stopping is classification error,
the quantity the evaluation reports."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

from .agents import (
    GuesserModel,
    OracleModel,
    QGenModel,
    QgenMode,
    flatten_dialogue,
    oracle_samples,
)
from .core import GameRecord
from .diff import Adam, AdamConfig


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 15
    batch_size: int = 64
    patience: int = 3
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)
    # optional shortcut for overfitting runs: stop once train error is this low
    stop_at_train_error: Optional[float] = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_err: float
    valid_err: float


@dataclass
class TrainResult:
    best_epoch: int
    best_valid_err: float
    log: List[EpochMetrics]
    best_values: Dict[str, np.ndarray]

    def render_log(self) -> str:
        lines = ["epoch\ttrain_err\tvalid_err"]
        for m in self.log:
            lines.append(f"{m.epoch}\t{m.train_err:.4f}\t{m.valid_err:.4f}")
        return "\n".join(lines) + "\n"


class Task:
    """Adapter binding a model to its sample unit (question, game, or token)."""

    kind: str

    def batches(self, games: Sequence[GameRecord], batch_size: int, rng: Optional[np.random.Generator]):
        raise NotImplementedError

    def loss(self, batch):
        raise NotImplementedError

    def errors(self, batch) -> Tuple[int, int]:
        raise NotImplementedError

    @property
    def params(self):
        return self.model.params


def _chunks(items: list, size: int, rng: Optional[np.random.Generator], sort_key=None):
    if rng is not None:
        order = rng.permutation(len(items))
        logger.debug("shuffle order: %s", order.tolist())
        items = [items[i] for i in order]
    if sort_key is not None:
        items = sorted(items, key=sort_key)
    batches = [items[i : i + size] for i in range(0, len(items), size)]
    if rng is not None:
        for i in rng.permutation(len(batches)):
            yield batches[i]
    else:
        yield from batches


class OracleTask(Task):
    kind = "oracle"

    def __init__(self, model: OracleModel):
        self.model = model

    def batches(self, games, batch_size, rng=None):
        samples = oracle_samples(games)
        key = lambda s: len(self.model.vocab.encode(s[0].question))
        for chunk in _chunks(samples, batch_size, rng, sort_key=key):
            yield self.model.make_batch(chunk)

    def loss(self, batch):
        return self.model.loss(batch)

    def errors(self, batch):
        return self.model.errors(batch)


class GuesserTask(Task):
    kind = "guesser"

    def __init__(self, model: GuesserModel):
        self.model = model

    def batches(self, games, batch_size, rng=None):
        key = lambda g: len(flatten_dialogue(g.qas, self.model.vocab))
        yield from _chunks(list(games), batch_size, rng, sort_key=key)

    def loss(self, batch):
        return self.model.batch_loss(batch)

    def errors(self, batch):
        return self.model.batch_errors(batch)


class QGenTask(Task):
    kind = "qgen"

    def __init__(self, model: QGenModel, mode: QgenMode = QgenMode.GT, oracle: Optional[OracleModel] = None):
        if mode is QgenMode.ORACLE and oracle is None:
            raise ValueError("oracle-answer conditioning requires an oracle checkpoint")
        self.model = model
        self.mode = mode
        self.oracle = oracle

    def batches(self, games, batch_size, rng=None):
        games = [g for g in games if g.qas]
        key = lambda g: sum(len(self.model.vocab.encode(qa.question)) + 1 for qa in g.qas)
        yield from _chunks(games, batch_size, rng, sort_key=key)

    def loss(self, batch):
        return self.model.batch_loss(batch, self.mode, self.oracle)

    def errors(self, batch):
        return self.model.batch_errors(batch, self.mode, self.oracle)


def evaluate(task: Task, games: Sequence[GameRecord], batch_size: int = 64) -> float:
    """Fraction of argmax mispredictions over the task's sample units."""
    if not games:
        raise ValueError("empty evaluation split")
    wrong = 0
    total = 0
    for batch in task.batches(games, batch_size, rng=None):
        w, n = task.errors(batch)
        wrong += w
        total += n
    if total == 0:
        raise ValueError("evaluation split has no samples")
    return wrong / total


def train(
    task: Task,
    train_games: Sequence[GameRecord],
    valid_games: Sequence[GameRecord],
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Adam + early stopping on validation error; returns the best-epoch
    parameter snapshot and the per-epoch metric log."""
    if not train_games:
        raise ValueError("empty training split")
    if not valid_games:
        raise ValueError("empty validation split")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(task.params, config.adam)
    log: List[EpochMetrics] = []
    best_valid = float("inf")
    best_epoch = 0
    best_values = task.params.copy_values()
    epochs_since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        for batch in task.batches(train_games, config.batch_size, rng=rng):
            task.params.zero_grad()
            task.loss(batch).backward()
            optimizer.step()
        train_err = evaluate(task, train_games, config.batch_size)
        valid_err = evaluate(task, valid_games, config.batch_size)
        log.append(EpochMetrics(epoch=epoch, train_err=train_err, valid_err=valid_err))
        if valid_err < best_valid:
            best_valid = valid_err
            best_epoch = epoch
            best_values = task.params.copy_values()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        if config.stop_at_train_error is not None and train_err <= config.stop_at_train_error:
            break
        if epochs_since_best > config.patience:
            break
    task.params.load_values(best_values)
    return TrainResult(
        best_epoch=best_epoch, best_valid_err=best_valid, log=log, best_values=best_values
    )
