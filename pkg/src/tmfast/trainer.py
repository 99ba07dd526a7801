"""Vanilla multiclass Tsetlin Machine trainer.

Each TA has ``2 * n_states`` states; states above ``n_states`` mean include.
Per training sample the target class gets Type I/II feedback pushing its
clause sum towards ``T`` and one random other class is pushed towards
``-T``.  Even clauses vote for their class, odd clauses against it.

Randomness comes from a single ``numpy.random.Generator`` (PCG64) seeded
from ``TrainerConfig.rng_seed``, so a fixed seed gives a byte-identical
model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .core import ActionModel, BoolDataset, DataError, ModelShape, ShapeError, pack_rows
from .engines import EngineKind, predict_batch

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.PCG64"


@dataclass(frozen=True)
class TrainerConfig:
    clauses_per_class: int
    T: int
    s: float
    epochs: int = 10
    n_states: int = 100
    rng_seed: int = 0
    boost_true_positive: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not self.s > 1:
            raise ValueError("s must be > 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.clauses_per_class < 1 or self.n_states < 1:
            raise ValueError("clauses_per_class and n_states must be positive")


@njit(cache=True)
def _geometric_skip(rng, log_q):
    # failures before the next success of a Bernoulli(1 - exp(log_q)) stream
    u = 1.0 - rng.random()
    return int(math.floor(math.log(u) / log_q))


@njit(cache=True)
def _update_class(rng, states, x, target, T, s, n_states, boost, outputs):
    n_clauses, n_lit = states.shape
    max_state = 2 * n_states
    total = 0
    for j in range(n_clauses):
        out = 1
        for k in range(n_lit):
            if states[j, k] > n_states and x[k] == 0:
                out = 0
                break
        outputs[j] = out
        if j % 2 == 0:
            total += out
        else:
            total -= out
    if total > T:
        total = T
    elif total < -T:
        total = -T
    if target == 1:
        p = (T - total) / (2.0 * T)
    else:
        p = (T + total) / (2.0 * T)

    inv_s = 1.0 / s
    log_q = math.log(1.0 - inv_s)
    for j in range(n_clauses):
        if rng.random() > p:
            continue
        positive = j % 2 == 0
        if positive == (target == 1):
            # Type I
            if outputs[j] == 0:
                # each literal independently with probability 1/s
                k = _geometric_skip(rng, log_q)
                while k < n_lit:
                    if states[j, k] > 1:
                        states[j, k] -= 1
                    k += 1 + _geometric_skip(rng, log_q)
            else:
                for k in range(n_lit):
                    if x[k] == 1:
                        if boost or rng.random() <= 1.0 - inv_s:
                            if states[j, k] < max_state:
                                states[j, k] += 1
                    elif rng.random() <= inv_s:
                        if states[j, k] > 1:
                            states[j, k] -= 1
        elif outputs[j] == 1:
            # Type II
            for k in range(n_lit):
                if x[k] == 0 and states[j, k] <= n_states:
                    states[j, k] += 1


@njit(cache=True)
def _train_epoch(rng, states, literals, labels, order, T, s, n_states, boost):
    n_classes = states.shape[0]
    outputs = np.zeros(states.shape[1], dtype=np.int32)
    for idx in order:
        x = literals[idx]
        y = labels[idx]
        _update_class(rng, states[y], x, 1, T, s, n_states, boost, outputs)
        if n_classes > 1:
            other = rng.integers(0, n_classes - 1)
            if other >= y:
                other += 1
            _update_class(rng, states[other], x, 0, T, s, n_states, boost, outputs)


def initial_states(n_classes: int, clauses: int, n_bool: int, n_states: int, rng) -> np.ndarray:
    """Each feature starts with exactly one of (x, not x) just inside include."""
    flip = rng.random((n_classes, clauses, n_bool)) <= 0.5
    pos = np.where(flip, n_states, n_states + 1)
    neg = np.where(flip, n_states + 1, n_states)
    return np.concatenate([pos, neg], axis=2).astype(np.int32)


def actions_from_states(states: np.ndarray, n_states: int) -> np.ndarray:
    return pack_rows(states > n_states)


def fit_states(
    data: BoolDataset,
    cfg: TrainerConfig,
    n_classes: Optional[int] = None,
    on_epoch: Optional[Callable[[int, np.ndarray], None]] = None,
) -> np.ndarray:
    """Train and return the raw TA states, shape ``(classes, clauses, n_literals)``."""
    if data.permuted_with is not None:
        raise DataError("training requires an unpermuted dataset")
    if data.n_samples == 0:
        raise DataError("cannot train on an empty dataset")
    if n_classes is None:
        n_classes = int(data.labels.max()) + 1
    data.check_labels(n_classes)
    rng = np.random.default_rng(cfg.rng_seed)
    states = initial_states(n_classes, cfg.clauses_per_class, data.n_bool_features, cfg.n_states, rng)
    literals = np.ascontiguousarray(data.literal_bits())
    labels = np.ascontiguousarray(data.labels)
    for epoch in range(cfg.epochs):
        order = rng.permutation(data.n_samples)
        _train_epoch(
            rng, states, literals, labels, order,
            int(cfg.T), float(cfg.s), int(cfg.n_states), bool(cfg.boost_true_positive),
        )
        log.info("epoch %d/%d done", epoch + 1, cfg.epochs)
        if on_epoch is not None:
            on_epoch(epoch, states)
    return states


def train(
    data: BoolDataset,
    cfg: TrainerConfig,
    n_classes: Optional[int] = None,
    thermometer=None,
    on_epoch: Optional[Callable[[int, ActionModel], None]] = None,
) -> ActionModel:
    """Train a model; ``on_epoch`` receives the intermediate model after each epoch."""
    if n_classes is None:
        if data.n_samples == 0:
            raise DataError("cannot train on an empty dataset")
        n_classes = int(data.labels.max()) + 1
    try:
        shape = ModelShape(data.n_bool_features, n_classes, cfg.clauses_per_class)
    except ShapeError as e:
        raise DataError(str(e)) from None
    meta = {"trainer": asdict(cfg), "rng": RNG_ALGORITHM}

    def to_model(states):
        actions = actions_from_states(states, cfg.n_states)
        return ActionModel(shape, actions, thermometer=thermometer, metadata=meta)

    hook = None
    if on_epoch is not None:
        def hook(epoch, states):
            on_epoch(epoch, to_model(states))

    return to_model(fit_states(data, cfg, n_classes, hook))


def evaluate(model: ActionModel, data: BoolDataset) -> Optional[float]:
    return predict_batch(model, data, EngineKind.BITWISE_EE).accuracy
