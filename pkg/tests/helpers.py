"""Random model/dataset builders and a pure-numpy reference evaluator."""

from __future__ import annotations

import numpy as np

from tmfast.booleanize import emit_dataset
from tmfast.core import ActionModel, ModelShape, clause_votes, pack_rows

IRIS_SHAPE = ModelShape(48, 3, 16)
MNIST_SHAPE = ModelShape(784, 10, 100)

# Training setups shared by the acceptance and integration tests.
IRIS_BINS = 12
IRIS_CONFIG = dict(clauses_per_class=16, T=8, s=4.0, epochs=20)
IRIS_FLOOR = 0.90

MNIST_TRAIN, MNIST_TEST = 10_000, 2_000
MNIST_THRESHOLD = 75.0
MNIST_CONFIG = dict(clauses_per_class=100, T=10, s=8.0, epochs=20, boost_true_positive=True)
MNIST_FLOOR = 0.88

SEEDS = range(5)


def random_bools(rng, n_samples: int, n_bool: int, p_one: float = 0.5) -> np.ndarray:
    return (rng.random((n_samples, n_bool)) < p_one).astype(np.uint8)


def literal_matrix(bools: np.ndarray) -> np.ndarray:
    return np.concatenate([bools, 1 - bools], axis=-1).astype(np.uint8)


def random_model(
    rng,
    shape: ModelShape,
    p_include: float = 0.1,
    p_empty: float = 0.1,
    anchors: np.ndarray | None = None,
    p_anchor: float = 0.5,
) -> ActionModel:
    """Random action bits.

    A clause built from an anchor sample only includes literals that are 1 in
    it, so it fires on that sample; this keeps firing clauses common even at
    MNIST width, where a purely random clause almost never fires.
    """
    bits = (rng.random((shape.n_classes, shape.clauses_per_class, shape.n_literals)) < p_include)
    bits = bits.astype(np.uint8)
    if anchors is not None and len(anchors):
        lits = literal_matrix(anchors)
        pick = rng.random(bits.shape[:2]) < p_anchor
        which = rng.integers(0, len(lits), size=bits.shape[:2])
        bits = np.where(pick[..., None], bits & lits[which], bits)
    empty = rng.random(bits.shape[:2]) < p_empty
    bits[empty] = 0
    return ActionModel(shape, pack_rows(bits))


def random_dataset(rng, n_samples: int, n_bool: int, n_classes: int, p_one: float = 0.5):
    bools = random_bools(rng, n_samples, n_bool, p_one)
    labels = rng.integers(0, n_classes, size=n_samples)
    return emit_dataset(bools, labels)


def reference_clause_outputs(model: ActionModel, literal_bits: np.ndarray) -> np.ndarray:
    """(N, C, J) clause outputs straight from the definition."""
    a = model.unpacked_actions.astype(bool)
    x = literal_bits.astype(bool)
    violated = (a[None] & ~x[:, None, None, :]).any(axis=-1)
    return (~violated & a.any(axis=-1)[None]).astype(np.uint8)


def reference_predict(model: ActionModel, literal_bits: np.ndarray):
    outs = reference_clause_outputs(model, literal_bits).astype(np.int64)
    sums = outs @ clause_votes(model.shape.clauses_per_class).astype(np.int64)
    return sums, sums.argmax(axis=1)
