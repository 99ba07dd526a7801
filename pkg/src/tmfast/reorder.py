"""Post-training literal reordering.

Literal positions are sorted by ``P(literal == 0) * P(include)`` in
descending order, so the literals most likely to falsify a clause are
checked first and early exit fires sooner.  The same permutation is applied
to every action row and to the emitted literals, which leaves every clause
output unchanged.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    ActionModel,
    BoolDataset,
    DataError,
    ShapeError,
    check_permutation,
    pack_rows,
    unpack_rows,
)


@dataclass(frozen=True, eq=False)
class ReorderStats:
    p_zero: np.ndarray
    p_include: np.ndarray

    def __post_init__(self):
        pz = np.asarray(self.p_zero, dtype=np.float64)
        pi = np.asarray(self.p_include, dtype=np.float64)
        if pz.shape != pi.shape or pz.ndim != 1:
            raise ShapeError("p_zero and p_include must be 1-D arrays of equal length")
        object.__setattr__(self, "p_zero", pz)
        object.__setattr__(self, "p_include", pi)

    @property
    def product(self) -> np.ndarray:
        return self.p_zero * self.p_include


@dataclass(frozen=True, eq=False)
class Permutation:
    """``order[p]`` is the original literal position placed at position ``p``."""

    order: np.ndarray
    stats: Optional[ReorderStats] = None

    def __len__(self):
        return self.order.size

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.order.size)
        return inv

    def to_json(self) -> str:
        doc = {"order": self.order.tolist()}
        if self.stats is not None:
            doc.update(
                p_zero=self.stats.p_zero.tolist(),
                p_include=self.stats.p_include.tolist(),
                product=self.stats.product.tolist(),
            )
        return json.dumps(doc)


def literal_zero_prob(calibration: BoolDataset) -> np.ndarray:
    """Fraction of calibration samples in which each literal is 0."""
    if calibration.permuted_with is not None:
        raise DataError("calibration data must be unpermuted")
    if calibration.n_samples == 0:
        raise DataError("calibration set is empty")
    ones = calibration.literal_bits().sum(axis=0, dtype=np.int64)
    return (calibration.n_samples - ones) / calibration.n_samples


def include_prob(model: ActionModel) -> np.ndarray:
    """Fraction of all clauses (pooled over classes) that include each literal."""
    if model.permutation is not None:
        raise DataError("model is already permuted")
    s = model.shape
    counts = model.unpacked_actions.sum(axis=(0, 1), dtype=np.int64)
    return counts / (s.n_classes * s.clauses_per_class)


def build_permutation(stats: ReorderStats) -> Permutation:
    # stable: equal products keep ascending original index
    order = np.argsort(-stats.product, kind="stable")
    return Permutation(order.astype(np.int64), stats)


def _order(perm: Union[Permutation, np.ndarray]) -> np.ndarray:
    return perm.order if isinstance(perm, Permutation) else np.asarray(perm)


def apply_permutation_model(model: ActionModel, perm: Union[Permutation, np.ndarray]) -> ActionModel:
    if model.permutation is not None:
        raise DataError("model is already permuted")
    order = check_permutation(_order(perm), model.shape.n_literals)
    bits = unpack_rows(model.actions, model.shape.n_literals)[..., order]
    return ActionModel(
        model.shape,
        pack_rows(bits),
        model.nonempty,
        order,
        model.thermometer,
        model.metadata,
    )


@dataclass
class ReorderResult:
    model: ActionModel
    permutation: Permutation
    overhead_ns: int


def reorder(model: ActionModel, calibration: BoolDataset) -> ReorderResult:
    """Statistics, permutation and model gather, with the elapsed time."""
    if calibration.n_bool_features != model.shape.n_bool_features:
        raise ShapeError("calibration data does not match the model's literal count")
    start = time.perf_counter_ns()
    stats = ReorderStats(literal_zero_prob(calibration), include_prob(model))
    perm = build_permutation(stats)
    reordered = apply_permutation_model(model, perm)
    return ReorderResult(reordered, perm, time.perf_counter_ns() - start)


def reorder_pipeline(model: ActionModel, calibration: BoolDataset):
    """Return ``(reordered model, permutation)``."""
    result = reorder(model, calibration)
    return result.model, result.permutation
