"""Clause evaluation engines and class-sum voting.

Four engines compute identical clause outputs with different amounts of work:

* ``baseline``   integer include/literal arrays, every literal visited
* ``early-exit`` integer arrays, stop at the first included literal that is 0
* ``bitwise``    32 literals per word, ``(~actions | literals) == 0xFFFFFFFF``
* ``bitwise-ee`` word-wise check with a stop at the first non-all-ones word

Integer engines detect empty clauses while scanning; bitwise engines use the
model's stored nonempty flags.  Empty clauses output 0 at inference.
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit, prange

from .core import (
    ActionModel,
    BoolDataset,
    PackedBits,
    PermutationMismatchError,
    ShapeError,
    check_compatible,
    clause_votes,
    pack_rows,
    padding_mask,
    unpack_rows,
)

warnings.filterwarnings("ignore", message="The TBB threading layer")


class EngineKind(str, enum.Enum):
    BASELINE = "baseline"
    EARLY_EXIT = "early-exit"
    BITWISE = "bitwise"
    BITWISE_EE = "bitwise-ee"

    @property
    def is_bitwise(self) -> bool:
        return self in (EngineKind.BITWISE, EngineKind.BITWISE_EE)

    @classmethod
    def parse(cls, name) -> "EngineKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower().replace("_", "-"))
        except ValueError:
            names = ", ".join(e.value for e in cls)
            raise ValueError(f"unknown engine {name!r}; expected one of {names}") from None


ALL_ENGINES = tuple(EngineKind)


@dataclass(frozen=True)
class ClauseResult:
    output: int
    literals_examined: int = 0
    words_examined: int = 0
    early_exit: bool = False


@dataclass
class InferenceReport:
    predicted_class: int
    class_sums: np.ndarray
    literals_examined: int
    words_examined: int
    clauses_evaluated: int
    early_exits_taken: int
    wall_time_ns: Optional[int] = None


# Clause kernels return (output, units examined, early exit taken).


@njit(cache=True)
def _clause_baseline(actions, literals):
    n = actions.shape[0]
    output = 1
    nonempty = 0
    for k in range(n):
        if actions[k] == 1:
            nonempty = 1
            if literals[k] == 0:
                output = 0
    if nonempty == 0:
        output = 0
    return output, n, 0


@njit(cache=True)
def _clause_early_exit(actions, literals):
    n = actions.shape[0]
    nonempty = 0
    for k in range(n):
        if actions[k] == 1:
            nonempty = 1
            if literals[k] == 0:
                return 0, k + 1, 1
    return nonempty, n, 0


@njit(cache=True)
def _clause_bitwise(actions, literals, nonempty):
    n = actions.shape[0]
    output = 1
    for w in range(n):
        if (~actions[w] | literals[w]) != np.uint32(0xFFFFFFFF):
            output = 0
    if not nonempty:
        output = 0
    return output, n, 0


@njit(cache=True)
def _clause_bitwise_ee(actions, literals, nonempty):
    n = actions.shape[0]
    for w in range(n):
        if (~actions[w] | literals[w]) != np.uint32(0xFFFFFFFF):
            return 0, w + 1, 1
    if not nonempty:
        return 0, n, 0
    return 1, n, 0


@njit(cache=True)
def _argmax_first(sums):
    best = 0
    for c in range(1, sums.shape[0]):
        if sums[c] > sums[best]:
            best = c
    return best


def _integer_batch(clause_fn, actions, literals, votes, sums, preds, examined, exits, outputs, record):
    n_samples = literals.shape[0]
    n_classes, n_clauses = actions.shape[0], actions.shape[1]
    for i in prange(n_samples):
        row = literals[i]
        ex = 0
        ee = 0
        for c in range(n_classes):
            s = 0
            for j in range(n_clauses):
                out, units, exited = clause_fn(actions[c, j], row)
                s += votes[j] * out
                ex += units
                ee += exited
                if record:
                    outputs[i, c, j] = out
            sums[i, c] = s
        examined[i] = ex
        exits[i] = ee
        preds[i] = _argmax_first(sums[i])


def _bitwise_batch(clause_fn, actions, nonempty, literals, votes, sums, preds, examined, exits, outputs, record):
    n_samples = literals.shape[0]
    n_classes, n_clauses = actions.shape[0], actions.shape[1]
    for i in prange(n_samples):
        row = literals[i]
        ex = 0
        ee = 0
        for c in range(n_classes):
            s = 0
            for j in range(n_clauses):
                out, units, exited = clause_fn(actions[c, j], row, nonempty[c, j])
                s += votes[j] * out
                ex += units
                ee += exited
                if record:
                    outputs[i, c, j] = out
            sums[i, c] = s
        examined[i] = ex
        exits[i] = ee
        preds[i] = _argmax_first(sums[i])


_DRIVERS = {
    False: (njit(cache=True)(_integer_batch), njit(cache=True)(_bitwise_batch)),
    True: (njit(parallel=True)(_integer_batch), njit(parallel=True)(_bitwise_batch)),
}

_KERNELS = {
    EngineKind.BASELINE: _clause_baseline,
    EngineKind.EARLY_EXIT: _clause_early_exit,
    EngineKind.BITWISE: _clause_bitwise,
    EngineKind.BITWISE_EE: _clause_bitwise_ee,
}


def _as_int32(bits: Sequence[int]) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(bits, dtype=np.int32).reshape(-1))


def clause_baseline(actions: Sequence[int], literals: Sequence[int]) -> ClauseResult:
    a, x = _as_int32(actions), _as_int32(literals)
    if a.size != x.size:
        raise ShapeError(f"{a.size} actions but {x.size} literals")
    out, n, ee = _clause_baseline(a, x)
    return ClauseResult(int(out), literals_examined=int(n), early_exit=bool(ee))


def clause_early_exit(actions: Sequence[int], literals: Sequence[int]) -> ClauseResult:
    a, x = _as_int32(actions), _as_int32(literals)
    if a.size != x.size:
        raise ShapeError(f"{a.size} actions but {x.size} literals")
    out, n, ee = _clause_early_exit(a, x)
    return ClauseResult(int(out), literals_examined=int(n), early_exit=bool(ee))


def _check_rows(action_row: PackedBits, literal_row: PackedBits):
    if action_row.words.size != literal_row.words.size:
        raise ShapeError(
            f"{action_row.words.size} action words but {literal_row.words.size} literal words"
        )


def clause_bitwise(action_row: PackedBits, literal_row: PackedBits, nonempty: bool) -> ClauseResult:
    _check_rows(action_row, literal_row)
    out, n, ee = _clause_bitwise(action_row.words, literal_row.words, bool(nonempty))
    return ClauseResult(int(out), words_examined=int(n), early_exit=bool(ee))


def clause_bitwise_ee(action_row: PackedBits, literal_row: PackedBits, nonempty: bool) -> ClauseResult:
    _check_rows(action_row, literal_row)
    out, n, ee = _clause_bitwise_ee(action_row.words, literal_row.words, bool(nonempty))
    return ClauseResult(int(out), words_examined=int(n), early_exit=bool(ee))


def class_sum(clause_outputs: Sequence[int], polarity: Optional[np.ndarray] = None) -> int:
    outputs = np.asarray(clause_outputs, dtype=np.int64)
    votes = clause_votes(outputs.size) if polarity is None else np.asarray(polarity)
    if votes.size != outputs.size:
        raise ShapeError("polarity and clause outputs differ in length")
    return int(np.dot(votes.astype(np.int64), outputs))


@dataclass
class PreparedInputs:
    """Engine-ready arrays for one (model, literal matrix) pair.

    Building these (unpacking for the integer engines) is kept out of the
    timed region.
    """

    model: ActionModel
    packed: np.ndarray
    _unpacked: Optional[np.ndarray] = None

    @property
    def unpacked(self) -> np.ndarray:
        if self._unpacked is None:
            bits = unpack_rows(self.packed, self.model.shape.n_literals)
            self._unpacked = np.ascontiguousarray(bits, dtype=np.int32)
        return self._unpacked

    @property
    def n_samples(self) -> int:
        return self.packed.shape[0]


@dataclass
class RawRun:
    """Per-sample outputs of one engine pass."""

    class_sums: np.ndarray
    predictions: np.ndarray
    examined: np.ndarray
    early_exits: np.ndarray
    clause_outputs: Optional[np.ndarray]
    wall_ns: int


_COMPILED: set = set()


def _compile_once(driver, args, votes, sums, preds, examined, exits, outputs, record) -> None:
    # Drivers taking kernels as arguments cannot use numba's disk cache, so the
    # first call in a process compiles. Do that on an empty batch, untimed.
    key = (id(driver), args[0], record)
    if key in _COMPILED:
        return
    empty = args[:-1] + (args[-1][:0],)
    driver(*empty, votes, sums[:0], preds[:0], examined[:0], exits[:0], outputs[:0], record)
    _COMPILED.add(key)


def run_engine(
    prepared: PreparedInputs,
    engine: EngineKind,
    record_clauses: bool = False,
    parallel: bool = False,
) -> RawRun:
    """Evaluate every sample in ``prepared`` with one engine.

    Only the compiled kernel call is timed.
    """
    engine = EngineKind.parse(engine)
    model = prepared.model
    s = model.shape
    n = prepared.n_samples
    votes = clause_votes(s.clauses_per_class)
    sums = np.zeros((n, s.n_classes), dtype=np.int64)
    preds = np.zeros(n, dtype=np.int64)
    examined = np.zeros(n, dtype=np.int64)
    exits = np.zeros(n, dtype=np.int64)
    if record_clauses:
        outputs = np.zeros((n, s.n_classes, s.clauses_per_class), dtype=np.uint8)
    else:
        outputs = np.zeros((1, 1, 1), dtype=np.uint8)
    integer_driver, bitwise_driver = _DRIVERS[bool(parallel)]
    kernel = _KERNELS[engine]
    if engine.is_bitwise:
        args = (kernel, model.actions, model.nonempty, prepared.packed)
        driver = bitwise_driver
    else:
        args = (kernel, model.unpacked_actions, prepared.unpacked)
        driver = integer_driver
    _compile_once(driver, args, votes, sums, preds, examined, exits, outputs, record_clauses)
    start = time.perf_counter_ns()
    driver(*args, votes, sums, preds, examined, exits, outputs, record_clauses)
    wall = time.perf_counter_ns() - start
    return RawRun(sums, preds, examined, exits, outputs if record_clauses else None, wall)


_MODEL_LAYOUT = object()


def predict(
    model: ActionModel,
    literals: PackedBits,
    engine=EngineKind.BITWISE_EE,
    layout=_MODEL_LAYOUT,
) -> InferenceReport:
    """Classify one literal row.

    ``layout`` is the permutation fingerprint the row was emitted with; it
    defaults to the model's own layout (no check).
    """
    engine = EngineKind.parse(engine)
    if literals.logical_len != model.shape.n_literals:
        raise ShapeError(
            f"literal row has {literals.logical_len} bits, model expects {model.shape.n_literals}"
        )
    if layout is not _MODEL_LAYOUT and layout != model.fingerprint:
        raise PermutationMismatchError(
            f"literal layout {layout} does not match model permutation {model.fingerprint}"
        )
    prepared = PreparedInputs(model, literals.words.reshape(1, -1))
    run = run_engine(prepared, engine)
    return _report(model, engine, run, 0, run.wall_ns)


def _report(model, engine, run: RawRun, i: int, wall_ns) -> InferenceReport:
    s = model.shape
    units = int(run.examined[i])
    return InferenceReport(
        predicted_class=int(run.predictions[i]),
        class_sums=run.class_sums[i].copy(),
        literals_examined=0 if engine.is_bitwise else units,
        words_examined=units if engine.is_bitwise else 0,
        clauses_evaluated=s.n_classes * s.clauses_per_class,
        early_exits_taken=int(run.early_exits[i]),
        wall_time_ns=wall_ns,
    )


@dataclass
class BatchResult:
    engine: EngineKind
    reports: list
    accuracy: Optional[float]
    total_wall_ns: int

    @property
    def predictions(self) -> np.ndarray:
        return np.array([r.predicted_class for r in self.reports], dtype=np.int64)

    @property
    def class_sums(self) -> np.ndarray:
        if not self.reports:
            return np.zeros((0, 0), dtype=np.int64)
        return np.stack([r.class_sums for r in self.reports])

    def _clauses(self) -> int:
        return sum(r.clauses_evaluated for r in self.reports)

    @property
    def mean_words_examined_per_clause(self) -> Optional[float]:
        n = self._clauses()
        return sum(r.words_examined for r in self.reports) / n if n else None

    @property
    def mean_literals_examined_per_clause(self) -> Optional[float]:
        n = self._clauses()
        return sum(r.literals_examined for r in self.reports) / n if n else None

    @property
    def early_exit_rate(self) -> Optional[float]:
        n = self._clauses()
        return sum(r.early_exits_taken for r in self.reports) / n if n else None


def predict_batch(
    model: ActionModel,
    dataset: BoolDataset,
    engine=EngineKind.BITWISE_EE,
    parallel: bool = False,
    per_sample_timing: bool = False,
) -> BatchResult:
    """Classify every sample of ``dataset``.

    By default the whole dataset goes through one kernel call and only
    ``total_wall_ns`` is timed; ``per_sample_timing`` times each sample
    separately (including call overhead) and fills ``wall_time_ns``.
    """
    engine = EngineKind.parse(engine)
    check_compatible(model, dataset)
    dataset.check_labels(model.shape.n_classes)
    prepared = PreparedInputs(model, dataset.samples)
    if per_sample_timing:
        reports = []
        total = 0
        for i in range(dataset.n_samples):
            run = run_engine(PreparedInputs(model, dataset.samples[i : i + 1]), engine)
            reports.append(_report(model, engine, run, 0, run.wall_ns))
            total += run.wall_ns
    else:
        run = run_engine(prepared, engine, parallel=parallel)
        reports = [_report(model, engine, run, i, None) for i in range(dataset.n_samples)]
        total = run.wall_ns
    accuracy = None
    if dataset.n_samples:
        preds = np.array([r.predicted_class for r in reports])
        accuracy = float(np.mean(preds == dataset.labels))
    return BatchResult(engine, reports, accuracy, total)


def clause_outputs(model: ActionModel, literals: np.ndarray, engine) -> np.ndarray:
    """Clause outputs, shape ``(n_samples, n_classes, clauses_per_class)``.

    ``literals`` is a packed ``(n_samples, words_per_row)`` matrix in the
    model's layout.
    """
    literals = np.ascontiguousarray(literals, dtype=np.uint32)
    if literals.ndim == 1:
        literals = literals.reshape(1, -1)
    return run_engine(PreparedInputs(model, literals), engine, record_clauses=True).clause_outputs


def literal_padding_mask(model: ActionModel) -> np.ndarray:
    return padding_mask(model.shape.n_literals)


def clause_matrix(engine, actions: np.ndarray, literals: np.ndarray) -> np.ndarray:
    """Output of every (action row, literal row) pair, shape ``(n_literal_rows, n_action_rows)``.

    Both inputs are unpacked 0/1 matrices of any common width; the bitwise
    engines see them packed with zero padding.  Runs the same compiled
    drivers as inference, so it doubles as a differential-testing hook.
    """
    engine = EngineKind.parse(engine)
    a = np.asarray(actions, dtype=np.uint8)
    x = np.asarray(literals, dtype=np.uint8)
    if a.ndim != 2 or x.ndim != 2 or a.shape[1] != x.shape[1]:
        raise ShapeError("actions and literals must be 2-D with the same width")
    n_rows = a.shape[0]
    n = x.shape[0]
    votes = clause_votes(n_rows)
    sums = np.zeros((n, 1), dtype=np.int64)
    preds = np.zeros(n, dtype=np.int64)
    examined = np.zeros(n, dtype=np.int64)
    exits = np.zeros(n, dtype=np.int64)
    outputs = np.zeros((n, 1, n_rows), dtype=np.uint8)
    integer_driver, bitwise_driver = _DRIVERS[False]
    kernel = _KERNELS[engine]
    if engine.is_bitwise:
        nonempty = a.any(axis=1).reshape(1, -1)
        args = (kernel, pack_rows(a).reshape(1, n_rows, -1), nonempty, pack_rows(x))
        driver = bitwise_driver
    else:
        ai = np.ascontiguousarray(a.astype(np.int32).reshape(1, n_rows, -1))
        args = (kernel, ai, np.ascontiguousarray(x.astype(np.int32)))
        driver = integer_driver
    _compile_once(driver, args, votes, sums, preds, examined, exits, outputs, True)
    driver(*args, votes, sums, preds, examined, exits, outputs, True)
    return outputs[:, 0, :]
