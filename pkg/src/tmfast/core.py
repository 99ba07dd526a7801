"""Packed bit vectors and the model/dataset containers shared by every module.

Bit order is fixed: logical position ``p`` lives in word ``p // 32`` at bit
``p % 32`` (least-significant bit first).  Bits past ``logical_len`` are
padding and are always zero after packing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Optional, Sequence

import numpy as np

WORD_WIDTH = 32
ALL_ONES = np.uint32(0xFFFFFFFF)


class DataError(ValueError):
    """Bad input data or file contents (CLI exit code 2)."""


class FormatError(DataError):
    pass


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class ShapeError(DataError):
    pass


class PermutationMismatchError(DataError):
    """Literal layout of a dataset does not match the model's permutation."""


class InvariantError(RuntimeError):
    """An internal consistency check failed (CLI exit code 3)."""


def word_count(n_literals: int) -> int:
    if n_literals < 0:
        raise ValueError("n_literals must be non-negative")
    return -(-n_literals // WORD_WIDTH)


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack the last axis of a 0/1 array into little-endian uint32 words."""
    bits = np.asarray(bits)
    n = bits.shape[-1]
    n_words = word_count(n)
    pad = n_words * WORD_WIDTH - n
    if pad:
        widths = [(0, 0)] * (bits.ndim - 1) + [(0, pad)]
        bits = np.pad(bits, widths)
    packed = np.packbits(bits.astype(bool), axis=-1, bitorder="little")
    words = np.ascontiguousarray(packed).view("<u4")
    return words.astype(np.uint32, copy=False).reshape(bits.shape[:-1] + (n_words,))


def unpack_rows(words: np.ndarray, n_bits: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`; returns uint8 bits, padding dropped."""
    words = np.ascontiguousarray(words, dtype="<u4")
    raw = words.view(np.uint8).reshape(words.shape[:-1] + (words.shape[-1] * 4,))
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :n_bits]


def padding_mask(n_bits: int) -> np.ndarray:
    """Per-word mask with 1s on padding positions (all zeros if aligned)."""
    n_words = word_count(n_bits)
    mask = np.zeros(n_words, dtype=np.uint32)
    tail = n_bits % WORD_WIDTH
    if tail:
        mask[-1] = np.uint32((0xFFFFFFFF << tail) & 0xFFFFFFFF)
    return mask


@dataclass(frozen=True, eq=False)
class PackedBits:
    words: np.ndarray
    logical_len: int

    def __post_init__(self):
        words = np.ascontiguousarray(self.words, dtype=np.uint32)
        if words.ndim != 1 or words.size != word_count(self.logical_len):
            raise ShapeError(
                f"{words.size} words cannot hold exactly {self.logical_len} bits"
            )
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    def __eq__(self, other):
        if not isinstance(other, PackedBits):
            return NotImplemented
        return self.logical_len == other.logical_len and np.array_equal(
            self.words, other.words
        )

    def __len__(self):
        return self.logical_len

    def padding_is_zero(self) -> bool:
        return not np.any(self.words & padding_mask(self.logical_len))


def pack_bits(bits: Sequence[int], word_width: int = WORD_WIDTH) -> PackedBits:
    if word_width != WORD_WIDTH:
        raise ValueError("only 32-bit words are supported")
    arr = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if np.any(arr > 1):
        raise ValueError("bits must be 0 or 1")
    return PackedBits(pack_rows(arr), arr.size)


def unpack_bits(p: PackedBits) -> list[int]:
    return unpack_rows(p.words, p.logical_len).tolist()


def negate_extend(features: Sequence[int]) -> np.ndarray:
    """Append the complement of every feature: ``[x, 1 - x]``."""
    x = np.asarray(features, dtype=np.uint8)
    return np.concatenate([x, 1 - x], axis=-1)


def clause_votes(clauses_per_class: int) -> np.ndarray:
    """Clause polarity: +1 for even clause indices, -1 for odd ones."""
    votes = np.ones(clauses_per_class, dtype=np.int32)
    votes[1::2] = -1
    return votes


def vote(j: int) -> int:
    return -1 if j & 1 else 1


def permutation_fingerprint(order: Optional[np.ndarray]) -> Optional[int]:
    """64-bit hash identifying a literal permutation (``None`` for no permutation)."""
    if order is None:
        return None
    digest = hashlib.blake2b(
        np.asarray(order, dtype="<u4").tobytes(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def check_permutation(order: np.ndarray, n: int) -> np.ndarray:
    order = np.asarray(order)
    if order.ndim != 1 or order.size != n:
        raise ShapeError(f"permutation has length {order.size}, expected {n}")
    if n and (order.min() < 0 or order.max() >= n):
        raise ShapeError("permutation index out of range")
    if np.unique(order).size != n:
        raise ShapeError("permutation is not a bijection")
    return order.astype(np.int64)


@dataclass(frozen=True)
class ModelShape:
    n_bool_features: int
    n_classes: int
    clauses_per_class: int
    word_width: int = WORD_WIDTH

    def __post_init__(self):
        if self.word_width != WORD_WIDTH:
            raise ShapeError("word_width must be 32")
        if self.n_bool_features < 0 or self.n_classes < 1 or self.clauses_per_class < 1:
            raise ShapeError(f"invalid model shape {self}")

    @property
    def n_literals(self) -> int:
        return 2 * self.n_bool_features

    @property
    def words_per_row(self) -> int:
        return word_count(self.n_literals)

    def describe(self) -> str:
        return (
            f"{self.n_classes} classes × {self.clauses_per_class} clauses × "
            f"{self.n_literals} literals ({self.words_per_row} words/row)"
        )


@dataclass(frozen=True, eq=False)
class ActionModel:
    """Trained TA actions, one packed row per (class, clause).

    ``actions`` has shape ``(n_classes, clauses_per_class, words_per_row)``;
    bit set means include.  ``permutation[p]`` is the original literal
    position stored at position ``p`` (``None`` for the natural layout).
    ``thermometer`` and ``metadata`` are optional passengers written to the
    model file.
    """

    shape: ModelShape
    actions: np.ndarray
    nonempty: Optional[np.ndarray] = None
    permutation: Optional[np.ndarray] = None
    thermometer: Any = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = self.shape
        actions = np.ascontiguousarray(self.actions, dtype=np.uint32)
        expected = (s.n_classes, s.clauses_per_class, s.words_per_row)
        if actions.shape != expected:
            raise ShapeError(f"actions shape {actions.shape} != {expected}")
        if np.any(actions & padding_mask(s.n_literals)):
            raise ShapeError("action padding bits must be exclude (0)")
        computed = np.any(actions != 0, axis=2)
        if self.nonempty is None:
            nonempty = computed
        else:
            nonempty = np.asarray(self.nonempty, dtype=bool)
            if nonempty.shape != computed.shape or not np.array_equal(nonempty, computed):
                raise ShapeError("nonempty flags disagree with action rows")
        perm = self.permutation
        if perm is not None:
            perm = check_permutation(perm, s.n_literals)
            perm.setflags(write=False)
        actions.setflags(write=False)
        nonempty.setflags(write=False)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "nonempty", nonempty)
        object.__setattr__(self, "permutation", perm)

    def __eq__(self, other):
        if not isinstance(other, ActionModel):
            return NotImplemented
        same_perm = (self.permutation is None and other.permutation is None) or (
            self.permutation is not None
            and other.permutation is not None
            and np.array_equal(self.permutation, other.permutation)
        )
        return (
            self.shape == other.shape
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.nonempty, other.nonempty)
            and same_perm
            and self.thermometer == other.thermometer
            and self.metadata == other.metadata
        )

    @property
    def fingerprint(self) -> Optional[int]:
        return permutation_fingerprint(self.permutation)

    @cached_property
    def unpacked_actions(self) -> np.ndarray:
        """Int32 include flags, shape ``(classes, clauses, n_literals)``."""
        bits = unpack_rows(self.actions, self.shape.n_literals).astype(np.int32)
        bits.setflags(write=False)
        return bits

    def include_counts(self) -> np.ndarray:
        """Number of included literals per (class, clause)."""
        return np.bitwise_count(self.actions).sum(axis=2).astype(np.int64)

    def row(self, c: int, j: int) -> PackedBits:
        return PackedBits(self.actions[c, j], self.shape.n_literals)


@dataclass(frozen=True, eq=False)
class BoolDataset:
    """Packed literal rows plus labels.

    ``samples`` has shape ``(n_samples, words_per_row)``.  When the rows were
    emitted in a permuted layout, ``permuted_with`` holds that permutation's
    fingerprint.
    """

    n_bool_features: int
    samples: np.ndarray
    labels: np.ndarray
    permuted_with: Optional[int] = None

    def __post_init__(self):
        n_lit = 2 * self.n_bool_features
        samples = np.ascontiguousarray(self.samples, dtype=np.uint32)
        if samples.ndim == 1 and samples.size == 0:
            samples = samples.reshape(0, word_count(n_lit))
        labels = np.ascontiguousarray(self.labels, dtype=np.int64).reshape(-1)
        if samples.ndim != 2 or samples.shape[1] != word_count(n_lit):
            raise ShapeError(
                f"sample rows of shape {samples.shape} do not hold {n_lit} literals"
            )
        if labels.size != samples.shape[0]:
            raise ShapeError("labels and samples differ in length")
        if labels.size and labels.min() < 0:
            raise ShapeError("labels must be non-negative")
        if np.any(samples & padding_mask(n_lit)):
            raise ShapeError("literal padding bits must be zero")
        samples.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other):
        if not isinstance(other, BoolDataset):
            return NotImplemented
        return (
            self.n_bool_features == other.n_bool_features
            and self.permuted_with == other.permuted_with
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.labels, other.labels)
        )

    def __len__(self):
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_literals(self) -> int:
        return 2 * self.n_bool_features

    def sample(self, i: int) -> PackedBits:
        return PackedBits(self.samples[i], self.n_literals)

    def literal_bits(self) -> np.ndarray:
        """Unpacked uint8 literal matrix, shape ``(n_samples, n_literals)``."""
        return unpack_rows(self.samples, self.n_literals)

    def check_labels(self, n_classes: int) -> None:
        if self.n_samples and self.labels.max() >= n_classes:
            raise ShapeError(
                f"label {int(self.labels.max())} out of range for {n_classes} classes"
            )

    def subset(self, index) -> "BoolDataset":
        return BoolDataset(
            self.n_bool_features, self.samples[index], self.labels[index], self.permuted_with
        )


def _layout(fingerprint: Optional[int]) -> str:
    return "unpermuted" if fingerprint is None else f"permutation {fingerprint:016x}"


def check_compatible(model: ActionModel, data: BoolDataset) -> None:
    """Raise unless ``data`` can be fed to ``model``."""
    if data.n_bool_features != model.shape.n_bool_features:
        raise ShapeError(
            f"dataset has {data.n_bool_features} boolean features, "
            f"model expects {model.shape.n_bool_features}"
        )
    if data.permuted_with != model.fingerprint:
        raise PermutationMismatchError(
            f"dataset literal layout ({_layout(data.permuted_with)}) does not match "
            f"the model's ({_layout(model.fingerprint)})"
        )
