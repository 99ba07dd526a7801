"""Thermometer booleanization and raw dataset ingest (CSV and IDX)."""

from __future__ import annotations

import csv
import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    BoolDataset,
    DataError,
    FormatError,
    PackedBits,
    ShapeError,
    check_permutation,
    negate_extend,
    pack_rows,
    permutation_fingerprint,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SCHEMES = ("quantile", "nonzero-pooled")


@dataclass(frozen=True)
class RawDataset:
    values: np.ndarray
    labels: np.ndarray
    label_names: Optional[tuple] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if values.ndim != 2:
            raise ShapeError("raw values must be a 2-D array")
        if labels.size != values.shape[0]:
            raise ShapeError("labels and values differ in length")
        if labels.size and labels.min() < 0:
            raise ShapeError("labels must be non-negative integers")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_raw_features(self) -> int:
        return self.values.shape[1]

    def subset(self, index) -> "RawDataset":
        return RawDataset(self.values[index], self.labels[index], self.label_names)


@dataclass(frozen=True, eq=False)
class Thermometer:
    """Per-feature strictly increasing thresholds, shape ``(n_raw, bins)``.

    Boolean feature ``f * bins + b`` is set iff ``x[f] > thresholds[f, b]``.
    """

    thresholds: np.ndarray

    def __post_init__(self):
        t = np.array(self.thresholds, dtype=np.float64)
        if t.ndim != 2 or t.shape[1] < 1:
            raise ShapeError("thresholds must have shape (n_raw_features, bins >= 1)")
        if t.shape[1] > 1 and not np.all(np.diff(t, axis=1) > 0):
            raise ShapeError("thresholds must be strictly increasing per feature")
        t.setflags(write=False)
        object.__setattr__(self, "thresholds", t)

    def __eq__(self, other):
        if not isinstance(other, Thermometer):
            return NotImplemented
        return np.array_equal(self.thresholds, other.thresholds)

    @property
    def n_raw_features(self) -> int:
        return self.thresholds.shape[0]

    @property
    def bins(self) -> int:
        return self.thresholds.shape[1]

    @property
    def n_bool_features(self) -> int:
        return self.thresholds.size

    def to_json(self) -> str:
        return json.dumps({"thresholds": self.thresholds.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Thermometer":
        return cls(np.asarray(json.loads(text)["thresholds"], dtype=np.float64))


def _strictly_increasing(t: np.ndarray) -> np.ndarray:
    t = t.copy()
    for b in range(1, t.shape[1]):
        t[:, b] = np.maximum(t[:, b], np.nextafter(t[:, b - 1], np.inf))
    return t


def fit_thermometer(raw: RawDataset, bins: int, scheme: str = "quantile") -> Thermometer:
    """Fit thresholds at the q/(bins+1) quantiles, q = 1..bins.

    ``scheme="quantile"`` uses each feature's own distribution.
    ``scheme="nonzero-pooled"`` pools the nonzero values of all features
    and shares the thresholds, which suits raw image intensities.
    Duplicate quantiles are nudged up by one ulp each so thresholds stay
    strictly increasing.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if raw.n_samples < 1:
        raise DataError("cannot fit a thermometer on an empty dataset")
    qs = np.arange(1, bins + 1) / (bins + 1)
    if scheme == "quantile":
        t = np.quantile(raw.values, qs, axis=0).T
    elif scheme == "nonzero-pooled":
        pool = raw.values[raw.values != 0]
        if pool.size == 0:
            pool = np.zeros(1)
        t = np.broadcast_to(np.quantile(pool, qs), (raw.n_raw_features, bins))
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return Thermometer(_strictly_increasing(np.asarray(t, dtype=np.float64)))


def fixed_thermometer(n_raw_features: int, thresholds: Sequence[float]) -> Thermometer:
    """Share the same thresholds across every raw feature."""
    t = np.sort(np.asarray(thresholds, dtype=np.float64).reshape(-1))
    return Thermometer(_strictly_increasing(np.tile(t, (n_raw_features, 1))))


def booleanize(values: np.ndarray, th: Thermometer) -> np.ndarray:
    """Booleanize a ``(n_samples, n_raw)`` matrix to ``(n_samples, n_raw*bins)`` uint8."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != th.n_raw_features:
        raise ShapeError(
            f"expected {th.n_raw_features} raw features, got shape {values.shape}"
        )
    bits = values[:, :, None] > th.thresholds[None, :, :]
    return bits.reshape(values.shape[0], -1).astype(np.uint8)


def booleanize_sample(x: Sequence[float], th: Thermometer) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (th.n_raw_features,):
        raise ShapeError(f"expected {th.n_raw_features} raw features, got {x.shape}")
    return booleanize(x[None, :], th)[0]


def emit_literals(bools: Sequence[int], perm: Optional[np.ndarray] = None) -> PackedBits:
    """Pack ``[x, 1-x]``, optionally in permuted order (position p holds literal perm[p])."""
    literals = negate_extend(bools)
    if perm is not None:
        literals = literals[check_permutation(perm, literals.size)]
    return PackedBits(pack_rows(literals), literals.size)


def emit_dataset(
    bools: np.ndarray, labels: np.ndarray, perm: Optional[np.ndarray] = None
) -> BoolDataset:
    """Batch form of :func:`emit_literals` producing a :class:`BoolDataset`."""
    bools = np.asarray(bools, dtype=np.uint8)
    if bools.ndim != 2:
        raise ShapeError("boolean features must be a 2-D array")
    literals = negate_extend(bools)
    if perm is not None:
        literals = literals[:, check_permutation(perm, literals.shape[1])]
    return BoolDataset(
        bools.shape[1], pack_rows(literals), labels, permutation_fingerprint(perm)
    )


def permute_dataset(data: BoolDataset, perm: np.ndarray) -> BoolDataset:
    """Re-emit an unpermuted dataset in the layout given by ``perm``."""
    if data.permuted_with is not None:
        raise DataError("dataset is already permuted")
    perm = check_permutation(perm, data.n_literals)
    literals = data.literal_bits()[:, perm]
    return BoolDataset(
        data.n_bool_features, pack_rows(literals), data.labels, permutation_fingerprint(perm)
    )


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def ingest_csv(path: Union[str, Path], label_column: Union[int, str] = -1) -> RawDataset:
    """Read a numeric CSV with one label column.

    A first row with a non-numeric feature cell is treated as a header, which
    also allows ``label_column`` to be given by name.  Non-integer labels are
    mapped to indices in sorted order.
    """
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no rows")
    width = len(rows[0])

    by_name = isinstance(label_column, str) and not label_column.lstrip("-").isdigit()
    if by_name:
        names = [c.strip() for c in rows[0]]
        if label_column not in names:
            raise DataError(f"label column {label_column!r} not found in header")
        lab = names.index(label_column)
    else:
        lab = int(label_column)
        if not -width <= lab < width:
            raise DataError(f"label column {lab} out of range for {width} columns")
        lab %= width
    has_header = by_name or not all(
        _is_number(c) for j, c in enumerate(rows[0]) if j != lab
    )
    first = 1 if has_header else 0

    values, raw_labels = [], []
    for i, r in enumerate(rows[first:], start=first + 1):
        if len(r) != width:
            raise DataError(f"row {i}: expected {width} cells, found {len(r)}")
        values.append([_parse_cell(c, i, j + 1) for j, c in enumerate(r) if j != lab])
        raw_labels.append(r[lab].strip())

    label_names = None
    try:
        labels = [int(v) for v in raw_labels]
    except ValueError:
        label_names = tuple(sorted(set(raw_labels)))
        index = {n: k for k, n in enumerate(label_names)}
        labels = [index[v] for v in raw_labels]
    values = np.asarray(values, dtype=np.float64).reshape(len(raw_labels), width - 1)
    return RawDataset(values, np.asarray(labels, dtype=np.int64), label_names)


def _open_maybe_gz(path: Union[str, Path]):
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with _open_maybe_gz(path) as f:
        payload = f.read()
    header_len = 4 + 4 * ndim
    if len(payload) < header_len:
        raise FormatError(f"{path}: truncated IDX header ({len(payload)} bytes)")
    (found,) = struct.unpack_from(">I", payload, 0)
    if found != magic:
        raise FormatError(f"{path}: IDX magic 0x{found:08x} at byte 0, expected 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", payload, 4)
    n = int(np.prod(dims))
    if len(payload) - header_len < n:
        raise FormatError(
            f"{path}: expected {n} data bytes from byte {header_len}, "
            f"found {len(payload) - header_len}"
        )
    return np.frombuffer(payload, np.uint8, count=n, offset=header_len).reshape(dims)


def ingest_idx(images_path, labels_path) -> RawDataset:
    """Read an IDX image/label file pair (optionally gzipped); images are flattened."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ShapeError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    return RawDataset(images.reshape(images.shape[0], -1).astype(np.float64), labels)


def train_test_split(raw: RawDataset, test_fraction: float, seed: int):
    """Stratified shuffle split returning ``(train, test)``."""
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in np.unique(raw.labels):
        idx = np.flatnonzero(raw.labels == c)
        rng.shuffle(idx)
        test_idx.extend(idx[: int(round(test_fraction * idx.size))])
    mask = np.zeros(raw.n_samples, dtype=bool)
    mask[test_idx] = True
    return raw.subset(~mask), raw.subset(mask)
