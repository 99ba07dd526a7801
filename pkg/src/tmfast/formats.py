"""Binary model (``.tmbm``) and dataset (``.tmx``) files.

All integers are little-endian.  Model layout::

    "TMBM" | version u8 | word_width u8 | reserved u16
    n_bool_features u32 | n_classes u32 | clauses_per_class u32 | flags u32
    [permutation: n_literals x u32]                      flags bit0
    nonempty bitmap: ceil(n_classes*clauses/32) x u32
    actions: n_classes*clauses*words_per_row x u32 (class-major, then clause)
    [thermometer: n_raw u32 | bins u32 | n_raw*bins x f64]  flags bit1
    [metadata: length u32 | UTF-8 JSON]                   flags bit2

Dataset layout::

    "TMBX" | version u8 | word_width u8 | reserved u16
    n_samples u32 | n_bool_features u32 | flags u32
    [permutation fingerprint u64]                        flags bit0
    per sample: label u32 | words_per_row x u32
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO, Optional, Union

import numpy as np

from .booleanize import Thermometer
from .core import (
    WORD_WIDTH,
    ActionModel,
    BoolDataset,
    FormatError,
    MagicError,
    ModelShape,
    ShapeError,
    TruncatedError,
    VersionError,
    pack_rows,
    unpack_rows,
    word_count,
)

MODEL_MAGIC = b"TMBM"
DATASET_MAGIC = b"TMBX"
VERSION = 1

FLAG_PERMUTATION = 1 << 0
FLAG_THERMOMETER = 1 << 1
FLAG_METADATA = 1 << 2
MODEL_FLAGS = FLAG_PERMUTATION | FLAG_THERMOMETER | FLAG_METADATA
DATASET_FLAG_PERMUTED = 1 << 0

_PREAMBLE = struct.Struct("<4sBBH")
_MODEL_HEADER = struct.Struct("<IIII")
_DATASET_HEADER = struct.Struct("<III")

PathOrFile = Union[str, Path, BinaryIO]


class _Reader:
    def __init__(self, payload: bytes, what: str):
        self.payload = payload
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.payload):
            raise TruncatedError(
                f"{self.what}: needed {n} bytes at offset {self.pos}, "
                f"only {len(self.payload) - self.pos} left"
            )
        chunk = self.payload[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count), dtype=dtype).copy()

    def finish(self):
        if self.pos != len(self.payload):
            raise FormatError(
                f"{self.what}: {len(self.payload) - self.pos} unexpected trailing bytes"
            )


def _read_preamble(r: _Reader, magic: bytes):
    found, version, width, _ = r.unpack(_PREAMBLE)
    if found != magic:
        raise MagicError(f"{r.what}: bad magic {found!r}, expected {magic!r}")
    if version != VERSION:
        raise VersionError(f"{r.what}: unsupported version {version}")
    if width != WORD_WIDTH:
        raise ShapeError(f"{r.what}: word width {width}, only 32 is supported")


def _slurp(source: PathOrFile) -> bytes:
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _emit(sink: PathOrFile, payload: bytes) -> None:
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(payload)
    else:
        sink.write(payload)


def model_to_bytes(m: ActionModel) -> bytes:
    s = m.shape
    flags = 0
    if m.permutation is not None:
        flags |= FLAG_PERMUTATION
    if m.thermometer is not None:
        flags |= FLAG_THERMOMETER
    if m.metadata:
        flags |= FLAG_METADATA
    out = io.BytesIO()
    out.write(_PREAMBLE.pack(MODEL_MAGIC, VERSION, WORD_WIDTH, 0))
    out.write(_MODEL_HEADER.pack(s.n_bool_features, s.n_classes, s.clauses_per_class, flags))
    if m.permutation is not None:
        out.write(m.permutation.astype("<u4").tobytes())
    out.write(pack_rows(m.nonempty.reshape(-1)).astype("<u4").tobytes())
    out.write(m.actions.astype("<u4").tobytes())
    if m.thermometer is not None:
        th = m.thermometer
        if th.n_bool_features != s.n_bool_features:
            raise ShapeError("thermometer does not match the model's boolean features")
        out.write(struct.pack("<II", th.n_raw_features, th.bins))
        out.write(th.thresholds.astype("<f8").tobytes())
    if m.metadata:
        text = json.dumps(m.metadata, sort_keys=True, separators=(",", ":")).encode()
        out.write(struct.pack("<I", len(text)))
        out.write(text)
    return out.getvalue()


def model_from_bytes(payload: bytes, what: str = "model") -> ActionModel:
    r = _Reader(payload, what)
    _read_preamble(r, MODEL_MAGIC)
    n_bool, n_classes, clauses, flags = r.unpack(_MODEL_HEADER)
    if flags & ~MODEL_FLAGS:
        raise FormatError(f"{what}: unknown flag bits 0x{flags:08x}")
    try:
        shape = ModelShape(n_bool, n_classes, clauses)
    except ShapeError as e:
        raise ShapeError(f"{what}: {e}") from None
    n_lit = shape.n_literals
    perm = r.array("<u4", n_lit).astype(np.int64) if flags & FLAG_PERMUTATION else None
    n_rows = n_classes * clauses
    bitmap = r.array("<u4", word_count(n_rows))
    if np.any(unpack_rows(bitmap, word_count(n_rows) * WORD_WIDTH)[n_rows:]):
        raise ShapeError(f"{what}: nonempty bitmap padding is not zero")
    nonempty = unpack_rows(bitmap, n_rows).astype(bool).reshape(n_classes, clauses)
    actions = r.array("<u4", n_rows * shape.words_per_row).reshape(
        n_classes, clauses, shape.words_per_row
    )
    thermometer = None
    if flags & FLAG_THERMOMETER:
        n_raw, bins = r.unpack(struct.Struct("<II"))
        if n_raw * bins != n_bool:
            raise ShapeError(
                f"{what}: thermometer {n_raw}x{bins} does not give {n_bool} features"
            )
        thermometer = Thermometer(r.array("<f8", n_raw * bins).reshape(n_raw, bins))
    metadata = {}
    if flags & FLAG_METADATA:
        (length,) = r.unpack(struct.Struct("<I"))
        try:
            metadata = json.loads(r.take(length).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{what}: bad metadata section: {e}") from None
    r.finish()
    return ActionModel(shape, actions, nonempty, perm, thermometer, metadata)


def write_model(m: ActionModel, sink: PathOrFile) -> None:
    _emit(sink, model_to_bytes(m))


def read_model(source: PathOrFile) -> ActionModel:
    return model_from_bytes(_slurp(source), str(getattr(source, "name", source)))


def dataset_to_bytes(d: BoolDataset) -> bytes:
    flags = DATASET_FLAG_PERMUTED if d.permuted_with is not None else 0
    out = io.BytesIO()
    out.write(_PREAMBLE.pack(DATASET_MAGIC, VERSION, WORD_WIDTH, 0))
    out.write(_DATASET_HEADER.pack(d.n_samples, d.n_bool_features, flags))
    if d.permuted_with is not None:
        out.write(struct.pack("<Q", d.permuted_with))
    rows = np.empty((d.n_samples, 1 + d.samples.shape[1]), dtype="<u4")
    rows[:, 0] = d.labels
    rows[:, 1:] = d.samples
    out.write(rows.tobytes())
    return out.getvalue()


def dataset_from_bytes(
    payload: bytes, n_classes: Optional[int] = None, what: str = "dataset"
) -> BoolDataset:
    r = _Reader(payload, what)
    _read_preamble(r, DATASET_MAGIC)
    n_samples, n_bool, flags = r.unpack(_DATASET_HEADER)
    if flags & ~DATASET_FLAG_PERMUTED:
        raise FormatError(f"{what}: unknown flag bits 0x{flags:08x}")
    fingerprint = r.unpack(struct.Struct("<Q"))[0] if flags & DATASET_FLAG_PERMUTED else None
    width = 1 + word_count(2 * n_bool)
    rows = r.array("<u4", n_samples * width).reshape(n_samples, width)
    r.finish()
    try:
        data = BoolDataset(n_bool, rows[:, 1:], rows[:, 0].astype(np.int64), fingerprint)
        if n_classes is not None:
            data.check_labels(n_classes)
    except ShapeError as e:
        raise ShapeError(f"{what}: {e}") from None
    return data


def write_dataset(d: BoolDataset, sink: PathOrFile) -> None:
    _emit(sink, dataset_to_bytes(d))


def read_dataset(source: PathOrFile, n_classes: Optional[int] = None) -> BoolDataset:
    return dataset_from_bytes(_slurp(source), n_classes, str(getattr(source, "name", source)))
