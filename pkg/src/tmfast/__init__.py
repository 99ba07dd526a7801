"""Fast Tsetlin Machine inference: packed bitwise clause engines with early exit."""

from .booleanize import Thermometer, emit_dataset, emit_literals, fit_thermometer
from .core import (
    ActionModel,
    BoolDataset,
    DataError,
    FormatError,
    InvariantError,
    ModelShape,
    PackedBits,
    PermutationMismatchError,
    ShapeError,
    pack_bits,
    unpack_bits,
)
from .engines import ALL_ENGINES, EngineKind, predict, predict_batch
from .formats import read_dataset, read_model, write_dataset, write_model
from .reorder import reorder, reorder_pipeline
from .trainer import TrainerConfig, train

__version__ = "0.1.0"
