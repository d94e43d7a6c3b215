"""A numpy-only six-layer CNN that classifies SEM images of fibre scaffolds.

Three classes: airbrushed (0), electrospun (1), steel wire (2).
"""

from .checkpoint import checkpoint_load, checkpoint_save
from .data import AugmentPolicy, DatasetSplit, RawImage, Sample, load_dataset, stratified_split
from .errors import (
    BadMagicError,
    ConfigError,
    CorruptCheckpointError,
    DegenerateInputError,
    IngestionError,
    InputError,
    ScaffoldError,
    ShapeError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from .layers import CLASS_NAMES, ModelParams, init_params, model_forward
from .metrics import EvalReport, evaluate_predictions, multiclass_roc, roc_binary
from .synth import generate_dataset, render_fiber_image, synthetic_split
from .tensor_core import Pcg32, rng_from_seed
from .training import Checkpoint, TrainConfig, evaluate, fit

__version__ = "0.1.0"
