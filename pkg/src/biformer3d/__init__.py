"""BiFormer3D: grid-free binaural HRIR upsampling.

A masked spatial transformer reconstructs head-related impulse responses
at arbitrary target directions from a sparse set of measured ones, with
auxiliary interaural time/level difference heads and a directional
refinement stage. Includes a synthetic spherical-head corpus with exact
cue ground truth, losses and binaural metrics, a nearest-neighbor
baseline, and a train/eval/upsample CLI.
"""

__version__ = "0.1.0"

from .domain import (
    BinauralHrir,
    Direction,
    StackedHrirs,
    SubjectField,
    canonical_order,
    fibonacci_grid,
    great_circle_deg,
    sample_sparsity,
    stack_field,
)
from .errors import ConfigError, DataError, NumericError, UndefinedCueError

__all__ = [
    "__version__",
    "Direction", "BinauralHrir", "SubjectField", "StackedHrirs",
    "stack_field", "canonical_order", "great_circle_deg", "sample_sparsity",
    "fibonacci_grid",
    "ConfigError", "DataError", "NumericError", "UndefinedCueError",
]
