"""Stance detection for source/reply text pairs.

The pipeline embeds both texts, runs a two-stage cross-attention
exchange with interleaved self-attention, pools each branch with
hierarchical attention, measures CLS closeness and emotion
divergence, fuses per-label proximity features, and classifies. A
small reverse-mode autodiff tensor engine underneath keeps the whole
thing trainable with AdamW and verifiable by finite differences.
"""

from .errors import (DataError, DivergenceError, FormatError, GradientError,
                     NumericError, ShapeError, StanceNetError)
from .tensor import Tensor, backward
from .model import ModelConfig, StanceModel

__version__ = "0.1.0"

__all__ = [
    "DataError", "DivergenceError", "FormatError", "GradientError",
    "NumericError", "ShapeError", "StanceNetError",
    "Tensor", "backward", "ModelConfig", "StanceModel", "__version__",
]
