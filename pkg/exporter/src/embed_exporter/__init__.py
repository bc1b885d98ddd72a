"""Offline embedding exporter for source/reply stance datasets."""

from .encoders import HashedEncoder, TransformersEncoder, get_encoder
from .export import EMOTION_WORDS, ExportError, export

__all__ = ["EMOTION_WORDS", "ExportError", "HashedEncoder",
           "TransformersEncoder", "export", "get_encoder"]
__version__ = "0.1.0"
