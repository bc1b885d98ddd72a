"""Text encoders that produce fixed-length contextual features.

Every encoder maps a text to a CLS summary vector, a U x d sequence
matrix, and a {0,1} validity mask, with padded rows forced to exact
zeros. The hashed encoder is fully deterministic and dependency-free,
which makes exports reproducible byte for byte; the transformers
encoder wraps any locally available pretrained model.
"""

from __future__ import annotations

import re
import zlib
from typing import List, Tuple

import numpy as np

from .export import ExportError

_WORD_RE = re.compile(r"\w+", re.UNICODE)

Record = Tuple[np.ndarray, np.ndarray, np.ndarray]  # cls (d,), seq (U, d), mask (U,)


class HashedEncoder:
    """Deterministic stand-in encoder seeded from word hashes.

    Each word's vector is drawn from a generator seeded by the CRC of
    the word, so the same word always maps to the same vector and the
    whole export is reproducible without model weights. Position 0
    holds a summary row (the mean of the kept word vectors), matching
    the sequence-start convention of pretrained encoders.
    """

    def __init__(self, d_model: int = 64, seed: int = 0):
        if d_model < 1:
            raise ExportError(f"d_model must be positive, got {d_model}")
        self.d_model = d_model
        self.seed = seed
        self.name = f"hashed-{d_model}-seed{seed}"

    def _word_row(self, word: str) -> np.ndarray:
        key = zlib.crc32(word.encode("utf-8")) ^ (self.seed * 0x9E3779B1)
        rng = np.random.default_rng(key & 0xFFFFFFFF)
        return rng.standard_normal(self.d_model) / np.sqrt(self.d_model)

    def encode(self, texts: List[str], U: int) -> List[Record]:
        out = []
        for text in texts:
            words = _WORD_RE.findall(text.lower())
            seq = np.zeros((U, self.d_model), dtype=np.float64)
            mask = np.zeros(U, dtype=np.uint8)
            if words:
                rows = [self._word_row(w) for w in words]
                summary = np.mean(rows, axis=0)
                kept = [summary] + rows
                kept = kept[:U]
                for i, row in enumerate(kept):
                    seq[i] = row
                    mask[i] = 1
                cls = summary
            else:
                cls = np.zeros(self.d_model, dtype=np.float64)
            out.append((cls, seq, mask))
        return out

    def word_vector(self, word: str) -> np.ndarray:
        (cls, _seq, _mask), = self.encode([word], U=2)
        return cls


class TransformersEncoder:
    """Pretrained-encoder wrapper (inference mode, no gradients)."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ExportError(f"encoder load failure: transformers/torch "
                              f"not installed ({exc})") from None
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise ExportError(f"encoder load failure: {model_id}: {exc}") from None
        self._torch = torch
        self._model.eval()
        self._model.to(device)
        self._device = device
        self.d_model = int(self._model.config.hidden_size)
        self.name = model_id

    def encode(self, texts: List[str], U: int) -> List[Record]:
        torch = self._torch
        batch = self._tokenizer(texts, padding="max_length", truncation=True,
                                max_length=U, return_tensors="pt")
        batch = {k: v.to(self._device) for k, v in batch.items()}
        with torch.no_grad():
            hidden = self._model(**batch).last_hidden_state
        hidden = hidden.cpu().numpy().astype(np.float64)
        masks = batch["attention_mask"].cpu().numpy().astype(np.uint8)
        out = []
        for seq, mask in zip(hidden, masks):
            seq = seq * mask[:, None]
            out.append((seq[0].copy(), seq, mask))
        return out

    def word_vector(self, word: str) -> np.ndarray:
        (cls, _seq, _mask), = self.encode([word], U=4)
        return cls


def get_encoder(encoder_id: str):
    """Build an encoder from its id.

    ``hashed`` or ``hashed:<d_model>`` (optionally ``:<seed>``) selects
    the deterministic built-in; anything else is treated as a local
    pretrained model name.
    """
    if encoder_id == "hashed" or encoder_id.startswith("hashed:"):
        parts = encoder_id.split(":")
        try:
            d_model = int(parts[1]) if len(parts) > 1 else 64
            seed = int(parts[2]) if len(parts) > 2 else 0
        except ValueError:
            raise ExportError(f"bad hashed encoder id {encoder_id!r}; expected "
                              f"hashed[:d_model[:seed]]") from None
        return HashedEncoder(d_model, seed)
    return TransformersEncoder(encoder_id)
