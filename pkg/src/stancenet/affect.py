"""Emotion-lexicon features and CLS-vector closeness.

A lexicon maps words to subsets of a fixed 10-emotion inventory. For
a text, each token occurrence contributes one hit per associated
emotion; an emotion's intensity is its share of total hits. The top-K
emotions are embedded through the active word-vector source and
averaged; the absolute difference of the source and reply averages is
the emotional-divergence feature.

Closeness between the two CLS vectors is their elementwise absolute
difference scaled to unit norm.
"""

from __future__ import annotations

import re
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from .errors import DataError
from .tensor import Tensor, abs_diff, l2_normalize, mul, add

EMOTION_INVENTORY = ("fear", "anger", "anticipation", "trust", "surprise",
                     "positive", "negative", "sadness", "disgust", "joy")
_EMOTION_RANK = {name: i for i, name in enumerate(EMOTION_INVENTORY)}

_WORD_RE = re.compile(r"\w+", re.UNICODE)

EmotionProfile = List[Tuple[str, float]]


class EmotionLexicon:
    """Word to emotion-set mapping over the fixed inventory."""

    def __init__(self, associations: Dict[str, Set[str]]):
        for word, emotions in associations.items():
            for e in emotions:
                if e not in _EMOTION_RANK:
                    raise DataError(f"unknown emotion {e!r} for word {word!r}")
        self._assoc = {w.lower(): set(es) for w, es in associations.items()}

    def __len__(self) -> int:
        return len(self._assoc)

    def emotions_of(self, word: str) -> Set[str]:
        return self._assoc.get(word.lower(), set())


def load_lexicon(path: str) -> EmotionLexicon:
    """Read a tab-separated word/emotion/flag file.

    Lines look like ``abandon<TAB>fear<TAB>1``; flag 0 lines are
    skipped. Unknown emotion names fail loudly with the line number.
    """
    assoc: Dict[str, Set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"lexicon line {lineno}: expected 3 tab-separated "
                                f"fields, got {len(parts)}")
            word, emotion, flag = parts
            if flag == "0":
                continue
            if flag != "1":
                raise DataError(f"lexicon line {lineno}: flag must be 0 or 1, got {flag!r}")
            if emotion not in _EMOTION_RANK:
                raise DataError(f"lexicon line {lineno}: unknown emotion {emotion!r}")
            assoc.setdefault(word.lower(), set()).add(emotion)
    return EmotionLexicon(assoc)


def extract_emotions(text: str, lexicon: EmotionLexicon, K: int) -> EmotionProfile:
    """Rank the text's emotions by normalized hit frequency, keep top K.

    Each token occurrence counts one hit per emotion the lexicon
    associates with it; scores divide by total hits so they sum to at
    most 1. Ties break by inventory order. No hits yields an empty
    profile.
    """
    if K < 1:
        raise DataError(f"K must be at least 1, got {K}")
    counts: Dict[str, int] = {}
    total = 0
    for token in _WORD_RE.findall(text.lower()):
        for emotion in lexicon.emotions_of(token):
            counts[emotion] = counts.get(emotion, 0) + 1
            total += 1
    if total == 0:
        return []
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], _EMOTION_RANK[kv[0]]))
    return [(name, hits / total) for name, hits in ranked[:K]]


def emotion_feature(profile: EmotionProfile, word_vectors) -> Tensor:
    """Average the word vectors of the profile's emotions.

    ``word_vectors`` is any callable or provider-like object exposing
    ``word_vector(name) -> Tensor``. An empty profile yields a zero
    vector sized from the vector source.
    """
    lookup = word_vectors.word_vector if hasattr(word_vectors, "word_vector") else word_vectors
    if not profile:
        d = getattr(word_vectors, "d_model", None)
        if d is None:
            raise DataError("empty profile needs a vector source with d_model")
        return Tensor(np.zeros(d))
    vectors = [lookup(name) for name, _score in profile]
    acc = vectors[0]
    for vec in vectors[1:]:
        acc = add(acc, vec)
    return mul(acc, 1.0 / len(vectors))


def emotion_divergence(h_es: Tensor, h_er: Tensor) -> Tensor:
    """Elementwise |source - reply| of the averaged emotion vectors."""
    return abs_diff(h_es, h_er)


def feature_closeness(h_s: Tensor, h_r: Tensor) -> Tensor:
    """Unit-norm elementwise absolute difference of two CLS vectors.

    Identical inputs produce the all-zero vector rather than an error.
    """
    return l2_normalize(abs_diff(h_s, h_r), axis=-1)
