"""Feature concatenation, label-aware fusion, and the classifier head.

The fused vector starts as [v_s, v_r, emotion divergence, closeness]
(length 4d). A learned projection maps it back to d; per stance label
the absolute difference against that label's frozen embedding runs
through two shared shrinking transforms (d -> d/2 -> d/4), and the
per-label d/4 blocks are appended to the 4d base. The classifier is
two tanh dense layers with dropout, then an L-way softmax.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import DataError, ShapeError
from .tensor import (Tensor, abs_diff, clamp_min, concat, dropout, linear,
                     log, mean_, mul, reshape, softmax, take_per_row, tanh)

_WORD_RE = re.compile(r"\w+", re.UNICODE)


class LabelSet:
    """Ordered stance labels with frozen per-label embeddings."""

    def __init__(self, names: Sequence[str], embeddings: np.ndarray):
        names = list(names)
        if len(set(names)) != len(names):
            raise DataError(f"label names must be unique, got {names}")
        if len(names) < 2:
            raise DataError(f"need at least 2 labels, got {len(names)}")
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.shape != (len(names), embeddings.shape[1]):
            raise ShapeError(f"label embeddings must be (L, d), got {embeddings.shape}")
        self.names = names
        self.embeddings = Tensor(embeddings)  # frozen: requires_grad stays False

    @classmethod
    def from_word_vectors(cls, names: Sequence[str], word_vectors) -> "LabelSet":
        """Build label embeddings by mean-pooling each name's word vectors.

        The result is a snapshot: later training of the underlying
        table does not move these rows.
        """
        rows = []
        for name in names:
            words = _WORD_RE.findall(name.lower())
            if not words:
                raise DataError(f"label {name!r} has no embeddable words")
            vecs = [word_vectors.word_vector(w).data for w in words]
            rows.append(np.mean(vecs, axis=0))
        return cls(names, np.stack(rows))

    @property
    def L(self) -> int:
        return len(self.names)

    @property
    def d_model(self) -> int:
        return self.embeddings.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown label {name!r}; expected one of {self.names}") from None


@dataclass
class FusionParams:
    proj_w: Tensor  # 4d x d
    proj_b: Tensor  # d
    w1: Tensor      # d x d/2, shared across labels
    b1: Tensor      # d/2
    w2: Tensor      # d/2 x d/4, shared across labels
    b2: Tensor      # d/4

    def named(self, prefix: str = "fusion") -> Dict[str, Tensor]:
        return {f"{prefix}.proj.w": self.proj_w, f"{prefix}.proj.b": self.proj_b,
                f"{prefix}.t1.w": self.w1, f"{prefix}.t1.b": self.b1,
                f"{prefix}.t2.w": self.w2, f"{prefix}.t2.b": self.b2}


@dataclass
class ClassifierParams:
    l1_w: Tensor
    l1_b: Tensor
    l2_w: Tensor
    l2_b: Tensor
    out_w: Tensor
    out_b: Tensor
    dropout_rate: float

    def named(self, prefix: str = "clf") -> Dict[str, Tensor]:
        return {f"{prefix}.l1.w": self.l1_w, f"{prefix}.l1.b": self.l1_b,
                f"{prefix}.l2.w": self.l2_w, f"{prefix}.l2.b": self.l2_b,
                f"{prefix}.out.w": self.out_w, f"{prefix}.out.b": self.out_b}


def _uniform(rng: np.random.Generator, rows: int, cols: int, d_model: int) -> Tensor:
    scale = 1.0 / np.sqrt(d_model)
    return Tensor(rng.uniform(-scale, scale, size=(rows, cols)), requires_grad=True)


def init_fusion_params(d_model: int, rng: np.random.Generator) -> FusionParams:
    if d_model % 4 != 0:
        raise ShapeError(f"d_model must be divisible by 4 for fusion, got {d_model}")
    half, quarter = d_model // 2, d_model // 4
    return FusionParams(
        proj_w=_uniform(rng, 4 * d_model, d_model, d_model),
        proj_b=Tensor(np.zeros(d_model), requires_grad=True),
        w1=_uniform(rng, d_model, half, d_model),
        b1=Tensor(np.zeros(half), requires_grad=True),
        w2=_uniform(rng, half, quarter, d_model),
        b2=Tensor(np.zeros(quarter), requires_grad=True),
    )


def init_classifier_params(d_model: int, L: int, rng: np.random.Generator,
                           dropout_rate: float = 0.2) -> ClassifierParams:
    in_width = 4 * d_model + L * (d_model // 4)
    half = d_model // 2
    return ClassifierParams(
        l1_w=_uniform(rng, in_width, d_model, d_model),
        l1_b=Tensor(np.zeros(d_model), requires_grad=True),
        l2_w=_uniform(rng, d_model, half, d_model),
        l2_b=Tensor(np.zeros(half), requires_grad=True),
        out_w=_uniform(rng, half, L, d_model),
        out_b=Tensor(np.zeros(L), requires_grad=True),
        dropout_rate=dropout_rate,
    )


def concat_features(v_s: Tensor, v_r: Tensor, delta_e: Tensor,
                    delta_h: Tensor) -> Tensor:
    """[v_s, v_r, delta_e, delta_h] along the feature axis."""
    parts = (v_s, v_r, delta_e, delta_h)
    widths = {p.shape[-1] for p in parts}
    if len(widths) != 1:
        raise ShapeError(f"feature widths differ: {[p.shape for p in parts]}")
    return concat(parts, axis=-1)


def label_fusion(f_cnct: Tensor, labels: LabelSet, params: FusionParams) -> Tensor:
    """Append per-label proximity blocks to the concatenated features.

    Accepts a single vector (4d,) or a batch (C, 4d); the output keeps
    the input's rank.
    """
    single = f_cnct.ndim == 1
    x = reshape(f_cnct, (1, f_cnct.shape[0])) if single else f_cnct
    d_model = labels.d_model
    if x.shape[-1] != 4 * d_model:
        raise ShapeError(f"fusion input width {x.shape[-1]} != 4*d_model {4 * d_model}")
    rows = x.shape[0]
    z = linear(x, params.proj_w, params.proj_b)
    blocks = []
    for l in range(labels.L):
        anchor = Tensor(np.tile(labels.embeddings.data[l], (rows, 1)))
        delta = abs_diff(z, anchor)
        z_l = linear(delta, params.w1, params.b1)
        z_l2 = linear(z_l, params.w2, params.b2)
        blocks.append(z_l2)
    fused = concat([x] + blocks, axis=-1)
    return reshape(fused, (fused.shape[-1],)) if single else fused


def classify(f_fsd: Tensor, params: ClassifierParams, training: bool,
             rng: Optional[np.random.Generator] = None) -> Tensor:
    """Dense-dense-softmax head; returns class probabilities."""
    single = f_fsd.ndim == 1
    x = reshape(f_fsd, (1, f_fsd.shape[0])) if single else f_fsd
    if x.shape[-1] != params.l1_w.shape[0]:
        raise ShapeError(f"classifier input width {x.shape[-1]} does not match "
                         f"first layer {params.l1_w.shape}")
    h = tanh(linear(x, params.l1_w, params.l1_b))
    h = dropout(h, params.dropout_rate, training, rng)
    h = tanh(linear(h, params.l2_w, params.l2_b))
    h = dropout(h, params.dropout_rate, training, rng)
    logits = linear(h, params.out_w, params.out_b)
    probs = softmax(logits, axis=-1)
    return reshape(probs, (probs.shape[-1],)) if single else probs


def loss(probabilities: Tensor, true_label: int,
         class_weights: Optional[Sequence[float]] = None) -> Tensor:
    """Weighted categorical cross-entropy for one prediction."""
    L = probabilities.shape[-1]
    if not 0 <= true_label < L:
        raise DataError(f"label index {true_label} out of range for {L} classes")
    weight = 1.0 if class_weights is None else float(class_weights[true_label])
    flat = reshape(probabilities, (1, L))
    picked = take_per_row(flat, np.array([true_label]))
    nll = mul(log(clamp_min(picked, 1e-12)), -weight)
    return reshape(nll, ())


def batch_loss(probabilities: Tensor, true_labels: np.ndarray,
               class_weights: Optional[Sequence[float]] = None) -> Tensor:
    """Mean weighted cross-entropy over a batch of predictions."""
    labels = np.asarray(true_labels, dtype=np.int64)
    L = probabilities.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= L):
        raise DataError(f"label index out of range for {L} classes")
    picked = take_per_row(probabilities, labels)
    logp = log(clamp_min(picked, 1e-12))
    if class_weights is not None:
        weights = np.asarray(class_weights, dtype=np.float64)[labels]
    else:
        weights = np.ones(labels.shape[0])
    weighted = mul(logp, Tensor(-weights))
    return mean_(weighted, axis=0)
