"""Dual cross-attention over source/reply pairs and hierarchical pooling.

The dual pipeline runs four stages: a key-exchange cross-attention
(each branch queries the other branch's keys but keeps its own
values), branch-wise self-attention, a value-exchange cross-attention
(own queries and keys, the other branch's values), and a second
branch-wise self-attention. Every stage is multi-head scaled
dot-product attention with padding masked out of the softmax.

Hierarchical attention then pools each branch's sequence into one
vector using a learned context vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import (Tensor, add, concat, matmul, mul, reshape, slice_axis,
                     softmax, swap_last_axes, tanh)


@dataclass
class AttentionParams:
    """Projection matrices for one branch of one attention stage."""

    wq: Tensor
    wk: Tensor
    wv: Tensor


@dataclass
class HanParams:
    w: Tensor  # d x d
    b: Tensor  # d
    c: Tensor  # d, learned context vector


@dataclass
class DualAttentionParams:
    """All parameters of the four-stage pipeline.

    Each stage holds distinct per-branch parameter sets, keyed
    "src" and "rep".
    """

    cross1: Dict[str, AttentionParams]
    self1: Dict[str, AttentionParams]
    cross2: Dict[str, AttentionParams]
    self2: Dict[str, AttentionParams]
    num_heads: int

    def named(self, prefix: str = "attn") -> Dict[str, Tensor]:
        out = {}
        for stage_name, stage in (("cross1", self.cross1), ("self1", self.self1),
                                  ("cross2", self.cross2), ("self2", self.self2)):
            for branch in ("src", "rep"):
                p = stage[branch]
                out[f"{prefix}.{stage_name}.{branch}.wq"] = p.wq
                out[f"{prefix}.{stage_name}.{branch}.wk"] = p.wk
                out[f"{prefix}.{stage_name}.{branch}.wv"] = p.wv
        return out


def init_attention_params(d_model: int, rng: np.random.Generator) -> AttentionParams:
    scale = 1.0 / np.sqrt(d_model)
    def mat():
        return Tensor(rng.uniform(-scale, scale, size=(d_model, d_model)),
                      requires_grad=True)
    return AttentionParams(wq=mat(), wk=mat(), wv=mat())


def init_dual_params(d_model: int, num_heads: int,
                     rng: np.random.Generator) -> DualAttentionParams:
    if num_heads < 1 or d_model % num_heads != 0:
        raise ShapeError(f"num_heads {num_heads} must divide d_model {d_model}")
    def pair():
        return {"src": init_attention_params(d_model, rng),
                "rep": init_attention_params(d_model, rng)}
    return DualAttentionParams(cross1=pair(), self1=pair(),
                               cross2=pair(), self2=pair(),
                               num_heads=num_heads)


def init_han_params(d_model: int, rng: np.random.Generator) -> HanParams:
    scale = 1.0 / np.sqrt(d_model)
    return HanParams(
        w=Tensor(rng.uniform(-scale, scale, size=(d_model, d_model)), requires_grad=True),
        b=Tensor(np.zeros(d_model), requires_grad=True),
        c=Tensor(rng.uniform(-scale, scale, size=(d_model,)), requires_grad=True),
    )


def _check_seq(x: Tensor, name: str) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{name} must be rank 3 (C, U, d), got {x.shape}")


def _attend(q: Tensor, k: Tensor, v: Tensor, key_mask: Optional[np.ndarray],
            num_heads: int) -> Tensor:
    """Multi-head scaled dot-product attention.

    q, k, v: (C, U, d). key_mask: (C, U) marking which key positions
    may receive weight. Heads are contiguous slices of the feature
    axis, concatenated back after attending.
    """
    d_model = q.shape[-1]
    if d_model % num_heads != 0:
        raise ShapeError(f"num_heads {num_heads} must divide d_model {d_model}")
    d_k = d_model // num_heads
    inv_scale = 1.0 / np.sqrt(d_k)
    mask3 = None if key_mask is None else np.asarray(key_mask)[:, None, :]
    heads = []
    for h in range(num_heads):
        lo, hi = h * d_k, (h + 1) * d_k
        qh = slice_axis(q, -1, lo, hi)
        kh = slice_axis(k, -1, lo, hi)
        vh = slice_axis(v, -1, lo, hi)
        scores = mul(matmul(qh, swap_last_axes(kh)), inv_scale)
        probs = softmax(scores, axis=-1, mask=mask3)
        heads.append(matmul(probs, vh))
    return concat(heads, axis=-1)


def cross_attention(xs: Tensor, xr: Tensor, mode: str,
                    params: Dict[str, AttentionParams],
                    masks: Tuple[np.ndarray, np.ndarray],
                    num_heads: int) -> Tuple[Tensor, Tensor]:
    """One cross-attention stage over both branches.

    "key" mode: each branch queries against the other branch's keys
    while keeping its own values. "value" mode: each branch attends
    over its own keys but pulls the other branch's values.
    """
    if mode not in ("key", "value"):
        raise ValueError(f"cross-attention mode must be 'key' or 'value', got {mode!r}")
    _check_seq(xs, "source input")
    _check_seq(xr, "reply input")
    if xs.shape != xr.shape:
        raise ShapeError(f"branch shapes differ: {xs.shape} vs {xr.shape}")
    mask_s, mask_r = masks
    ps, pr = params["src"], params["rep"]
    qs, ks, vs = matmul(xs, ps.wq), matmul(xs, ps.wk), matmul(xs, ps.wv)
    qr, kr, vr = matmul(xr, pr.wq), matmul(xr, pr.wk), matmul(xr, pr.wv)
    if mode == "key":
        ms = _attend(qs, kr, vs, mask_r, num_heads)
        mr = _attend(qr, ks, vr, mask_s, num_heads)
    else:
        ms = _attend(qs, ks, vr, mask_s, num_heads)
        mr = _attend(qr, kr, vs, mask_r, num_heads)
    return ms, mr


def self_attention(x: Tensor, params: AttentionParams,
                   mask: Optional[np.ndarray], num_heads: int) -> Tensor:
    """Standard multi-head attention of a sequence onto itself."""
    _check_seq(x, "input")
    q, k, v = matmul(x, params.wq), matmul(x, params.wk), matmul(x, params.wv)
    return _attend(q, k, v, mask, num_heads)


def dual_pipeline(hs: Tensor, hr: Tensor, params: DualAttentionParams,
                  masks: Tuple[np.ndarray, np.ndarray]) -> Tuple[Tensor, Tensor]:
    """Key-exchange cross, self, value-exchange cross, self."""
    mask_s, mask_r = masks
    n = params.num_heads
    cs1, cr1 = cross_attention(hs, hr, "key", params.cross1, masks, n)
    ss1 = self_attention(cs1, params.self1["src"], mask_s, n)
    sr1 = self_attention(cr1, params.self1["rep"], mask_r, n)
    cs2, cr2 = cross_attention(ss1, sr1, "value", params.cross2, masks, n)
    ss2 = self_attention(cs2, params.self2["src"], mask_s, n)
    sr2 = self_attention(cr2, params.self2["rep"], mask_r, n)
    return ss2, sr2


def hierarchical_attention(s: Tensor, params: HanParams,
                           mask: Optional[np.ndarray]) -> Tensor:
    """Pool (C, U, d) to (C, d) by soft selection over positions.

    Each position's transformed representation is scored against a
    learned context vector; the softmax over valid positions weights
    the original rows. Fully masked rows pool to the zero vector.
    """
    _check_seq(s, "input")
    c_size, u_size, d_model = s.shape
    a = tanh(add(matmul(s, params.w), params.b))
    scores = reshape(matmul(a, reshape(params.c, (d_model, 1))), (c_size, u_size))
    weights = softmax(scores, axis=-1, mask=mask)
    pooled = matmul(reshape(weights, (c_size, 1, u_size)), s)
    return reshape(pooled, (c_size, d_model))
