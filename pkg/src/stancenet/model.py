"""Full stance-detection pipeline wiring.

A StanceModel owns the embedding provider, attention and fusion
parameters, the frozen label embeddings, and (optionally) an emotion
lexicon. Its forward pass takes a batch of examples and produces
class probabilities plus the named intermediate vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint as ckpt
from .affect import (EmotionLexicon, extract_emotions, emotion_divergence,
                     emotion_feature, feature_closeness)
from .attention import (DualAttentionParams, HanParams, dual_pipeline,
                        hierarchical_attention, init_dual_params,
                        init_han_params)
from .embedding import EmbeddingStore, ToyEmbeddingProvider, tokenize
from .errors import DataError, FormatError, ShapeError
from .fusion import (ClassifierParams, FusionParams, LabelSet, classify,
                     concat_features, init_classifier_params,
                     init_fusion_params, label_fusion)
from .tensor import Tensor, concat, reshape


@dataclass
class ModelConfig:
    d_model: int = 64
    U: int = 50
    K: int = 3
    num_heads: int = 4
    labels: Sequence[str] = ("support", "query", "deny", "comment")
    dropout: float = 0.2

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)

    def validate(self) -> None:
        if self.d_model < 4 or self.d_model % 4 != 0:
            raise DataError(f"d_model must be a positive multiple of 4, got {self.d_model}")
        if self.num_heads < 1 or self.d_model % self.num_heads != 0:
            raise DataError(f"num_heads {self.num_heads} must divide d_model {self.d_model}")
        if self.U < 1:
            raise DataError(f"U must be positive, got {self.U}")
        if self.K < 1:
            raise DataError(f"K must be positive, got {self.K}")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")
        if len(self.labels) < 2:
            raise DataError(f"need at least 2 labels, got {list(self.labels)}")


@dataclass
class ForwardResult:
    probabilities: Tensor            # C x L
    v_s: Tensor                      # C x d
    v_r: Tensor                      # C x d
    delta_e: Tensor                  # C x d
    delta_h: Tensor                  # C x d
    f_fsd: Tensor                    # C x (4d + L*d/4)
    source_profiles: List[list] = field(default_factory=list)
    reply_profiles: List[list] = field(default_factory=list)


class StanceModel:
    def __init__(self, config: ModelConfig, provider,
                 lexicon: Optional[EmotionLexicon],
                 rng: Optional[np.random.Generator] = None,
                 labels: Optional[LabelSet] = None):
        config.validate()
        if rng is None:
            rng = np.random.default_rng(0)
        if isinstance(provider, EmbeddingStore):
            if provider.d_model != config.d_model:
                raise FormatError(f"dimension conflict: store d_model {provider.d_model} "
                                  f"!= model d_model {config.d_model}")
            if provider.U != config.U:
                raise FormatError(f"dimension conflict: store U {provider.U} "
                                  f"!= model U {config.U}")
        self.config = config
        self.provider = provider
        self.lexicon = lexicon
        d = config.d_model
        self.attn: DualAttentionParams = init_dual_params(d, config.num_heads, rng)
        self.han_src: HanParams = init_han_params(d, rng)
        self.han_rep: HanParams = init_han_params(d, rng)
        self.labels: LabelSet = labels if labels is not None else \
            LabelSet.from_word_vectors(config.labels, provider)
        if self.labels.d_model != d:
            raise ShapeError(f"label embedding width {self.labels.d_model} != d_model {d}")
        self.fusion: FusionParams = init_fusion_params(d, rng)
        self.clf: ClassifierParams = init_classifier_params(
            d, self.labels.L, rng, dropout_rate=config.dropout)

    # ------------------------------------------------------------------
    # parameter bookkeeping
    # ------------------------------------------------------------------

    def parameters(self) -> Dict[str, Tensor]:
        """Trainable tensors by stable name."""
        out: Dict[str, Tensor] = {}
        out.update(self.provider.parameters())
        out.update(self.attn.named("attn"))
        for branch, han in (("src", self.han_src), ("rep", self.han_rep)):
            out[f"han.{branch}.w"] = han.w
            out[f"han.{branch}.b"] = han.b
            out[f"han.{branch}.c"] = han.c
        out.update(self.fusion.named("fusion"))
        out.update(self.clf.named("clf"))
        return out

    def all_tensors(self) -> Dict[str, Tensor]:
        """Trainable parameters plus the frozen label embeddings."""
        out = dict(self.parameters())
        out["labels.embed"] = self.labels.embeddings
        return out

    # ------------------------------------------------------------------
    # forward pass
    # ------------------------------------------------------------------

    def _embed_batch(self, examples: Sequence) -> Tuple[Tensor, Tensor, Tensor,
                                                        Tensor, np.ndarray, np.ndarray]:
        U, d = self.config.U, self.config.d_model
        if isinstance(self.provider, EmbeddingStore):
            cls_s, seq_s, mask_s = [], [], []
            cls_r, seq_r, mask_r = [], [], []
            for ex in examples:
                cs, ss, ms = self.provider.record_arrays(f"{ex.id}#s")
                cr, sr, mr = self.provider.record_arrays(f"{ex.id}#r")
                cls_s.append(cs); seq_s.append(ss); mask_s.append(ms)
                cls_r.append(cr); seq_r.append(sr); mask_r.append(mr)
            hs = Tensor(np.stack(seq_s))
            hr = Tensor(np.stack(seq_r))
            return (hs, hr, Tensor(np.stack(cls_s)), Tensor(np.stack(cls_r)),
                    np.stack(mask_s), np.stack(mask_r))
        toks_s = [tokenize(ex.source_text, U) for ex in examples]
        toks_r = [tokenize(ex.reply_text, U) for ex in examples]
        ids_s = np.stack([t.ids for t in toks_s])
        ids_r = np.stack([t.ids for t in toks_r])
        mask_s = np.stack([t.attention_mask for t in toks_s])
        mask_r = np.stack([t.attention_mask for t in toks_r])
        hs, cls_s = self.provider.embed_batch(ids_s, mask_s)
        hr, cls_r = self.provider.embed_batch(ids_r, mask_r)
        return hs, hr, cls_s, cls_r, mask_s, mask_r

    def _emotion_batch(self, texts: Sequence[str]) -> Tuple[Tensor, List[list]]:
        d = self.config.d_model
        profiles = []
        rows = []
        for text in texts:
            profile = (extract_emotions(text, self.lexicon, self.config.K)
                       if self.lexicon is not None else [])
            profiles.append(profile)
            vec = emotion_feature(profile, self.provider)
            rows.append(reshape(vec, (1, d)))
        return concat(rows, axis=0), profiles

    def forward(self, examples: Sequence, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> ForwardResult:
        if not examples:
            raise DataError("empty batch")
        hs, hr, cls_s, cls_r, mask_s, mask_r = self._embed_batch(examples)
        ss2, sr2 = dual_pipeline(hs, hr, self.attn, (mask_s, mask_r))
        v_s = hierarchical_attention(ss2, self.han_src, mask_s)
        v_r = hierarchical_attention(sr2, self.han_rep, mask_r)
        delta_h = feature_closeness(cls_s, cls_r)
        h_es, src_profiles = self._emotion_batch([ex.source_text for ex in examples])
        h_er, rep_profiles = self._emotion_batch([ex.reply_text for ex in examples])
        delta_e = emotion_divergence(h_es, h_er)
        f_cnct = concat_features(v_s, v_r, delta_e, delta_h)
        f_fsd = label_fusion(f_cnct, self.labels, self.fusion)
        probs = classify(f_fsd, self.clf, training, rng)
        return ForwardResult(probabilities=probs, v_s=v_s, v_r=v_r,
                             delta_e=delta_e, delta_h=delta_h, f_fsd=f_fsd,
                             source_profiles=src_profiles, reply_profiles=rep_profiles)

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path: str, extra_config: Optional[dict] = None) -> None:
        cfg = {
            "d_model": self.config.d_model,
            "U": self.config.U,
            "K": self.config.K,
            "num_heads": self.config.num_heads,
            "labels": list(self.labels.names),
            "dropout": self.config.dropout,
            "provider": {"type": self.provider.kind},
        }
        if extra_config:
            cfg.update(extra_config)
        ckpt.save_checkpoint(path, self.config.d_model, self.config.U,
                             self.labels.L, self.all_tensors(), cfg)

    @classmethod
    def load(cls, path: str, provider=None,
             lexicon: Optional[EmotionLexicon] = None) -> "StanceModel":
        """Rebuild a model from a checkpoint and its sidecar config.

        ``provider`` overrides the provider named in the sidecar; with
        a toy sidecar entry the table is restored from the checkpoint.
        """
        header, tensors, cfg = ckpt.load_checkpoint(path)
        config = ModelConfig(d_model=header["d_model"], U=header["U"],
                             K=int(cfg.get("K", 3)),
                             num_heads=int(cfg.get("num_heads", 4)),
                             labels=list(cfg.get("labels", [])),
                             dropout=float(cfg.get("dropout", 0.2)))
        if len(config.labels) != header["L"]:
            raise FormatError(f"sidecar lists {len(config.labels)} labels but "
                              f"header says {header['L']}")
        if provider is None:
            ptype = cfg.get("provider", {}).get("type", "toy")
            if ptype == "toy":
                provider = ToyEmbeddingProvider(config.d_model, np.random.default_rng(0))
            else:
                ppath = cfg.get("provider", {}).get("path")
                if not ppath:
                    raise DataError("checkpoint uses a file provider; pass the "
                                    "embedding store or record its path in the sidecar")
                from .embedding import load_embedding_store
                provider = load_embedding_store(ppath)
        if "labels.embed" not in tensors:
            raise FormatError("checkpoint missing tensor 'labels.embed'")
        labels = LabelSet(config.labels,
                          tensors["labels.embed"].astype(np.float64))
        model = cls(config, provider, lexicon, rng=np.random.default_rng(0),
                    labels=labels)
        params = model.parameters()
        for name, param in params.items():
            if name not in tensors:
                raise FormatError(f"checkpoint missing tensor {name!r}")
            loaded = tensors[name].astype(np.float64)
            if loaded.shape != param.data.shape:
                raise FormatError(f"checkpoint tensor {name!r} has shape "
                                  f"{loaded.shape}, expected {param.data.shape}")
            param.data = loaded
        known = set(params) | {"labels.embed"}
        extra = sorted(set(tensors) - known)
        if extra:
            raise FormatError(f"checkpoint has unknown tensors: {extra}")
        return model
