"""Command-line interface: train, evaluate, predict, dump-intermediates.

Configuration comes from an optional JSON file plus flag overrides.
Every failure exits with a classified code (0 success, 2 usage,
3 data problems, 4 numeric divergence) and a single machine-parsable
stderr line of the form ``<class>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .affect import load_lexicon
from .data import Example, load_dataset, normalize_text, stratified_split
from .embedding import ToyEmbeddingProvider, load_embedding_store
from .errors import DataError, StanceNetError
from .model import ModelConfig, StanceModel
from .train import (TrainSettings, evaluate_model, rng_streams, train_model)

DEFAULT_LABELS = ["support", "query", "deny", "comment"]

_CONFIG_KEYS = {
    "d_model", "U", "K", "num_heads", "labels", "provider", "lexicon_path",
    "lr", "batch_size", "epochs", "dropout", "weight_decay", "patience",
    "early_stopping", "class_weighting", "seed", "flatten",
}


@dataclass
class RunConfig:
    d_model: int = 64
    U: int = 50
    K: int = 3
    num_heads: int = 4
    labels: List[str] = field(default_factory=lambda: list(DEFAULT_LABELS))
    provider: dict = field(default_factory=lambda: {"type": "toy"})
    lexicon_path: Optional[str] = None
    lr: float = 2e-6
    batch_size: int = 8
    epochs: int = 10
    dropout: float = 0.2
    weight_decay: float = 2e-6
    patience: int = 3
    early_stopping: bool = True
    class_weighting: bool = False
    seed: int = 0
    flatten: bool = False

    def model_config(self) -> ModelConfig:
        return ModelConfig(d_model=self.d_model, U=self.U, K=self.K,
                           num_heads=self.num_heads, labels=list(self.labels),
                           dropout=self.dropout)

    def train_settings(self) -> TrainSettings:
        if self.lr <= 0:
            raise DataError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise DataError(f"batch size must be positive, got {self.batch_size}")
        if self.epochs < 1:
            raise DataError(f"epochs must be positive, got {self.epochs}")
        if self.patience < 0:
            raise DataError(f"patience must be non-negative, got {self.patience}")
        return TrainSettings(lr=self.lr, batch_size=self.batch_size,
                             epochs=self.epochs, weight_decay=self.weight_decay,
                             early_stopping=self.early_stopping,
                             patience=self.patience,
                             class_weighting=self.class_weighting)


def load_config(path: Optional[str], seed_override: Optional[int] = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{exc.lineno}: config parse error: {exc.msg}") \
                from None
        if not isinstance(raw, dict):
            raise DataError(f"{path}: config must be a JSON object")
        unknown = sorted(set(raw) - _CONFIG_KEYS)
        if unknown:
            raise DataError(f"{path}: unknown config keys: {unknown}")
        for key, value in raw.items():
            setattr(cfg, key, value)
        cfg.labels = [str(x) for x in cfg.labels]
    if seed_override is not None:
        cfg.seed = seed_override
    return cfg


def _build_provider(cfg: RunConfig, init_rng: np.random.Generator):
    ptype = cfg.provider.get("type", "toy")
    if ptype == "toy":
        return ToyEmbeddingProvider(cfg.d_model, init_rng)
    if ptype == "file":
        path = cfg.provider.get("path")
        if not path:
            raise DataError("file provider needs a 'path' entry in config")
        store = load_embedding_store(path)
        return store
    raise DataError(f"unknown provider type {ptype!r}")


def _build_model(cfg: RunConfig, init_rng: np.random.Generator) -> StanceModel:
    provider = _build_provider(cfg, init_rng)
    lexicon = load_lexicon(cfg.lexicon_path) if cfg.lexicon_path else None
    return StanceModel(cfg.model_config(), provider, lexicon, rng=init_rng)


def _load_split_data(args, cfg: RunConfig):
    if args.data is not None:
        examples = load_dataset(args.data, cfg.labels, flatten=cfg.flatten)
        has_splits = any(ex.split != "train" for ex in examples)
        if has_splits:
            train = [ex for ex in examples if ex.split == "train"]
            val = [ex for ex in examples if ex.split == "val"]
        else:
            train, val, _test = stratified_split(examples, args.split_seed)
        return train, val
    if args.train is None or args.val is None:
        raise DataError("provide either --data or both --train and --val")
    train = load_dataset(args.train, cfg.labels, flatten=cfg.flatten)
    val = load_dataset(args.val, cfg.labels, flatten=cfg.flatten)
    return train, val


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    init_rng, dropout_rng, shuffle_rng = rng_streams(cfg.seed)
    model = _build_model(cfg, init_rng)
    train_examples, val_examples = _load_split_data(args, cfg)
    log = None if args.quiet else (lambda line: print(line))
    result = train_model(model, train_examples, val_examples,
                         cfg.train_settings(), dropout_rng, shuffle_rng, log=log)
    extra = {"seed": cfg.seed}
    if cfg.lexicon_path:
        extra["lexicon_path"] = cfg.lexicon_path
    if cfg.provider.get("type") == "file":
        extra["provider"] = dict(cfg.provider)
    model.save(args.out, extra_config=extra)
    if not args.quiet:
        print(f"best epoch {result.best_epoch} val_macro_f1 {result.best_metric:.4f}"
              + (" (early stop)" if result.stopped_early else ""))
        print(f"checkpoint written to {args.out}")
    return 0


def _load_model(path: str, lexicon_path: Optional[str] = None) -> StanceModel:
    from . import checkpoint as ckpt
    _header, _tensors, sidecar = ckpt.load_checkpoint(path)
    lex_path = lexicon_path or sidecar.get("lexicon_path")
    lexicon = load_lexicon(lex_path) if lex_path else None
    return StanceModel.load(path, lexicon=lexicon)


def _cmd_evaluate(args) -> int:
    model = _load_model(args.model, args.lexicon)
    examples = load_dataset(args.data, model.labels.names, flatten=args.flatten)
    if not examples:
        raise DataError(f"no usable examples in {args.data}")
    loss, report = evaluate_model(model, examples)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    if not args.quiet:
        print(f"n {report.n} loss {loss:.6f} accuracy {report.accuracy:.4f} "
              f"macro_p {report.macro['precision']:.4f} "
              f"macro_r {report.macro['recall']:.4f} "
              f"macro_f1 {report.macro['f1']:.4f}")
        print(f"report written to {args.report}")
    return 0


def _cmd_predict(args) -> int:
    model = _load_model(args.model, args.lexicon)
    source = normalize_text(args.source)
    reply = normalize_text(args.reply)
    if not source:
        raise DataError("source text is empty after normalization")
    if not reply:
        raise DataError("reply text is empty after normalization")
    example = Example(id=args.id or "cli", source_text=source, reply_text=reply,
                      label=model.labels.names[0])
    result = model.forward([example], training=False)
    probs = result.probabilities.data[0]
    pred = int(np.argmax(probs))
    print(f"label {model.labels.names[pred]}")
    for name, p in zip(model.labels.names, probs):
        print(f"p({name}) {p:.6f}")
    def fmt(profile):
        return ", ".join(f"{name} {score:.4f}" for name, score in profile) or "-"
    print(f"source emotions: {fmt(result.source_profiles[0])}")
    print(f"reply emotions: {fmt(result.reply_profiles[0])}")
    return 0


def _cmd_dump(args) -> int:
    model = _load_model(args.model, args.lexicon)
    examples = load_dataset(args.data, model.labels.names, flatten=args.flatten)
    if not examples:
        raise DataError(f"no usable examples in {args.data}")
    with open(args.out, "w", encoding="utf-8") as fh:
        for start in range(0, len(examples), 8):
            batch = examples[start:start + 8]
            result = model.forward(batch, training=False)
            for i, ex in enumerate(batch):
                record = {
                    "id": ex.id,
                    "label": ex.label,
                    "v_s": result.v_s.data[i].tolist(),
                    "v_r": result.v_r.data[i].tolist(),
                    "delta_e": result.delta_e.data[i].tolist(),
                    "delta_h": result.delta_h.data[i].tolist(),
                    "f_fsd": result.f_fsd.data[i].tolist(),
                }
                fh.write(json.dumps(record) + "\n")
    if not args.quiet:
        print(f"wrote {len(examples)} records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stancenet",
        description="Stance detection over source/reply text pairs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="root RNG seed")
        p.add_argument("--quiet", action="store_true")

    p_train = sub.add_parser("train", help="train a model")
    common(p_train)
    p_train.add_argument("--train", default=None, help="training JSONL file")
    p_train.add_argument("--val", default=None, help="validation JSONL file")
    p_train.add_argument("--data", default=None,
                         help="single JSONL file; uses split fields or --split-seed")
    p_train.add_argument("--split-seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint")
    common(p_eval)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--report", required=True, help="JSON report output path")
    p_eval.add_argument("--lexicon", default=None)
    p_eval.add_argument("--flatten", action="store_true")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_pred = sub.add_parser("predict", help="classify one source/reply pair")
    common(p_pred)
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--source", required=True)
    p_pred.add_argument("--reply", required=True)
    p_pred.add_argument("--id", default=None,
                        help="record id for file-provider lookups")
    p_pred.add_argument("--lexicon", default=None)
    p_pred.set_defaults(func=_cmd_predict)

    p_dump = sub.add_parser("dump-intermediates",
                            help="write per-example feature vectors")
    common(p_dump)
    p_dump.add_argument("--model", required=True)
    p_dump.add_argument("--data", required=True)
    p_dump.add_argument("--out", required=True)
    p_dump.add_argument("--lexicon", default=None)
    p_dump.add_argument("--flatten", action="store_true")
    p_dump.set_defaults(func=_cmd_dump)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StanceNetError as exc:
        print(f"{exc.prefix}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"data: file not found: {exc.filename}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
