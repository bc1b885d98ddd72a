"""Dataset reading and binary embedding-store writing.

Output layout (little-endian), shared with the training pipeline that
consumes these files:

  magic "SPLE" | version u32 = 1 | d_model u32 | U u32 | record_count u64
  per record: id_len u16 | id bytes UTF-8 | cls d f32 | seq U*d f32 | mask U u8
  then magic "SPLV" | word_count u64
  per word: len u16 | word bytes UTF-8 | vec d f32

Each dataset example contributes two records, "<id>#s" for the source
text and "<id>#r" for the reply. The word section carries vectors for
the ten emotion words plus every word appearing in a label name, so
the consumer can embed emotion profiles and label anchors without the
encoder. A sibling JSON manifest records the run settings and a
content hash of the binary.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from typing import Dict, List, Tuple

import numpy as np

EMOTION_WORDS = ("fear", "anger", "anticipation", "trust", "surprise",
                 "positive", "negative", "sadness", "disgust", "joy")

_WORD_RE = re.compile(r"\w+", re.UNICODE)

MAGIC_RECORDS = b"SPLE"
MAGIC_WORDS = b"SPLV"
VERSION = 1
BATCH = 16


class ExportError(Exception):
    pass


def read_dataset(path: str) -> List[dict]:
    """Parse the source/reply JSONL schema, keeping usable rows.

    Rows missing id, source_text, or reply_text are skipped (the
    consumer drops them too, so nothing it keeps can miss a record).
    Duplicate ids are an error because record ids key the store.
    """
    rows = []
    seen = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise ExportError(f"dataset not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ExportError(f"{path}:{lineno}: record must be an object")
            rid = obj.get("id")
            source = obj.get("source_text")
            reply = obj.get("reply_text")
            if rid is None or not source or not reply:
                continue
            rid = str(rid)
            if rid in seen:
                raise ExportError(f"{path}:{lineno}: duplicate record id {rid!r}")
            seen.add(rid)
            rows.append({"id": rid, "source_text": str(source),
                         "reply_text": str(reply),
                         "label": str(obj.get("label", ""))})
    return rows


def _label_words(rows: List[dict]) -> List[str]:
    words = set()
    for row in rows:
        for w in _WORD_RE.findall(row["label"].lower()):
            words.add(w)
    return sorted(words)


def _write_store(path: str, d_model: int, U: int,
                 records: List[Tuple[str, np.ndarray, np.ndarray, np.ndarray]],
                 word_vectors: List[Tuple[str, np.ndarray]]) -> str:
    digest = hashlib.sha256()

    def emit(fh, chunk: bytes) -> None:
        fh.write(chunk)
        digest.update(chunk)

    with open(path, "wb") as fh:
        emit(fh, MAGIC_RECORDS)
        emit(fh, struct.pack("<III", VERSION, d_model, U))
        emit(fh, struct.pack("<Q", len(records)))
        for rid, cls, seq, mask in records:
            id_bytes = rid.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ExportError(f"record id too long: {rid[:32]}...")
            emit(fh, struct.pack("<H", len(id_bytes)))
            emit(fh, id_bytes)
            emit(fh, np.asarray(cls, dtype="<f4").reshape(d_model).tobytes())
            emit(fh, np.asarray(seq, dtype="<f4").reshape(U, d_model).tobytes())
            emit(fh, np.asarray(mask, dtype=np.uint8).reshape(U).tobytes())
        emit(fh, MAGIC_WORDS)
        emit(fh, struct.pack("<Q", len(word_vectors)))
        for word, vec in word_vectors:
            word_bytes = word.encode("utf-8")
            emit(fh, struct.pack("<H", len(word_bytes)))
            emit(fh, word_bytes)
            emit(fh, np.asarray(vec, dtype="<f4").reshape(d_model).tobytes())
    return f"sha256:{digest.hexdigest()}"


def manifest_path(out_path: str) -> str:
    return out_path + ".manifest.json"


def export(data_path: str, encoder, U: int, out_path: str) -> Dict:
    """Encode a dataset and write the embedding store plus manifest."""
    if U < 1:
        raise ExportError(f"max length must be positive, got {U}")
    rows = read_dataset(data_path)
    if not rows:
        raise ExportError(f"no usable records in {data_path}")

    records: List[Tuple[str, np.ndarray, np.ndarray, np.ndarray]] = []
    for start in range(0, len(rows), BATCH):
        chunk = rows[start:start + BATCH]
        texts = [r["source_text"] for r in chunk] + [r["reply_text"] for r in chunk]
        encoded = encoder.encode(texts, U)
        for i, row in enumerate(chunk):
            cls_s, seq_s, mask_s = encoded[i]
            cls_r, seq_r, mask_r = encoded[len(chunk) + i]
            records.append((f"{row['id']}#s", cls_s, seq_s, mask_s))
            records.append((f"{row['id']}#r", cls_r, seq_r, mask_r))

    words = list(EMOTION_WORDS) + [w for w in _label_words(rows)
                                   if w not in EMOTION_WORDS]
    word_vectors = [(w, encoder.word_vector(w)) for w in words]

    content_hash = _write_store(out_path, encoder.d_model, U, records,
                                word_vectors)
    manifest = {
        "encoder": encoder.name,
        "d_model": encoder.d_model,
        "U": U,
        "dataset": data_path,
        "record_count": len(records),
        "word_count": len(word_vectors),
        "content_hash": content_hash,
    }
    with open(manifest_path(out_path), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
