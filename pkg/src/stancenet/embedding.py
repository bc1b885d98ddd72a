"""Token sequences and contextual features for texts.

Two providers produce the same shaped output. The toy provider owns a
trainable embedding table and hashes words into a fixed vocabulary,
which is enough for desk-scale training and gradient checks. The file
provider serves precomputed features from a binary embedding store
written offline by a separate export tool.

Binary store layout (little-endian):
  magic "SPLE" | version u32 = 1 | d_model u32 | U u32 | record_count u64
  per record: id_len u16 | id bytes UTF-8 | cls d f32 | seq U*d f32 | mask U u8
  then magic "SPLV" | word_count u64
  per word: len u16 | word bytes UTF-8 | vec d f32
"""

from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass
from typing import BinaryIO, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, FormatError
from .tensor import Tensor, embedding_rows, mul, reshape, slice_axis

VOCAB_SIZE = 2 ** 15
PAD_ID = 0
CLS_ID = 1

_WORD_RE = re.compile(r"\w+", re.UNICODE)

MAGIC_RECORDS = b"SPLE"
MAGIC_WORDS = b"SPLV"
STORE_VERSION = 1


@dataclass
class TokenSequence:
    """Fixed-length id/mask pair for one text."""

    ids: np.ndarray
    attention_mask: np.ndarray
    original_length: int


@dataclass
class EmbeddedText:
    sequence: Tensor  # U x d_model
    cls: Tensor       # d_model
    mask: np.ndarray  # U, values {0, 1}


def _hash_word(word: str) -> int:
    return 2 + zlib.crc32(word.encode("utf-8")) % (VOCAB_SIZE - 2)


def tokenize(text: str, U: int) -> TokenSequence:
    """Lowercase, split on non-word characters, hash, pad or truncate.

    A CLS id is prepended when the text has any tokens, so position 0
    always carries the summary slot. ``original_length`` counts the
    full sequence (CLS included) before truncation; empty text yields
    an all-padding sequence with original_length 0.
    """
    if U < 1:
        raise DataError(f"sequence length must be positive, got {U}")
    words = _WORD_RE.findall(text.lower())
    if words:
        raw = [CLS_ID] + [_hash_word(w) for w in words]
    else:
        raw = []
    original = len(raw)
    ids = np.full(U, PAD_ID, dtype=np.int64)
    kept = min(original, U)
    ids[:kept] = raw[:kept]
    mask = np.zeros(U, dtype=np.int64)
    mask[:kept] = 1
    return TokenSequence(ids=ids, attention_mask=mask, original_length=original)


class ToyEmbeddingProvider:
    """Trainable hashed embedding table standing in for a pretrained encoder."""

    kind = "toy"

    def __init__(self, d_model: int, rng: np.random.Generator,
                 vocab_size: int = VOCAB_SIZE):
        if d_model < 1:
            raise DataError(f"d_model must be positive, got {d_model}")
        self.d_model = d_model
        self.vocab_size = vocab_size
        scale = 1.0 / np.sqrt(d_model)
        self.table = Tensor(rng.uniform(-scale, scale, size=(vocab_size, d_model)),
                            requires_grad=True)

    def embed_batch(self, ids: np.ndarray, mask: np.ndarray) -> Tuple[Tensor, Tensor]:
        """Map a (C, U) id matrix to (C, U, d) features and (C, d) CLS rows.

        Padded positions are forced to exact zeros so downstream code
        can rely on them carrying no signal.
        """
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask, dtype=np.float64)
        raw = embedding_rows(self.table, ids)
        seq = mul(raw, Tensor(mask[..., None]))
        cls = reshape(slice_axis(seq, 1, 0, 1), (ids.shape[0], self.d_model))
        return seq, cls

    def embed(self, tokens: TokenSequence) -> EmbeddedText:
        seq, cls = self.embed_batch(tokens.ids[None, :], tokens.attention_mask[None, :])
        U = tokens.ids.shape[0]
        return EmbeddedText(
            sequence=reshape(seq, (U, self.d_model)),
            cls=reshape(cls, (self.d_model,)),
            mask=np.asarray(tokens.attention_mask, dtype=np.int64),
        )

    def word_vector(self, word: str) -> Tensor:
        """Trainable vector for one word (first token of it)."""
        words = _WORD_RE.findall(word.lower())
        if not words:
            raise DataError(f"cannot embed word with no tokens: {word!r}")
        ids = np.array([[_hash_word(words[0])]], dtype=np.int64)
        return reshape(embedding_rows(self.table, ids), (self.d_model,))

    def parameters(self) -> Dict[str, Tensor]:
        return {"embed.table": self.table}


class EmbeddingStore:
    """Read-only mapping from record ids to precomputed features."""

    kind = "file"

    def __init__(self, d_model: int, U: int,
                 records: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]],
                 word_vectors: Dict[str, np.ndarray]):
        self.d_model = d_model
        self.U = U
        self._records = records
        self._word_vectors = word_vectors

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._records

    @property
    def word_count(self) -> int:
        return len(self._word_vectors)

    def record(self, record_id: str) -> EmbeddedText:
        try:
            cls, seq, mask = self._records[record_id]
        except KeyError:
            raise DataError(f"lookup failed: no embedding record {record_id!r}") from None
        return EmbeddedText(sequence=Tensor(seq), cls=Tensor(cls),
                            mask=mask.astype(np.int64))

    def record_arrays(self, record_id: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        try:
            return self._records[record_id]
        except KeyError:
            raise DataError(f"lookup failed: no embedding record {record_id!r}") from None

    def record_ids(self) -> List[str]:
        return list(self._records.keys())

    def word_vector(self, word: str) -> Tensor:
        key = word.lower()
        try:
            return Tensor(self._word_vectors[key])
        except KeyError:
            raise DataError(f"lookup failed: no word vector for {word!r}") from None

    def has_word(self, word: str) -> bool:
        return word.lower() in self._word_vectors

    def parameters(self) -> Dict[str, Tensor]:
        return {}


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def load_embedding_store(path: str) -> EmbeddingStore:
    """Parse a binary embedding store, validating structure as it reads."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC_RECORDS:
            raise FormatError(f"bad magic: expected {MAGIC_RECORDS!r}, got {magic!r}")
        version, d_model, U = struct.unpack("<III", _read_exact(fh, 12, "header"))
        if version != STORE_VERSION:
            raise FormatError(f"version mismatch: expected {STORE_VERSION}, got {version}")
        if d_model < 1 or U < 1:
            raise FormatError(f"invalid header dims: d_model={d_model}, U={U}")
        (record_count,) = struct.unpack("<Q", _read_exact(fh, 8, "record count"))

        records: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for i in range(record_count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
            rid = _read_exact(fh, id_len, f"record {i} id").decode("utf-8")
            cls = np.frombuffer(
                _read_exact(fh, 4 * d_model, f"record {rid} cls"), dtype="<f4"
            ).astype(np.float64)
            seq = np.frombuffer(
                _read_exact(fh, 4 * U * d_model, f"record {rid} sequence"), dtype="<f4"
            ).astype(np.float64).reshape(U, d_model)
            mask = np.frombuffer(
                _read_exact(fh, U, f"record {rid} mask"), dtype=np.uint8
            ).astype(np.int64)
            if not np.all((mask == 0) | (mask == 1)):
                raise FormatError(f"record {rid!r} mask has values outside {{0,1}}")
            records[rid] = (cls, seq, mask)

        magic2 = _read_exact(fh, 4, "word-section magic")
        if magic2 != MAGIC_WORDS:
            raise FormatError(f"bad magic: expected {MAGIC_WORDS!r}, got {magic2!r}")
        (word_count,) = struct.unpack("<Q", _read_exact(fh, 8, "word count"))
        words: Dict[str, np.ndarray] = {}
        for i in range(word_count):
            (wlen,) = struct.unpack("<H", _read_exact(fh, 2, f"word {i} length"))
            word = _read_exact(fh, wlen, f"word {i}").decode("utf-8")
            vec = np.frombuffer(
                _read_exact(fh, 4 * d_model, f"word {word!r} vector"), dtype="<f4"
            ).astype(np.float64)
            words[word.lower()] = vec
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after word-vector section")
    return EmbeddingStore(d_model=d_model, U=U, records=records, word_vectors=words)


def write_embedding_store(path: str, d_model: int, U: int,
                          records: Sequence[Tuple[str, np.ndarray, np.ndarray, np.ndarray]],
                          word_vectors: Iterable[Tuple[str, np.ndarray]]) -> None:
    """Serialize records and word vectors in the binary store layout.

    Each record is (id, cls, seq, mask) with shapes (d,), (U, d), (U,).
    Used by tests for round-trip checks; the offline exporter writes
    the same layout independently.
    """
    word_list = list(word_vectors)
    with open(path, "wb") as fh:
        fh.write(MAGIC_RECORDS)
        fh.write(struct.pack("<III", STORE_VERSION, d_model, U))
        fh.write(struct.pack("<Q", len(records)))
        for rid, cls, seq, mask in records:
            cls = np.asarray(cls, dtype="<f4").reshape(d_model)
            seq = np.asarray(seq, dtype="<f4").reshape(U, d_model)
            mask = np.asarray(mask, dtype=np.uint8).reshape(U)
            id_bytes = rid.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(cls.tobytes())
            fh.write(seq.tobytes())
            fh.write(mask.tobytes())
        fh.write(MAGIC_WORDS)
        fh.write(struct.pack("<Q", len(word_list)))
        for word, vec in word_list:
            vec = np.asarray(vec, dtype="<f4").reshape(d_model)
            word_bytes = word.encode("utf-8")
            fh.write(struct.pack("<H", len(word_bytes)))
            fh.write(word_bytes)
            fh.write(vec.tobytes())


def embed(tokens: TokenSequence, provider, record_id: Optional[str] = None) -> EmbeddedText:
    """Provider-dispatching embed: toy providers use the token ids,
    stores use the record id."""
    if isinstance(provider, EmbeddingStore):
        if record_id is None:
            raise DataError("embedding store lookups need a record id")
        return provider.record(record_id)
    return provider.embed(tokens)
