"""Tokenizer determinism, provider output contracts, and the binary
embedding store round-trip."""

import struct

import numpy as np
import pytest

from stancenet.embedding import (EmbeddingStore, ToyEmbeddingProvider,
                                 load_embedding_store, tokenize,
                                 write_embedding_store, embed,
                                 CLS_ID, PAD_ID, VOCAB_SIZE)
from stancenet.errors import DataError, FormatError
from stancenet.tensor import Tensor, backward, sum_, mul


class TestTokenize:
    def test_repeated_word_repeats_id(self):
        toks = tokenize("hello hello", U=5)
        # position 0 is the summary slot; the two words follow
        assert toks.ids[1] == toks.ids[2]
        assert toks.ids[0] == CLS_ID

    def test_three_token_mask(self):
        # two words plus the prepended summary slot = 3 live positions
        toks = tokenize("good morning", U=5)
        np.testing.assert_array_equal(toks.attention_mask, [1, 1, 1, 0, 0])
        assert toks.original_length == 3

    def test_long_text_truncates_and_records_length(self):
        text = " ".join(f"w{i}" for i in range(59))
        toks = tokenize(text, U=50)
        assert len(toks.ids) == 50
        assert toks.attention_mask.sum() == 50
        assert toks.original_length == 60

    def test_empty_text_is_all_padding(self):
        toks = tokenize("", U=4)
        np.testing.assert_array_equal(toks.ids, [PAD_ID] * 4)
        np.testing.assert_array_equal(toks.attention_mask, [0, 0, 0, 0])
        assert toks.original_length == 0

    def test_pure_function_across_calls(self):
        a = tokenize("The Quick, Brown fox!", U=8)
        b = tokenize("The Quick, Brown fox!", U=8)
        np.testing.assert_array_equal(a.ids, b.ids)
        np.testing.assert_array_equal(a.attention_mask, b.attention_mask)

    def test_case_insensitive(self):
        a = tokenize("Hello World", U=4)
        b = tokenize("hello world", U=4)
        np.testing.assert_array_equal(a.ids, b.ids)

    def test_ids_stay_in_vocab(self):
        toks = tokenize("a b c d e f g h i j", U=12)
        live = toks.ids[toks.attention_mask == 1]
        assert live.max() < VOCAB_SIZE
        assert (live[1:] >= 2).all()


class TestToyProvider:
    def test_output_shapes(self):
        prov = ToyEmbeddingProvider(8, np.random.default_rng(0))
        rec = prov.embed(tokenize("stance detection test", U=6))
        assert rec.sequence.shape == (6, 8)
        assert rec.cls.shape == (8,)

    def test_same_tokens_identical_output(self):
        prov = ToyEmbeddingProvider(8, np.random.default_rng(0))
        toks = tokenize("same text", U=5)
        a = prov.embed(toks)
        b = prov.embed(toks)
        np.testing.assert_array_equal(a.sequence.data, b.sequence.data)

    def test_padded_rows_exactly_zero(self):
        prov = ToyEmbeddingProvider(8, np.random.default_rng(1))
        rec = prov.embed(tokenize("two words", U=7))
        np.testing.assert_array_equal(rec.sequence.data[3:], np.zeros((4, 8)))

    def test_cls_row_is_position_zero(self):
        prov = ToyEmbeddingProvider(8, np.random.default_rng(2))
        rec = prov.embed(tokenize("anything here", U=5))
        np.testing.assert_array_equal(rec.cls.data, rec.sequence.data[0])

    def test_gradient_reaches_embedding_table(self):
        prov = ToyEmbeddingProvider(4, np.random.default_rng(3))
        toks = tokenize("alpha beta", U=4)
        rec = prov.embed(toks)
        backward(sum_(mul(rec.sequence, 2.0)))
        used = set(toks.ids[toks.attention_mask == 1])
        grad_rows = {int(i) for i in np.nonzero(np.abs(prov.table.grad).sum(axis=1))[0]}
        assert grad_rows == used

    def test_word_vector_matches_table_row(self):
        prov = ToyEmbeddingProvider(4, np.random.default_rng(4))
        toks = tokenize("joy", U=3)
        vec = prov.word_vector("joy")
        np.testing.assert_array_equal(vec.data, prov.table.data[toks.ids[1]])


def _toy_store_payload(d=6, U=4, n=3, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        mask = np.zeros(U, dtype=np.uint8)
        mask[: 1 + i % U] = 1
        seq = rng.normal(size=(U, d)).astype(np.float32)
        seq[mask == 0] = 0.0
        records.append((f"ex{i}#s", rng.normal(size=d).astype(np.float32), seq, mask))
    words = [("joy", rng.normal(size=d).astype(np.float32)),
             ("fear", rng.normal(size=d).astype(np.float32))]
    return records, words


class TestStoreRoundTrip:
    def test_write_then_read_bit_identical(self, tmp_path):
        path = str(tmp_path / "emb.bin")
        records, words = _toy_store_payload()
        write_embedding_store(path, 6, 4, records, words)
        store = load_embedding_store(path)
        assert store.d_model == 6 and store.U == 4 and len(store) == 3
        for rid, cls, seq, mask in records:
            rec = store.record(rid)
            # floats written as f32 must come back bit-identical
            np.testing.assert_array_equal(rec.cls.data.astype(np.float32), cls)
            np.testing.assert_array_equal(rec.sequence.data.astype(np.float32), seq)
            np.testing.assert_array_equal(rec.mask, mask.astype(np.int64))
        np.testing.assert_array_equal(store.word_vector("joy").data.astype(np.float32),
                                      words[0][1])

    def test_empty_store_loads(self, tmp_path):
        path = str(tmp_path / "empty.bin")
        write_embedding_store(path, 8, 5, [], [])
        store = load_embedding_store(path)
        assert len(store) == 0 and store.word_count == 0

    def test_unknown_record_lookup_fails(self, tmp_path):
        path = str(tmp_path / "emb.bin")
        records, words = _toy_store_payload()
        write_embedding_store(path, 6, 4, records, words)
        store = load_embedding_store(path)
        with pytest.raises(DataError, match="lookup"):
            store.record("missing#s")
        with pytest.raises(DataError, match="lookup"):
            store.word_vector("sadness")

    def test_embed_dispatch(self, tmp_path):
        path = str(tmp_path / "emb.bin")
        records, words = _toy_store_payload()
        write_embedding_store(path, 6, 4, records, words)
        store = load_embedding_store(path)
        rec = embed(tokenize("ignored", U=4), store, record_id="ex0#s")
        assert rec.sequence.shape == (4, 6)
        with pytest.raises(DataError):
            embed(tokenize("ignored", U=4), store)


class TestStoreErrors:
    def test_bad_magic_names_both(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(FormatError) as err:
            load_embedding_store(str(path))
        msg = str(err.value)
        assert "SPLE" in msg and "XXXX" in msg

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"SPLE" + struct.pack("<IIIQ", 9, 4, 4, 0))
        with pytest.raises(FormatError, match="version"):
            load_embedding_store(str(path))

    def test_truncated_record(self, tmp_path):
        good = tmp_path / "good.bin"
        records, words = _toy_store_payload()
        write_embedding_store(str(good), 6, 4, records, words)
        blob = good.read_bytes()
        bad = tmp_path / "bad.bin"
        bad.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(FormatError, match="truncated"):
            load_embedding_store(str(bad))

    def test_dimension_conflict_at_model_build(self, tmp_path):
        from stancenet.model import ModelConfig, StanceModel
        path = str(tmp_path / "emb.bin")
        records, words = _toy_store_payload(d=6, U=4)
        # label words must be present for model construction
        rng = np.random.default_rng(5)
        words += [(w, rng.normal(size=6).astype(np.float32))
                  for w in ("support", "query", "deny", "comment")]
        write_embedding_store(path, 6, 4, records, words)
        store = load_embedding_store(path)
        cfg = ModelConfig(d_model=64, U=4, num_heads=2)
        with pytest.raises(FormatError, match="dimension conflict"):
            StanceModel(cfg, store, None)
