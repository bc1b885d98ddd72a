"""Text normalization, thread flattening, and dataset loading rules."""

import json

import numpy as np
import pytest

from stancenet.data import (Example, ThreadNode, flatten_threads, load_dataset,
                            normalize_text, stratified_split)
from stancenet.errors import DataError


class TestNormalizeText:
    def test_url_and_mention_replacement(self):
        assert normalize_text("see http://x.co @bob") == "see $URL$ $MENTION$"

    def test_https_and_www_forms(self):
        assert normalize_text("https://a.b/c?d=1") == "$URL$"
        assert normalize_text("visit www.example.com now") == "visit $URL$ now"

    def test_pure_emoji_becomes_empty(self):
        assert normalize_text("\U0001F44D\U0001F44D") == ""

    def test_hashtag_bodies_survive(self):
        assert normalize_text("This is crazy #capetown #capestorm") == \
            "This is crazy #capetown #capestorm"

    def test_whitespace_collapsed(self):
        assert normalize_text("  a \t b\n\nc  ") == "a b c"

    def test_symbols_replaced_with_space_not_glued(self):
        # stripping must not fuse fragments into a new matchable token
        assert "www." not in normalize_text("wμww.example.com")

    def test_idempotent_on_handpicked_cases(self):
        cases = ["see http://x.co @bob", "plain text", "", "@a @b http://c.d",
                 "100% sure!", "w☃ww.x.y", "a@b.com", "#tag $5 'quote'"]
        for raw in cases:
            once = normalize_text(raw)
            assert normalize_text(once) == once, raw

    def test_idempotent_fuzz(self):
        # mixed alphabet heavy on the characters the rules touch
        alphabet = list("abc wW.@:/$#!?μ☃\U0001F600'\"\t\n-=+~")
        alphabet += ["http://", "www.", "@u", "$URL$", "$MENTION$"]
        rng = np.random.default_rng(99)
        for _ in range(2000):
            n = int(rng.integers(0, 12))
            raw = "".join(rng.choice(alphabet) for _ in range(n))
            once = normalize_text(raw)
            assert normalize_text(once) == once, repr(raw)


class TestFlattenThreads:
    def test_two_children(self):
        r11 = ThreadNode("r11", "totally")
        r12 = ThreadNode("r12", "no way")
        r1 = ThreadNode("r1", "i agree", children=[r11, r12])
        root = ThreadNode("s", "the claim", children=[r1])
        pairs = flatten_threads(root)
        assert pairs == [("the claim", "i agree"),
                         ("the claim", "i agree totally"),
                         ("the claim", "i agree no way")]

    def test_single_leaf(self):
        root = ThreadNode("s", "claim", children=[ThreadNode("r", "reply")])
        assert flatten_threads(root) == [("claim", "reply")]

    def test_chain_concatenates_ancestors(self):
        rrr = ThreadNode("rrr", "c")
        rr = ThreadNode("rr", "b", children=[rrr])
        r = ThreadNode("r", "a", children=[rr])
        root = ThreadNode("s", "s0", children=[r])
        assert flatten_threads(root) == [("s0", "a"), ("s0", "a b"),
                                         ("s0", "a b c")]

    def test_one_pair_per_non_root_node_random_trees(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            nodes = [ThreadNode("n0", "root")]
            depth = {0: 0}
            for i in range(1, int(rng.integers(2, 14))):
                # attach to a random existing node of depth < 5
                candidates = [j for j in range(len(nodes)) if depth[j] < 5]
                parent = int(rng.choice(candidates))
                node = ThreadNode(f"n{i}", f"t{i}")
                nodes[parent].children.append(node)
                depth[len(nodes)] = depth[parent] + 1
                nodes.append(node)
            pairs = flatten_threads(nodes[0])
            assert len(pairs) == len(nodes) - 1

    def test_cycle_detected(self):
        a = ThreadNode("a", "x")
        b = ThreadNode("b", "y", children=[a])
        a.children.append(b)
        root = ThreadNode("s", "src", children=[a])
        with pytest.raises(DataError, match="cycle"):
            flatten_threads(root)


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


LABELS = ["support", "query", "deny", "comment"]


class TestLoadDataset:
    def test_hand_counted_drop_rules(self, tmp_path):
        # 10 records: 2 exact duplicates, 1 deleted reply, 1 reply that
        # normalizes to nothing -> 6 survivors
        rows = [
            {"id": "r1", "source_text": "claim one", "reply_text": "i agree", "label": "support"},
            {"id": "r2", "source_text": "claim one", "reply_text": "i agree", "label": "support"},  # dup of r1
            {"id": "r3", "source_text": "claim two", "reply_text": "[deleted]", "label": "deny"},
            {"id": "r4", "source_text": "claim three", "reply_text": "\U0001F600\U0001F600", "label": "query"},
            {"id": "r5", "source_text": "claim four", "reply_text": "really?", "label": "query"},
            {"id": "r6", "source_text": "claim five", "reply_text": "no way", "label": "deny"},
            {"id": "r7", "source_text": "claim six", "reply_text": "hmm ok", "label": "comment"},
            {"id": "r8", "source_text": "claim one", "reply_text": "i agree", "label": "support"},  # dup again
            {"id": "r9", "source_text": "claim seven", "reply_text": "source?", "label": "query"},
            {"id": "r10", "source_text": "claim eight", "reply_text": "sure", "label": "support"},
        ]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        examples = load_dataset(str(path), LABELS)
        assert len(examples) == 6
        assert [ex.id for ex in examples] == ["r1", "r5", "r6", "r7", "r9", "r10"]

    def test_missing_fields_dropped(self, tmp_path):
        rows = [
            {"id": "a", "source_text": "s", "reply_text": "r", "label": "deny"},
            {"id": "b", "source_text": "s2", "reply_text": "r2"},
            {"id": "c", "source_text": "s3", "label": "deny"},
            {"id": "d", "reply_text": "r4", "label": "deny"},
        ]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        examples = load_dataset(str(path), LABELS)
        assert [ex.id for ex in examples] == ["a"]

    def test_unknown_label_is_error_with_record_id(self, tmp_path):
        rows = [{"id": "bad7", "source_text": "s", "reply_text": "r",
                 "label": "oppose"}]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        with pytest.raises(DataError, match="bad7"):
            load_dataset(str(path), LABELS)

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"id": "a", "source_text": "s", "reply_text": "r", "label": "deny"}\n'
                        "{broken\n", encoding="utf-8")
        with pytest.raises(DataError, match=":2"):
            load_dataset(str(path), LABELS)

    def test_deterministic_order(self, tmp_path):
        rows = [{"id": f"r{i}", "source_text": f"s{i}", "reply_text": f"t{i}",
                 "label": "support"} for i in range(20)]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        a = load_dataset(str(path), LABELS)
        b = load_dataset(str(path), LABELS)
        assert [ex.id for ex in a] == [ex.id for ex in b] == [f"r{i}" for i in range(20)]

    def test_texts_are_normalized(self, tmp_path):
        rows = [{"id": "a", "source_text": "see http://x.co", "reply_text": "ok @bob",
                 "label": "support"}]
        path = tmp_path / "data.jsonl"
        _write_jsonl(path, rows)
        ex = load_dataset(str(path), LABELS)[0]
        assert ex.source_text == "see $URL$"
        assert ex.reply_text == "ok $MENTION$"

    def test_thread_form_expansion(self, tmp_path):
        rows = [
            {"id": "root", "text": "the claim"},
            {"id": "r1", "text": "i agree", "parent_id": "root", "label": "support"},
            {"id": "r2", "text": "why though", "parent_id": "r1", "label": "query"},
        ]
        path = tmp_path / "threads.jsonl"
        _write_jsonl(path, rows)
        examples = load_dataset(str(path), LABELS, flatten=True)
        assert len(examples) == 2
        assert examples[0].source_text == "the claim"
        assert examples[1].reply_text == "i agree why though"
        assert examples[1].label == "query"

    def test_thread_unknown_parent(self, tmp_path):
        rows = [{"id": "r1", "text": "x", "parent_id": "ghost", "label": "deny"}]
        path = tmp_path / "threads.jsonl"
        _write_jsonl(path, rows)
        with pytest.raises(DataError, match="ghost"):
            load_dataset(str(path), LABELS, flatten=True)

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_dataset(str(path), LABELS) == []


class TestStratifiedSplit:
    def test_fractions_and_determinism(self):
        examples = [Example(f"e{i}", f"s{i}", f"r{i}", LABELS[i % 4])
                    for i in range(200)]
        tr1, va1, te1 = stratified_split(examples, seed=3)
        tr2, va2, te2 = stratified_split(examples, seed=3)
        assert [e.id for e in tr1] == [e.id for e in tr2]
        assert len(tr1) + len(va1) + len(te1) == 200
        assert abs(len(tr1) - 140) <= 4
        assert abs(len(va1) - 30) <= 4

    def test_each_label_in_each_split(self):
        examples = [Example(f"e{i}", f"s{i}", f"r{i}", LABELS[i % 4])
                    for i in range(100)]
        tr, va, te = stratified_split(examples, seed=0)
        for part in (tr, va, te):
            assert {e.label for e in part} == set(LABELS)
