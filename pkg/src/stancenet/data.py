"""Dataset ingestion, text normalization, and thread flattening.

Input files are UTF-8 JSON Lines. Flat records carry
{"id", "source_text", "reply_text", "label", "split"?}; thread records
carry {"id", "text", "parent_id"?, "label"?} where roots have no
parent_id. The loader detects the form by the presence of
"reply_text" on the first record.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError

_URL_RE = re.compile(r"(?:https?://\S+|www\.\S+)", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+", re.UNICODE)
# Keep word characters, whitespace, and light punctuation; everything
# else (emoji, box drawing, control chars, ...) becomes a space so
# that stripping never glues two fragments into a new token.
_DISALLOWED_RE = re.compile(r"[^\w\s.,!?'\"#$]", re.UNICODE)
_SPACE_RE = re.compile(r"\s+")

DELETED_MARKER = "[deleted]"
VALID_SPLITS = ("train", "val", "test")


@dataclass
class Example:
    id: str
    source_text: str
    reply_text: str
    label: str
    split: str = "train"


@dataclass
class ThreadNode:
    id: str
    text: str
    parent_id: Optional[str] = None
    label: Optional[str] = None
    children: List["ThreadNode"] = field(default_factory=list)


def normalize_text(raw: str) -> str:
    """Replace URLs and mentions with placeholder tokens, drop
    non-textual characters, collapse whitespace.

    The function is idempotent: placeholders contain no characters
    that re-trigger a rule, and removed characters leave a space
    behind so no new URL or mention can form.
    """
    text = _URL_RE.sub("$URL$", raw)
    text = _MENTION_RE.sub("$MENTION$", text)
    text = _DISALLOWED_RE.sub(" ", text)
    return _SPACE_RE.sub(" ", text).strip()


def _walk_thread(root: ThreadNode) -> List[Tuple[ThreadNode, str]]:
    """Yield (node, combined reply text) for every non-root node.

    The combined text joins the reply chain from the depth-1 ancestor
    down to the node with single spaces.
    """
    out: List[Tuple[ThreadNode, str]] = []
    seen = {id(root)}

    def descend(node: ThreadNode, prefix: str) -> None:
        for child in node.children:
            if id(child) in seen:
                raise DataError(f"cycle detected in thread at node {child.id!r}")
            seen.add(id(child))
            combined = child.text if not prefix else f"{prefix} {child.text}"
            out.append((child, combined))
            descend(child, combined)

    descend(root, "")
    return out


def flatten_threads(root: ThreadNode) -> List[Tuple[str, str]]:
    """One (source, reply) pair per non-root node of the thread."""
    return [(root.text, combined) for _node, combined in _walk_thread(root)]


def _parse_lines(path: str) -> List[Tuple[int, dict]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: parse error: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            rows.append((lineno, obj))
    return rows


def _build_threads(rows: List[Tuple[int, dict]], path: str) -> List[ThreadNode]:
    nodes: Dict[str, ThreadNode] = {}
    order: List[str] = []
    for lineno, obj in rows:
        nid = obj.get("id")
        if nid is None:
            nid = f"line{lineno}"
        nid = str(nid)
        if nid in nodes:
            raise DataError(f"{path}:{lineno}: duplicate thread node id {nid!r}")
        nodes[nid] = ThreadNode(id=nid, text=str(obj.get("text", "")),
                                parent_id=obj.get("parent_id"),
                                label=obj.get("label"))
        order.append(nid)
    roots = []
    for nid in order:
        node = nodes[nid]
        if node.parent_id is None:
            roots.append(node)
            continue
        parent = nodes.get(str(node.parent_id))
        if parent is None:
            raise DataError(f"thread node {nid!r} references unknown parent "
                            f"{node.parent_id!r}")
        parent.children.append(node)
    reachable = 0
    stack = list(roots)
    while stack:
        node = stack.pop()
        reachable += 1
        stack.extend(node.children)
    if reachable != len(nodes):
        raise DataError("thread structure contains a cycle or nodes unreachable "
                        "from any root")
    return roots


def _label_names(labels) -> Optional[List[str]]:
    if labels is None:
        return None
    if hasattr(labels, "names"):
        return list(labels.names)
    return list(labels)


def load_dataset(path: str, labels=None, flatten: bool = False) -> List[Example]:
    """Load, normalize, and filter a dataset file.

    Drops records missing any of source/reply/label, replies equal to
    the "[deleted]" marker, records whose source or reply is empty
    after normalization, and exact duplicate (source, reply) pairs
    (first occurrence wins). Unknown labels are an error, not a drop.
    When ``flatten`` is true, thread-form files are expanded into one
    record per non-root node before filtering.
    """
    names = _label_names(labels)
    rows = _parse_lines(path)
    if not rows:
        return []
    flat_form = "reply_text" in rows[0][1]

    raw_records: List[Tuple[str, object, object, object, str]] = []
    if flat_form:
        for lineno, obj in rows:
            rid = str(obj.get("id", f"line{lineno}"))
            raw_records.append((rid, obj.get("source_text"), obj.get("reply_text"),
                                obj.get("label"), str(obj.get("split", "train"))))
    else:
        if not flatten:
            raise DataError(f"{path}: thread-form file requires flatten=true")
        for root in _build_threads(rows, path):
            for node, combined in _walk_thread(root):
                raw_records.append((node.id, root.text, combined, node.label, "train"))

    out: List[Example] = []
    seen_pairs = set()
    for rid, source_raw, reply_raw, label, split in raw_records:
        if source_raw is None or reply_raw is None or label is None:
            continue
        if str(reply_raw).strip() == DELETED_MARKER:
            continue
        source = normalize_text(str(source_raw))
        reply = normalize_text(str(reply_raw))
        if not source or not reply:
            continue
        if names is not None and label not in names:
            raise DataError(f"unknown label {label!r} in record {rid!r}")
        if split not in VALID_SPLITS:
            raise DataError(f"record {rid!r}: invalid split {split!r}")
        key = (source, reply)
        if key in seen_pairs:
            continue
        seen_pairs.add(key)
        out.append(Example(id=rid, source_text=source, reply_text=reply,
                           label=str(label), split=split))
    return out


def stratified_split(examples: Sequence[Example], seed: int,
                     fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15)
                     ) -> Tuple[List[Example], List[Example], List[Example]]:
    """Assign train/val/test per label group, shuffled by ``seed``."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    by_label: Dict[str, List[int]] = {}
    for i, ex in enumerate(examples):
        by_label.setdefault(ex.label, []).append(i)
    assignment = {}
    for label in sorted(by_label):
        idx = np.array(by_label[label])
        rng.shuffle(idx)
        n = len(idx)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        for j, i in enumerate(idx):
            if j < n_train:
                assignment[i] = "train"
            elif j < n_train + n_val:
                assignment[i] = "val"
            else:
                assignment[i] = "test"
    splits = {"train": [], "val": [], "test": []}
    for i, ex in enumerate(examples):
        splits[assignment[i]].append(ex)
    return splits["train"], splits["val"], splits["test"]
