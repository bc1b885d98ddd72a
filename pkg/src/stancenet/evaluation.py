"""Classification metrics and the Friedman rank test.

Metrics follow the macro-averaging convention: per-label precision,
recall, and F1 are computed from the confusion matrix with 0/0
defined as 0, then averaged without frequency weighting.

The Friedman test ranks treatments within each block (average ranks
on ties, no tie-correction factor) and refers the rank-sum statistic
to a chi-squared distribution with k-1 degrees of freedom. The upper
tail probability uses a local regularized incomplete gamma so the
result does not depend on an external statistics package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError


@dataclass
class EvaluationReport:
    accuracy: float
    per_label: List[dict]
    macro: dict
    confusion: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_label": self.per_label,
            "macro": self.macro,
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def confusion(preds: Sequence[int], truths: Sequence[int], L: int) -> np.ndarray:
    """L x L count matrix, rows indexed by true label, columns by prediction."""
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise DataError(f"prediction/truth lengths differ: {preds.shape} vs {truths.shape}")
    cm = np.zeros((L, L), dtype=np.int64)
    if preds.size:
        if preds.min() < 0 or preds.max() >= L or truths.min() < 0 or truths.max() >= L:
            raise DataError(f"label index out of range for {L} classes")
        np.add.at(cm, (truths, preds), 1)
    return cm


def macro_metrics(cm: np.ndarray, label_names: Optional[Sequence[str]] = None
                  ) -> EvaluationReport:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise DataError(f"confusion matrix must be square, got {cm.shape}")
    L = cm.shape[0]
    total = int(cm.sum())
    accuracy = float(np.trace(cm) / total) if total else 0.0
    per_label = []
    for l in range(L):
        tp = float(cm[l, l])
        fp = float(cm[:, l].sum() - cm[l, l])
        fn = float(cm[l, :].sum() - cm[l, l])
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        entry = {"precision": precision, "recall": recall, "f1": f1}
        if label_names is not None:
            entry = {"label": label_names[l], **entry}
        per_label.append(entry)
    macro = {
        "precision": float(np.mean([e["precision"] for e in per_label])),
        "recall": float(np.mean([e["recall"] for e in per_label])),
        "f1": float(np.mean([e["f1"] for e in per_label])),
    }
    return EvaluationReport(accuracy=accuracy, per_label=per_label, macro=macro,
                            confusion=cm, n=total)


def _average_ranks(row: np.ndarray) -> np.ndarray:
    """Rank a 1-d array ascending, sharing the mean rank across ties."""
    order = np.argsort(row, kind="stable")
    ranks = np.empty(len(row), dtype=np.float64)
    i = 0
    while i < len(row):
        j = i
        while j + 1 < len(row) and row[order[j + 1]] == row[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def friedman(scores: np.ndarray) -> Tuple[float, float]:
    """Friedman chi-squared statistic and p-value.

    ``scores`` is (n_blocks, k_treatments); larger values rank higher.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DataError(f"scores must be a 2-d matrix, got shape {scores.shape}")
    n, k = scores.shape
    if n < 2 or k < 2:
        raise DataError(f"need at least 2 blocks and 2 treatments, got {n}x{k}")
    ranks = np.vstack([_average_ranks(scores[i]) for i in range(n)])
    rank_sums = ranks.sum(axis=0)
    statistic = 12.0 / (n * k * (k + 1)) * float(np.sum(rank_sums ** 2)) - 3.0 * n * (k + 1)
    statistic = max(statistic, 0.0)
    p = chi2_upper_tail(statistic, k - 1)
    return statistic, p


def chi2_upper_tail(x: float, df: int) -> float:
    """P(X >= x) for a chi-squared variable with ``df`` degrees of freedom."""
    if df < 1:
        raise DataError(f"degrees of freedom must be positive, got {df}")
    if x <= 0.0:
        return 1.0
    return _gammaincc(df / 2.0, x / 2.0)


def _gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x).

    Series expansion for x < a + 1, Lentz's continued fraction
    otherwise; both iterated to double-precision convergence.
    """
    if x < 0 or a <= 0:
        raise ValueError(f"invalid incomplete-gamma arguments a={a}, x={x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cont_frac(a, x)


def _gamma_series(a: float, x: float) -> float:
    """Lower regularized P(a, x) by series expansion."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(1000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    return total * math.exp(log_prefactor)


def _gamma_cont_frac(a: float, x: float) -> float:
    """Upper regularized Q(a, x) by modified Lentz continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    return math.exp(log_prefactor) * h
