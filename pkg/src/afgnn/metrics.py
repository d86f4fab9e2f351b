"""External clustering indices, misuse verdicts and confusion metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._kernels import expected_mutual_info as _emi
from .cluster import ClusteringResult, assign_many

__all__ = [
    "Confusion",
    "Contingency",
    "DetectionReport",
    "DetectionRow",
    "THRESHOLD_GRID",
    "adjusted_mutual_info",
    "adjusted_rand",
    "confusion_metrics",
    "contingency",
    "detect",
    "entropy",
    "expected_mutual_info",
    "format_sweep",
    "mutual_info",
    "rand_index",
    "size_cutoff",
    "threshold_sweep",
]

CORRECT = "correct-use"
MISUSE = "potential-misuse"
THRESHOLD_GRID = (5, 10, 15, 20, 25, 30, 35, 40)


@dataclass
class Contingency:
    counts: np.ndarray  # rows: classes of U, columns: classes of V
    a: np.ndarray
    b: np.ndarray
    n: int
    u_classes: np.ndarray
    v_classes: np.ndarray


def contingency(u, v) -> Contingency:
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError("labelings must be 1-d and of equal length")
    uc, ui = np.unique(u, return_inverse=True)
    vc, vi = np.unique(v, return_inverse=True)
    counts = np.zeros((len(uc), len(vc)), dtype=np.int64)
    np.add.at(counts, (ui, vi), 1)
    return Contingency(counts, counts.sum(axis=1), counts.sum(axis=0), int(len(u)), uc, vc)


def _pairs(x) -> int:
    return sum(int(c) * (int(c) - 1) // 2 for c in np.ravel(x))


def _require_pairs(u, v) -> Contingency:
    t = contingency(u, v)
    if t.n < 2:
        raise ValueError("need at least two items")
    return t


def rand_index(u, v) -> float:
    """Fraction of item pairs on which the two labelings agree."""
    t = _require_pairs(u, v)
    total = t.n * (t.n - 1) // 2
    same_both = _pairs(t.counts)
    agree = total + 2 * same_both - _pairs(t.a) - _pairs(t.b)
    return agree / total


def adjusted_rand(u, v) -> float:
    t = _require_pairs(u, v)
    index = _pairs(t.counts)
    sa, sb = _pairs(t.a), _pairs(t.b)
    total = t.n * (t.n - 1) // 2
    expected = Fraction(sa * sb, total)
    maximum = Fraction(sa + sb, 2)
    if maximum == expected:
        return 1.0 if index == expected else 0.0
    return float((index - expected) / (maximum - expected))


def entropy(labels) -> float:
    """Shannon entropy of a labeling, natural log."""
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_info(u, v) -> float:
    t = contingency(u, v)
    nz = t.counts > 0
    nij = t.counts[nz].astype(float)
    outer = np.outer(t.a, t.b)[nz].astype(float)
    mi = float(np.sum(nij / t.n * (np.log(nij * t.n) - np.log(outer))))
    return max(mi, 0.0)


def expected_mutual_info(u, v) -> float:
    """Expected MI under random permutation with both marginals fixed."""
    t = contingency(u, v)
    return float(_emi(t.a, t.b, t.n))


def adjusted_mutual_info(u, v) -> float:
    """Chance-corrected MI, normalised by the arithmetic mean of the entropies."""
    t = _require_pairs(u, v)
    ka, kb = len(t.a), len(t.b)
    # one nonzero cell per row and column: the same partition, so MI equals both
    # entropies and the ratio is exactly 1 (floating point would give 1 +- ulp)
    if ka == kb and np.count_nonzero(t.counts) == ka:
        return 1.0
    mi = mutual_info(u, v)
    emi = float(_emi(t.a, t.b, t.n))
    denom = 0.5 * (entropy(u) + entropy(v)) - emi
    if abs(denom) < 1e-15:
        return 1.0 if abs(mi - emi) < 1e-15 else 0.0
    return (mi - emi) / denom


# ---------------------------------------------------------------------------
# detection


def size_cutoff(threshold_pct, total: int) -> int:
    """Smallest cluster size counted as correct use: ``ceil(pct / 100 * total)``."""
    pct = Fraction(str(threshold_pct))
    if pct < 0:
        raise ValueError("threshold percentage must be >= 0")
    return math.ceil(pct / 100 * total)


@dataclass
class DetectionRow:
    id: str
    cluster: int
    cluster_size: int
    verdict: str

    @property
    def misuse(self) -> bool:
        return self.verdict == MISUSE


@dataclass
class DetectionReport:
    rows: list[DetectionRow]
    threshold_pct: float
    total: int
    cutoff: int
    summary: Optional["Confusion"] = None

    def verdicts(self) -> list[bool]:
        return [r.misuse for r in self.rows]

    def to_dict(self) -> dict:
        out = {
            "threshold_pct": self.threshold_pct,
            "total": self.total,
            "cutoff": self.cutoff,
            "rows": [r.__dict__ for r in self.rows],
        }
        if self.summary is not None:
            out["summary"] = self.summary.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionReport":
        rows = [DetectionRow(r["id"], int(r["cluster"]), int(r["cluster_size"]), r["verdict"]) for r in d["rows"]]
        return cls(rows, d["threshold_pct"], int(d["total"]), int(d["cutoff"]))


def detect(ids: Sequence[str], embeddings, clustering: ClusteringResult, threshold_pct,
           total: Optional[int] = None) -> DetectionReport:
    """Flag examples whose nearest historic cluster is small.

    Cluster sizes come from the historic clustering only; ``total`` defaults
    to its size.
    """
    total = clustering.n if total is None else total
    cutoff = size_cutoff(threshold_pct, total)
    emb = np.asarray(embeddings, dtype=float)
    if len(ids) != len(emb):
        raise ValueError("ids and embeddings differ in length")
    assigned = assign_many(emb, clustering) if len(emb) else np.zeros(0, dtype=int)
    rows = []
    for id_, c in zip(ids, assigned):
        size = int(clustering.sizes[c])
        rows.append(DetectionRow(str(id_), int(c), size, MISUSE if size < cutoff else CORRECT))
    return DetectionReport(rows, threshold_pct, total, cutoff)


@dataclass
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def confusion_metrics(predicted: Sequence[bool], truth: Sequence[bool]) -> Confusion:
    """Accuracy, precision, recall and F1 with misuse as the positive class.

    An empty denominator yields 0 and a note in ``flags``.
    """
    if len(predicted) != len(truth):
        raise ValueError("predictions and ground truth differ in length")
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    tn = int(np.sum(~p & ~t))
    fn = int(np.sum(~p & t))
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(f"{name}: empty denominator")
            return 0.0
        return num / den

    accuracy = ratio(tp + tn, len(p), "accuracy")
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Confusion(tp, fp, tn, fn, accuracy, precision, recall, f1, flags)


def threshold_sweep(ids: Sequence[str], embeddings, clustering: ClusteringResult, truth: Sequence[bool],
                    pcts: Sequence = THRESHOLD_GRID, total: Optional[int] = None) -> list[tuple[float, Confusion]]:
    rows = []
    for pct in pcts:
        report = detect(ids, embeddings, clustering, pct, total)
        rows.append((pct, confusion_metrics(report.verdicts(), truth)))
    return rows


def format_sweep(rows: Sequence[tuple[float, Confusion]]) -> str:
    out = [f"{'Threshold':>9}  {'Accuracy':>8}  {'Precision':>9}  {'Recall':>6}  {'F1-score':>8}"]
    for pct, c in rows:
        out.append(f"{format(float(pct), 'g') + '%':>9}  {c.accuracy:8.3f}  {c.precision:9.3f}  {c.recall:6.3f}  {c.f1:8.3f}")
    return "\n".join(out) + "\n"
