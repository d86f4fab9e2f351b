"""BIRCH clustering, Davies-Bouldin scoring and cluster-count selection.

Phase 1 inserts points, in input order, into a CF tree whose leaf entries
have radius at most ``T``.  Phase 2 joins the leaf entries bottom-up with
size-weighted average linkage.  The dendrogram is built once, so trying
every cluster count only re-cuts it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from ._kernels import average_linkage
from .errors import AllDegenerate, DegenerateClustering, InvalidK

log = logging.getLogger(__name__)

__all__ = [
    "CfEntry",
    "CfTree",
    "ClusterStats",
    "ClusteringResult",
    "Dendrogram",
    "assign",
    "birch_cluster",
    "cluster_stats",
    "davies_bouldin",
    "select_best_clustering",
]

BRANCHING = 50
DEFAULT_MAX_K = 50
THRESHOLDS = {"GCN": 1.5, "RGCN": 2.1, "detect": 3.0}
RADIUS_EPS = 1e-9


@dataclass
class CfEntry:
    """Clustering feature: point count, linear sum and squared sum.

    ``m2`` is the sum of squared distances to the centroid.  It is
    recoverable from the other three, but ``ss / n - |c|^2`` cancels badly
    for tight clusters far from the origin, so it is carried alongside and
    merged with the pairwise update.  ``None`` means "derive it from ``ss``".
    """

    n: int
    ls: np.ndarray
    ss: float
    m2: Optional[float] = None

    def __post_init__(self):
        if self.m2 is None:
            self.m2 = max(self.ss - float(self.ls @ self.ls) / self.n, 0.0)

    @classmethod
    def of(cls, point: np.ndarray) -> "CfEntry":
        p = np.asarray(point, dtype=float)
        return cls(1, p.copy(), float(p @ p), 0.0)

    def _merged_m2(self, other: "CfEntry") -> float:
        diff = other.ls / other.n - self.ls / self.n
        return self.m2 + other.m2 + float(diff @ diff) * self.n * other.n / (self.n + other.n)

    def __add__(self, other: "CfEntry") -> "CfEntry":
        return CfEntry(self.n + other.n, self.ls + other.ls, self.ss + other.ss, self._merged_m2(other))

    def absorb(self, other: "CfEntry") -> None:
        self.m2 = self._merged_m2(other)
        self.n += other.n
        self.ls = self.ls + other.ls
        self.ss += other.ss

    @property
    def centroid(self) -> np.ndarray:
        return self.ls / self.n

    @property
    def radius(self) -> float:
        """Root-mean-square distance of the members to the centroid."""
        return float(np.sqrt(self.m2 / self.n))


class _Node:
    __slots__ = ("leaf", "entries", "children")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.entries: list[CfEntry] = []
        self.children: list[_Node] = []  # parallel to entries for inner nodes; leaf-entry ids for leaves


class CfTree:
    """Height-balanced CF tree with branching factor ``b`` for inner nodes and leaves."""

    def __init__(self, threshold: float, branching: int = BRANCHING):
        if threshold <= 0:
            raise ValueError("BIRCH threshold must be positive")
        if branching < 2:
            raise ValueError("branching factor must be >= 2")
        self.threshold = threshold
        self.branching = branching
        self.root = _Node(leaf=True)
        self.leaf_entries: list[CfEntry] = []  # in creation order
        self.point_entry: list[int] = []

    def insert(self, point: np.ndarray) -> int:
        cf = CfEntry.of(point)
        split = self._insert(self.root, cf)
        if split is not None:
            left, right = split
            root = _Node(leaf=False)
            root.entries = [_summary(left), _summary(right)]
            root.children = [left, right]
            self.root = root
        return self.point_entry[-1]

    def _insert(self, node: _Node, cf: CfEntry):
        if node.leaf:
            if node.entries:
                i = _closest(node.entries, cf.centroid)
                merged = node.entries[i] + cf
                if merged.radius <= self.threshold + RADIUS_EPS:
                    node.entries[i].absorb(cf)
                    self.point_entry.append(node.children[i])
                    return None
            eid = len(self.leaf_entries)
            self.leaf_entries.append(cf)
            node.entries.append(cf)
            node.children.append(eid)
            self.point_entry.append(eid)
        else:
            i = _closest(node.entries, cf.centroid)
            split = self._insert(node.children[i], cf)
            if split is None:
                node.entries[i] = node.entries[i] + cf
            else:
                left, right = split
                node.entries[i:i + 1] = [_summary(left), _summary(right)]
                node.children[i:i + 1] = [left, right]
        if len(node.entries) > self.branching:
            return _split(node)
        return None


def _closest(entries: Sequence[CfEntry], x: np.ndarray) -> int:
    cents = np.vstack([e.centroid for e in entries])
    return int(np.argmin(((cents - x) ** 2).sum(axis=1)))


def _summary(node: _Node) -> CfEntry:
    total = CfEntry(node.entries[0].n, node.entries[0].ls.copy(), node.entries[0].ss, node.entries[0].m2)
    for e in node.entries[1:]:
        total.absorb(e)
    return total


def _split(node: _Node) -> tuple[_Node, _Node]:
    """Split around the farthest pair of entry centroids."""
    cents = np.vstack([e.centroid for e in node.entries])
    d = squareform(pdist(cents))
    s1, s2 = np.unravel_index(int(np.argmax(d)), d.shape)
    if s1 == s2:  # all centroids coincide
        s1, s2 = 0, 1
    left, right = _Node(node.leaf), _Node(node.leaf)
    for i, (entry, child) in enumerate(zip(node.entries, node.children)):
        target = left if d[i, s1] <= d[i, s2] else right
        if i == s1:
            target = left
        elif i == s2:
            target = right
        target.entries.append(entry)
        target.children.append(child)
    return left, right


# ---------------------------------------------------------------------------
# phase 2


@dataclass
class Dendrogram:
    """Average-linkage merge history over the leaf entries of a CF tree."""

    points: np.ndarray
    point_entry: np.ndarray
    entry_sizes: np.ndarray
    merges: np.ndarray
    threshold: float

    @property
    def num_entries(self) -> int:
        return len(self.entry_sizes)

    def entry_labels(self, k: int) -> np.ndarray:
        m = self.num_entries
        if not 1 <= k <= m:
            raise DegenerateClustering(f"cannot form {k} clusters from {m} CF entries")
        parent = np.arange(m)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j in self.merges[: m - k]:
            parent[find(j)] = find(i)
        roots = np.array([find(x) for x in range(m)])
        return roots

    def labels(self, k: int) -> np.ndarray:
        """Point labels for ``k`` clusters, numbered by first appearance."""
        roots = self.entry_labels(k)[self.point_entry]
        _, first = np.unique(roots, return_index=True)
        order = np.argsort(first)
        remap = np.empty(roots.max() + 1, dtype=np.int64)
        remap[np.unique(roots)[order]] = np.arange(len(order))
        return remap[roots]


def build_dendrogram(points, threshold: float, branching: int = BRANCHING) -> Dendrogram:
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("points must be a nonempty n x d matrix")
    tree = CfTree(threshold, branching)
    for p in x:
        tree.insert(p)
    cents = np.vstack([e.centroid for e in tree.leaf_entries])
    sizes = np.array([e.n for e in tree.leaf_entries], dtype=float)
    merges = average_linkage(squareform(pdist(cents)) if len(cents) > 1 else np.zeros((1, 1)), sizes)
    return Dendrogram(x, np.asarray(tree.point_entry), sizes, np.asarray(merges), threshold)


# ---------------------------------------------------------------------------
# results


@dataclass
class ClusteringResult:
    labels: np.ndarray
    k: int
    centroids: np.ndarray
    sizes: np.ndarray
    db_score: Optional[float]
    birch_threshold: float
    evaluated: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    def to_dict(self) -> dict:
        return {
            "k": int(self.k),
            "labels": self.labels.tolist(),
            "sizes": self.sizes.tolist(),
            "centroids": self.centroids.tolist(),
            "db_score": self.db_score,
            "birch_threshold": self.birch_threshold,
            "evaluated": {str(k): v for k, v in sorted(self.evaluated.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusteringResult":
        return cls(np.asarray(d["labels"]), int(d["k"]), np.asarray(d["centroids"], dtype=float),
                   np.asarray(d["sizes"]), d.get("db_score"), float(d["birch_threshold"]),
                   {int(k): v for k, v in d.get("evaluated", {}).items()})


def _result(points: np.ndarray, labels: np.ndarray, k: int, threshold: float, db=None) -> ClusteringResult:
    sizes = np.bincount(labels, minlength=k)
    centroids = np.vstack([points[labels == c].mean(axis=0) for c in range(k)])
    return ClusteringResult(labels, k, centroids, sizes, db, threshold)


def birch_cluster(points, threshold: float, k: int, branching: int = BRANCHING) -> ClusteringResult:
    """BIRCH with ``k`` final clusters.

    Raises :class:`InvalidK` unless ``1 <= k <= n`` and
    :class:`DegenerateClustering` if the tree has fewer than ``k`` leaf entries.
    """
    x = np.asarray(points, dtype=float)
    if not 1 <= k <= len(x):
        raise InvalidK(f"k={k} outside [1, {len(x)}]")
    if threshold <= 0:
        raise ValueError("BIRCH threshold must be positive")
    dendro = build_dendrogram(x, threshold, branching)
    return _result(x, dendro.labels(k), k, threshold)


# ---------------------------------------------------------------------------
# Davies-Bouldin


@dataclass
class ClusterStats:
    s: np.ndarray  # mean member distance to centroid, per cluster
    m: np.ndarray  # centroid distance matrix
    centroids: np.ndarray


def cluster_stats(points, labels) -> ClusterStats:
    x = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    ids = np.unique(labels)
    cents = np.vstack([x[labels == c].mean(axis=0) for c in ids])
    s = np.array([np.linalg.norm(x[labels == c] - cents[i], axis=1).mean() for i, c in enumerate(ids)])
    m = squareform(pdist(cents)) if len(ids) > 1 else np.zeros((1, 1))
    return ClusterStats(s, m, cents)


def davies_bouldin(points, labels) -> float:
    """Mean over clusters of the worst ``(S_i + S_j) / M_ij``; lower is better."""
    st = cluster_stats(points, labels)
    k = len(st.s)
    if k < 2:
        raise DegenerateClustering("Davies-Bouldin needs at least two clusters")
    off = ~np.eye(k, dtype=bool)
    if np.any(st.m[off] == 0):
        raise DegenerateClustering("two clusters share a centroid")
    ratio = (st.s[:, None] + st.s[None, :]) / np.where(off, st.m, 1.0)
    ratio[~off] = -np.inf
    return float(ratio.max(axis=1).mean())


def select_best_clustering(points, threshold: float, max_k: Optional[int] = DEFAULT_MAX_K,
                           branching: int = BRANCHING) -> ClusteringResult:
    """Try every cluster count from 2 up to ``min(n, max_k)`` and keep the lowest DB.

    Counts that cannot be formed or score degenerately are skipped; ties keep
    the smaller count.
    """
    x = np.asarray(points, dtype=float)
    n = len(x)
    if n < 2:
        raise InvalidK("need at least two points to choose a cluster count")
    dendro = build_dendrogram(x, threshold, branching)
    hi = n if max_k is None else min(n, max_k)
    best: Optional[ClusteringResult] = None
    evaluated: dict[int, float] = {}
    for k in range(2, hi + 1):
        try:
            labels = dendro.labels(k)
            db = davies_bouldin(x, labels)
        except DegenerateClustering as exc:
            log.debug("skipping k=%d: %s", k, exc)
            continue
        evaluated[k] = db
        if best is None or db < best.db_score:
            best = _result(x, labels, k, threshold, db)
    if best is None:
        raise AllDegenerate(f"no cluster count in [2, {hi}] gives a valid clustering "
                            f"({dendro.num_entries} CF entries at threshold {threshold})")
    best.evaluated = evaluated
    return best


def assign(embedding, clustering: ClusteringResult) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    d = cdist(np.asarray(embedding, dtype=float)[None, :], clustering.centroids)[0]
    return int(np.argmin(d))


def assign_many(embeddings, clustering: ClusteringResult) -> np.ndarray:
    d = cdist(np.asarray(embeddings, dtype=float), clustering.centroids)
    return np.argmin(d, axis=1)
