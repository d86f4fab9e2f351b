"""Pipeline stages shared by the command line and library callers."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np

from .afg import Afg, build_afg
from .cluster import ClusteringResult, birch_cluster, davies_bouldin, select_best_clustering
from .corpus import SnippetRecord
from .embed import attach_features
from .errors import AfgnnError, DegenerateClustering, DimensionMismatch
from .frontend import parse_snippet
from .gnn import ModelParams, encode, readout
from .prune import prune

log = logging.getLogger(__name__)

__all__ = ["NORMALIZATIONS", "build_stage", "cluster_stage", "default_jobs", "embed_stage",
           "normalize_rows", "prune_stage"]

NORMALIZATIONS = ("none", "l2", "standardize")


def default_jobs() -> int:
    raw = os.environ.get("AFGNN_JOBS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ValueError(f"AFGNN_JOBS must be an integer, got {raw!r}") from None


def _ordered_map(fn: Callable, items: Sequence, jobs: int) -> list:
    """``map`` over a process pool when ``jobs > 1``; results keep input order."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _build_one(args):
    rec, api, sequence = args
    try:
        tree = parse_snippet(rec.snippet)
        return build_afg(tree, api, graph_id=rec.snippet.id, sequence=sequence), None
    except AfgnnError as exc:
        return None, f"{rec.snippet.id}: {exc}"


def build_stage(records: Sequence[SnippetRecord], api: Optional[str] = None, *, jobs: int = 1,
                sequence: bool = True, skip_errors: bool = False) -> list[tuple[Afg, Optional[str]]]:
    """Raw AFGs for each snippet; ``api`` overrides per-record targets."""
    tasks = [(r, api or r.api, sequence) for r in records]
    out = []
    for (rec, target, _), (afg, err) in zip(tasks, _ordered_map(_build_one, tasks, jobs)):
        if err is not None:
            if not skip_errors:
                raise AfgnnError(f"cannot build AFG for {err}")
            log.warning("skipping %s", err)
            continue
        out.append((afg, target))
    return out


def _prune_one(args):
    afg, api, edge_mode = args
    try:
        return prune(afg, api, edge_mode=edge_mode), None
    except AfgnnError as exc:
        return None, f"{afg.id}: {exc}"


def prune_stage(graphs: Sequence[tuple[Afg, Optional[str]]], api: Optional[str] = None, *,
                edge_mode: str = "none", jobs: int = 1,
                skip_errors: bool = False) -> list[tuple[Afg, Optional[str]]]:
    tasks = []
    for afg, target in graphs:
        target = api or target
        if not target:
            raise AfgnnError(f"graph {afg.id!r} has no target API; pass --api")
        tasks.append((afg, target, edge_mode))
    out = []
    for (afg, target, _), (pruned, err) in zip(tasks, _ordered_map(_prune_one, tasks, jobs)):
        if err is not None:
            if not skip_errors:
                raise AfgnnError(f"cannot prune {err}")
            log.warning("skipping %s", err)
            continue
        out.append((pruned, target))
    return out


def normalize_rows(matrix: np.ndarray, mode: str = "none") -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if mode == "none":
        return m.copy()
    if mode == "l2":
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        return m / np.where(norms > 0, norms, 1.0)
    if mode == "standardize":
        sd = m.std(axis=0)
        return (m - m.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    raise ValueError(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")


def embed_stage(graphs: Sequence[Afg], params: ModelParams, provider, *,
                normalize: str = "none") -> tuple[list[str], np.ndarray]:
    """Graph vectors: the main encoder's output at the API node(s)."""
    ids, rows = [], []
    for afg in graphs:
        g = attach_features(afg, provider)
        if g.dim != params.dim:
            raise DimensionMismatch(f"node features have d={g.dim}, checkpoint expects d={params.dim}")
        rows.append(readout(encode(g, params), g.api_nodes))
        ids.append(afg.id)
    matrix = np.vstack(rows) if rows else np.zeros((0, params.dim))
    return ids, normalize_rows(matrix, normalize)


def cluster_stage(matrix: np.ndarray, threshold: float, *, k: Optional[int] = None,
                  max_k: Optional[int] = 50) -> ClusteringResult:
    """Fixed-``k`` BIRCH, or the lowest-DB count when ``k`` is not given."""
    if k is None:
        return select_best_clustering(matrix, threshold, max_k=max_k)
    result = birch_cluster(matrix, threshold, k)
    try:
        result.db_score = davies_bouldin(matrix, result.labels)
    except DegenerateClustering:
        result.db_score = None
    return result
