"""API misuse detection with API flow graphs, graph neural networks and BIRCH.

Java method snippets become API Flow Graphs (one node per statement line,
with data-flow, control-dependence and call-sequence edges), are pruned to
the part relevant to a target API, embedded with a GCN or RGCN encoder
pre-trained by context prediction, and clustered; usages that land in small
clusters are reported as potential misuse.
"""
from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .afg import Afg, AfgEdge, AfgNode, EdgeLabel, build_afg, parse_afg, serialize_afg
from .cluster import ClusteringResult, assign, birch_cluster, davies_bouldin, select_best_clustering
from .embed import EmbeddingConfig, attach_features, lexical_embed
from .errors import AfgnnError
from .frontend import SourceSnippet, find_callsites, parse_snippet
from .gnn import ModelParams, encode, gcn_forward, init_params, load_params, readout, rgcn_forward, save_params
from .metrics import (
    adjusted_mutual_info,
    adjusted_rand,
    confusion_metrics,
    detect,
    mutual_info,
    rand_index,
    threshold_sweep,
)
from .pretrain import TrainConfig, train
from .prune import prune

__all__ = [
    "Afg", "AfgEdge", "AfgNode", "AfgnnError", "ClusteringResult", "EdgeLabel", "EmbeddingConfig",
    "KERNEL_BACKEND", "ModelParams", "SourceSnippet", "TrainConfig", "adjusted_mutual_info",
    "adjusted_rand", "assign", "attach_features", "birch_cluster", "build_afg", "confusion_metrics",
    "davies_bouldin", "detect", "encode", "find_callsites", "gcn_forward", "init_params",
    "lexical_embed", "load_params", "mutual_info", "parse_afg", "parse_snippet", "prune",
    "rand_index", "readout", "rgcn_forward", "save_params", "select_best_clustering",
    "serialize_afg", "threshold_sweep", "train",
]
