"""GCN and RGCN encoders over AFGs with hand-written reverse-mode gradients.

Both variants keep every layer at width ``d``.  Messages travel along edge
direction (each node aggregates its in-neighbours).  Graphs are batched as
disjoint unions so a whole minibatch runs as a handful of sparse products.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .afg import RELATIONS, Afg, EdgeLabel
from .errors import ChecksumError, DimensionMismatch, NoApiNode, VersionError

__all__ = [
    "GraphBatch",
    "LayerParams",
    "ModelParams",
    "backward",
    "encode",
    "forward",
    "gcn_forward",
    "init_params",
    "load_params",
    "readout",
    "rgcn_forward",
    "save_params",
]

GCN = "GCN"
RGCN = "RGCN"
VARIANTS = (GCN, RGCN)
NUM_LAYERS = 5


@dataclass
class LayerParams:
    weight: np.ndarray  # W for GCN, the self-loop weight W0 for RGCN
    bias: np.ndarray
    relation_weights: dict[str, np.ndarray] = field(default_factory=dict)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [("weight", self.weight)]
        out += [(f"W_{r}", self.relation_weights[r]) for r in sorted(self.relation_weights)]
        out.append(("bias", self.bias))
        return out

    def copy(self) -> "LayerParams":
        return LayerParams(self.weight.copy(), self.bias.copy(),
                           {k: v.copy() for k, v in self.relation_weights.items()})

    @classmethod
    def zeros_like(cls, other: "LayerParams") -> "LayerParams":
        return cls(np.zeros_like(other.weight), np.zeros_like(other.bias),
                   {k: np.zeros_like(v) for k, v in other.relation_weights.items()})


@dataclass
class ModelParams:
    variant: str
    dim: int
    layers: list[LayerParams]
    context_encoder: list[LayerParams]
    final_activation: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def relations(self) -> tuple[str, ...]:
        return tuple(r.value for r in RELATIONS) if self.variant == RGCN else ()

    def copy(self) -> "ModelParams":
        return ModelParams(self.variant, self.dim, [l.copy() for l in self.layers],
                           [l.copy() for l in self.context_encoder], self.final_activation,
                           json.loads(json.dumps(self.metadata)))

    def flat_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for prefix, layers in (("main", self.layers), ("context", self.context_encoder)):
            for i, layer in enumerate(layers):
                out += [(f"{prefix}.{i}.{name}", arr) for name, arr in layer.arrays()]
        return out


def _glorot(rng: np.random.Generator, d: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (2 * d))
    return rng.uniform(-limit, limit, size=(d, d))


def _init_layers(variant: str, dim: int, k: int, rng: np.random.Generator) -> list[LayerParams]:
    layers = []
    for _ in range(k):
        rel = {r.value: _glorot(rng, dim) for r in RELATIONS} if variant == RGCN else {}
        layers.append(LayerParams(_glorot(rng, dim), np.zeros(dim), rel))
    return layers


def init_params(variant: str = RGCN, dim: int = 64, num_layers: int = NUM_LAYERS, seed: int = 0,
                final_activation: bool = True) -> ModelParams:
    """Glorot-uniform weights and zero biases for both encoders."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    rng = np.random.default_rng(seed)
    main = _init_layers(variant, dim, num_layers, rng)
    context = _init_layers(variant, dim, num_layers, rng)
    return ModelParams(variant, dim, main, context, final_activation)


# ---------------------------------------------------------------------------
# graph operators


_REL_INDEX = {r: i for i, r in enumerate(RELATIONS)}


@dataclass
class GraphBatch:
    """Disjoint union of graphs with the propagation operators precomputed."""

    num_nodes: int
    gcn_op: sp.csr_matrix
    rel_ops: list[sp.csr_matrix]
    offsets: np.ndarray  # start row of each member graph

    @classmethod
    def from_edges(cls, sizes: Sequence[int], edge_lists: Sequence[Iterable[tuple[int, int, EdgeLabel]]],
                   reverse: bool = False) -> "GraphBatch":
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        n = int(offsets[-1])
        src, dst, rel = [], [], []
        for g, edges in enumerate(edge_lists):
            base = offsets[g]
            for s, d, label in edges:
                if reverse:
                    s, d = d, s
                src.append(base + s)
                dst.append(base + d)
                rel.append(_REL_INDEX[EdgeLabel(label)])
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        rel = np.asarray(rel, dtype=np.int64)

        # label-blind binary adjacency with self loops, rows = receivers
        loops = np.arange(n)
        a = sp.coo_matrix((np.ones(len(src) + n), (np.concatenate([dst, loops]), np.concatenate([src, loops]))),
                          shape=(n, n)).tocsr()
        a.data[:] = 1.0
        deg = np.asarray(a.sum(axis=1)).ravel()
        inv_sqrt = 1.0 / np.sqrt(deg)
        gcn_op = sp.diags(inv_sqrt) @ a @ sp.diags(inv_sqrt)

        rel_ops = []
        for r in range(len(RELATIONS)):
            mask = rel == r
            m = sp.coo_matrix((np.ones(mask.sum()), (dst[mask], src[mask])), shape=(n, n)).tocsr()
            m.data[:] = 1.0
            indeg = np.asarray(m.sum(axis=1)).ravel()
            scale = 1.0 / np.maximum(1.0, indeg)
            rel_ops.append((sp.diags(scale) @ m).tocsr())
        return cls(n, gcn_op.tocsr(), rel_ops, offsets[:-1])

    @classmethod
    def from_afgs(cls, afgs: Sequence[Afg], reverse: bool = False) -> "GraphBatch":
        return cls.from_edges(
            [len(g.nodes) for g in afgs],
            [[(e.src, e.dst, e.label) for e in g.edges] for g in afgs],
            reverse=reverse,
        )


def _check(x: np.ndarray, layers: list[LayerParams], batch: GraphBatch, variant: str) -> None:
    if x.ndim != 2 or x.shape[0] != batch.num_nodes:
        raise DimensionMismatch(f"feature matrix shape {x.shape} does not fit {batch.num_nodes} nodes")
    for layer in layers:
        if layer.weight.shape != (x.shape[1], x.shape[1]):
            raise DimensionMismatch(
                f"layer weight {layer.weight.shape} incompatible with features of width {x.shape[1]}")
        if variant == RGCN and len(layer.relation_weights) != len(RELATIONS):
            raise DimensionMismatch("RGCN layer is missing relation weights")


def _propagate(op: sp.csr_matrix, m: np.ndarray) -> np.ndarray:
    """``op @ m`` with each row's terms summed in sorted order.

    A plain sparse product adds a row's terms in column order, which changes
    when nodes are relabelled.  Sorting the terms per output coordinate makes
    the sum depend only on their multiset, so the encoder is exactly
    permutation-equivariant.  Zero padding does not alter any partial sum.
    """
    n = op.shape[0]
    counts = np.diff(op.indptr)
    width = int(counts.max()) if n else 0
    out = np.zeros((n, width, m.shape[1]))
    if width:
        rows = np.repeat(np.arange(n), counts)
        pos = np.arange(op.nnz) - op.indptr[rows]
        out[rows, pos] = op.data[:, None] * m[op.indices]
        out.sort(axis=1)
    return out.sum(axis=1)


def forward(x: np.ndarray, batch: GraphBatch, layers: list[LayerParams], variant: str,
            final_activation: bool = True):
    """Run the encoder.  Returns ``(output, cache)``; the cache feeds :func:`backward`."""
    _check(x, layers, batch, variant)
    h = x
    cache = []
    k = len(layers)
    for i, layer in enumerate(layers):
        if variant == GCN:
            z = _propagate(batch.gcn_op, h @ layer.weight) + layer.bias
        else:
            z = h @ layer.weight + layer.bias
            for r, op in zip(RELATIONS, batch.rel_ops):
                if op.nnz:
                    z = z + _propagate(op, h @ layer.relation_weights[r.value])
        act = final_activation or i < k - 1
        out = np.maximum(z, 0.0) if act else z
        cache.append((h, z, act))
        h = out
    return h, cache


def backward(upstream: np.ndarray, batch: GraphBatch, layers: list[LayerParams], variant: str,
             cache) -> tuple[list[LayerParams], np.ndarray]:
    """Gradients of ``sum(upstream * output)`` for every parameter and the input."""
    grads = [LayerParams.zeros_like(l) for l in layers]
    g = upstream
    for i in range(len(layers) - 1, -1, -1):
        h, z, act = cache[i]
        layer = layers[i]
        dz = g * (z > 0) if act else g
        grads[i].bias = dz.sum(axis=0)
        if variant == GCN:
            m = batch.gcn_op.T @ dz
            grads[i].weight = h.T @ m
            g = m @ layer.weight.T
        else:
            grads[i].weight = h.T @ dz
            g = dz @ layer.weight.T
            for r, op in zip(RELATIONS, batch.rel_ops):
                w = layer.relation_weights[r.value]
                if op.nnz:
                    m = op.T @ dz
                    grads[i].relation_weights[r.value] = h.T @ m
                    g = g + m @ w.T
                else:
                    grads[i].relation_weights[r.value] = np.zeros_like(w)
    return grads, g


def _single(afg: Afg, reverse: bool = False) -> tuple[np.ndarray, GraphBatch]:
    return afg.features(), GraphBatch.from_afgs([afg], reverse=reverse)


def gcn_forward(afg: Afg, params: ModelParams, reverse: bool = False) -> np.ndarray:
    if params.variant != GCN:
        raise ValueError("gcn_forward needs GCN parameters")
    x, batch = _single(afg, reverse)
    return forward(x, batch, params.layers, GCN, params.final_activation)[0]


def rgcn_forward(afg: Afg, params: ModelParams, reverse: bool = False) -> np.ndarray:
    if params.variant != RGCN:
        raise ValueError("rgcn_forward needs RGCN parameters")
    x, batch = _single(afg, reverse)
    return forward(x, batch, params.layers, RGCN, params.final_activation)[0]


def encode(afg: Afg, params: ModelParams, reverse: bool = False) -> np.ndarray:
    """Node embeddings from the main encoder, whichever the variant."""
    x, batch = _single(afg, reverse)
    return forward(x, batch, params.layers, params.variant, params.final_activation)[0]


def gradients(afg: Afg, params: ModelParams, upstream: np.ndarray) -> list[LayerParams]:
    """Main-encoder parameter gradients for the scalar ``sum(upstream * H)``."""
    x, batch = _single(afg)
    _, cache = forward(x, batch, params.layers, params.variant, params.final_activation)
    return backward(upstream, batch, params.layers, params.variant, cache)[0]


def readout(node_embeddings: np.ndarray, api_nodes: Iterable[int]) -> np.ndarray:
    """Graph vector: the API node's row, or the mean over several API nodes."""
    idx = sorted(set(api_nodes))
    if not idx:
        raise NoApiNode("graph has no API node to read out")
    if len(idx) == 1:
        return node_embeddings[idx[0]].copy()
    # sorted per coordinate so the mean does not depend on node numbering
    return np.sort(node_embeddings[idx], axis=0).mean(axis=0)


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"AFGNNCKP"
FORMAT_VERSION = 1


def save_params(params: ModelParams, path: str | Path) -> None:
    """Write a versioned, checksummed, little-endian float64 checkpoint."""
    arrays = params.flat_arrays()
    header = {
        "variant": params.variant,
        "dim": params.dim,
        "num_layers": len(params.layers),
        "final_activation": params.final_activation,
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
        "metadata": params.metadata,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays)
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(head)) + head + payload
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_params(path: str | Path, expect_dim: Optional[int] = None,
                expect_variant: Optional[str] = None) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 + 32 or raw[:len(MAGIC)] != MAGIC:
        raise ChecksumError(f"{path}: not a checkpoint or truncated")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch (file truncated or corrupted)")
    version, head_len = struct.unpack_from("<II", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: checkpoint version {version}, expected {FORMAT_VERSION}")
    start = len(MAGIC) + 8
    header = json.loads(body[start:start + head_len].decode("utf-8"))
    offset = start + head_len
    values = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        values[name] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset += 8 * count
    if offset != len(body):
        raise ChecksumError(f"{path}: payload size does not match header")

    def layers(prefix: str) -> list[LayerParams]:
        out = []
        for i in range(header["num_layers"]):
            key = f"{prefix}.{i}."
            rel = {n[len(key) + 2:]: v for n, v in values.items() if n.startswith(key + "W_")}
            out.append(LayerParams(values[key + "weight"], values[key + "bias"], rel))
        return out

    params = ModelParams(header["variant"], header["dim"], layers("main"), layers("context"),
                         header["final_activation"], header.get("metadata", {}))
    if expect_dim is not None and params.dim != expect_dim:
        raise DimensionMismatch(f"{path}: checkpoint has d={params.dim}, pipeline expects d={expect_dim}")
    if expect_variant is not None and params.variant != expect_variant:
        raise VersionError(f"{path}: checkpoint variant {params.variant}, expected {expect_variant}")
    return params
