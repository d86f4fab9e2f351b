"""Self-supervised context-prediction pre-training.

A node's K1-hop neighbourhood (main encoder) is scored against the embedding
of its context ring (context encoder, averaged over the anchor nodes the two
regions share).  True pairs are positives; pairing the neighbourhood with
another centre's context gives negatives.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .afg import Afg
from .errors import EmptyCorpus
from .gnn import GraphBatch, LayerParams, ModelParams, backward, forward, init_params

log = logging.getLogger(__name__)

__all__ = [
    "Adam",
    "ContextSample",
    "TrainConfig",
    "TrainResult",
    "context_loss",
    "filter_corpus",
    "sample_batch",
    "sample_contexts",
    "split_corpus",
    "train",
    "validation_accuracy",
]


@dataclass
class TrainConfig:
    lr: float = 5e-5
    batch: int = 64
    adam_eps: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    patience: int = 5
    k1: int = 2
    r1: int = 1
    r2: int = 3
    negatives: int = 1
    seed: int = 0
    max_epochs: int = 100
    variant: str = "RGCN"
    dim: int = 64
    num_layers: int = 5
    # A ReLU on the last layer makes every score >= 0.5, which stalls
    # training at small learning rates; the last layer is linear by default.
    final_activation: bool = False
    min_edges: int = 3

    def __post_init__(self):
        if not (self.r1 <= self.k1 <= self.r2 and self.r1 < self.r2):
            raise ValueError(f"need r1 <= K1 <= r2 and r1 < r2, got r1={self.r1} K1={self.k1} r2={self.r2}")
        if self.r1 < 1:
            raise ValueError("context ring must exclude the centre (r1 >= 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.negatives < 1:
            raise ValueError("need at least one negative per positive")
        if self.batch < 2:
            raise ValueError("batch must hold at least two samples")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        return cls(**{"batch": 256, "dim": 256, **overrides})


def filter_corpus(corpus: Sequence[Afg], min_edges: int = 3) -> list[Afg]:
    """Graphs with at least ``min_edges`` edges."""
    return [g for g in corpus if len(g.edges) >= min_edges]


def split_corpus(corpus: Sequence[Afg], seed: int) -> tuple[list[Afg], list[Afg], list[Afg]]:
    """Shuffle and split 8:1:1 into (train, test, validation)."""
    order = np.random.default_rng(seed).permutation(len(corpus))
    n_train = int(len(corpus) * 0.8)
    n_test = int(len(corpus) * 0.1)
    pick = lambda idx: [corpus[i] for i in idx]  # noqa: E731
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_test]),
            pick(order[n_train + n_test:]))


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class ContextSample:
    graph_id: str
    center: int
    neighborhood: frozenset
    context: frozenset
    anchors: frozenset
    label: int
    graph_index: int = 0
    context_graph_index: int = 0
    context_center: int = 0


def hop_distances(afg: Afg, source: int) -> dict[int, int]:
    """BFS distances from ``source`` on the undirected skeleton."""
    adj: dict[int, set[int]] = {}
    for e in afg.edges:
        adj.setdefault(e.src, set()).add(e.dst)
        adj.setdefault(e.dst, set()).add(e.src)
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _positives(afg: Afg, cfg: TrainConfig, graph_index: int) -> list[ContextSample]:
    out = []
    for v in range(len(afg.nodes)):
        dist = hop_distances(afg, v)
        nbr = frozenset(u for u, d in dist.items() if d <= cfg.k1)
        ctx = frozenset(u for u, d in dist.items() if cfg.r1 <= d <= cfg.r2)
        anchors = nbr & ctx
        if anchors:
            out.append(ContextSample(afg.id, v, nbr, ctx, anchors, 1, graph_index, graph_index, v))
    return out


def _negatives(positives: list[ContextSample], count: int, rng: np.random.Generator) -> list[ContextSample]:
    out = []
    n = len(positives)
    for i, pos in enumerate(positives):
        for _ in range(count):
            j = int(rng.integers(n - 1))
            j += j >= i
            other = positives[j]
            out.append(ContextSample(pos.graph_id, pos.center, pos.neighborhood, other.context,
                                     other.anchors, 0, pos.graph_index, other.graph_index,
                                     other.center))
    return out


def sample_batch(afgs: Sequence[Afg], cfg: TrainConfig, rng: np.random.Generator) -> list[ContextSample]:
    """Positives for every eligible centre plus ``cfg.negatives`` each, drawn
    from other centres in the same batch."""
    positives = [s for gi, g in enumerate(afgs) for s in _positives(g, cfg, gi)]
    if len(positives) < 2:
        return []
    return positives + _negatives(positives, cfg.negatives, rng)


def sample_contexts(afg: Afg, cfg: TrainConfig, rng: np.random.Generator) -> list[ContextSample]:
    """Context samples for a single graph; negatives come from its other centres."""
    positives = _positives(afg, cfg, 0)
    if len(positives) < 2:
        return positives
    return positives + _negatives(positives, cfg.negatives, rng)


# ---------------------------------------------------------------------------
# loss


def _subgraph(afg: Afg, nodes: frozenset) -> tuple[list[int], list[tuple[int, int, object]]]:
    order = sorted(nodes)
    local = {u: i for i, u in enumerate(order)}
    edges = [(local[e.src], local[e.dst], e.label) for e in afg.edges if e.src in local and e.dst in local]
    return order, edges


class _BatchGraphs:
    """Neighbourhood and context subgraphs of a sample batch, deduplicated."""

    def __init__(self, afgs: Sequence[Afg], samples: Sequence[ContextSample], features: Sequence[np.ndarray]):
        nbr_keys: dict[tuple[int, int], int] = {}
        ctx_keys: dict[tuple[int, int], int] = {}
        nbr_parts, ctx_parts = [], []
        self.pairs = np.zeros((len(samples), 2), dtype=np.int64)
        for s_i, s in enumerate(samples):
            key = (s.graph_index, s.center)
            if key not in nbr_keys:
                nbr_keys[key] = len(nbr_parts)
                order, edges = _subgraph(afgs[s.graph_index], s.neighborhood)
                nbr_parts.append((s.graph_index, order, edges, order.index(s.center)))
            ckey = (s.context_graph_index, s.context_center)
            if ckey not in ctx_keys:
                ctx_keys[ckey] = len(ctx_parts)
                order, edges = _subgraph(afgs[s.context_graph_index], s.context)
                local = [order.index(a) for a in sorted(s.anchors)]
                ctx_parts.append((s.context_graph_index, order, edges, local))
            self.pairs[s_i] = (nbr_keys[key], ctx_keys[ckey])
        self.labels = np.array([s.label for s in samples], dtype=float)

        self.nbr_batch = GraphBatch.from_edges([len(p[1]) for p in nbr_parts], [p[2] for p in nbr_parts])
        self.nbr_x = np.vstack([features[p[0]][p[1]] for p in nbr_parts])
        self.center_rows = self.nbr_batch.offsets + np.array([p[3] for p in nbr_parts])

        self.ctx_batch = GraphBatch.from_edges([len(p[1]) for p in ctx_parts], [p[2] for p in ctx_parts])
        self.ctx_x = np.vstack([features[p[0]][p[1]] for p in ctx_parts])
        # averaging operator: one row per context, columns = context-batch nodes
        rows, cols, vals = [], [], []
        for c_i, p in enumerate(ctx_parts):
            base = self.ctx_batch.offsets[c_i]
            for a in p[3]:
                rows.append(c_i)
                cols.append(base + a)
                vals.append(1.0 / len(p[3]))
        self.anchor_mean = np.zeros((len(ctx_parts), self.ctx_batch.num_nodes))
        self.anchor_mean[rows, cols] = vals


def _scores(params: ModelParams, graphs: _BatchGraphs):
    h_all, nbr_cache = forward(graphs.nbr_x, graphs.nbr_batch, params.layers, params.variant,
                               params.final_activation)
    c_all, ctx_cache = forward(graphs.ctx_x, graphs.ctx_batch, params.context_encoder, params.variant,
                               params.final_activation)
    h = h_all[graphs.center_rows]
    c = graphs.anchor_mean @ c_all
    logits = np.einsum("ij,ij->i", h[graphs.pairs[:, 0]], c[graphs.pairs[:, 1]])
    return logits, h, c, h_all, c_all, nbr_cache, ctx_cache


def _features(afgs: Sequence[Afg]) -> list[np.ndarray]:
    return [g.features() for g in afgs]


def context_loss(params: ModelParams, afgs: Sequence[Afg], samples: Sequence[ContextSample],
                 features: Optional[Sequence[np.ndarray]] = None):
    """Mean binary cross-entropy of ``sigmoid(h_v . c)`` against the labels.

    Returns ``(loss, main_grads, context_grads)``.
    """
    if not samples:
        raise ValueError("context_loss needs a nonempty batch")
    graphs = _BatchGraphs(afgs, samples, features if features is not None else _features(afgs))
    logits, h, c, h_all, c_all, nbr_cache, ctx_cache = _scores(params, graphs)
    y = graphs.labels
    loss = float(np.mean(np.where(y > 0, np.logaddexp(0.0, -logits), np.logaddexp(0.0, logits))))
    g = (1.0 / (1.0 + np.exp(-logits)) - y) / len(y)

    dh = np.zeros_like(h)
    dc = np.zeros_like(c)
    np.add.at(dh, graphs.pairs[:, 0], g[:, None] * c[graphs.pairs[:, 1]])
    np.add.at(dc, graphs.pairs[:, 1], g[:, None] * h[graphs.pairs[:, 0]])
    up_main = np.zeros_like(h_all)
    up_main[graphs.center_rows] = dh
    up_ctx = graphs.anchor_mean.T @ dc
    main_grads, _ = backward(up_main, graphs.nbr_batch, params.layers, params.variant, nbr_cache)
    ctx_grads, _ = backward(up_ctx, graphs.ctx_batch, params.context_encoder, params.variant, ctx_cache)
    return loss, main_grads, ctx_grads


def predict(params: ModelParams, afgs: Sequence[Afg], samples: Sequence[ContextSample],
            features: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Context-match probabilities for each sample."""
    graphs = _BatchGraphs(afgs, samples, features if features is not None else _features(afgs))
    logits = _scores(params, graphs)[0]
    return 1.0 / (1.0 + np.exp(-logits))


def validation_accuracy(params: ModelParams, afgs: Sequence[Afg], samples: Sequence[ContextSample],
                        features: Optional[Sequence[np.ndarray]] = None) -> float:
    """Fraction of samples whose prediction (probability > 0.5) matches the label."""
    if not samples:
        return 0.0
    prob = predict(params, afgs, samples, features)
    labels = np.array([s.label for s in samples])
    return float(np.mean((prob > 0.5) == (labels > 0)))


# ---------------------------------------------------------------------------
# optimisation


class Adam:
    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(a) for _, a in params.flat_arrays()]
        self.v = [np.zeros_like(a) for _, a in params.flat_arrays()]

    def step(self, params: ModelParams, main_grads: list[LayerParams], ctx_grads: list[LayerParams]) -> None:
        self.t += 1
        grads = [a for layer in main_grads + ctx_grads for _, a in layer.arrays()]
        b1t = 1 - self.beta1 ** self.t
        b2t = 1 - self.beta2 ** self.t
        for (_, p), g, m, v in zip(params.flat_arrays(), grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    test_accuracy: Optional[float] = None


def _epoch_batches(afgs: Sequence[Afg], cfg: TrainConfig, rng: np.random.Generator):
    positives = [s for gi, g in enumerate(afgs) for s in _positives(g, cfg, gi)]
    order = rng.permutation(len(positives))
    per_batch = max(2, cfg.batch // (1 + cfg.negatives))
    chunks = [[positives[i] for i in order[k:k + per_batch]] for k in range(0, len(order), per_batch)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2].extend(chunks.pop())
    for chunk in chunks:
        if len(chunk) >= 2:
            yield chunk + _negatives(chunk, cfg.negatives, rng)


def train(corpus: Sequence[Afg], cfg: TrainConfig, *, init: Optional[ModelParams] = None,
          on_epoch: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Pre-train both encoders with early stopping on validation accuracy.

    The returned parameters are those of the best validation epoch (earliest
    on ties).  Every node must already carry a feature vector.
    """
    graphs = filter_corpus(corpus, cfg.min_edges)
    if not graphs:
        raise EmptyCorpus("no graph in the corpus has enough edges to pre-train on")
    rng = np.random.default_rng(cfg.seed)
    train_set, test_set, val_set = split_corpus(graphs, int(rng.integers(2**32)))
    if not val_set:
        val_set = train_set
    feat_train, feat_val = _features(train_set), _features(val_set)
    val_samples = sample_batch(val_set, cfg, np.random.default_rng(int(rng.integers(2**32))))

    params = init.copy() if init is not None else init_params(
        cfg.variant, cfg.dim, cfg.num_layers, int(rng.integers(2**32)), cfg.final_activation)
    opt = Adam(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    best_acc = -math.inf
    best = params.copy()
    best_epoch = 0
    since_best = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        losses, weights = [], []
        for batch in _epoch_batches(train_set, cfg, rng):
            loss, g_main, g_ctx = context_loss(params, train_set, batch, feat_train)
            opt.step(params, g_main, g_ctx)
            losses.append(loss)
            weights.append(len(batch))
        train_loss = float(np.average(losses, weights=weights)) if losses else float("nan")
        acc = validation_accuracy(params, val_set, val_samples, feat_val)
        row = {"epoch": epoch, "train_loss": train_loss, "val_accuracy": acc}
        history.append(row)
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, train_loss, acc)
        if on_epoch is not None:
            on_epoch(row)
        if acc > best_acc:
            best_acc, best, best_epoch, since_best = acc, params.copy(), epoch, 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    test_acc = None
    if test_set:
        test_samples = sample_batch(test_set, cfg, np.random.default_rng(cfg.seed + 1))
        if test_samples:
            test_acc = validation_accuracy(best, test_set, test_samples)
    best.metadata.update({
        "train_config": asdict(cfg),
        "best_epoch": best_epoch,
        "best_val_accuracy": best_acc,
        "test_accuracy": test_acc,
    })
    return TrainResult(best, history, best_epoch, test_acc)
