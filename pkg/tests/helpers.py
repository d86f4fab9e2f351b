"""Shared fixtures data and small graph generators for the test-suite."""
from __future__ import annotations

import re
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from afgnn.afg import Afg, AfgEdge, AfgNode, EdgeLabel
from afgnn.frontend import Kind, SourceSnippet
from afgnn.gnn import encode, gradients, init_params

DATA = Path(__file__).parent / "data"
LABELS = list(EdgeLabel)
# criterion number -> report line, filled by the acceptance suite
ACCEPTANCE = pytest.StashKey[dict]()


def load_snippet(name: str) -> SourceSnippet:
    return SourceSnippet(name, (DATA / f"{name}.java").read_text(encoding="utf-8"))


def golden_patterns(name: str) -> list[tuple[int, re.Pattern, int, re.Pattern, str]]:
    """Listed edges with ``...`` in the node text read as a wildcard."""
    out = []
    for raw in (DATA / f"{name}.golden").read_text(encoding="utf-8").splitlines():
        m = re.match(r"^Line_(\d+) \$\$ (.*?) --> Line_(\d+) \$\$ (.*) \[(FD|CD|SE)\]$", raw)
        assert m, raw
        def pat(text):
            return re.compile("^" + ".*".join(re.escape(p) for p in text.split("...")) + "$")
        out.append((int(m.group(1)), pat(m.group(2)), int(m.group(3)), pat(m.group(4)), m.group(5)))
    return out


def random_afg(rng: np.random.Generator, n: int, p: float = 0.3, dim: int | None = None,
               signature: bool = False, api: int | None = None) -> Afg:
    nodes = [AfgNode(i + 1, f"stmt_{i}();", Kind.METHOD_SIGNATURE if signature and i == 0 else Kind.EXPR_CALL)
             for i in range(n)]
    edges = []
    for s in range(n):
        for d in range(n):
            for lab in LABELS:
                if rng.random() < p / 3:
                    edges.append(AfgEdge(s, d, lab))
    if dim is not None:
        for node in nodes:
            node.feature = rng.standard_normal(dim)
    api_nodes = frozenset() if api is None else frozenset([api])
    return Afg(nodes, edges, api_nodes, f"g{n}")


@st.composite
def small_graphs(draw, max_nodes: int = 8, self_loops: bool = True):
    n = draw(st.integers(1, max_nodes))
    triples = draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.sampled_from(LABELS)),
                           max_size=3 * n))
    if not self_loops:
        triples = {t for t in triples if t[0] != t[1]}
    texts = draw(st.lists(st.from_regex(r"[a-z]{1,6}\(\);", fullmatch=True), min_size=n, max_size=n))
    nodes = [AfgNode(i + 1, texts[i], None) for i in range(n)]
    return Afg(nodes, [AfgEdge(s, d, lab) for s, d, lab in sorted(triples)], frozenset(), "h")


def template_afgs(n: int, seed: int = 0, dim: int = 64):
    """Raw AFGs of templated snippets with lexical node features."""
    from afgnn.afg import build_afg
    from afgnn.embed import EmbeddingConfig, LexicalProvider, attach_features
    from afgnn.frontend import parse_snippet
    from afgnn.synth import template_corpus

    provider = LexicalProvider(EmbeddingConfig(dim=dim))
    return [attach_features(build_afg(parse_snippet(s)), provider) for s in template_corpus(n, seed)]


# -- encoder and clustering oracles shared with the acceptance suite ------


def gnn_graph(rng, n, p=0.35, dim=4, labels=LABELS):
    nodes = [AfgNode(i + 1, f"s{i}();") for i in range(n)]
    edges = [AfgEdge(s, d, lab) for s in range(n) for d in range(n) for lab in labels
             if s != d and rng.random() < p / len(labels)]
    for node in nodes:
        node.feature = rng.standard_normal(dim)
    return Afg(nodes, edges, frozenset({n - 1}), "g")


def gnn_params(variant, dim, seed, final_activation=True, scale=1.0):
    """Random weights and nonzero biases, so no pre-activation sits on a ReLU kink."""
    p = init_params(variant, dim, seed=seed, final_activation=final_activation)
    rng = np.random.default_rng(seed + 1000)
    for layer in p.layers + p.context_encoder:
        layer.weight *= scale
        layer.bias = rng.uniform(-0.5, 0.5, size=dim)
    return p


def permuted(afg, perm):
    """Node ``i`` moves to position ``perm[i]``."""
    nodes = [None] * len(afg.nodes)
    for i, node in enumerate(afg.nodes):
        nodes[perm[i]] = node
    edges = [AfgEdge(perm[e.src], perm[e.dst], e.label) for e in afg.edges]
    return Afg(nodes, edges, frozenset(perm[i] for i in afg.api_nodes))


def _upstream_loss(afg, params, up):
    return float(np.sum(up * encode(afg, params)))


def fd_relative_error(afg, params, up, h=1e-5):
    """Worst per-array ``|fd - analytic| / max(|fd|, |analytic|)`` over every encoder parameter."""
    grads = gradients(afg, params, up)
    worst = 0.0
    for layer, glayer in zip(params.layers, grads):
        for (name, arr), (_, garr) in zip(layer.arrays(), glayer.arrays()):
            fd = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                plus = _upstream_loss(afg, params, up)
                arr[idx] = old - h
                minus = _upstream_loss(afg, params, up)
                arr[idx] = old
                fd[idx] = (plus - minus) / (2 * h)
            denom = max(np.linalg.norm(fd), np.linalg.norm(garr))
            if denom > 0:
                worst = max(worst, np.linalg.norm(fd - garr) / denom)
    return worst


def canon(labels):
    """Relabel by first appearance so partitions compare with ``==``."""
    seen = {}
    return [seen.setdefault(x, len(seen)) for x in labels]


def naive_average_linkage(points, k):
    """Direct average linkage: merge the pair with the smallest mean pairwise distance."""
    d = np.linalg.norm(points[:, None] - points[None, :], axis=2)
    clusters = [[i] for i in range(len(points))]
    while len(clusters) > k:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                link = d[np.ix_(clusters[a], clusters[b])].mean()
                if best is None or link < best[0]:
                    best = (link, a, b)
        _, a, b = best
        clusters[a] = clusters[a] + clusters.pop(b)
    labels = np.empty(len(points), dtype=int)
    for c, members in enumerate(clusters):
        labels[members] = c
    return canon(labels)


def pair_scan(u, v):
    agree = total = 0
    for i, j in combinations(range(len(u)), 2):
        agree += (u[i] == u[j]) == (v[i] == v[j])
        total += 1
    return agree / total


def mc_mutual_info(u, v, trials, rng):
    ui = np.unique(u, return_inverse=True)[1]
    vi = np.unique(v, return_inverse=True)[1]
    ku, kv, n = ui.max() + 1, vi.max() + 1, len(u)
    a = np.bincount(ui, minlength=ku).astype(float)
    b = np.bincount(vi, minlength=kv).astype(float)
    out = np.empty(trials)
    for t in range(trials):
        counts = np.bincount(ui * kv + rng.permutation(vi), minlength=ku * kv).reshape(ku, kv).astype(float)
        nz = counts > 0
        out[t] = np.sum(counts[nz] / n * np.log(counts[nz] * n / np.outer(a, b)[nz]))
    return out
