"""Reduce a raw AFG to the part that matters for one target API."""
from __future__ import annotations

from collections import deque
from typing import Iterable

from .afg import Afg, AfgEdge, AfgNode, EdgeLabel
from .errors import NoCallsiteError
from .frontend import Kind, line_callsites, split_api

__all__ = ["api_node_indices", "prune", "reachable_nodes", "EDGE_MODES"]

EDGE_MODES = ("none", "reverse", "duplicate")


def api_node_indices(afg: Afg, api: str) -> frozenset[int]:
    """Nodes whose text contains a ``recv.method(`` call of the API's method."""
    _, method = split_api(api)
    return frozenset(i for i, n in enumerate(afg.nodes) if line_callsites(n.text, method))


def _bfs(start: Iterable[int], adj: dict[int, list[int]]) -> set[int]:
    seen = set(start)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def reachable_nodes(afg: Afg, api_nodes: Iterable[int]) -> set[int]:
    """API nodes plus all their ancestors and descendants.

    Every path follows edge direction throughout; labels are ignored.
    """
    succ: dict[int, list[int]] = {}
    pred: dict[int, list[int]] = {}
    for e in afg.edges:
        succ.setdefault(e.src, []).append(e.dst)
        pred.setdefault(e.dst, []).append(e.src)
    api_nodes = list(api_nodes)
    return _bfs(api_nodes, succ) | _bfs(api_nodes, pred)


def _apply_edge_mode(edges: list[AfgEdge], mode: str) -> list[AfgEdge]:
    if mode == "none":
        return edges
    flipped = [AfgEdge(e.dst, e.src, e.label) for e in edges]
    if mode == "reverse":
        return list(dict.fromkeys(flipped))
    if mode == "duplicate":
        return list(dict.fromkeys(edges + flipped))
    raise ValueError(f"unknown edge mode {mode!r}; expected one of {EDGE_MODES}")


def prune(afg: Afg, api: str, *, edge_mode: str = "none") -> Afg:
    """Keep the subgraph relevant to ``api``.

    Steps: mark API nodes, keep nodes with a directed path to or from one,
    drop CD edges leaving the method signature, drop self-loops, merge nodes
    on the same line, then drop isolated nodes that are not API nodes.
    Method-level input has no class-level links, so there is nothing to
    remove on that front.
    """
    marked = api_node_indices(afg, api)
    if not marked:
        raise NoCallsiteError(f"{api} is not called in graph {afg.id!r}")
    keep = reachable_nodes(afg, marked)

    sig = {i for i, n in enumerate(afg.nodes) if n.kind == Kind.METHOD_SIGNATURE}
    edges = [
        e for e in afg.edges
        if e.src in keep and e.dst in keep
        and not (e.label == EdgeLabel.CD and e.src in sig)
        and e.src != e.dst
    ]

    # merge nodes that share a line; an API node, else the lowest index, represents the line
    by_line: dict[int, int] = {}
    for i in sorted(keep, key=lambda i: (i not in marked, i)):
        by_line.setdefault(afg.nodes[i].line, i)
    rep = {i: by_line[afg.nodes[i].line] for i in keep}
    edges = [AfgEdge(rep[e.src], rep[e.dst], e.label) for e in edges]
    # a merged line may now start at the signature, so filter its CD edges again
    edges = [e for e in dict.fromkeys(edges)
             if e.src != e.dst and not (e.label == EdgeLabel.CD and afg.nodes[e.src].kind == Kind.METHOD_SIGNATURE)]
    api_reps = {rep[i] for i in marked}

    touched = {e.src for e in edges} | {e.dst for e in edges}
    survivors = sorted(i for i in set(rep.values()) if i in touched or i in api_reps)
    remap = {old: new for new, old in enumerate(survivors)}
    nodes = []
    for old in survivors:
        n = afg.nodes[old]
        nodes.append(AfgNode(n.line, n.text, n.kind, None if n.feature is None else n.feature.copy()))
    new_edges = [AfgEdge(remap[e.src], remap[e.dst], e.label) for e in edges]
    new_edges = _apply_edge_mode(new_edges, edge_mode)
    return Afg(nodes, new_edges, frozenset(remap[i] for i in api_reps), afg.id)
