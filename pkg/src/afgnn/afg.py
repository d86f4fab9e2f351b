"""API Flow Graph construction and the line-oriented text format."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import FormatError
from .frontend import (
    CHAIN,
    STRUCTURAL,
    Kind,
    StatementTree,
    all_callsites,
    find_callsites,
    tokenize,
)

__all__ = [
    "Afg",
    "AfgEdge",
    "AfgNode",
    "EdgeLabel",
    "LineEdge",
    "build_afg",
    "control_dep_edges",
    "def_use_edges",
    "parse_afg",
    "sequence_edges",
    "serialize_afg",
]


class EdgeLabel(str, Enum):
    FD = "FD"
    CD = "CD"
    SE = "SE"

    @property
    def order(self) -> int:
        return _LABEL_ORDER[self]


_LABEL_ORDER = {EdgeLabel.FD: 0, EdgeLabel.CD: 1, EdgeLabel.SE: 2}
RELATIONS = (EdgeLabel.FD, EdgeLabel.CD, EdgeLabel.SE)


class LineEdge(NamedTuple):
    """An edge between two source lines, before nodes are materialised."""

    src: int
    dst: int
    label: EdgeLabel


@dataclass
class AfgNode:
    line: int
    text: str
    kind: Optional[Kind] = None
    feature: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class AfgEdge:
    src: int  # index into Afg.nodes
    dst: int
    label: EdgeLabel


@dataclass
class Afg:
    nodes: list[AfgNode] = field(default_factory=list)
    edges: list[AfgEdge] = field(default_factory=list)
    api_nodes: frozenset[int] = frozenset()
    id: str = ""

    def __post_init__(self):
        n = len(self.nodes)
        for e in self.edges:
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ValueError(f"edge {e} references a node outside the graph")
        if len(set(self.edges)) != len(self.edges):
            raise ValueError("duplicate edges")
        self.api_nodes = frozenset(self.api_nodes)

    @property
    def dim(self) -> Optional[int]:
        for node in self.nodes:
            if node.feature is not None:
                return int(node.feature.shape[0])
        return None

    def node_at(self, line: int) -> Optional[int]:
        for i, node in enumerate(self.nodes):
            if node.line == line:
                return i
        return None

    def signature_node(self) -> Optional[int]:
        for i, node in enumerate(self.nodes):
            if node.kind == Kind.METHOD_SIGNATURE:
                return i
        return None

    def line_edges(self) -> set[LineEdge]:
        return {LineEdge(self.nodes[e.src].line, self.nodes[e.dst].line, e.label) for e in self.edges}

    def edge_triples(self) -> set[tuple[tuple[int, str], tuple[int, str], EdgeLabel]]:
        key = [(n.line, n.text) for n in self.nodes]
        return {(key[e.src], key[e.dst], e.label) for e in self.edges}

    def features(self) -> np.ndarray:
        """Node features stacked into an ``n x d`` matrix."""
        if any(n.feature is None for n in self.nodes):
            raise ValueError(f"graph {self.id!r} has nodes without features")
        if not self.nodes:
            return np.zeros((0, 0))
        return np.vstack([n.feature for n in self.nodes])

    def copy(self) -> "Afg":
        return Afg(
            [replace(n, feature=None if n.feature is None else n.feature.copy()) for n in self.nodes],
            list(self.edges),
            self.api_nodes,
            self.id,
        )


# ---------------------------------------------------------------------------
# edge extraction


def _ordered(tree: StatementTree):
    return sorted(tree.statements, key=lambda s: s.index)


def def_use_edges(tree: StatementTree) -> list[LineEdge]:
    """FD edges from the nearest preceding definition to every use."""
    edges: list[LineEdge] = []
    last_def: dict[str, int] = {}
    for stmt in _ordered(tree):
        for name in sorted(stmt.uses):
            if name in last_def:
                edges.append(LineEdge(last_def[name], stmt.line, EdgeLabel.FD))
        for name in stmt.defs:
            last_def[name] = stmt.line
    return _dedup(edges)


def control_dep_edges(tree: StatementTree) -> list[LineEdge]:
    """CD edges from each structural header to its directly nested statements."""
    edges = [
        LineEdge(stmt.line, child.line, EdgeLabel.CD)
        for stmt in _ordered(tree)
        if stmt.kind in STRUCTURAL
        for child in sorted(stmt.children, key=lambda s: s.index)
    ]
    return _dedup(edges)


def sequence_edges(tree: StatementTree) -> list[LineEdge]:
    """SE edges linking consecutive calls on the same named receiver."""
    by_receiver: dict[str, list[int]] = {}
    for cs in all_callsites(tree):
        if cs.receiver == CHAIN:
            continue
        by_receiver.setdefault(cs.receiver, []).append(cs.line)
    edges = []
    for lines in by_receiver.values():
        lines.sort()
        edges.extend(LineEdge(a, b, EdgeLabel.SE) for a, b in zip(lines, lines[1:]))
    return _dedup(edges)


def _dedup(edges: Iterable[LineEdge]) -> list[LineEdge]:
    return sorted(set(edges), key=lambda e: (e.src, e.dst, e.label.order))


def build_afg(tree: StatementTree, api: Optional[str] = None, *, graph_id: str = "",
              sequence: bool = True) -> Afg:
    """Raw AFG for a parsed method: one node per statement line.

    ``sequence=False`` omits SE edges (used for the sequence-edge ablation).
    """
    kinds: dict[int, Kind] = {}
    for stmt in _ordered(tree):
        kinds.setdefault(stmt.line, stmt.kind)
    lines = sorted(kinds)
    index = {line: i for i, line in enumerate(lines)}
    nodes = [AfgNode(line, tree.line_text(line), kinds[line]) for line in lines]
    line_edges = def_use_edges(tree) + control_dep_edges(tree)
    if sequence:
        line_edges += sequence_edges(tree)
    edges = [AfgEdge(index[e.src], index[e.dst], e.label) for e in _dedup(line_edges)]
    api_nodes: frozenset[int] = frozenset()
    if api:
        api_nodes = frozenset(index[cs.line] for cs in find_callsites(tree, api))
    return Afg(nodes, edges, api_nodes, graph_id or tree.snippet.id)


# ---------------------------------------------------------------------------
# text format


def _edge_sort_key(afg: Afg, e: AfgEdge):
    return (afg.nodes[e.src].line, afg.nodes[e.dst].line, e.label.order,
            afg.nodes[e.src].text, afg.nodes[e.dst].text)


def serialize_afg(afg: Afg) -> str:
    """One ``Line_i $$ text --> Line_j $$ text [LABEL]`` line per edge."""
    out = []
    for e in sorted(afg.edges, key=lambda e: _edge_sort_key(afg, e)):
        s, d = afg.nodes[e.src], afg.nodes[e.dst]
        out.append(f"Line_{s.line} $$ {s.text} --> Line_{d.line} $$ {d.text} [{e.label.value}]\n")
    return "".join(out)


EDGE_LINE_RE = re.compile(
    r"^Line_(\d+) \$\$ (.*?) --> Line_(\d+) \$\$ (.*) \[(FD|CD|SE)\]$"
)


def looks_like_signature(text: str) -> bool:
    """Heuristic used to recover the method-header node from serialized text."""
    try:
        toks = tokenize(text)
    except Exception:
        return False
    if len(toks) < 3 or toks[-1].text != "{":
        return False
    if toks[0].text in ("if", "for", "while", "do", "switch", "try", "catch", "finally",
                        "else", "synchronized", "new", "}", "return", "case", "default"):
        return False
    depth = 0
    saw_paren = False
    for t in toks[:-1]:
        if t.text in ("(", "[", "{"):
            depth += 1
            saw_paren = saw_paren or t.text == "("
        elif t.text in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and t.text in ("=", ".", "->", ";"):
            return False
    return depth == 0 and saw_paren


def parse_afg(text: str, graph_id: str = "") -> Afg:
    """Inverse of :func:`serialize_afg`, up to edge order."""
    nodes: list[AfgNode] = []
    index: dict[tuple[int, str], int] = {}
    edges: list[AfgEdge] = []

    def node(line: int, body: str) -> int:
        key = (line, body)
        if key not in index:
            index[key] = len(nodes)
            nodes.append(AfgNode(line, body))
        return index[key]

    for lineno, raw in enumerate(text.splitlines()):
        if not raw.strip():
            continue
        m = EDGE_LINE_RE.match(raw)
        if m is None:
            raise FormatError(f"malformed AFG edge line {raw!r}", lineno)
        s = node(int(m.group(1)), m.group(2))
        d = node(int(m.group(3)), m.group(4))
        edges.append(AfgEdge(s, d, EdgeLabel(m.group(5))))
    edges = list(dict.fromkeys(edges))
    # reorder nodes by line so indices are stable regardless of edge order
    order = sorted(range(len(nodes)), key=lambda i: (nodes[i].line, nodes[i].text))
    remap = {old: new for new, old in enumerate(order)}
    nodes = [nodes[i] for i in order]
    edges = [AfgEdge(remap[e.src], remap[e.dst], e.label) for e in edges]
    if nodes:
        first = min(range(len(nodes)), key=lambda i: nodes[i].line)
        if looks_like_signature(nodes[first].text):
            nodes[first].kind = Kind.METHOD_SIGNATURE
    return Afg(nodes, edges, frozenset(), graph_id)
