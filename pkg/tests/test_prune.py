from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from afgnn.afg import Afg, AfgEdge, AfgNode, EdgeLabel, build_afg
from afgnn.errors import NoCallsiteError
from afgnn.frontend import Kind, parse_snippet
from afgnn.prune import api_node_indices, prune, reachable_nodes
from afgnn.synth import misuse_corpus, template_corpus

from helpers import LABELS, load_snippet

API = "Iterator.next"


def _all_paths_reach(n, edges, api):
    """Exhaustive simple-path enumeration: nodes on some directed path into or out of an API node."""
    succ = {i: [d for s, d in edges if s == i] for i in range(n)}
    found = set(api)

    def walk(path):
        for v in succ[path[-1]]:
            if v in path:
                continue
            new = path + [v]
            if new[0] in api or v in api:
                found.update((new[0], v))
            walk(new)

    for start in range(n):
        walk([start])
    return found


@st.composite
def api_graphs(draw, max_nodes=10, signature=False, shared_lines=False, self_loops=False):
    n = draw(st.integers(1, max_nodes))
    api = draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=2))
    pairs = draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.sampled_from(LABELS)),
                         max_size=2 * n))
    if not self_loops:
        pairs = {p for p in pairs if p[0] != p[1]}
    if shared_lines:
        lines = sorted(draw(st.lists(st.integers(1, n), min_size=n, max_size=n)))
    else:
        lines = list(range(1, n + 1))
    nodes = []
    for i in range(n):
        kind = Kind.METHOD_SIGNATURE if signature and i == 0 else Kind.EXPR_CALL
        text = f"v{i} = it.next();" if i in api else f"work{i}(v);"
        nodes.append(AfgNode(lines[i], text, kind))
    return Afg(nodes, [AfgEdge(s, d, lab) for s, d, lab in sorted(pairs)], frozenset(), "r")


# -- fixtures ---------------------------------------------------------------


def test_statement_execute_pruning():
    raw = build_afg(parse_snippet(load_snippet("statement_execute")), "Statement.execute")
    g = prune(raw, "Statement.execute")
    lines = {n.line for n in g.nodes}
    assert 6 not in lines and 11 not in lines
    assert lines == {2, 4, 7, 8}
    assert [g.nodes[i].line for i in g.api_nodes] == [8]


def test_single_api_node():
    g = Afg([AfgNode(1, "x = it.next();")], [], frozenset(), "one")
    out = prune(g, API)
    assert len(out.nodes) == 1 and out.edges == [] and out.api_nodes == {0}


def test_no_callsite():
    with pytest.raises(NoCallsiteError):
        prune(build_afg(parse_snippet(load_snippet("statement_execute"))), "Foo.noSuchMethod")


def test_signature_cd_removed():
    raw = build_afg(parse_snippet(load_snippet("unguarded_remove")))
    out = prune(raw, "ArrayList.remove")
    sig = out.signature_node()
    assert sig is not None
    assert not any(e.src == sig and e.label == EdgeLabel.CD for e in out.edges)
    assert any(e.src == sig and e.label == EdgeLabel.FD for e in out.edges)


def test_shared_line_merge():
    nodes = [AfgNode(1, "a = it.next();"), AfgNode(2, "b = f(a);"), AfgNode(2, "c = g(b);"), AfgNode(3, "h(c);")]
    edges = [AfgEdge(0, 1, EdgeLabel.FD), AfgEdge(1, 2, EdgeLabel.FD), AfgEdge(2, 3, EdgeLabel.FD),
             AfgEdge(0, 2, EdgeLabel.FD)]
    out = prune(Afg(nodes, edges, frozenset(), "m"), API)
    assert [n.line for n in out.nodes] == [1, 2, 3]
    assert out.line_edges() == {(1, 2, EdgeLabel.FD), (2, 3, EdgeLabel.FD)}


def test_edge_modes():
    raw = build_afg(parse_snippet(load_snippet("statement_execute")))
    base = prune(raw, "Statement.execute")
    rev = prune(raw, "Statement.execute", edge_mode="reverse")
    dup = prune(raw, "Statement.execute", edge_mode="duplicate")
    flip = {(d, s, lab) for s, d, lab in base.line_edges()}
    assert rev.line_edges() == flip
    assert dup.line_edges() == flip | base.line_edges()
    with pytest.raises(ValueError):
        prune(raw, "Statement.execute", edge_mode="sideways")


# -- oracle and properties --------------------------------------------------


@given(api_graphs(max_nodes=10))
def test_reachability_matches_path_enumeration(g):
    api = api_node_indices(g, API)
    pairs = {(e.src, e.dst) for e in g.edges}
    oracle = _all_paths_reach(len(g.nodes), pairs, api)
    assert reachable_nodes(g, api) == oracle
    # without signature, self-loops or shared lines, pruning keeps exactly those nodes
    out = prune(g, API)
    assert {n.line for n in out.nodes} == {g.nodes[i].line for i in oracle}


@pytest.mark.parametrize("seed", range(5))
def test_reachability_30_nodes(seed):
    rng = np.random.default_rng(seed)
    n = 30
    nodes = [AfgNode(i + 1, "x = it.next();" if i in (3, 17) else f"w{i}();") for i in range(n)]
    edges = sorted({(int(rng.integers(n)), int(rng.integers(n))) for _ in range(25)})
    afg = Afg(nodes, [AfgEdge(s, d, EdgeLabel.FD) for s, d in edges if s != d], frozenset(), "big")
    api = api_node_indices(afg, API)
    # fixpoint closure as an independent oracle at this size
    closure = np.eye(n, dtype=bool)
    for s, d in edges:
        closure[s, d] = True
    for k in range(n):
        closure |= closure[:, [k]] & closure[[k], :]
    expect = {i for i in range(n) if any(closure[i, a] or closure[a, i] for a in api)}
    assert reachable_nodes(afg, api) == expect


def _check_output(g, out):
    lines = [n.line for n in out.nodes]
    assert len(lines) == len(set(lines))
    assert all(e.src != e.dst for e in out.edges)
    sig = {i for i, n in enumerate(out.nodes) if n.kind == Kind.METHOD_SIGNATURE}
    assert not any(e.label == EdgeLabel.CD and e.src in sig for e in out.edges)
    assert len(out.nodes) <= len(g.nodes) and len(out.edges) <= len(g.edges)
    touched = {i for e in out.edges for i in (e.src, e.dst)}
    assert all(i in touched or i in out.api_nodes for i in range(len(out.nodes)))
    # every survivor connects to an API node in the unpruned graph
    reach = reachable_nodes(g, api_node_indices(g, API))
    assert set(lines) <= {g.nodes[i].line for i in reach}


@given(api_graphs(max_nodes=9, signature=True, shared_lines=True, self_loops=True))
def test_output_invariants(g):
    _check_output(g, prune(g, API))


@given(api_graphs(max_nodes=9, signature=True, shared_lines=True, self_loops=True))
def test_idempotent(g):
    once = prune(g, API)
    twice = prune(once, API)
    assert twice.edge_triples() == once.edge_triples()
    assert [(n.line, n.text) for n in twice.nodes] == [(n.line, n.text) for n in once.nodes]


def test_misuse_corpus_prunes():
    for case in misuse_corpus(seed=1):
        raw = build_afg(parse_snippet(case.snippet), case.api)
        out = prune(raw, case.api)
        _check_output(raw, out)
        assert out.api_nodes


def test_templates_prune_idempotent():
    for snip in template_corpus(16, seed=2):
        raw = build_afg(parse_snippet(snip))
        for api in (".close", ".next", ".get", ".append"):
            try:
                once = prune(raw, api)
            except NoCallsiteError:
                continue
            assert prune(once, api).edge_triples() == once.edge_triples()
