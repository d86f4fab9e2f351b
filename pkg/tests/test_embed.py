from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from afgnn.afg import Afg, AfgEdge, AfgNode, EdgeLabel
from afgnn.embed import (EmbeddingConfig, ExternalProvider, LexicalProvider, attach_features, lexical_embed,
                         make_provider, text_hash)
from afgnn.errors import DimensionMismatch, FormatError, MissingEmbedding
from afgnn.synth import template_corpus

CFG = EmbeddingConfig()


def _graph():
    nodes = [AfgNode(1, "void f(List xs) {"), AfgNode(2, "Iterator it = xs.iterator();"), AfgNode(3, "it.next();")]
    return Afg(nodes, [AfgEdge(0, 1, EdgeLabel.FD), AfgEdge(1, 2, EdgeLabel.FD)], frozenset({2}), "g")


@pytest.fixture(scope="module")
def corpus_lines():
    lines = set()
    for snip in template_corpus(4000, seed=0):
        lines.update(r.text.strip() for r in snip.lines if r.text.strip())
    return sorted(lines)


def test_config_validation():
    with pytest.raises(ValueError):
        EmbeddingConfig(dim=4)
    with pytest.raises(ValueError):
        EmbeddingConfig(provider="bert")
    with pytest.raises(ValueError):
        EmbeddingConfig(seed=-1)


def test_deterministic():
    a = lexical_embed("x = it.next();", CFG)
    b = lexical_embed("x = it.next();", CFG)
    assert np.array_equal(a, b)


def test_empty_is_zero():
    v = lexical_embed("", CFG)
    assert v.shape == (64,) and not v.any()


@given(st.text(max_size=80))
def test_norm_is_zero_or_one(text):
    v = lexical_embed(text, CFG)
    assert np.linalg.norm(v) == pytest.approx(0.0) or np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


def test_returned_vectors_are_independent():
    v = lexical_embed("a.b();", CFG)
    v[:] = 0
    assert lexical_embed("a.b();", CFG).any()


def test_distinct_lines_are_dissimilar(corpus_lines):
    assert len(corpus_lines) >= 10_000
    lines = corpus_lines[:10_000]
    m = np.vstack([lexical_embed(t, CFG) for t in lines])
    m = m[np.linalg.norm(m, axis=1) > 0]
    n = len(m)
    total = m.sum(axis=0)
    # mean of off-diagonal cosines for unit rows
    mean_cos = (total @ total - n) / (n * (n - 1))
    assert mean_cos < 0.5


def test_seed_sensitivity(corpus_lines):
    other = EmbeddingConfig(seed=12345)
    for text in corpus_lines[:500]:
        assert not np.array_equal(lexical_embed(text, CFG), lexical_embed(text, other))


def test_attach_lexical():
    g = attach_features(_graph(), LexicalProvider(CFG))
    assert g.dim == 64 and g.features().shape == (3, 64)
    assert _graph().nodes[0].feature is None
    again = attach_features(g, LexicalProvider(CFG))
    assert np.array_equal(again.features(), g.features())


def _write_vectors(path, texts, dim=8):
    rng = np.random.default_rng(0)
    with open(path, "w", encoding="utf-8") as fh:
        for t in texts:
            fh.write(json.dumps({"text_hash": text_hash(t), "vector": rng.standard_normal(dim).tolist()}) + "\n")


def test_external_provider(tmp_path):
    g = _graph()
    path = tmp_path / "vec.jsonl"
    _write_vectors(path, [n.text for n in g.nodes])
    prov = make_provider(EmbeddingConfig(dim=8, provider="external"), path)
    out = attach_features(g, prov)
    assert out.dim == 8
    # lookup uses the trimmed text
    assert np.array_equal(prov("  it.next();  "), out.nodes[2].feature)


def test_external_gap(tmp_path):
    g = _graph()
    path = tmp_path / "vec.jsonl"
    _write_vectors(path, [n.text for n in g.nodes[:2]])
    with pytest.raises(MissingEmbedding) as info:
        attach_features(g, ExternalProvider.from_file(path))
    assert info.value.line == 3


def test_external_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"text_hash": "00", "vector": [1, 2]}\nnot json\n', encoding="utf-8")
    with pytest.raises(FormatError) as info:
        ExternalProvider.from_file(bad)
    assert info.value.line_index == 2
    with pytest.raises(DimensionMismatch):
        ExternalProvider({"a": np.zeros(8), "b": np.zeros(9)})
    with pytest.raises(DimensionMismatch):
        ExternalProvider({"a": np.zeros(8)}, dim=16)
    with pytest.raises(ValueError):
        make_provider(EmbeddingConfig(provider="external"))


def test_text_hash_format():
    h = text_hash("  abc ")
    assert h == text_hash("abc") and len(h) == 16
    int(h, 16)
