"""On-disk formats: snippet and AFG corpora, embedding matrices, JSON reports.

Corpora are JSON lines, one record per snippet or graph.  Writes go to a
temporary file that is renamed into place, so a failed run leaves nothing
half-written behind.
"""
from __future__ import annotations

import contextlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .afg import Afg, AfgEdge, AfgNode, EdgeLabel, serialize_afg
from .errors import FormatError
from .frontend import Kind, SourceSnippet

__all__ = [
    "SnippetRecord",
    "atomic_write",
    "read_afgs",
    "read_json",
    "read_matrix",
    "read_snippets",
    "read_truth",
    "write_afgs",
    "write_json",
    "write_matrix",
]


class SnippetRecord:
    __slots__ = ("snippet", "api", "misuse")

    def __init__(self, snippet: SourceSnippet, api: Optional[str] = None, misuse: Optional[bool] = None):
        self.snippet = snippet
        self.api = api
        self.misuse = misuse


@contextlib.contextmanager
def atomic_write(path: str | Path, mode: str = "w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding=None if "b" in mode else "utf-8", newline="" if "b" not in mode else None) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except ValueError as exc:
                raise FormatError(f"{path}: invalid JSON ({exc.args[0]})", lineno) from None
            if not isinstance(rec, dict):
                raise FormatError(f"{path}: expected a JSON object", lineno)
            yield lineno, rec


def read_snippets(path: str | Path) -> list[SnippetRecord]:
    """Snippets from a ``.java`` file, a directory of them, or JSON lines
    with ``id``, ``code`` and optional ``api`` / ``misuse`` fields."""
    p = Path(path)
    if p.is_dir():
        return [SnippetRecord(SourceSnippet(f.stem, f.read_text(encoding="utf-8")))
                for f in sorted(p.glob("*.java"))]
    if p.suffix == ".java":
        return [SnippetRecord(SourceSnippet(p.stem, p.read_text(encoding="utf-8")))]
    out = []
    for lineno, rec in _jsonl(p):
        try:
            out.append(SnippetRecord(SourceSnippet(str(rec["id"]), rec["code"]), rec.get("api"), rec.get("misuse")))
        except KeyError as exc:
            raise FormatError(f"{p}: missing field {exc.args[0]!r}", lineno) from None
    return out


def write_snippets(path: str | Path, records: Iterable[SnippetRecord]) -> None:
    with atomic_write(path) as fh:
        for r in records:
            rec = {"id": r.snippet.id, "code": r.snippet.text}
            if r.api is not None:
                rec["api"] = r.api
            if r.misuse is not None:
                rec["misuse"] = bool(r.misuse)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def afg_to_record(afg: Afg, api: Optional[str] = None) -> dict:
    return {
        "id": afg.id,
        "api": api,
        "nodes": [[n.line, n.text, n.kind.value if n.kind else None] for n in afg.nodes],
        "edges": [[e.src, e.dst, e.label.value] for e in afg.edges],
        "api_nodes": sorted(afg.api_nodes),
        "afg_text": serialize_afg(afg),
    }


def afg_from_record(rec: dict, where: str = "") -> tuple[Afg, Optional[str]]:
    try:
        nodes = [AfgNode(int(line), text, Kind(kind) if kind else None) for line, text, kind in rec["nodes"]]
        edges = [AfgEdge(int(s), int(d), EdgeLabel(lab)) for s, d, lab in rec["edges"]]
        return Afg(nodes, edges, frozenset(rec.get("api_nodes", ())), str(rec["id"])), rec.get("api")
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{where}: bad AFG record ({exc})") from None


def read_afgs(path: str | Path) -> list[tuple[Afg, Optional[str]]]:
    return [afg_from_record(rec, f"{path}:{lineno}") for lineno, rec in _jsonl(path)]


def write_afgs(path: str | Path, graphs: Iterable[tuple[Afg, Optional[str]]]) -> None:
    with atomic_write(path) as fh:
        for afg, api in graphs:
            fh.write(json.dumps(afg_to_record(afg, api), sort_keys=True) + "\n")


def write_afg_text(path: str | Path, graphs: Iterable[Afg]) -> None:
    """Plain edge listings; with several graphs each is preceded by ``# id``."""
    graphs = list(graphs)
    with atomic_write(path) as fh:
        for afg in graphs:
            if len(graphs) > 1:
                fh.write(f"# {afg.id}\n")
            fh.write(serialize_afg(afg))


def write_matrix(path: str | Path, ids: Iterable[str], matrix: np.ndarray) -> None:
    """Header line ``n d`` then one ``id<TAB>values`` row per vector."""
    ids = list(ids)
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != len(ids):
        raise ValueError("matrix rows and ids differ")
    with atomic_write(path) as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for id_, row in zip(ids, m):
            if "\t" in id_ or "\n" in id_:
                raise ValueError(f"id {id_!r} contains a tab or newline")
            fh.write(id_ + "\t" + " ".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty matrix file", 1)
    try:
        n, d = (int(x) for x in lines[0].split())
    except ValueError:
        raise FormatError(f"{path}: header must be 'n d'", 1) from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise FormatError(f"{path}: header says {n} rows, found {len(body)}", 1)
    ids, rows = [], []
    for i, ln in enumerate(body, start=2):
        id_, _, values = ln.partition("\t")
        try:
            row = [float(v) for v in values.split()]
        except ValueError:
            raise FormatError(f"{path}: non-numeric value", i) from None
        if len(row) != d:
            raise FormatError(f"{path}: expected {d} values, found {len(row)}", i)
        ids.append(id_)
        rows.append(row)
    return ids, np.asarray(rows, dtype=float).reshape(n, d)


def write_json(path: str | Path, obj) -> None:
    with atomic_write(path) as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path: str | Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except ValueError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def read_truth(path: str | Path) -> dict[str, bool]:
    """Ground truth as JSON lines ``{"id": ..., "misuse": true|false}``."""
    out = {}
    for lineno, rec in _jsonl(path):
        if "id" not in rec or "misuse" not in rec:
            raise FormatError(f"{path}: truth records need 'id' and 'misuse'", lineno)
        out[str(rec["id"])] = bool(rec["misuse"])
    return out


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with atomic_write(path) as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
