"""Templated Java snippets and Gaussian blobs for tests and demos.

Templates cover a handful of common API idioms with randomised identifiers
and optional filler statements, so graphs vary in size and wording while
keeping recognisable structure.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .frontend import SourceSnippet

__all__ = ["MisuseCase", "blobs", "misuse_corpus", "template_corpus", "TEMPLATES"]

_NOUNS = ["item", "entry", "record", "node", "value", "token", "elem", "row", "user", "order",
          "event", "task", "file", "key", "msg", "job", "part", "cell", "page", "unit"]
_VERBS = ["load", "handle", "process", "scan", "collect", "update", "render", "check", "merge",
          "build", "sync", "dispatch", "flush", "index", "apply", "drain", "visit", "emit"]
_TYPES = ["String", "Object", "Integer", "Long", "Node", "Entry", "Record", "Item"]


class _Names:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def var(self, hint: Optional[str] = None) -> str:
        base = hint or self.rng.choice(_NOUNS)
        for _ in range(100):
            name = base + self.rng.choice(["", "s", "List", "Map", "Buf", str(self.rng.randint(1, 9))])
            if name not in self.used:
                self.used.add(name)
                return name
        name = f"{base}{len(self.used)}"
        self.used.add(name)
        return name

    def method(self) -> str:
        return self.rng.choice(_VERBS) + self.rng.choice(["", "All", "Next", "One", "Item", "Data"])

    def type(self) -> str:
        return self.rng.choice(_TYPES)


def _filler(rng: random.Random, names: _Names, indent: str) -> list[str]:
    kind = rng.randrange(4)
    if kind == 0:
        return [f'{indent}LOG.debug("{names.method()} started");']
    if kind == 1:
        c = names.var("count")
        return [f"{indent}int {c} = 0;", f"{indent}{c}++;"]
    if kind == 2:
        return [f"{indent}{names.method()}();"]
    t = names.var("start")
    return [f"{indent}long {t} = System.nanoTime();", f"{indent}stats.record({t});"]


def _method(rng: random.Random, names: _Names, params: str, body: list[str]) -> str:
    ret = rng.choice(["void", "void", "int", "boolean"])
    lines = [f"public {ret} {names.method()}({params}) {{"]
    for stmt in body:
        if rng.random() < 0.25 and not stmt.lstrip().startswith("}"):
            lines.extend(_filler(rng, names, "    "))
        lines.append(stmt)
    if ret == "int":
        lines.append("    return 0;")
    elif ret == "boolean":
        lines.append("    return true;")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _reader(rng, names):
    br, line, path = names.var("reader"), names.var("line"), names.var("path")
    body = [
        f"    BufferedReader {br} = new BufferedReader(new FileReader({path}));",
        f"    String {line} = {br}.readLine();",
        f"    while ({line} != null) {{",
        f"        {names.method()}({line});",
        f"        {line} = {br}.readLine();",
        "    }",
        f"    {br}.close();",
    ]
    return _method(rng, names, f"String {path}", body)


def _iterator(rng, names):
    t, xs, it, x = names.type(), names.var(), names.var("it"), names.var()
    body = [
        f"    Iterator<{t}> {it} = {xs}.iterator();",
        f"    while ({it}.hasNext()) {{",
        f"        {t} {x} = {it}.next();",
        f"        {names.method()}({x});",
        "    }",
    ]
    return _method(rng, names, f"List<{t}> {xs}", body)


def _map_guard(rng, names):
    t, m, k, v = names.type(), names.var("map"), names.var("key"), names.var()
    body = [
        f"    {t} {v} = {m}.get({k});",
        f"    if ({v} != null) {{",
        f"        {v}.{names.method()}();",
        f"        {m}.remove({k});",
        "    }",
    ]
    return _method(rng, names, f"Map<String, {t}> {m}, String {k}", body)


def _socket(rng, names):
    s, host, port, out = names.var("socket"), names.var("host"), names.var("port"), names.var("out")
    e = rng.choice(["e", "ex", "err"])
    body = [
        "    try {",
        f"        Socket {s} = new Socket();",
        f"        {s}.connect(new InetSocketAddress({host}, {port}));",
        f"        OutputStream {out} = {s}.getOutputStream();",
        f"        {out}.write(payload);",
        f"        {s}.close();",
        f"    }} catch (IOException {e}) {{",
        f"        LOG.warn({e});",
        "    }",
    ]
    return _method(rng, names, f"String {host}, int {port}", body)


def _indexed_loop(rng, names):
    t, xs, i, x, total = names.type(), names.var(), "i", names.var(), names.var("total")
    body = [
        f"    int {total} = 0;",
        f"    for (int {i} = 0; {i} < {xs}.size(); {i}++) {{",
        f"        {t} {x} = {xs}.get({i});",
        f"        if ({x} != null) {{",
        f"            {total} += {x}.hashCode();",
        "        }",
        "    }",
        f"    {names.method()}({total});",
    ]
    return _method(rng, names, f"List<{t}> {xs}", body)


def _builder(rng, names):
    sb, xs, x = names.var("sb"), names.var(), names.var()
    t = names.type()
    body = [
        f"    StringBuilder {sb} = new StringBuilder();",
        f"    for ({t} {x} : {xs}) {{",
        f"        {sb}.append({x});",
        f'        {sb}.append(",");',
        "    }",
        f"    String result = {sb}.toString();",
        f"    {names.method()}(result);",
    ]
    return _method(rng, names, f"List<{t}> {xs}", body)


def _lock(rng, names):
    lock, n = names.var("lock"), names.var("value")
    body = [
        f"    {lock}.lock();",
        "    try {",
        f"        int {n} = counter.get();",
        f"        counter.set({n} + 1);",
        "    } finally {",
        f"        {lock}.unlock();",
        "    }",
    ]
    return _method(rng, names, f"Lock {lock}", body)


def _statement(rng, names):
    st, rs, sql = names.var("stmt"), names.var("rs"), names.var("sql")
    body = [
        f"    Statement {st} = connection.createStatement();",
        f"    ResultSet {rs} = {st}.executeQuery({sql});",
        f"    while ({rs}.next()) {{",
        f"        {names.method()}({rs}.getString(1));",
        "    }",
        f"    {rs}.close();",
        f"    {st}.close();",
    ]
    return _method(rng, names, f"String {sql}", body)


TEMPLATES: dict[str, Callable[[random.Random, _Names], str]] = {
    "reader": _reader,
    "iterator": _iterator,
    "map_guard": _map_guard,
    "socket": _socket,
    "indexed_loop": _indexed_loop,
    "builder": _builder,
    "lock": _lock,
    "statement": _statement,
}


def template_corpus(n: int, seed: int = 0) -> list[SourceSnippet]:
    """``n`` snippets cycling through :data:`TEMPLATES` in shuffled order."""
    rng = random.Random(seed)
    keys = sorted(TEMPLATES)
    out = []
    for i in range(n):
        key = keys[i % len(keys)] if i < len(keys) else rng.choice(keys)
        out.append(SourceSnippet(f"{key}-{i:04d}", TEMPLATES[key](rng, _Names(rng))))
    return out


# ---------------------------------------------------------------------------
# misuse corpus


@dataclass(frozen=True)
class MisuseCase:
    snippet: SourceSnippet
    api: str
    misuse: bool


MISUSE_API = "Iterator.next"


def _guarded_next(rng, names):
    t, xs, it, x = names.type(), names.var(), names.var("it"), names.var()
    head = rng.choice([f"    if ({it}.hasNext()) {{", f"    while ({it}.hasNext()) {{"])
    body = [
        f"    Iterator<{t}> {it} = {xs}.iterator();",
        head,
        f"        {t} {x} = {it}.next();",
        f"        {names.method()}({x});",
        "    }",
    ]
    return _method(rng, names, f"List<{t}> {xs}", body)


def _unguarded_next(rng, names, variant: int):
    """Three different ways of calling ``next()`` without checking ``hasNext()``."""
    t, xs, it, x = names.type(), names.var(), names.var("it"), names.var()
    head = f"    Iterator<{t}> {it} = {xs}.iterator();"
    if variant == 0:
        body = [head, f"    {t} {x} = {it}.next();", f"    {names.method()}({x});"]
    elif variant == 1:
        # guards the collection instead of the iterator
        body = [head, f"    if ({xs} != null) {{", f"        {t} {x} = {it}.next();",
                f"        {names.method()}({x});", "    }"]
    else:
        n = names.var("limit")
        body = [head, f"    for (int i = 0; i < {n}; i++) {{", f"        {names.method()}({it}.next());", "    }"]
        return _method(rng, names, f"List<{t}> {xs}, int {n}", body)
    return _method(rng, names, f"List<{t}> {xs}", body)


def misuse_corpus(n_conforming: int = 27, n_deviant: int = 3, seed: int = 0) -> list[MisuseCase]:
    """Usages of ``Iterator.next``: most check ``hasNext()`` first, a few do not."""
    rng = random.Random(seed)
    cases = [MisuseCase(SourceSnippet(f"ok-{i:03d}", _guarded_next(rng, _Names(rng))), MISUSE_API, False)
             for i in range(n_conforming)]
    cases += [MisuseCase(SourceSnippet(f"bad-{i:03d}", _unguarded_next(rng, _Names(rng), i % 3)),
                         MISUSE_API, True)
              for i in range(n_deviant)]
    rng.shuffle(cases)
    return cases


def blobs(k: int, per_cluster: int, dim: int = 8, separation: float = 10.0, sigma: float = 1.0,
          seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian clusters whose centres are pairwise ``>= separation * sigma`` apart."""
    rng = np.random.default_rng(seed)
    centres: list[np.ndarray] = []
    while len(centres) < k:
        c = rng.uniform(-separation * k, separation * k, size=dim)
        if all(np.linalg.norm(c - o) >= separation * sigma for o in centres):
            centres.append(c)
    labels = np.repeat(np.arange(k), per_cluster)
    points = np.vstack([centres[j] + sigma * rng.standard_normal(dim) for j in labels])
    return points, labels
