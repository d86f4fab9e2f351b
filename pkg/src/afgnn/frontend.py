"""Tolerant statement-level parsing of Java method snippets.

The parser is a recursive-descent statement segmenter rather than a full
Java grammar.  It understands method headers, local declarations,
assignments, calls, the usual control constructs and try/catch/finally,
and falls back to ``Other`` for anything else.  Each statement records the
identifiers it defines and uses, which is all the graph builder needs.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Optional

from .errors import ParseError

__all__ = [
    "ApiCallsite",
    "Kind",
    "SourceSnippet",
    "Statement",
    "StatementTree",
    "Token",
    "all_callsites",
    "find_callsites",
    "parse_snippet",
    "split_api",
    "tokenize",
]

CHAIN = "<chain>"


class Kind(str, Enum):
    METHOD_SIGNATURE = "MethodSignature"
    VAR_DECL = "VarDecl"
    ASSIGN = "Assign"
    EXPR_CALL = "ExprCall"
    IF = "If"
    LOOP = "Loop"
    SWITCH = "Switch"
    TRY_CATCH = "TryCatch"
    RETURN = "Return"
    OTHER = "Other"


STRUCTURAL = frozenset({Kind.METHOD_SIGNATURE, Kind.IF, Kind.LOOP, Kind.SWITCH, Kind.TRY_CATCH})

KEYWORDS = frozenset("""
abstract assert boolean break byte case catch char class const continue default
do double else enum extends final finally float for goto if implements import
instanceof int interface long native new package private protected public
return short static strictfp super switch synchronized this throw throws
transient try void volatile while true false null var
""".split())

PRIMITIVES = frozenset("boolean byte char short int long float double void var".split())
MODIFIERS = frozenset(
    "public protected private static final abstract native synchronized transient "
    "volatile strictfp default sealed non-sealed".split()
)
ASSIGN_OPS = frozenset(["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="])


@dataclass(frozen=True)
class LineRecord:
    number: int
    text: str


@dataclass(frozen=True)
class SourceSnippet:
    id: str
    text: str

    @property
    def lines(self) -> tuple[LineRecord, ...]:
        parts = re.findall(r"[^\n]*\n|[^\n]+$", self.text)
        return tuple(LineRecord(i, t) for i, t in enumerate(parts, start=1))

    def line_text(self, number: int) -> str:
        """Trimmed text of the given 1-based line, capped at 200 characters."""
        lines = self.lines
        if not 1 <= number <= len(lines):
            return ""
        return lines[number - 1].text.strip()[:200]


class Token(NamedTuple):
    kind: str  # ident | number | string | char | op
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\f\r\v]+)
  | (?P<nl>\n)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<string>\"\"\"(?:\\.|[^\\])*?\"\"\"|"(?:\\.|[^"\\\n])*")
  | (?P<char>'(?:\\.|[^'\\\n])+')
  | (?P<number>0[xX][0-9a-fA-F_]+[lL]?|0[bB][01_]+[lL]?
        |(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[fFdDlL]?)
  | (?P<ident>[^\W\d][\w$]*|\$[\w$]*)
  | (?P<op>>>>=|<<=|>>=|\.\.\.|->|::|\+\+|--|&&|\|\||[=!<>+\-*/%&|^]=
        |[-+*/%=<>!~?:&|^.,;(){}\[\]@])
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize(text: str) -> list[Token]:
    """Split Java source into tokens, dropping whitespace and comments."""
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch in "\"'":
                raise ParseError("unterminated literal", line, pos - line_start + 1)
            if text.startswith("/*", pos):
                raise ParseError("unterminated block comment", line, pos - line_start + 1)
            raise ParseError(f"unexpected character {ch!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "nl", "lcomment", "bcomment"):
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    return tokens


def _is_ident(tok: Optional[Token]) -> bool:
    return tok is not None and tok.kind == "ident" and tok.text not in KEYWORDS


@dataclass(frozen=True)
class ApiCallsite:
    line: int
    receiver: str
    method: str
    api: str


@dataclass(eq=False)
class Statement:
    line: int
    kind: Kind
    defs: set[str] = field(default_factory=set)
    uses: set[str] = field(default_factory=set)
    parent: Optional["Statement"] = field(default=None, repr=False)
    children: list["Statement"] = field(default_factory=list, repr=False)
    tokens: list[Token] = field(default_factory=list, repr=False)
    end_line: int = 0
    index: int = 0

    @property
    def is_root(self) -> bool:
        return self.parent is None


@dataclass
class StatementTree:
    snippet: SourceSnippet
    root: Statement
    statements: list[Statement]
    declared_types: dict[str, str] = field(default_factory=dict)

    def line_text(self, number: int) -> str:
        return self.snippet.line_text(number)

    def walk(self) -> Iterator[Statement]:
        return iter(self.statements)


# ---------------------------------------------------------------------------
# def/use extraction


def _skip_angles(tokens: list[Token], i: int) -> int:
    """Return the index just past a balanced ``<...>`` starting at ``i``."""
    depth = 0
    while i < len(tokens):
        t = tokens[i].text
        if t == "<":
            depth += 1
        elif t == ">":
            depth -= 1
            if depth == 0:
                return i + 1
        elif t == ">>=" or t == ">>>=":
            return i  # not a type argument list
        elif t not in (",", ".", "?", "&", "[", "]", "extends", "super", "@") and not (
            tokens[i].kind == "ident"
        ):
            return -1
        i += 1
    return -1


def _parse_type(tokens: list[Token], i: int) -> int:
    """Match a type at ``i``; return the end index or -1."""
    if i >= len(tokens):
        return -1
    tok = tokens[i]
    if tok.kind != "ident" or (tok.text in KEYWORDS and tok.text not in PRIMITIVES):
        return -1
    i += 1
    while i + 1 < len(tokens) and tokens[i].text == "." and tokens[i + 1].kind == "ident":
        i += 2
    if i < len(tokens) and tokens[i].text == "<":
        j = _skip_angles(tokens, i)
        if j < 0:
            return -1
        i = j
        while i + 1 < len(tokens) and tokens[i].text == "." and tokens[i + 1].kind == "ident":
            i += 2
            if i < len(tokens) and tokens[i].text == "<":
                j = _skip_angles(tokens, i)
                if j < 0:
                    return -1
                i = j
    while i + 1 < len(tokens) and tokens[i].text == "[" and tokens[i + 1].text == "]":
        i += 2
    if i < len(tokens) and tokens[i].text == "...":
        i += 1
    return i


def _split_top(tokens: list[Token], sep: str, angles: bool = False) -> list[list[Token]]:
    parts: list[list[Token]] = [[]]
    depth = 0
    for tok in tokens:
        t = tok.text
        if t in "([{" or (angles and t == "<"):
            depth += 1
        elif t in ")]}" or (angles and t == ">"):
            depth -= 1
        if t == sep and depth == 0:
            parts.append([])
        else:
            parts[-1].append(tok)
    return parts


def _matching(tokens: list[Token], i: int) -> int:
    """Index of the bracket closing the one opened at ``i``."""
    pairs = {"(": ")", "[": "]", "{": "}"}
    opener = tokens[i].text
    closer = pairs[opener]
    depth = 0
    for j in range(i, len(tokens)):
        t = tokens[j].text
        if t == opener:
            depth += 1
        elif t == closer:
            depth -= 1
            if depth == 0:
                return j
    return -1


def _lvalue_start(tokens: list[Token], j: int) -> int:
    """Walk back from the token before index ``j`` over a primary expression."""
    k = j - 1
    while k >= 0:
        t = tokens[k].text
        if t == "]":
            depth = 0
            while k >= 0:
                if tokens[k].text == "]":
                    depth += 1
                elif tokens[k].text == "[":
                    depth -= 1
                    if depth == 0:
                        break
                k -= 1
            k -= 1
            continue
        if tokens[k].kind == "ident":
            if k >= 1 and tokens[k - 1].text == ".":
                k -= 2
                continue
            return k
        return k + 1
    return 0


def analyze_expression(tokens: list[Token]) -> tuple[set[str], set[str]]:
    """Return ``(defs, uses)`` for an expression or simple statement."""
    defs: set[str] = set()
    uses: set[str] = set()
    skip: set[int] = set()
    n = len(tokens)

    for i, tok in enumerate(tokens):
        t = tok.text
        if t == "new":
            j = i + 1
            while j < n and (tokens[j].kind == "ident" or tokens[j].text in (".", "@")):
                skip.add(j)
                j += 1
            if j < n and tokens[j].text == "<":
                end = _skip_angles(tokens, j)
                skip.update(range(j, end if end > 0 else j + 1))
        elif t == "instanceof":
            end = _parse_type(tokens, i + 1)
            skip.update(range(i + 1, end if end > 0 else i + 2))
        elif t == "@" and i + 1 < n:
            skip.add(i + 1)
        elif t == "(":
            end = _parse_type(tokens, i + 1)
            if end > 0 and end < n and tokens[end].text == ")" and end + 1 < n:
                head = tokens[i + 1]
                nxt = tokens[end + 1]
                cast_like = head.text in PRIMITIVES or head.text[:1].isupper()
                follows = nxt.kind in ("ident", "number", "string", "char") or nxt.text in (
                    "(", "!", "~", "this", "new",
                )
                if cast_like and follows and (i == 0 or tokens[i - 1].kind != "ident"):
                    skip.update(range(i + 1, end))
        elif t in ASSIGN_OPS:
            start = _lvalue_start(tokens, i)
            if start < i:
                lead = start
                if tokens[lead].text == "this" and lead + 2 < i and tokens[lead + 1].text == ".":
                    lead += 2
                    if lead == i - 1 and _is_ident(tokens[lead]):
                        defs.add(tokens[lead].text)
                        skip.add(lead)
                        continue
                if _is_ident(tokens[lead]):
                    name = tokens[lead].text
                    defs.add(name)
                    if lead == i - 1 and t == "=":
                        skip.add(lead)
        elif t in ("++", "--"):
            for k in (i - 1, i + 1):
                if 0 <= k < n and _is_ident(tokens[k]) and not (k >= 1 and tokens[k - 1].text == "."):
                    if k == i + 1 and k + 1 < n and tokens[k + 1].text == ".":
                        continue
                    defs.add(tokens[k].text)

    for i, tok in enumerate(tokens):
        if i in skip or not _is_ident(tok):
            continue
        if i >= 1 and tokens[i - 1].text in (".", "::"):
            continue
        if i + 1 < n and tokens[i + 1].text == "(":
            continue
        uses.add(tok.text)
    return defs, uses


def _strip_modifiers(tokens: list[Token]) -> list[Token]:
    i = 0
    while i < len(tokens):
        t = tokens[i].text
        if t == "final":
            i += 1
        elif t == "@" and i + 1 < len(tokens):
            i += 2
            while i + 1 < len(tokens) and tokens[i].text == ".":
                i += 2
            if i < len(tokens) and tokens[i].text == "(":
                end = _matching(tokens, i)
                i = end + 1 if end > 0 else len(tokens)
        else:
            break
    return tokens[i:]


def _declaration(tokens: list[Token]) -> Optional[tuple[str, list[list[Token]]]]:
    """Split a local declaration into ``(type text, declarators)`` or None."""
    tokens = _strip_modifiers(tokens)
    end = _parse_type(tokens, 0)
    if end <= 0 or end >= len(tokens) or not _is_ident(tokens[end]):
        return None
    after = tokens[end + 1].text if end + 1 < len(tokens) else ";"
    if after not in ("=", ";", ",", "[", ":"):
        return None
    type_text = "".join(t.text for t in tokens[:end])
    return type_text, _split_top(tokens[end:], ",", angles=False)


def analyze_declaration(tokens: list[Token], types: Optional[dict[str, str]] = None):
    decl = _declaration(tokens)
    if decl is None:
        return None
    type_text, declarators = decl
    defs: set[str] = set()
    uses: set[str] = set()
    for d in declarators:
        if not d:
            continue
        name = d[0].text
        defs.add(name)
        if types is not None:
            types[name] = type_text
        eq = next((k for k, t in enumerate(d) if t.text == "="), None)
        if eq is not None:
            dd, uu = analyze_expression(d[eq + 1:])
            defs |= dd
            uses |= uu
    return defs, uses


def _parameters(tokens: list[Token], types: dict[str, str]) -> set[str]:
    defs: set[str] = set()
    for part in _split_top(tokens, ",", angles=True):
        part = _strip_modifiers(part)
        idents = [k for k, t in enumerate(part) if _is_ident(t)]
        if not idents:
            continue
        k = idents[-1]
        if k == 0 and len(part) == 1:
            # a lone identifier is a type with its name elided
            continue
        name = part[k].text
        defs.add(name)
        types[name] = "".join(t.text for t in part[:k])
    return defs


# ---------------------------------------------------------------------------
# statement segmentation


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0
        self.statements: list[Statement] = []
        self.types: dict[str, str] = {}

    # token helpers -------------------------------------------------------
    def peek(self, offset: int = 0) -> Optional[Token]:
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def at(self, text: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok is not None and tok.text == text

    def take(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else Token("op", "", 1, 1)
            raise ParseError("unexpected end of input (unbalanced braces?)", last.line, last.col)
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok is None or tok.text != text:
            where = tok or (self.toks[-1] if self.toks else Token("op", "", 1, 1))
            found = tok.text if tok else "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", where.line, where.col)
        self.pos += 1
        return tok

    def balanced(self) -> list[Token]:
        """Consume a bracketed group starting at the current token."""
        start = self.pos
        end = _matching(self.toks, start)
        if end < 0:
            tok = self.toks[start]
            raise ParseError("unbalanced brackets", tok.line, tok.col)
        self.pos = end + 1
        return self.toks[start:end + 1]

    def skip_annotations(self) -> None:
        while self.at("@") and not self.at("interface", 1):
            self.take()
            self.take()
            while self.at(".") and _is_ident(self.peek(1)):
                self.pos += 2
            if self.at("("):
                self.balanced()

    # statements ------------------------------------------------------------
    def new(self, kind: Kind, tok: Token, parent: Optional[Statement]) -> Statement:
        stmt = Statement(line=tok.line, kind=kind, parent=parent, index=len(self.statements))
        stmt.end_line = tok.line
        self.statements.append(stmt)
        if parent is not None:
            parent.children.append(stmt)
        return stmt

    def finish(self, stmt: Statement) -> None:
        if self.pos > 0:
            stmt.end_line = max(stmt.end_line, self.toks[self.pos - 1].line)

    def parse_method(self) -> Statement:
        self.skip_annotations()
        head_start = self.pos
        # optional class wrapper
        while True:
            tok = self.peek()
            if tok is None:
                raise ParseError("empty snippet", 1, 1)
            j = self.pos
            while j < len(self.toks) and self.toks[j].text not in ("{", "(", ";", "="):
                j += 1
            if j < len(self.toks) and self.toks[j].text == "{" and any(
                t.text in ("class", "interface", "enum", "record") for t in self.toks[self.pos:j]
            ):
                self.pos = j + 1
                self.skip_annotations()
                continue
            if j < len(self.toks) and self.toks[j].text in (";", "="):
                # field declaration inside a class wrapper
                while self.peek() is not None and not self.at(";"):
                    if self.peek().text in "([{":
                        self.balanced()
                    else:
                        self.take()
                self.take()
                self.skip_annotations()
                continue
            break
        wrapped = self.pos != head_start
        first = self.peek()
        root = self.new(Kind.METHOD_SIGNATURE, first, None)
        header: list[Token] = []
        params: Optional[list[Token]] = None
        while not self.at("{"):
            tok = self.peek()
            if tok is None or tok.text in (";", "}"):
                where = tok or self.toks[-1]
                raise ParseError("expected method body", where.line, where.col)
            if tok.text == "(":
                group = self.balanced()
                header.extend(group)
                if params is None:
                    params = group[1:-1]
            else:
                header.append(self.take())
        if params is None:
            raise ParseError("method header has no parameter list", first.line, first.col)
        root.tokens = header
        root.defs = _parameters(params, self.types)
        self.take()
        self.parse_block_body(root)
        self.finish(root)
        if not wrapped and self.peek() is not None:
            tok = self.peek()
            raise ParseError("unexpected tokens after method body", tok.line, tok.col)
        return root

    def parse_block_body(self, parent: Statement) -> None:
        while True:
            tok = self.peek()
            if tok is None:
                last = self.toks[-1]
                raise ParseError("unbalanced braces: missing '}'", last.line, last.col)
            if tok.text == "}":
                self.take()
                return
            self.parse_statement(parent)

    def parse_body(self, owner: Statement) -> None:
        if self.at("{"):
            self.take()
            self.parse_block_body(owner)
        else:
            self.parse_statement(owner)

    def parse_statement(self, parent: Statement) -> None:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.toks[-1].line, self.toks[-1].col)
        t = tok.text
        if t == ";":
            self.take()
            return
        if t == "...":
            self.take()
            if self.at(";"):
                self.take()
            return
        if t == "{":
            self.take()
            self.parse_block_body(parent)
            return
        if t == "@":
            self.skip_annotations()
            return
        if _is_ident(tok) and self.at(":", 1):
            self.pos += 2
            return
        if t in ("case", "default") and parent.kind == Kind.SWITCH:
            self.take()
            while self.peek() is not None and not (self.at(":") or self.at("->")):
                if self.peek().text in "([{":
                    self.balanced()
                else:
                    self.take()
            self.take()
            return
        handler = {
            "if": self.parse_if,
            "for": self.parse_for,
            "while": self.parse_while,
            "do": self.parse_do,
            "switch": self.parse_switch,
            "try": self.parse_try,
            "synchronized": self.parse_synchronized,
        }.get(t)
        if handler is not None:
            handler(parent)
            return
        if t in (")", "]", "}", "else", "catch", "finally", "=", ",", ".", "->", "::") or (
            tok.kind == "op" and t in ASSIGN_OPS
        ):
            raise ParseError(f"unrecognizable statement head {t!r}", tok.line, tok.col)
        if t in ("class", "interface", "enum") or self._record_ahead(self.pos) or (
            t in MODIFIERS and t != "final" and self._local_class_ahead()
        ):
            stmt = self.new(Kind.OTHER, tok, parent)
            while not self.at("{"):
                stmt.tokens.append(self.take())
            self.balanced()
            self.finish(stmt)
            return
        self.parse_simple(parent)

    def _record_ahead(self, j: int) -> bool:
        # ``record`` is only a keyword in ``record Name(...)``; elsewhere it is a plain identifier
        return (self.at("record", j - self.pos) and _is_ident(self.peek(j - self.pos + 1))
                and self.at("(", j - self.pos + 2))

    def _local_class_ahead(self) -> bool:
        j = self.pos
        while j < len(self.toks) and self.toks[j].text in MODIFIERS:
            j += 1
        return j < len(self.toks) and (self.toks[j].text in ("class", "interface", "enum")
                                       or self._record_ahead(j))

    def header_group(self, stmt: Statement) -> list[Token]:
        if not self.at("("):
            tok = self.peek() or self.toks[-1]
            raise ParseError("expected '('", tok.line, tok.col)
        group = self.balanced()
        stmt.tokens.extend(group)
        return group[1:-1]

    def parse_if(self, parent: Statement) -> None:
        stmt = self.new(Kind.IF, self.take(), parent)
        cond = self.header_group(stmt)
        stmt.defs, stmt.uses = analyze_expression(cond)
        self.parse_body(stmt)
        if self.at("else"):
            self.take()
            self.parse_body(stmt)
        self.finish(stmt)

    def parse_for(self, parent: Statement) -> None:
        stmt = self.new(Kind.LOOP, self.take(), parent)
        inner = self.header_group(stmt)
        sections = _split_top(inner, ";")
        if len(sections) == 1:
            colon = _split_top(inner, ":")
            var_part = colon[0]
            rest = [tok for part in colon[1:] for tok in part]
            decl = analyze_declaration(var_part + [Token("op", ";", 0, 0)], self.types)
            if decl is not None:
                stmt.defs = decl[0]
            _, stmt.uses = analyze_expression(rest)
        else:
            init = sections[0]
            decl = analyze_declaration(init + [Token("op", ";", 0, 0)], self.types) if init else None
            defs, uses = decl if decl is not None else analyze_expression(init)
            for part in sections[1:]:
                d, u = analyze_expression(part)
                defs = defs | d
                uses = uses | u
            stmt.defs, stmt.uses = defs, uses
        self.parse_body(stmt)
        self.finish(stmt)

    def parse_while(self, parent: Statement) -> None:
        stmt = self.new(Kind.LOOP, self.take(), parent)
        cond = self.header_group(stmt)
        stmt.defs, stmt.uses = analyze_expression(cond)
        self.parse_body(stmt)
        self.finish(stmt)

    def parse_do(self, parent: Statement) -> None:
        stmt = self.new(Kind.LOOP, self.take(), parent)
        self.parse_body(stmt)
        self.expect("while")
        cond = self.header_group(stmt)
        stmt.defs, stmt.uses = analyze_expression(cond)
        if self.at(";"):
            self.take()
        self.finish(stmt)

    def parse_switch(self, parent: Statement) -> None:
        stmt = self.new(Kind.SWITCH, self.take(), parent)
        cond = self.header_group(stmt)
        stmt.defs, stmt.uses = analyze_expression(cond)
        self.expect("{")
        self.parse_block_body(stmt)
        self.finish(stmt)

    def parse_try(self, parent: Statement) -> None:
        stmt = self.new(Kind.TRY_CATCH, self.take(), parent)
        if self.at("("):
            resources = self.header_group(stmt)
            for res in _split_top(resources, ";"):
                if not res:
                    continue
                decl = analyze_declaration(res + [Token("op", ";", 0, 0)], self.types)
                d, u = decl if decl is not None else analyze_expression(res)
                stmt.defs |= d
                stmt.uses |= u
        self.expect("{")
        self.parse_block_body(stmt)
        while self.at("catch") or self.at("finally"):
            clause = self.new(Kind.TRY_CATCH, self.take(), stmt)
            if self.toks[self.pos - 1].text == "catch":
                inner = self.header_group(clause)
                idents = [t for t in inner if _is_ident(t)]
                if idents:
                    clause.defs = {idents[-1].text}
            self.expect("{")
            self.parse_block_body(clause)
            self.finish(clause)
        self.finish(stmt)

    def parse_synchronized(self, parent: Statement) -> None:
        stmt = self.new(Kind.OTHER, self.take(), parent)
        cond = self.header_group(stmt)
        stmt.defs, stmt.uses = analyze_expression(cond)
        self.finish(stmt)
        self.expect("{")
        self.parse_block_body(parent)

    def parse_simple(self, parent: Statement) -> None:
        first = self.peek()
        toks: list[Token] = []
        while True:
            tok = self.peek()
            if tok is None:
                raise ParseError("missing ';' at end of statement", first.line, first.col)
            if tok.text == ";":
                self.take()
                break
            if tok.text == "}":
                raise ParseError("missing ';' before '}'", tok.line, tok.col)
            if tok.text in "([{":
                toks.extend(self.balanced())
            else:
                toks.append(self.take())
        head = toks[0].text
        if head == "return":
            kind = Kind.RETURN
            defs, uses = analyze_expression(toks[1:])
        elif head in ("throw", "break", "continue", "assert", "yield"):
            kind = Kind.OTHER
            defs, uses = analyze_expression(toks[1:])
        else:
            decl = analyze_declaration(toks + [Token("op", ";", 0, 0)], self.types)
            if decl is not None:
                kind = Kind.VAR_DECL
                defs, uses = decl
            else:
                defs, uses = analyze_expression(toks)
                top_assign = any(t.text in ASSIGN_OPS and _depth0(toks, t) for t in toks)
                if top_assign or (defs and any(t.text in ("++", "--") for t in toks)):
                    kind = Kind.ASSIGN
                elif any(t.text == "(" for t in toks):
                    kind = Kind.EXPR_CALL
                else:
                    kind = Kind.OTHER
        stmt = self.new(kind, first, parent)
        stmt.tokens = toks
        stmt.defs, stmt.uses = defs, uses
        self.finish(stmt)


def _depth0(tokens: list[Token], target: Token) -> bool:
    depth = 0
    for tok in tokens:
        if tok is target:
            return depth == 0
        if tok.text in "([{":
            depth += 1
        elif tok.text in ")]}":
            depth -= 1
    return False


def parse_snippet(snippet: SourceSnippet) -> StatementTree:
    """Parse one Java method snippet into a statement tree.

    Raises ``ParseError`` (with line/column) on unbalanced braces or on a
    statement whose first token cannot start a statement.
    """
    tokens = tokenize(snippet.text)
    if not tokens:
        raise ParseError("empty snippet", 1, 1)
    _check_balance(tokens)
    parser = _Parser(tokens)
    root = parser.parse_method()
    return StatementTree(snippet, root, parser.statements, parser.types)


def _check_balance(tokens: list[Token]) -> None:
    pairs = {")": "(", "]": "[", "}": "{"}
    stack: list[Token] = []
    for tok in tokens:
        if tok.text in "([{":
            stack.append(tok)
        elif tok.text in pairs:
            if not stack or stack[-1].text != pairs[tok.text]:
                raise ParseError(f"unbalanced {tok.text!r}", tok.line, tok.col)
            stack.pop()
    if stack:
        tok = stack[-1]
        raise ParseError(f"unclosed {tok.text!r}", tok.line, tok.col)


# ---------------------------------------------------------------------------
# callsites


def split_api(api: str) -> tuple[str, str]:
    """Split ``"Type.method"`` (or ``"Type.method()"``) into its two parts."""
    api = api.strip()
    if api.endswith("()"):
        api = api[:-2]
    type_part, _, method = api.rpartition(".")
    if not method:
        raise ValueError(f"API spec {api!r} has no method name")
    return type_part, method


def _receiver(tokens: list[Token], dot: int) -> str:
    k = dot - 1
    if k < 0:
        return CHAIN
    tok = tokens[k]
    if not (tok.kind == "ident" and (tok.text not in KEYWORDS or tok.text in ("this", "super"))):
        return CHAIN
    parts = [tok.text]
    while k >= 2 and tokens[k - 1].text == "." and tokens[k - 2].kind == "ident":
        k -= 2
        parts.append(tokens[k].text)
    if k >= 1 and tokens[k - 1].text == ".":
        return CHAIN
    return ".".join(reversed(parts))


def _statement_callsites(stmt: Statement, types: dict[str, str], type_part: str = ""):
    toks = stmt.tokens
    for i in range(1, len(toks) - 1):
        tok = toks[i]
        if tok.kind != "ident" or toks[i - 1].text != "." or toks[i + 1].text != "(":
            continue
        receiver = _receiver(toks, i - 1)
        owner = type_part or types.get(receiver.split(".")[0], "") or receiver
        if owner != CHAIN:
            owner = re.sub(r"<.*>", "", owner)
        yield ApiCallsite(stmt.line, receiver, tok.text, f"{owner}.{tok.text}")


def all_callsites(tree: StatementTree) -> list[ApiCallsite]:
    """Every ``recv.method(...)`` invocation in the tree, in source order."""
    out: list[ApiCallsite] = []
    for stmt in tree.statements:
        out.extend(_statement_callsites(stmt, tree.declared_types))
    return out


def find_callsites(tree: StatementTree, api: str) -> list[ApiCallsite]:
    """Callsites whose method name matches the method part of ``api``."""
    type_part, method = split_api(api)
    out: list[ApiCallsite] = []
    for stmt in tree.statements:
        for cs in _statement_callsites(stmt, tree.declared_types, type_part):
            if cs.method == method:
                out.append(cs)
    return out


def line_callsites(text: str, method: str) -> list[tuple[str, str]]:
    """``(receiver, method)`` pairs for matching calls within one line of text.

    Used when only serialized node text is available.
    """
    try:
        toks = tokenize(text)
    except ParseError:
        return []
    out = []
    for i in range(1, len(toks) - 1):
        if toks[i].kind == "ident" and toks[i].text == method and toks[i - 1].text == "." and toks[i + 1].text == "(":
            out.append((_receiver(toks, i - 1), method))
    return out
