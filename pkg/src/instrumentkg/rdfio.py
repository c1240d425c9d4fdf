"""N-Triples and Turtle reading/writing for the triple store.

Canonical interchange format is sorted N-Triples: one triple per line,
lines sorted lexicographically, literal escapes limited to \\" \\\\ \\n \\t
plus \\uXXXX for the remaining control characters. Equal stores always
serialize to byte-identical output. Turtle (a pragmatic subset: prefixes,
';'/',' abbreviations, 'a', plain/lang/typed literals, integers) is
accepted on load and emitted behind an explicit call.
"""
from __future__ import annotations

import re
from typing import Optional

from .store import Iri, Literal, Term, Triple, TripleStore

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"

DEFAULT_PREFIXES = {
    "orkgr": "http://orkg.org/orkg/resource/",
    "orkgc": "http://orkg.org/orkg/class/",
    "orkgp": "http://orkg.org/orkg/predicate/",
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
}

XSD_INTEGER = "http://www.w3.org/2001/XMLSchema#integer"


class ParseError(ValueError):
    """Syntax error in serialized RDF; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _escape_literal(text: str) -> str:
    out = []
    for ch in text:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ch == "\x7f":
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def format_term(term: Term) -> str:
    if isinstance(term, Iri):
        return f"<{term.value}>"
    rendered = f'"{_escape_literal(term.lexical)}"'
    if term.lang:
        rendered += f"@{term.lang}"
    elif term.datatype:
        rendered += f"^^<{term.datatype}>"
    return rendered


def format_triple(triple: Triple) -> str:
    return f"{format_term(triple.s)} {format_term(triple.p)} {format_term(triple.o)} ."


def serialize_ntriples(store: TripleStore) -> bytes:
    """Canonical sorted N-Triples; equal stores yield identical bytes."""
    lines = sorted(format_triple(t) for t in store)
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")


_UNESCAPE_RE = re.compile(r'\\(u[0-9A-Fa-f]{4}|U[0-9A-Fa-f]{8}|.)', re.DOTALL)
_SIMPLE_UNESCAPES = {
    '"': '"',
    "\\": "\\",
    "n": "\n",
    "t": "\t",
    "r": "\r",
    "b": "\b",
    "f": "\f",
    "'": "'",
}


def _unescape(raw: str, line: int) -> str:
    def sub(match: re.Match) -> str:
        body = match.group(1)
        if body[0] in "uU":
            return chr(int(body[1:], 16))
        try:
            return _SIMPLE_UNESCAPES[body]
        except KeyError:
            raise ParseError(line, f"bad escape \\{body}") from None

    return _UNESCAPE_RE.sub(sub, raw)


def _scan_iri(text: str, pos: int, line: int) -> tuple[Iri, int]:
    end = text.find(">", pos + 1)
    if end < 0:
        raise ParseError(line, "unterminated IRI")
    raw = text[pos + 1:end]
    if "\\" in raw:
        raw = _unescape(raw, line)
    return Iri(raw), end + 1


def _scan_literal(text: str, pos: int, line: int) -> tuple[Literal, int]:
    i = pos + 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\":
            i += 2
            continue
        if ch == '"':
            break
        i += 1
    else:
        raise ParseError(line, "unterminated literal")
    raw = text[pos + 1:i]
    lexical = _unescape(raw, line) if "\\" in raw else raw
    i += 1
    lang: Optional[str] = None
    datatype: Optional[str] = None
    if i < n and text[i] == "@":
        j = i + 1
        while j < n and (text[j].isalnum() or text[j] == "-"):
            j += 1
        lang = text[i + 1:j]
        if not lang:
            raise ParseError(line, "empty language tag")
        i = j
    elif text.startswith("^^", i):
        i += 2
        if i >= n or text[i] != "<":
            raise ParseError(line, "datatype must be an IRI")
        dt, i = _scan_iri(text, i, line)
        datatype = dt.value
    return Literal(lexical, lang, datatype), i


def _skip_ws(text: str, pos: int) -> int:
    n = len(text)
    while pos < n and text[pos] in " \t":
        pos += 1
    return pos


def parse_ntriples_line(text: str, line_no: int) -> Optional[Triple]:
    """Parse one N-Triples line; None for blank/comment lines."""
    pos = _skip_ws(text, 0)
    if pos >= len(text) or text[pos] == "#":
        return None
    if text[pos] != "<":
        raise ParseError(line_no, f"expected subject IRI, found {text[pos]!r}")
    s, pos = _scan_iri(text, pos, line_no)
    pos = _skip_ws(text, pos)
    if pos >= len(text) or text[pos] != "<":
        raise ParseError(line_no, "expected predicate IRI")
    p, pos = _scan_iri(text, pos, line_no)
    pos = _skip_ws(text, pos)
    if pos >= len(text):
        raise ParseError(line_no, "missing object")
    if text[pos] == "<":
        o, pos = _scan_iri(text, pos, line_no)
    elif text[pos] == '"':
        o, pos = _scan_literal(text, pos, line_no)
    else:
        raise ParseError(line_no, f"expected object term, found {text[pos]!r}")
    pos = _skip_ws(text, pos)
    if pos >= len(text) or text[pos] != ".":
        raise ParseError(line_no, "missing terminal '.'")
    trailing = _skip_ws(text, pos + 1)
    if trailing < len(text) and text[trailing] != "#":
        raise ParseError(line_no, "unexpected content after '.'")
    return Triple(s, p, o)


# Fast path for the overwhelmingly common line shape; anything it cannot
# handle falls back to the character scanner.
_NT_LINE_RE = re.compile(
    r'<([^>]*)> <([^>]*)> '
    r'(?:<([^>]*)>|"((?:[^"\\]|\\.)*)"(?:@([A-Za-z][A-Za-z0-9-]*)|\^\^<([^>]*)>)?)'
    r' \.[ \t]*$'
)


def load_ntriples(data: bytes | str) -> TripleStore:
    """Parse N-Triples into a fresh store; raises ParseError with line number."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    store = TripleStore()
    fast = _NT_LINE_RE.match
    # Interning repeated terms keeps hashing and allocation off the hot
    # path; subjects and predicates repeat heavily in real graphs.
    iris: dict[str, Iri] = {}
    plain_literals: dict[str, Literal] = {}
    triples: list[Triple] = []
    append = triples.append

    def intern_iri(value: str) -> Iri:
        term = iris.get(value)
        if term is None:
            term = iris[value] = Iri(value)
        return term

    for line_no, line in enumerate(text.split("\n"), start=1):
        match = fast(line)
        if match:
            s, p, o_iri, o_lit, lang, datatype = match.groups()
            if "\\" in s:
                s = _unescape(s, line_no)
            if "\\" in p:
                p = _unescape(p, line_no)
            if o_iri is not None:
                obj: Term = intern_iri(_unescape(o_iri, line_no) if "\\" in o_iri else o_iri)
            elif lang is None and datatype is None:
                lexical = _unescape(o_lit, line_no) if "\\" in o_lit else o_lit
                obj = plain_literals.get(lexical)
                if obj is None:
                    obj = plain_literals[lexical] = Literal(lexical)
            else:
                lexical = _unescape(o_lit, line_no) if "\\" in o_lit else o_lit
                obj = Literal(lexical, lang, datatype)
            append(Triple(intern_iri(s), intern_iri(p), obj))
            continue
        triple = parse_ntriples_line(line, line_no)
        if triple is not None:
            append(triple)
    store._bulk_add(triples)
    return store


# --- Turtle subset ---------------------------------------------------------

# Prefix part and local part of a prefixed name; neither may end with '.',
# so "orkgp:P31." leaves the statement terminator alone.
_PNAME_NS = r"(?:[A-Za-z_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?)?:"
_PN_LOCAL = r"[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?"

# Order matters: @prefix must win over language tags, prefixed names over
# the bare PREFIX keyword.
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<iriref><[^>]*>)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<prefix_at>@prefix\b)
  | (?P<langtag>@[A-Za-z][A-Za-z0-9-]*)
  | (?P<dcaret>\^\^)
  | (?P<pname>PNAME_NS(?:PN_LOCAL)?)
  | (?P<prefix_kw>(?i:PREFIX)\b)
  | (?P<keyword_a>\ba\b)
  | (?P<integer>[+-]?[0-9]+)
  | (?P<punct>[;,.\[\]()])
    """.replace("PNAME_NS", _PNAME_NS).replace("PN_LOCAL", _PN_LOCAL),
    re.VERBOSE,
)


def _tokenize_turtle(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    line = 1
    n = len(text)
    while pos < n:
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise ParseError(line, f"unexpected character {text[pos]!r}")
        kind = match.lastgroup
        value = match.group()
        if kind not in ("ws", "comment"):
            tokens.append((kind, value, line))
        line += value.count("\n")
        pos = match.end()
    return tokens


class _TurtleParser:
    def __init__(self, text: str):
        self.tokens = _tokenize_turtle(text)
        self.pos = 0
        self.prefixes: dict[str, str] = {}
        self.store = TripleStore()

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        if tok is None:
            last_line = self.tokens[-1][2] if self.tokens else 1
            raise ParseError(last_line, "unexpected end of input")
        self.pos += 1
        return tok

    def _expect_punct(self, char: str):
        kind, value, line = self._next()
        if kind != "punct" or value != char:
            raise ParseError(line, f"expected {char!r}, found {value!r}")

    def parse(self) -> TripleStore:
        while self._peek() is not None:
            kind, value, line = self._peek()
            if kind in ("prefix_at", "prefix_kw"):
                self._parse_prefix(value)
            else:
                self._parse_statement()
        return self.store

    def _parse_prefix(self, decl: str):
        self._next()
        kind, value, line = self._next()
        if kind != "pname" or not value.endswith(":"):
            raise ParseError(line, "expected prefix name")
        prefix = value[:-1]
        kind, value, line = self._next()
        if kind != "iriref":
            raise ParseError(line, "expected namespace IRI")
        self.prefixes[prefix] = value[1:-1]
        if decl.startswith("@"):
            self._expect_punct(".")
        elif self._peek() and self._peek()[0] == "punct" and self._peek()[1] == ".":
            self._next()

    def _resolve_pname(self, value: str, line: int) -> Iri:
        prefix, _, local = value.partition(":")
        if prefix not in self.prefixes:
            raise ParseError(line, f"unknown prefix {prefix!r}")
        return Iri(self.prefixes[prefix] + local)

    def _parse_term(self, need: str) -> Term:
        kind, value, line = self._next()
        if kind == "iriref":
            raw = value[1:-1]
            return Iri(_unescape(raw, line) if "\\" in raw else raw)
        if kind == "pname":
            return self._resolve_pname(value, line)
        if kind == "keyword_a" and need == "predicate":
            return Iri(RDF_TYPE)
        if need == "object":
            if kind == "string":
                lexical = _unescape(value[1:-1], line)
                peek = self._peek()
                if peek and peek[0] == "langtag":
                    self._next()
                    return Literal(lexical, lang=peek[1][1:])
                if peek and peek[0] == "dcaret":
                    self._next()
                    dt = self._parse_term("predicate")
                    if not isinstance(dt, Iri):
                        raise ParseError(line, "datatype must be an IRI")
                    return Literal(lexical, datatype=dt.value)
                return Literal(lexical)
            if kind == "integer":
                return Literal(value, datatype=XSD_INTEGER)
        raise ParseError(line, f"expected {need}, found {value!r}")

    def _parse_statement(self):
        subject = self._parse_term("subject")
        if not isinstance(subject, Iri):
            raise ParseError(self.tokens[self.pos - 1][2], "subject must be an IRI")
        while True:
            predicate = self._parse_term("predicate")
            if not isinstance(predicate, Iri):
                raise ParseError(self.tokens[self.pos - 1][2], "predicate must be an IRI")
            while True:
                obj = self._parse_term("object")
                self.store.insert(Triple(subject, predicate, obj))
                peek = self._peek()
                if peek and peek[0] == "punct" and peek[1] == ",":
                    self._next()
                    continue
                break
            kind, value, line = self._next()
            if kind != "punct" or value not in ";.":
                raise ParseError(line, f"expected ';' or '.', found {value!r}")
            if value == ".":
                return
            # Tolerate a trailing ';' before '.'
            peek = self._peek()
            if peek and peek[0] == "punct" and peek[1] == ".":
                self._next()
                return


def load_turtle(data: bytes | str) -> TripleStore:
    """Parse the supported Turtle subset into a fresh store."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    return _TurtleParser(text).parse()


def load_graph(path) -> TripleStore:
    """Load a graph file, dispatching on extension (.ttl vs N-Triples)."""
    from pathlib import Path

    p = Path(path)
    raw = p.read_bytes()
    if p.suffix == ".ttl":
        return load_turtle(raw)
    return load_ntriples(raw)


_PN_LOCAL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")


def _compact(iri: str, prefixes: dict[str, str]) -> Optional[str]:
    for prefix, base in prefixes.items():
        if iri.startswith(base):
            local = iri[len(base):]
            if local and _PN_LOCAL_RE.fullmatch(local):
                return f"{prefix}:{local}"
    return None


def serialize_turtle(store: TripleStore, prefixes: Optional[dict[str, str]] = None) -> bytes:
    """Turtle rendering with prefix compaction and ';'/',' grouping."""
    prefixes = dict(prefixes or DEFAULT_PREFIXES)

    def term_text(term: Term, as_predicate: bool = False) -> str:
        if isinstance(term, Iri):
            if as_predicate and term.value == RDF_TYPE:
                return "a"
            compacted = _compact(term.value, prefixes)
            return compacted if compacted else f"<{term.value}>"
        if term.datatype:
            dt = _compact(term.datatype, prefixes) or f"<{term.datatype}>"
            return f'"{_escape_literal(term.lexical)}"^^{dt}'
        return format_term(term)

    by_subject: dict[tuple, list[Triple]] = {}
    for t in store:
        by_subject.setdefault(t.s.sort_key(), []).append(t)

    lines = [f"@prefix {p}: <{iri}> ." for p, iri in sorted(prefixes.items())]
    if lines:
        lines.append("")
    for _, triples in sorted(by_subject.items()):
        triples.sort(key=Triple.sort_key)
        subject_text = term_text(triples[0].s)
        by_pred: dict[tuple, list[Term]] = {}
        pred_order: list[Iri] = []
        for t in triples:
            key = t.p.sort_key()
            if key not in by_pred:
                pred_order.append(t.p)
            by_pred.setdefault(key, []).append(t.o)
        parts = []
        for pred in pred_order:
            objs = ", ".join(term_text(o) for o in by_pred[pred.sort_key()])
            parts.append(f"{term_text(pred, as_predicate=True)} {objs}")
        body = " ;\n    ".join(parts)
        lines.append(f"{subject_text} {body} .")
    return ("\n".join(lines) + "\n").encode("utf-8")
