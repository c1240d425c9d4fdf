"""Parser and evaluator for the SPARQL subset the toolkit needs.

Supported grammar: PREFIX declarations, SELECT over explicit variables,
and a WHERE block of triple patterns (';' and ',' abbreviations, 'a' for
rdf:type), OPTIONAL groups of triple patterns, and FILTER expressions
built from variable-vs-IRI equality, CONTAINS over string literals, '&&',
'||' and parentheses. Anything else raises UnsupportedFeature so callers
know exactly where the boundary is.

Evaluation walks the patterns in written order (a backtracking join over
the store indexes). OPTIONAL is a left join; FILTER keeps a row only when
its expression evaluates to true under SPARQL's error-coercion rules
(an unbound operand is an error, and an erroring row is dropped). Result
rows are sorted by the canonical order of their projected terms, so equal
stores and queries always produce identical tables.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

from .rdfio import RDF_TYPE, format_term
from .store import Iri, Literal, Term, Triple, TripleStore


class SparqlSyntaxError(ValueError):
    def __init__(self, position: tuple[int, int], message: str):
        line, col = position
        super().__init__(f"line {line}:{col}: {message}")
        self.position = position


class UnknownPrefix(ValueError):
    pass


class UnsupportedFeature(ValueError):
    """The query uses SPARQL outside the supported subset."""


# Keywords we recognise but refuse, so the error names the feature.
_UNSUPPORTED_KEYWORDS = {
    "UNION", "GROUP", "ORDER", "LIMIT", "OFFSET", "DISTINCT", "REDUCED",
    "ASK", "CONSTRUCT", "DESCRIBE", "BIND", "VALUES", "GRAPH", "SERVICE",
    "MINUS", "EXISTS", "NOT", "HAVING", "REGEX", "LANG", "STR", "BOUND",
    "SAMETERM", "INSERT", "DELETE", "FROM",
}


class Var(str):
    """A variable name (without the leading '?')."""

    __slots__ = ()


PatternTerm = Union[Var, Iri, Literal]


@dataclass(frozen=True)
class TriplePattern:
    s: PatternTerm
    p: PatternTerm
    o: PatternTerm

    def variables(self) -> set[str]:
        return {t for t in (self.s, self.p, self.o) if isinstance(t, Var)}


@dataclass(frozen=True)
class OptionalGroup:
    patterns: tuple[TriplePattern, ...]

    def variables(self) -> set[str]:
        out: set[str] = set()
        for pattern in self.patterns:
            out |= pattern.variables()
        return out


class Expr:
    pass


@dataclass(frozen=True)
class EqExpr(Expr):
    var: str
    value: Iri


@dataclass(frozen=True)
class ContainsExpr(Expr):
    var: str
    needle: str


@dataclass(frozen=True)
class AndExpr(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class OrExpr(Expr):
    left: Expr
    right: Expr


def expr_variables(expr: Expr) -> set[str]:
    if isinstance(expr, (EqExpr, ContainsExpr)):
        return {expr.var}
    if isinstance(expr, (AndExpr, OrExpr)):
        return expr_variables(expr.left) | expr_variables(expr.right)
    raise TypeError(f"unknown expression {expr!r}")


@dataclass(frozen=True)
class Filter:
    expr: Expr


Pattern = Union[TriplePattern, OptionalGroup, Filter]


@dataclass
class Query:
    prefixes: dict[str, str]
    projection: list[str]
    patterns: list[Pattern]


# --- tokenizer --------------------------------------------------------------

_SPARQL_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<iriref><[^>\s]*>)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<andand>&&)
  | (?P<oror>\|\|)
  | (?P<pname>(?:[A-Za-z_][A-Za-z0-9_\-]*)?:[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?|(?:[A-Za-z_][A-Za-z0-9_\-]*)?:)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>[+-]?[0-9]+(?:\.[0-9]+)?)
  | (?P<punct>[{}().;,=*])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        match = _SPARQL_TOKEN_RE.match(text, pos)
        if not match:
            raise SparqlSyntaxError((line, pos - line_start + 1), f"unexpected character {text[pos]!r}")
        kind = match.lastgroup
        value = match.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = match.end()
    return tokens


_STRING_UNESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r", "'": "'"}


def _unquote(raw: str) -> str:
    body = raw[1:-1]
    if "\\" not in body:
        return body
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(_STRING_UNESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.prefixes: dict[str, str] = {}

    def _peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", "", 1, 1)
            raise SparqlSyntaxError((last.line, last.col), "unexpected end of query")
        self.pos += 1
        return tok

    def _fail(self, tok: _Token, message: str):
        raise SparqlSyntaxError((tok.line, tok.col), message)

    def _check_unsupported(self, tok: _Token):
        if tok.kind == "word" and tok.value.upper() in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(tok.value.upper())

    def _keyword(self, tok: _Token) -> str:
        return tok.value.upper() if tok.kind == "word" else ""

    def parse(self) -> Query:
        while True:
            tok = self._peek()
            if tok is None:
                raise SparqlSyntaxError((1, 1), "empty query")
            if self._keyword(tok) == "PREFIX":
                self._parse_prefix()
            else:
                break
        tok = self._next()
        if self._keyword(tok) != "SELECT":
            self._check_unsupported(tok)
            self._fail(tok, f"expected SELECT, found {tok.value!r}")
        projection = self._parse_projection()
        tok = self._next()
        if self._keyword(tok) != "WHERE":
            self._fail(tok, f"expected WHERE, found {tok.value!r}")
        patterns = self._parse_group()
        trailing = self._peek()
        if trailing is not None:
            self._check_unsupported(trailing)
            self._fail(trailing, f"unexpected trailing {trailing.value!r}")
        query = Query(prefixes=self.prefixes, projection=projection, patterns=patterns)
        _validate(query)
        return query

    def _parse_prefix(self):
        self._next()
        tok = self._next()
        if tok.kind != "pname" or not tok.value.endswith(":"):
            self._fail(tok, "expected a prefix name ending in ':'")
        prefix = tok.value[:-1]
        tok = self._next()
        if tok.kind != "iriref":
            self._fail(tok, "expected a namespace IRI")
        self.prefixes[prefix] = tok.value[1:-1]

    def _parse_projection(self) -> list[str]:
        names: list[str] = []
        while True:
            tok = self._peek()
            if tok is None:
                break
            if tok.kind == "var":
                names.append(tok.value[1:])
                self._next()
                continue
            if tok.kind == "punct" and tok.value == "*":
                raise UnsupportedFeature("SELECT *")
            if tok.kind == "word" and self._keyword(tok) != "WHERE":
                self._check_unsupported(tok)
            break
        if not names:
            tok = self._peek() or _Token("", "", 1, 1)
            self._fail(tok, "SELECT needs at least one variable")
        return names

    def _expand_pname(self, tok: _Token) -> Iri:
        prefix, _, local = tok.value.partition(":")
        if prefix not in self.prefixes:
            raise UnknownPrefix(prefix)
        return Iri(self.prefixes[prefix] + local)

    def _parse_pattern_term(self, position: str) -> PatternTerm:
        tok = self._next()
        if tok.kind == "var":
            return Var(tok.value[1:])
        if tok.kind == "iriref":
            return Iri(tok.value[1:-1])
        if tok.kind == "pname":
            return self._expand_pname(tok)
        if tok.kind == "word" and tok.value == "a" and position == "predicate":
            return Iri(RDF_TYPE)
        if tok.kind == "string" and position == "object":
            return Literal(_unquote(tok.value))
        self._check_unsupported(tok)
        self._fail(tok, f"expected a {position} term, found {tok.value!r}")

    def _parse_group(self) -> list[Pattern]:
        tok = self._next()
        if tok.kind != "punct" or tok.value != "{":
            self._fail(tok, "expected '{'")
        patterns: list[Pattern] = []
        while True:
            tok = self._peek()
            if tok is None:
                self._fail(_Token("", "", 0, 0), "unterminated group")
            if tok.kind == "punct" and tok.value == "}":
                self._next()
                return patterns
            if tok.kind == "punct" and tok.value == "{":
                raise UnsupportedFeature("group graph pattern")
            keyword = self._keyword(tok)
            if keyword == "OPTIONAL":
                self._next()
                inner = self._parse_group()
                triples = []
                for p in inner:
                    if not isinstance(p, TriplePattern):
                        raise UnsupportedFeature("nested OPTIONAL/FILTER inside OPTIONAL")
                    triples.append(p)
                patterns.append(OptionalGroup(tuple(triples)))
                continue
            if keyword == "FILTER":
                self._next()
                patterns.append(Filter(self._parse_filter_expr()))
                continue
            if keyword and keyword not in ("A",) and tok.kind == "word" and tok.value != "a":
                self._check_unsupported(tok)
            patterns.extend(self._parse_triples_block())

    def _parse_triples_block(self) -> list[TriplePattern]:
        """One subject with its ';'/','-abbreviated predicate-object lists."""
        patterns: list[TriplePattern] = []
        subject = self._parse_pattern_term("subject")
        while True:
            predicate = self._parse_pattern_term("predicate")
            while True:
                obj = self._parse_pattern_term("object")
                patterns.append(TriplePattern(subject, predicate, obj))
                tok = self._peek()
                if tok and tok.kind == "punct" and tok.value == ",":
                    self._next()
                    continue
                break
            tok = self._peek()
            if tok and tok.kind == "punct" and tok.value == ";":
                self._next()
                nxt = self._peek()
                # Tolerate a trailing ';' right before '}' or '.'
                if nxt and nxt.kind == "punct" and nxt.value in "}.":
                    break
                continue
            break
        tok = self._peek()
        if tok and tok.kind == "punct" and tok.value == ".":
            self._next()
        return patterns

    def _parse_filter_expr(self) -> Expr:
        tok = self._next()
        if tok.kind != "punct" or tok.value != "(":
            self._fail(tok, "expected '(' after FILTER")
        expr = self._parse_or()
        tok = self._next()
        if tok.kind != "punct" or tok.value != ")":
            self._fail(tok, "expected ')' closing FILTER")
        return expr

    def _parse_or(self) -> Expr:
        left = self._parse_and()
        while True:
            tok = self._peek()
            if tok and tok.kind == "oror":
                self._next()
                left = OrExpr(left, self._parse_and())
            else:
                return left

    def _parse_and(self) -> Expr:
        left = self._parse_primary()
        while True:
            tok = self._peek()
            if tok and tok.kind == "andand":
                self._next()
                left = AndExpr(left, self._parse_primary())
            else:
                return left

    def _parse_primary(self) -> Expr:
        tok = self._next()
        if tok.kind == "punct" and tok.value == "(":
            expr = self._parse_or()
            closing = self._next()
            if closing.kind != "punct" or closing.value != ")":
                self._fail(closing, "expected ')'")
            return expr
        if self._keyword(tok) == "CONTAINS":
            opening = self._next()
            if opening.kind != "punct" or opening.value != "(":
                self._fail(opening, "expected '(' after CONTAINS")
            var_tok = self._next()
            if var_tok.kind != "var":
                self._fail(var_tok, "CONTAINS expects a variable")
            comma = self._next()
            if comma.kind != "punct" or comma.value != ",":
                self._fail(comma, "expected ',' in CONTAINS")
            needle_tok = self._next()
            if needle_tok.kind != "string":
                self._fail(needle_tok, "CONTAINS expects a string constant")
            closing = self._next()
            if closing.kind != "punct" or closing.value != ")":
                self._fail(closing, "expected ')' closing CONTAINS")
            return ContainsExpr(var_tok.value[1:], _unquote(needle_tok.value))
        if tok.kind == "var":
            eq = self._next()
            if eq.kind != "punct" or eq.value != "=":
                if eq.kind == "word":
                    self._check_unsupported(eq)
                self._fail(eq, "only '=' comparisons are supported")
            value_tok = self._next()
            if value_tok.kind == "iriref":
                return EqExpr(tok.value[1:], Iri(value_tok.value[1:-1]))
            if value_tok.kind == "pname":
                return EqExpr(tok.value[1:], self._expand_pname(value_tok))
            self._fail(value_tok, "'=' expects an IRI on the right")
        self._check_unsupported(tok)
        self._fail(tok, f"unexpected {tok.value!r} in FILTER")


def _validate(query: Query) -> None:
    declared: set[str] = set()
    for pattern in query.patterns:
        if isinstance(pattern, (TriplePattern, OptionalGroup)):
            declared |= pattern.variables()
    for name in query.projection:
        if name not in declared:
            raise SparqlSyntaxError((1, 1), f"projected ?{name} never bound in WHERE")
    for pattern in query.patterns:
        if isinstance(pattern, Filter):
            for name in expr_variables(pattern.expr):
                if name not in declared:
                    raise SparqlSyntaxError((1, 1), f"FILTER references undeclared ?{name}")


def parse_query(text: str) -> Query:
    """Parse query text; prefixed names are expanded during parsing."""
    return _Parser(text).parse()


# --- evaluation -------------------------------------------------------------

Row = dict[str, Term]

_ERROR = object()  # SPARQL expression evaluation error marker


def _eval_expr(expr: Expr, row: Row):
    """Three-valued expression evaluation: True, False, or error."""
    if isinstance(expr, EqExpr):
        value = row.get(expr.var)
        if value is None:
            return _ERROR
        return value == expr.value
    if isinstance(expr, ContainsExpr):
        value = row.get(expr.var)
        if value is None or not isinstance(value, Literal):
            return _ERROR
        return expr.needle in value.lexical
    if isinstance(expr, AndExpr):
        left = _eval_expr(expr.left, row)
        right = _eval_expr(expr.right, row)
        if left is False or right is False:
            return False
        if left is _ERROR or right is _ERROR:
            return _ERROR
        return True
    if isinstance(expr, OrExpr):
        left = _eval_expr(expr.left, row)
        right = _eval_expr(expr.right, row)
        if left is True or right is True:
            return True
        if left is _ERROR or right is _ERROR:
            return _ERROR
        return False
    raise TypeError(f"unknown expression {expr!r}")


def _match_pattern(store: TripleStore, pattern: TriplePattern, row: Row) -> Iterable[Row]:
    def resolve(term: PatternTerm) -> Optional[Term]:
        if isinstance(term, Var):
            return row.get(term)
        return term

    s, p, o = resolve(pattern.s), resolve(pattern.p), resolve(pattern.o)
    if s is not None and not isinstance(s, Iri):
        return
    if p is not None and not isinstance(p, Iri):
        return
    # Variables still free after substitution; resolved positions cannot
    # conflict, so only these need binding (and intra-pattern repeats need
    # a consistency check).
    free = [
        (index, term)
        for index, (term, value) in enumerate(
            ((pattern.s, s), (pattern.p, p), (pattern.o, o))
        )
        if isinstance(term, Var) and value is None
    ]
    for spo in store.match_terms(s, p, o):
        extension = dict(row)
        consistent = True
        for index, var in free:
            value = spo[index]
            bound = extension.get(var)
            if bound is None:
                extension[var] = value
            elif bound != value:
                consistent = False
                break
        if consistent:
            yield extension


def _solve_block(store: TripleStore, patterns: Iterable[TriplePattern], rows: list[Row]) -> list[Row]:
    for pattern in patterns:
        rows = [ext for row in rows for ext in _match_pattern(store, pattern, row)]
        if not rows:
            break
    return rows


@dataclass
class ResultTable:
    """Ordered variable bindings; a missing key in a row means unbound."""

    vars: list[str]
    rows: list[Row] = field(default_factory=list)


def _row_sort_key(row: Row, names: list[str]) -> tuple:
    key = []
    for name in names:
        term = row.get(name)
        if term is None:
            key.append((0,))
        else:
            key.append((1,) + term.sort_key())
    return tuple(key)


def evaluate_query(store: TripleStore, query: Query) -> ResultTable:
    """Evaluate patterns in written order over the store snapshot.

    Duplicates are preserved; rows are sorted by the canonical order of
    their projected terms so output is deterministic.
    """
    rows: list[Row] = [{}]
    for pattern in query.patterns:
        if isinstance(pattern, TriplePattern):
            rows = [ext for row in rows for ext in _match_pattern(store, pattern, row)]
        elif isinstance(pattern, OptionalGroup):
            next_rows: list[Row] = []
            for row in rows:
                extensions = _solve_block(store, pattern.patterns, [row])
                next_rows.extend(extensions if extensions else [row])
            rows = next_rows
        elif isinstance(pattern, Filter):
            rows = [row for row in rows if _eval_expr(pattern.expr, row) is True]
        if not rows:
            break
    projected = [
        {name: row[name] for name in query.projection if name in row}
        for row in rows
    ]
    projected.sort(key=lambda row: _row_sort_key(row, query.projection))
    return ResultTable(vars=list(query.projection), rows=projected)


# --- result serialization ---------------------------------------------------

class ResultFormat(Enum):
    JSON = "json"
    TSV = "tsv"


def _json_binding(term: Term) -> dict:
    if isinstance(term, Iri):
        return {"type": "uri", "value": term.value}
    binding: dict = {"type": "literal", "value": term.lexical}
    if term.lang:
        binding["xml:lang"] = term.lang
    elif term.datatype:
        binding["datatype"] = term.datatype
    return binding


def _tsv_cell(term: Optional[Term]) -> str:
    if term is None:
        return ""
    return format_term(term)


def serialize_results(table: ResultTable, fmt: ResultFormat = ResultFormat.JSON) -> bytes:
    """Render a result table to SPARQL-results JSON or TSV bytes."""
    if fmt is ResultFormat.JSON:
        doc = {
            "head": {"vars": list(table.vars)},
            "results": {
                "bindings": [
                    {name: _json_binding(row[name]) for name in table.vars if name in row}
                    for row in table.rows
                ]
            },
        }
        return (json.dumps(doc, indent=2, sort_keys=False) + "\n").encode("utf-8")
    lines = ["\t".join(table.vars)]
    for row in table.rows:
        lines.append("\t".join(_tsv_cell(row.get(name)) for name in table.vars))
    return ("\n".join(lines) + "\n").encode("utf-8")
