"""HTTP query endpoint over a loaded graph.

GET/POST /sparql evaluates a query against an immutable store snapshot and
returns SPARQL-results JSON (or TSV when the Accept header asks for
text/tab-separated-values). Parse errors are 400s; queries outside the
supported subset are 400s with an "unsupported:" prefix. GET /healthz
answers "ok".
"""
from __future__ import annotations

import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .rdfio import load_graph
from .sparql import (
    ResultFormat,
    SparqlSyntaxError,
    UnknownPrefix,
    UnsupportedFeature,
    evaluate_query,
    parse_query,
    serialize_results,
)
from .store import TripleStore

JSON_CONTENT_TYPE = "application/sparql-results+json"
TSV_CONTENT_TYPE = "text/tab-separated-values"


def run_query_bytes(store: TripleStore, query_text: str, fmt: ResultFormat) -> bytes:
    """Shared query path so the CLI and the HTTP endpoint return identical
    bytes for identical queries."""
    query = parse_query(query_text)
    table = evaluate_query(store, query)
    return serialize_results(table, fmt)


class _Handler(BaseHTTPRequestHandler):
    store: TripleStore = TripleStore()

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _wanted_format(self) -> tuple[ResultFormat, str]:
        accept = self.headers.get("Accept", "")
        if TSV_CONTENT_TYPE in accept:
            return ResultFormat.TSV, TSV_CONTENT_TYPE
        return ResultFormat.JSON, JSON_CONTENT_TYPE

    def _answer_query(self, query_text: str) -> None:
        fmt, content_type = self._wanted_format()
        try:
            body = run_query_bytes(self.store, query_text, fmt)
        except UnsupportedFeature as exc:
            self._send(400, f"unsupported: {exc}\n".encode(), "text/plain; charset=utf-8")
            return
        except (SparqlSyntaxError, UnknownPrefix) as exc:
            self._send(400, f"{exc}\n".encode(), "text/plain; charset=utf-8")
            return
        self._send(200, body, content_type)

    def do_GET(self) -> None:
        parsed = urllib.parse.urlparse(self.path)
        if parsed.path == "/healthz":
            self._send(200, b"ok", "text/plain; charset=utf-8")
            return
        if parsed.path == "/sparql":
            params = urllib.parse.parse_qs(parsed.query)
            queries = params.get("query")
            if not queries:
                self._send(400, b"missing query parameter\n", "text/plain; charset=utf-8")
                return
            self._answer_query(queries[0])
            return
        self._send(404, b"not found\n", "text/plain; charset=utf-8")

    def do_POST(self) -> None:
        parsed = urllib.parse.urlparse(self.path)
        if parsed.path != "/sparql":
            self._send(404, b"not found\n", "text/plain; charset=utf-8")
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8") if length else ""
        if not body.strip():
            self._send(400, b"empty query body\n", "text/plain; charset=utf-8")
            return
        self._answer_query(body)

    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        pass


def make_server(store: TripleStore, port: int, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Bound, ready-to-serve HTTP server; port 0 picks a free port."""
    handler = type("BoundHandler", (_Handler,), {"store": store})
    return ThreadingHTTPServer((host, port), handler)


def serve(store_path: Path, port: int, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Load a graph file and return a server bound to the port.

    A port already in use raises OSError before anything is served.
    """
    store = load_graph(store_path)
    return make_server(store, port, host)
