"""Command-line interface.

Subcommands: harvest, build, analyze, extract, stats, query, serve, eval,
demo. Exit codes: 0 success, 1 usage error, 2 stage/runtime failure.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from . import __version__
from .extraction import (
    evaluate,
    gazetteer_extract,
    load_conll,
    load_gazetteer,
)
from .harvest import HarvestClient
from .kgbuild import VocabularyMap, load_vocabulary
from .model import normalize_doi
from .pipeline import ConfigError, StageFailure, load_config, run_pipeline
from .rdfio import load_graph, serialize_turtle
from .service import run_query_bytes, serve
from .sparql import (
    ResultFormat,
    SparqlSyntaxError,
    UnknownPrefix,
    UnsupportedFeature,
)
from .store import stats as store_stats

DATA_DIR = Path(__file__).parent / "data"
DEMO_CONFIG = DATA_DIR / "demo_config.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="instrumentkg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", help="run only the harvest stage")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")

    p = sub.add_parser("build", help="run the full pipeline")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--resume", action="store_true", help="reuse cached stages")

    p = sub.add_parser("demo", help="copy the bundled fixtures and run the pipeline on them")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("analyze", help="analyze one tabular dataset file")
    p.add_argument("--tab", required=True, type=Path)
    p.add_argument("--doi", required=True)
    p.add_argument("--aliases", type=Path)

    p = sub.add_parser("extract", help="run the gazetteer extractor over a text file")
    p.add_argument("--text", required=True, type=Path)
    p.add_argument("--gazetteer", type=Path)

    p = sub.add_parser("stats", help="report statistics over a graph file")
    p.add_argument("--store", required=True, type=Path)
    p.add_argument("--vocab", type=Path)
    p.add_argument("--format", choices=("json", "text"), default="text")

    p = sub.add_parser("query", help="evaluate a query over a graph file")
    p.add_argument("--store", required=True, type=Path)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--file", type=Path, help="file containing the query")
    group.add_argument("--query", help="query text")
    p.add_argument("--format", choices=("json", "tsv"), default="json")

    p = sub.add_parser("serve", help="serve a graph over HTTP")
    p.add_argument("--store", required=True, type=Path)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("eval", help="span-level metrics for predictions vs gold")
    p.add_argument("--gold", required=True, type=Path)
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--model", default="", help="model name for the report header")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")

    p = sub.add_parser("export-turtle", help="convert a graph file to Turtle")
    p.add_argument("--store", required=True, type=Path)

    p = sub.add_parser("normalize-doi", help="canonicalize a DOI string")
    p.add_argument("raw")
    return parser


def _cmd_build(args, harvest_only: bool = False) -> int:
    config = load_config(args.config, args.out)
    if harvest_only:
        client = HarvestClient(config.policy)
        records = []
        for key in ("awi", "datacite"):
            records += client.harvest_instruments(config.sources[key])
        config.output_dir.mkdir(parents=True, exist_ok=True)
        out_path = config.output_dir / "harvested.json"
        out_path.write_text(
            json.dumps([r.to_dict() for r in records], indent=2, sort_keys=True) + "\n",
            "utf-8",
        )
        print(f"harvested {len(records)} raw records -> {out_path}")
        return 0
    summary = run_pipeline(config, resume=getattr(args, "resume", False))
    print(f"graph:    {summary.store_path}")
    print(f"registry: {summary.registry_path}")
    print(f"exports:  {summary.export_dir}")
    print(f"manifest: {summary.manifest_path}")
    print(summary.stats.render_text(), end="")
    return 0


def _cmd_demo(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    workdir = out / "inputs"
    if workdir.exists():
        shutil.rmtree(workdir)
    shutil.copytree(DATA_DIR, workdir)
    namespace = argparse.Namespace(
        config=workdir / "demo_config.json", out=out / "build", resume=False
    )
    code = _cmd_build(namespace)
    if code == 0:
        print(f"demo inputs copied to {workdir}")
    return code


def _cmd_analyze(args) -> int:
    from .tabular import analyze_dataset, load_aliases

    aliases = load_aliases(args.aliases) if args.aliases else None
    details = analyze_dataset(normalize_doi(args.doi), args.tab.read_bytes(), aliases)
    print(json.dumps(details.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_extract(args) -> int:
    text = args.text.read_text("utf-8")
    spans = gazetteer_extract(text, load_gazetteer(args.gazetteer))
    print(json.dumps([s.to_dict() for s in spans], indent=2))
    return 0


def _cmd_stats(args) -> int:
    store = load_graph(args.store)
    vocab = load_vocabulary(args.vocab) if args.vocab else VocabularyMap()
    report = store_stats(store, vocab)
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(report.render_text(), end="")
    return 0


def _cmd_query(args) -> int:
    store = load_graph(args.store)
    query_text = args.file.read_text("utf-8") if args.file else args.query
    fmt = ResultFormat.JSON if args.format == "json" else ResultFormat.TSV
    try:
        sys.stdout.buffer.write(run_query_bytes(store, query_text, fmt))
    except UnsupportedFeature as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return 1
    except (SparqlSyntaxError, UnknownPrefix) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _cmd_serve(args) -> int:
    try:
        server = serve(args.store, args.port, args.host)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 2
    host, port = server.server_address[:2]
    print(f"serving {args.store} on http://{host}:{port}/sparql")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def _cmd_eval(args) -> int:
    gold = load_conll(args.gold.read_text("utf-8"))
    pred = load_conll(args.pred.read_text("utf-8"))
    report = evaluate(gold, [list(s.tags) for s in pred.sentences])
    if args.format == "json":
        rendered = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    else:
        rendered = report.render_table(args.model)
    if args.out:
        args.out.write_text(rendered, "utf-8")
        print(f"report written to {args.out}")
    else:
        print(rendered, end="")
    return 0


def _cmd_export_turtle(args) -> int:
    store = load_graph(args.store)
    sys.stdout.buffer.write(serialize_turtle(store))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "harvest":
            return _cmd_build(args, harvest_only=True)
        if args.command == "build":
            return _cmd_build(args)
        if args.command == "demo":
            return _cmd_demo(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "extract":
            return _cmd_extract(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "query":
            return _cmd_query(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "export-turtle":
            return _cmd_export_turtle(args)
        if args.command == "normalize-doi":
            print(normalize_doi(args.raw))
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except StageFailure as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
