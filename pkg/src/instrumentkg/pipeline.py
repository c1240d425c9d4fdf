"""End-to-end pipeline: harvest, harmonize, link, analyze, extract,
classify, build triples, serialize, report.

Each stage caches its output under <output_dir>/cache/ and records a
checksum in MANIFEST.json, so a failed run keeps its completed stages and
--resume picks up where it stopped. Offline runs over the same fixtures
are bit-reproducible: entity iteration is sorted before IRIs are minted.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .extraction import (
    ClassifierConfig,
    ClassifierKind,
    ExtractorConfig,
    ExtractorKind,
    PluginRequestError,
    classify_research_field,
    extract_entities,
    load_taxonomy,
)
from .harmonize import (
    build_link_graph,
    deduplicate,
    default_field_map,
    harmonize,
    load_field_map,
    merge_articles,
    merge_datasets,
    FieldMap,
)
from .harvest import (
    FetchPolicy,
    FulltextUnavailable,
    HarvestClient,
    Mode,
    RawRecord,
    SourceDescriptor,
    SourceName,
)
from .kgbuild import (
    IriRegistry,
    VocabularyMap,
    build_dataset_triples,
    build_instrument_triples,
    build_paper_triples,
    dump_payload,
    export_orkg_payload,
    load_vocabulary,
)
from .model import (
    ArticleRecord,
    DatasetRecord,
    Doi,
    EntitySpan,
    ExperimentDetails,
    InstrumentRecord,
    LinkEdge,
    LinkKind,
    Provenance,
    fixture_key,
)
from .store import StatsReport, TripleStore, stats
from .rdfio import serialize_ntriples
from .tabular import analyze_dataset, load_aliases

STAGES = (
    "harvest",
    "harmonize",
    "link",
    "analyze",
    "extract",
    "classify",
    "triples",
    "stats",
)


class ConfigError(ValueError):
    pass


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    sources: dict[str, SourceDescriptor]
    policy: FetchPolicy
    extractor: ExtractorConfig
    classifier: ClassifierConfig
    taxonomy: list[str]
    field_maps: dict[str, FieldMap]
    aliases: dict[str, str]
    vocabulary: VocabularyMap
    registry_path: Path
    output_dir: Path
    # Per-instrument dataset-source override (pid -> source key), on top
    # of the default AWI->pangaea / DataCite->datacite routing.
    routing_overrides: dict[str, str] = field(default_factory=dict)
    checksum: str = ""


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path).resolve()


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def load_config(config_path: Path, output_dir: Optional[Path] = None) -> PipelineConfig:
    """Load and validate a pipeline config; every input path is resolved
    (relative to the config file) and checked up front."""
    config_path = Path(config_path)
    base = config_path.parent
    raw = json.loads(config_path.read_text("utf-8"))

    sources: dict[str, SourceDescriptor] = {}
    for key, entry in raw.get("sources", {}).items():
        name = SourceName(entry.get("name", key.capitalize() if key != "awi" else "AWI"))
        mode = Mode(entry.get("mode", "offline"))
        fixtures = entry.get("fixtures_dir")
        sources[key] = SourceDescriptor(
            name=name,
            base_url=entry.get("base_url", ""),
            mode=mode,
            fixtures_dir=_require(_resolve(base, fixtures), f"fixtures_dir for {key}")
            if fixtures
            else None,
        )
    for required in ("awi", "datacite", "pangaea", "unpaywall"):
        if required not in sources:
            raise ConfigError(f"config missing source {required!r}")

    policy = FetchPolicy(**raw.get("fetch_policy", {}))

    extractor_raw = dict(raw.get("extractor", {"kind": "gazetteer"}))
    extractor_kind = ExtractorKind(extractor_raw.get("kind", "gazetteer"))
    if extractor_kind is ExtractorKind.GAZETTEER:
        gazetteer = extractor_raw.get("gazetteer_path")
        extractor = ExtractorConfig(
            kind=extractor_kind,
            gazetteer_path=_require(_resolve(base, gazetteer), "gazetteer") if gazetteer else None,
        )
    else:
        extractor = ExtractorConfig(
            kind=extractor_kind,
            command=tuple(extractor_raw.get("command", ())),
            timeout_ms=int(extractor_raw.get("timeout_ms", 30000)),
        )

    classifier_raw = dict(raw.get("classifier", {"kind": "keyword"}))
    classifier_kind = ClassifierKind(classifier_raw.get("kind", "keyword"))
    keywords = classifier_raw.get("keywords_path")
    classifier = ClassifierConfig(
        kind=classifier_kind,
        keywords_path=_require(_resolve(base, keywords), "classifier keywords") if keywords else None,
        command=tuple(classifier_raw.get("command", ())),
        timeout_ms=int(classifier_raw.get("timeout_ms", 30000)),
    )
    taxonomy_path = classifier_raw.get("taxonomy_path")
    taxonomy = load_taxonomy(
        _require(_resolve(base, taxonomy_path), "taxonomy") if taxonomy_path else None
    )

    field_maps: dict[str, FieldMap] = {}
    for source_name, map_path in raw.get("field_maps", {}).items():
        field_maps[source_name] = load_field_map(
            _require(_resolve(base, map_path), f"field map for {source_name}")
        )
    for source_name in ("AWI", "DataCite"):
        field_maps.setdefault(source_name, default_field_map(source_name))

    aliases_path = raw.get("aliases_path")
    aliases = load_aliases(
        _require(_resolve(base, aliases_path), "parameter aliases") if aliases_path else None
    )

    vocabulary_path = raw.get("vocabulary_path")
    vocabulary = (
        load_vocabulary(_require(_resolve(base, vocabulary_path), "vocabulary"))
        if vocabulary_path
        else VocabularyMap()
    )

    out = Path(output_dir) if output_dir else (
        _resolve(base, raw["output_dir"]) if raw.get("output_dir") else None
    )
    if out is None:
        raise ConfigError("output_dir required (config field or --out)")
    registry_raw = raw.get("registry_path")
    registry_path = _resolve(base, registry_raw) if registry_raw else out / "registry.json"

    routing_overrides = dict(raw.get("routing_overrides", {}))
    for pid, source_key in routing_overrides.items():
        if source_key not in sources:
            raise ConfigError(f"routing override for {pid!r} names unknown source {source_key!r}")

    checksum = hashlib.sha256(
        json.dumps(raw, sort_keys=True).encode("utf-8")
    ).hexdigest()
    return PipelineConfig(
        sources=sources,
        policy=policy,
        extractor=extractor,
        classifier=classifier,
        taxonomy=taxonomy,
        field_maps=field_maps,
        aliases=aliases,
        vocabulary=vocabulary,
        registry_path=registry_path,
        output_dir=out,
        routing_overrides=routing_overrides,
        checksum=checksum,
    )


@dataclass
class _State:
    raw: dict[str, list[RawRecord]] = field(default_factory=dict)
    instruments: list[InstrumentRecord] = field(default_factory=list)
    datasets: list[DatasetRecord] = field(default_factory=list)
    articles: list[ArticleRecord] = field(default_factory=list)
    extra_edges: list[LinkEdge] = field(default_factory=list)
    dangling: list[str] = field(default_factory=list)
    details: dict[str, ExperimentDetails] = field(default_factory=dict)
    article_entities: dict[str, list[EntitySpan]] = field(default_factory=dict)
    fields: dict[str, str] = field(default_factory=dict)
    store: TripleStore = field(default_factory=TripleStore)
    stats: Optional[StatsReport] = None


@dataclass
class BuildSummary:
    output_dir: Path
    store_path: Path
    registry_path: Path
    manifest_path: Path
    export_dir: Path
    stats: StatsReport
    completed_stages: list[str]


def _stage_harvest(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    for key in ("awi", "datacite"):
        state.raw[key] = client.harvest_instruments(config.sources[key])
    return {key: [r.to_dict() for r in records] for key, records in state.raw.items()}


def _load_harvest(state: _State, doc: dict) -> None:
    state.raw = {
        key: [RawRecord.from_dict(r) for r in records] for key, records in doc.items()
    }


def _stage_harmonize(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    records = []
    for key, source_name in (("awi", "AWI"), ("datacite", "DataCite")):
        fmap = config.field_maps[source_name]
        for raw in state.raw.get(key, []):
            records.append(harmonize(raw, fmap))
    state.instruments = deduplicate(records)
    return {"instruments": [r.to_dict() for r in state.instruments]}


def _load_harmonize(state: _State, doc: dict) -> None:
    state.instruments = [InstrumentRecord.from_dict(r) for r in doc["instruments"]]


def _stage_link(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    # Routing rule: AWI datasets live on PANGAEA, DataCite datasets on
    # DataCite itself; per-instrument overrides win.
    def route(instrument) -> str:
        override = config.routing_overrides.get(instrument.pid)
        if override:
            return override
        return "pangaea" if instrument.source.value == "AWI" else "datacite"

    datasets: list[DatasetRecord] = []
    by_source: dict[str, list] = {}
    for instrument in state.instruments:
        by_source.setdefault(route(instrument), []).append(instrument)
    for source_key, instruments in sorted(by_source.items()):
        datasets += client.fetch_datasets_for_instruments(
            instruments, config.sources[source_key]
        )
    state.datasets = merge_datasets(datasets)

    articles: list[ArticleRecord] = []
    for dataset in state.datasets:
        articles += client.fetch_articles_for_dataset(dataset, config.sources["datacite"])

    # Citation expansion over papers that describe instruments.
    extra_edges: list[LinkEdge] = []
    instrument_papers: dict[str, ArticleRecord] = {}
    for instrument in state.instruments:
        for pid in instrument.related_article_pids:
            if pid not in instrument_papers:
                instrument_papers[pid] = ArticleRecord(doi=Doi(pid), title=pid)
    for pid, stub in sorted(instrument_papers.items()):
        articles.append(stub)
        for citing in client.fetch_citing_articles(stub, config.sources["datacite"]):
            articles.append(citing)
            extra_edges.append(
                LinkEdge(
                    src=citing.doi.value,
                    dst=pid,
                    kind=LinkKind.ARTICLE_CITES_INSTRUMENT_PAPER,
                    provenance=Provenance.CITATION_EXPANSION,
                )
            )
    state.articles = merge_articles(articles)
    state.extra_edges = extra_edges
    graph = build_link_graph(state.instruments, state.datasets, state.articles, extra_edges)
    state.dangling = graph.dangling
    return {
        "datasets": [r.to_dict() for r in state.datasets],
        "articles": [r.to_dict() for r in state.articles],
        "extra_edges": [e.to_dict() for e in extra_edges],
        "dangling": list(graph.dangling),
    }


def _load_link(state: _State, doc: dict) -> None:
    state.datasets = [DatasetRecord.from_dict(r) for r in doc["datasets"]]
    state.articles = [ArticleRecord.from_dict(r) for r in doc["articles"]]
    state.extra_edges = [LinkEdge.from_dict(e) for e in doc["extra_edges"]]
    state.dangling = list(doc.get("dangling", ()))


def _stage_analyze(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    pangaea = config.sources["pangaea"]
    for dataset in sorted(state.datasets, key=lambda d: d.doi.value):
        if not dataset.content_uri:
            continue
        try:
            content = client.fetch_text(pangaea, dataset.content_uri)
        except FileNotFoundError:
            continue
        state.details[dataset.doi.value] = analyze_dataset(
            dataset.doi, content, config.aliases
        )
    return {"details": {doi: det.to_dict() for doi, det in state.details.items()}}


def _load_analyze(state: _State, doc: dict) -> None:
    state.details = {
        doi: ExperimentDetails.from_dict(det) for doi, det in doc["details"].items()
    }


def _stage_extract(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    unpaywall = config.sources["unpaywall"]
    for article in sorted(state.articles, key=lambda a: a.doi.value):
        try:
            locator = client.resolve_fulltext(article, unpaywall)
        except FulltextUnavailable:
            continue
        text = Path(locator).read_text("utf-8") if unpaywall.mode is Mode.OFFLINE else ""
        if not text:
            continue
        try:
            spans = extract_entities(text, config.extractor)
        except PluginRequestError:
            continue
        state.article_entities[article.doi.value] = spans
        for doi in article.linked_dataset_dois:
            details = state.details.get(doi)
            if details is not None:
                state.details[doi] = ExperimentDetails(
                    dataset_doi=details.dataset_doi,
                    parameters=details.parameters,
                    temporal_start=details.temporal_start,
                    temporal_end=details.temporal_end,
                    location=details.location,
                    entities=tuple(spans),
                )
    return {
        "article_entities": {
            doi: [s.to_dict() for s in spans]
            for doi, spans in state.article_entities.items()
        },
        "details": {doi: det.to_dict() for doi, det in state.details.items()},
    }


def _load_extract(state: _State, doc: dict) -> None:
    state.article_entities = {
        doi: [EntitySpan.from_dict(s) for s in spans]
        for doi, spans in doc["article_entities"].items()
    }
    state.details = {
        doi: ExperimentDetails.from_dict(det) for doi, det in doc["details"].items()
    }


def _eligible(article: ArticleRecord, state: _State) -> bool:
    return bool(article.linked_dataset_dois) or bool(
        state.article_entities.get(article.doi.value)
    )


def _stage_classify(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    for article in sorted(state.articles, key=lambda a: a.doi.value):
        if not _eligible(article, state):
            continue
        if not article.title and not article.abstract:
            continue
        label, _score = classify_research_field(
            article.title, article.abstract, config.taxonomy, config.classifier
        )
        state.fields[article.doi.value] = label
    return {"fields": dict(state.fields)}


def _load_classify(state: _State, doc: dict) -> None:
    state.fields = dict(doc["fields"])


def _stage_triples(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    registry = (
        IriRegistry.load(config.registry_path)
        if config.registry_path.exists()
        else IriRegistry()
    )
    store = TripleStore()
    dataset_map = {d.doi.value: d for d in state.datasets}
    instrument_map = {i.pid: i for i in state.instruments}

    for instrument in sorted(state.instruments, key=lambda i: i.pid):
        store.add_all(build_instrument_triples(instrument, config.vocabulary, registry))

    for dataset in sorted(state.datasets, key=lambda d: d.doi.value):
        store.add_all(
            build_dataset_triples(dataset, config.vocabulary, registry, instrument_map)
        )

    export_dir = config.output_dir / "exports"
    export_dir.mkdir(parents=True, exist_ok=True)
    for article in sorted(state.articles, key=lambda a: a.doi.value):
        if not _eligible(article, state):
            continue
        if state.fields.get(article.doi.value):
            article = ArticleRecord(
                doi=article.doi,
                title=article.title,
                abstract=article.abstract,
                linked_dataset_dois=article.linked_dataset_dois,
                cites_instrument_paper=article.cites_instrument_paper,
                fulltext_uri=article.fulltext_uri,
                research_field=state.fields[article.doi.value],
            )
        details = [
            state.details[doi]
            for doi in article.linked_dataset_dois
            if doi in state.details
        ]
        entities = (
            state.article_entities.get(article.doi.value, [])
            if not any(det.entities for det in details)
            else []
        )
        triples = build_paper_triples(
            article,
            details,
            config.vocabulary,
            registry,
            datasets=dataset_map,
            instruments=instrument_map,
            entities=entities,
        )
        store.add_all(triples)
        payload = export_orkg_payload(triples, config.vocabulary)
        export_path = export_dir / f"{fixture_key(article.doi.value)}.json"
        export_path.write_bytes(dump_payload(payload))

    state.store = store
    store_path = config.output_dir / "graph.nt"
    store_path.write_bytes(serialize_ntriples(store))
    config.registry_path.parent.mkdir(parents=True, exist_ok=True)
    registry.save(config.registry_path)
    return {"triples": len(store)}


def _load_triples(state: _State, doc: dict) -> None:
    pass  # store reloaded from graph.nt by the stats stage when needed


def _stage_stats(config: PipelineConfig, state: _State, client: HarvestClient) -> dict:
    if len(state.store) == 0:
        store_path = config.output_dir / "graph.nt"
        if store_path.exists():
            from .rdfio import load_ntriples

            state.store = load_ntriples(store_path.read_bytes())
    state.stats = stats(state.store, config.vocabulary)
    (config.output_dir / "stats.json").write_text(
        json.dumps(state.stats.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8"
    )
    (config.output_dir / "stats.txt").write_text(state.stats.render_text(), "utf-8")
    return state.stats.to_dict()


def _load_stats(state: _State, doc: dict) -> None:
    state.stats = StatsReport(
        entities=doc["entities"],
        links=doc["links"],
        papers=doc["papers"],
        total_statements=doc["total_statements"],
    )


_STAGE_RUNNERS: dict[str, Callable] = {
    "harvest": _stage_harvest,
    "harmonize": _stage_harmonize,
    "link": _stage_link,
    "analyze": _stage_analyze,
    "extract": _stage_extract,
    "classify": _stage_classify,
    "triples": _stage_triples,
    "stats": _stage_stats,
}

_STAGE_LOADERS: dict[str, Callable] = {
    "harvest": _load_harvest,
    "harmonize": _load_harmonize,
    "link": _load_link,
    "analyze": _load_analyze,
    "extract": _load_extract,
    "classify": _load_classify,
    "triples": _load_triples,
    "stats": _load_stats,
}

# Stages whose outputs land outside the cache; they rerun even on resume.
_ALWAYS_RUN = {"triples", "stats"}


def _checksum_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_pipeline(config: PipelineConfig, resume: bool = False) -> BuildSummary:
    """Run all stages; failures raise StageFailure and keep completed
    stages' caches plus an up-to-date MANIFEST."""
    config.output_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = config.output_dir / "cache"
    cache_dir.mkdir(exist_ok=True)
    manifest_path = config.output_dir / "MANIFEST.json"
    manifest: dict[str, Any] = {"config_checksum": config.checksum, "stages": {}}
    if resume and manifest_path.exists():
        previous = json.loads(manifest_path.read_text("utf-8"))
        if previous.get("config_checksum") == config.checksum:
            manifest = previous
            manifest.setdefault("stages", {})

    client = HarvestClient(config.policy)
    state = _State()
    completed: list[str] = []
    for stage in STAGES:
        cache_file = cache_dir / f"{stage}.json"
        recorded = manifest["stages"].get(stage)
        if (
            resume
            and stage not in _ALWAYS_RUN
            and recorded
            and cache_file.exists()
            and _checksum_bytes(cache_file.read_bytes()) == recorded
        ):
            _STAGE_LOADERS[stage](state, json.loads(cache_file.read_text("utf-8")))
            completed.append(stage)
            continue
        try:
            doc = _STAGE_RUNNERS[stage](config, state, client)
        except Exception as exc:
            manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
            raise StageFailure(stage, exc) from exc
        payload = (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")
        cache_file.write_bytes(payload)
        manifest["stages"][stage] = _checksum_bytes(payload)
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
        completed.append(stage)

    assert state.stats is not None
    return BuildSummary(
        output_dir=config.output_dir,
        store_path=config.output_dir / "graph.nt",
        registry_path=config.registry_path,
        manifest_path=manifest_path,
        export_dir=config.output_dir / "exports",
        stats=state.stats,
        completed_stages=completed,
    )
