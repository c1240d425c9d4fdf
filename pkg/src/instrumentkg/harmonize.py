"""Map heterogeneous source payloads onto instrument records and assemble
the link graph over instruments, datasets and articles.

Field maps are declarative (JSON path -> record field, first non-empty
match wins per field); whatever the mappings do not consume lands in the
record's extras bag so the source payload stays reconstructible.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .harvest import RawRecord
from .model import (
    ArticleRecord,
    DatasetRecord,
    InstrumentRecord,
    LinkEdge,
    LinkKind,
    MalformedDoi,
    Provenance,
    Source,
    canonical_pid,
    normalize_doi,
    validate_instrument,
)

_MAPPABLE_FIELDS = {
    "pid", "name", "description", "manufacturer", "owner",
    "landing_page", "instrument_type", "related_article_pids",
}

DEFAULT_FIELD_MAP_DIR = Path(__file__).parent / "data"


class HarmonizationFailure(ValueError):
    def __init__(self, missing: list[str]):
        super().__init__(f"required fields missing: {', '.join(missing)}")
        self.missing = missing


class ConflictingNames(UserWarning):
    """Merged duplicate records disagree on the instrument name."""


@dataclass(frozen=True)
class FieldMap:
    source: str
    mappings: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        targets = {target for _, target in self.mappings}
        unknown = targets - _MAPPABLE_FIELDS
        if unknown:
            raise ValueError(f"unmappable target fields: {sorted(unknown)}")
        for required in ("pid", "name"):
            if required not in targets:
                raise ValueError(f"field map for {self.source} must map {required}")


def load_field_map(path: Path) -> FieldMap:
    raw = json.loads(Path(path).read_text("utf-8"))
    return FieldMap(
        source=raw["source"],
        mappings=tuple((str(p), str(f)) for p, f in raw["mappings"]),
    )


def default_field_map(source: str) -> FieldMap:
    return load_field_map(DEFAULT_FIELD_MAP_DIR / f"field_map_{source.lower()}.json")


def resolve_path(payload: Any, path: str) -> Any:
    """Dotted-path lookup; integer segments index lists, '*' maps over one."""
    current = payload
    segments = path.split(".")
    for index, segment in enumerate(segments):
        if current is None:
            return None
        if segment == "*":
            if not isinstance(current, list):
                return None
            rest = ".".join(segments[index + 1:])
            if not rest:
                return current
            values = [resolve_path(item, rest) for item in current]
            return [v for v in values if v is not None]
        if isinstance(current, list):
            try:
                current = current[int(segment)]
            except (ValueError, IndexError):
                return None
        elif isinstance(current, dict):
            current = current.get(segment)
        else:
            return None
    return current


def _bag_value(value: Any) -> str:
    return value if isinstance(value, str) else json.dumps(value, sort_keys=True)


def harmonize(raw: RawRecord, fmap: FieldMap) -> InstrumentRecord:
    """Build a validated InstrumentRecord from one source payload.

    Raises HarmonizationFailure (listing the missing required fields) when
    the mapped record does not validate.
    """
    if raw.source.value != fmap.source:
        raise ValueError(f"record from {raw.source.value} but map is for {fmap.source}")
    payload = raw.payload
    fields: dict[str, Any] = {}
    consumed_top_level: set[str] = set()
    for path, target in fmap.mappings:
        if fields.get(target):
            continue
        value = resolve_path(payload, path)
        if target == "related_article_pids":
            if isinstance(value, str):
                value = [value]
            if not isinstance(value, list):
                continue
            pids = []
            for entry in value:
                try:
                    pids.append(normalize_doi(str(entry)).value)
                except MalformedDoi:
                    warnings.warn(f"dropping malformed related article id {entry!r}")
            if pids:
                fields[target] = tuple(pids)
                if "." not in path and "*" not in path:
                    consumed_top_level.add(path)
            continue
        if not isinstance(value, str) or not value:
            continue
        fields[target] = value
        if "." not in path:
            consumed_top_level.add(path)
    extras = tuple(
        (key, _bag_value(value))
        for key, value in payload.items()
        if key not in consumed_top_level
    )
    pid = canonical_pid(fields.get("pid", ""))
    record = InstrumentRecord(
        pid=pid,
        name=fields.get("name", ""),
        source=Source(fmap.source) if fmap.source in ("DataCite", "AWI") else Source.OTHER,
        description=fields.get("description", ""),
        manufacturer=fields.get("manufacturer", ""),
        owner=fields.get("owner", ""),
        landing_page=fields.get("landing_page", ""),
        instrument_type=fields.get("instrument_type", ""),
        related_article_pids=fields.get("related_article_pids", ()),
        extras=extras,
    )
    report = validate_instrument(record)
    if report:
        raise HarmonizationFailure(report)
    return record


def deduplicate(records: Sequence[InstrumentRecord]) -> list[InstrumentRecord]:
    """Merge records sharing a canonical pid.

    First non-empty value wins per field; extra sources are recorded in
    the extras bag under "also_from"; output keeps first-appearance order.
    Emits a ConflictingNames warning when merged records disagree on name.
    """
    merged: dict[str, InstrumentRecord] = {}
    order: list[str] = []
    for record in records:
        key = record.pid
        if key not in merged:
            merged[key] = record
            order.append(key)
            continue
        kept = merged[key]
        if record.name and kept.name and record.name != kept.name:
            warnings.warn(
                ConflictingNames(
                    f"{key}: keeping name {kept.name!r}, dropping {record.name!r}"
                )
            )
        extras = dict(kept.extras)
        if record.source != kept.source:
            also = {v for k, v in kept.extras if k == "also_from"}
            also.add(record.source.value)
            extras["also_from"] = json.dumps(sorted(also))
        for key2, value in record.extras:
            extras.setdefault(key2, value)
        related = list(kept.related_article_pids)
        related += [p for p in record.related_article_pids if p not in related]
        merged[key] = InstrumentRecord(
            pid=kept.pid,
            name=kept.name or record.name,
            source=kept.source,
            description=kept.description or record.description,
            manufacturer=kept.manufacturer or record.manufacturer,
            owner=kept.owner or record.owner,
            landing_page=kept.landing_page or record.landing_page,
            instrument_type=kept.instrument_type or record.instrument_type,
            related_article_pids=tuple(related),
            extras=tuple(extras.items()),
        )
    return [merged[key] for key in order]


def merge_datasets(records: Sequence[DatasetRecord]) -> list[DatasetRecord]:
    """Merge dataset records by canonical DOI, unioning produced_by."""
    merged: dict[str, DatasetRecord] = {}
    order: list[str] = []
    for record in records:
        key = record.doi.value
        if key not in merged:
            merged[key] = record
            order.append(key)
            continue
        kept = merged[key]
        produced = list(kept.produced_by)
        produced += [p for p in record.produced_by if p not in produced]
        merged[key] = DatasetRecord(
            doi=kept.doi,
            title=kept.title or record.title,
            produced_by=tuple(produced),
            repository=kept.repository,
            content_uri=kept.content_uri or record.content_uri,
        )
    return [merged[key] for key in order]


def merge_articles(records: Sequence[ArticleRecord]) -> list[ArticleRecord]:
    """Merge article records by canonical DOI, unioning dataset links and
    keeping the citation flag sticky."""
    merged: dict[str, ArticleRecord] = {}
    order: list[str] = []
    for record in records:
        key = record.doi.value
        if key not in merged:
            merged[key] = record
            order.append(key)
            continue
        kept = merged[key]
        linked = list(kept.linked_dataset_dois)
        linked += [d for d in record.linked_dataset_dois if d not in linked]
        merged[key] = ArticleRecord(
            doi=kept.doi,
            title=kept.title or record.title,
            abstract=kept.abstract or record.abstract,
            linked_dataset_dois=tuple(linked),
            cites_instrument_paper=kept.cites_instrument_paper or record.cites_instrument_paper,
            fulltext_uri=kept.fulltext_uri or record.fulltext_uri,
            research_field=kept.research_field or record.research_field,
        )
    return [merged[key] for key in order]


@dataclass
class LinkGraph:
    instruments: dict[str, InstrumentRecord]
    datasets: dict[str, DatasetRecord]
    articles: dict[str, ArticleRecord]
    edges: list[LinkEdge] = field(default_factory=list)
    dangling: list[str] = field(default_factory=list)

    def check_integrity(self) -> list[str]:
        """Full-scan referential integrity check; empty list means clean."""
        known = set(self.instruments) | set(self.datasets) | set(self.articles)
        problems = [
            f"edge endpoint unknown: {endpoint}"
            for edge in self.edges
            for endpoint in (edge.src, edge.dst)
            if endpoint not in known
        ]
        seen = set()
        for edge in self.edges:
            key = (edge.src, edge.dst, edge.kind)
            if key in seen:
                problems.append(f"duplicate edge {key}")
            seen.add(key)
        return problems


def build_link_graph(
    instruments: Sequence[InstrumentRecord],
    datasets: Sequence[DatasetRecord],
    articles: Sequence[ArticleRecord],
    extra_edges: Iterable[LinkEdge] = (),
) -> LinkGraph:
    """Derive the deduplicated edge list from record cross-references.

    Dangling references (a dataset naming an unknown instrument pid, an
    article naming an unknown dataset) are reported and their edges
    dropped, not fatal.
    """
    graph = LinkGraph(
        instruments={r.pid: r for r in instruments},
        datasets={r.doi.value: r for r in datasets},
        articles={r.doi.value: r for r in articles},
    )
    seen: set[tuple] = set()

    def add(src: str, dst: str, kind: LinkKind, provenance: Provenance) -> None:
        if src == dst:
            graph.dangling.append(f"self-loop dropped: {src}")
            return
        key = (src, dst, kind)
        if key in seen:
            return
        seen.add(key)
        graph.edges.append(LinkEdge(src=src, dst=dst, kind=kind, provenance=provenance))

    for dataset in graph.datasets.values():
        for pid in dataset.produced_by:
            if pid not in graph.instruments:
                graph.dangling.append(
                    f"dataset {dataset.doi} names unknown instrument {pid}"
                )
                continue
            add(pid, dataset.doi.value, LinkKind.INSTRUMENT_PRODUCED_DATASET, Provenance.METADATA)
    for article in graph.articles.values():
        for doi in article.linked_dataset_dois:
            if doi not in graph.datasets:
                graph.dangling.append(
                    f"article {article.doi} names unknown dataset {doi}"
                )
                continue
            add(doi, article.doi.value, LinkKind.DATASET_DESCRIBED_BY_ARTICLE, Provenance.METADATA)
    for edge in extra_edges:
        if edge.src not in graph.articles and edge.src not in graph.datasets:
            graph.dangling.append(f"edge from unknown entity {edge.src}")
            continue
        known = set(graph.instruments) | set(graph.datasets) | set(graph.articles)
        if edge.dst not in known:
            graph.dangling.append(f"edge to unknown entity {edge.dst}")
            continue
        add(edge.src, edge.dst, edge.kind, edge.provenance)
    return graph
