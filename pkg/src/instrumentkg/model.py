"""Domain records shared by every stage of the pipeline.

Everything here is an immutable value: records can be passed between
threads, used as dict keys (where hashable) and round-tripped through
JSON with the exact snake_case field names declared on each class.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, fields
from datetime import date
from enum import Enum
from typing import Any, Optional


class MalformedDoi(ValueError):
    """Raised when a string cannot be normalized into a canonical DOI."""


# Resolver forms are stripped case-insensitively; "doi.org/" catches
# scheme-less copy/paste variants.
_RESOLVER_PREFIXES = (
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi.org/",
    "doi:",
)

# Canonical form: "10." + at least 4 digits, one slash, no whitespace and
# no further slashes in the suffix.
_DOI_RE = re.compile(r"^10\.\d{4,}/[^\s/]+$")


@dataclass(frozen=True)
class Doi:
    """A canonical DOI such as ``10.1594/pangaea.832320``.

    Construction validates the canonical form; use :func:`normalize_doi`
    to get here from raw user/API input.
    """

    value: str

    def __post_init__(self) -> None:
        if self.value != self.value.lower():
            raise MalformedDoi(f"DOI not lowercase: {self.value!r}")
        if not _DOI_RE.match(self.value):
            raise MalformedDoi(f"not a canonical DOI: {self.value!r}")

    def __str__(self) -> str:
        return self.value


def normalize_doi(raw: str) -> Doi:
    """Canonicalize a raw DOI string.

    Strips resolver prefixes (any case), trims whitespace and lowercases.
    Idempotent: ``normalize_doi(normalize_doi(x).value)`` equals
    ``normalize_doi(x)``.

    Raises MalformedDoi when the result does not look like a DOI.
    """
    if not raw or not raw.strip():
        raise MalformedDoi("empty DOI string")
    value = raw.strip()
    stripped = True
    while stripped:
        stripped = False
        low = value.lower()
        for prefix in _RESOLVER_PREFIXES:
            if low.startswith(prefix):
                value = value[len(prefix):].lstrip()
                stripped = True
                break
    return Doi(value.lower())


class Source(Enum):
    """Provenance of an instrument record."""

    DATACITE = "DataCite"
    AWI = "AWI"
    OTHER = "Other"


class Repository(Enum):
    """Where a dataset record was retrieved from."""

    PANGAEA = "PANGAEA"
    DATACITE = "DataCite"
    OTHER = "Other"


class LinkKind(Enum):
    INSTRUMENT_PRODUCED_DATASET = "InstrumentProducedDataset"
    DATASET_DESCRIBED_BY_ARTICLE = "DatasetDescribedByArticle"
    ARTICLE_CITES_INSTRUMENT_PAPER = "ArticleCitesInstrumentPaper"


class Provenance(Enum):
    METADATA = "Metadata"
    CITATION_EXPANSION = "CitationExpansion"
    FULLTEXT_EXTRACTION = "FulltextExtraction"


class EntityLabel(Enum):
    DATA = "Data"
    METHOD = "Method"
    PROCESS = "Process"
    MATERIAL = "Material"
    LOCATION = "Location"


ENTITY_LABELS = tuple(label.value for label in EntityLabel)


@dataclass(frozen=True)
class InstrumentRecord:
    """An instrument description harmonized to the PIDINST field set.

    ``extras`` is the auxiliary bag: source payload fields that no mapping
    consumed, kept for provenance. String values are stored verbatim,
    anything else JSON-encoded.
    """

    pid: str
    name: str
    source: Source
    description: str = ""
    manufacturer: str = ""
    owner: str = ""
    landing_page: str = ""
    instrument_type: str = ""
    related_article_pids: tuple[str, ...] = ()
    extras: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "pid": self.pid,
            "name": self.name,
            "source": self.source.value,
            "description": self.description,
            "manufacturer": self.manufacturer,
            "owner": self.owner,
            "landing_page": self.landing_page,
            "instrument_type": self.instrument_type,
            "related_article_pids": list(self.related_article_pids),
            "extras": [list(kv) for kv in self.extras],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "InstrumentRecord":
        return cls(
            pid=data["pid"],
            name=data["name"],
            source=Source(data.get("source", "Other")),
            description=data.get("description", ""),
            manufacturer=data.get("manufacturer", ""),
            owner=data.get("owner", ""),
            landing_page=data.get("landing_page", ""),
            instrument_type=data.get("instrument_type", ""),
            related_article_pids=tuple(data.get("related_article_pids", ())),
            extras=tuple((k, v) for k, v in data.get("extras", ())),
        )


@dataclass(frozen=True)
class DatasetRecord:
    doi: Doi
    title: str
    produced_by: tuple[str, ...] = ()
    repository: Repository = Repository.OTHER
    content_uri: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "doi": self.doi.value,
            "title": self.title,
            "produced_by": list(self.produced_by),
            "repository": self.repository.value,
            "content_uri": self.content_uri,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DatasetRecord":
        return cls(
            doi=Doi(data["doi"]),
            title=data.get("title", ""),
            produced_by=tuple(data.get("produced_by", ())),
            repository=Repository(data.get("repository", "Other")),
            content_uri=data.get("content_uri", ""),
        )


@dataclass(frozen=True)
class ArticleRecord:
    doi: Doi
    title: str
    abstract: str = ""
    linked_dataset_dois: tuple[str, ...] = ()
    cites_instrument_paper: bool = False
    fulltext_uri: str = ""
    research_field: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "doi": self.doi.value,
            "title": self.title,
            "abstract": self.abstract,
            "linked_dataset_dois": list(self.linked_dataset_dois),
            "cites_instrument_paper": self.cites_instrument_paper,
            "fulltext_uri": self.fulltext_uri,
            "research_field": self.research_field,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ArticleRecord":
        return cls(
            doi=Doi(data["doi"]),
            title=data.get("title", ""),
            abstract=data.get("abstract", ""),
            linked_dataset_dois=tuple(data.get("linked_dataset_dois", ())),
            cites_instrument_paper=bool(data.get("cites_instrument_paper", False)),
            fulltext_uri=data.get("fulltext_uri", ""),
            research_field=data.get("research_field", ""),
        )


@dataclass(frozen=True)
class LinkEdge:
    """A provenance-carrying edge between two harvested entities."""

    src: str
    dst: str
    kind: LinkKind
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise ValueError(f"self-loop edge on {self.src!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "src": self.src,
            "dst": self.dst,
            "kind": self.kind.value,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LinkEdge":
        return cls(
            src=data["src"],
            dst=data["dst"],
            kind=LinkKind(data["kind"]),
            provenance=Provenance(data["provenance"]),
        )


@dataclass(frozen=True)
class EntitySpan:
    """A labeled character span over article text.

    Offsets count Unicode scalar values (Python string indices), start
    inclusive, end exclusive.
    """

    start: int
    end: int
    label: EntityLabel
    surface: str
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad span bounds [{self.start},{self.end})")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "start": self.start,
            "end": self.end,
            "label": self.label.value,
            "surface": self.surface,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EntitySpan":
        return cls(
            start=int(data["start"]),
            end=int(data["end"]),
            label=EntityLabel(data["label"]),
            surface=data["surface"],
            confidence=float(data.get("confidence", 1.0)),
        )


def validate_spans(text: str, spans: list[EntitySpan]) -> None:
    """Check span invariants against their source text.

    Raises ValueError on out-of-range offsets, a surface that is not the
    text slice, or overlapping spans.
    """
    prev_end = -1
    for span in sorted(spans, key=lambda s: s.start):
        if span.end > len(text):
            raise ValueError(f"span end {span.end} beyond text length {len(text)}")
        if text[span.start:span.end] != span.surface:
            raise ValueError(
                f"surface {span.surface!r} != text slice "
                f"{text[span.start:span.end]!r}"
            )
        if span.start < prev_end:
            raise ValueError(f"overlapping span at {span.start}")
        prev_end = span.end


@dataclass(frozen=True)
class ExperimentDetails:
    """What a dataset (and the article describing it) says an experiment did."""

    dataset_doi: Doi
    parameters: tuple[str, ...] = ()
    temporal_start: Optional[date] = None
    temporal_end: Optional[date] = None
    location: str = ""
    entities: tuple[EntitySpan, ...] = ()

    def __post_init__(self) -> None:
        if self.temporal_start and self.temporal_end:
            if self.temporal_start > self.temporal_end:
                raise ValueError(
                    f"temporal_start {self.temporal_start} after "
                    f"temporal_end {self.temporal_end}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_doi": self.dataset_doi.value,
            "parameters": list(self.parameters),
            "temporal_start": self.temporal_start.isoformat() if self.temporal_start else None,
            "temporal_end": self.temporal_end.isoformat() if self.temporal_end else None,
            "location": self.location,
            "entities": [span.to_dict() for span in self.entities],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentDetails":
        return cls(
            dataset_doi=Doi(data["dataset_doi"]),
            parameters=tuple(data.get("parameters", ())),
            temporal_start=date.fromisoformat(data["temporal_start"]) if data.get("temporal_start") else None,
            temporal_end=date.fromisoformat(data["temporal_end"]) if data.get("temporal_end") else None,
            location=data.get("location", ""),
            entities=tuple(EntitySpan.from_dict(e) for e in data.get("entities", ())),
        )


INSTRUMENT_FIELDS = tuple(f.name for f in fields(InstrumentRecord))


def validate_instrument(rec: InstrumentRecord) -> list[str]:
    """Report missing required PIDINST fields; empty report means valid.

    Required: pid, name, and at least one of owner / source.
    """
    report: list[str] = []
    if not rec.pid:
        report.append("pid missing")
    if not rec.name:
        report.append("name missing")
    if not rec.owner and rec.source is None:
        report.append("owner or source missing")
    return report


def canonical_pid(raw: str) -> str:
    """Canonical identity key for an instrument pid.

    DOI-shaped pids go through DOI normalization; anything else (URNs,
    handles, IRIs) is kept verbatim apart from surrounding whitespace,
    since IRIs are case-sensitive.
    """
    value = raw.strip()
    try:
        return normalize_doi(value).value
    except MalformedDoi:
        return value


def fixture_key(identifier: str) -> str:
    """Filesystem-safe key for an identifier, used to name fixture files.

    Lowercases and replaces every character outside [a-z0-9._-] with "_";
    for a canonical DOI this is exactly "slashes become underscores".
    """
    return re.sub(r"[^a-z0-9._-]", "_", identifier.lower())
