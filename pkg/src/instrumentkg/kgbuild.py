"""Mint stable resource IRIs and shape records into contribution triples.

The emitted shape per paper: paper --contribution--> experimentDetails
node --data--> dataset --producedBy--> instrument --devices--> device
resources, with parameters/location/extracted entities attached to the
experimentDetails node and rdfs:label on every resource. The dataset
predicate is emitted under its canonical IRI and an accepted alias so
both published query variants resolve.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .model import ArticleRecord, DatasetRecord, ExperimentDetails, InstrumentRecord
from .rdfio import RDF_TYPE
from .store import Iri, Literal, Triple

RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"
_ORKGP = "http://orkg.org/orkg/predicate/"
_ORKGC = "http://orkg.org/orkg/class/"

DEFAULT_PREDICATES = {
    "type": RDF_TYPE,
    "label": RDFS_LABEL,
    "contribution": _ORKGP + "P31",
    "data": _ORKGP + "P2005",
    "producedBy": _ORKGP + "P146018",
    "location": _ORKGP + "P5049",
    "parameters": _ORKGP + "P15680",
    # No published number exists for the device link; configurable.
    "devices": _ORKGP + "devices",
    "researchField": _ORKGP + "P30",
    "method": _ORKGP + "method",
    "process": _ORKGP + "process",
    "description": _ORKGP + "description",
    "manufacturer": _ORKGP + "manufacturer",
    "owner": _ORKGP + "owner",
    "source": _ORKGP + "source",
    "pid": _ORKGP + "pid",
    "landingPage": _ORKGP + "url",
    "startDate": _ORKGP + "startDate",
    "endDate": _ORKGP + "endDate",
}

DEFAULT_ALIASES = {
    "data": (_ORKGP + "P4017",),
}

DEFAULT_CLASSES = {
    "Paper": _ORKGC + "Paper",
    "Instrument": _ORKGC + "C99025",
}


class MissingVocabulary(KeyError):
    pass


class OrphanTriple(ValueError):
    """A triple not reachable from the paper root of its subgraph."""


def _require_absolute(name: str, iri: str) -> None:
    if "://" not in iri and not iri.startswith("urn:"):
        raise ValueError(f"vocabulary entry {name!r} is not an absolute IRI: {iri!r}")


@dataclass(frozen=True)
class VocabularyMap:
    predicates: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_PREDICATES))
    aliases: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_ALIASES))
    classes: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_CLASSES))

    def __post_init__(self) -> None:
        for name, iri in {**self.predicates, **self.classes}.items():
            _require_absolute(name, iri)
        for name, alias_iris in self.aliases.items():
            for iri in alias_iris:
                _require_absolute(name, iri)

    def predicate(self, name: str) -> str:
        try:
            return self.predicates[name]
        except KeyError:
            raise MissingVocabulary(name) from None

    def predicate_with_aliases(self, name: str) -> tuple[str, ...]:
        return (self.predicate(name),) + tuple(self.aliases.get(name, ()))

    def clazz(self, name: str) -> str:
        try:
            return self.classes[name]
        except KeyError:
            raise MissingVocabulary(name) from None

    def known_predicate_iris(self) -> set[str]:
        out = set(self.predicates.values())
        for alias_iris in self.aliases.values():
            out.update(alias_iris)
        return out

    def semantic_name(self, iri: str) -> Optional[str]:
        for name, value in self.predicates.items():
            if value == iri:
                return name
        for name, alias_iris in self.aliases.items():
            if iri in alias_iris:
                return name
        return None


def load_vocabulary(path: Path) -> VocabularyMap:
    raw = json.loads(Path(path).read_text("utf-8"))
    predicates = dict(DEFAULT_PREDICATES)
    predicates.update(raw.get("predicates", {}))
    aliases = dict(DEFAULT_ALIASES)
    aliases.update({k: tuple(v) for k, v in raw.get("aliases", {}).items()})
    classes = dict(DEFAULT_CLASSES)
    classes.update(raw.get("classes", {}))
    return VocabularyMap(predicates=predicates, aliases=aliases, classes=classes)


class IriRegistry:
    """Injective (kind, key) -> IRI map with counter-based minting.

    Re-minting a seen pair always returns the stored IRI, including across
    process restarts via save()/load().
    """

    def __init__(self, namespace: str = "http://orkg.org/orkg/resource/", counter: int = 1):
        self.namespace = namespace
        self.counter = counter
        self._entries: dict[str, dict[str, str]] = {}

    def mint(self, kind: str, key: str) -> Iri:
        bucket = self._entries.setdefault(kind, {})
        existing = bucket.get(key)
        if existing is not None:
            return Iri(existing)
        iri = f"{self.namespace}R{self.counter}"
        self.counter += 1
        bucket[key] = iri
        return Iri(iri)

    def lookup(self, kind: str, key: str) -> Optional[Iri]:
        value = self._entries.get(kind, {}).get(key)
        return Iri(value) if value else None

    def entries(self) -> dict[str, dict[str, str]]:
        return {kind: dict(bucket) for kind, bucket in self._entries.items()}

    def save(self, path: Path) -> None:
        doc = {
            "namespace": self.namespace,
            "counter": self.counter,
            "entries": self._entries,
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")

    @classmethod
    def load(cls, path: Path) -> "IriRegistry":
        doc = json.loads(Path(path).read_text("utf-8"))
        registry = cls(namespace=doc["namespace"], counter=int(doc["counter"]))
        registry._entries = {
            kind: dict(bucket) for kind, bucket in doc.get("entries", {}).items()
        }
        return registry


def mint_iri(registry: IriRegistry, kind: str, key: str) -> Iri:
    return registry.mint(kind, key)


def type_slug(instrument_type: str) -> str:
    return "type:" + re.sub(r"\s+", " ", instrument_type.strip().lower())


class _Emitter:
    def __init__(self, vocab: VocabularyMap):
        self.vocab = vocab
        self.triples: list[Triple] = []
        self._seen: set[Triple] = set()

    def emit(self, subject: Iri, semantic: str, obj) -> None:
        for pred_iri in self.vocab.predicate_with_aliases(semantic):
            triple = Triple(subject, Iri(pred_iri), obj)
            if triple not in self._seen:
                self._seen.add(triple)
                self.triples.append(triple)

    def emit_type(self, subject: Iri, class_name: str) -> None:
        self.emit(subject, "type", Iri(self.vocab.clazz(class_name)))

    def emit_label(self, subject: Iri, label: str) -> None:
        self.emit(subject, "label", Literal(label))


def _instrument_target(
    record: Optional[InstrumentRecord], pid: str, registry: IriRegistry, emitter: _Emitter
) -> Iri:
    """Resource a dataset's producedBy edge should point at.

    Typed records group under a type-level instrument carrying the device
    links; untyped records are themselves the instrument.
    """
    if record is None:
        target = registry.mint("instrument", pid)
        emitter.emit_label(target, pid)
        return target
    if record.instrument_type:
        group = registry.mint("instrument", type_slug(record.instrument_type))
        emitter.emit_type(group, "Instrument")
        emitter.emit_label(group, record.instrument_type)
        device = registry.mint("device", record.pid)
        emitter.emit(group, "devices", device)
        emitter.emit_label(device, record.name)
        return group
    target = registry.mint("instrument", record.pid)
    emitter.emit_type(target, "Instrument")
    emitter.emit_label(target, record.name)
    return target


def build_instrument_triples(
    instrument: InstrumentRecord,
    vocab: VocabularyMap,
    registry: IriRegistry,
) -> list[Triple]:
    """Describe one instrument record.

    The typed instrument resource (the type-level group for records with an
    instrument_type, the record itself otherwise) gets the class triple;
    PIDINST literals go on the record's own resource.
    """
    emitter = _Emitter(vocab)
    if instrument.instrument_type:
        group = registry.mint("instrument", type_slug(instrument.instrument_type))
        emitter.emit_type(group, "Instrument")
        emitter.emit_label(group, instrument.instrument_type)
        subject = registry.mint("device", instrument.pid)
        emitter.emit(group, "devices", subject)
    else:
        subject = registry.mint("instrument", instrument.pid)
        emitter.emit_type(subject, "Instrument")
    emitter.emit_label(subject, instrument.name)
    emitter.emit(subject, "pid", Literal(instrument.pid))
    emitter.emit(subject, "source", Literal(instrument.source.value))
    if instrument.description:
        emitter.emit(subject, "description", Literal(instrument.description))
    if instrument.manufacturer:
        emitter.emit(subject, "manufacturer", Literal(instrument.manufacturer))
    if instrument.owner:
        emitter.emit(subject, "owner", Literal(instrument.owner))
    if instrument.landing_page:
        emitter.emit(subject, "landingPage", Literal(instrument.landing_page))
    return emitter.triples


def build_dataset_triples(
    dataset: DatasetRecord,
    vocab: VocabularyMap,
    registry: IriRegistry,
    instruments: Optional[Mapping[str, InstrumentRecord]] = None,
) -> list[Triple]:
    """Describe one dataset and its producedBy edges.

    Emitted for every harvested dataset so instrument-produced datasets
    appear in the graph even when no article describes them (most do not).
    """
    instruments = instruments or {}
    emitter = _Emitter(vocab)
    ds_iri = registry.mint("dataset", dataset.doi.value)
    emitter.emit_label(ds_iri, dataset.title or dataset.doi.value)
    for pid in dataset.produced_by:
        target = _instrument_target(instruments.get(pid), pid, registry, emitter)
        emitter.emit(ds_iri, "producedBy", target)
    return emitter.triples


DetailsArg = Union[ExperimentDetails, Sequence[ExperimentDetails], None]

# Which extracted entity labels become contribution description literals.
_ENTITY_SEMANTICS = {"Data": "data", "Method": "method", "Process": "process"}


def build_paper_triples(
    article: ArticleRecord,
    details: DetailsArg,
    vocab: VocabularyMap,
    registry: IriRegistry,
    datasets: Optional[Mapping[str, DatasetRecord]] = None,
    instruments: Optional[Mapping[str, InstrumentRecord]] = None,
    entities: Sequence = (),
) -> list[Triple]:
    """Emit one paper's contribution subgraph.

    ``datasets``/``instruments`` resolve titles and producedBy pids for the
    linked dataset resources; ``entities`` carries article-level extracted
    spans for papers whose datasets were not content-analyzed. Requires at
    least one linked dataset or one extracted entity.
    """
    if details is None:
        details_list: list[ExperimentDetails] = []
    elif isinstance(details, ExperimentDetails):
        details_list = [details]
    else:
        details_list = list(details)
    datasets = datasets or {}
    instruments = instruments or {}

    dataset_dois = list(article.linked_dataset_dois)
    for det in details_list:
        if det.dataset_doi.value not in dataset_dois:
            dataset_dois.append(det.dataset_doi.value)
    has_entities = any(det.entities for det in details_list) or bool(entities)
    if not dataset_dois and not has_entities:
        raise ValueError(f"article {article.doi} has no linked datasets and no entities")

    emitter = _Emitter(vocab)
    paper = registry.mint("paper", article.doi.value)
    emitter.emit_type(paper, "Paper")
    emitter.emit_label(paper, article.title)
    if article.research_field:
        fld = registry.mint("field", article.research_field)
        emitter.emit(paper, "researchField", fld)
        emitter.emit_label(fld, article.research_field)

    contribution = registry.mint("contribution", article.doi.value)
    emitter.emit(paper, "contribution", contribution)
    emitter.emit_label(contribution, "experimentDetails")

    for doi in dataset_dois:
        dataset = datasets.get(doi)
        ds_iri = registry.mint("dataset", doi)
        emitter.emit(contribution, "data", ds_iri)
        emitter.emit_label(ds_iri, dataset.title if dataset and dataset.title else doi)
        for pid in (dataset.produced_by if dataset else ()):
            target = _instrument_target(instruments.get(pid), pid, registry, emitter)
            emitter.emit(ds_iri, "producedBy", target)

    for det in details_list:
        if det.parameters:
            emitter.emit(contribution, "parameters", Literal(", ".join(det.parameters)))
        if det.location:
            loc = registry.mint("location", det.location.strip().lower())
            emitter.emit(contribution, "location", loc)
            emitter.emit_label(loc, det.location)
        if det.temporal_start:
            emitter.emit(contribution, "startDate", Literal(det.temporal_start.isoformat()))
        if det.temporal_end:
            emitter.emit(contribution, "endDate", Literal(det.temporal_end.isoformat()))
        for span in det.entities:
            semantic = _ENTITY_SEMANTICS.get(span.label.value)
            if semantic:
                emitter.emit(contribution, semantic, Literal(span.surface))
    for span in entities:
        semantic = _ENTITY_SEMANTICS.get(span.label.value)
        if semantic:
            emitter.emit(contribution, semantic, Literal(span.surface))
    return emitter.triples


def paper_root(triples: Iterable[Triple], vocab: VocabularyMap) -> Iri:
    """The unique subject typed as Paper within a subgraph."""
    paper_class = Iri(vocab.clazz("Paper"))
    type_iri = Iri(vocab.predicate("type"))
    roots = {t.s for t in triples if t.p == type_iri and t.o == paper_class}
    if len(roots) != 1:
        raise ValueError(f"expected exactly one paper root, found {len(roots)}")
    return roots.pop()


def check_paper_rooted(triples: Sequence[Triple], vocab: VocabularyMap) -> None:
    """Every triple must be reachable from the paper root."""
    root = paper_root(triples, vocab)
    outgoing: dict[Iri, list[Triple]] = {}
    for t in triples:
        outgoing.setdefault(t.s, []).append(t)
    reachable_triples: set[Triple] = set()
    visited: set[Iri] = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if node in visited:
            continue
        visited.add(node)
        for t in outgoing.get(node, ()):
            reachable_triples.add(t)
            if isinstance(t.o, Iri) and t.o not in visited:
                stack.append(t.o)
    for t in triples:
        if t not in reachable_triples:
            raise OrphanTriple(f"unreachable from paper root: {t!r}")


def export_orkg_payload(
    paper_triples: Sequence[Triple], vocab: VocabularyMap
) -> dict:
    """Nested contribution-tree payload for one paper's subgraph.

    Deterministic: keys sorted, list values sorted by rendered form.
    Raises OrphanTriple when the subgraph has triples unreachable from the
    paper root.
    """
    check_paper_rooted(paper_triples, vocab)
    root = paper_root(paper_triples, vocab)
    label_iri = Iri(vocab.predicate("label"))
    contribution_iri = Iri(vocab.predicate("contribution"))
    type_pred = Iri(vocab.predicate("type"))
    research_field_iri = Iri(vocab.predicate("researchField"))

    outgoing: dict[Iri, list[Triple]] = {}
    for t in paper_triples:
        outgoing.setdefault(t.s, []).append(t)

    def label_of(node: Iri) -> str:
        for t in outgoing.get(node, ()):
            if t.p == label_iri and isinstance(t.o, Literal):
                return t.o.lexical
        return node.value

    def statements_of(node: Iri, path: set[Iri]) -> dict:
        grouped: dict[str, list] = {}
        for t in sorted(outgoing.get(node, ()), key=Triple.sort_key):
            if t.p in (label_iri, type_pred):
                continue
            name = vocab.semantic_name(t.p.value) or t.p.value
            if isinstance(t.o, Literal):
                value: object = t.o.lexical
            elif t.o in path:
                value = {"label": label_of(t.o)}
            else:
                nested = statements_of(t.o, path | {t.o})
                value = {"label": label_of(t.o)}
                if nested:
                    value["statements"] = nested
            bucket = grouped.setdefault(name, [])
            if value not in bucket:
                bucket.append(value)
        return grouped

    research_field = ""
    for t in outgoing.get(root, ()):
        if t.p == research_field_iri and isinstance(t.o, Iri):
            research_field = label_of(t.o)
    contributions = []
    for t in sorted(outgoing.get(root, ()), key=Triple.sort_key):
        if t.p == contribution_iri and isinstance(t.o, Iri):
            contributions.append(
                {
                    "name": label_of(t.o),
                    "statements": statements_of(t.o, {root, t.o}),
                }
            )
    return {
        "title": label_of(root),
        "research_field": research_field,
        "contributions": contributions,
    }


def dump_payload(payload: dict) -> bytes:
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
