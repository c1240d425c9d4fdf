"""In-memory triple store with SPO/POS/OSP indexes and Table-style stats.

No blank nodes and no named graphs: subjects and predicates are IRIs,
objects are IRIs or literals. Insertion has set semantics and the three
indexes are kept coherent with the triple set on every mutation.

Reference scale, for orientation only: the production graph this models
reported 131 instruments (46 DataCite + 85 AWI), 51,952 instrument-produced
datasets and 4,345 dataset-linked articles — numbers that need the live
services and are not reproducible offline.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Optional, Union


class Iri:
    """An absolute IRI term."""

    __slots__ = ("value", "_hash")

    def __init__(self, value: str):
        self.value = value
        self._hash = hash(("iri", value))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Iri) and other.value == self.value

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Iri({self.value!r})"

    def sort_key(self) -> tuple:
        return (0, self.value)


class Literal:
    """A literal term: lexical form plus optional language tag or datatype."""

    __slots__ = ("lexical", "lang", "datatype", "_hash")

    def __init__(self, lexical: str, lang: Optional[str] = None, datatype: Optional[str] = None):
        self.lexical = lexical
        self.lang = lang
        self.datatype = datatype
        self._hash = hash(("lit", lexical, lang, datatype))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Literal)
            and other.lexical == self.lexical
            and other.lang == self.lang
            and other.datatype == self.datatype
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        extra = f", lang={self.lang!r}" if self.lang else ""
        extra += f", datatype={self.datatype!r}" if self.datatype else ""
        return f"Literal({self.lexical!r}{extra})"

    def sort_key(self) -> tuple:
        return (1, self.lexical, self.lang or "", self.datatype or "")


Term = Union[Iri, Literal]


class Triple:
    """One statement. Subject and predicate must be IRIs."""

    __slots__ = ("s", "p", "o", "_hash")

    def __init__(self, s: Iri, p: Iri, o: Term):
        if not isinstance(s, Iri):
            raise TypeError(f"subject must be an IRI, got {s!r}")
        if not isinstance(p, Iri):
            raise TypeError(f"predicate must be an IRI, got {p!r}")
        if not isinstance(o, (Iri, Literal)):
            raise TypeError(f"object must be a term, got {o!r}")
        self.s = s
        self.p = p
        self.o = o
        self._hash = hash((s._hash, p._hash, o._hash))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Triple)
            and other.s == self.s
            and other.p == self.p
            and other.o == self.o
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Triple({self.s!r}, {self.p!r}, {self.o!r})"

    def sort_key(self) -> tuple:
        return (self.s.sort_key(), self.p.sort_key(), self.o.sort_key())


class TripleStore:
    """Set of triples indexed by SPO, POS and OSP orderings."""

    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples: set[Triple] = set()
        self._spo: dict[Iri, dict[Iri, set[Term]]] = {}
        self._pos: dict[Iri, dict[Term, set[Iri]]] = {}
        self._osp: dict[Term, dict[Iri, set[Iri]]] = {}
        for t in triples:
            self.insert(t)

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TripleStore) and other._triples == self._triples

    def insert(self, triple: Triple) -> bool:
        """Add a triple; returns False when it was already present."""
        if triple in self._triples:
            return False
        self._triples.add(triple)
        self._spo.setdefault(triple.s, {}).setdefault(triple.p, set()).add(triple.o)
        self._pos.setdefault(triple.p, {}).setdefault(triple.o, set()).add(triple.s)
        self._osp.setdefault(triple.o, {}).setdefault(triple.s, set()).add(triple.p)
        return True

    def add_all(self, triples: Iterable[Triple]) -> int:
        return sum(1 for t in triples if self.insert(t))

    def _bulk_add(self, triples: Iterable[Triple]) -> None:
        """Set-semantics insert without per-triple novelty reporting.

        Same externally observable state as repeated insert(); used by the
        bulk loaders.
        """
        add = self._triples.add
        spo, pos, osp = self._spo, self._pos, self._osp
        for t in triples:
            add(t)
            s, p, o = t.s, t.p, t.o
            by_p = spo.get(s)
            if by_p is None:
                by_p = spo[s] = {}
            objs = by_p.get(p)
            if objs is None:
                objs = by_p[p] = set()
            objs.add(o)
            by_o = pos.get(p)
            if by_o is None:
                by_o = pos[p] = {}
            subjs = by_o.get(o)
            if subjs is None:
                subjs = by_o[o] = set()
            subjs.add(s)
            by_s = osp.get(o)
            if by_s is None:
                by_s = osp[o] = {}
            preds = by_s.get(s)
            if preds is None:
                preds = by_s[s] = set()
            preds.add(p)

    def match_pattern(
        self,
        s: Optional[Iri] = None,
        p: Optional[Iri] = None,
        o: Optional[Term] = None,
    ) -> Iterator[Triple]:
        """Stream triples matching every bound position.

        Picks the index matching the bound prefix; (None, None, None)
        streams the whole store.
        """
        if s is not None and p is not None and o is not None:
            t = Triple(s, p, o)
            if t in self._triples:
                yield t
        elif s is not None and p is not None:
            for obj in self._spo.get(s, {}).get(p, ()):
                yield Triple(s, p, obj)
        elif s is not None and o is not None:
            for pred in self._osp.get(o, {}).get(s, ()):
                yield Triple(s, pred, o)
        elif p is not None and o is not None:
            for subj in self._pos.get(p, {}).get(o, ()):
                yield Triple(subj, p, o)
        elif s is not None:
            for pred, objs in self._spo.get(s, {}).items():
                for obj in objs:
                    yield Triple(s, pred, obj)
        elif p is not None:
            for obj, subjs in self._pos.get(p, {}).items():
                for subj in subjs:
                    yield Triple(subj, p, obj)
        elif o is not None:
            for subj, preds in self._osp.get(o, {}).items():
                for pred in preds:
                    yield Triple(subj, pred, o)
        else:
            yield from self._triples

    def match_terms(
        self,
        s: Optional[Iri] = None,
        p: Optional[Iri] = None,
        o: Optional[Term] = None,
    ) -> Iterator[tuple[Iri, Iri, Term]]:
        """match() without Triple construction; hot path for the evaluator."""
        if s is not None and p is not None and o is not None:
            if Triple(s, p, o) in self._triples:
                yield (s, p, o)
        elif s is not None and p is not None:
            for obj in self._spo.get(s, {}).get(p, ()):
                yield (s, p, obj)
        elif s is not None and o is not None:
            for pred in self._osp.get(o, {}).get(s, ()):
                yield (s, pred, o)
        elif p is not None and o is not None:
            for subj in self._pos.get(p, {}).get(o, ()):
                yield (subj, p, o)
        elif s is not None:
            for pred, objs in self._spo.get(s, {}).items():
                for obj in objs:
                    yield (s, pred, obj)
        elif p is not None:
            for obj, subjs in self._pos.get(p, {}).items():
                for subj in subjs:
                    yield (subj, p, obj)
        elif o is not None:
            for subj, preds in self._osp.get(o, {}).items():
                for pred in preds:
                    yield (subj, pred, o)
        else:
            for t in self._triples:
                yield (t.s, t.p, t.o)

    def subjects(self, p: Iri, o: Term) -> Iterator[Iri]:
        yield from self._pos.get(p, {}).get(o, ())

    def objects(self, s: Iri, p: Iri) -> Iterator[Term]:
        yield from self._spo.get(s, {}).get(p, ())


@dataclass
class StatsReport:
    """Entity and link counts over a built graph.

    ``entities`` carries exactly the five reference entity names; ``links``
    counts edges instead of distinct endpoints (the two coincide only when
    no entity participates in more than one link).
    """

    entities: dict[str, int]
    links: dict[str, int]
    papers: int
    total_statements: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "entities": dict(self.entities),
            "links": dict(self.links),
            "papers": self.papers,
            "total_statements": self.total_statements,
        }

    def render_text(self) -> str:
        rows = list(self.entities.items())
        rows += [(f"{k} (links)", v) for k, v in self.links.items()]
        rows.append(("Papers", self.papers))
        rows.append(("Total statements", self.total_statements))
        width = max(len(name) for name, _ in rows)
        lines = [f"{name.ljust(width)}  {count}" for name, count in rows]
        return "\n".join(lines) + "\n"


ENTITY_STAT_NAMES = (
    "Instruments",
    "Instruments from Datacite",
    "Instruments from AWI",
    "Datasets produced by Instruments",
    "Articles linked with datasets",
)


def stats(store: TripleStore, vocab) -> StatsReport:
    """Count instruments, datasets, articles and their links in a graph.

    ``vocab`` is a kg-builder VocabularyMap identifying the type, link and
    source predicates. Instruments are subjects typed as the instrument
    class; per-source counts come from source literals; datasets are IRI
    objects of the data predicate; "produced" and "linked" counts are
    reported both as distinct entities and as edges.
    """
    rdf_type = Iri(vocab.predicate("type"))
    instrument_class = Iri(vocab.clazz("Instrument"))
    paper_class = Iri(vocab.clazz("Paper"))
    produced_by = Iri(vocab.predicate("producedBy"))
    source_pred = Iri(vocab.predicate("source"))
    data_preds = [Iri(iri) for iri in vocab.predicate_with_aliases("data")]
    contribution_pred = Iri(vocab.predicate("contribution"))

    instruments = set(store.subjects(rdf_type, instrument_class))
    papers = set(store.subjects(rdf_type, paper_class))

    def count_source(name: str) -> int:
        return sum(1 for _ in store.subjects(source_pred, Literal(name)))

    produced_edges = [t for t in store.match_pattern(p=produced_by)]
    produced_datasets = {t.s for t in produced_edges}

    # Papers -> contributions -> data-predicate IRI objects.
    linked_articles = set()
    data_edges = 0
    dataset_objects: set[Iri] = set()
    for paper in papers:
        for contribution in store.objects(paper, contribution_pred):
            if not isinstance(contribution, Iri):
                continue
            seen_for_contribution: set[Iri] = set()
            for pred in data_preds:
                for obj in store.objects(contribution, pred):
                    if isinstance(obj, Iri):
                        seen_for_contribution.add(obj)
            if seen_for_contribution:
                linked_articles.add(paper)
            data_edges += len(seen_for_contribution)
            dataset_objects.update(seen_for_contribution)

    entities = {
        "Instruments": len(instruments),
        "Instruments from Datacite": count_source("DataCite"),
        "Instruments from AWI": count_source("AWI"),
        "Datasets produced by Instruments": len(produced_datasets),
        "Articles linked with datasets": len(linked_articles),
    }
    links = {
        "Datasets produced by Instruments": len(produced_edges),
        "Articles linked with datasets": data_edges,
    }
    return StatsReport(
        entities=entities,
        links=links,
        papers=len(papers),
        total_statements=len(store),
    )
