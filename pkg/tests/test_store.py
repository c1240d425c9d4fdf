import itertools
import random

import pytest

from graphgen import listing2_store, random_store, scale_records
from instrumentkg.kgbuild import (
    IriRegistry,
    VocabularyMap,
    build_dataset_triples,
    build_instrument_triples,
    build_paper_triples,
)
from instrumentkg.rdfio import serialize_ntriples
from instrumentkg.store import (
    ENTITY_STAT_NAMES,
    Iri,
    Literal,
    Triple,
    TripleStore,
    stats,
)


def t(s, p, o):
    obj = o if isinstance(o, (Iri, Literal)) else Literal(o)
    return Triple(Iri(s), Iri(p), obj)


class TestInsert:
    def test_set_semantics(self):
        store = TripleStore()
        triple = t("http://a", "http://b", "x")
        assert store.insert(triple) is True
        assert store.insert(triple) is False
        assert len(store) == 1

    def test_insert_on_empty(self):
        store = TripleStore()
        store.insert(t("http://a", "http://b", "x"))
        assert len(store) == 1

    def test_order_independent_serialization(self):
        rng = random.Random(7)
        triples = [
            t(f"http://s/{rng.randrange(40)}", f"http://p/{rng.randrange(10)}", f"v{rng.randrange(50)}")
            for _ in range(10_000)
        ]
        forward = TripleStore(triples)
        shuffled = list(triples)
        rng.shuffle(shuffled)
        backward = TripleStore(shuffled)
        assert serialize_ntriples(forward) == serialize_ntriples(backward)


class TestTripleValidation:
    def test_subject_must_be_iri(self):
        with pytest.raises(TypeError):
            Triple(Literal("x"), Iri("http://p"), Literal("y"))

    def test_predicate_must_be_iri(self):
        with pytest.raises(TypeError):
            Triple(Iri("http://s"), Literal("p"), Literal("y"))


def full_scan(store, s=None, p=None, o=None):
    return {
        triple
        for triple in store
        if (s is None or triple.s == s)
        and (p is None or triple.p == p)
        and (o is None or triple.o == o)
    }


class TestMatchPattern:
    def test_produced_by_lookup(self):
        store = listing2_store()
        produced_by = Iri("http://orkg.org/orkg/predicate/P146018")
        results = list(store.match_pattern(p=produced_by))
        assert len(results) == 3
        assert all(triple.p == produced_by for triple in results)

    def test_fully_bound_absent(self):
        store = TripleStore([t("http://a", "http://b", "x")])
        assert list(store.match_pattern(Iri("http://a"), Iri("http://b"), Literal("zzz"))) == []

    def test_index_coherence_against_full_scan(self):
        rng = random.Random(42)
        for _ in range(200):
            store = random_store(rng)
            triples = list(store)
            subjects = [x.s for x in triples] or [Iri("http://g/0")]
            predicates = [x.p for x in triples] or [Iri("http://p/0")]
            objects = [x.o for x in triples] or [Literal("v0")]
            for mask in itertools.product((0, 1), repeat=3):
                s = rng.choice(subjects) if mask[0] else None
                p = rng.choice(predicates) if mask[1] else None
                o = rng.choice(objects) if mask[2] else None
                assert set(store.match_pattern(s, p, o)) == full_scan(store, s, p, o)


class TestStats:
    def test_empty_store_all_zero(self):
        report = stats(TripleStore(), VocabularyMap())
        assert all(v == 0 for v in report.entities.values())
        assert all(v == 0 for v in report.links.values())
        assert report.papers == 0
        assert report.total_statements == 0

    def test_schema_mirrors_reference_names(self):
        report = stats(TripleStore(), VocabularyMap())
        assert tuple(report.entities.keys()) == ENTITY_STAT_NAMES

    def test_scale_fixture_counts_match_recount(self):
        instruments, datasets, articles = scale_records()
        vocab = VocabularyMap()
        registry = IriRegistry()
        store = TripleStore()
        instrument_map = {i.pid: i for i in instruments}
        dataset_map = {d.doi.value: d for d in datasets}
        for instrument in instruments:
            store.add_all(build_instrument_triples(instrument, vocab, registry))
        for dataset in datasets:
            store.add_all(build_dataset_triples(dataset, vocab, registry, instrument_map))
        for article in articles:
            store.add_all(
                build_paper_triples(
                    article, None, vocab, registry,
                    datasets=dataset_map, instruments=instrument_map,
                )
            )
        report = stats(store, vocab)

        # Brute-force recount over the generating records.
        awi = sum(1 for i in instruments if i.source.value == "AWI")
        datacite = sum(1 for i in instruments if i.source.value == "DataCite")
        produced = {d.doi.value for d in datasets if d.produced_by}
        produced_edges = sum(len(set(d.produced_by)) for d in datasets)
        linked_articles = {a.doi.value for a in articles if a.linked_dataset_dois}
        linked_edges = sum(len(set(a.linked_dataset_dois)) for a in articles)
        typed = {i.instrument_type or i.pid for i in instruments}

        assert report.entities["Instruments"] == len(typed)
        assert report.entities["Instruments from AWI"] == awi
        assert report.entities["Instruments from Datacite"] == datacite
        assert report.entities["Datasets produced by Instruments"] == len(produced)
        assert report.entities["Articles linked with datasets"] == len(linked_articles)
        assert report.links["Datasets produced by Instruments"] == produced_edges
        assert report.links["Articles linked with datasets"] == linked_edges
        assert report.papers == len(articles)
        assert report.total_statements == len(store)

    def test_render_text_contains_counts(self):
        instruments, datasets, articles = scale_records(n_datasets=5, n_articles=2)
        vocab = VocabularyMap()
        registry = IriRegistry()
        store = TripleStore()
        for instrument in instruments:
            store.add_all(build_instrument_triples(instrument, vocab, registry))
        report = stats(store, vocab)
        text = report.render_text()
        assert "Instruments" in text
        assert "Total statements" in text
