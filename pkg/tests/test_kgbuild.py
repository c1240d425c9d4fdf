import json
from datetime import date

import pytest

from instrumentkg.kgbuild import (
    IriRegistry,
    MissingVocabulary,
    OrphanTriple,
    VocabularyMap,
    build_dataset_triples,
    build_instrument_triples,
    build_paper_triples,
    check_paper_rooted,
    dump_payload,
    export_orkg_payload,
    mint_iri,
)
from instrumentkg.model import (
    ArticleRecord,
    DatasetRecord,
    Doi,
    EntityLabel,
    EntitySpan,
    ExperimentDetails,
    InstrumentRecord,
    Source,
)
from instrumentkg.store import Iri, Literal, Triple

VOCAB = VocabularyMap()
RDF_TYPE = Iri(VOCAB.predicate("type"))
LABEL = Iri(VOCAB.predicate("label"))
INSTRUMENT_CLASS = Iri(VOCAB.clazz("Instrument"))
PAPER_CLASS = Iri(VOCAB.clazz("Paper"))


def ctd_device(pid="vessel:msm:ctd_rbr", name="CTD RBR"):
    return InstrumentRecord(
        pid=pid,
        name=name,
        source=Source.AWI,
        manufacturer="RBR Ltd.",
        instrument_type="CTD",
    )


def plain_instrument():
    return InstrumentRecord(pid="10.5442/ctd", name="CTD", source=Source.AWI)


class TestMintIri:
    def test_fresh_registry_counts_from_one(self):
        registry = IriRegistry()
        assert mint_iri(registry, "instrument", "10.5442/ctd").value.endswith("/resource/R1")

    def test_stable_within_run(self):
        registry = IriRegistry()
        first = mint_iri(registry, "instrument", "10.5442/ctd")
        second = mint_iri(registry, "instrument", "10.5442/ctd")
        assert first == second
        assert registry.counter == 2

    def test_stable_across_restarts(self, tmp_path):
        registry = IriRegistry()
        minted = mint_iri(registry, "instrument", "10.5442/ctd")
        mint_iri(registry, "dataset", "10.1594/pangaea.1")
        registry.save(tmp_path / "registry.json")
        reloaded = IriRegistry.load(tmp_path / "registry.json")
        assert mint_iri(reloaded, "instrument", "10.5442/ctd") == minted
        assert reloaded.counter == registry.counter

    def test_injective_over_kinds_and_keys(self):
        registry = IriRegistry()
        seen = set()
        for kind in ("instrument", "dataset", "paper"):
            for i in range(50):
                iri = mint_iri(registry, kind, f"key{i}").value
                assert iri not in seen
                seen.add(iri)


class TestInstrumentTriples:
    def test_plain_record_typed(self):
        registry = IriRegistry()
        triples = build_instrument_triples(plain_instrument(), VOCAB, registry)
        subject = registry.lookup("instrument", "10.5442/ctd")
        assert Triple(subject, RDF_TYPE, INSTRUMENT_CLASS) in triples

    def test_label_equals_name_exactly(self):
        registry = IriRegistry()
        triples = build_instrument_triples(plain_instrument(), VOCAB, registry)
        subject = registry.lookup("instrument", "10.5442/ctd")
        assert Triple(subject, LABEL, Literal("CTD")) in triples

    def test_empty_optionals_skip_their_triples(self):
        registry = IriRegistry()
        triples = build_instrument_triples(plain_instrument(), VOCAB, registry)
        predicates = {t.p.value for t in triples}
        assert VOCAB.predicate("description") not in predicates
        assert VOCAB.predicate("manufacturer") not in predicates
        assert VOCAB.predicate("owner") not in predicates
        # pid / name / type / source remain.
        assert VOCAB.predicate("pid") in predicates
        assert VOCAB.predicate("source") in predicates

    def test_typed_record_groups_under_type_instrument(self):
        registry = IriRegistry()
        triples = build_instrument_triples(ctd_device(), VOCAB, registry)
        group = registry.lookup("instrument", "type:ctd")
        device = registry.lookup("device", "vessel:msm:ctd_rbr")
        assert Triple(group, RDF_TYPE, INSTRUMENT_CLASS) in triples
        assert Triple(group, LABEL, Literal("CTD")) in triples
        assert Triple(group, Iri(VOCAB.predicate("devices")), device) in triples
        assert Triple(device, LABEL, Literal("CTD RBR")) in triples

    def test_two_devices_share_one_group(self):
        registry = IriRegistry()
        build_instrument_triples(ctd_device(), VOCAB, registry)
        build_instrument_triples(
            ctd_device(pid="vessel:msm:ctd_seabird", name="CTD_Seabird-SBE-19-0"),
            VOCAB,
            registry,
        )
        assert registry.lookup("instrument", "type:ctd") is not None
        assert len(registry.entries()["device"]) == 2


def ctd_article():
    return ArticleRecord(
        doi=Doi("10.5194/bg-11-1799-2014"),
        title="Environmental forcing of the Campeche cold-water coral province, southern Gulf of Mexico",
        linked_dataset_dois=("10.1594/pangaea.832320",),
        research_field="Oceanography",
    )


def ctd_dataset():
    return DatasetRecord(
        doi=Doi("10.1594/pangaea.832320"),
        title="Physical oceanography from CTS during maria S. Merain",
        produced_by=("vessel:msm:ctd_rbr", "vessel:msm:ctd_seabird"),
    )


def ctd_details(entities=()):
    return ExperimentDetails(
        dataset_doi=Doi("10.1594/pangaea.832320"),
        parameters=("depth water", "salinity"),
        temporal_start=date(2012, 3, 21),
        temporal_end=date(2012, 3, 24),
        location="Yucatan Strait",
        entities=tuple(entities),
    )


def build_ctd_subgraph(registry=None):
    registry = registry or IriRegistry()
    datasets = {d.doi.value: d for d in [ctd_dataset()]}
    instruments = {
        "vessel:msm:ctd_rbr": ctd_device(),
        "vessel:msm:ctd_seabird": ctd_device(
            pid="vessel:msm:ctd_seabird", name="CTD_Seabird-SBE-19-0"
        ),
    }
    triples = build_paper_triples(
        ctd_article(), ctd_details(), VOCAB, registry,
        datasets=datasets, instruments=instruments,
    )
    return triples, registry


class TestPaperTriples:
    def test_listing_shape_present(self):
        triples, registry = build_ctd_subgraph()
        paper = registry.lookup("paper", "10.5194/bg-11-1799-2014")
        contribution = registry.lookup("contribution", "10.5194/bg-11-1799-2014")
        dataset = registry.lookup("dataset", "10.1594/pangaea.832320")
        group = registry.lookup("instrument", "type:ctd")
        triple_set = set(triples)
        assert Triple(paper, Iri(VOCAB.predicate("contribution")), contribution) in triple_set
        assert Triple(contribution, Iri(VOCAB.predicate("data")), dataset) in triple_set
        assert Triple(dataset, Iri(VOCAB.predicate("producedBy")), group) in triple_set
        assert (
            Triple(contribution, Iri(VOCAB.predicate("parameters")), Literal("depth water, salinity"))
            in triple_set
        )
        devices = {
            t.o for t in triple_set
            if t.s == group and t.p == Iri(VOCAB.predicate("devices"))
        }
        labels = {
            t.o.lexical for t in triple_set if t.s in devices and t.p == LABEL
        }
        assert labels == {"CTD RBR", "CTD_Seabird-SBE-19-0"}

    def test_alias_route_also_emitted(self):
        triples, registry = build_ctd_subgraph()
        contribution = registry.lookup("contribution", "10.5194/bg-11-1799-2014")
        dataset = registry.lookup("dataset", "10.1594/pangaea.832320")
        alias = Iri("http://orkg.org/orkg/predicate/P4017")
        assert Triple(contribution, alias, dataset) in triples

    def test_paper_typed_and_labeled(self):
        triples, registry = build_ctd_subgraph()
        paper = registry.lookup("paper", "10.5194/bg-11-1799-2014")
        assert Triple(paper, RDF_TYPE, PAPER_CLASS) in triples
        assert any(t.s == paper and t.p == LABEL for t in triples)

    def test_no_dataset_no_entities_rejected(self):
        bare = ArticleRecord(doi=Doi("10.1000/bare"), title="bare")
        with pytest.raises(ValueError):
            build_paper_triples(bare, None, VOCAB, IriRegistry())

    def test_entities_only_article_allowed(self):
        bare = ArticleRecord(doi=Doi("10.1000/bare"), title="bare")
        span = EntitySpan(start=0, end=4, label=EntityLabel.DATA, surface="data")
        triples = build_paper_triples(bare, None, VOCAB, IriRegistry(), entities=[span])
        assert any(
            t.p == Iri(VOCAB.predicate("data")) and t.o == Literal("data") for t in triples
        )

    def test_shared_dataset_gets_identical_iri(self):
        registry = IriRegistry()
        first, _ = build_ctd_subgraph(registry)
        second_article = ArticleRecord(
            doi=Doi("10.5555/second-paper"),
            title="Second paper about the same dataset",
            linked_dataset_dois=("10.1594/pangaea.832320",),
        )
        second = build_paper_triples(
            second_article, None, VOCAB, registry,
            datasets={ctd_dataset().doi.value: ctd_dataset()},
        )
        # Registry injectivity oracle: mint twice, compare.
        dataset_iris = {
            t.o for t in first + second if t.p == Iri(VOCAB.predicate("data"))
            and isinstance(t.o, Iri)
        }
        assert len(dataset_iris) == 1

    def test_entities_become_contribution_literals(self):
        span = EntitySpan(start=0, end=11, label=EntityLabel.DATA, surface="backscatter")
        process = EntitySpan(
            start=20, end=46, label=EntityLabel.PROCESS, surface="hydroacoustic measurements"
        )
        location = EntitySpan(start=50, end=56, label=EntityLabel.LOCATION, surface="Arctic")
        triples, registry = (
            build_paper_triples(
                ctd_article(), ctd_details([span, process, location]), VOCAB, (r := IriRegistry()),
                datasets={ctd_dataset().doi.value: ctd_dataset()},
            ),
            None,
        )
        literals = {(t.p.value, t.o.lexical) for t in triples if isinstance(t.o, Literal)}
        assert (VOCAB.predicate("data"), "backscatter") in literals
        assert (VOCAB.predicate("process"), "hydroacoustic measurements") in literals
        # Location entities do not become contribution description literals.
        assert not any(lex == "Arctic" for _, lex in literals)

    def test_missing_vocabulary_raises(self):
        vocab = VocabularyMap(predicates={"type": VOCAB.predicate("type")}, aliases={}, classes=dict(VOCAB.classes))
        with pytest.raises(MissingVocabulary):
            build_paper_triples(
                ctd_article(), ctd_details(), vocab, IriRegistry(),
                datasets={ctd_dataset().doi.value: ctd_dataset()},
            )

    def test_vocabulary_closure(self):
        triples, _ = build_ctd_subgraph()
        known = VOCAB.known_predicate_iris()
        assert {t.p.value for t in triples} <= known

    def test_paper_rootedness(self):
        triples, _ = build_ctd_subgraph()
        check_paper_rooted(triples, VOCAB)


class TestDatasetTriples:
    def test_produced_by_emitted_without_article(self):
        registry = IriRegistry()
        triples = build_dataset_triples(
            ctd_dataset(), VOCAB, registry,
            instruments={"vessel:msm:ctd_rbr": ctd_device()},
        )
        dataset = registry.lookup("dataset", "10.1594/pangaea.832320")
        group = registry.lookup("instrument", "type:ctd")
        assert Triple(dataset, Iri(VOCAB.predicate("producedBy")), group) in triples

    def test_unknown_producer_still_linked(self):
        registry = IriRegistry()
        triples = build_dataset_triples(ctd_dataset(), VOCAB, registry)
        assert any(t.p == Iri(VOCAB.predicate("producedBy")) for t in triples)


class TestExportPayload:
    def test_contribution_contains_data_key(self):
        triples, _ = build_ctd_subgraph()
        payload = export_orkg_payload(triples, VOCAB)
        (contribution,) = payload["contributions"]
        data_entries = contribution["statements"]["data"]
        assert {"label": "Physical oceanography from CTS during maria S. Merain"}.items() <= data_entries[0].items()

    def test_paperless_subgraph_rejected(self):
        orphan = [Triple(Iri("http://x/a"), Iri(VOCAB.predicate("label")), Literal("x"))]
        with pytest.raises(ValueError):
            export_orkg_payload(orphan, VOCAB)

    def test_orphan_triple_detected(self):
        triples, _ = build_ctd_subgraph()
        triples.append(
            Triple(Iri("http://x/floating"), Iri(VOCAB.predicate("label")), Literal("x"))
        )
        with pytest.raises(OrphanTriple):
            export_orkg_payload(triples, VOCAB)

    def test_no_contribution_payload_empty(self):
        registry = IriRegistry()
        paper = registry.mint("paper", "10.1000/solo")
        triples = [
            Triple(paper, RDF_TYPE, PAPER_CLASS),
            Triple(paper, LABEL, Literal("Solo paper")),
        ]
        payload = export_orkg_payload(triples, VOCAB)
        assert payload["contributions"] == []

    def test_serialization_deterministic(self):
        triples, _ = build_ctd_subgraph()
        payload = export_orkg_payload(triples, VOCAB)
        assert dump_payload(payload) == dump_payload(export_orkg_payload(triples, VOCAB))

    def test_research_field_included(self):
        triples, _ = build_ctd_subgraph()
        payload = export_orkg_payload(triples, VOCAB)
        assert payload["research_field"] == "Oceanography"


class TestVocabularyMap:
    def test_default_entries(self):
        assert VOCAB.predicate("contribution").endswith("P31")
        assert VOCAB.predicate("data").endswith("P2005")
        assert VOCAB.predicate_with_aliases("data")[1].endswith("P4017")
        assert VOCAB.predicate("producedBy").endswith("P146018")
        assert VOCAB.predicate("location").endswith("P5049")
        assert VOCAB.predicate("parameters").endswith("P15680")
        assert VOCAB.clazz("Paper").endswith("Paper")
        assert VOCAB.clazz("Instrument").endswith("C99025")

    def test_relative_iri_rejected(self):
        with pytest.raises(ValueError):
            VocabularyMap(predicates={"label": "label"})

    def test_semantic_name_reverse_lookup(self):
        assert VOCAB.semantic_name("http://orkg.org/orkg/predicate/P4017") == "data"
        assert VOCAB.semantic_name("http://nowhere/else") is None
