import random

import pytest

from instrumentkg.model import (
    ArticleRecord,
    DatasetRecord,
    Doi,
    EntityLabel,
    EntitySpan,
    ExperimentDetails,
    InstrumentRecord,
    LinkEdge,
    LinkKind,
    MalformedDoi,
    Provenance,
    Source,
    canonical_pid,
    fixture_key,
    normalize_doi,
    validate_instrument,
    validate_spans,
)


class TestNormalizeDoi:
    def test_strips_resolver_prefix(self):
        assert normalize_doi("https://doi.org/10.1594/PANGAEA.832320").value == "10.1594/pangaea.832320"

    def test_already_canonical(self):
        assert normalize_doi("10.5194/bg-11-1799-2014").value == "10.5194/bg-11-1799-2014"

    def test_rejects_garbage(self):
        with pytest.raises(MalformedDoi):
            normalize_doi("not-a-doi")

    @pytest.mark.parametrize(
        "raw",
        [
            "doi:10.1000/ABC",
            "http://dx.doi.org/10.1000/abc",
            "  10.1000/abc  ",
            "DOI:DOI.ORG/10.1000/abc",
        ],
    )
    def test_variants_collapse(self, raw):
        assert normalize_doi(raw).value == "10.1000/abc"

    def test_rejects_multi_slash_suffix(self):
        with pytest.raises(MalformedDoi):
            normalize_doi("10.1000/a/b")

    def test_rejects_short_prefix(self):
        with pytest.raises(MalformedDoi):
            normalize_doi("10.99/abc")

    def test_rejects_empty(self):
        with pytest.raises(MalformedDoi):
            normalize_doi("   ")

    def test_idempotence_property(self):
        rng = random.Random(20240301)
        prefixes = ["", "https://doi.org/", "http://dx.doi.org/", "doi:", "DOI:"]
        for _ in range(300):
            suffix = "".join(rng.choice("abcz019.-_") for _ in range(rng.randrange(1, 12)))
            body = f"10.{rng.randrange(1000, 99999)}/{suffix}"
            raw = rng.choice(prefixes) + (body.upper() if rng.random() < 0.5 else body)
            once = normalize_doi(raw)
            again = normalize_doi(once.value)
            assert once == again

    def test_case_and_prefix_variants_equal(self):
        a = normalize_doi("HTTPS://DOI.ORG/10.1594/PANGAEA.832320")
        b = normalize_doi("10.1594/Pangaea.832320")
        assert a == b


class TestDoi:
    def test_rejects_uppercase_direct_construction(self):
        with pytest.raises(MalformedDoi):
            Doi("10.1594/PANGAEA.832320")

    def test_str(self):
        assert str(Doi("10.1000/x")) == "10.1000/x"


class TestValidateInstrument:
    def test_valid_record(self):
        rec = InstrumentRecord(pid="10.5442/ctd", name="CTD", source=Source.AWI)
        assert validate_instrument(rec) == []

    def test_missing_pid(self):
        rec = InstrumentRecord(pid="", name="CTD", source=Source.AWI)
        assert validate_instrument(rec) == ["pid missing"]

    def test_missing_name(self):
        rec = InstrumentRecord(pid="10.5442/ctd", name="", source=Source.AWI)
        assert validate_instrument(rec) == ["name missing"]


class TestEntitySpan:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            EntitySpan(start=5, end=5, label=EntityLabel.DATA, surface="")

    def test_rejects_bad_confidence(self):
        with pytest.raises(ValueError):
            EntitySpan(start=0, end=1, label=EntityLabel.DATA, surface="x", confidence=1.5)

    def test_validate_spans_checks_surface(self):
        text = "salinity and depth"
        good = EntitySpan(start=0, end=8, label=EntityLabel.DATA, surface="salinity")
        validate_spans(text, [good])
        bad = EntitySpan(start=0, end=8, label=EntityLabel.DATA, surface="depth")
        with pytest.raises(ValueError):
            validate_spans(text, [bad])

    def test_validate_spans_rejects_overlap(self):
        text = "water column studies"
        spans = [
            EntitySpan(start=0, end=12, label=EntityLabel.PROCESS, surface="water column"),
            EntitySpan(start=6, end=20, label=EntityLabel.DATA, surface="column studies"),
        ]
        with pytest.raises(ValueError):
            validate_spans(text, spans)


class TestLinkEdge:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            LinkEdge(
                src="10.1/a",
                dst="10.1/a",
                kind=LinkKind.INSTRUMENT_PRODUCED_DATASET,
                provenance=Provenance.METADATA,
            )

    def test_provenance_enum_closed(self):
        assert {p.value for p in Provenance} == {
            "Metadata",
            "CitationExpansion",
            "FulltextExtraction",
        }


def _sample_records():
    span = EntitySpan(start=3, end=14, label=EntityLabel.PROCESS, surface="backscatter")
    return [
        InstrumentRecord(
            pid="vessel:msm:ctd_rbr",
            name="CTD RBR",
            source=Source.AWI,
            manufacturer="RBR Ltd.",
            instrument_type="CTD",
            related_article_pids=("10.5194/bg-11-1799-2014",),
            extras=(("campaign", "MSM20/4"),),
        ),
        DatasetRecord(
            doi=Doi("10.1594/pangaea.832320"),
            title="Physical oceanography",
            produced_by=("vessel:msm:ctd_rbr",),
        ),
        ArticleRecord(
            doi=Doi("10.5194/bg-11-1799-2014"),
            title="Environmental forcing",
            linked_dataset_dois=("10.1594/pangaea.832320",),
            cites_instrument_paper=True,
        ),
        LinkEdge(
            src="vessel:msm:ctd_rbr",
            dst="10.1594/pangaea.832320",
            kind=LinkKind.INSTRUMENT_PRODUCED_DATASET,
            provenance=Provenance.METADATA,
        ),
        span,
        ExperimentDetails(
            dataset_doi=Doi("10.1594/pangaea.832320"),
            parameters=("salinity", "density"),
            location="Yucatan Strait",
            entities=(span,),
        ),
    ]


@pytest.mark.parametrize("record", _sample_records(), ids=lambda r: type(r).__name__)
def test_json_round_trip(record):
    assert type(record).from_dict(record.to_dict()) == record


def test_experiment_details_rejects_inverted_bounds():
    from datetime import date

    with pytest.raises(ValueError):
        ExperimentDetails(
            dataset_doi=Doi("10.1/x"),
            temporal_start=date(2012, 3, 24),
            temporal_end=date(2012, 3, 21),
        )


def test_canonical_pid_passes_urns_through():
    assert canonical_pid("vessel:msm:CTD_RBR") == "vessel:msm:CTD_RBR"
    assert canonical_pid("https://doi.org/10.1594/PANGAEA.1") == "10.1594/pangaea.1"


def test_fixture_key():
    assert fixture_key("10.5194/bg-11-1799-2014") == "10.5194_bg-11-1799-2014"
    assert fixture_key("vessel:msm:CTD RBR") == "vessel_msm_ctd_rbr"
