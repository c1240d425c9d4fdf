import json
import time
from pathlib import Path

import pytest

from instrumentkg.pipeline import ConfigError, StageFailure, load_config, run_pipeline
from instrumentkg.rdfio import load_ntriples
from instrumentkg.store import Iri, Literal


def run_demo(data_dir, out: Path):
    config = load_config(data_dir / "demo_config.json", out)
    return config, run_pipeline(config)


@pytest.fixture(scope="module")
def demo_build(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    config, summary = run_demo(data_dir, out)
    return config, summary


class TestRunPipeline:
    def test_listing_shape_in_store(self, demo_build):
        config, summary = demo_build
        store = load_ntriples(summary.store_path.read_bytes())
        vocab = config.vocabulary
        label = Iri(vocab.predicate("label"))

        def labeled(text):
            hits = list(store.subjects(label, Literal(text)))
            assert hits, f"no resource labeled {text!r}"
            return hits[0]

        paper = labeled(
            "Environmental forcing of the Campeche cold-water coral province, "
            "southern Gulf of Mexico"
        )
        dataset = labeled("Physical oceanography from CTS during maria S. Merain")
        ctd = labeled("CTD")
        contribution_objs = set(store.objects(paper, Iri(vocab.predicate("contribution"))))
        assert len(contribution_objs) == 1
        contribution = contribution_objs.pop()
        assert dataset in set(store.objects(contribution, Iri(vocab.predicate("data"))))
        assert ctd in set(store.objects(dataset, Iri(vocab.predicate("producedBy"))))
        assert set(store.objects(contribution, Iri(vocab.predicate("parameters"))))
        devices = set(store.objects(ctd, Iri(vocab.predicate("devices"))))
        device_labels = {
            o.lexical
            for device in devices
            for o in store.objects(device, label)
        }
        assert device_labels == {"CTD RBR", "CTD_Seabird-SBE-19-0"}

    def test_entities_extracted_into_contribution(self, demo_build):
        config, summary = demo_build
        store = load_ntriples(summary.store_path.read_bytes())
        vocab = config.vocabulary
        process_literals = {
            t.o.lexical for t in store.match_pattern(p=Iri(vocab.predicate("process")))
        }
        assert {"hydroacoustic measurements", "water column studies"} <= process_literals
        data_literals = {
            t.o.lexical
            for t in store.match_pattern(p=Iri(vocab.predicate("data")))
            if isinstance(t.o, Literal)
        }
        assert "backscatter" in data_literals

    def test_research_fields_assigned(self, demo_build):
        _, summary = demo_build
        classify_cache = json.loads(
            (summary.output_dir / "cache" / "classify.json").read_text()
        )
        fields = classify_cache["fields"]
        assert fields["10.5194/bg-11-1799-2014"] == "Oceanography"
        assert fields["10.5555/msm-alloy-2021"] == "Materials Science and Engineering"

    def test_manifest_lists_all_stages(self, demo_build):
        _, summary = demo_build
        manifest = json.loads(summary.manifest_path.read_text())
        assert set(manifest["stages"]) == {
            "harvest", "harmonize", "link", "analyze", "extract", "classify",
            "triples", "stats",
        }

    def test_exports_written_per_paper(self, demo_build):
        _, summary = demo_build
        names = sorted(p.name for p in summary.export_dir.glob("*.json"))
        assert names == [
            "10.5194_bg-11-1799-2014.json",
            "10.5555_msm-alloy-2021.json",
        ]

    def test_reproducible_builds(self, data_dir, tmp_path):
        _, first = run_demo(data_dir, tmp_path / "one")
        _, second = run_demo(data_dir, tmp_path / "two")
        assert first.store_path.read_bytes() == second.store_path.read_bytes()
        assert first.registry_path.read_bytes() == second.registry_path.read_bytes()

    def test_resume_reuses_cached_stages(self, data_dir, tmp_path):
        config, summary = run_demo(data_dir, tmp_path / "out")
        harvest_cache = summary.output_dir / "cache" / "harvest.json"
        before = harvest_cache.stat().st_mtime_ns
        config2 = load_config(data_dir / "demo_config.json", tmp_path / "out")
        run_pipeline(config2, resume=True)
        assert harvest_cache.stat().st_mtime_ns == before

    def test_empty_fixtures_build_empty_graph(self, data_dir, tmp_path):
        fixtures = tmp_path / "fixtures"
        for sub in ("awi", "datacite"):
            (fixtures / sub).mkdir(parents=True)
            (fixtures / sub / "instruments.json").write_text("[]")
        config_doc = json.loads((data_dir / "demo_config.json").read_text())
        for entry in config_doc["sources"].values():
            entry["fixtures_dir"] = str(fixtures)
        for key in ("extractor", "classifier", "field_maps", "aliases_path", "vocabulary_path"):
            doc = config_doc.get(key)
            if key == "extractor":
                doc["gazetteer_path"] = str(data_dir / "gazetteer.json")
            elif key == "classifier":
                doc["keywords_path"] = str(data_dir / "field_keywords.json")
                doc["taxonomy_path"] = str(data_dir / "research_fields.json")
            elif key == "field_maps":
                config_doc[key] = {
                    "AWI": str(data_dir / "field_map_awi.json"),
                    "DataCite": str(data_dir / "field_map_datacite.json"),
                }
            elif key == "aliases_path":
                config_doc[key] = str(data_dir / "parameter_aliases.json")
            elif key == "vocabulary_path":
                config_doc[key] = str(data_dir / "vocabulary.json")
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config_doc))
        config = load_config(config_path, tmp_path / "out")
        summary = run_pipeline(config)
        assert summary.stats.total_statements == 0
        assert all(v == 0 for v in summary.stats.entities.values())

    def test_missing_fixture_fails_in_harvest_without_store(self, data_dir, tmp_path):
        fixtures = tmp_path / "fixtures"
        fixtures.mkdir()
        config_doc = json.loads((data_dir / "demo_config.json").read_text())
        for entry in config_doc["sources"].values():
            entry["fixtures_dir"] = str(fixtures)
        config_doc["extractor"]["gazetteer_path"] = str(data_dir / "gazetteer.json")
        config_doc["classifier"]["keywords_path"] = str(data_dir / "field_keywords.json")
        config_doc["classifier"]["taxonomy_path"] = str(data_dir / "research_fields.json")
        config_doc["field_maps"] = {
            "AWI": str(data_dir / "field_map_awi.json"),
            "DataCite": str(data_dir / "field_map_datacite.json"),
        }
        config_doc["aliases_path"] = str(data_dir / "parameter_aliases.json")
        config_doc["vocabulary_path"] = str(data_dir / "vocabulary.json")
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config_doc))
        config = load_config(config_path, tmp_path / "out")
        with pytest.raises(StageFailure) as err:
            run_pipeline(config)
        assert err.value.stage == "harvest"
        assert not (tmp_path / "out" / "graph.nt").exists()

    def test_runtime_budget(self, data_dir, tmp_path):
        start = time.monotonic()
        run_demo(data_dir, tmp_path / "timed")
        assert time.monotonic() - start < 5.0


class TestRoutingOverride:
    def test_override_reroutes_one_instrument(self, data_dir, tmp_path):
        # Route the AWI box corer to the DataCite-style source, where no
        # dataset fixture exists for it: its PANGAEA dataset disappears.
        config_doc = json.loads((data_dir / "demo_config.json").read_text())
        config_doc["routing_overrides"] = {"vessel:ps:box_corer_gkg": "datacite"}
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config_doc))
        import shutil as _shutil

        workdir = tmp_path / "inputs"
        _shutil.copytree(data_dir, workdir)
        (workdir / "config.json").write_text(json.dumps(config_doc))
        config = load_config(workdir / "config.json", tmp_path / "out")
        summary = run_pipeline(config)
        assert summary.stats.entities["Datasets produced by Instruments"] == 2

    def test_unknown_override_source_rejected(self, data_dir, tmp_path):
        config_doc = json.loads((data_dir / "demo_config.json").read_text())
        config_doc["routing_overrides"] = {"x": "nowhere"}
        import shutil as _shutil

        workdir = tmp_path / "inputs"
        _shutil.copytree(data_dir, workdir)
        (workdir / "config.json").write_text(json.dumps(config_doc))
        with pytest.raises(ConfigError):
            load_config(workdir / "config.json", tmp_path / "out")


class TestLoadConfig:
    def test_fail_fast_on_missing_path(self, data_dir, tmp_path):
        config_doc = json.loads((data_dir / "demo_config.json").read_text())
        config_doc["extractor"]["gazetteer_path"] = "does/not/exist.json"
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config_doc))
        with pytest.raises(ConfigError):
            load_config(config_path, tmp_path / "out")

    def test_output_dir_required(self, data_dir):
        with pytest.raises(ConfigError):
            load_config(data_dir / "demo_config.json")
