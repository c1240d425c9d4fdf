import json
import random

import pytest

from graphgen import listing2_store, random_store
from naive_sparql import multiset, naive_rows
from instrumentkg.sparql import (
    Filter,
    OptionalGroup,
    ResultFormat,
    ResultTable,
    SparqlSyntaxError,
    TriplePattern,
    UnknownPrefix,
    UnsupportedFeature,
    evaluate_query,
    parse_query,
    serialize_results,
)
from instrumentkg.store import Iri, Literal, Triple, TripleStore


def q1_text(queries_dir):
    return (queries_dir / "query1.rq").read_text()


class TestParse:
    def test_sample_query1(self, queries_dir):
        query = parse_query(q1_text(queries_dir))
        assert query.projection == ["paper_title", "dataset", "instrument_name"]
        filters = [p for p in query.patterns if isinstance(p, Filter)]
        assert len(filters) == 1
        assert filters[0].expr.value == Iri("http://orkg.org/orkg/resource/R741211")

    def test_trivial_query(self):
        query = parse_query("SELECT ?s WHERE { ?s ?p ?o }")
        assert query.projection == ["s"]
        assert len(query.patterns) == 1

    def test_group_by_unsupported(self):
        with pytest.raises(UnsupportedFeature):
            parse_query("SELECT ?s WHERE { ?s ?p ?o } GROUP BY ?s")

    @pytest.mark.parametrize(
        "text",
        [
            "SELECT ?s WHERE { ?s ?p ?o . { ?s ?p ?o } UNION { ?s ?p ?o } }",
            "SELECT DISTINCT ?s WHERE { ?s ?p ?o }",
            "SELECT ?s WHERE { ?s ?p ?o } ORDER BY ?s",
            "SELECT * WHERE { ?s ?p ?o }",
        ],
    )
    def test_subset_boundary_named(self, text):
        with pytest.raises(UnsupportedFeature):
            parse_query(text)

    def test_unknown_prefix(self):
        with pytest.raises(UnknownPrefix):
            parse_query("SELECT ?s WHERE { ?s nope:p ?o }")

    def test_syntax_error_carries_position(self):
        with pytest.raises(SparqlSyntaxError) as err:
            parse_query("SELECT ?s WHERE { ?s <http://p> }")
        assert err.value.position[0] >= 1

    def test_projection_must_be_bound(self):
        with pytest.raises(SparqlSyntaxError):
            parse_query("SELECT ?missing WHERE { ?s ?p ?o }")

    def test_a_expands_to_rdf_type(self):
        query = parse_query("SELECT ?s WHERE { ?s a <http://c/X> }")
        pattern = query.patterns[0]
        assert pattern.p == Iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")

    def test_comments_inside_filter(self, queries_dir):
        query = parse_query((queries_dir / "query2.rq").read_text())
        assert query.projection == ["paper_title", "dataset_label", "instrument_name", "sea"]


class TestEvaluate:
    def test_query1_matches_oracle_and_expected_row(self, queries_dir):
        store = listing2_store()
        query = parse_query(q1_text(queries_dir))
        table = evaluate_query(store, query)
        assert multiset(table.rows, table.vars) == multiset(
            naive_rows(store, query), query.projection
        )
        assert len(table.rows) == 1
        assert table.rows[0]["instrument_name"] == Literal("E2 - Flat-Cone Diffractometer")

    def test_query2_keeps_only_matching_contribution(self, queries_dir):
        store = listing2_store()
        query = parse_query((queries_dir / "query2.rq").read_text())
        table = evaluate_query(store, query)
        assert multiset(table.rows, table.vars) == multiset(
            naive_rows(store, query), query.projection
        )
        assert [row["sea"] for row in table.rows] == [Literal("Arctic Ocean")]

    def test_query3_drops_unbound_optional_rows(self, queries_dir):
        store = listing2_store()
        query = parse_query((queries_dir / "query3.rq").read_text())
        table = evaluate_query(store, query)
        assert multiset(table.rows, table.vars) == multiset(
            naive_rows(store, query), query.projection
        )
        assert table.rows, "parameters literal must satisfy CONTAINS"
        assert all("parameters" in row for row in table.rows)

    def test_optional_leaves_unbound(self):
        store = TripleStore(
            [
                Triple(Iri("http://s/1"), Iri("http://p/a"), Literal("x")),
                Triple(Iri("http://s/2"), Iri("http://p/a"), Literal("y")),
                Triple(Iri("http://s/2"), Iri("http://p/b"), Literal("extra")),
            ]
        )
        query = parse_query(
            "SELECT ?s ?v WHERE { ?s <http://p/a> ?x . OPTIONAL { ?s <http://p/b> ?v } }"
        )
        table = evaluate_query(store, query)
        bound = [row for row in table.rows if "v" in row]
        unbound = [row for row in table.rows if "v" not in row]
        assert len(bound) == 1 and len(unbound) == 1

    def test_duplicates_preserved(self):
        store = TripleStore(
            [
                Triple(Iri("http://s/1"), Iri("http://p/a"), Literal("x")),
                Triple(Iri("http://s/1"), Iri("http://p/b"), Literal("x")),
            ]
        )
        query = parse_query("SELECT ?s WHERE { ?s ?p ?o }")
        table = evaluate_query(store, query)
        assert len(table.rows) == 2


def _random_query(rng):
    """Small random BGP + optional OPTIONAL + optional FILTER over the
    random store vocabulary."""
    def term(position, vars_used):
        roll = rng.random()
        if roll < 0.5:
            name = rng.choice("xyzw")
            vars_used.add(name)
            return f"?{name}"
        if position == "p":
            return f"<http://p/{rng.randrange(5)}>"
        if position == "o" and roll < 0.75:
            return f'"v{rng.randrange(8)}"'
        return f"<http://g/{rng.randrange(8)}>"

    vars_used: set = set()
    patterns = [
        f"{term('s', vars_used)} {term('p', vars_used)} {term('o', vars_used)} ."
        for _ in range(rng.randrange(1, 4))
    ]
    body = " ".join(patterns)
    if rng.random() < 0.5:
        body += f" OPTIONAL {{ ?x <http://p/{rng.randrange(5)}> ?opt . }}"
        vars_used.add("opt")
    if rng.random() < 0.5 and "x" in vars_used:
        body += f' FILTER(?x = <http://g/{rng.randrange(8)}>)'
    if not vars_used:
        vars_used.add("x")
        body = "?x ?p ?o . " + body
    projection = " ".join(f"?{v}" for v in sorted(vars_used))
    return f"SELECT {projection} WHERE {{ {body} }}"


class TestOracleEquivalence:
    def test_random_queries_match_naive_evaluator(self):
        rng = random.Random(777)
        for _ in range(150):
            store = random_store(rng, max_triples=30)
            query = parse_query(_random_query(rng))
            mine = evaluate_query(store, query)
            assert multiset(mine.rows, mine.vars) == multiset(
                naive_rows(store, query), query.projection
            )


class TestJoinOrderInvariance:
    def test_permuting_bgp_preserves_rows_and_order(self, queries_dir):
        rng = random.Random(31415)
        store = listing2_store()
        for name in ("query1", "query2", "query3"):
            query = parse_query((queries_dir / name).with_suffix(".rq").read_text())
            baseline = evaluate_query(store, query)
            for _ in range(6):
                permuted = parse_query((queries_dir / name).with_suffix(".rq").read_text())
                # Permute only the contiguous leading run of triple patterns:
                # reordering across OPTIONAL/FILTER would change semantics.
                run = 0
                while run < len(permuted.patterns) and isinstance(
                    permuted.patterns[run], TriplePattern
                ):
                    run += 1
                head = permuted.patterns[:run]
                rng.shuffle(head)
                permuted.patterns[:run] = head
                result = evaluate_query(store, permuted)
                assert multiset(result.rows, result.vars) == multiset(
                    baseline.rows, baseline.vars
                )
                assert result.rows == baseline.rows

    def test_filter_monotonicity(self):
        rng = random.Random(2718)
        store = listing2_store()
        base = parse_query(
            "SELECT ?s ?o WHERE { ?s <http://orkg.org/orkg/predicate/P146018> ?o }"
        )
        filtered = parse_query(
            "SELECT ?s ?o WHERE { ?s <http://orkg.org/orkg/predicate/P146018> ?o "
            'FILTER(?o = <http://orkg.org/orkg/resource/R694631>) }'
        )
        n_base = len(evaluate_query(store, base).rows)
        n_filtered = len(evaluate_query(store, filtered).rows)
        assert n_filtered <= n_base


class TestSerializeResults:
    def test_empty_table_json(self):
        table = ResultTable(vars=["s"], rows=[])
        doc = json.loads(serialize_results(table, ResultFormat.JSON))
        assert doc == {"head": {"vars": ["s"]}, "results": {"bindings": []}}

    def test_iri_binding_shape(self):
        table = ResultTable(vars=["s"], rows=[{"s": Iri("http://a")}])
        doc = json.loads(serialize_results(table, ResultFormat.JSON))
        assert doc["results"]["bindings"] == [{"s": {"type": "uri", "value": "http://a"}}]

    def test_unbound_cell_omitted_in_json_empty_in_tsv(self):
        table = ResultTable(
            vars=["s", "v"],
            rows=[{"s": Iri("http://a")}],
        )
        doc = json.loads(serialize_results(table, ResultFormat.JSON))
        assert "v" not in doc["results"]["bindings"][0]
        tsv = serialize_results(table, ResultFormat.TSV).decode()
        lines = tsv.split("\n")
        assert lines[0] == "s\tv"
        assert lines[1] == "<http://a>\t"

    def test_literal_binding_with_language(self):
        table = ResultTable(vars=["v"], rows=[{"v": Literal("hola", lang="es")}])
        doc = json.loads(serialize_results(table, ResultFormat.JSON))
        assert doc["results"]["bindings"][0]["v"] == {
            "type": "literal",
            "value": "hola",
            "xml:lang": "es",
        }

    def test_deterministic_bytes(self):
        table = ResultTable(vars=["s"], rows=[{"s": Iri("http://a")}])
        assert serialize_results(table) == serialize_results(table)
