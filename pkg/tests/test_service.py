import json
import threading
import urllib.error
import urllib.parse
import urllib.request

import pytest

from graphgen import listing2_store
from instrumentkg.rdfio import serialize_ntriples
from instrumentkg.service import make_server, run_query_bytes
from instrumentkg.sparql import ResultFormat


@pytest.fixture(scope="module")
def server_url():
    server = make_server(listing2_store(), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield f"http://{host}:{port}"
    server.shutdown()


def get(url, headers=None):
    request = urllib.request.Request(url, headers=headers or {})
    with urllib.request.urlopen(request) as response:
        return response.status, response.read()


def post(url, body, headers=None):
    request = urllib.request.Request(url, data=body.encode(), headers=headers or {})
    with urllib.request.urlopen(request) as response:
        return response.status, response.read()


QUERY = "SELECT ?s WHERE { ?s a <http://orkg.org/orkg/class/C99025> }"


class TestEndpoint:
    def test_healthz(self, server_url):
        status, body = get(f"{server_url}/healthz")
        assert (status, body) == (200, b"ok")

    def test_get_query(self, server_url):
        encoded = urllib.parse.quote(QUERY)
        status, body = get(f"{server_url}/sparql?query={encoded}")
        assert status == 200
        doc = json.loads(body)
        assert len(doc["results"]["bindings"]) == 2

    def test_get_without_query_param_400(self, server_url):
        with pytest.raises(urllib.error.HTTPError) as err:
            get(f"{server_url}/sparql")
        assert err.value.code == 400

    def test_post_query_matches_cli_bytes(self, server_url, queries_dir):
        query_text = (queries_dir / "query1.rq").read_text()
        status, body = post(f"{server_url}/sparql", query_text)
        assert status == 200
        assert body == run_query_bytes(listing2_store(), query_text, ResultFormat.JSON)

    def test_parse_error_400_with_message(self, server_url):
        with pytest.raises(urllib.error.HTTPError) as err:
            post(f"{server_url}/sparql", "SELECT ?s WHERE { broken")
        assert err.value.code == 400

    def test_unsupported_feature_400_prefixed(self, server_url):
        with pytest.raises(urllib.error.HTTPError) as err:
            post(f"{server_url}/sparql", "SELECT ?s WHERE { ?s ?p ?o } LIMIT 5")
        assert err.value.code == 400
        assert err.value.read().startswith(b"unsupported:")

    def test_tsv_via_accept_header(self, server_url):
        status, body = post(
            f"{server_url}/sparql", QUERY, {"Accept": "text/tab-separated-values"}
        )
        assert status == 200
        assert body.decode().splitlines()[0] == "s"

    def test_unknown_path_404(self, server_url):
        with pytest.raises(urllib.error.HTTPError) as err:
            get(f"{server_url}/nothing")
        assert err.value.code == 404

    def test_concurrent_requests(self, server_url):
        encoded = urllib.parse.quote(QUERY)
        results = []

        def hit():
            results.append(get(f"{server_url}/sparql?query={encoded}")[0])

        threads = [threading.Thread(target=hit) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [200] * 8


class TestServeFromFile:
    def test_serve_loads_store_and_port_conflict_raises(self, tmp_path):
        from instrumentkg.service import serve

        store_path = tmp_path / "graph.nt"
        store_path.write_bytes(serialize_ntriples(listing2_store()))
        server = serve(store_path, port=0)
        bound_port = server.server_address[1]
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            status, body = get(f"http://127.0.0.1:{bound_port}/healthz")
            assert body == b"ok"
            with pytest.raises(OSError):
                serve(store_path, port=bound_port)
        finally:
            server.shutdown()
