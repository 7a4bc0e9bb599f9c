import json
import time

import pytest

import jsonschema
from fastapi.testclient import TestClient

from conftest import REPO

BODY = {"benignClass": 0, "targetClass": 1, "k": 4, "m": 3,
        "strengths": [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5]}


@pytest.fixture(scope="module")
def client(data_dir, ctx, default_cfg, comparison_key_doc):
    from advrgraph.service import create_app

    # same data root as the session context: the service sees the cached artifacts
    app = create_app(data_dir)
    with TestClient(app) as c:
        yield c


def wait_for(client, job_id, timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/api/v1/jobs/{job_id}").json()
        if status["state"] in ("done", "failed"):
            return status
        time.sleep(0.1)
    raise TimeoutError(job_id)


def test_post_graphs_cached_result(client, comparison_key_doc):
    key, _ = comparison_key_doc
    r = client.post("/api/v1/graphs", json=BODY)
    assert r.status_code == 200
    assert r.json() == {"resultKey": key, "cached": True}


def test_post_graphs_idempotent_job(client):
    body = dict(BODY, strengths=[0.0, 2.0], k=3)
    r1 = client.post("/api/v1/graphs", json=body)
    r2 = client.post("/api/v1/graphs", json=body)
    assert r1.status_code == r2.status_code == 200
    if "jobId" in r1.json():
        assert r1.json()["jobId"] == r2.json().get("jobId", r1.json()["jobId"])
        status = wait_for(client, r1.json()["jobId"])
        assert status["state"] == "done"
        # polling a done job keeps returning the same key
        again = client.get(f"/api/v1/jobs/{r1.json()['jobId']}").json()
        assert again["resultKey"] == status["resultKey"]
        # now the POST short-circuits to the cached key
        r3 = client.post("/api/v1/graphs", json=body)
        assert r3.json()["resultKey"] == status["resultKey"]


def test_post_graphs_equal_classes_422(client):
    r = client.post("/api/v1/graphs", json=dict(BODY, targetClass=0))
    assert r.status_code == 422


def test_post_graphs_bad_strengths_422(client):
    r = client.post("/api/v1/graphs", json=dict(BODY, strengths=[1.0, 0.5]))
    assert r.status_code == 422
    r = client.post("/api/v1/graphs", json=dict(BODY, k=0))
    assert r.status_code == 422


def test_malformed_bodies_422(client):
    r = client.post("/api/v1/graphs", content=b"not json",
                    headers={"content-type": "application/json"})
    assert r.status_code == 422
    r = client.post("/api/v1/graphs", json=[1, 2])
    assert r.status_code == 422
    r = client.post("/api/v1/edits", content=b"{",
                    headers={"content-type": "application/json"})
    assert r.status_code == 422


def test_get_graph_bytes_stable(client, comparison_key_doc):
    key, _ = comparison_key_doc
    a = client.get(f"/api/v1/graphs/{key}")
    b = client.get(f"/api/v1/graphs/{key}")
    assert a.status_code == 200
    assert a.content == b.content


def test_get_graph_unknown_404(client):
    assert client.get("/api/v1/graphs/" + "0" * 64).status_code == 404


def test_graph_validates_against_schema(client, comparison_key_doc):
    key, _ = comparison_key_doc
    doc = client.get(f"/api/v1/graphs/{key}").json()
    schema = json.loads(
        (REPO / "src" / "advrgraph" / "schema" / "comparison_graph.schema.json").read_text())
    jsonschema.validate(doc, schema)
    served = client.get("/api/v1/schema/comparison-graph").json()
    assert served == schema


def test_neuron_detail_contract(client, comparison_key_doc):
    key, doc = comparison_key_doc
    nodes = {(n["layer"], n["channel"]): n for n in doc["nodes"]}
    graph_node_keys = set(nodes)
    for (layer, channel), node in list(nodes.items())[:6]:
        r = client.get(f"/api/v1/neurons/{layer}/{channel}", params={"key": key})
        assert r.status_code == 200
        detail = r.json()
        assert detail["group"] == node["group"]
        # trajectory covers 0 plus every strength
        assert len(detail["trajectory"]) == len(doc["strengths"]) + (0.0 not in doc["strengths"])
        edges = detail["incomingEdges"]
        assert len(edges) <= doc["m"]
        weights = [e["weight"] for e in edges]
        assert weights == sorted(weights, reverse=True)
        for e in edges:
            assert (e["sourceLayer"], e["sourceChannel"]) in graph_node_keys
            assert e["targetLayer"] == layer and e["targetChannel"] == channel
        assert len(detail["patches"]) > 0
        for p in detail["patches"]:
            assert client.get(p["uri"]).status_code == 200
        assert client.get(detail["featureVis"]["uri"]).status_code == 200


def test_neuron_detail_first_layer_has_no_edges(client, comparison_key_doc):
    key, doc = comparison_key_doc
    first = doc["layers"][0]
    node = next(n for n in doc["nodes"] if n["layer"] == first)
    detail = client.get(f"/api/v1/neurons/{first}/{node['channel']}",
                        params={"key": key}).json()
    assert detail["incomingEdges"] == []


def test_neuron_detail_unknown_404(client, comparison_key_doc):
    key, _ = comparison_key_doc
    r = client.get("/api/v1/neurons/conv1/99", params={"key": key})
    assert r.status_code == 404


def test_edges_of_emphasized_come_from_shared_or_emphasized(client, comparison_key_doc):
    key, doc = comparison_key_doc
    groups = {(n["layer"], n["channel"]): n["group"] for n in doc["nodes"]}
    for node in doc["nodes"]:
        if node["group"] != "emphasized":
            continue
        detail = client.get(f"/api/v1/neurons/{node['layer']}/{node['channel']}",
                            params={"key": key}).json()
        for e in detail["incomingEdges"]:
            if e["provenance"] in ("attacked-only", "both"):
                src_group = groups[(e["sourceLayer"], e["sourceChannel"])]
                assert src_group in ("shared", "emphasized")


def test_edits_roundtrip(client, comparison_key_doc):
    key, doc = comparison_key_doc
    neurons = [{"layer": n["layer"], "channel": n["channel"]}
               for n in doc["nodes"] if n["group"] == "emphasized"][:2]
    r = client.post("/api/v1/edits", json={"key": key, "neurons": neurons})
    assert r.status_code == 200
    report = r.json()
    assert report["cacheKey"] == key
    assert [s["strength"] for s in report["perStrength"]] == doc["strengths"]
    for entry in report["perStrength"]:
        assert 0.0 <= entry["successRateAfter"] <= 1.0
    curve = {c["strength"]: c["successRate"] for c in doc["attackCurve"]}
    for entry in report["perStrength"]:
        assert entry["successRateBefore"] == curve[entry["strength"]]


def test_edits_empty_neurons_noop(client, comparison_key_doc):
    key, _ = comparison_key_doc
    report = client.post("/api/v1/edits", json={"key": key, "neurons": []}).json()
    assert report["graphDiff"] == []
    for entry in report["perStrength"]:
        assert entry["successRateBefore"] == entry["successRateAfter"]


def test_edits_bad_neuron_422_unknown_key_404(client, comparison_key_doc):
    key, _ = comparison_key_doc
    r = client.post("/api/v1/edits",
                    json={"key": key, "neurons": [{"layer": "conv1", "channel": 99}]})
    assert r.status_code == 422
    r = client.post("/api/v1/edits", json={"key": "0" * 64, "neurons": []})
    assert r.status_code == 404


def test_attack_curve_endpoint(client, comparison_key_doc):
    key, doc = comparison_key_doc
    curve = client.get("/api/v1/attack-curve", params={"key": key}).json()["attackCurve"]
    assert curve == doc["attackCurve"]
    strengths = [c["strength"] for c in curve]
    assert strengths == sorted(strengths)


def test_classes_and_layers(client, ctx):
    classes = client.get("/api/v1/classes").json()["classes"]
    assert len(classes) == ctx.model.num_classes
    layers = client.get("/api/v1/layers").json()["layers"]
    assert [l["name"] for l in layers] == [s.name for s in ctx.model.layers]


def test_unknown_job_404(client):
    assert client.get("/api/v1/jobs/deadbeef").status_code == 404


def test_queue_full_503(data_dir):
    from advrgraph.service import create_app

    app = create_app(data_dir, capacity=0)
    with TestClient(app) as c:
        r = c.post("/api/v1/graphs", json=dict(BODY, strengths=[0.0, 0.7], k=2))
        assert r.status_code == 503
