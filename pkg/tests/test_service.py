from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from descry.engine import Engine, EngineConfig
from descry.service import create_app
from descry.synth import random_dataset


@pytest.fixture(scope="module")
def engine(tmp_path_factory):
    root = random_dataset(tmp_path_factory.mktemp("ds") / "ds",
                          n_sequences=2, seed=21, n_frames=2)
    return Engine.from_paths(root, EngineConfig(skip_initial_frames=0))


@pytest.fixture(scope="module")
def client(engine):
    return TestClient(create_app(engine))


class TestReadEndpoints:
    def test_list_sequences(self, client):
        body = client.get("/api/sequences").json()
        ids = [s["sequence_id"] for s in body["sequences"]]
        assert ids == ["seq000", "seq001"]
        assert all(s["frame_count"] == 2 for s in body["sequences"])

    def test_vocabulary(self, client, engine):
        body = client.get("/api/vocabulary").json()
        assert body["hash"] == engine.vocabulary.hash()
        assert body["families"]["gender"] == ["male", "female"]
        assert len(body["vocabulary"]["colors"]) == 13

    def test_frame_detail_and_image(self, client):
        body = client.get("/api/sequences/seq000/frames/0").json()
        assert body["candidates"]
        assert body["ground_truth"]["bbox"]
        assert body["image_url"] == "/api/sequences/seq000/frames/0/image"
        image = client.get(body["image_url"])
        assert image.status_code == 200
        assert image.headers["content-type"] == "image/png"
        assert image.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_sequence_404(self, client):
        assert client.get("/api/sequences/nope/frames/0").status_code == 404

    def test_unknown_frame_404(self, client):
        assert client.get("/api/sequences/seq000/frames/99").status_code == 404


class TestQueryEndpoint:
    def test_query_matches_engine_code_path(self, client, engine):
        seq = engine.dataset.sequence("seq000")
        resp = client.post("/api/query", json={
            "sequence_id": "seq000",
            "description": seq.description.to_dict(),
        })
        assert resp.status_code == 200
        body = resp.json()
        direct = engine.run_sequence(seq)
        expected = [direct[idx].to_dict() for idx in sorted(direct)]
        assert body["results"] == expected
        # trace payload counts are self-consistent for the console funnel
        for result in body["results"]:
            for stage in result["trace"]["stages"]:
                assert len(stage["kept"]) <= len(stage["input"])

    def test_invalid_label_422_with_parse_message(self, client):
        resp = client.post("/api/query", json={
            "sequence_id": "seq000",
            "description": {"torso_primary_color": "crimson"},
        })
        assert resp.status_code == 422
        assert "unknown label 'crimson' in colors" in resp.json()["detail"]

    def test_empty_description_422(self, client):
        resp = client.post("/api/query", json={
            "sequence_id": "seq000", "description": {}})
        assert resp.status_code == 422
        assert "empty description" in resp.json()["detail"]

    def test_unknown_sequence_404(self, client):
        resp = client.post("/api/query", json={
            "sequence_id": "missing", "description": {"gender": "male"}})
        assert resp.status_code == 404

    def test_frame_range_filter(self, client, engine):
        seq = engine.dataset.sequence("seq000")
        resp = client.post("/api/query", json={
            "sequence_id": "seq000",
            "description": seq.description.to_dict(),
            "start_frame": 1, "end_frame": 1,
        })
        body = resp.json()
        assert [r["frame_index"] for r in body["results"]] == [1]

    def test_concurrent_identical_queries_identical_bodies(self, client, engine):
        seq = engine.dataset.sequence("seq001")
        payload = {"sequence_id": "seq001", "description": seq.description.to_dict()}

        def run(_):
            return client.post("/api/query", json=payload).text

        with ThreadPoolExecutor(max_workers=8) as pool:
            bodies = list(pool.map(run, range(16)))
        assert len(set(bodies)) == 1
