import io

import pytest
from fastapi.testclient import TestClient

from streamhash.formats import read_model
from streamhash.service import create_app


@pytest.fixture
def client():
    return TestClient(create_app())


def make_session(client, **overrides):
    config = dict(bits=16, warmup=4, seed=5, models=1)
    config.update(overrides)
    response = client.post("/sessions", json=config)
    assert response.status_code == 200
    return response.json()["session_id"]


def feed_warmup(client, sid, rng, d=6, count=4):
    vectors = rng.normal(size=(count, d)).tolist()
    response = client.post(f"/sessions/{sid}/warmup", json={"vectors": vectors})
    assert response.status_code == 200
    return response.json()


def random_pairs(rng, n, d=6):
    return [
        {
            "x_i": rng.normal(size=d).tolist(),
            "x_j": rng.normal(size=d).tolist(),
            "s": 1 if rng.random() < 0.5 else -1,
        }
        for _ in range(n)
    ]


class TestSessionLifecycle:
    def test_root_reports_ok(self, client):
        body = client.get("/").json()
        assert body["status"] == "ok"

    def test_create_status_delete(self, client, rng):
        sid = make_session(client)
        status = client.get(f"/sessions/{sid}").json()
        assert status["ready"] is False
        assert status["models"] == 1 and status["bits"] == 16
        assert client.delete(f"/sessions/{sid}").status_code == 200
        assert client.get(f"/sessions/{sid}").status_code == 404

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/deadbeef").status_code == 404

    def test_invalid_config_rejected(self, client):
        response = client.post(
            "/sessions", json={"bits": 64, "alpha": 5, "beta": 0.01}
        )
        assert response.status_code == 422


class TestTrainingFlow:
    def test_warmup_then_steps(self, client, rng):
        sid = make_session(client)
        result = feed_warmup(client, sid, rng)
        assert result["ready"] is True

        response = client.post(
            f"/sessions/{sid}/pairs", json={"pairs": random_pairs(rng, 20)}
        )
        assert response.status_code == 200
        results = response.json()["results"]
        assert all(item["phase"] == "step" for item in results)
        assert any(
            report is not None and report["updated"]
            for item in results
            for report in item["reports"]
        )
        status = client.get(f"/sessions/{sid}").json()
        assert status["steps"] == 20

    def test_pairs_consume_warmup_first(self, client, rng):
        sid = make_session(client, warmup=6)
        response = client.post(
            f"/sessions/{sid}/pairs", json={"pairs": random_pairs(rng, 5)}
        )
        phases = [item["phase"] for item in response.json()["results"]]
        assert phases == ["warmup", "warmup", "warmup", "step", "step"]

    def test_warmup_after_ready_conflicts(self, client, rng):
        sid = make_session(client)
        feed_warmup(client, sid, rng)
        response = client.post(
            f"/sessions/{sid}/warmup", json={"vectors": [[0.0] * 6]}
        )
        assert response.status_code == 409

    def test_dimension_mismatch_rejected(self, client, rng):
        sid = make_session(client)
        feed_warmup(client, sid, rng)
        bad = [{"x_i": [1.0] * 9, "x_j": [0.0] * 9, "s": 1}]
        response = client.post(f"/sessions/{sid}/pairs", json={"pairs": bad})
        assert response.status_code == 400

    def test_bad_label_rejected_by_schema(self, client, rng):
        sid = make_session(client)
        bad = [{"x_i": [1.0] * 6, "x_j": [0.0] * 6, "s": 2}]
        response = client.post(f"/sessions/{sid}/pairs", json={"pairs": bad})
        assert response.status_code == 422

    def test_metrics_csv(self, client, rng):
        sid = make_session(client)
        feed_warmup(client, sid, rng)
        client.post(f"/sessions/{sid}/pairs", json={"pairs": random_pairs(rng, 10)})
        response = client.get(f"/sessions/{sid}/metrics")
        assert response.status_code == 200
        lines = response.text.strip().splitlines()
        assert lines[0] == "step,cumulative_R,F2,slack,mAP"
        assert len(lines) == 2


class TestModelAndQueries:
    def test_model_download_parses_and_encodes(self, client, rng):
        sid = make_session(client)
        feed_warmup(client, sid, rng)
        client.post(f"/sessions/{sid}/pairs", json={"pairs": random_pairs(rng, 30)})
        raw = client.get(f"/sessions/{sid}/model")
        assert raw.status_code == 200
        bundle = read_model(io.BytesIO(raw.content))
        assert bundle.n_bits == 16 and bundle.n_models == 1

    def test_model_before_ready_conflicts(self, client):
        sid = make_session(client)
        assert client.get(f"/sessions/{sid}/model").status_code == 409

    def test_database_add_query_roundtrip(self, client, rng):
        sid = make_session(client, models=2)
        feed_warmup(client, sid, rng)
        client.post(f"/sessions/{sid}/pairs", json={"pairs": random_pairs(rng, 10)})

        items = rng.normal(size=(12, 6))
        added = client.post(
            f"/sessions/{sid}/database", json={"vectors": items.tolist()}
        )
        assert added.json()["size"] == 12

        # an exact database item must come back at distance zero, rank first
        response = client.post(
            f"/sessions/{sid}/query", json={"vectors": [items[4].tolist()], "k": 3}
        )
        hits = response.json()["results"][0]
        assert hits[0]["index"] == 4 and hits[0]["distance"] == 0

    def test_reencode_refreshes_codes_after_drift(self, client, rng):
        sid = make_session(client)
        feed_warmup(client, sid, rng)
        items = rng.normal(size=(6, 6))
        client.post(f"/sessions/{sid}/database", json={"vectors": items.tolist()})
        # more training moves the model and the running mean
        client.post(f"/sessions/{sid}/pairs", json={"pairs": random_pairs(rng, 40)})
        response = client.post(f"/sessions/{sid}/database/reencode")
        assert response.status_code == 200 and response.json()["size"] == 6
        # a stored item re-encoded under the current state ranks itself first
        hits = client.post(
            f"/sessions/{sid}/query", json={"vectors": [items[0].tolist()], "k": 1}
        ).json()["results"][0]
        assert hits[0]["index"] == 0 and hits[0]["distance"] == 0

    def test_query_without_database_conflicts(self, client, rng):
        sid = make_session(client)
        feed_warmup(client, sid, rng)
        response = client.post(
            f"/sessions/{sid}/query", json={"vectors": [[0.0] * 6], "k": 1}
        )
        assert response.status_code == 409
