import pytest
from fastapi.testclient import TestClient

from backend.main import app
from api.dependencies import get_app_state

SHORT = {"synthetic.frames": "5", "scale.num_scales": "3"}


@pytest.fixture
def client():
    get_app_state().clear()
    return TestClient(app)


def test_root_and_health(client):
    assert client.get("/").json()["status"] == "running"
    assert client.get("/api/health").json() == {"status": "healthy"}


def test_track_synthetic(client):
    response = client.post("/api/track", json={"config_overrides": SHORT, "seed": 1})
    assert response.status_code == 200
    body = response.json()
    assert body["name"] == "synthetic"
    assert body["frames"] == 5
    assert len(body["boxes"]) == 5
    assert len(body["boxes"][0]) == 4
    assert 0.0 <= body["auc"] <= 1.0


def test_track_sequence_dir_and_outputs(client, sequence_dir, tmp_path):
    out = tmp_path / "api-out"
    response = client.post("/api/track", json={
        "sequence_dir": str(sequence_dir),
        "config_overrides": {"scale.num_scales": "3"},
        "out_dir": str(out),
    })
    assert response.status_code == 200
    assert response.json()["name"] == "blob"
    assert (out / "metrics.json").is_file()
    assert (out / "run_config.env").is_file()


def test_track_errors(client, tmp_path):
    bad_key = client.post("/api/track", json={"config_overrides": {"solver.bogus": "1"}})
    assert bad_key.status_code == 422
    assert bad_key.json()["detail"]["key"] == "solver.bogus"

    missing = client.post("/api/track", json={"sequence_dir": str(tmp_path / "nowhere")})
    assert missing.status_code == 400


def test_synth(client, tmp_path):
    response = client.post("/api/synth", json={
        "out_dir": str(tmp_path / "seq"),
        "seed": 2,
        "overrides": {"synthetic.frames": "4", "synthetic.occluded_frames": "2"},
    })
    assert response.status_code == 200
    body = response.json()
    assert body["frames"] == 4
    assert body["occluded_frames"] == [2]
    assert (tmp_path / "seq" / "0004.png").is_file()


def test_selftest_endpoint(client):
    response = client.get("/api/selftest", params={"suite": ["consensus-formula"]})
    assert response.status_code == 200
    body = response.json()
    assert body["passed"] is True
    assert [s["name"] for s in body["suites"]] == ["consensus-formula"]

    assert client.get("/api/selftest", params={"suite": ["nope"]}).status_code == 404


def test_run_history(client, tmp_path):
    client.post("/api/synth", json={"out_dir": str(tmp_path / "s"), "overrides": {"synthetic.frames": "2"}})
    client.post("/api/track", json={"config_overrides": SHORT})
    runs = client.get("/api/runs").json()
    assert runs["total"] == 2
    assert [r["kind"] for r in runs["runs"]] == ["synth", "track"]
    assert runs["runs"][1]["id"] == 2

    assert client.delete("/api/runs").status_code == 200
    assert client.get("/api/runs").json()["total"] == 0
