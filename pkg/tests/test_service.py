import numpy as np
import pytest
from fastapi.testclient import TestClient
from numpy.testing import assert_allclose

from mvela.problem import SuiteConfig, SuiteTemplate, evaluate_relaxed, generate_synthetic_suite
from mvela.service import create_app

from .test_pipeline import small_config


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_suite_and_evaluate_round_trip(client):
    suite_cfg = {"templates": [{"n_continuous": 1, "n_integer": 1, "n_categorical": 1, "count": 2, "hierarchical": False}]}
    manifest = client.post("/suite", json={"suite": suite_cfg, "seed": 9}).json()["manifest"]
    assert len(manifest["problems"]) == 2

    local = generate_synthetic_suite(SuiteConfig.from_dict(suite_cfg), 9)[0]
    point = {"x0": 0.5, "z0": local.variable("z0").lower, "c0": local.variable("c0").categories[0]}
    response = client.post(
        "/problems/evaluate",
        json={"manifest_entry": manifest["problems"][0], "point": point},
    )
    assert response.status_code == 200
    assert_allclose(response.json()["value"], evaluate_relaxed(local, point))


def test_encode_endpoint_target_hand_example(client):
    request = {
        "columns": [{"name": "c", "kind": "categorical", "levels": ["a", "b"]}],
        "rows": [["a"], ["b"]],
        "objective": [0.0, 1.0],
        "method": "target",
        "normalize": False,
        "encoder": {"te_weight": 10.0},
    }
    body = client.post("/encode", json=request).json()
    assert_allclose(body["rows"][0][0], (1 / 11) * 0.0 + (10 / 11) * 0.5, atol=1e-12)
    assert body["encoding_tag"] == "target"


def test_encode_endpoint_unknown_method_is_400(client):
    request = {
        "columns": [{"name": "x", "kind": "continuous"}],
        "rows": [[0.1], [0.2]],
        "objective": [0.0, 1.0],
        "method": "nope",
    }
    assert client.post("/encode", json=request).status_code == 400


def test_features_endpoint(client):
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(80, 2))
    y = ((X - 0.5) ** 2).sum(axis=1)
    request = {
        "feature_names": ["x0", "x1"],
        "rows": X.tolist(),
        "objective": (y / y.max()).tolist(),
        "encoding_tag": "target",
        "seed": 4,
    }
    body = client.post("/features", json=request).json()
    assert len(body["values"]) == 38
    assert all(np.isfinite(body["values"]))


def test_pipeline_endpoints(client, tmp_path):
    config = small_config(seed=23).to_dict()
    out = str(tmp_path / "svc_run")

    status = client.post("/pipeline/status", json={"config": config, "out_dir": out}).json()
    assert set(status["stages"].values()) == {"missing"}

    run = client.post(
        "/pipeline/run",
        json={"config": config, "out_dir": out, "stages": ["suite", "sample"], "jobs": 1},
    )
    assert run.status_code == 200
    assert run.json()["executed"] == ["suite", "sample"]

    again = client.post(
        "/pipeline/run",
        json={"config": config, "out_dir": out, "stages": ["suite"], "jobs": 1},
    )
    assert again.json()["skipped"] == ["suite"]

    broken = client.post(
        "/pipeline/run",
        json={"config": config, "out_dir": out, "stages": ["features"], "jobs": 1},
    )
    assert broken.status_code == 409
    assert "encode" in broken.json()["detail"]
    assert broken.json()["stage"] == "features"
