import pytest
from fastapi.testclient import TestClient

from api.main import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as client:
        yield client


def test_root(client):
    response = client.get("/")
    assert response.status_code == 200
    assert set(response.json()["endpoints"]) == {"constants", "family", "kernels", "build", "verify"}


def test_health(client):
    data = client.get("/health").json()
    assert data["status"] == "healthy"
    assert data["constants_loaded"]


def test_constants(client):
    data = client.get("/constants").json()
    assert round(data["r_crit"], 3) == 0.460
    assert all(value > 0 for value in data["margins"].values())


def test_family(client):
    response = client.get("/family", params={"num": 5})
    assert response.status_code == 200
    rows = response.json()
    assert len(rows) == 5
    assert rows[0]["r_theta"] == pytest.approx(1.0, abs=1e-6)


def test_family_rejects_grid_size(client):
    assert client.get("/family", params={"num": 1}).status_code == 400


def test_family_out_of_range(client):
    response = client.get("/family", params={"start": 0.0, "stop": 2.0, "num": 3})
    assert response.status_code == 400


def test_kernels(client):
    data = client.get("/kernels", params={"n_max": 4}).json()
    assert len(data["rows"]) == 15
    assert data["min_margin"] >= 0.01
    assert client.get("/kernels", params={"n_max": -1}).status_code == 400


def test_build(client):
    response = client.post("/build", json={"m": 3, "res": 4})
    assert response.status_code == 200
    data = response.json()
    assert data["euler_characteristic"] == -5
    assert data["genus"] == 2
    assert data["boundary_loops"] == 3


def test_build_rejects_small_m(client):
    assert client.post("/build", json={"m": 2, "res": 4}).status_code == 422


def test_verify(client):
    response = client.post("/verify", json={"m": 3, "res": 4})
    assert response.status_code == 200
    data = response.json()
    assert data["self_intersections"] == 0
    assert data["sphere_deviation"] <= 1e-9
