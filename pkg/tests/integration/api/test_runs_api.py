"""Integration tests for the run endpoints.

Runs are started in child processes by the service; these tests replace the
process class so no experiment actually executes."""
from unittest.mock import MagicMock, patch

import pytest
from fastapi import status

from app.models.run import Experiment, RunStatus, RunSummary
from app.repositories.run_repo import RunRepository


@pytest.fixture
def mock_process():
    """Replace the background process used to start runs."""
    with patch("app.services.experiment_service.Process") as process_cls:
        process_cls.return_value = MagicMock()
        yield process_cls


@pytest.fixture
def runs(tmp_path) -> RunRepository:
    return RunRepository(tmp_path / "runs")


async def test_create_run_starts_background_process(async_client, mock_process, runs):
    # Given
    payload = {"experiment": "pseudoconformal", "n": 1024, "L": 30.0}

    # When
    response = await async_client.post("/api/v1/runs", json=payload)

    # Then
    assert response.status_code == status.HTTP_201_CREATED
    body = response.json()
    assert body["status"] == "running"
    assert body["experiment"] == "pseudoconformal"
    assert body["run_id"].startswith("pseudoconformal-")
    assert (runs.root / body["run_id"]).is_dir()
    mock_process.return_value.start.assert_called_once()
    _, kwargs = mock_process.call_args
    assert kwargs["args"][1] == str(runs.root / body["run_id"])


@pytest.mark.parametrize("payload", [
    {"experiment": "no_such_experiment"},
    {"experiment": "ground_state", "resolution": 3},
    {"experiment": "ground_state", "L": -1.0},
    {"experiment": "modulation_track", "input": "/does/not/exist.rnls"},
])
async def test_create_run_rejects_invalid_config(async_client, mock_process, payload):
    # When
    response = await async_client.post("/api/v1/runs", json=payload)

    # Then
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY
    mock_process.assert_not_called()


async def test_list_runs(async_client, runs):
    # Given
    runs.create("b-pending")
    done = runs.create("a-done")
    runs.write_summary(done, RunSummary(experiment=Experiment.GROUND_STATE, status=RunStatus.PASSED))

    # When
    response = await async_client.get("/api/v1/runs")

    # Then
    assert response.status_code == status.HTTP_200_OK
    assert response.json() == [
        {"run_id": "a-done", "status": "passed", "experiment": "ground_state"},
        {"run_id": "b-pending", "status": "running", "experiment": None},
    ]


async def test_list_runs_empty(async_client):
    response = await async_client.get("/api/v1/runs")
    assert response.status_code == status.HTTP_200_OK
    assert response.json() == []


async def test_get_run_with_summary(async_client, runs):
    # Given
    path = runs.create("rough-1")
    runs.write_summary(path, RunSummary(experiment=Experiment.ROUGH_CHECK, status=RunStatus.FAILED,
                                        results={"rate_estimate": 0.2}))

    # When
    response = await async_client.get("/api/v1/runs/rough-1")

    # Then
    assert response.status_code == status.HTTP_200_OK
    body = response.json()
    assert body["status"] == "failed"
    assert body["summary"]["results"]["rate_estimate"] == 0.2


async def test_get_running_run(async_client, runs):
    # Given
    runs.create("still-going")

    # When
    response = await async_client.get("/api/v1/runs/still-going")

    # Then
    assert response.status_code == status.HTTP_200_OK
    assert response.json()["status"] == "running"
    assert response.json()["summary"] is None


async def test_get_run_not_found(async_client):
    response = await async_client.get("/api/v1/runs/missing")
    assert response.status_code == status.HTTP_404_NOT_FOUND


async def test_get_run_invalid_id(async_client):
    response = await async_client.get("/api/v1/runs/bad!id")
    assert response.status_code == status.HTTP_400_BAD_REQUEST


async def test_get_run_with_corrupt_summary(async_client, runs):
    # Given
    path = runs.create("corrupt")
    (path / "summary.json").write_text("[]")

    # When
    response = await async_client.get("/api/v1/runs/corrupt")

    # Then
    assert response.status_code == status.HTTP_500_INTERNAL_SERVER_ERROR


async def test_health_reports_runs_directory(async_client, runs):
    # Given
    runs.root.mkdir(parents=True)

    # When
    response = await async_client.get("/health/")

    # Then
    assert response.status_code == status.HTTP_200_OK
    assert response.json()["status"] == "ok"
    assert response.json()["runs_dir_ready"] is True
