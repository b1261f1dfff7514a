"""Shared fixtures: grids, solved profiles and the FastAPI test clients."""
import pytest
from httpx import ASGITransport, AsyncClient

from app.main import app
from app.models.grid import Grid
from app.numerics.profiles import solve_ground_state, solve_rho
from app.repositories.run_repo import RunRepository
from app.repositories.snapshot_repo import ProfileCache


@pytest.fixture(scope="session")
def grid_1d() -> Grid:
    """Resolves Q in d = 1 with room for S_T down to lambda = 0.5."""
    return Grid(dim=1, n=512, half_length=20.0)


@pytest.fixture(scope="session")
def grid_2d() -> Grid:
    return Grid(dim=2, n=256, half_length=12.0)


@pytest.fixture(scope="session")
def ground_1d(grid_1d):
    return solve_ground_state(1, grid_1d)


@pytest.fixture(scope="session")
def rho_1d(ground_1d):
    return solve_rho(ground_1d)


@pytest.fixture(scope="session")
def ground_2d(grid_2d):
    return solve_ground_state(2, grid_2d)


@pytest.fixture(scope="session")
def rho_2d(ground_2d):
    return solve_rho(ground_2d)


@pytest.fixture
def profile_cache(tmp_path, ground_1d, rho_1d) -> ProfileCache:
    """Profile cache in a temporary directory, pre-seeded with the 1D profiles."""
    cache = ProfileCache(tmp_path / "cache")
    cache.save_ground_state(ground_1d)
    cache.save_rho(rho_1d)
    return cache


@pytest.fixture
def run_repo(tmp_path) -> RunRepository:
    return RunRepository(tmp_path / "runs")


@pytest.fixture(autouse=True)
async def reset_app_state():
    """Reset application state before each test."""
    app.dependency_overrides = {}
    yield
    app.dependency_overrides = {}


@pytest.fixture
async def async_client(tmp_path):
    """Create an async test client for the FastAPI application.

    Uses ASGITransport to make requests directly to the FastAPI app
    without making real HTTP calls.
    """
    app.state.runs_dir = tmp_path / "runs"
    async with AsyncClient(
        transport=ASGITransport(app=app),
        base_url="http://test"
    ) as ac:
        yield ac
