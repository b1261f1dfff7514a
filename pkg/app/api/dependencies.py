"""FastAPI dependency injection."""

from fastapi import Depends, Request

from app.repositories.run_repo import RunRepository
from app.repositories.snapshot_repo import ProfileCache
from app.services.experiment_service import ExperimentService


async def get_run_repo(request: Request) -> RunRepository:
    """Get run repository rooted at the app's runs directory."""
    return RunRepository(request.app.state.runs_dir)


async def get_profile_cache() -> ProfileCache:
    """Get the on-disk profile cache."""
    return ProfileCache()


async def get_experiment_service(
    repo: RunRepository = Depends(get_run_repo),
    cache: ProfileCache = Depends(get_profile_cache)
) -> ExperimentService:
    """Get experiment service instance."""
    return ExperimentService(repo, cache)
