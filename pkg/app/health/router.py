from pathlib import Path

from fastapi import APIRouter, Request

from app.config.config import settings

router = APIRouter(prefix="/health")


# Do not remove - used for health checks
@router.get("/")
async def health(request: Request):
    """Liveness plus whether the runs directory and profile cache are in place."""
    runs_dir = Path(getattr(request.app.state, "runs_dir", settings.runs_dir))
    return {
        "status": "ok",
        "runs_dir_ready": runs_dir.is_dir(),
        "profile_cache_ready": settings.cache_dir.is_dir(),
    }
