"""Main FastAPI application."""

from contextlib import asynccontextmanager

from aws_embedded_metrics.config import get_config
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.api.v1 import runs
from app.common.logging import configure_logging, get_logger
from app.config.config import settings
from app.health import router as health_router

Confg = get_config()

configure_logging()
logger = get_logger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifespan context manager that prepares the runs directory."""
    settings.runs_dir.mkdir(parents=True, exist_ok=True)
    app.state.runs_dir = settings.runs_dir
    logger.info(f"Runs directory: {settings.runs_dir}")
    logger.info(f"EMF Environment: {Confg.environment}")
    logger.info(f"EMF Service Name: {Confg.service_name}")
    yield


app = FastAPI(
    title="Rough NLS Lab API",
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(runs.router, prefix="/api/v1", tags=["Runs"])
app.include_router(health_router.router)


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy"}
