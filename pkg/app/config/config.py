"""Configuration management for the lab."""
from pathlib import Path
from typing import Literal

from pydantic import ConfigDict
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings."""
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"

    # Storage
    RNLS_CACHE: str = ".rnls_cache"
    RUNS_DIR: str = "runs"

    # Execution
    MAX_WORKERS: int = 1
    METRICS_ENABLED: bool = False

    # Numerical defaults
    GROUND_STATE_TOL: float = 1e-11
    GROUND_STATE_MAX_ITER: int = 4000
    RHO_TOL: float = 1e-10
    BROWNIAN_SUBSTEPS: int = 64
    HOLDER_ALPHA: float = 0.4
    DT_SAFETY: float = 0.1
    RESOLUTION_FACTOR: float = 8.0
    BLOWUP_CAP_FACTOR: float = 1e3
    NEWTON_MAX_ITER: int = 25

    @property
    def cache_dir(self) -> Path:
        """Directory holding cached ground states and rho profiles."""
        return Path(self.RNLS_CACHE)

    @property
    def runs_dir(self) -> Path:
        """Root directory for runs launched through the API."""
        return Path(self.RUNS_DIR)

    model_config = ConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True
    )


settings = Settings()
