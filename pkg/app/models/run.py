"""Run configuration and run summary models."""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1


class Experiment(str, Enum):
    """Canonical experiments a run can execute."""
    GROUND_STATE = "ground_state"
    EXACT_SOLITON = "exact_soliton"
    PSEUDOCONFORMAL = "pseudoconformal"
    THRESHOLD_SWEEP = "threshold_sweep"
    ROUGH_CHECK = "rough_check"
    MODULATION_TRACK = "modulation_track"
    EVOLVE = "evolve"


class RunStatus(str, Enum):
    """Outcome of a run."""
    RUNNING = "running"
    PASSED = "passed"
    FAILED = "failed"
    ERROR = "error"


class RunConfig(BaseModel):
    """One run: experiment choice plus grid, solver and noise parameters."""
    experiment: Experiment
    dim: Literal[1, 2] = 1
    n: int = Field(default=1024, description="Points per axis")
    L: float = Field(default=30.0, gt=0, description="Half box length")
    T: float = Field(default=1.0, gt=0, description="Blow-up time of S_T, or the time horizon")
    t_end: Optional[float] = Field(default=None, gt=0)
    dt0: float = Field(default=1e-2, gt=0)
    adaptive: bool = True
    seed: int = Field(default=0, ge=0)
    noise_modes: int = Field(default=0, ge=0, description="Number of noise modes; 0 disables noise")
    noise_amp: float = 0.0
    noise_width: float = Field(default=1.0, gt=0)
    mesh_steps: int = Field(default=256, ge=2, description="Brownian mesh cells over [0, t_end]")
    substeps: Optional[int] = Field(default=None, ge=1)
    init: Literal["gaussian", "ground", "ST"] = "ground"
    mass_ratio: float = Field(default=1.0, gt=0)
    mass_ratios: List[float] = Field(default_factory=lambda: [0.8, 0.9, 0.95, 1.0])
    ensemble_size: Optional[int] = Field(default=None, ge=1, description="Noise seeds per mass ratio; 10 when unset")
    snapshots: int = Field(default=0, ge=0, description="Equispaced snapshots to store")
    refinement_levels: int = Field(default=3, ge=2)
    cutoff_scale: float = Field(default=10.0, gt=0)
    pinit: Optional[str] = None
    input: Optional[str] = Field(default=None, description="Snapshot file or directory")
    lift_input: Optional[str] = Field(default=None, description="Stored lift.bin that replaces the sampled lift")
    output_dir: str = "out"

    model_config = ConfigDict(extra="forbid")

    @field_validator("mass_ratios")
    @classmethod
    def _positive_ratios(cls, value: List[float]) -> List[float]:
        if not value or any(r <= 0 for r in value):
            raise ValueError("mass_ratios must be a non-empty list of positive numbers")
        return value

    @model_validator(mode="after")
    def _check_references(self) -> "RunConfig":
        for name in ("input", "lift_input"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ValueError(f"{name} {value} does not exist")
        return self

    @property
    def horizon(self) -> float:
        return self.t_end if self.t_end is not None else self.T

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        """Parse a flat key-value YAML mapping.

        Raises:
            ValueError: If the document is not a flat mapping or fails validation
        """
        data = yaml.safe_load(text)
        if not isinstance(data, dict):
            raise ValueError("run config must be a key-value mapping")
        nested = [key for key, value in data.items() if isinstance(value, dict)]
        if nested:
            raise ValueError(f"run config must be flat; nested keys: {nested}")
        return cls.model_validate(data)


class CheckResult(BaseModel):
    """One acceptance check of a run."""
    name: str
    value: Optional[float]
    threshold: Optional[float]
    passed: bool


class RunSummary(BaseModel):
    """Contents of summary.json."""
    schema_version: int = SCHEMA_VERSION
    experiment: Experiment
    status: RunStatus
    checks: List[CheckResult] = Field(default_factory=list)
    results: Dict[str, Union[float, int, str, bool, None, List[Any]]] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status == RunStatus.PASSED


class RunRecord(BaseModel):
    """Listing entry for a run directory."""
    run_id: str
    status: RunStatus
    experiment: Optional[Experiment] = None


class RunDetail(RunRecord):
    """A run with its summary once it has finished."""
    summary: Optional[RunSummary] = None
