"""Solver configuration and trajectory records."""
import bisect
from enum import Enum
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config.config import settings
from app.models.grid import Field as GridField


class TrajectoryStatus(str, Enum):
    """How a trajectory ended."""
    COMPLETED = "completed"
    BLOWUP_DETECTED = "blowup_detected"
    RESOLUTION_EXHAUSTED = "resolution_exhausted"


class GaugeDirection(str, Enum):
    TO_X = "to_X"
    TO_U = "to_u"


class SolverConfig(BaseModel):
    """Time-stepping configuration.

    With adaptive stepping dt = c * min(dt0, 1/||grad u||^2), floored at
    dt_min; otherwise dt = dt0.
    """
    dt0: float = Field(default=1e-2, gt=0)
    adaptive: bool = True
    safety: float = Field(default_factory=lambda: settings.DT_SAFETY, gt=0)
    dt_min: float = Field(default=1e-9, gt=0)
    t_end: float = Field(gt=0)
    blowup_gradnorm_cap: Optional[float] = Field(default=None, gt=0)
    resolution_factor: float = Field(default_factory=lambda: settings.RESOLUTION_FACTOR, gt=0)
    scheme: Literal["strang_gauge"] = "strang_gauge"
    snapshot_times: List[float] = Field(default_factory=list)
    snapshot_every_step: bool = False

    @model_validator(mode="after")
    def _check_snapshots(self) -> "SolverConfig":
        if any(s < 0 or s > self.t_end for s in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, t_end]")
        return self


class TrajectoryRecord(BaseModel):
    """Per-step diagnostics of one trajectory; index 0 is the initial state."""
    times: List[float] = Field(default_factory=list)
    dt: List[float] = Field(default_factory=list)
    mass: List[float] = Field(default_factory=list)
    energy: List[float] = Field(default_factory=list)
    momentum: List[List[float]] = Field(default_factory=list)
    gradnorm: List[float] = Field(default_factory=list)
    gn_satisfied: List[bool] = Field(default_factory=list)
    lambda_est: List[float] = Field(default_factory=list)
    status: TrajectoryStatus = TrajectoryStatus.COMPLETED
    tau_star_estimate: Optional[float] = None
    blowup_gradnorm_cap: Optional[float] = None
    snapshot_times: List[float] = Field(default_factory=list)
    snapshots: List[GridField] = Field(default_factory=list, exclude=True)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def append(self, t: float, dt: float, mass: float, energy: float, momentum: np.ndarray,
               gradnorm: float, gn_satisfied: bool, lambda_est: float) -> None:
        self.times.append(float(t))
        self.dt.append(float(dt))
        self.mass.append(float(mass))
        self.energy.append(float(energy))
        self.momentum.append([float(p) for p in momentum])
        self.gradnorm.append(float(gradnorm))
        self.gn_satisfied.append(bool(gn_satisfied))
        self.lambda_est.append(float(lambda_est))

    @property
    def final_time(self) -> float:
        return self.times[-1]

    def max_mass_drift(self) -> float:
        """Largest relative mass change between consecutive steps."""
        mass = np.asarray(self.mass)
        if mass.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(mass))) / mass[0])

    def max_gradnorm_over_running_median(self) -> float:
        """max_k ||grad u(t_k)|| / median(||grad u(t_0)||, ..., ||grad u(t_k)||)."""
        seen: List[float] = []
        worst = 0.0
        for g in self.gradnorm:
            bisect.insort(seen, g)
            mid = len(seen) // 2
            median = seen[mid] if len(seen) % 2 else 0.5 * (seen[mid - 1] + seen[mid])
            if median > 0:
                worst = max(worst, g / median)
        return worst

    def lambda_band_ok(self, T: float, lower: float = 0.5, upper: float = 3.0) -> bool:
        """lower (T - t) <= lambda_est(t) <= upper (T - t) on every sample before T."""
        times = np.asarray(self.times)
        lam = np.asarray(self.lambda_est)
        before = times < T
        gap = T - times[before]
        return bool(np.all((lam[before] >= lower * gap) & (lam[before] <= upper * gap)))

    def csv_rows(self) -> List[List[float]]:
        """Rows t, dt, mass, energy, momentum..., gradnorm."""
        return [
            [t, dt, m, e, *p, g]
            for t, dt, m, e, p, g in zip(self.times, self.dt, self.mass, self.energy, self.momentum, self.gradnorm)
        ]

    def csv_header(self) -> List[str]:
        axes = ["px", "py"][:len(self.momentum[0])] if self.momentum else ["px"]
        return ["t", "dt", "mass", "energy", *axes, "gradnorm"]


class EnergyAuditReport(BaseModel):
    """Measured energy change against the time-integrated drift rate."""
    times: List[float]
    measured: List[float] = Field(description="E(u(t)) - E(u(t0))")
    predicted: List[float] = Field(description="Time integral of the expanded drift rate")
    predicted_direct: List[float] = Field(description="Time integral of the unexpanded drift rate")
    absolute_mismatch: float
    relative_mismatch: float
    zero_noise: bool
