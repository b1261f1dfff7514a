"""Controlled paths and weak-form residual reports."""
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config.config import settings


class ControlledPath(BaseModel):
    """Path Y controlled by B with Gubinelli derivative Y'.

    Y has shape (N, M+1) and Yprime shape (N, N, M+1); entries may be
    complex since the weak-form integrands are complex.
    """
    mesh: np.ndarray
    Y: np.ndarray
    Yprime: np.ndarray
    holder_alpha: float = Field(default_factory=lambda: settings.HOLDER_ALPHA)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("mesh", mode="before")
    @classmethod
    def _as_mesh(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @field_validator("Y", "Yprime", mode="before")
    @classmethod
    def _as_array(cls, value) -> np.ndarray:
        array = np.asarray(value)
        if not np.iscomplexobj(array):
            array = array.astype(np.float64)
        return array

    @field_validator("holder_alpha")
    @classmethod
    def _alpha_range(cls, value: float) -> float:
        if not 1.0 / 3.0 < value < 0.5:
            raise ValueError(f"holder_alpha must lie in (1/3, 1/2), got {value}")
        return value

    @model_validator(mode="after")
    def _check_shapes(self) -> "ControlledPath":
        steps = self.mesh.size
        n_modes = self.Y.shape[0]
        if self.Y.shape != (n_modes, steps):
            raise ValueError(f"Y must have shape (N, {steps}), got {self.Y.shape}")
        if self.Yprime.shape != (n_modes, n_modes, steps):
            raise ValueError(f"Yprime must have shape ({n_modes}, {n_modes}, {steps}), got {self.Yprime.shape}")
        return self

    @property
    def N(self) -> int:
        return self.Y.shape[0]


class RoughResidualReport(BaseModel):
    """Both sides of the weak rough-solution identity on one interval."""
    lhs: complex
    rhs: complex
    residual: float
    mesh: float = Field(description="Largest mesh step used")
    rate_estimate: Optional[float] = None
    components: Dict[str, complex] = Field(default_factory=dict)
    refinement_steps: List[float] = Field(default_factory=list)
    refinement_residuals: List[float] = Field(default_factory=list)

    def to_json_dict(self) -> dict:
        """Plain JSON view: complex values become [re, im] pairs."""
        pair = lambda z: [float(np.real(z)), float(np.imag(z))]
        return {
            "lhs": pair(self.lhs),
            "rhs": pair(self.rhs),
            "residual": self.residual,
            "mesh": self.mesh,
            "rate_estimate": self.rate_estimate,
            "components": {k: pair(v) for k, v in sorted(self.components.items())},
            "refinement_steps": self.refinement_steps,
            "refinement_residuals": self.refinement_residuals,
        }
