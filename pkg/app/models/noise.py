"""Noise basis and Brownian rough-path lift models."""
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.grid import Field as GridField
from app.models.grid import Grid


class BasisKind(str, Enum):
    """Built-in noise basis families."""
    FLAT_POLY_GAUSS = "flat_poly_gauss"
    CUSTOM = "custom"


class NoiseSpec(BaseModel):
    """Basis description as given in a run config."""
    kind: BasisKind = BasisKind.FLAT_POLY_GAUSS
    N: int = Field(ge=1, description="Number of noise modes")
    amplitudes: List[float]
    widths: Optional[List[float]] = Field(default=None, description="Gaussian widths sigma_k, default 1")

    @model_validator(mode="after")
    def _lengths_match(self) -> "NoiseSpec":
        if len(self.amplitudes) != self.N:
            raise ValueError(f"expected {self.N} amplitudes, got {len(self.amplitudes)}")
        if self.widths is not None:
            if len(self.widths) != self.N:
                raise ValueError(f"expected {self.N} widths, got {len(self.widths)}")
            if any(w <= 0 for w in self.widths):
                raise ValueError("widths must be positive")
        return self

    def resolved_widths(self) -> List[float]:
        return list(self.widths) if self.widths is not None else [1.0] * self.N


def _read_only(value: np.ndarray) -> np.ndarray:
    array = np.array(value, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


class NoiseBasis(BaseModel):
    """Real spatial modes phi_k with their precomputed derivatives.

    Arrays carry the mode index first: phi (N, *shape), grad (N, d, *shape),
    hess (N, d, d, *shape), lap and bilap (N, *shape).
    """
    grid: Grid
    phi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    lap: np.ndarray
    bilap: np.ndarray
    spec: Optional[NoiseSpec] = None

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("phi", "grad", "hess", "lap", "bilap", mode="before")
    @classmethod
    def _as_real_array(cls, value) -> np.ndarray:
        return _read_only(value)

    @property
    def N(self) -> int:
        return self.phi.shape[0]

    @property
    def phi_fields(self) -> List[GridField]:
        return [GridField(grid=self.grid, values=p) for p in self.phi]

    @property
    def mu_values(self) -> np.ndarray:
        """mu = 1/2 sum_k phi_k^2."""
        return 0.5 * np.sum(self.phi ** 2, axis=0)


class NoiseFields(BaseModel):
    """Coefficient fields of the gauge-transformed equation at one time."""
    W: GridField
    b: List[GridField]
    c: GridField
    mu: GridField


class BrownianLift(BaseModel):
    """N-dimensional Brownian path on a mesh with its iterated integrals.

    B has shape (N, M+1) with B[:, 0] = 0; Bb has shape (N, N, M) and holds
    the iterated integral over each mesh cell.
    """
    mesh: np.ndarray
    B: np.ndarray
    Bb: np.ndarray
    seed: int = 0
    substeps: int = Field(default=1, ge=1)
    path: int = Field(default=0, ge=0)

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("mesh", "B", "Bb", mode="before")
    @classmethod
    def _as_real_array(cls, value) -> np.ndarray:
        return _read_only(value)

    @model_validator(mode="after")
    def _check_layout(self) -> "BrownianLift":
        if self.mesh.ndim != 1 or self.mesh.size < 2 or np.any(np.diff(self.mesh) <= 0):
            raise ValueError("mesh must be a strictly increasing array of at least two times")
        n_modes, m_cells = self.B.shape[0], self.mesh.size - 1
        if self.B.shape != (n_modes, m_cells + 1):
            raise ValueError(f"B must have shape (N, {m_cells + 1}), got {self.B.shape}")
        if self.Bb.shape != (n_modes, n_modes, m_cells):
            raise ValueError(f"Bb must have shape ({n_modes}, {n_modes}, {m_cells}), got {self.Bb.shape}")
        if np.any(self.B[:, 0] != 0):
            raise ValueError("Brownian paths must start at zero")
        return self

    @property
    def N(self) -> int:
        return self.B.shape[0]

    @property
    def M(self) -> int:
        return self.mesh.size - 1

    @property
    def increments(self) -> np.ndarray:
        """dB over each cell, shape (N, M)."""
        return np.diff(self.B, axis=1)

    def path_at(self, t: float) -> np.ndarray:
        """B(t) by linear interpolation between mesh points."""
        if t < self.mesh[0] - 1e-12 or t > self.mesh[-1] + 1e-12:
            raise ValueError(f"t={t} lies outside the lift mesh [{self.mesh[0]}, {self.mesh[-1]}]")
        return np.array([np.interp(t, self.mesh, row) for row in self.B])

    def over(self, s_index: int, t_index: int) -> Tuple[np.ndarray, np.ndarray]:
        """(dB_st, Bb_st) on [t_s, t_t], composed cell by cell with the Chen relation."""
        if not 0 <= s_index <= t_index <= self.M:
            raise ValueError(f"invalid mesh interval [{s_index}, {t_index}] for M={self.M}")
        increment = np.zeros(self.N)
        area = np.zeros((self.N, self.N))
        dB = self.increments
        for i in range(s_index, t_index):
            area = area + self.Bb[:, :, i] + np.outer(increment, dB[:, i])
            increment = increment + dB[:, i]
        return increment, area

    def coarsen(self, factor: int) -> "BrownianLift":
        """Lift on every `factor`-th mesh point."""
        if factor < 1 or self.M % factor:
            raise ValueError(f"factor {factor} does not divide the {self.M} mesh cells")
        cells = [self.over(i, i + factor)[1] for i in range(0, self.M, factor)]
        return BrownianLift(mesh=self.mesh[::factor], B=self.B[:, ::factor],
                            Bb=np.stack(cells, axis=-1), seed=self.seed,
                            substeps=self.substeps * factor, path=self.path)

    def same_mesh(self, mesh: np.ndarray) -> bool:
        return mesh.shape == self.mesh.shape and bool(np.allclose(mesh, self.mesh, rtol=0, atol=1e-14))
