"""Profile models: ground state, rho and modulation parameters."""
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.models.grid import Field as GridField

PETVIASHVILI_BURN_IN = 5


class GroundState(BaseModel):
    """Positive radial solution of lap Q - Q + Q^(1+4/d) = 0."""
    Q: GridField
    residual: float
    d: int
    iterations: int = 0
    residual_history: List[float] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)

    @property
    def grid(self):
        return self.Q.grid

    @property
    def values(self) -> np.ndarray:
        return self.Q.values.real

    def residual_rises(self, burn_in: int = PETVIASHVILI_BURN_IN) -> List[int]:
        """Iterations after the first `burn_in` where the residual went up."""
        h = self.residual_history
        return [k + 1 for k in range(max(burn_in, 1), len(h)) if h[k] > h[k - 1]]


class RhoProfile(BaseModel):
    """Even solution of L+ rho = -|x|^2 Q."""
    rho: GridField
    residual: float
    decay_rate: float = Field(description="Fitted exponential decay rate of |rho|")
    iterations: int = 0
    residual_history: List[float] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)

    @property
    def values(self) -> np.ndarray:
        return self.rho.values.real


class ModParams(BaseModel):
    """Modulation parameters (lambda, alpha, beta, gamma, theta)."""
    lam: float = Field(gt=0, description="Scale lambda")
    alpha: List[float] = Field(description="Translation, one entry per axis")
    beta: List[float] = Field(description="Galilean frequency, one entry per axis")
    gamma: float = Field(description="Chirp")
    theta: float = Field(description="Phase")

    model_config = ConfigDict(frozen=True)

    @field_validator("lam", "gamma", "theta")
    @classmethod
    def _finite_scalar(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("modulation parameters must be finite")
        return float(value)

    @field_validator("alpha", "beta")
    @classmethod
    def _finite_vector(cls, value: Sequence[float]) -> List[float]:
        if not all(np.isfinite(v) for v in value):
            raise ValueError("modulation parameters must be finite")
        return [float(v) for v in value]

    @property
    def dim(self) -> int:
        return len(self.alpha)

    def to_vector(self) -> np.ndarray:
        """Flatten as (lambda, alpha..., beta..., gamma, theta)."""
        return np.array([self.lam, *self.alpha, *self.beta, self.gamma, self.theta])

    @classmethod
    def from_vector(cls, vector: Sequence[float], dim: int) -> "ModParams":
        v = [float(x) for x in vector]
        if len(v) != 2 * dim + 3:
            raise ValueError(f"expected {2 * dim + 3} entries, got {len(v)}")
        return cls(lam=v[0], alpha=v[1:1 + dim], beta=v[1 + dim:1 + 2 * dim],
                   gamma=v[1 + 2 * dim], theta=v[2 + 2 * dim])

    @classmethod
    def identity(cls, dim: int) -> "ModParams":
        return cls(lam=1.0, alpha=[0.0] * dim, beta=[0.0] * dim, gamma=0.0, theta=0.0)

    @classmethod
    def pseudo_conformal(cls, T: float, t: float, dim: int) -> "ModParams":
        """Parameters of S_T(t): (T-t, 0, 0, T-t, 1/(T-t))."""
        s = T - t
        return cls(lam=s, alpha=[0.0] * dim, beta=[0.0] * dim, gamma=s, theta=1.0 / s)

    @classmethod
    def parse(cls, text: str, dim: int) -> "ModParams":
        """Parse "lambda,alpha_x[,alpha_y],beta_x[,beta_y],gamma,theta"."""
        return cls.from_vector([float(tok) for tok in text.split(",")], dim)


class ProfileNorms(BaseModel):
    """Norms of the ground state that enter the blow-up oracles."""
    mass: float = Field(description="||Q||_2^2")
    grad_sq: float = Field(description="||grad Q||_2^2")
    weighted_sq: float = Field(description="||y Q||_2^2")
    energy: float

    @property
    def grad_norm(self) -> float:
        return float(np.sqrt(self.grad_sq))


class RadialShooting(BaseModel):
    """Ground state values from shooting the radial ODE in r."""
    Q0: float = Field(description="Q(0) found by bisection")
    mass: float = Field(description="||Q||_2^2 integrated along the shot")
    r_max: float = Field(description="Radius where the bracketing shot left Q")
    bisections: int
