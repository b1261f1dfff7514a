"""Results of the geometrical decomposition and modulation diagnostics."""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from app.models.grid import Field as GridField
from app.models.profile import ModParams


class DecompositionResult(BaseModel):
    """u = deformed_profile(Q, P) + R with R satisfying the orthogonality conditions."""
    P: ModParams
    epsilon: GridField = Field(description="Remainder in rescaled variables")
    R: GridField = Field(description="Remainder in lab variables")
    w: GridField = Field(description="Deformed profile")
    ortho_residuals: List[float]
    newton_iters: int
    residual_history: List[float] = Field(default_factory=list)
    jacobian_condition: Optional[float] = None

    @property
    def max_residual(self) -> float:
        return max(abs(r) for r in self.ortho_residuals)


class ModVectorSample(BaseModel):
    """Residual of the leading-order modulation system at one time."""
    t: float
    Mod: float = Field(ge=0)
    components: List[float] = Field(description="The five absolute residuals")
    P_dot: List[float] = Field(description="Parameter rates in (lambda, alpha, beta, gamma, theta) order")

    @model_validator(mode="after")
    def _sum_matches(self) -> "ModVectorSample":
        if len(self.components) != 5:
            raise ValueError("Mod has exactly five components")
        if abs(sum(self.components) - self.Mod) > 1e-12 * max(1.0, self.Mod):
            raise ValueError("Mod must equal the sum of its components")
        return self


class KernelReport(BaseModel):
    """Relative residuals of the generalized kernel identities of L+ and L-."""
    residuals: Dict[str, float]

    @property
    def worst(self) -> float:
        return max(self.residuals.values())


class CoercivityReport(BaseModel):
    """Measured coercivity constant over a sample of projected fields."""
    ratios: List[float]
    localized: bool = False
    cutoff_scale: Optional[float] = None

    @property
    def nu_hat(self) -> float:
        return min(self.ratios)


class ModTrackRow(BaseModel):
    """One row of a modulation track."""
    t: float
    P: ModParams
    Mod: Optional[float] = None
    eps_norm: float
    eps_grad_norm: float
    generalized_energy: float
    max_ortho_residual: float = 0.0

    def csv_row(self) -> List[float]:
        return [self.t, self.P.lam, *self.P.alpha, *self.P.beta, self.P.gamma, self.P.theta,
                float("nan") if self.Mod is None else self.Mod,
                self.eps_norm, self.eps_grad_norm, self.generalized_energy]

    @staticmethod
    def csv_header(dim: int) -> List[str]:
        axes = ["x", "y"][:dim]
        return ["t", "lambda", *[f"alpha_{a}" for a in axes], *[f"beta_{a}" for a in axes],
                "gamma", "theta", "Mod", "eps_l2", "eps_grad_l2", "I"]
