"""Exceptions raised by the numerical kernels."""
from typing import Optional, Sequence


class LabError(Exception):
    """Base exception for lab numerics."""
    pass


class GridMismatchError(LabError):
    """Raised when two fields live on different grids."""

    def __init__(self, message: str = "incompatible grids"):
        super().__init__(message)


class NonFiniteFieldError(LabError):
    """Raised when a field holds NaN/Inf without the post-blow-up flag."""
    pass


class ConvergenceError(LabError):
    """Raised when an iterative solve fails to reach its tolerance."""

    def __init__(self, message: str, residual_history: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])

    @property
    def last_residual(self) -> Optional[float]:
        """Last recorded residual, if any."""
        return self.residual_history[-1] if self.residual_history else None


class DecompositionError(ConvergenceError):
    """Raised when the modulation Newton solve diverges."""
    pass


class OutsideBasinError(DecompositionError):
    """Raised when the decomposition Jacobian is near singular."""

    def __init__(self, message: str = "outside decomposition basin",
                 residual_history: Optional[Sequence[float]] = None):
        super().__init__(message, residual_history)


class AssumptionViolationError(LabError):
    """Raised when a noise basis fails the flatness assumptions."""

    def __init__(self, assumption: str, detail: str):
        super().__init__(f"noise basis violates {assumption}: {detail}")
        self.assumption = assumption


class NonConservativeGaugeError(LabError):
    """Raised when the gauge field has a non-zero real part."""

    def __init__(self, max_real: float):
        super().__init__(f"non-conservative gauge: max|Re W| = {max_real:.3e}")
        self.max_real = max_real


class BlowUpTimeError(LabError):
    """Raised when S_T is requested at or after its blow-up time."""

    def __init__(self, T: float, t: float):
        super().__init__(f"evaluated at/after blow-up time (t={t}, T={T})")


class MeshMismatchError(LabError):
    """Raised when a controlled path and a lift use different meshes."""
    pass


class SupportError(LabError):
    """Raised when a test function is not compactly supported in the box."""
    pass


class MissingSnapshotsError(LabError):
    """Raised when an audit has no stored snapshots to work on."""
    pass


class StepFailure(LabError):
    """Raised when a time step produces non-finite values."""

    def __init__(self, t: float, dt: float):
        super().__init__(f"non-finite field after step at t={t:.6g}, dt={dt:.3e}")
        self.t = t
        self.dt = dt


class StageError(LabError):
    """Raised by the orchestrator, naming the stage that failed."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
