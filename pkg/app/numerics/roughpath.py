"""Rough integration against the Brownian lift and the weak-form verifier."""
from typing import List, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import linregress

from app.common.logging import get_logger
from app.models.grid import Field
from app.models.noise import BrownianLift, NoiseBasis
from app.models.rough import ControlledPath, RoughResidualReport
from app.numerics import spectral_core as sc
from app.numerics.errors import MeshMismatchError, SupportError

logger = get_logger(__name__)

SUPPORT_TOL = 1e-12
SUPPORT_FRACTION = 0.05


def _check_interval(Y: ControlledPath, lift: BrownianLift, s_index: int, t_index: int) -> None:
    if Y.N != lift.N:
        raise MeshMismatchError(f"controlled path has {Y.N} components, lift has {lift.N}")
    if not lift.same_mesh(Y.mesh):
        raise MeshMismatchError("controlled path and lift use different meshes")
    if not 0 <= s_index <= t_index <= lift.M:
        raise ValueError(f"invalid mesh interval [{s_index}, {t_index}] for M={lift.M}")


def rough_integrate(Y: ControlledPath, lift: BrownianLift, s_index: int, t_index: int) -> np.ndarray:
    """Compensated Riemann sum of Y against B over [t_s, t_t], one value per component.

    sum_i Y_k(t_i) dB_k,i + sum_j Y'_kj(t_i) Bb_jk,i
    """
    _check_interval(Y, lift, s_index, t_index)
    cells = slice(s_index, t_index)
    dB = lift.increments[:, cells]
    first = np.einsum("ki,ki->k", Y.Y[:, cells], dB)
    second = np.einsum("kji,jki->k", Y.Yprime[:, :, cells], lift.Bb[:, :, cells])
    return first + second


def ito_left_sum(Y: ControlledPath, lift: BrownianLift, s_index: int, t_index: int) -> np.ndarray:
    """Plain left-point sum of Y against B."""
    _check_interval(Y, lift, s_index, t_index)
    cells = slice(s_index, t_index)
    return np.einsum("ki,ki->k", Y.Y[:, cells], lift.increments[:, cells])


def remainder_holder(Y: ControlledPath, lift: BrownianLift) -> float:
    """Empirical 2 alpha-Holder quotient of R_st = dY_st - Y'(s) dB_st over dyadic lags."""
    _check_interval(Y, lift, 0, lift.M)
    worst = 0.0
    lag = 1
    while lag <= max(1, lift.M // 8):
        dY = Y.Y[:, lag:] - Y.Y[:, :-lag]
        dB = lift.B[:, lag:] - lift.B[:, :-lag]
        remainder = dY - np.einsum("kjs,js->ks", Y.Yprime[:, :, :-lag], dB)
        span = (lift.mesh[lag:] - lift.mesh[:-lag]) ** (2.0 * Y.holder_alpha)
        worst = max(worst, float(np.max(np.abs(remainder) / span)))
        lag *= 2
    if not np.isfinite(worst):
        raise ValueError("remainder Holder quotient is not finite")
    logger.debug(f"Remainder 2alpha-Holder quotient {worst:.4g} (alpha={Y.holder_alpha})")
    return worst


def convergence_rate(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Slope of log(error) against log(step)."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    if np.count_nonzero(keep) < 2:
        return float("nan")
    return float(linregress(np.log(steps[keep]), np.log(errors[keep])).slope)


def check_compact_support(testfn: Field) -> None:
    """Raise SupportError unless testfn is negligible on the outer part of the box."""
    grid = testfn.grid
    outer = np.zeros(grid.shape, dtype=bool)
    for c in grid.coords:
        outer |= np.abs(c) >= (1.0 - SUPPORT_FRACTION) * grid.half_length
    edge = float(np.max(np.abs(testfn.values[outer])))
    if edge >= SUPPORT_TOL:
        raise SupportError(f"test function is {edge:.2e} near the box boundary")


def weak_form_path(X_series: Sequence[Field], basis: NoiseBasis, testfn: Field,
                   mesh: np.ndarray) -> ControlledPath:
    """Y_k = <i phi_k X, testfn> with Y'_kj = -<phi_j phi_k X, testfn>."""
    grid = testfn.grid
    conj_test = np.conj(testfn.values)
    steps = len(X_series)
    Y = np.empty((basis.N, steps), dtype=np.complex128)
    Yprime = np.empty((basis.N, basis.N, steps), dtype=np.complex128)
    pairs = basis.phi[:, None] * basis.phi[None, :]
    for r, X in enumerate(X_series):
        sc.check_same_grid(X, testfn)
        weighted = X.values * conj_test
        Y[:, r] = 1j * np.tensordot(basis.phi, weighted, axes=grid.dim) * grid.cell_volume
        Yprime[:, :, r] = -np.tensordot(pairs, weighted, axes=grid.dim) * grid.cell_volume
    return ControlledPath(mesh=mesh, Y=Y, Yprime=Yprime)


def _drift(X: Field, basis: NoiseBasis, testfn: Field, lap_test: np.ndarray) -> complex:
    """<iX, lap phi> + <i|X|^(4/d) X, phi> - <mu X, phi>."""
    grid = X.grid
    x = X.values
    nonlinear = np.abs(x) ** (4.0 / grid.dim) * x
    return (sc.inner_values(1j * x, lap_test, grid)
            + sc.inner_values(1j * nonlinear, testfn.values, grid)
            - sc.inner_values(basis.mu_values * x, testfn.values, grid))


def verify_rough_solution(X_series: Sequence[Field], lift: BrownianLift, basis: NoiseBasis,
                          testfn: Field, s_index: int, t_index: int) -> RoughResidualReport:
    """Evaluate both sides of the weak rough-solution identity on [t_s, t_t].

    X_series holds X at every mesh point of the lift. Time integrals use the
    trapezoid rule; the stochastic side is the compensated rough sum.

    Raises:
        SupportError: If testfn is not compactly supported inside the box
        MeshMismatchError: If X_series does not match the lift mesh
    """
    check_compact_support(testfn)
    if len(X_series) != lift.M + 1:
        raise MeshMismatchError(f"expected {lift.M + 1} snapshots on the lift mesh, got {len(X_series)}")
    if basis.N != lift.N:
        raise MeshMismatchError(f"basis has {basis.N} modes, lift has {lift.N}")

    grid = testfn.grid
    lap_test = sc.laplacian_values(testfn.values, grid)
    window = list(range(s_index, t_index + 1))
    drift = np.array([_drift(X_series[r], basis, testfn, lap_test) for r in window])
    drift_integral = complex(trapezoid(drift, lift.mesh[s_index:t_index + 1])) if len(window) > 1 else 0j
    increment = sc.inner(X_series[t_index], testfn) - sc.inner(X_series[s_index], testfn)

    path = weak_form_path(X_series, basis, testfn, lift.mesh)
    stochastic = complex(np.sum(rough_integrate(path, lift, s_index, t_index)))
    lhs = increment - drift_integral
    residual = abs(lhs - stochastic)
    step = float(np.max(np.diff(lift.mesh[s_index:t_index + 1]))) if t_index > s_index else 0.0
    logger.debug(f"Weak-form residual {residual:.3e} on [{lift.mesh[s_index]}, {lift.mesh[t_index]}]")
    return RoughResidualReport(
        lhs=lhs, rhs=stochastic, residual=residual, mesh=step,
        components={"increment": increment, "drift": drift_integral, "stochastic": stochastic},
    )


def weak_form_refinement(levels: Sequence[Tuple[Sequence[Field], BrownianLift]], basis: NoiseBasis,
                         testfn: Field) -> RoughResidualReport:
    """Weak-form residual over the full mesh for each refinement level.

    Args:
        levels: (X_series, lift) pairs, one per mesh, any order
        basis: Noise basis shared by all levels
        testfn: Compactly supported test function

    Returns:
        RoughResidualReport: the finest level's report with the fitted rate
            and per-level residuals attached
    """
    reports: List[RoughResidualReport] = [
        verify_rough_solution(X_series, lift, basis, testfn, 0, lift.M) for X_series, lift in levels
    ]
    reports.sort(key=lambda r: r.mesh, reverse=True)
    steps = [r.mesh for r in reports]
    residuals = [r.residual for r in reports]
    rate = convergence_rate(steps, residuals)
    logger.info(f"Weak-form refinement over {len(reports)} meshes: rate {rate:.3f}")
    finest = reports[-1]
    return finest.model_copy(update={
        "rate_estimate": rate,
        "refinement_steps": steps,
        "refinement_residuals": residuals,
    })
