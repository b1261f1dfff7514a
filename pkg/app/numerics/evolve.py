"""Time integration of the gauge-transformed random NLS.

The unknown u = e^(-W) X solves
    i u_t + e^(-W) lap(e^W u) + |u|^(4/d) u = 0,  W = i sum_k phi_k B_k(t),
which is stepped by Strang splitting: a half nonlinear phase, a full
twisted-Laplacian step with W frozen at the step midpoint, and a second half
nonlinear phase. Every substep is unitary, so mass is conserved per step.
"""
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import linregress

from app.common.logging import get_logger
from app.config.config import settings
from app.models.grid import Field, Grid
from app.models.noise import BrownianLift, NoiseBasis
from app.models.profile import GroundState
from app.models.trajectory import (
    EnergyAuditReport,
    GaugeDirection,
    SolverConfig,
    TrajectoryRecord,
    TrajectoryStatus,
)
from app.numerics import spectral_core as sc
from app.numerics.errors import MissingSnapshotsError, NonConservativeGaugeError, StepFailure
from app.numerics.noise import gauge_phase_values
from app.numerics.profiles import profile_norms, reference_ground_state

logger = get_logger(__name__)

GAUGE_TOL = 1e-12
TIME_EPS = 1e-13


def _noise_phase(basis: Optional[NoiseBasis], lift: Optional[BrownianLift], t: float) -> Optional[np.ndarray]:
    if basis is None or lift is None:
        return None
    return gauge_phase_values(basis, lift.path_at(t))


def _nonlinear_phase(values: np.ndarray, dt: float, power: float) -> np.ndarray:
    return values * np.exp(1j * dt * np.abs(values) ** power)


def step_values(values: np.ndarray, grid: Grid, dt: float, phase_mid: Optional[np.ndarray] = None) -> np.ndarray:
    """One Strang step on raw samples; phase_mid is Im W at the step midpoint."""
    power = 4.0 / grid.dim
    v = _nonlinear_phase(values, 0.5 * dt, power)
    propagator = np.exp(-1j * grid.k_squared * dt)
    if phase_mid is None:
        v = sc.ifft(propagator * sc.fft(v))
    else:
        twist = np.exp(1j * phase_mid)
        v = np.conj(twist) * sc.ifft(propagator * sc.fft(twist * v))
    return _nonlinear_phase(v, 0.5 * dt, power)


def step(u: Field, t: float, dt: float, basis: Optional[NoiseBasis] = None,
         lift: Optional[BrownianLift] = None) -> Field:
    """Advance u from t to t + dt; dt may be negative.

    Raises:
        StepFailure: If the result holds NaN/Inf
    """
    if dt == 0 or not np.isfinite(dt):
        raise ValueError(f"dt must be finite and non-zero, got {dt}")
    values = step_values(u.values, u.grid, dt, _noise_phase(basis, lift, t + 0.5 * dt))
    if not np.all(np.isfinite(values)):
        raise StepFailure(t, dt)
    return u.with_values(values)


def gauge(u: Field, W: Field, direction: GaugeDirection) -> Field:
    """X = e^W u (TO_X) or u = e^(-W) X (TO_U) for purely imaginary W.

    Raises:
        NonConservativeGaugeError: If |Re W| exceeds 1e-12 anywhere
    """
    sc.check_same_grid(u, W)
    max_real = float(np.max(np.abs(W.values.real)))
    if max_real > GAUGE_TOL:
        raise NonConservativeGaugeError(max_real)
    sign = 1.0 if GaugeDirection(direction) == GaugeDirection.TO_X else -1.0
    return u.with_values(np.exp(sign * 1j * W.values.imag) * u.values)


def to_X_series(u_series: Sequence[Field], times: Sequence[float], basis: NoiseBasis,
                lift: BrownianLift) -> List[Field]:
    """Map a u-trajectory to X = e^W u at the given times."""
    return [
        u.with_values(np.exp(1j * gauge_phase_values(basis, lift.path_at(t))) * u.values)
        for u, t in zip(u_series, times)
    ]


def _tau_star(times: np.ndarray, gradnorm: np.ndarray) -> Optional[float]:
    """Fit 1/||grad u|| = kappa (tau - t) over the last decade of growth."""
    window = gradnorm >= gradnorm[-1] / 10.0
    if np.count_nonzero(window) < 3:
        return None
    fit = linregress(times[window], 1.0 / gradnorm[window])
    if fit.slope >= 0:
        return None
    return float(-fit.intercept / fit.slope)


class _Diagnostics:
    """Per-step diagnostics against the ground state norms."""

    def __init__(self, grid: Grid, ground: GroundState):
        norms = profile_norms(ground)
        self.grid = grid
        self.q_mass = norms.mass
        self.q_grad = norms.grad_norm

    def record(self, record: TrajectoryRecord, values: np.ndarray, t: float, dt: float) -> float:
        grid = self.grid
        grad_sq = sc.gradient_norm_sq_values(values, grid)
        mass = sc.mass_values(values, grid)
        energy = 0.5 * grad_sq - sc.potential_values(values, grid)
        gn_left = (1.0 - (mass / self.q_mass) ** (2.0 / grid.dim)) * grad_sq
        gn_ok = gn_left <= 2.0 * energy + 1e-8 * max(1.0, grad_sq)
        gradnorm = float(np.sqrt(grad_sq))
        lam = self.q_grad / gradnorm if gradnorm > 0 else float("inf")
        record.append(t, dt, mass, energy, sc.momentum_values(values, grid), gradnorm, gn_ok, lam)
        return gradnorm


def run_trajectory(u0: Field, cfg: SolverConfig, basis: Optional[NoiseBasis] = None,
                   lift: Optional[BrownianLift] = None, ground: Optional[GroundState] = None) -> TrajectoryRecord:
    """Integrate until t_end, the gradient-norm cap, or the resolution floor.

    Args:
        u0: Initial datum
        cfg: Solver configuration
        basis: Noise basis (None for the deterministic equation)
        lift: Brownian lift driving the noise, covering [0, t_end]
        ground: Ground state used for the GN check and lambda estimates

    Returns:
        TrajectoryRecord: diagnostics, status and tau* estimate
    """
    grid = u0.grid
    if lift is not None and cfg.t_end > lift.mesh[-1] + TIME_EPS:
        raise ValueError(f"lift covers [0, {lift.mesh[-1]}] but t_end is {cfg.t_end}")
    ground = reference_ground_state(grid.dim) if ground is None else ground
    diagnostics = _Diagnostics(grid, ground)

    record = TrajectoryRecord()
    values = np.array(u0.values)
    t = 0.0
    gradnorm = diagnostics.record(record, values, t, 0.0)
    cap = cfg.blowup_gradnorm_cap or settings.BLOWUP_CAP_FACTOR * gradnorm
    record.blowup_gradnorm_cap = cap
    floor = cfg.resolution_factor * grid.dx
    pending = sorted(cfg.snapshot_times)

    def _snapshot(at: float) -> None:
        record.snapshot_times.append(at)
        record.snapshots.append(Field(grid=grid, values=values))

    if cfg.snapshot_every_step or (pending and pending[0] <= TIME_EPS):
        _snapshot(t)
        pending = [s for s in pending if s > TIME_EPS]

    status = TrajectoryStatus.COMPLETED
    steps = 0
    while t < cfg.t_end - TIME_EPS:
        if cfg.adaptive:
            dt = cfg.safety * min(cfg.dt0, 1.0 / gradnorm ** 2)
            if dt < cfg.dt_min:
                logger.warning(f"Time step {dt:.2e} fell below dt_min at t={t:.6g}")
                status = TrajectoryStatus.RESOLUTION_EXHAUSTED
                break
        else:
            dt = cfg.dt0
        dt = min(dt, cfg.t_end - t)
        if pending:
            dt = min(dt, pending[0] - t)

        try:
            values = step_values(values, grid, dt, _noise_phase(basis, lift, t + 0.5 * dt))
            if not np.all(np.isfinite(values)):
                raise StepFailure(t, dt)
        except StepFailure as e:
            logger.warning(f"Stopping trajectory: {e}")
            status = TrajectoryStatus.RESOLUTION_EXHAUSTED
            break
        t = t + dt
        steps += 1
        gradnorm = diagnostics.record(record, values, t, dt)
        if steps % 1000 == 0:
            logger.debug(f"t={t:.6g} dt={dt:.3e} |grad u|={gradnorm:.4g}")

        if cfg.snapshot_every_step:
            _snapshot(t)
        elif pending and abs(t - pending[0]) <= TIME_EPS:
            _snapshot(t)
            pending.pop(0)

        if gradnorm > cap:
            status = TrajectoryStatus.BLOWUP_DETECTED
            break
        if record.lambda_est[-1] < floor:
            status = TrajectoryStatus.RESOLUTION_EXHAUSTED
            break

    record.status = status
    if status != TrajectoryStatus.COMPLETED:
        record.tau_star_estimate = _tau_star(np.asarray(record.times), np.asarray(record.gradnorm))
    logger.info(f"Trajectory finished with status {status.value} at t={t:.6g} after {steps} steps"
                + (f", tau* ~ {record.tau_star_estimate:.6g}" if record.tau_star_estimate is not None else ""))
    return record


def run_ensemble(u0: Field, cfg: SolverConfig, basis: NoiseBasis, lifts: Sequence[BrownianLift],
                 ground: Optional[GroundState] = None) -> List[TrajectoryRecord]:
    """Independent trajectories, one per lift, in lift order."""
    return [run_trajectory(u0, cfg, basis, lift, ground) for lift in lifts]


def _noise_derivatives(basis: NoiseBasis, B: np.ndarray):
    B = np.asarray(B, dtype=np.float64)
    return (np.tensordot(B, basis.phi, axes=1), np.tensordot(B, basis.grad, axes=1),
            np.tensordot(B, basis.hess, axes=1), np.tensordot(B, basis.lap, axes=1),
            np.tensordot(B, basis.bilap, axes=1))


def energy_drift_rate(u: Field, basis: NoiseBasis, B: np.ndarray) -> float:
    """dE/dt from the expanded four-term form.

    -2 Re int hess(psi)(grad u, grad u*) + 1/2 int lap^2 psi |u|^2
    + 2/(d+2) int lap psi |u|^(2+4/d) - Im int grad |grad psi|^2 . grad u u*
    with psi = sum_k phi_k B_k.
    """
    grid = u.grid
    d = grid.dim
    values = u.values
    _, grad_psi, hess_psi, lap_psi, bilap_psi = _noise_derivatives(basis, B)
    grad_u = sc.gradient_values(values, grid)

    hess_term = 0.0
    for a in range(d):
        for b in range(d):
            hess_term += float(np.sum(hess_psi[a, b] * (grad_u[a] * np.conj(grad_u[b])).real))
    density = np.abs(values) ** 2
    grad_sq_psi = [2.0 * sum(grad_psi[j] * hess_psi[a, j] for j in range(d)) for a in range(d)]
    transport = sum(float(np.sum(grad_sq_psi[a] * (grad_u[a] * np.conj(values)).imag)) for a in range(d))

    rate = (-2.0 * hess_term
            + 0.5 * float(np.sum(bilap_psi * density))
            + 2.0 / (d + 2.0) * float(np.sum(lap_psi * density ** (1.0 + 2.0 / d)))
            - transport)
    return rate * grid.cell_volume


def energy_drift_rate_direct(u: Field, basis: NoiseBasis, B: np.ndarray) -> float:
    """dE/dt = Im int (b . grad u + c u) conj(lap u + |u|^(4/d) u)."""
    grid = u.grid
    values = u.values
    _, grad_psi, _, lap_psi, _ = _noise_derivatives(basis, B)
    grad_u = sc.gradient_values(values, grid)
    drift = sum(2j * grad_psi[a] * grad_u[a] for a in range(grid.dim))
    drift = drift + (1j * lap_psi - np.sum(grad_psi ** 2, axis=0)) * values
    target = sc.laplacian_values(values, grid) + np.abs(values) ** (4.0 / grid.dim) * values
    return float(np.sum(drift * np.conj(target)).imag) * grid.cell_volume


def energy_drift_audit(traj: TrajectoryRecord, basis: NoiseBasis, lift: BrownianLift,
                       snapshots: Optional[Sequence[Field]] = None,
                       snapshot_times: Optional[Sequence[float]] = None) -> EnergyAuditReport:
    """Compare E(u(t)) - E(u(t0)) with the trapezoid integral of the drift rate.

    Snapshots default to the ones stored on the trajectory.

    Raises:
        MissingSnapshotsError: If fewer than two snapshots are available
    """
    snapshots = traj.snapshots if snapshots is None else list(snapshots)
    times = traj.snapshot_times if snapshot_times is None else list(snapshot_times)
    if len(snapshots) < 2 or len(snapshots) != len(times):
        raise MissingSnapshotsError(f"energy audit needs matching snapshots and times, got {len(snapshots)}")

    energies = np.array([sc.energy(u) for u in snapshots])
    rates = np.array([energy_drift_rate(u, basis, lift.path_at(t)) for u, t in zip(snapshots, times)])
    direct = np.array([energy_drift_rate_direct(u, basis, lift.path_at(t)) for u, t in zip(snapshots, times)])
    times_arr = np.asarray(times)
    predicted = [float(trapezoid(rates[:i + 1], times_arr[:i + 1])) for i in range(len(times))]
    predicted_direct = [float(trapezoid(direct[:i + 1], times_arr[:i + 1])) for i in range(len(times))]
    measured = list(energies - energies[0])

    zero_noise = bool(np.all(rates == 0) and np.all(direct == 0))
    absolute = abs(predicted[-1] - measured[-1])
    relative = absolute / abs(measured[-1]) if measured[-1] != 0 else (0.0 if absolute == 0 else float("inf"))
    logger.info(f"Energy audit over {len(times)} snapshots: measured dE={measured[-1]:.4e}, "
                f"predicted {predicted[-1]:.4e}, relative mismatch {relative:.3e}")
    return EnergyAuditReport(times=list(times_arr), measured=measured, predicted=predicted,
                             predicted_direct=predicted_direct, absolute_mismatch=absolute,
                             relative_mismatch=relative, zero_noise=zero_noise)
