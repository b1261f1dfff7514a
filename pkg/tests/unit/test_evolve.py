"""Unit tests for the split-step solver, the gauge map and the energy audit."""
import numpy as np
import pytest
from pydantic import ValidationError

from app.models.grid import Field, Grid
from app.models.noise import BasisKind
from app.models.trajectory import GaugeDirection, SolverConfig, TrajectoryStatus
from app.numerics import spectral_core as sc
from app.numerics.errors import GridMismatchError, MissingSnapshotsError, NonConservativeGaugeError
from app.numerics.evolve import (
    energy_drift_audit,
    energy_drift_rate,
    energy_drift_rate_direct,
    gauge,
    run_ensemble,
    run_trajectory,
    step,
    to_X_series,
)
from app.numerics.noise import gauge_phase_values, make_basis, sample_brownian
from app.numerics.profiles import pseudo_conformal_ST


@pytest.fixture(scope="module")
def basis_1d(grid_1d):
    return make_basis(BasisKind.FLAT_POLY_GAUSS, 1, [0.5], grid_1d)


@pytest.fixture
def gaussian_half_mass(grid_1d, ground_1d) -> Field:
    """Gaussian carrying half the ground-state mass."""
    bump = Field(grid=grid_1d, values=np.exp(-grid_1d.axis ** 2 / 4.0))
    return bump * np.sqrt(0.5 * sc.mass(ground_1d.Q) / sc.mass(bump))


def test_soliton_rotates_in_phase(ground_1d):
    # Given
    cfg = SolverConfig(dt0=1e-3, adaptive=False, t_end=0.5, snapshot_times=[0.0, 0.25, 0.5])

    # When
    record = run_trajectory(ground_1d.Q, cfg, ground=ground_1d)

    # Then
    assert record.status == TrajectoryStatus.COMPLETED
    assert record.final_time == pytest.approx(0.5)
    assert record.snapshot_times == pytest.approx([0.0, 0.25, 0.5])
    error = sc.norm(record.snapshots[-1] - ground_1d.Q * np.exp(0.5j)) / sc.norm(ground_1d.Q)
    assert error < 1e-3
    assert record.max_mass_drift() < 1e-12
    assert max(abs(e - record.energy[0]) for e in record.energy) < 1e-4
    assert all(record.gn_satisfied)


def test_step_is_time_reversible_with_noise(gaussian_half_mass, basis_1d):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 0.1, 11), substeps=4, seed=2)
    u = gaussian_half_mass

    # When
    forward = step(u, 0.02, 0.01, basis_1d, lift)
    back = step(forward, 0.03, -0.01, basis_1d, lift)

    # Then
    np.testing.assert_allclose(back.values, u.values, atol=1e-12)
    assert sc.mass(forward) == pytest.approx(sc.mass(u), rel=1e-13)


def test_step_rejects_zero_time_step(gaussian_half_mass):
    with pytest.raises(ValueError):
        step(gaussian_half_mass, 0.0, 0.0)


def test_noisy_trajectory_conserves_mass(gaussian_half_mass, basis_1d, ground_1d):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 0.2, 65), substeps=8, seed=4)
    cfg = SolverConfig(dt0=1e-2, t_end=0.2, snapshot_times=[0.0, 0.1, 0.2])

    # When
    record = run_trajectory(gaussian_half_mass, cfg, basis_1d, lift, ground_1d)

    # Then
    assert record.status == TrajectoryStatus.COMPLETED
    assert record.final_time == pytest.approx(0.2)
    assert record.max_mass_drift() < 1e-12
    assert len(record.snapshots) == 3
    assert len(record.csv_rows()) == len(record.times)
    assert record.csv_header() == ["t", "dt", "mass", "energy", "px", "gradnorm"]


def test_trajectory_rejects_lift_shorter_than_horizon(gaussian_half_mass, basis_1d, ground_1d):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 0.1, 9), substeps=1)
    cfg = SolverConfig(t_end=0.2)

    # When / Then
    with pytest.raises(ValueError):
        run_trajectory(gaussian_half_mass, cfg, basis_1d, lift, ground_1d)


def test_solver_config_rejects_snapshots_outside_horizon():
    with pytest.raises(ValidationError):
        SolverConfig(t_end=1.0, snapshot_times=[1.5])


def test_ensemble_runs_one_trajectory_per_lift(gaussian_half_mass, basis_1d, ground_1d):
    # Given
    mesh = np.linspace(0.0, 0.05, 9)
    lifts = [sample_brownian(1, mesh, substeps=2, seed=9, path=p) for p in range(3)]
    cfg = SolverConfig(dt0=1e-2, t_end=0.05)

    # When
    records = run_ensemble(gaussian_half_mass, cfg, basis_1d, lifts, ground_1d)

    # Then
    assert len(records) == 3
    assert records[0].energy[-1] != records[1].energy[-1]
    assert all(r.status == TrajectoryStatus.COMPLETED for r in records)


@pytest.mark.slow
def test_pseudo_conformal_solution_collapses(ground_1d):
    # Given
    grid = Grid(dim=1, n=2048, half_length=20.0)
    u0 = pseudo_conformal_ST(1.0, 0.0, grid, ground_1d)
    cfg = SolverConfig(dt0=1e-2, t_end=1.0, snapshot_times=[0.5])

    # When
    record = run_trajectory(u0, cfg, ground=ground_1d)

    # Then: the run stops once lambda reaches the resolution floor
    assert record.status == TrajectoryStatus.RESOLUTION_EXHAUSTED
    assert record.final_time < 1.0
    assert record.lambda_band_ok(1.0)
    assert record.tau_star_estimate == pytest.approx(1.0, abs=0.15)
    exact = pseudo_conformal_ST(1.0, 0.5, grid, ground_1d)
    assert sc.norm(record.snapshots[0] - exact) / sc.norm(exact) < 1e-3


def test_gauge_round_trip(gaussian_half_mass, basis_1d):
    # Given
    W = Field(grid=gaussian_half_mass.grid, values=1j * gauge_phase_values(basis_1d, [0.8]))

    # When
    X = gauge(gaussian_half_mass, W, GaugeDirection.TO_X)
    back = gauge(X, W, GaugeDirection.TO_U)

    # Then
    np.testing.assert_allclose(np.abs(X.values), np.abs(gaussian_half_mass.values))
    np.testing.assert_allclose(back.values, gaussian_half_mass.values, atol=1e-15)


def test_gauge_rejects_real_part(gaussian_half_mass):
    # Given
    W = Field(grid=gaussian_half_mass.grid, values=np.full(gaussian_half_mass.grid.shape, 1e-6 + 0.5j))

    # When / Then
    with pytest.raises(NonConservativeGaugeError):
        gauge(gaussian_half_mass, W, "to_X")


def test_gauge_rejects_mismatched_grid(gaussian_half_mass):
    with pytest.raises(GridMismatchError):
        gauge(gaussian_half_mass, Field.zeros(Grid(dim=1, n=16, half_length=1.0)), GaugeDirection.TO_U)


def test_to_X_series_applies_the_path_phase(gaussian_half_mass, basis_1d):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 1.0, 5), substeps=1, seed=8)

    # When
    (X,) = to_X_series([gaussian_half_mass], [0.5], basis_1d, lift)

    # Then
    phase = gauge_phase_values(basis_1d, lift.B[:, 2])
    np.testing.assert_allclose(X.values, np.exp(1j * phase) * gaussian_half_mass.values)


def test_expanded_drift_rate_matches_direct_form(grid_1d, basis_1d):
    # Given
    x = grid_1d.axis
    u = Field(grid=grid_1d, values=np.exp(-(x - 0.5) ** 2 + 0.3j * x))

    # When
    expanded = energy_drift_rate(u, basis_1d, [0.7])
    direct = energy_drift_rate_direct(u, basis_1d, [0.7])

    # Then
    assert expanded != 0.0
    assert expanded == pytest.approx(direct, rel=1e-6, abs=1e-10)


def test_drift_rate_vanishes_without_noise(gaussian_half_mass, basis_1d):
    assert energy_drift_rate(gaussian_half_mass, basis_1d, [0.0]) == 0.0
    assert energy_drift_rate_direct(gaussian_half_mass, basis_1d, [0.0]) == 0.0


def test_energy_audit_tracks_measured_energy(gaussian_half_mass, basis_1d, ground_1d):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 0.2, 201), substeps=4, seed=12)
    cfg = SolverConfig(dt0=1e-3, adaptive=False, t_end=0.2, snapshot_every_step=True)
    record = run_trajectory(gaussian_half_mass, cfg, basis_1d, lift, ground_1d)

    # When
    audit = energy_drift_audit(record, basis_1d, lift)

    # Then
    assert not audit.zero_noise
    assert len(audit.times) == len(record.snapshots)
    np.testing.assert_allclose(audit.predicted, audit.predicted_direct, rtol=1e-6, atol=1e-9)
    assert audit.absolute_mismatch <= 0.05 * max(abs(m) for m in audit.measured) + 1e-8


def test_energy_audit_needs_snapshots(gaussian_half_mass, basis_1d, ground_1d):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 0.05, 9), substeps=1)
    record = run_trajectory(gaussian_half_mass, SolverConfig(t_end=0.05), basis_1d, lift, ground_1d)

    # When / Then
    with pytest.raises(MissingSnapshotsError):
        energy_drift_audit(record, basis_1d, lift)


@pytest.mark.slow
def test_soliton_over_one_period_meets_tolerance(ground_1d):
    # Given
    period = 2.0 * np.pi
    cfg = SolverConfig(dt0=1e-3, adaptive=False, t_end=period, snapshot_times=[period])

    # When
    record = run_trajectory(ground_1d.Q, cfg, ground=ground_1d)

    # Then
    error = sc.norm(record.snapshots[-1] - ground_1d.Q * np.exp(1j * period)) / sc.norm(ground_1d.Q)
    assert error < 1e-6


def _audit_mismatch(u0, basis, lift, ground, dt):
    cfg = SolverConfig(dt0=dt, adaptive=False, t_end=float(lift.mesh[-1]), snapshot_every_step=True)
    record = run_trajectory(u0, cfg, basis, lift, ground)
    return energy_drift_audit(record, basis, lift)


@pytest.mark.slow
def test_energy_audit_mismatch_at_least_halves_with_dt(gaussian_half_mass, basis_1d, ground_1d):
    # Given: a lift mesh coarser than both steps, aligned with them
    lift = sample_brownian(1, np.linspace(0.0, 0.2, 21), substeps=4, seed=3)

    # When
    coarse = _audit_mismatch(gaussian_half_mass, basis_1d, lift, ground_1d, 1e-3)
    fine = _audit_mismatch(gaussian_half_mass, basis_1d, lift, ground_1d, 5e-4)

    # Then
    assert fine.absolute_mismatch < 0.65 * coarse.absolute_mismatch
    assert fine.relative_mismatch < 1e-2
