"""Unit tests for the linearized operators, the decomposition and the modulation diagnostics."""
from unittest.mock import patch

import numpy as np
import pytest

from app.models.grid import Field, Grid
from app.models.modulation import ModTrackRow
from app.models.profile import ModParams
from app.numerics import spectral_core as sc
from app.numerics.errors import DecompositionError, GridMismatchError, OutsideBasinError
from app.numerics.modulation import (
    LinearizedOps,
    analytic_jacobian_scale,
    apply_L,
    chi_gradient,
    cutoff_phi,
    decompose,
    fit_power_law,
    generalized_energy,
    mod_vector,
    profile_residual_eta,
    psi_prime,
    random_bump_field,
    track,
)
from app.numerics.profiles import deformed_profile, profile_norms, pseudo_conformal_ST, solve_ground_state, solve_rho


@pytest.fixture(scope="module")
def ops(ground_1d, rho_1d) -> LinearizedOps:
    return LinearizedOps(ground_1d, rho_1d)


@pytest.fixture(scope="module")
def fine_grid() -> Grid:
    return Grid(dim=1, n=2048, half_length=12.0)


@pytest.fixture(scope="module")
def wide_ground():
    """Ground state on a box wide enough that Q vanishes to roundoff at its edge."""
    return solve_ground_state(1, Grid(dim=1, n=1024, half_length=30.0))


def _pseudo_conformal_path(T, times):
    return [ModParams.pseudo_conformal(T, t, 1) for t in times]


def test_kernel_identities_hold_in_one_dimension(ops):
    # When
    report = ops.kernel_residuals()

    # Then
    assert set(report.residuals) == {
        "Lplus_grad_Q", "Lminus_Q", "Lplus_Lambda_Q", "Lminus_r2_Q", "Lminus_x_Q", "Lplus_rho"}
    assert report.worst < 1e-6


def test_kernel_identities_hold_in_two_dimensions(ground_2d, rho_2d):
    assert LinearizedOps(ground_2d, rho_2d).kernel_residuals().worst < 1e-6


def test_apply_L_annihilates_the_kernel(ground_1d):
    # Given
    Q = ground_1d.Q
    (dQ,) = sc.gradient(Q)

    # When
    lplus = apply_L("plus", dQ, ground_1d)
    lminus = apply_L("minus", Q * 1j, ground_1d)

    # Then
    assert sc.norm(lplus) < 1e-7 * sc.norm(dQ)
    assert sc.norm(lminus) < 1e-7 * sc.norm(Q)
    with pytest.raises(ValueError):
        apply_L("zero", Q, ground_1d)


def test_projection_removes_orthogonality_directions(ops, grid_1d):
    # Given
    g = random_bump_field(grid_1d, seed=3)

    # When
    projected = ops.project_onto_orthogonal_set(g)

    # Then
    real_dirs, imag_dirs = ops.orthogonality_directions()
    for direction in real_dirs:
        assert abs(sc.inner_values(projected.real, direction, grid_1d)) < 1e-10
    for direction in imag_dirs:
        assert abs(sc.inner_values(projected.imag, direction, grid_1d)) < 1e-10


def test_random_bump_field_is_seeded(grid_1d):
    np.testing.assert_array_equal(random_bump_field(grid_1d, 5).values, random_bump_field(grid_1d, 5).values)
    assert not np.allclose(random_bump_field(grid_1d, 5).values, random_bump_field(grid_1d, 6).values)


def test_coercivity_constant_is_positive(ops):
    # When
    report = ops.coercivity_sample(trials=10, seed=1)
    localized = ops.coercivity_sample(trials=10, seed=1, A=10.0)

    # Then
    assert report.nu_hat > 0
    assert not report.localized
    assert localized.nu_hat > 0
    assert localized.cutoff_scale == 10.0


@pytest.mark.slow
def test_coercivity_constant_is_stable_under_refinement(ops):
    # Given
    ground = solve_ground_state(1, Grid(dim=1, n=1024, half_length=20.0))
    refined = LinearizedOps(ground, solve_rho(ground))

    # When
    coarse_nu = ops.coercivity_sample(trials=100).nu_hat
    fine_nu = refined.coercivity_sample(trials=100).nu_hat

    # Then
    assert coarse_nu > 0
    assert fine_nu == pytest.approx(coarse_nu, rel=0.2)


def test_cutoff_phi_limits():
    # Given
    r = np.array([0.0, 5.0, 10.0, 15.0, 20.0, 30.0])

    # When
    phi = cutoff_phi(r, A=10.0)

    # Then
    np.testing.assert_allclose(phi[:3], 1.0)
    assert np.exp(-2.0) <= phi[3] <= 1.0
    np.testing.assert_allclose(phi[4:], np.exp(-r[4:] / 10.0))
    with pytest.raises(ValueError):
        cutoff_phi(r, A=0.0)


def test_cutoff_phi_is_monotone():
    r = np.linspace(0.0, 3.0, 301)
    assert np.all(np.diff(cutoff_phi(r)) <= 1e-15)


@pytest.mark.parametrize("joint, slope", [(1.0, 0.0), (2.0, -np.exp(-2.0))])
def test_cutoff_phi_slope_is_continuous_at_the_joints(joint, slope):
    # Given
    h = 1e-6

    # When
    left = (cutoff_phi(np.array([joint])) - cutoff_phi(np.array([joint - h]))) / h
    right = (cutoff_phi(np.array([joint + h])) - cutoff_phi(np.array([joint]))) / h

    # Then
    assert left[0] == pytest.approx(slope, abs=1e-5)
    assert right[0] == pytest.approx(slope, abs=1e-5)


def test_psi_prime_limits():
    # Given
    r = np.array([0.5, 1.0, 1.5, 2.0, 4.0])

    # When
    values = psi_prime(r)

    # Then
    assert values[0] == 0.5
    assert values[1] == pytest.approx(1.0)
    assert 1.0 < values[2] < 2.0
    np.testing.assert_allclose(values[3:], 2.0 - np.exp(-r[3:]))


def test_chi_gradient_is_identity_near_origin_and_bounded_far_away():
    # Given
    y = np.array([0.0, 1.0, 50.0])

    # When
    (grad,) = chi_gradient([y], A=10.0)

    # Then
    assert grad[0] == 0.0
    assert grad[1] == pytest.approx(1.0)
    assert grad[2] == pytest.approx(10.0 * (2.0 - np.exp(-5.0)))


def test_analytic_jacobian_scale_is_the_diagonal_product(ground_1d):
    # Given
    norms = profile_norms(ground_1d)

    for d in (1, 2):
        # When
        scale = analytic_jacobian_scale(norms, 0.5, d)

        # Then
        diag = scale["diagonal"]
        product = (diag["alpha"] * diag["beta"]) ** d * diag["lambda"] * diag["gamma"] * diag["theta"]
        assert scale["determinant"] == pytest.approx(product, rel=1e-12)


def test_decompose_exact_profile_needs_no_newton_steps(ground_1d, rho_1d, grid_1d):
    # Given
    u = pseudo_conformal_ST(1.0, 0.5, grid_1d, ground_1d)
    P = ModParams.pseudo_conformal(1.0, 0.5, 1)

    # When
    result = decompose(u, P, ground_1d, rho_1d)

    # Then
    assert result.newton_iters == 0
    assert result.P == P
    assert sc.norm(result.R) == 0.0
    assert result.residual_history == [0.0]


def test_decompose_recovers_parameters_from_a_perturbed_guess(ground_1d, rho_1d, grid_1d):
    # Given
    u = pseudo_conformal_ST(1.0, 0.5, grid_1d, ground_1d)
    exact = ModParams.pseudo_conformal(1.0, 0.5, 1)
    guess = ModParams(lam=0.55, alpha=[0.02], beta=[0.02], gamma=0.45, theta=2.05)

    # When
    result = decompose(u, guess, ground_1d, rho_1d)

    # Then
    np.testing.assert_allclose(result.P.to_vector(), exact.to_vector(), atol=1e-6)
    assert result.newton_iters > 0
    assert result.max_residual < 1e-10 * profile_norms(ground_1d).mass
    assert sc.norm(result.epsilon) < 1e-6
    assert result.jacobian_condition is not None


def test_decompose_reports_exhausted_iterations(ground_1d, rho_1d, grid_1d):
    # Given
    u = pseudo_conformal_ST(1.0, 0.5, grid_1d, ground_1d)
    guess = ModParams(lam=0.55, alpha=[0.0], beta=[0.0], gamma=0.5, theta=2.0)

    # When / Then
    with pytest.raises(DecompositionError) as exc_info:
        decompose(u, guess, ground_1d, rho_1d, max_iter=0)
    assert len(exc_info.value.residual_history) == 1


def test_decompose_reports_singular_jacobian(ground_1d, rho_1d, grid_1d):
    # Given
    u = pseudo_conformal_ST(1.0, 0.5, grid_1d, ground_1d)
    guess = ModParams(lam=0.55, alpha=[0.0], beta=[0.0], gamma=0.5, theta=2.0)

    # When / Then
    with patch("numpy.linalg.cond", return_value=np.inf):
        with pytest.raises(OutsideBasinError):
            decompose(u, guess, ground_1d, rho_1d)


def test_decompose_rejects_dimension_mismatch(ground_1d, rho_1d, grid_1d):
    u = pseudo_conformal_ST(1.0, 0.5, grid_1d, ground_1d)
    with pytest.raises(ValueError):
        decompose(u, ModParams.identity(2), ground_1d, rho_1d)


def test_mod_vector_vanishes_on_the_pseudo_conformal_path():
    # Given
    times = np.linspace(0.0, 0.5, 51)

    # When
    samples = mod_vector(times, _pseudo_conformal_path(1.0, times))

    # Then
    assert len(samples) == 51
    assert max(s.Mod for s in samples) < 1e-2
    assert samples[10].P_dot[0] == pytest.approx(-1.0)


def test_mod_vector_detects_a_frozen_profile():
    # Given: theta does not move, so lambda^2 theta_t - 1 = -1
    times = [0.0, 0.1, 0.2]
    frozen = [ModParams.identity(1)] * 3

    # When
    samples = mod_vector(times, frozen)

    # Then
    assert [s.Mod for s in samples] == pytest.approx([1.0, 1.0, 1.0])
    assert samples[0].components[-1] == pytest.approx(1.0)


def test_mod_vector_validates_inputs():
    with pytest.raises(ValueError):
        mod_vector([0.0, 0.1], [ModParams.identity(1)] * 2)
    with pytest.raises(ValueError):
        mod_vector([0.0, 0.1, 0.2], [ModParams.identity(1)] * 2)


@pytest.mark.slow
def test_profile_residual_vanishes_for_the_exact_solution(wide_ground, fine_grid):
    # Given: S_T solves the equation, with rates (-1, 0, 0, -1, 1/(T-t)^2)
    P = ModParams.pseudo_conformal(1.0, 0.5, 1)

    # When
    _, exact_norm = profile_residual_eta(P, [-1.0, 0.0, 0.0, -1.0, 4.0], wide_ground, fine_grid)
    _, frozen_norm = profile_residual_eta(P, [0.0] * 5, wide_ground, fine_grid)

    # Then
    assert exact_norm < 1e-6
    assert frozen_norm > 0.1


def test_generalized_energy(ground_1d, grid_1d):
    # Given
    w = deformed_profile(ground_1d, ModParams.identity(1), grid_1d)
    zero = Field.zeros(grid_1d)
    small = Field(grid=grid_1d, values=0.01 * np.exp(-grid_1d.axis ** 2))

    # When
    at_profile = generalized_energy(zero, w, ModParams.identity(1))
    free = generalized_energy(small, zero, ModParams.identity(1))

    # Then: with w = 0 and gamma = 0 only the quadratic part survives at leading order
    assert at_profile == 0.0
    expected = 0.5 * (sc.gradient_norm_sq_values(small.values, grid_1d) + sc.mass(small))
    assert free == pytest.approx(expected, rel=1e-6)
    with pytest.raises(GridMismatchError):
        generalized_energy(Field.zeros(Grid(dim=1, n=16, half_length=1.0)), w, ModParams.identity(1))


def test_fit_power_law():
    # Given
    x = np.array([0.1, 0.2, 0.4, 0.8])

    # When
    C, p = fit_power_law(x, 3.0 * x ** 1.5)

    # Then
    assert C == pytest.approx(3.0)
    assert p == pytest.approx(1.5)
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0, 0.0])


def test_track_follows_the_pseudo_conformal_solution(ground_1d, rho_1d, grid_1d):
    # Given
    times = [0.0, 0.1, 0.2, 0.3]
    snapshots = [pseudo_conformal_ST(1.0, t, grid_1d, ground_1d) for t in times]

    # When
    rows = track(snapshots, times, ModParams.pseudo_conformal(1.0, 0.0, 1), ground_1d, rho_1d)

    # Then
    assert len(rows) == 4
    for row, t in zip(rows, times):
        np.testing.assert_allclose(row.P.to_vector(), ModParams.pseudo_conformal(1.0, t, 1).to_vector(), atol=1e-6)
        assert row.eps_norm < 1e-6
        assert abs(row.generalized_energy) < 1e-8
        assert row.Mod < 0.1
    assert len(rows[0].csv_row()) == len(ModTrackRow.csv_header(1))


def test_track_validates_lengths(ground_1d, rho_1d, grid_1d):
    with pytest.raises(ValueError):
        track([Field.zeros(grid_1d)], [0.0, 1.0], ModParams.identity(1), ground_1d, rho_1d)
