"""Unit tests for rough integration and the weak-form verifier."""
import numpy as np
import pytest

from app.models.grid import Field
from app.models.noise import BasisKind
from app.models.rough import ControlledPath
from app.numerics.errors import MeshMismatchError, SupportError
from app.numerics.noise import make_basis, sample_brownian
from app.numerics.roughpath import (
    check_compact_support,
    convergence_rate,
    ito_left_sum,
    remainder_holder,
    rough_integrate,
    verify_rough_solution,
    weak_form_path,
    weak_form_refinement,
)


@pytest.fixture(scope="module")
def lift():
    return sample_brownian(1, np.linspace(0.0, 1.0, 1025), substeps=8, seed=21)


@pytest.fixture
def brownian_path(lift) -> ControlledPath:
    """Y = B with Y' = 1."""
    return ControlledPath(mesh=lift.mesh, Y=lift.B, Yprime=np.ones((1, 1, lift.M + 1)))


@pytest.fixture
def gaussian_test(grid_1d) -> Field:
    return Field(grid=grid_1d, values=np.exp(-grid_1d.axis ** 2))


@pytest.fixture
def silent_basis(grid_1d):
    return make_basis(BasisKind.FLAT_POLY_GAUSS, 1, [0.0], grid_1d)


def _soliton_series(ground, mesh):
    """Q e^(it), an exact solution without noise."""
    return [Field(grid=ground.grid, values=ground.values * np.exp(1j * t)) for t in mesh]


def test_rough_integral_of_brownian_motion_is_exact(lift, brownian_path):
    # Given: int_0^1 B dB = (B(1)^2 - 1) / 2 with the Ito second level
    B1 = lift.B[0, -1]

    # When
    value = rough_integrate(brownian_path, lift, 0, lift.M)

    # Then
    assert value[0] == pytest.approx(0.5 * (B1 ** 2 - 1.0), abs=1e-12)


def test_left_sum_approximates_the_rough_integral(lift, brownian_path):
    # When
    rough = rough_integrate(brownian_path, lift, 0, lift.M)
    left = ito_left_sum(brownian_path, lift, 0, lift.M)

    # Then: they differ by (sum dB^2 - 1) / 2
    correction = 0.5 * (np.sum(lift.increments ** 2) - 1.0)
    assert rough[0] - left[0] == pytest.approx(correction, abs=1e-12)
    assert abs(correction) < 0.25


def test_rough_integral_over_empty_interval_is_zero(lift, brownian_path):
    assert rough_integrate(brownian_path, lift, 5, 5)[0] == 0.0


def test_remainder_vanishes_for_brownian_motion(lift, brownian_path):
    assert remainder_holder(brownian_path, lift) == pytest.approx(0.0, abs=1e-12)


def test_remainder_of_squared_path_is_bounded(lift):
    # Given: Y = B^2 with Y' = 2B, remainder (dB)^2
    B = lift.B
    path = ControlledPath(mesh=lift.mesh, Y=B ** 2, Yprime=2.0 * B[:, None, :])

    # When
    quotient = remainder_holder(path, lift)

    # Then
    assert 0.0 < quotient < 100.0


def test_integration_rejects_mismatched_mesh(lift):
    # Given
    other = np.linspace(0.0, 1.0, 513)
    path = ControlledPath(mesh=other, Y=np.zeros((1, 513)), Yprime=np.zeros((1, 1, 513)))

    # When / Then
    with pytest.raises(MeshMismatchError):
        rough_integrate(path, lift, 0, 10)


def test_integration_rejects_mismatched_components(lift):
    # Given
    path = ControlledPath(mesh=lift.mesh, Y=np.zeros((2, lift.M + 1)), Yprime=np.zeros((2, 2, lift.M + 1)))

    # When / Then
    with pytest.raises(MeshMismatchError):
        ito_left_sum(path, lift, 0, lift.M)


def test_controlled_path_rejects_out_of_range_alpha(lift):
    with pytest.raises(ValueError):
        ControlledPath(mesh=lift.mesh, Y=lift.B, Yprime=np.ones((1, 1, lift.M + 1)), holder_alpha=0.6)


def test_convergence_rate_recovers_slope():
    assert convergence_rate([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4]) == pytest.approx(2.0)
    assert np.isnan(convergence_rate([0.1, 0.05], [1e-2, 0.0]))


def test_check_compact_support(gaussian_test, grid_1d):
    # Given
    constant = Field(grid=grid_1d, values=np.ones(grid_1d.shape))

    # When / Then
    check_compact_support(gaussian_test)
    with pytest.raises(SupportError):
        check_compact_support(constant)


def test_weak_form_path_without_noise_is_zero(ground_1d, silent_basis, gaussian_test, lift):
    # Given
    mesh = lift.mesh[:9]
    series = _soliton_series(ground_1d, mesh)

    # When
    path = weak_form_path(series, silent_basis, gaussian_test, mesh)

    # Then
    assert np.all(path.Y == 0)
    assert np.all(path.Yprime == 0)


def test_weak_form_holds_for_the_noiseless_soliton(ground_1d, silent_basis, gaussian_test):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 1.0, 65), substeps=1, seed=1)
    series = _soliton_series(ground_1d, lift.mesh)

    # When
    report = verify_rough_solution(series, lift, silent_basis, gaussian_test, 0, lift.M)

    # Then: only the trapezoid error remains
    assert report.rhs == 0
    assert report.residual < 1e-3
    assert report.mesh == pytest.approx(1.0 / 64)
    assert set(report.components) == {"increment", "drift", "stochastic"}


def test_weak_form_refinement_sees_second_order_time_quadrature(ground_1d, silent_basis, gaussian_test):
    # Given
    levels = []
    for cells in (16, 32, 64):
        lift = sample_brownian(1, np.linspace(0.0, 1.0, cells + 1), substeps=1, seed=1)
        levels.append((_soliton_series(ground_1d, lift.mesh), lift))

    # When
    report = weak_form_refinement(levels, silent_basis, gaussian_test)

    # Then
    assert report.rate_estimate == pytest.approx(2.0, abs=0.1)
    assert report.refinement_steps == sorted(report.refinement_steps, reverse=True)
    assert report.mesh == pytest.approx(1.0 / 64)
    assert report.to_json_dict()["rate_estimate"] == report.rate_estimate


def test_verify_rough_solution_checks_inputs(ground_1d, silent_basis, gaussian_test, grid_1d):
    # Given
    lift = sample_brownian(1, np.linspace(0.0, 1.0, 9), substeps=1)
    series = _soliton_series(ground_1d, lift.mesh)
    constant = Field(grid=grid_1d, values=np.ones(grid_1d.shape))

    # When / Then
    with pytest.raises(MeshMismatchError):
        verify_rough_solution(series[:-1], lift, silent_basis, gaussian_test, 0, lift.M)
    with pytest.raises(SupportError):
        verify_rough_solution(series, lift, silent_basis, constant, 0, lift.M)


def _sine_path(lift) -> ControlledPath:
    """Y = sin(B) with Y' = cos(B)."""
    return ControlledPath(mesh=lift.mesh, Y=np.sin(lift.B), Yprime=np.cos(lift.B)[None])


@pytest.mark.slow
def test_left_sums_of_adapted_integrand_converge_at_half_order():
    # Given: the Ito integral of sin(B) on a 2^-12 mesh, from the rough sum minus the Stratonovich correction
    paths, finest_level = 64, 12
    levels = range(finest_level - 1, 5, -1)
    squared = np.zeros(len(levels))
    for path in range(paths):
        fine = sample_brownian(1, np.linspace(0.0, 1.0, 2 ** finest_level + 1), substeps=1, seed=5, path=path)
        Y = _sine_path(fine)
        ito_reference = (rough_integrate(Y, fine, 0, fine.M)[0]
                         - 0.5 * np.sum(np.cos(fine.B[0, :-1]) * np.diff(fine.mesh)))

        # When
        coarse = fine
        for i, _ in enumerate(levels):
            coarse = coarse.coarsen(2)
            left = ito_left_sum(_sine_path(coarse), coarse, 0, coarse.M)[0]
            squared[i] += (left - ito_reference) ** 2

    # Then
    steps = [2.0 ** -level for level in levels]
    rate = convergence_rate(steps, np.sqrt(squared / paths))
    assert 0.4 <= rate <= 0.6
