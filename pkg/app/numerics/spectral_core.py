"""Spectral kernels on the periodic box.

This module provides:
- Fourier differentiation (gradient, Laplacian, arbitrary mixed orders)
- Trapezoid-rule inner products and norms
- The conserved functionals mass, energy and momentum
- The sharp Gagliardo-Nirenberg threshold check
- Band-limited resampling of a field at affine images of a grid

Array-level helpers (suffix `_values`) work on raw numpy arrays and are used
inside time-stepping loops; the Field-level wrappers validate grids.
"""
from typing import List, Sequence, Tuple

import numpy as np

from app.common.logging import get_logger
from app.models.grid import Field, GNReport, Grid
from app.numerics.errors import GridMismatchError, NonFiniteFieldError

logger = get_logger(__name__)

# Relative magnitude below which Fourier coefficients are treated as roundoff
# when taking high-order derivatives.
DERIVATIVE_FLOOR = 1e-15


def check_same_grid(*fields: Field) -> Grid:
    """Return the shared grid of `fields` or raise GridMismatchError."""
    grid = fields[0].grid
    for f in fields[1:]:
        if not grid.compatible_with(f.grid):
            raise GridMismatchError()
    return grid


def _check_finite(v: Field) -> None:
    if not np.all(np.isfinite(v.values)):
        raise NonFiniteFieldError("field holds non-finite values")


def fft(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values)


def ifft(coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(coeffs)


def integrate_values(values: np.ndarray, grid: Grid) -> complex:
    """Trapezoid quadrature on the periodic grid."""
    return complex(np.sum(values) * grid.cell_volume)


def inner_values(v: np.ndarray, w: np.ndarray, grid: Grid) -> complex:
    return complex(np.vdot(w, v) * grid.cell_volume)


def inner(v: Field, w: Field) -> complex:
    """<v, w> = dx^d sum v conj(w): linear in v, conjugate-linear in w."""
    grid = check_same_grid(v, w)
    return inner_values(v.values, w.values, grid)


def real_inner(v: Field, w: Field) -> float:
    return inner(v, w).real


def norm_values(v: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(np.abs(v) ** 2) * grid.cell_volume))


def norm(v: Field) -> float:
    return norm_values(v.values, v.grid)


def spectral_norm(v: Field) -> float:
    """L2 norm computed from Fourier coefficients (Parseval)."""
    grid = v.grid
    coeffs = fft(v.values)
    return float(np.sqrt(np.sum(np.abs(coeffs) ** 2) * grid.cell_volume / grid.n ** grid.dim))


def laplacian_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    return ifft(-grid.k_squared * fft(values))


def gradient_values(values: np.ndarray, grid: Grid) -> List[np.ndarray]:
    coeffs = fft(values)
    return [
        ifft(1j * grid.broadcast_axis(grid.derivative_wavenumbers, axis) * coeffs)
        for axis in range(grid.dim)
    ]


def laplacian(v: Field) -> Field:
    _check_finite(v)
    return v.with_values(laplacian_values(v.values, v.grid))


def gradient(v: Field) -> List[Field]:
    _check_finite(v)
    return [v.with_values(g) for g in gradient_values(v.values, v.grid)]


def inverse_laplacian(v: Field) -> Field:
    """Solve lap(w) = v for mean-zero w; the mean of v is discarded."""
    grid = v.grid
    k2 = np.array(grid.k_squared)
    coeffs = fft(v.values)
    k2[(0,) * grid.dim] = 1.0
    coeffs = coeffs / -k2
    coeffs[(0,) * grid.dim] = 0.0
    return v.with_values(ifft(coeffs))


def gradient_norm_sq_values(values: np.ndarray, grid: Grid) -> float:
    """||grad u||^2 from the Fourier side (Nyquist excluded for consistency)."""
    total = 0.0
    for g in gradient_values(values, grid):
        total += float(np.sum(np.abs(g) ** 2))
    return total * grid.cell_volume


def h1_norm(v: Field) -> float:
    return float(np.sqrt(norm(v) ** 2 + gradient_norm_sq_values(v.values, v.grid)))


def critical_power(dim: int) -> float:
    """Exponent 4/d of the mass-critical nonlinearity."""
    return 4.0 / dim


def mass_values(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(np.abs(values) ** 2) * grid.cell_volume)


def potential_values(values: np.ndarray, grid: Grid) -> float:
    """d/(2d+4) * integral of |u|^(2+4/d)."""
    d = grid.dim
    return d / (2.0 * d + 4.0) * float(np.sum(np.abs(values) ** (2.0 + 4.0 / d))) * grid.cell_volume


def energy_values(values: np.ndarray, grid: Grid) -> float:
    return 0.5 * gradient_norm_sq_values(values, grid) - potential_values(values, grid)


def momentum_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    conj = np.conj(values)
    return np.array([
        float(np.sum(g * conj).imag) * grid.cell_volume for g in gradient_values(values, grid)
    ])


def mass(u: Field) -> float:
    """Mass: integral of |u|^2."""
    return mass_values(u.values, u.grid)


def energy(u: Field) -> float:
    """Energy: 1/2 ||grad u||^2 - d/(2d+4) integral |u|^(2+4/d)."""
    _check_finite(u)
    return energy_values(u.values, u.grid)


def momentum(u: Field) -> np.ndarray:
    """Momentum: Im integral of grad(u) conj(u), one entry per axis."""
    _check_finite(u)
    return momentum_values(u.values, u.grid)


def gn_threshold_check(u: Field, q_mass: float, tol: float = 1e-8) -> GNReport:
    """Compare (1 - (||u||/||Q||)^(4/d)) ||grad u||^2 against 2 E(u).

    Args:
        u: Field to check
        q_mass: ||Q||_2^2 of the ground state on the same dimension
        tol: Relative slack, scaled by max(1, ||grad u||^2)

    Returns:
        GNReport: both sides and whether left <= right + slack
    """
    if q_mass <= 0:
        raise ValueError(f"q_mass must be positive, got {q_mass}")
    d = u.grid.dim
    grad_sq = gradient_norm_sq_values(u.values, u.grid)
    ratio = mass(u) / q_mass
    left = (1.0 - ratio ** (2.0 / d)) * grad_sq
    right = 2.0 * energy(u)
    slack = tol * max(1.0, grad_sq)
    return GNReport(left=left, right=right, satisfied=bool(left <= right + slack))


def reflect_values(values: np.ndarray, axes: Sequence[int] = None) -> np.ndarray:
    """Samples of x -> v(-x) along the given axes (all axes by default)."""
    axes = range(values.ndim) if axes is None else axes
    out = values
    for axis in axes:
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def even_part(values: np.ndarray) -> np.ndarray:
    """Projection onto fields even in every axis separately."""
    out = values
    for axis in range(values.ndim):
        out = 0.5 * (out + reflect_values(out, [axis]))
    return out


def spectral_derivative(values: np.ndarray, grid: Grid, orders: Sequence[int],
                        floor: float = 0.0) -> np.ndarray:
    """Mixed derivative of the given per-axis orders.

    Args:
        values: Samples on the grid
        grid: The grid
        orders: Derivative order per axis
        floor: Coefficients with magnitude below floor * max|coeff| are
            dropped before differentiation (limits roundoff amplification)
    """
    coeffs = fft(values)
    if floor > 0:
        cut = floor * np.max(np.abs(coeffs))
        coeffs = np.where(np.abs(coeffs) < cut, 0.0, coeffs)
    for axis, order in enumerate(orders):
        if order == 0:
            continue
        k = grid.derivative_wavenumbers if order % 2 else grid.wavenumbers
        coeffs = coeffs * grid.broadcast_axis((1j * k) ** order, axis)
    return ifft(coeffs)


def derivative_at_origin(values: np.ndarray, grid: Grid, orders: Sequence[int]) -> complex:
    """Spectral derivative at x = 0, using only the matching parity component."""
    projected = values
    for axis, order in enumerate(orders):
        mirrored = reflect_values(projected, [axis])
        sign = -1.0 if order % 2 else 1.0
        projected = 0.5 * (projected + sign * mirrored)
    derivative = spectral_derivative(projected, grid, orders, floor=DERIVATIVE_FLOOR)
    return complex(derivative[grid.origin_index])


def _resample_matrix(source: Grid, points: np.ndarray) -> np.ndarray:
    """Rows evaluate the source trigonometric interpolant at `points`."""
    k = source.wavenumbers
    phase = np.outer(points + source.half_length, k)
    matrix = np.exp(1j * phase)
    nyquist = source.n // 2
    matrix[:, nyquist] = np.cos(phase[:, nyquist])
    inside = (points >= -source.half_length) & (points < source.half_length)
    matrix[~inside, :] = 0.0
    return matrix / source.n


def band_limited_resample(values: np.ndarray, source: Grid, target: Grid,
                          scale: float = 1.0, shift: Sequence[float] = None,
                          edge_tol: float = 1e-10) -> Tuple[np.ndarray, bool]:
    """Evaluate v((x - shift)/scale) at every point x of `target`.

    The source samples are interpolated by their trigonometric interpolant;
    points falling outside the source box evaluate to zero.

    Returns:
        (values on target, overflow flag). The flag is set when the result is
        not negligible on the target box boundary.
    """
    if source.dim != target.dim:
        raise GridMismatchError("incompatible grids: dimension mismatch")
    shift = np.zeros(target.dim) if shift is None else np.asarray(shift, dtype=float)
    coeffs = fft(values)
    matrices = [
        _resample_matrix(source, (target.axis - shift[axis]) / scale)
        for axis in range(target.dim)
    ]
    if target.dim == 1:
        out = matrices[0] @ coeffs
    else:
        out = matrices[0] @ coeffs @ matrices[1].T
    return out, _edge_overflow(out, edge_tol)


def _edge_overflow(values: np.ndarray, edge_tol: float) -> bool:
    peak = np.max(np.abs(values))
    if peak == 0:
        return False
    edge = 0.0
    for axis in range(values.ndim):
        first = np.take(values, 0, axis=axis)
        last = np.take(values, -1, axis=axis)
        edge = max(edge, float(np.max(np.abs(first))), float(np.max(np.abs(last))))
    return edge > edge_tol * peak
