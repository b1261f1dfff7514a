"""Noise basis construction, Brownian lifts and the derived coefficient fields."""
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from app.common.logging import get_logger
from app.config.config import settings
from app.models.grid import Field, Grid
from app.models.noise import BasisKind, BrownianLift, NoiseBasis, NoiseFields, NoiseSpec
from app.numerics import spectral_core as sc
from app.numerics.errors import AssumptionViolationError

logger = get_logger(__name__)

FLATNESS_ORDER = 5
FLATNESS_TOL = 1e-10
DECAY_TOL = 1e-6
OUTER_FRACTION = 0.1
FLAT_POWER = 6


def flat_poly_gauss(grid: Grid, amplitude: float, width: float) -> np.ndarray:
    """a * prod_axis x^6 e^(-x^2/sigma^2)."""
    values = np.full(grid.shape, float(amplitude))
    for c in grid.coords:
        values = values * c ** FLAT_POWER * np.exp(-(c / width) ** 2)
    return values


def _multi_indices(dim: int, max_order: int, min_order: int = 0):
    if dim == 1:
        return [(k,) for k in range(min_order, max_order + 1)]
    return [(i, j) for i in range(max_order + 1) for j in range(max_order + 1 - i) if i + j >= min_order]


def _derivative_stack(phi: np.ndarray, grid: Grid):
    d = grid.dim
    grad = np.empty((phi.shape[0], d) + grid.shape)
    hess = np.empty((phi.shape[0], d, d) + grid.shape)
    lap = np.empty_like(phi)
    bilap = np.empty_like(phi)
    for k, p in enumerate(phi):
        for a in range(d):
            grad[k, a] = sc.spectral_derivative(p, grid, _unit_orders(d, a)).real
            for b in range(a, d):
                orders = np.array(_unit_orders(d, a)) + np.array(_unit_orders(d, b))
                hess[k, a, b] = hess[k, b, a] = sc.spectral_derivative(p, grid, orders).real
        lap[k] = sc.laplacian_values(p, grid).real
        bilap[k] = sc.laplacian_values(lap[k], grid).real
    return grad, hess, lap, bilap


def _unit_orders(d: int, axis: int) -> List[int]:
    orders = [0] * d
    orders[axis] = 1
    return orders


def check_flatness_at_origin(phi: np.ndarray, grid: Grid, max_order: int = FLATNESS_ORDER) -> float:
    """Largest |d^nu phi(0)| over 0 <= |nu| <= max_order."""
    return float(max(abs(sc.derivative_at_origin(phi, grid, orders)) for orders in _multi_indices(grid.dim, max_order)))


def check_asymptotic_flatness(phi: np.ndarray, grid: Grid) -> float:
    """Largest <x>^2 |d^nu phi| over the outer part of the box for 1 <= |nu| <= 2."""
    outer = np.zeros(grid.shape, dtype=bool)
    for c in grid.coords:
        outer |= np.abs(c) >= (1.0 - OUTER_FRACTION) * grid.half_length
    weight = 1.0 + grid.r_squared
    worst = 0.0
    for orders in _multi_indices(grid.dim, 2, min_order=1):
        derivative = sc.spectral_derivative(phi, grid, orders).real
        worst = max(worst, float(np.max(weight[outer] * np.abs(derivative[outer]))))
    return worst


def make_basis(kind: BasisKind, N: int, amplitudes: Sequence[float], grid: Grid,
               widths: Optional[Sequence[float]] = None,
               custom: Optional[Sequence[np.ndarray]] = None) -> NoiseBasis:
    """Build and validate a noise basis.

    Args:
        kind: Basis family
        N: Number of modes
        amplitudes: a_k, one per mode
        grid: Grid the modes live on
        widths: sigma_k for the built-in family (default 1)
        custom: Real mode samples when kind is CUSTOM

    Raises:
        AssumptionViolationError: If a mode fails the flatness checks at the
            origin (A1) or at infinity (A0)
    """
    spec = NoiseSpec(kind=kind, N=N, amplitudes=list(amplitudes),
                     widths=None if widths is None else list(widths))
    if spec.kind == BasisKind.FLAT_POLY_GAUSS:
        phi = np.stack([flat_poly_gauss(grid, a, s) for a, s in zip(spec.amplitudes, spec.resolved_widths())])
    else:
        if custom is None or len(custom) != N:
            raise ValueError(f"custom basis needs {N} mode arrays")
        phi = np.stack([np.asarray(a, dtype=np.float64) * amp for a, amp in zip(custom, spec.amplitudes)])
        if phi.shape[1:] != grid.shape:
            raise ValueError(f"custom modes have shape {phi.shape[1:]}, grid has {grid.shape}")

    for k, p in enumerate(phi):
        origin = check_flatness_at_origin(p, grid)
        if origin >= FLATNESS_TOL:
            raise AssumptionViolationError("(A1)", f"mode {k} has derivative {origin:.2e} at the origin")
        tail = check_asymptotic_flatness(p, grid)
        if tail >= DECAY_TOL:
            raise AssumptionViolationError("(A0)", f"mode {k} has weighted derivative {tail:.2e} near the boundary")

    grad, hess, lap, bilap = _derivative_stack(phi, grid)
    logger.info(f"Built {spec.kind.value} noise basis with {N} modes on n={grid.n}, L={grid.half_length}")
    return NoiseBasis(grid=grid, phi=phi, grad=grad, hess=hess, lap=lap, bilap=bilap, spec=spec)


def basis_from_spec(spec: NoiseSpec, grid: Grid) -> NoiseBasis:
    return make_basis(spec.kind, spec.N, spec.amplitudes, grid, widths=spec.widths)


def lift_generator(seed: int, path: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, path); draws advance the counter."""
    if seed < 0 or path < 0:
        raise ValueError("seed and path must be non-negative")
    return np.random.Generator(np.random.Philox(key=(seed << 64) | path))


def sample_brownian(N: int, mesh: Sequence[float], substeps: Optional[int] = None,
                    seed: int = 0, path: int = 0) -> BrownianLift:
    """Sample B and its iterated integrals on `mesh`.

    Each mesh cell is split into `substeps` Gaussian increments. The Levy
    area comes from left-point sums over the substeps; the stored cell value
    is 1/2 dB_j dB_k + A_jk - 1/2 delta_jk (t - s), so the symmetric part is
    exact and the diagonal equals 1/2 (dB_k^2 - (t - s)).
    """
    substeps = settings.BROWNIAN_SUBSTEPS if substeps is None else substeps
    mesh = np.asarray(mesh, dtype=np.float64)
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    if substeps < 1:
        raise ValueError(f"substeps must be at least 1, got {substeps}")
    if mesh.ndim != 1 or mesh.size < 2 or np.any(np.diff(mesh) <= 0):
        raise ValueError("mesh must be strictly increasing")

    cell = np.diff(mesh)
    h = cell / substeps
    rng = lift_generator(seed, path)
    dW = rng.standard_normal((cell.size, substeps, N)) * np.sqrt(h)[:, None, None]

    left = np.cumsum(dW, axis=1) - dW
    ito = np.einsum("msj,msk->mjk", left, dW)
    levy = 0.5 * (ito - ito.transpose(0, 2, 1))
    dB = dW.sum(axis=1)
    Bb = 0.5 * np.einsum("mj,mk->mjk", dB, dB) + levy - 0.5 * cell[:, None, None] * np.eye(N)

    B = np.concatenate([np.zeros((N, 1)), np.cumsum(dB, axis=0).T], axis=1)
    logger.debug(f"Sampled Brownian lift: N={N}, M={cell.size}, substeps={substeps}, seed={seed}, path={path}")
    return BrownianLift(mesh=mesh, B=B, Bb=Bb.transpose(1, 2, 0), seed=seed, substeps=substeps, path=path)


def _dyadic_lags(m_cells: int) -> List[int]:
    lags, lag = [], 1
    while lag <= max(1, m_cells // 8):
        lags.append(lag)
        lag *= 2
    return lags


def holder_norm(path: np.ndarray, mesh: np.ndarray, alpha: Optional[float] = None) -> float:
    """Max of |p(t) - p(s)| / |t - s|^alpha over dyadic index lags."""
    alpha = settings.HOLDER_ALPHA if alpha is None else alpha
    path = np.asarray(path)
    best = 0.0
    for lag in _dyadic_lags(len(mesh) - 1):
        rise = np.abs(path[lag:] - path[:-lag])
        run = (mesh[lag:] - mesh[:-lag]) ** alpha
        best = max(best, float(np.max(rise / run)))
    return best


def holder_exponent(path: np.ndarray, mesh: np.ndarray) -> float:
    """Log-log slope of the maximal increment against the lag length."""
    path = np.asarray(path)
    lags = _dyadic_lags(len(mesh) - 1)
    if len(lags) < 3:
        raise ValueError("mesh too coarse to fit a Holder exponent")
    spans, rises = [], []
    for lag in lags:
        spans.append(float(np.mean(mesh[lag:] - mesh[:-lag])))
        rises.append(float(np.max(np.abs(path[lag:] - path[:-lag]))))
    return float(linregress(np.log(spans), np.log(rises)).slope)


def coefficient_values(basis: NoiseBasis, B: np.ndarray):
    """W, b, c at path values B (one per mode) as raw arrays.

    Returns:
        (W, b, c) with W = i sum phi_k B_k, b = 2 grad W (shape (d, *shape)),
        c = -sum_j (sum_k d_j phi_k B_k)^2 + i sum_k lap phi_k B_k
    """
    B = np.asarray(B, dtype=np.float64)
    phi_b = np.tensordot(B, basis.phi, axes=1)
    grad_b = np.tensordot(B, basis.grad, axes=1)
    lap_b = np.tensordot(B, basis.lap, axes=1)
    W = 1j * phi_b
    b = 2j * grad_b
    c = -np.sum(grad_b ** 2, axis=0) + 1j * lap_b
    return W, b, c


def gauge_phase_values(basis: NoiseBasis, B: np.ndarray) -> np.ndarray:
    """sum_k phi_k B_k, the imaginary part of W."""
    return np.tensordot(np.asarray(B, dtype=np.float64), basis.phi, axes=1)


def noise_fields(basis: NoiseBasis, lift: BrownianLift, t_index: int) -> NoiseFields:
    """Coefficient fields W, b, c, mu at mesh point t_index."""
    if not 0 <= t_index <= lift.M:
        raise ValueError(f"t_index {t_index} outside mesh of {lift.M} cells")
    if lift.N != basis.N:
        raise ValueError(f"lift has {lift.N} modes, basis has {basis.N}")
    W, b, c = coefficient_values(basis, lift.B[:, t_index])
    grid = basis.grid
    return NoiseFields(
        W=Field(grid=grid, values=W),
        b=[Field(grid=grid, values=component) for component in b],
        c=Field(grid=grid, values=c),
        mu=Field(grid=grid, values=basis.mu_values),
    )
