"""Ground state, rho, deformed profiles and the exact blow-up solution.

The ground state Q solves lap Q - Q + Q^(1+4/d) = 0 and is computed by the
Petviashvili iteration. The auxiliary profile rho solves L+ rho = -|x|^2 Q
in the radial sector by preconditioned MINRES. All off-grid evaluations
(rescaling, translation) go through the band-limited interpolant of
spectral_core.
"""
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, minres

from app.common.logging import get_logger
from app.config.config import settings
from app.models.grid import Field, Grid
from app.models.profile import GroundState, ModParams, ProfileNorms, RadialShooting, RhoProfile
from app.numerics.errors import BlowUpTimeError, ConvergenceError
from app.numerics import spectral_core as sc

logger = get_logger(__name__)

MAX_DX = 0.1
RHO_REFINEMENT_PASSES = 6
RHO_MINRES_MAXITER = 2000

# Grids used when a caller asks for S_T without supplying a ground state.
REFERENCE_GRIDS = {
    1: Grid(dim=1, n=1024, half_length=30.0),
    2: Grid(dim=2, n=512, half_length=16.0),
}


def _radial_projection(values: np.ndarray) -> np.ndarray:
    """Even in every axis and, in 2D, symmetric under swapping the axes."""
    out = sc.even_part(values)
    if out.ndim == 2:
        out = 0.5 * (out + out.T)
    return out


def _soliton_residual(q: np.ndarray, grid: Grid) -> float:
    p = 1.0 + 4.0 / grid.dim
    defect = sc.laplacian_values(q, grid).real - q + np.abs(q) ** (p - 1.0) * q
    return sc.norm_values(defect, grid) / sc.norm_values(q, grid)


def solve_ground_state(d: int, grid: Grid, tol: Optional[float] = None,
                       max_iter: Optional[int] = None) -> GroundState:
    """Petviashvili iteration for the positive radial ground state.

    Args:
        d: Dimension, must match grid.dim
        grid: Grid resolving the soliton width (dx <= 0.1)
        tol: Target relative residual, in (0, 1e-6]
        max_iter: Iteration cap

    Returns:
        GroundState: Q with its final residual and residual history

    Raises:
        ConvergenceError: If the residual stays above tol after max_iter
    """
    tol = settings.GROUND_STATE_TOL if tol is None else tol
    max_iter = settings.GROUND_STATE_MAX_ITER if max_iter is None else max_iter
    if d != grid.dim:
        raise ValueError(f"dimension {d} does not match grid dimension {grid.dim}")
    if not 0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    if grid.dx > MAX_DX:
        raise ValueError(f"grid spacing {grid.dx:.4g} does not resolve the soliton (need dx <= {MAX_DX})")

    p = 1.0 + 4.0 / d
    gamma = p / (p - 1.0)
    symbol = 1.0 + grid.k_squared
    v = np.exp(-grid.r_squared)
    history = []

    for iteration in range(1, max_iter + 1):
        vp = np.abs(v) ** (p - 1.0) * v
        v_hat = sc.fft(v)
        vp_hat = sc.fft(vp)
        numerator = float(np.sum(symbol * np.abs(v_hat) ** 2))
        denominator = float(np.real(np.sum(vp_hat * np.conj(v_hat))))
        stabilizer = numerator / denominator
        v = sc.ifft(stabilizer ** gamma * vp_hat / symbol).real
        v = _radial_projection(v)

        residual = _soliton_residual(v, grid)
        history.append(residual)
        if iteration % 50 == 0:
            logger.debug(f"Petviashvili iteration {iteration}: residual {residual:.3e}, s = {stabilizer:.12f}")
        if residual < tol:
            logger.info(f"Ground state d={d} n={grid.n} L={grid.half_length} converged "
                        f"in {iteration} iterations (residual {residual:.3e})")
            edge = max(float(np.max(np.abs(np.take(v, 0, axis=a)))) for a in range(d))
            if edge > 1e-12 * float(np.max(v)):
                logger.warning(f"Ground state not negligible on the box boundary ({edge:.2e}); enlarge L")
            ground = GroundState(Q=Field(grid=grid, values=v), residual=residual, d=d,
                                 iterations=iteration, residual_history=history)
            rises = ground.residual_rises()
            if rises:
                logger.warning(f"Petviashvili residual increased after burn-in at iterations {rises[:10]}")
            return ground

    logger.error(f"Ground state did not converge in {max_iter} iterations (residual {history[-1]:.3e})")
    raise ConvergenceError(
        f"Petviashvili iteration did not reach {tol:.1e} in {max_iter} iterations", history)


@lru_cache(maxsize=4)
def reference_ground_state(d: int) -> GroundState:
    """Ground state on the reference grid of dimension d, solved once per process."""
    return solve_ground_state(d, REFERENCE_GRIDS[d])


SHOOT_R0 = 1e-6
SHOOT_R_MAX = 40.0
SHOOT_BISECTIONS = 60
SPHERE_AREA = {1: 2.0, 2: 2.0 * np.pi}


def _shoot(q0: float, d: int):
    """Integrate Q'' + (d-1)/r Q' = Q - Q^(1+4/d), Q(0) = q0, Q'(0) = 0, with the mass alongside."""
    p = 1.0 + 4.0 / d
    c = (q0 - q0 ** p) / (2.0 * d)
    r0 = SHOOT_R0
    y0 = [q0 + c * r0 ** 2, 2.0 * c * r0, 0.0]

    def rhs(r, y):
        q, dq, _ = y
        return [dq, q - np.abs(q) ** (p - 1.0) * q - (d - 1) * dq / r, q * q * r ** (d - 1)]

    def crosses_zero(r, y):
        return y[0]
    crosses_zero.terminal = True
    crosses_zero.direction = -1

    def turns_up(r, y):
        return y[1]
    turns_up.terminal = True
    turns_up.direction = 1

    return solve_ivp(rhs, (r0, SHOOT_R_MAX), y0, method="DOP853", rtol=1e-12, atol=1e-15,
                     events=(crosses_zero, turns_up))


@lru_cache(maxsize=2)
def radial_shooting_oracle(d: int) -> RadialShooting:
    """Q(0) and ||Q||^2 from the radial ODE, independent of the spectral solver.

    Bisects on Q(0) between shots that undershoot (Q' turns positive) and
    shots that overshoot (Q crosses zero). The mass is accumulated along the
    last undershooting shot, which follows Q until it is negligible.
    """
    if d not in SPHERE_AREA:
        raise ValueError(f"radial shooting supports d in {sorted(SPHERE_AREA)}, got {d}")
    lo, hi = 1.0 + 1e-3, 5.0
    count = 0
    for count in range(1, SHOOT_BISECTIONS + 1):
        mid = 0.5 * (lo + hi)
        if _shoot(mid, d).t_events[0].size:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 4.0 * np.finfo(float).eps * hi:
            break
    shot = _shoot(lo, d)
    mass = SPHERE_AREA[d] * float(shot.y[2, -1])
    logger.info(f"Radial shooting d={d}: Q(0) = {lo:.15f}, mass {mass:.12f} after {count} bisections")
    return RadialShooting(Q0=lo, mass=mass, r_max=float(shot.t[-1]), bisections=count)


def ground_values_on(ground: GroundState, grid: Grid) -> np.ndarray:
    """Real samples of Q on `grid`, interpolating when the grids differ."""
    if grid.compatible_with(ground.grid):
        return ground.values
    values, _ = sc.band_limited_resample(ground.Q.values, ground.grid, grid)
    return values.real


def lplus_values(values: np.ndarray, q: np.ndarray, grid: Grid) -> np.ndarray:
    """-lap f + f - (1+4/d) Q^(4/d) f on real samples."""
    p = 1.0 + 4.0 / grid.dim
    return -sc.laplacian_values(values, grid).real + values - p * np.abs(q) ** (p - 1.0) * values


def lminus_values(values: np.ndarray, q: np.ndarray, grid: Grid) -> np.ndarray:
    """-lap f + f - Q^(4/d) f on real samples."""
    return -sc.laplacian_values(values, grid).real + values - np.abs(q) ** (4.0 / grid.dim) * values


def _fit_decay_rate(rho: np.ndarray, grid: Grid) -> float:
    """Fit log|rho| ~ -delta r + k log r + c on the outer half of the inner box."""
    line = rho[(slice(None),) + (grid.n // 2,) * (grid.dim - 1)]
    r = grid.axis
    magnitude = np.abs(line)
    mask = (r >= grid.half_length / 4) & (r <= grid.half_length / 2) & (magnitude > 1e-13 * magnitude.max())
    if np.count_nonzero(mask) < 4:
        logger.warning("Too few samples to fit the decay rate of rho")
        return float("nan")
    design = np.column_stack([r[mask], np.log(r[mask]), np.ones(np.count_nonzero(mask))])
    coeffs, *_ = np.linalg.lstsq(design, np.log(magnitude[mask]), rcond=None)
    return float(-coeffs[0])


def solve_rho(ground: GroundState, grid: Optional[Grid] = None, tol: Optional[float] = None) -> RhoProfile:
    """Solve L+ rho = -|x|^2 Q in the radial sector.

    MINRES with the spectral preconditioner (1 + |k|^2)^(-1) on the
    parity-projected operator, followed by iterative refinement on the true
    residual.

    Raises:
        ConvergenceError: If the relative residual stays above 1e-8
    """
    grid = ground.grid if grid is None else grid
    tol = settings.RHO_TOL if tol is None else tol
    q = ground_values_on(ground, grid)
    shape = grid.shape
    size = int(np.prod(shape))
    symbol = 1.0 + grid.k_squared

    def _apply(flat: np.ndarray) -> np.ndarray:
        projected = _radial_projection(flat.reshape(shape))
        return _radial_projection(lplus_values(projected, q, grid)).ravel()

    def _precondition(flat: np.ndarray) -> np.ndarray:
        return sc.ifft(sc.fft(flat.reshape(shape)) / symbol).real.ravel()

    operator = LinearOperator((size, size), matvec=_apply, dtype=np.float64)
    preconditioner = LinearOperator((size, size), matvec=_precondition, dtype=np.float64)

    rhs = _radial_projection(-grid.r_squared * q)
    rhs_norm = sc.norm_values(rhs, grid)
    rho = np.zeros(shape)
    history = []
    iterations = 0

    def _count(_):
        nonlocal iterations
        iterations += 1

    for sweep in range(RHO_REFINEMENT_PASSES):
        defect = rhs - lplus_values(rho, q, grid)
        relative = sc.norm_values(defect, grid) / rhs_norm
        history.append(relative)
        logger.debug(f"rho refinement sweep {sweep}: relative residual {relative:.3e}")
        if relative < tol:
            break
        correction, info = minres(operator, _radial_projection(defect).ravel(), rtol=tol,
                                  maxiter=RHO_MINRES_MAXITER, M=preconditioner, callback=_count)
        if info < 0:
            raise ConvergenceError(f"MINRES breakdown while solving for rho (info={info})", history)
        rho = _radial_projection(rho + correction.reshape(shape))

    residual = history[-1]
    if residual >= tol:
        residual = sc.norm_values(rhs - lplus_values(rho, q, grid), grid) / rhs_norm
        history.append(residual)
    if residual >= 1e-8:
        logger.error(f"rho solve stalled at relative residual {residual:.3e}")
        raise ConvergenceError(f"rho solve did not converge (residual {residual:.3e})", history)

    edge = max(float(np.max(np.abs(np.take(rho, 0, axis=a)))) for a in range(grid.dim))
    if edge > 1e-8:
        logger.warning(f"rho is {edge:.2e} on the box boundary; enlarge L")
    decay_rate = _fit_decay_rate(rho, grid)
    logger.info(f"rho solved in {iterations} MINRES iterations (residual {residual:.3e}, decay rate {decay_rate:.3f})")
    return RhoProfile(rho=Field(grid=grid, values=rho), residual=residual, decay_rate=decay_rate,
                      iterations=iterations, residual_history=history)


def _modulate(values: np.ndarray, source: Grid, P: ModParams, grid: Grid) -> Tuple[np.ndarray, bool]:
    """lambda^(-d/2) v(y) e^(i beta.y - i gamma |y|^2 / 4 + i theta), y = (x - alpha)/lambda."""
    if P.dim != grid.dim:
        raise ValueError(f"modulation parameters have dimension {P.dim}, grid has {grid.dim}")
    resampled, overflow = sc.band_limited_resample(values, source, grid, scale=P.lam, shift=P.alpha)
    ys = [(c - a) / P.lam for c, a in zip(grid.coords, P.alpha)]
    y_sq = sum(y ** 2 for y in ys)
    beta_y = sum(b * y for b, y in zip(P.beta, ys))
    phase = beta_y - 0.25 * P.gamma * y_sq + P.theta
    return P.lam ** (-grid.dim / 2.0) * resampled * np.exp(1j * phase), overflow


def deformed_profile(ground: GroundState, P: ModParams, grid: Grid) -> Field:
    """w(x) = lambda^(-d/2) Q_P((x - alpha)/lambda) e^(i theta).

    Q_P(y) = Q(y) e^(i beta.y - i gamma |y|^2/4). A warning is logged when
    the rescaled profile is not negligible on the box boundary.
    """
    values, overflow = _modulate(ground.Q.values, ground.grid, P, grid)
    if overflow:
        logger.warning(f"Deformed profile exceeds the box for lambda={P.lam:.4g}, alpha={P.alpha}")
    return Field(grid=grid, values=values)


def deformed_rho(rho: RhoProfile, P: ModParams, grid: Grid) -> Field:
    """rho carried through the same modulation as deformed_profile."""
    values, _ = _modulate(rho.rho.values, rho.rho.grid, P, grid)
    return Field(grid=grid, values=values)


def pseudo_conformal_ST(T: float, t: float, grid: Grid, ground: Optional[GroundState] = None) -> Field:
    """S_T(t, x) = (T-t)^(-d/2) Q(x/(T-t)) e^(i/(T-t) - i|x|^2/(4(T-t))).

    Raises:
        BlowUpTimeError: If t >= T
    """
    if t >= T:
        raise BlowUpTimeError(T, t)
    ground = reference_ground_state(grid.dim) if ground is None else ground
    return deformed_profile(ground, ModParams.pseudo_conformal(T, t, grid.dim), grid)


def apply_symmetry(u: Field, lam0: float, beta0: Sequence[float], theta0: float,
                   x0: Sequence[float]) -> Field:
    """Fixed-time image of u under scaling, translation, Galilean boost and phase.

    v(x) = lam0^(-d/2) u((x - x0)/lam0) e^(i beta0.(x - x0)/2 + i theta0)
    """
    if lam0 <= 0:
        raise ValueError(f"lam0 must be positive, got {lam0}")
    grid = u.grid
    values, overflow = sc.band_limited_resample(u.values, grid, grid, scale=lam0, shift=x0)
    if overflow:
        logger.warning(f"Symmetry image exceeds the box for lam0={lam0:.4g}, x0={list(x0)}")
    boost = sum(0.5 * b * (c - x) for b, c, x in zip(beta0, grid.coords, x0))
    return u.with_values(lam0 ** (-grid.dim / 2.0) * values * np.exp(1j * (boost + theta0)))


def pseudo_conformal_transform(u: Field, t: float) -> Field:
    """|t|^(-d/2) u(x/(-t)) e^(-i|x|^2/(4t)) for a snapshot u taken at time 1/(-t)."""
    if t == 0:
        raise ValueError("pseudo-conformal transform is undefined at t = 0")
    grid = u.grid
    values, overflow = sc.band_limited_resample(u.values, grid, grid, scale=-t)
    if overflow:
        logger.warning(f"Pseudo-conformal image exceeds the box at t={t:.4g}")
    chirp = np.exp(-1j * grid.r_squared / (4.0 * t))
    return u.with_values(abs(t) ** (-grid.dim / 2.0) * values * chirp)


def profile_norms(ground: GroundState) -> ProfileNorms:
    q = ground.values
    grid = ground.grid
    return ProfileNorms(
        mass=sc.mass_values(q, grid),
        grad_sq=sc.gradient_norm_sq_values(q, grid),
        weighted_sq=sc.mass_values(np.sqrt(grid.r_squared) * q, grid),
        energy=sc.energy_values(q, grid),
    )


# Nonlinearity f(z) = |z|^(4/d) z = z^a conj(z)^b with a = 1 + 2/d, b = 2/d.

def _exponents(d: int) -> Tuple[int, int]:
    return 1 + 2 // d, 2 // d


def _monomial(z: np.ndarray, a: int, b: int) -> np.ndarray:
    if a < 0 or b < 0:
        return np.zeros_like(z)
    return z ** a * np.conj(z) ** b


def f(z: np.ndarray, d: int) -> np.ndarray:
    return np.abs(z) ** (4.0 / d) * z


def F(z: np.ndarray, d: int) -> np.ndarray:
    """Potential density with dF = Re(f conj(dz)): d/(2d+4) |z|^(2+4/d)."""
    return d / (2.0 * d + 4.0) * np.abs(z) ** (2.0 + 4.0 / d)


def f_linear(v: np.ndarray, R: np.ndarray, d: int) -> np.ndarray:
    """(1+2/d)|v|^(4/d) R + (2/d)|v|^(4/d-2) v^2 conj(R)."""
    a, b = _exponents(d)
    return a * _monomial(v, a - 1, b) * R + b * _monomial(v, a, b - 1) * np.conj(R)


def f_quadratic(v: np.ndarray, R: np.ndarray, d: int) -> np.ndarray:
    """Second-order term of f(v + R) in R."""
    a, b = _exponents(d)
    return 0.5 * (a * (a - 1) * _monomial(v, a - 2, b) * R ** 2
                  + 2 * a * b * _monomial(v, a - 1, b - 1) * R * np.conj(R)
                  + b * (b - 1) * _monomial(v, a, b - 2) * np.conj(R) ** 2)


def N_f(v: np.ndarray, R: np.ndarray, d: int) -> np.ndarray:
    """f(v + R) - f(v) - f'(v).R, quadratic in R."""
    return f(v + R, d) - f(v, d) - f_linear(v, R, d)
