"""Linearized operators, geometrical decomposition and modulation diagnostics.

A solution close to the blow-up profile is written as
    u = w + R,  w = lambda^(-d/2) Q_P((x - alpha)/lambda) e^(i theta),
with the five modulation parameters fixed by 2d+3 orthogonality conditions
on R. The conditions are solved by Newton iteration with a finite-difference
Jacobian.
"""
from functools import cached_property
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BPoly
from scipy.stats import linregress

from app.common.logging import get_logger
from app.config.config import settings
from app.models.grid import Field, Grid
from app.models.modulation import (
    CoercivityReport,
    DecompositionResult,
    KernelReport,
    ModTrackRow,
    ModVectorSample,
)
from app.models.noise import BrownianLift, NoiseBasis
from app.models.profile import GroundState, ModParams, ProfileNorms, RhoProfile
from app.numerics import spectral_core as sc
from app.numerics.errors import DecompositionError, OutsideBasinError
from app.numerics.noise import coefficient_values
from app.numerics.profiles import (
    F,
    deformed_profile,
    deformed_rho,
    f,
    ground_values_on,
    lminus_values,
    lplus_values,
    profile_norms,
    solve_rho,
)

logger = get_logger(__name__)

DECOMPOSITION_TOL = 1e-10
JACOBIAN_STEP = 1e-6
CONDITION_LIMIT = 1e12
MAX_BACKTRACK = 12
DEFAULT_CUTOFF_SCALE = 10.0

# Quintic Hermite pieces on (1, 2): log of the coercivity weight, and psi'.
_LOG_PHI = BPoly.from_derivatives([1.0, 2.0], [[0.0, 0.0, 0.0], [-2.0, -1.0, 0.0]])
_PSI_PRIME = BPoly.from_derivatives(
    [1.0, 2.0], [[1.0, 1.0, 0.0], [2.0 - np.exp(-2.0), np.exp(-2.0), -np.exp(-2.0)]])


def _check_cutoffs() -> None:
    r = np.linspace(1.0, 2.0, 201)
    if np.any(_LOG_PHI(r) > 0.0):
        logger.warning("Coercivity weight exceeds 1 on (1, 2)")
    psi_second = _PSI_PRIME.derivative()(r)
    if np.any(psi_second < -1e-12):
        logger.warning(f"psi' is not monotone on (1, 2): min psi'' = {psi_second.min():.3e}")
    if np.any(_PSI_PRIME(r) / r - psi_second < -1e-12):
        logger.warning("psi'(r)/r - psi''(r) changes sign on (1, 2)")


_check_cutoffs()


def cutoff_phi(r: np.ndarray, A: float = 1.0) -> np.ndarray:
    """Phi_A at radius r: 1 for r <= A, e^(-r/A) for r >= 2A, smooth in between."""
    if A <= 0:
        raise ValueError(f"cutoff scale must be positive, got {A}")
    s = np.asarray(r, dtype=np.float64) / A
    inner = s <= 1.0
    outer = s >= 2.0
    middle = ~(inner | outer)
    out = np.ones_like(s)
    out[outer] = np.exp(-s[outer])
    out[middle] = np.exp(_LOG_PHI(s[middle]))
    return out


def psi_prime(r: np.ndarray) -> np.ndarray:
    """psi'(r) = r for r <= 1 and 2 - e^(-r) for r >= 2."""
    r = np.asarray(r, dtype=np.float64)
    out = np.array(r, copy=True)
    outer = r >= 2.0
    middle = (r > 1.0) & ~outer
    out[outer] = 2.0 - np.exp(-r[outer])
    out[middle] = _PSI_PRIME(r[middle])
    return out


def chi_gradient(ys: Sequence[np.ndarray], A: float) -> List[np.ndarray]:
    """Gradient of chi_A(y) = A^2 psi(|y|/A): A psi'(|y|/A) y/|y|."""
    if A <= 0:
        raise ValueError(f"cutoff scale must be positive, got {A}")
    radius = np.sqrt(sum(y ** 2 for y in ys))
    # psi'(s)/s -> 1 as s -> 0
    s = radius / A
    ratio = np.ones_like(s)
    away = s > 0
    ratio[away] = psi_prime(s[away]) / s[away]
    return [ratio * y for y in ys]


def apply_L(which: Literal["plus", "minus"], f_field: Field, ground: GroundState) -> Field:
    """L+ or L- applied separately to the real and imaginary parts of f."""
    if which not in ("plus", "minus"):
        raise ValueError(f"unknown operator {which!r}")
    grid = f_field.grid
    q = ground_values_on(ground, grid)
    op = lplus_values if which == "plus" else lminus_values
    return f_field.with_values(op(f_field.real, q, grid) + 1j * op(f_field.imag, q, grid))


class LinearizedOps:
    """Linearized operators around Q and the orthogonality set built from them.

    The imaginary-part directions need rho; it is solved on first use when
    not supplied.
    """

    def __init__(self, ground: GroundState, rho: Optional[RhoProfile] = None):
        self.ground = ground
        self.grid = ground.grid
        self.q = ground.values
        self._rho = rho

    @property
    def rho(self) -> RhoProfile:
        if self._rho is None:
            self._rho = solve_rho(self.ground)
        return self._rho

    @property
    def rho_values(self) -> np.ndarray:
        return rho_values_on(self.rho, self.grid)

    def apply_Lplus(self, f_field: Field) -> Field:
        return apply_L("plus", f_field, self.ground)

    def apply_Lminus(self, f_field: Field) -> Field:
        return apply_L("minus", f_field, self.ground)

    def Lambda(self, f_field: Field) -> Field:
        """(d/2) f + x.grad f."""
        return f_field.with_values(lambda_values(f_field.values, self.grid))

    def kernel_residuals(self) -> KernelReport:
        """Relative residuals of the six generalized kernel relations."""
        grid = self.grid
        q = self.q
        d = grid.dim
        grads = [g.real for g in sc.gradient_values(q, grid)]
        lam_q = lambda_values(q, grid).real
        r2q = grid.r_squared * q

        def _rel(value: np.ndarray, target: np.ndarray, scale: np.ndarray) -> float:
            return sc.norm_values(value - target, grid) / sc.norm_values(scale, grid)

        residuals = {
            "Lplus_grad_Q": max(_rel(lplus_values(g, q, grid), 0.0, g) for g in grads),
            "Lminus_Q": _rel(lminus_values(q, q, grid), 0.0, q),
            "Lplus_Lambda_Q": _rel(lplus_values(lam_q, q, grid), -2.0 * q, q),
            "Lminus_r2_Q": _rel(lminus_values(r2q, q, grid), -4.0 * lam_q, lam_q),
            "Lminus_x_Q": max(
                _rel(lminus_values(c * q, q, grid), -2.0 * g, g) for c, g in zip(grid.coords, grads)),
            "Lplus_rho": _rel(lplus_values(self.rho_values, q, grid), -r2q, r2q),
        }
        report = KernelReport(residuals=residuals)
        logger.info(f"Kernel identities in d={d}: worst relative residual {report.worst:.3e}")
        return report

    def orthogonality_directions(self) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Real-part directions {Q, x_j Q, |x|^2 Q} and imaginary-part directions {d_j Q, Lambda Q, rho}."""
        grid = self.grid
        q = self.q
        real_dirs = [q, *[c * q for c in grid.coords], grid.r_squared * q]
        imag_dirs = [*[g.real for g in sc.gradient_values(q, grid)],
                     lambda_values(q, grid).real, self.rho_values]
        return real_dirs, imag_dirs

    @cached_property
    def _bases(self) -> Tuple[np.ndarray, np.ndarray]:
        real_dirs, imag_dirs = self.orthogonality_directions()
        return _orthonormal_basis(real_dirs, self.grid), _orthonormal_basis(imag_dirs, self.grid)

    def project_onto_orthogonal_set(self, f_field: Field) -> Field:
        """Remove the components of f along the orthogonality directions."""
        real_basis, imag_basis = self._bases
        return f_field.with_values(
            _remove_span(f_field.real, real_basis, self.grid) + 1j * _remove_span(f_field.imag, imag_basis, self.grid))

    def coercivity_form(self, f_field: Field, A: Optional[float] = None) -> float:
        return coercivity_form(f_field, self.ground, A)

    def coercivity_sample(self, trials: int = 100, seed: int = 0, A: Optional[float] = None) -> CoercivityReport:
        """Coercivity ratio over seeded random fields projected onto the orthogonality set."""
        ratios = []
        for trial in range(trials):
            g = self.project_onto_orthogonal_set(random_bump_field(self.grid, seed + trial))
            ratios.append(self.coercivity_form(g, A) / _weighted_h1_sq(g, A))
        report = CoercivityReport(ratios=ratios, localized=A is not None, cutoff_scale=A)
        logger.info(f"Coercivity over {trials} trials (A={A}): nu_hat = {report.nu_hat:.4f}")
        return report


def rho_values_on(rho: RhoProfile, grid: Grid) -> np.ndarray:
    if grid.compatible_with(rho.rho.grid):
        return rho.values
    values, _ = sc.band_limited_resample(rho.rho.values, rho.rho.grid, grid)
    return values.real


def lambda_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    grads = sc.gradient_values(values, grid)
    return 0.5 * grid.dim * values + sum(c * g for c, g in zip(grid.coords, grads))


def _orthonormal_basis(directions: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    matrix = np.stack([np.ravel(d) for d in directions], axis=1) * np.sqrt(grid.cell_volume)
    basis, _ = np.linalg.qr(matrix)
    return basis


def _remove_span(values: np.ndarray, basis: np.ndarray, grid: Grid) -> np.ndarray:
    flat = np.ravel(values) * np.sqrt(grid.cell_volume)
    flat = flat - basis @ (basis.T @ flat)
    return (flat / np.sqrt(grid.cell_volume)).reshape(grid.shape)


def random_bump_field(grid: Grid, seed: int, bumps: int = 6) -> Field:
    """Sum of seeded complex Gaussian bumps centred in [-3, 3]^d."""
    rng = np.random.default_rng(seed)
    values = np.zeros(grid.shape, dtype=np.complex128)
    for _ in range(bumps):
        centre = rng.uniform(-3.0, 3.0, size=grid.dim)
        width = rng.uniform(0.5, 1.5)
        amplitude = rng.normal() + 1j * rng.normal()
        dist = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, centre))
        values += amplitude * np.exp(-dist / (2.0 * width ** 2))
    return Field(grid=grid, values=values)


def _weighted_h1_sq(f_field: Field, A: Optional[float]) -> float:
    grid = f_field.grid
    density = sum(np.abs(g) ** 2 for g in sc.gradient_values(f_field.values, grid)) + np.abs(f_field.values) ** 2
    if A is not None:
        density = density * cutoff_phi(np.sqrt(grid.r_squared), A)
    return float(np.sum(density) * grid.cell_volume)


def coercivity_form(f_field: Field, ground: GroundState, A: Optional[float] = None) -> float:
    """(L f, f) = <L+ f1, f1> + <L- f2, f2>, or its Phi_A-weighted variant.

    The localized form is
        int (|grad f|^2 + |f|^2) Phi_A - (1+4/d) Q^(4/d) f1^2 - Q^(4/d) f2^2.
    """
    grid = f_field.grid
    q = ground_values_on(ground, grid)
    f1, f2 = f_field.real, f_field.imag
    if A is None:
        return (sc.real_inner(f_field.with_values(lplus_values(f1, q, grid)), f_field.with_values(f1))
                + sc.real_inner(f_field.with_values(lminus_values(f2, q, grid)), f_field.with_values(f2)))
    p = 4.0 / grid.dim
    potential = (1.0 + p) * np.abs(q) ** p * f1 ** 2 + np.abs(q) ** p * f2 ** 2
    kinetic = _weighted_h1_sq(f_field, A)
    return kinetic - float(np.sum(potential) * grid.cell_volume)


def analytic_jacobian_scale(norms: ProfileNorms, lam: float, d: int) -> dict:
    """Leading-order diagonal of the decomposition Jacobian and its determinant magnitude.

    Entries are keyed by (functional, parameter):
        alpha: ||Q||^2/2, lambda: lam ||xQ||^2, gamma: ||xQ||^2/4,
        beta: ||Q||^2/(2 lam), theta: ||xQ||^2/2.
    """
    diagonal = {
        "alpha": 0.5 * norms.mass,
        "lambda": lam * norms.weighted_sq,
        "gamma": 0.25 * norms.weighted_sq,
        "beta": 0.5 * norms.mass / lam,
        "theta": 0.5 * norms.weighted_sq,
    }
    determinant = 2.0 ** (-2 * d - 3) * lam ** (1 - d) * norms.mass ** (2 * d) * norms.weighted_sq ** 3
    return {"diagonal": diagonal, "determinant": determinant}


class _Functionals:
    """The 2d+3 orthogonality functionals of u against a trial parameter vector."""

    def __init__(self, u: Field, ground: GroundState, rho: RhoProfile):
        self.u = u
        self.grid = u.grid
        self.ground = ground
        self.rho = rho
        self.evaluations = 0

    def profile(self, P: ModParams) -> Field:
        return deformed_profile(self.ground, P, self.grid)

    def __call__(self, vector: np.ndarray) -> np.ndarray:
        grid = self.grid
        P = ModParams.from_vector(vector, grid.dim)
        w = self.profile(P).values
        rho_t = deformed_rho(self.rho, P, grid).values
        R = self.u.values - w
        shifted = [c - a for c, a in zip(grid.coords, P.alpha)]
        grads = sc.gradient_values(w, grid)
        values = [sc.inner_values(s * w, R, grid).real for s in shifted]
        values.append(sc.inner_values(sum(s ** 2 for s in shifted) * w, R, grid).real)
        dilation = 0.5 * grid.dim * w + sum(s * g for s, g in zip(shifted, grads))
        values.append(sc.inner_values(dilation, R, grid).imag)
        values.extend(sc.inner_values(g, R, grid).imag for g in grads)
        values.append(sc.inner_values(rho_t, R, grid).imag)
        self.evaluations += 1
        return np.array(values)


def _jacobian(fun: Callable[[np.ndarray], np.ndarray], vector: np.ndarray, base: np.ndarray) -> np.ndarray:
    size = vector.size
    jac = np.empty((base.size, size))
    for i in range(size):
        # theta enters only through a global phase, so its step does not scale with |theta|
        h = JACOBIAN_STEP if i == size - 1 else JACOBIAN_STEP * max(1.0, abs(vector[i]))
        shifted = np.array(vector, copy=True)
        shifted[i] += h
        jac[:, i] = (fun(shifted) - base) / h
    return jac


def _epsilon(R: Field, P: ModParams) -> Field:
    """lambda^(d/2) e^(-i theta) R(lambda y + alpha)."""
    grid = R.grid
    shift = [-a / P.lam for a in P.alpha]
    values, _ = sc.band_limited_resample(R.values, grid, grid, scale=1.0 / P.lam, shift=shift)
    return R.with_values(P.lam ** (grid.dim / 2.0) * np.exp(-1j * P.theta) * values)


def decompose(u: Field, P_init: ModParams, ground: GroundState, rho: RhoProfile,
              tol: Optional[float] = None, max_iter: Optional[int] = None) -> DecompositionResult:
    """Modulation parameters P for which R = u - w(P) meets the orthogonality conditions.

    Args:
        u: Snapshot on its own grid
        P_init: Starting parameters, inside the Newton basin
        ground: Ground state Q
        rho: Solution of L+ rho = -|x|^2 Q
        tol: Absolute residual target; defaults to 1e-10 ||Q||^2
        max_iter: Newton iteration cap; defaults to settings.NEWTON_MAX_ITER

    Returns:
        DecompositionResult: P with the remainder in lab and rescaled variables

    Raises:
        OutsideBasinError: If the Jacobian is near singular
        DecompositionError: If Newton fails to converge
    """
    if P_init.dim != u.grid.dim:
        raise ValueError(f"P_init has dimension {P_init.dim}, snapshot has {u.grid.dim}")
    norms = profile_norms(ground)
    tol = DECOMPOSITION_TOL * norms.mass if tol is None else tol
    max_iter = settings.NEWTON_MAX_ITER if max_iter is None else max_iter
    functionals = _Functionals(u, ground, rho)

    vector = P_init.to_vector()
    G = functionals(vector)
    history = [float(np.max(np.abs(G)))]
    condition = None
    iterations = 0
    while history[-1] >= tol:
        if iterations >= max_iter:
            logger.error(f"Decomposition did not converge in {max_iter} Newton steps")
            raise DecompositionError(
                f"Newton did not converge in {max_iter} iterations (residual {history[-1]:.3e})", history)
        jac = _jacobian(functionals, vector, G)
        condition = float(np.linalg.cond(jac))
        if not np.isfinite(condition) or condition > CONDITION_LIMIT:
            logger.error(f"Decomposition Jacobian condition number {condition:.3e}")
            raise OutsideBasinError(residual_history=history)
        if iterations == 0:
            expected = analytic_jacobian_scale(norms, vector[0], u.grid.dim)["determinant"]
            ratio = abs(np.linalg.det(jac)) / expected
            logger.debug(f"Jacobian determinant over its leading-order value: {ratio:.3e}")
            if not 1e-2 < ratio < 1e2:
                logger.warning(f"Decomposition Jacobian far from leading order (det ratio {ratio:.3e})")

        delta = np.linalg.solve(jac, -G)
        step = 1.0
        for _ in range(MAX_BACKTRACK):
            trial = vector + step * delta
            if trial[0] > 0:
                G_trial = functionals(trial)
                if np.max(np.abs(G_trial)) < history[-1]:
                    break
            step *= 0.5
        else:
            logger.error("Decomposition line search failed")
            raise DecompositionError("Newton line search failed to reduce the residual", history)
        vector, G = trial, G_trial
        iterations += 1
        history.append(float(np.max(np.abs(G))))
        logger.debug(f"Newton step {iterations}: residual {history[-1]:.3e} (step {step})")

    P = ModParams.from_vector(vector, u.grid.dim)
    w = functionals.profile(P)
    R = u - w
    logger.info(f"Decomposed in {iterations} Newton steps: lambda={P.lam:.6g}, residual {history[-1]:.3e}")
    return DecompositionResult(
        P=P, epsilon=_epsilon(R, P), R=R, w=w, ortho_residuals=[float(g) for g in G],
        newton_iters=iterations, residual_history=history, jacobian_condition=condition,
    )


def mod_vector(times: Sequence[float], P_series: Sequence[ModParams]) -> List[ModVectorSample]:
    """Residual of the leading-order modulation equations along a parameter series.

    Derivatives are second-order finite differences (centred in the interior).
    """
    if len(times) != len(P_series):
        raise ValueError("times and P_series differ in length")
    if len(P_series) < 3:
        raise ValueError("mod_vector needs at least 3 samples")
    t = np.asarray(times, dtype=np.float64)
    d = P_series[0].dim
    params = np.stack([P.to_vector() for P in P_series])
    rates = np.gradient(params, t, axis=0, edge_order=2)

    samples = []
    for i, P in enumerate(P_series):
        lam_t = rates[i, 0]
        alpha_t = rates[i, 1:1 + d]
        beta_t = rates[i, 1 + d:1 + 2 * d]
        gamma_t = rates[i, 1 + 2 * d]
        theta_t = rates[i, 2 + 2 * d]
        lam, gamma = P.lam, P.gamma
        beta = np.asarray(P.beta)
        components = [
            abs(lam * lam_t + gamma),
            abs(lam ** 2 * gamma_t + gamma ** 2),
            float(np.linalg.norm(lam * alpha_t - 2.0 * beta)),
            float(np.linalg.norm(lam ** 2 * beta_t + gamma * beta)),
            abs(lam ** 2 * theta_t - 1.0 - float(beta @ beta)),
        ]
        samples.append(ModVectorSample(t=float(t[i]), Mod=float(sum(components)),
                                       components=[float(c) for c in components],
                                       P_dot=[float(r) for r in rates[i]]))
    return samples


def profile_residual_eta(P: ModParams, P_dot: Sequence[float], ground: GroundState, grid: Grid,
                         basis: Optional[NoiseBasis] = None, lift: Optional[BrownianLift] = None,
                         t: float = 0.0) -> Tuple[Field, float]:
    """eta = i w_t + lap w + |w|^(4/d) w + b.grad w + c w for w = deformed_profile(Q, P).

    w_t follows from the chain rule through P with rates P_dot, given in
    (lambda, alpha, beta, gamma, theta) order.
    """
    d = grid.dim
    lam_t = float(P_dot[0])
    alpha_t = np.asarray(P_dot[1:1 + d], dtype=np.float64)
    beta_t = np.asarray(P_dot[1 + d:1 + 2 * d], dtype=np.float64)
    gamma_t = float(P_dot[1 + 2 * d])
    theta_t = float(P_dot[2 + 2 * d])

    w = deformed_profile(ground, P, grid).values
    grads = sc.gradient_values(w, grid)
    ys = [(c - a) / P.lam for c, a in zip(grid.coords, P.alpha)]
    y_sq = sum(y ** 2 for y in ys)
    log_rate = (-0.5 * d * lam_t / P.lam + 1j * theta_t
                + 1j * (sum(b * y for b, y in zip(beta_t, ys)) - 0.25 * gamma_t * y_sq))
    transport = sum(g * (a + y * lam_t) for g, a, y in zip(grads, alpha_t, ys))
    w_t = w * log_rate - transport

    eta = 1j * w_t + sc.laplacian_values(w, grid) + f(w, d)
    if basis is not None and lift is not None:
        _, b, c = coefficient_values(basis, lift.path_at(t))
        eta = eta + sum(bj * g for bj, g in zip(b, grads)) + c * w
    field = Field(grid=grid, values=eta)
    return field, sc.norm(field)


def generalized_energy(R: Field, w: Field, P: ModParams, A: float = DEFAULT_CUTOFF_SCALE) -> float:
    """I = 1/2 int |grad R|^2 + |R|^2/lambda^2 - Re int (F(u) - F(w) - f(w) conj R)
    + gamma/(2 lambda) Im int grad chi_A((x - alpha)/lambda).grad R conj R."""
    sc.check_same_grid(R, w)
    grid = R.grid
    d = grid.dim
    r, wv = R.values, w.values
    u = wv + r
    grads = sc.gradient_values(r, grid)
    quadratic = 0.5 * (sc.gradient_norm_sq_values(r, grid) + sc.mass_values(r, grid) / P.lam ** 2)
    potential = sc.integrate_values(F(u, d) - F(wv, d) - (f(wv, d) * np.conj(r)).real, grid).real
    ys = [(c - a) / P.lam for c, a in zip(grid.coords, P.alpha)]
    chi = chi_gradient(ys, A)
    localized = sc.integrate_values(sum(cj * g for cj, g in zip(chi, grads)) * np.conj(r), grid).imag
    return float(quadratic - potential + P.gamma / (2.0 * P.lam) * localized)


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """(C, p) with y ~ C x^p from a log-log least-squares fit over positive samples."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(keep) < 2:
        raise ValueError("power-law fit needs at least two positive samples")
    fit = linregress(np.log(x[keep]), np.log(y[keep]))
    return float(np.exp(fit.intercept)), float(fit.slope)


def _unwrap_theta(P: ModParams, reference: float) -> ModParams:
    turns = np.round((reference - P.theta) / (2.0 * np.pi))
    if turns == 0:
        return P
    return P.model_copy(update={"theta": P.theta + 2.0 * np.pi * turns})


def _extrapolate(previous: List[ModParams], times: Sequence[float], index: int) -> ModParams:
    if len(previous) < 2:
        return previous[-1]
    a, b = previous[-2].to_vector(), previous[-1].to_vector()
    ratio = (times[index] - times[index - 1]) / (times[index - 1] - times[index - 2])
    guess = b + ratio * (b - a)
    if guess[0] <= 0:
        return previous[-1]
    return ModParams.from_vector(guess, previous[-1].dim)


def track(snapshots: Sequence[Field], times: Sequence[float], P_init: ModParams, ground: GroundState,
          rho: RhoProfile, A: float = DEFAULT_CUTOFF_SCALE) -> List[ModTrackRow]:
    """Warm-started decomposition of a snapshot series.

    Each solve starts from the linear extrapolation of the previous two
    parameter sets, and theta is kept continuous across the series.
    """
    if len(snapshots) != len(times):
        raise ValueError("snapshots and times differ in length")
    fitted: List[ModParams] = []
    results: List[DecompositionResult] = []
    for i, u in enumerate(snapshots):
        guess = P_init if not fitted else _extrapolate(fitted, times, i)
        result = decompose(u, guess, ground, rho)
        P = _unwrap_theta(result.P, guess.theta)
        fitted.append(P)
        results.append(result)

    mods: List[Optional[float]] = [None] * len(fitted)
    if len(fitted) >= 3:
        mods = [s.Mod for s in mod_vector(times, fitted)]
    rows = []
    for t, P, result, mod in zip(times, fitted, results, mods):
        eps = result.epsilon
        rows.append(ModTrackRow(
            t=float(t), P=P, Mod=mod, eps_norm=sc.norm(eps),
            eps_grad_norm=float(np.sqrt(sc.gradient_norm_sq_values(eps.values, eps.grid))),
            generalized_energy=generalized_energy(result.R, result.w, P, A),
            max_ortho_residual=result.max_residual,
        ))
    logger.info(f"Tracked {len(rows)} snapshots")
    return rows
