"""The canonical experiments.

Each experiment takes a RunConfig and an ExperimentContext and returns an
ExperimentOutcome: acceptance checks, flat results, CSV tables, snapshots and
extra JSON documents. Writing them out is the service's job.
"""
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from app.common.logging import configure_logging, get_logger
from app.common.metrics import counter
from app.config.config import settings
from app.models.grid import Field, Grid
from app.models.modulation import ModTrackRow
from app.models.noise import BasisKind, BrownianLift, NoiseBasis
from app.models.profile import GroundState, ModParams, RhoProfile
from app.models.run import CheckResult, Experiment, RunConfig
from app.models.trajectory import SolverConfig, TrajectoryRecord, TrajectoryStatus
from app.numerics import spectral_core as sc
from app.numerics.errors import LabError, StageError
from app.numerics.evolve import energy_drift_audit, run_trajectory, to_X_series
from app.numerics.modulation import (
    LinearizedOps,
    fit_power_law,
    mod_vector,
    profile_residual_eta,
    track,
)
from app.numerics.noise import make_basis, sample_brownian
from app.numerics.profiles import profile_norms, pseudo_conformal_ST, radial_shooting_oracle
from app.numerics.roughpath import ito_left_sum, remainder_holder, weak_form_path, weak_form_refinement
from app.repositories.errors import RepositoryError
from app.repositories.lift_repo import LiftRepository
from app.repositories.snapshot_repo import ProfileCache

logger = get_logger(__name__)

GROUND_RESIDUAL_TOL = 1e-10
KERNEL_TOL = 1e-6
RHO_RESIDUAL_TOL = 1e-8
SOLITON_L2_TOL = 1e-6
SOLITON_DT = 1e-3
MASS_STEP_TOL = 1e-12
SOLITON_ENERGY_TOL = 1e-6
ST_CLOSED_FORM_TOL = 1e-4
TAU_STAR_REL_TOL = 0.02
ROUGH_RATE_MIN = 0.4
MOD_EXPONENT_MIN = 4.0
ETA_EXPONENT_MIN = 2.5
DECOMPOSITION_RESIDUAL_TOL = 1e-10
TRACK_RESOLVED_WIDTHS = 16
GRAD_MEDIAN_FACTOR = 5.0
SWEEP_SEEDS = 10
SWEEP_PERIODS = 5
LAMBDA_FLOOR_CELLS = 8
LIFT_FILE = "lift.bin"

GROUND_ORACLE_REL_TOL = {1: 1e-6, 2: 1e-5}


def ground_oracle(dim: int) -> Dict[str, float]:
    """Q(0) and ||Q||^2: closed form in d = 1, radial shooting in d = 2."""
    if dim == 1:
        return {"Q0": 3.0 ** 0.25, "mass": np.sqrt(3.0) * np.pi / 2.0}
    shot = radial_shooting_oracle(dim)
    return {"Q0": shot.Q0, "mass": shot.mass}


class ExperimentOutcome(BaseModel):
    """Everything an experiment produced."""
    checks: List[CheckResult] = PydanticField(default_factory=list)
    results: Dict[str, object] = PydanticField(default_factory=dict)
    tables: Dict[str, Tuple[List[str], List[List[object]]]] = PydanticField(default_factory=dict)
    snapshots: Dict[str, Field] = PydanticField(default_factory=dict)
    series: Dict[str, Tuple[List[float], List[Field]]] = PydanticField(default_factory=dict)
    documents: Dict[str, dict] = PydanticField(default_factory=dict)
    lifts: Dict[str, BrownianLift] = PydanticField(default_factory=dict)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def check(self, name: str, value: Optional[float], threshold: Optional[float], passed: bool) -> None:
        value = None if value is None or not np.isfinite(value) else float(value)
        self.checks.append(CheckResult(name=name, value=value, threshold=threshold, passed=bool(passed)))
        logger.info(f"Check {name}: value={value} threshold={threshold} -> {'pass' if passed else 'FAIL'}")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise numerical failures as StageError naming `name`."""
    try:
        yield
    except StageError:
        raise
    except (LabError, RepositoryError, ValueError, FloatingPointError) as e:
        logger.error(f"Stage {name} failed: {str(e)}", exc_info=True)
        raise StageError(name, f"Failed to complete {name}: {str(e)}") from e


class ExperimentContext:
    """Grid plus lazily solved, cached profiles for one run."""

    def __init__(self, config: RunConfig, cache: ProfileCache):
        self.config = config
        self.cache = cache
        self.grid = Grid(dim=config.dim, n=config.n, half_length=config.L)
        self._ground: Optional[GroundState] = None
        self._rho: Optional[RhoProfile] = None

    @property
    def ground(self) -> GroundState:
        if self._ground is None:
            with stage("ground_state"):
                self._ground = self.cache.ground_state_for(self.grid)
        return self._ground

    @property
    def rho(self) -> RhoProfile:
        if self._rho is None:
            with stage("rho"):
                self._rho = self.cache.rho_for(self.ground)
        return self._rho

    def basis(self, force: bool = False) -> Optional[NoiseBasis]:
        """Noise basis from the config; with `force`, a zero-amplitude mode stands in for no noise."""
        cfg = self.config
        if cfg.noise_modes == 0 and not force:
            return None
        n_modes = max(cfg.noise_modes, 1)
        amplitude = cfg.noise_amp if cfg.noise_modes else 0.0
        widths = [cfg.noise_width * (1.0 + 0.5 * k) for k in range(n_modes)]
        with stage("noise_basis"):
            return make_basis(BasisKind.FLAT_POLY_GAUSS, n_modes, [amplitude] * n_modes, self.grid, widths=widths)

    def lift(self, basis: Optional[NoiseBasis], t_end: float, path: int = 0,
             steps: Optional[int] = None) -> Optional[BrownianLift]:
        """Lift driving the noise: the stored lift_input for path 0, otherwise a fresh sample."""
        if basis is None:
            return None
        if self.config.lift_input is not None and path == 0:
            with stage("load_lift"):
                stored = LiftRepository().read(self.config.lift_input)
                if stored.N != basis.N or stored.mesh[-1] < t_end - 1e-12:
                    raise ValueError(f"stored lift has N={stored.N} on [0, {stored.mesh[-1]}], "
                                     f"need N={basis.N} on [0, {t_end}]")
            logger.info(f"Replaying lift from {self.config.lift_input}")
            return stored
        mesh = np.linspace(0.0, t_end, (steps or self.config.mesh_steps) + 1)
        with stage("brownian_lift"):
            return sample_brownian(basis.N, mesh, substeps=self.config.substeps, seed=self.config.seed, path=path)

    def initial_data(self, init: Optional[str] = None, mass_ratio: Optional[float] = None) -> Field:
        """Initial field with mass mass_ratio * ||Q||^2 (for ground and ST, a rescaled profile)."""
        cfg = self.config
        init = init or cfg.init
        ratio = cfg.mass_ratio if mass_ratio is None else mass_ratio
        if init == "ST":
            profile = pseudo_conformal_ST(cfg.T, 0.0, self.grid, self.ground)
        elif init == "ground":
            profile = self.ground.Q
        else:
            gaussian = Field(grid=self.grid, values=np.exp(-self.grid.r_squared))
            profile = gaussian * np.sqrt(profile_norms(self.ground).mass / sc.mass(gaussian))
        return profile * np.sqrt(ratio)


def _diagnostics_table(record: TrajectoryRecord) -> Tuple[List[str], List[List[object]]]:
    return record.csv_header(), record.csv_rows()


def _trajectory_results(record: TrajectoryRecord) -> Dict[str, object]:
    return {
        "status": record.status.value,
        "final_time": record.final_time,
        "steps": len(record.times) - 1,
        "tau_star_estimate": record.tau_star_estimate,
        "max_gradnorm": max(record.gradnorm),
        "max_mass_drift": record.max_mass_drift(),
        "gn_satisfied_all": all(record.gn_satisfied),
    }


def ground_state(cfg: RunConfig, ctx: ExperimentContext) -> ExperimentOutcome:
    """Solve Q and rho, check the closed-form values and the kernel identities."""
    out = ExperimentOutcome()
    ground, rho = ctx.ground, ctx.rho
    with stage("kernel_identities"):
        kernel = LinearizedOps(ground, rho).kernel_residuals()
    norms = profile_norms(ground)
    q0 = ground.Q.at_origin().real
    out.results.update({
        "Q0": q0, "mass": norms.mass, "energy": norms.energy, "grad_sq": norms.grad_sq,
        "weighted_sq": norms.weighted_sq, "residual": ground.residual, "iterations": ground.iterations,
        "rho_residual": rho.residual, "rho_decay_rate": rho.decay_rate,
        "rho_at_origin": rho.rho.at_origin().real, "kernel_worst": kernel.worst,
    })
    for name, value in kernel.residuals.items():
        out.results[f"kernel_{name}"] = value

    with stage("oracle"):
        oracle = ground_oracle(cfg.dim)
    rel_tol = GROUND_ORACLE_REL_TOL[cfg.dim]
    rises = ground.residual_rises()
    out.check("ground_state_residual", ground.residual, GROUND_RESIDUAL_TOL, ground.residual <= GROUND_RESIDUAL_TOL)
    out.check("residual_monotone", len(rises), 0, not rises)
    for key in ("Q0", "mass"):
        got = q0 if key == "Q0" else norms.mass
        rel = abs(got - oracle[key]) / oracle[key]
        out.results[f"{key}_oracle_value"] = oracle[key]
        out.check(f"{key}_oracle", rel, rel_tol, rel <= rel_tol)
    out.check("rho_residual", rho.residual, RHO_RESIDUAL_TOL, rho.residual < RHO_RESIDUAL_TOL)
    out.check("kernel_identities", kernel.worst, KERNEL_TOL, kernel.worst <= KERNEL_TOL)

    grid = ctx.grid
    line = (slice(None),) + (grid.n // 2,) * (grid.dim - 1)
    out.tables["profile.csv"] = (["x", "Q", "rho"], [
        [float(x), float(q), float(r)]
        for x, q, r in zip(grid.axis, ground.values[line], rho.values[line])
    ])
    out.snapshots["Q.rnls"] = ground.Q
    out.snapshots["rho.rnls"] = rho.rho
    return out


def exact_soliton(cfg: RunConfig, ctx: ExperimentContext) -> ExperimentOutcome:
    """Evolve Q without noise and compare with Q e^(it)."""
    out = ExperimentOutcome()
    ground = ctx.ground
    t_end = cfg.t_end or 2.0 * np.pi
    dt = cfg.dt0 if "dt0" in cfg.model_fields_set else SOLITON_DT
    solver = SolverConfig(dt0=dt, adaptive=False, t_end=t_end, snapshot_times=[t_end])
    with stage("evolve"):
        record = run_trajectory(ground.Q, solver, ground=ground)
    final = record.snapshots[-1]
    error = sc.norm(final - ground.Q * np.exp(1j * t_end)) / sc.norm(ground.Q)
    energy_drift = max(abs(e - record.energy[0]) for e in record.energy)

    out.results.update(_trajectory_results(record))
    out.results.update({"l2_error": error, "energy_drift": energy_drift, "dt": dt})
    out.check("soliton_l2_error", error, SOLITON_L2_TOL, error < SOLITON_L2_TOL)
    out.check("mass_per_step", record.max_mass_drift(), MASS_STEP_TOL, record.max_mass_drift() < MASS_STEP_TOL)
    out.check("energy_drift", energy_drift, SOLITON_ENERGY_TOL, energy_drift < SOLITON_ENERGY_TOL)
    out.tables["diagnostics.csv"] = _diagnostics_table(record)
    return out


def pseudoconformal(cfg: RunConfig, ctx: ExperimentContext) -> ExperimentOutcome:
    """Evolve from S_T(0); check the closed form, tau* and the lambda band."""
    out = ExperimentOutcome()
    ground = ctx.ground
    T = cfg.T
    basis = ctx.basis()
    lift = ctx.lift(basis, T)
    u0 = pseudo_conformal_ST(T, 0.0, ctx.grid, ground)
    count = max(cfg.snapshots, 2)
    snapshot_times = [float(t) for t in np.linspace(0.0, 0.5 * T, count)]
    solver = SolverConfig(dt0=cfg.dt0, adaptive=cfg.adaptive, t_end=T, snapshot_times=snapshot_times)
    with stage("evolve"):
        record = run_trajectory(u0, solver, basis, lift, ground)

    out.results.update(_trajectory_results(record))
    out.results["lambda_est_band_ok"] = record.lambda_band_ok(T)
    out.check("mass_per_step", record.max_mass_drift(), MASS_STEP_TOL, record.max_mass_drift() < MASS_STEP_TOL)
    out.check("blowup_detected", None, None, record.status != TrajectoryStatus.COMPLETED)
    if record.status == TrajectoryStatus.BLOWUP_DETECTED:
        counter("BlowupDetected")

    if basis is None:
        half = record.snapshots[-1]
        exact = pseudo_conformal_ST(T, 0.5 * T, ctx.grid, ground)
        error = sc.norm(half - exact) / sc.norm(exact)
        out.results["closed_form_error"] = error
        out.check("closed_form_error", error, ST_CLOSED_FORM_TOL, error < ST_CLOSED_FORM_TOL)
        tau = record.tau_star_estimate
        rel = abs(tau - T) / T if tau is not None else None
        out.check("tau_star", rel, TAU_STAR_REL_TOL, rel is not None and rel < TAU_STAR_REL_TOL)
    else:
        with stage("decompose"):
            rows = track(record.snapshots, record.snapshot_times, ModParams.pseudo_conformal(T, 0.0, cfg.dim),
                         ground, ctx.rho, cfg.cutoff_scale)
        floor = LAMBDA_FLOOR_CELLS * ctx.grid.dx
        resolved = [r for r in rows if r.P.lam >= floor]
        bands = _bands(resolved, T) if resolved else {"lambda_band_ok": False}
        out.results.update({"fitted_snapshots": len(resolved), "final_fitted_lambda": rows[-1].P.lam,
                            "fitted_lambda_band_ok": bands["lambda_band_ok"]})
        out.check("lambda_band", None, None, bands["lambda_band_ok"])
        out.tables["mod_track.csv"] = (ModTrackRow.csv_header(cfg.dim), [r.csv_row() for r in rows])
        with stage("energy_audit"):
            audit = energy_drift_audit(record, basis, lift)
        out.results.update({"audit_measured": audit.measured[-1], "audit_predicted": audit.predicted[-1],
                            "audit_relative_mismatch": audit.relative_mismatch})
        out.tables["energy_audit.csv"] = (["t", "measured", "predicted", "predicted_direct"], [
            list(row) for row in zip(audit.times, audit.measured, audit.predicted, audit.predicted_direct)])
    out.tables["diagnostics.csv"] = _diagnostics_table(record)
    out.series["snapshots"] = (record.snapshot_times, record.snapshots)
    return out


def _sweep_member(config_json: str, cache_root: str, ratio: float, path: int, t_end: float) -> Dict[str, object]:
    """One threshold-sweep trajectory; runs in a worker process when MAX_WORKERS > 1."""
    cfg = RunConfig.model_validate_json(config_json)
    ctx = ExperimentContext(cfg, ProfileCache(cache_root))
    basis = ctx.basis()
    lift = ctx.lift(basis, t_end, path=path)
    u0 = ctx.initial_data("ST", ratio)
    solver = SolverConfig(dt0=cfg.dt0, adaptive=cfg.adaptive, t_end=t_end)
    with stage(f"evolve ratio={ratio} path={path}"):
        record = run_trajectory(u0, solver, basis, lift, ctx.ground)
    return {"ratio": ratio, "path": path, "grad_over_median": record.max_gradnorm_over_running_median(),
            **_trajectory_results(record)}


def sweep_checks(out: ExperimentOutcome, members: Sequence[Dict[str, object]]) -> None:
    """Global behaviour below the threshold, blow-up at and above it."""
    below = [m for m in members if m["ratio"] < 1.0]
    at_or_above = [m for m in members if m["ratio"] >= 1.0]
    completed = sum(m["status"] == TrajectoryStatus.COMPLETED.value for m in below)
    out.results.update({"members": len(members), "subthreshold_completed": completed,
                        "threshold_blowups": sum(m["status"] != TrajectoryStatus.COMPLETED.value for m in at_or_above)})
    if below:
        out.check("subthreshold_global", completed, len(below), completed == len(below))
        out.check("subthreshold_gn", None, None, all(m["gn_satisfied_all"] for m in below))
        for ratio in sorted({m["ratio"] for m in below}):
            worst = max(m["grad_over_median"] for m in below if m["ratio"] == ratio)
            out.results[f"grad_over_median_{ratio!r}"] = worst
            out.check(f"grad_running_median_{ratio!r}", worst, GRAD_MEDIAN_FACTOR, worst <= GRAD_MEDIAN_FACTOR)
    if at_or_above:
        out.check("threshold_blowup", None, None,
                  all(m["status"] != TrajectoryStatus.COMPLETED.value for m in at_or_above))


def threshold_sweep(cfg: RunConfig, ctx: ExperimentContext) -> ExperimentOutcome:
    """Trajectories from sqrt(r) S_T(0) for each mass ratio r, one per noise seed."""
    out = ExperimentOutcome()
    _ = ctx.ground
    t_end = cfg.t_end if cfg.t_end is not None else SWEEP_PERIODS * 2.0 * np.pi
    seeds = cfg.ensemble_size or SWEEP_SEEDS
    jobs = [(ratio, path) for ratio in cfg.mass_ratios for path in range(seeds)]
    config_json = cfg.model_dump_json()
    cache_root = str(ctx.cache.root)
    if settings.MAX_WORKERS > 1 and len(jobs) > 1:
        logger.info(f"Dispatching {len(jobs)} sweep members to {settings.MAX_WORKERS} workers")
        with ProcessPoolExecutor(max_workers=settings.MAX_WORKERS, initializer=configure_logging) as pool:
            futures = [pool.submit(_sweep_member, config_json, cache_root, r, p, t_end) for r, p in jobs]
            members = [f.result() for f in futures]
    else:
        members = [_sweep_member(config_json, cache_root, r, p, t_end) for r, p in jobs]

    rows = []
    for m in members:
        rows.append([m["ratio"], m["path"], m["status"], m["max_gradnorm"], m["grad_over_median"],
                     m["tau_star_estimate"], m["gn_satisfied_all"]])
        if m["status"] == TrajectoryStatus.BLOWUP_DETECTED.value:
            counter("BlowupDetected")
    out.tables["sweep.csv"] = (["mass_ratio", "path", "status", "max_gradnorm", "grad_over_median", "tau_star",
                                "gn_satisfied_all"], rows)
    out.results["t_end"] = t_end
    sweep_checks(out, members)
    return out


def compact_test_function(grid: Grid, radius: Optional[float] = None) -> Field:
    """Smooth bump exp(1 - 1/(1 - |x|^2/a^2)) supported in |x| < a (default a = L/2)."""
    a = 0.5 * grid.half_length if radius is None else radius
    s = grid.r_squared / a ** 2
    inside = s < 1.0
    values = np.zeros(grid.shape)
    values[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return Field(grid=grid, values=values)


def _evolve_on_lift(u0: Field, basis: NoiseBasis, lift: BrownianLift, ground: GroundState) -> List[Field]:
    """u at every mesh point of the lift, stepping exactly from mesh point to mesh point."""
    mesh = [float(t) for t in lift.mesh]
    solver = SolverConfig(dt0=float(np.max(np.diff(lift.mesh))), adaptive=False, t_end=mesh[-1],
                          snapshot_times=mesh)
    record = run_trajectory(u0, solver, basis, lift, ground)
    if len(record.snapshots) != lift.M + 1:
        raise ValueError(f"expected {lift.M + 1} snapshots, trajectory stored {len(record.snapshots)}")
    return to_X_series(record.snapshots, record.snapshot_times, basis, lift)


def rough_check(cfg: RunConfig, ctx: ExperimentContext) -> ExperimentOutcome:
    """Weak rough-form residual of the evolved X across dyadic mesh refinements."""
    out = ExperimentOutcome()
    ground = ctx.ground
    basis = ctx.basis(force=True)
    zero_noise = cfg.noise_modes == 0 or cfg.noise_amp == 0.0
    t_end = cfg.horizon
    finest = ctx.lift(basis, t_end)
    u0 = ctx.initial_data()
    testfn = compact_test_function(ctx.grid)

    levels = []
    for level in range(cfg.refinement_levels):
        lift = finest.coarsen(2 ** level) if level else finest
        with stage(f"evolve level {level}"):
            levels.append((_evolve_on_lift(u0, basis, lift, ground), lift))
    with stage("weak_form"):
        report = weak_form_refinement(levels, basis, testfn)
        X_fine, _ = levels[0]
        path = weak_form_path(X_fine, basis, testfn, finest.mesh)
        holder = remainder_holder(path, finest)
        ito = complex(np.sum(ito_left_sum(path, finest, 0, finest.M)))

    out.results.update({
        "residual": report.residual, "rate_estimate": report.rate_estimate, "mesh": report.mesh,
        "rhs_abs": abs(report.rhs), "lhs_abs": abs(report.lhs), "ito_left_sum_abs": abs(ito),
        "remainder_holder": holder, "zero_noise": zero_noise,
    })
    out.documents["rough_report.json"] = report.to_json_dict()
    out.lifts[LIFT_FILE] = finest
    out.tables["refinement.csv"] = (["mesh", "residual"],
                                    [list(r) for r in zip(report.refinement_steps, report.refinement_residuals)])
    out.check("remainder_holder_finite", holder, None, bool(np.isfinite(holder)))
    if zero_noise:
        out.check("zero_noise_rhs", abs(report.rhs), 0.0, report.rhs == 0)
    else:
        rate = report.rate_estimate
        out.check("refinement_rate", rate, ROUGH_RATE_MIN, rate is not None and rate >= ROUGH_RATE_MIN)
    return out


def _bands(rows: Sequence[ModTrackRow], T: float) -> Dict[str, object]:
    gaps = np.array([T - r.t for r in rows])
    lam = np.array([r.P.lam for r in rows])
    gamma = np.array([r.P.gamma for r in rows])
    return {
        "lambda_band_ok": bool(np.all((lam >= 0.5 * gaps) & (lam <= 3.0 * gaps))),
        "gamma_band_ok": bool(np.all((gamma >= 0.5 * gaps) & (gamma <= 3.0 * gaps))),
        "max_eps_grad_over_gap2": float(np.max(np.array([r.eps_grad_norm for r in rows]) / gaps ** 2)),
        "max_eps_over_gap3": float(np.max(np.array([r.eps_norm for r in rows]) / gaps ** 3)),
    }


def modulation_track(cfg: RunConfig, ctx: ExperimentContext) -> ExperimentOutcome:
    """Evolve from S_T(0), decompose every snapshot and audit the modulation equations."""
    out = ExperimentOutcome()
    ground, rho = ctx.ground, ctx.rho
    T = cfg.T
    t_stop = T - max(0.1 * T, TRACK_RESOLVED_WIDTHS * ctx.grid.dx)
    if t_stop <= 0:
        raise StageError("modulation_track", f"grid too coarse to resolve S_T before T={T}")
    count = max(cfg.snapshots, 16)
    times = [float(t) for t in np.linspace(0.0, t_stop, count)]
    basis = ctx.basis()
    lift = ctx.lift(basis, t_stop)
    u0 = pseudo_conformal_ST(T, 0.0, ctx.grid, ground)
    solver = SolverConfig(dt0=cfg.dt0, adaptive=cfg.adaptive, t_end=t_stop, snapshot_times=times)
    with stage("evolve"):
        record = run_trajectory(u0, solver, basis, lift, ground)
    if record.status != TrajectoryStatus.COMPLETED:
        raise StageError("evolve", f"trajectory stopped early with status {record.status.value}")

    with stage("decompose"):
        rows = track(record.snapshots, record.snapshot_times, ModParams.pseudo_conformal(T, 0.0, cfg.dim),
                     ground, rho, cfg.cutoff_scale)
    with stage("mod_vector"):
        samples = mod_vector([r.t for r in rows], [r.P for r in rows])
        etas = [profile_residual_eta(r.P, s.P_dot, ground, ctx.grid, basis, lift, r.t)[1]
                for r, s in zip(rows, samples)]

    out.tables["mod_track.csv"] = (ModTrackRow.csv_header(cfg.dim), [r.csv_row() for r in rows])
    out.tables["eta.csv"] = (["t", "lambda", "eta_l2"], [[r.t, r.P.lam, e] for r, e in zip(rows, etas)])
    mods = [s.Mod for s in samples]
    lams = [r.P.lam for r in rows]
    out.results.update({"snapshots": len(rows), "max_Mod": max(mods), "max_eta": max(etas),
                        "final_lambda": lams[-1], "max_I": max(abs(r.generalized_energy) for r in rows)})
    out.results.update(_bands(rows, T))
    worst = max(r.max_ortho_residual for r in rows)
    limit = DECOMPOSITION_RESIDUAL_TOL * profile_norms(ground).mass
    out.results["max_ortho_residual"] = worst
    out.check("orthogonality_residuals", worst, limit, worst < limit)
    out.check("lambda_band", None, None, out.results["lambda_band_ok"])

    if basis is not None:
        mod_c, mod_p = fit_power_law(lams, mods)
        eta_c, eta_p = fit_power_law(lams, etas)
        out.results.update({"Mod_C": mod_c, "Mod_exponent": mod_p, "eta_C": eta_c, "eta_exponent": eta_p})
        out.check("Mod_exponent", mod_p, MOD_EXPONENT_MIN, mod_p >= MOD_EXPONENT_MIN)
        out.check("eta_exponent", eta_p, ETA_EXPONENT_MIN, eta_p >= ETA_EXPONENT_MIN)
    return out


def evolve(cfg: RunConfig, ctx: ExperimentContext) -> ExperimentOutcome:
    """A single trajectory from the configured initial data, with an energy audit when noisy."""
    out = ExperimentOutcome()
    ground = ctx.ground
    t_end = cfg.horizon
    basis = ctx.basis()
    lift = ctx.lift(basis, t_end)
    u0 = ctx.initial_data()
    snapshot_times = [float(t) for t in np.linspace(0.0, t_end, cfg.snapshots)] if cfg.snapshots > 1 else []
    solver = SolverConfig(dt0=cfg.dt0, adaptive=cfg.adaptive, t_end=t_end, snapshot_times=snapshot_times)
    with stage("evolve"):
        record = run_trajectory(u0, solver, basis, lift, ground)
    out.results.update(_trajectory_results(record))
    out.check("mass_per_step", record.max_mass_drift(), MASS_STEP_TOL, record.max_mass_drift() < MASS_STEP_TOL)
    if record.status == TrajectoryStatus.BLOWUP_DETECTED:
        counter("BlowupDetected")
    if lift is not None:
        out.lifts[LIFT_FILE] = lift
    if basis is not None and len(record.snapshots) >= 2:
        with stage("energy_audit"):
            audit = energy_drift_audit(record, basis, lift)
        out.results.update({"audit_measured": audit.measured[-1], "audit_predicted": audit.predicted[-1],
                            "audit_relative_mismatch": audit.relative_mismatch})
    out.tables["diagnostics.csv"] = _diagnostics_table(record)
    if record.snapshots:
        out.series["snapshots"] = (record.snapshot_times, record.snapshots)
    return out


EXPERIMENTS: Dict[Experiment, Callable[[RunConfig, ExperimentContext], ExperimentOutcome]] = {
    Experiment.EVOLVE: evolve,
    Experiment.GROUND_STATE: ground_state,
    Experiment.EXACT_SOLITON: exact_soliton,
    Experiment.PSEUDOCONFORMAL: pseudoconformal,
    Experiment.THRESHOLD_SWEEP: threshold_sweep,
    Experiment.ROUGH_CHECK: rough_check,
    Experiment.MODULATION_TRACK: modulation_track,
}
