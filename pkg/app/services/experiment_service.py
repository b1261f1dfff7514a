"""Service layer for running experiments.

This service orchestrates a run by:
- Echoing the configuration into the output directory
- Dispatching to the requested experiment
- Writing tables, snapshots and the summary
- Emitting run metrics
- Starting API-submitted runs in background processes
"""
from multiprocessing import Process
from pathlib import Path
from typing import List, Optional
from uuid import uuid4

import yaml

from app.common.logging import get_logger
from app.common.metrics import counter
from app.models.modulation import ModTrackRow
from app.models.profile import ModParams
from app.models.run import RunConfig, RunDetail, RunRecord, RunStatus, RunSummary
from app.numerics import spectral_core as sc
from app.numerics.errors import StageError
from app.numerics.modulation import decompose, track
from app.numerics.profiles import profile_norms
from app.repositories.lift_repo import LiftRepository
from app.repositories.run_repo import RunRepository
from app.repositories.snapshot_repo import ProfileCache
from app.services.experiments import (
    DECOMPOSITION_RESIDUAL_TOL,
    EXPERIMENTS,
    ExperimentContext,
    ExperimentOutcome,
    stage,
)
from app.utils.process_utils import run_experiment_in_process

logger = get_logger(__name__)


class ExperimentService:
    """Service for executing runs."""

    def __init__(self, run_repo: RunRepository, profile_cache: ProfileCache,
                 lift_repo: Optional[LiftRepository] = None):
        """Initialize service with the run repository, the profile cache and the lift store."""
        self.run_repo = run_repo
        self.profile_cache = profile_cache
        self.lift_repo = lift_repo or LiftRepository()

    def _write_outcome(self, out_dir: Path, outcome: ExperimentOutcome) -> list:
        artifacts = []
        for name, (header, rows) in sorted(outcome.tables.items()):
            self.run_repo.write_csv(out_dir, name, header, rows)
            artifacts.append(name)
        for name, payload in sorted(outcome.documents.items()):
            self.run_repo.write_json(out_dir, name, payload)
            artifacts.append(name)
        snapshots = self.profile_cache.snapshots
        for name, field in sorted(outcome.snapshots.items()):
            snapshots.write(out_dir / name, field)
            artifacts.append(name)
        for name, (times, fields) in sorted(outcome.series.items()):
            written = snapshots.write_series(out_dir / name, times, fields)
            artifacts.extend(f"{name}/{w}" for w in written)
        for name, lift in sorted(outcome.lifts.items()):
            self.lift_repo.write(out_dir / name, lift)
            artifacts.append(name)
        return artifacts

    def run(self, config: RunConfig, out_dir: Optional[Path] = None, config_text: Optional[str] = None) -> RunSummary:
        """Execute one run and write its artifacts.

        Args:
            config: Validated run configuration
            out_dir: Output directory; defaults to config.output_dir
            config_text: Original configuration text, echoed verbatim when given

        Returns:
            RunSummary: the summary also written to summary.json

        Raises:
            StageError: If a stage fails; summary.json records the error first
        """
        out_dir = Path(out_dir or config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if config_text is None:
            config_text = yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True)
        self.run_repo.write_config(out_dir, config_text)
        logger.info(f"Starting {config.experiment.value} run in {out_dir}")

        ctx = ExperimentContext(config, self.profile_cache)
        try:
            outcome = EXPERIMENTS[config.experiment](config, ctx)
        except StageError as e:
            logger.error(f"Run failed in stage {e.stage}: {str(e)}")
            summary = RunSummary(experiment=config.experiment, status=RunStatus.ERROR, error=str(e))
            self.run_repo.write_summary(out_dir, summary)
            counter("RunsFailed")
            raise

        artifacts = self._write_outcome(out_dir, outcome)
        status = RunStatus.PASSED if outcome.passed else RunStatus.FAILED
        summary = RunSummary(experiment=config.experiment, status=status, checks=outcome.checks,
                             results=outcome.results, artifacts=["config.yaml", *artifacts])
        self.run_repo.write_summary(out_dir, summary)
        counter("RunsCompleted" if outcome.passed else "RunsFailed")
        logger.info(f"Run finished with status {status.value}")
        return summary

    def modfit(self, input_path: Path, pinit: str, out_path: Path, cutoff_scale: float = 10.0) -> dict:
        """Decompose a snapshot file, or every snapshot of a series directory.

        A single snapshot gives report.json with the fitted parameters; a
        directory additionally gives mod_track.csv beside the report.

        Raises:
            StageError: If the profiles cannot be solved or a decomposition fails
        """
        input_path, out_path = Path(input_path), Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        snapshots = self.profile_cache.snapshots
        if input_path.is_dir():
            times, fields = snapshots.read_series(input_path)
        else:
            times, fields = [0.0], [snapshots.read(input_path)]
        grid = fields[0].grid
        P_init = ModParams.parse(pinit, grid.dim)
        with stage("profiles"):
            ground = self.profile_cache.ground_state_for(grid)
            rho = self.profile_cache.rho_for(ground)
        limit = DECOMPOSITION_RESIDUAL_TOL * profile_norms(ground).mass

        if len(fields) == 1:
            with stage("decompose"):
                result = decompose(fields[0], P_init, ground, rho)
            report = {
                "P": result.P.model_dump(), "ortho_residuals": result.ortho_residuals,
                "newton_iters": result.newton_iters, "residual_history": result.residual_history,
                "eps_l2": sc.norm(result.epsilon), "eps_h1": sc.h1_norm(result.epsilon),
                "jacobian_condition": result.jacobian_condition,
                "passed": result.max_residual < limit,
            }
        else:
            with stage("track"):
                rows = track(fields, times, P_init, ground, rho, cutoff_scale)
            self.run_repo.write_csv(out_path.parent, "mod_track.csv", ModTrackRow.csv_header(grid.dim),
                                    [r.csv_row() for r in rows])
            worst = max(r.max_ortho_residual for r in rows)
            report = {
                "snapshots": len(rows), "final_P": rows[-1].P.model_dump(),
                "max_ortho_residual": worst, "passed": worst < limit,
            }
        self.run_repo.write_json(out_path.parent, out_path.name, report)
        logger.info(f"Modulation fit written to {out_path}")
        return report

    async def submit(self, config: RunConfig) -> RunRecord:
        """Allocate a run directory and start the run in a separate process."""
        run_id = f"{config.experiment.value}-{uuid4().hex[:12]}"
        run_dir = self.run_repo.create(run_id)
        Process(
            target=run_experiment_in_process,
            args=(config.model_dump_json(), str(run_dir))
        ).start()
        counter("RunsSubmitted")
        return RunRecord(run_id=run_id, status=RunStatus.RUNNING, experiment=config.experiment)

    async def list_runs(self) -> List[RunRecord]:
        return self.run_repo.list_runs()

    async def get_run(self, run_id: str) -> RunDetail:
        """Status and summary of a run.

        Raises:
            RunNotFoundError: If no such run exists
            ValueError: If the run id is malformed
        """
        summary = self.run_repo.read_summary(run_id)
        if summary is None:
            return RunDetail(run_id=run_id, status=RunStatus.RUNNING)
        return RunDetail(run_id=run_id, status=summary.status, experiment=summary.experiment, summary=summary)
