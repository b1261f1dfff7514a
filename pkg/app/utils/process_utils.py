"""Utilities for running experiments in separate processes.

Each child process configures its own logging and builds its own repositories,
so nothing from the parent's state is shared across the fork.
"""
from pathlib import Path

from app.common.logging import configure_logging, get_logger
from app.numerics.errors import StageError

logger = get_logger(__name__)


def run_experiment_in_process(config_json: str, run_dir: str) -> None:
    """Run one experiment to completion inside a child process.

    Failures are recorded in the run's summary.json by the service; this
    function only logs them so the child exits cleanly.

    Args:
        config_json: RunConfig serialized with model_dump_json()
        run_dir: Directory created for the run
    """
    configure_logging()
    # Deferred: the experiment service imports this module
    from app.models.run import RunConfig, RunStatus, RunSummary
    from app.repositories.run_repo import RunRepository
    from app.repositories.snapshot_repo import ProfileCache
    from app.services.experiment_service import ExperimentService

    run_path = Path(run_dir)
    service = ExperimentService(RunRepository(run_path.parent), ProfileCache())
    config = RunConfig.model_validate_json(config_json)
    try:
        service.run(config, out_dir=run_path)
    except StageError as e:
        logger.error(f"Run {run_path.name} stopped in stage {e.stage}")
    except Exception as e:
        logger.error(f"Run {run_path.name} crashed: {str(e)}")
        if not (run_path / "summary.json").exists():
            summary = RunSummary(experiment=config.experiment, status=RunStatus.ERROR, error=str(e))
            service.run_repo.write_summary(run_path, summary)
