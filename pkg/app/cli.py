"""Command-line entry point: `python -m app <subcommand>`.

Exit codes: 0 when every acceptance check passes, 1 when any check fails,
2 when a stage errors or the configuration is invalid.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

from app.common.logging import configure_logging, get_logger
from app.models.run import Experiment, RunConfig
from app.numerics.errors import LabError, StageError
from app.repositories.errors import RepositoryError
from app.repositories.run_repo import RunRepository
from app.repositories.snapshot_repo import ProfileCache
from app.services.experiment_service import ExperimentService

logger = get_logger(__name__)

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

# subcommand -> experiment it runs
RUN_COMMANDS = {
    "ground-state": Experiment.GROUND_STATE,
    "evolve": Experiment.EVOLVE,
    "rough-check": Experiment.ROUGH_CHECK,
    "threshold-sweep": Experiment.THRESHOLD_SWEEP,
}


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", type=int, choices=[1, 2], default=1)
    parser.add_argument("--n", type=int, help="Points per axis")
    parser.add_argument("--L", type=float, help="Half box length")
    parser.add_argument("--T", type=float, help="Blow-up time of S_T, or the time horizon")
    parser.add_argument("--t-end", type=float)
    parser.add_argument("--dt0", type=float)
    parser.add_argument("--fixed-step", action="store_true", help="Disable adaptive time stepping")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--noise-modes", type=int)
    parser.add_argument("--noise-amp", type=float)
    parser.add_argument("--noise-width", type=float)
    parser.add_argument("--mesh-steps", type=int)
    parser.add_argument("--lift-input", help="Stored lift.bin to replay instead of sampling")
    parser.add_argument("--init", choices=["gaussian", "ground", "ST"])
    parser.add_argument("--mass-ratio", type=float)
    parser.add_argument("--mass-ratios", type=float, nargs="+")
    parser.add_argument("--ensemble-size", type=int)
    parser.add_argument("--snapshots", type=int)
    parser.add_argument("--refinement-levels", type=int)
    parser.add_argument("--out", default="out", help="Output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description="Stochastic mass-critical NLS lab")
    commands = parser.add_subparsers(dest="command", required=True)

    for name in RUN_COMMANDS:
        _add_run_options(commands.add_parser(name, help=f"Run the {RUN_COMMANDS[name].value} experiment"))

    run = commands.add_parser("run", help="Run an experiment described by a YAML config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", help="Output directory; overrides output_dir in the config")

    modfit = commands.add_parser("modfit", help="Fit the modulation decomposition to snapshots")
    modfit.add_argument("--input", required=True, type=Path, help="Snapshot file or series directory")
    modfit.add_argument("--pinit", required=True,
                        help="Initial parameters as comma-separated lambda,alpha...,beta...,gamma,theta")
    modfit.add_argument("--out", default="report.json", type=Path)
    modfit.add_argument("--cutoff-scale", type=float, default=10.0)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """RunConfig for a run subcommand; unset options keep their defaults."""
    options = {
        "dim": args.dim, "n": args.n, "L": args.L, "T": args.T, "t_end": args.t_end,
        "dt0": args.dt0, "seed": args.seed, "noise_modes": args.noise_modes,
        "noise_amp": args.noise_amp, "noise_width": args.noise_width,
        "mesh_steps": args.mesh_steps, "init": args.init, "mass_ratio": args.mass_ratio,
        "mass_ratios": args.mass_ratios, "ensemble_size": args.ensemble_size,
        "snapshots": args.snapshots, "refinement_levels": args.refinement_levels,
        "lift_input": args.lift_input,
    }
    data = {key: value for key, value in options.items() if value is not None}
    if args.fixed_step:
        data["adaptive"] = False
    return RunConfig(experiment=RUN_COMMANDS[args.command], output_dir=args.out, **data)


def _service() -> ExperimentService:
    return ExperimentService(RunRepository(), ProfileCache())


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    service = _service()
    try:
        if args.command == "modfit":
            report = service.modfit(args.input, args.pinit, args.out, cutoff_scale=args.cutoff_scale)
            return EXIT_PASSED if report["passed"] else EXIT_FAILED

        config_text = None
        if args.command == "run":
            config_text = args.config.read_text(encoding="utf-8")
            config = RunConfig.from_yaml(config_text)
            if args.out is not None:
                config = config.model_copy(update={"output_dir": args.out})
        else:
            config = config_from_args(args)
        summary = service.run(config, config_text=config_text)
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (LabError, RepositoryError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR

    for check in summary.checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.value} (threshold {check.threshold})")
    return EXIT_PASSED if summary.passed else EXIT_FAILED
