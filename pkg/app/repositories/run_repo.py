"""Run directories: config echo, summary, CSV tables and snapshots."""
import csv
import json
import re
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from app.common.logging import get_logger
from app.config.config import settings
from app.models.run import RunRecord, RunStatus, RunSummary
from app.repositories.errors import RepositoryError, RunNotFoundError

logger = get_logger(__name__)

RUN_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunRepository:
    """One directory per run under a root directory. Every file is written once."""

    def __init__(self, root: Optional[Union[str, Path]] = None):
        self.root = Path(root) if root is not None else settings.runs_dir

    def run_dir(self, run_id: str) -> Path:
        if not RUN_ID_PATTERN.match(run_id):
            raise ValueError(f"invalid run id {run_id!r}")
        return self.root / run_id

    def create(self, run_id: str) -> Path:
        """Create the directory for a new run."""
        path = self.run_dir(run_id)
        try:
            path.mkdir(parents=True, exist_ok=False)
        except FileExistsError as e:
            raise RepositoryError(f"run {run_id} already exists") from e
        logger.info(f"Created run directory {path}")
        return path

    def _write_text(self, path: Path, text: str) -> Path:
        try:
            with open(path, "x", encoding="utf-8", newline="") as handle:
                handle.write(text)
            return path
        except FileExistsError as e:
            raise RepositoryError(f"{path} already exists") from e
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            raise RepositoryError(f"could not write {path}: {e}") from e

    def write_config(self, out_dir: Path, text: str) -> Path:
        """Echo the run configuration verbatim."""
        return self._write_text(Path(out_dir) / "config.yaml", text)

    def write_json(self, out_dir: Path, name: str, payload: dict) -> Path:
        return self._write_text(Path(out_dir) / name, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def write_summary(self, out_dir: Path, summary: RunSummary) -> Path:
        return self.write_json(out_dir, "summary.json", summary.model_dump(mode="json"))

    def write_csv(self, out_dir: Path, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """CSV table with floats written by repr so values round-trip exactly."""
        path = Path(out_dir) / name
        try:
            with open(path, "x", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_format_cell(v) for v in row])
            return path
        except FileExistsError as e:
            raise RepositoryError(f"{path} already exists") from e

    def read_summary(self, run_id: str) -> Optional[RunSummary]:
        """Summary of a finished run, None while it is still running.

        Raises:
            RunNotFoundError: If the run directory does not exist
        """
        path = self.run_dir(run_id)
        if not path.is_dir():
            raise RunNotFoundError(f"run {run_id} not found")
        summary_path = path / "summary.json"
        if not summary_path.exists():
            return None
        try:
            return RunSummary.model_validate_json(summary_path.read_text(encoding="utf-8"))
        except ValueError as e:
            logger.error(f"Error reading summary of run {run_id}: {str(e)}")
            raise RepositoryError(f"summary of run {run_id} is unreadable") from e

    def list_runs(self) -> List[RunRecord]:
        """All runs under the root, sorted by id."""
        if not self.root.is_dir():
            return []
        records = []
        for path in sorted(p for p in self.root.iterdir() if p.is_dir()):
            if not RUN_ID_PATTERN.match(path.name):
                continue
            summary = self.read_summary(path.name)
            if summary is None:
                records.append(RunRecord(run_id=path.name, status=RunStatus.RUNNING))
            else:
                records.append(RunRecord(run_id=path.name, status=summary.status, experiment=summary.experiment))
        return records
