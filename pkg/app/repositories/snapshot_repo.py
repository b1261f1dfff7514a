"""Field snapshot files and the on-disk profile cache."""
import csv
import json
import os
import struct
import uuid
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.common.logging import get_logger
from app.config.config import settings
from app.models.grid import Field, Grid
from app.models.profile import GroundState, RhoProfile
from app.numerics.profiles import solve_ground_state, solve_rho
from app.repositories.errors import RepositoryError, SnapshotFormatError

logger = get_logger(__name__)

MAGIC = b"RNLS"
VERSION = 1
# magic, version, dim, n, L
HEADER = struct.Struct("<4sIIId")
SERIES_INDEX = "snapshots.csv"

PathLike = Union[str, Path]


class SnapshotRepository:
    """Reads and writes fields in the RNLS snapshot format.

    Layout: a little-endian header {magic "RNLS", version u32, dim u32,
    n u32, L f64} followed by n^dim interleaved (re, im) f64 pairs in
    row-major order.
    """

    def write(self, path: PathLike, field: Field) -> Path:
        """Write a snapshot; an existing file is never overwritten."""
        path = Path(path)
        grid = field.grid
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "xb") as handle:
                handle.write(HEADER.pack(MAGIC, VERSION, grid.dim, grid.n, grid.half_length))
                handle.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes())
            logger.debug(f"Wrote snapshot {path}")
            return path
        except FileExistsError as e:
            raise RepositoryError(f"snapshot {path} already exists") from e
        except OSError as e:
            logger.error(f"Error writing snapshot {path}: {str(e)}")
            raise RepositoryError(f"could not write snapshot {path}: {e}") from e

    def read(self, path: PathLike) -> Field:
        """Read a snapshot written by write()."""
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            logger.error(f"Error reading snapshot {path}: {str(e)}")
            raise RepositoryError(f"could not read snapshot {path}: {e}") from e
        if len(data) < HEADER.size:
            raise SnapshotFormatError(f"{path} is too short for a snapshot header")
        magic, version, dim, n, half_length = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise SnapshotFormatError(f"{path} has magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise SnapshotFormatError(f"{path} has unsupported version {version}")
        try:
            grid = Grid(dim=dim, n=n, half_length=half_length)
        except ValueError as e:
            raise SnapshotFormatError(f"{path} has an invalid grid header: {e}") from e
        expected = HEADER.size + 16 * n ** dim
        if len(data) != expected:
            raise SnapshotFormatError(f"{path} holds {len(data)} bytes, expected {expected}")
        values = np.frombuffer(data, dtype="<c16", offset=HEADER.size).reshape(grid.shape)
        return Field(grid=grid, values=values)

    def write_series(self, directory: PathLike, times: Sequence[float], fields: Sequence[Field]) -> List[str]:
        """Write snapshot_NNNN.rnls files plus a snapshots.csv index of (index, t, file)."""
        directory = Path(directory)
        names = []
        for index, field in enumerate(fields):
            name = f"snapshot_{index:04d}.rnls"
            self.write(directory / name, field)
            names.append(name)
        with open(directory / SERIES_INDEX, "x", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["index", "t", "file"])
            for index, (t, name) in enumerate(zip(times, names)):
                writer.writerow([index, repr(float(t)), name])
        return names + [SERIES_INDEX]

    def read_series(self, directory: PathLike) -> Tuple[List[float], List[Field]]:
        """Times and fields listed in a directory's snapshots.csv."""
        directory = Path(directory)
        index_path = directory / SERIES_INDEX
        if not index_path.exists():
            raise SnapshotFormatError(f"{directory} has no {SERIES_INDEX}")
        times, fields = [], []
        with open(index_path, encoding="utf-8", newline="") as handle:
            for row in csv.DictReader(handle):
                times.append(float(row["t"]))
                fields.append(self.read(directory / row["file"]))
        return times, fields


class ProfileCache:
    """Ground states and rho profiles cached per grid (d, n, L).

    Each entry is a directory holding Q.rnls, rho.rnls and profile.json with
    the solver diagnostics.
    """

    def __init__(self, root: Optional[PathLike] = None, snapshots: Optional[SnapshotRepository] = None):
        self.root = Path(root) if root is not None else settings.cache_dir
        self.snapshots = snapshots or SnapshotRepository()

    def entry_dir(self, grid: Grid) -> Path:
        return self.root / f"d{grid.dim}_n{grid.n}_L{grid.half_length!r}"

    def _sidecar(self, grid: Grid) -> dict:
        path = self.entry_dir(grid) / "profile.json"
        if not path.exists():
            return {}
        try:
            return json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable profile sidecar {path}: {e}")
            return {}

    def _replace(self, path: Path, write: Callable[[Path], object]) -> None:
        """Write through a temporary file in the entry directory, then rename it over `path`."""
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
        try:
            write(tmp)
            os.replace(tmp, path)
        except OSError as e:
            logger.error(f"Error storing cache entry {path}: {str(e)}")
            raise RepositoryError(f"could not store cache entry {path}: {e}") from e
        finally:
            tmp.unlink(missing_ok=True)

    def _update_sidecar(self, grid: Grid, updates: dict) -> None:
        sidecar = self._sidecar(grid)
        sidecar.update(updates)
        text = json.dumps(sidecar, sort_keys=True, indent=2)
        self._replace(self.entry_dir(grid) / "profile.json", lambda tmp: tmp.write_text(text))

    def _store(self, path: Path, field: Field) -> None:
        """Store a profile snapshot; an orphan file from an interrupted save is replaced."""
        if path.exists():
            logger.warning(f"Replacing cached profile {path}")
        self._replace(path, lambda tmp: self.snapshots.write(tmp, field))

    def load_ground_state(self, grid: Grid) -> Optional[GroundState]:
        """Cached ground state for `grid`, or None."""
        path = self.entry_dir(grid) / "Q.rnls"
        meta = self._sidecar(grid).get("ground_state")
        if not path.exists() or meta is None:
            return None
        Q = self.snapshots.read(path)
        logger.info(f"Loaded cached ground state for grid {grid.key}")
        return GroundState(Q=Q, **meta)

    def save_ground_state(self, ground: GroundState) -> None:
        grid = ground.grid
        self._store(self.entry_dir(grid) / "Q.rnls", ground.Q)
        self._update_sidecar(grid, {"ground_state": {
            "residual": ground.residual, "d": ground.d, "iterations": ground.iterations,
            "residual_history": ground.residual_history,
        }})

    def load_rho(self, grid: Grid) -> Optional[RhoProfile]:
        """Cached rho for `grid`, or None."""
        path = self.entry_dir(grid) / "rho.rnls"
        meta = self._sidecar(grid).get("rho")
        if not path.exists() or meta is None:
            return None
        rho = self.snapshots.read(path)
        logger.info(f"Loaded cached rho for grid {grid.key}")
        return RhoProfile(rho=rho, **meta)

    def save_rho(self, rho: RhoProfile) -> None:
        grid = rho.rho.grid
        self._store(self.entry_dir(grid) / "rho.rnls", rho.rho)
        self._update_sidecar(grid, {"rho": {
            "residual": rho.residual, "decay_rate": rho.decay_rate, "iterations": rho.iterations,
            "residual_history": rho.residual_history,
        }})

    def ground_state_for(self, grid: Grid) -> GroundState:
        """Ground state on `grid`, solved and stored on a cache miss."""
        cached = self.load_ground_state(grid)
        if cached is not None:
            return cached
        ground = solve_ground_state(grid.dim, grid)
        self.save_ground_state(ground)
        return ground

    def rho_for(self, ground: GroundState) -> RhoProfile:
        """rho on the ground state's grid, solved and stored on a cache miss."""
        cached = self.load_rho(ground.grid)
        if cached is not None:
            return cached
        rho = solve_rho(ground)
        self.save_rho(rho)
        return rho
