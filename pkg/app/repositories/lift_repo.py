"""BrownianLift serialization."""
import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from app.common.logging import get_logger
from app.models.noise import BrownianLift
from app.repositories.errors import RepositoryError, SnapshotFormatError

logger = get_logger(__name__)

LIFT_VERSION = 1
_LENGTH = struct.Struct("<I")


class LiftRepository:
    """Stores a lift as a u32 header length, a JSON header and f64 little-endian arrays.

    The arrays follow the header in the order mesh (M+1), B (N, M+1) and
    Bb (N, N, M), each row-major.
    """

    def write(self, path: Union[str, Path], lift: BrownianLift) -> Path:
        path = Path(path)
        header = json.dumps({
            "version": LIFT_VERSION, "N": lift.N, "M": lift.M, "seed": lift.seed,
            "substeps": lift.substeps, "path": lift.path,
        }, sort_keys=True).encode("utf-8")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "xb") as handle:
                handle.write(_LENGTH.pack(len(header)))
                handle.write(header)
                for array in (lift.mesh, lift.B, lift.Bb):
                    handle.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
            logger.debug(f"Wrote lift {path} (N={lift.N}, M={lift.M})")
            return path
        except FileExistsError as e:
            raise RepositoryError(f"lift file {path} already exists") from e
        except OSError as e:
            logger.error(f"Error writing lift {path}: {str(e)}")
            raise RepositoryError(f"could not write lift {path}: {e}") from e

    def read(self, path: Union[str, Path]) -> BrownianLift:
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise RepositoryError(f"could not read lift {path}: {e}") from e
        try:
            (length,) = _LENGTH.unpack_from(data)
            header = json.loads(data[_LENGTH.size:_LENGTH.size + length].decode("utf-8"))
            n_modes, m_cells = int(header["N"]), int(header["M"])
        except (struct.error, ValueError, KeyError) as e:
            raise SnapshotFormatError(f"{path} has an unreadable lift header: {e}") from e
        if header.get("version") != LIFT_VERSION:
            raise SnapshotFormatError(f"{path} has unsupported lift version {header.get('version')}")

        sizes = [m_cells + 1, n_modes * (m_cells + 1), n_modes * n_modes * m_cells]
        offset = _LENGTH.size + length
        if len(data) != offset + 8 * sum(sizes):
            raise SnapshotFormatError(f"{path} holds {len(data)} bytes, expected {offset + 8 * sum(sizes)}")
        arrays = []
        for size in sizes:
            arrays.append(np.frombuffer(data, dtype="<f8", count=size, offset=offset))
            offset += 8 * size
        mesh, B, Bb = arrays
        return BrownianLift(
            mesh=mesh, B=B.reshape(n_modes, m_cells + 1), Bb=Bb.reshape(n_modes, n_modes, m_cells),
            seed=header["seed"], substeps=header["substeps"], path=header["path"],
        )
