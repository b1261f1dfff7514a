"""Grid and Field models for the periodic spectral box."""
from functools import cached_property
from typing import Any, Callable, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.numerics.errors import GridMismatchError


class Grid(BaseModel):
    """Uniform periodic lattice on [-L, L)^dim.

    Grid points are x_j = dx * (j - n/2), so the origin sits at index n/2 and
    x -> -x maps index j to (n - j) mod n exactly. Wavenumbers follow the
    standard DFT ordering; the Nyquist mode is kept for even-order
    derivatives and zeroed for odd-order ones.
    """
    dim: Literal[1, 2]
    n: int
    half_length: float

    model_config = ConfigDict(frozen=True)

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 16 or value & (value - 1):
            raise ValueError(f"n must be a power of two >= 16, got {value}")
        return value

    @field_validator("half_length")
    @classmethod
    def _positive_length(cls, value: float) -> float:
        if not np.isfinite(value) or value <= 0:
            raise ValueError(f"half_length must be positive, got {value}")
        return float(value)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / self.n

    @property
    def key(self) -> Tuple[int, int, float]:
        """Identity of the grid, used for compatibility checks and caching."""
        return (self.dim, self.n, self.half_length)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def origin_index(self) -> Tuple[int, ...]:
        return (self.n // 2,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """1D coordinates shared by every axis."""
        x = self.dx * (np.arange(self.n) - self.n // 2)
        x.setflags(write=False)
        return x

    @cached_property
    def coords(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays of shape `shape`, one per axis."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        for m in mesh:
            m.setflags(write=False)
        return tuple(mesh)

    @cached_property
    def r_squared(self) -> np.ndarray:
        r2 = sum(c ** 2 for c in self.coords)
        r2.setflags(write=False)
        return r2

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis wavenumbers pi/L * (signed integer frequency)."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n) * (np.pi / self.half_length)
        k.setflags(write=False)
        return k

    @cached_property
    def derivative_wavenumbers(self) -> np.ndarray:
        """Wavenumbers for odd-order derivatives (Nyquist mode zeroed)."""
        k = np.array(self.wavenumbers)
        k[self.n // 2] = 0.0
        k.setflags(write=False)
        return k

    @cached_property
    def k_grids(self) -> Tuple[np.ndarray, ...]:
        mesh = np.meshgrid(*([self.wavenumbers] * self.dim), indexing="ij")
        return tuple(mesh)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k2 = sum(k ** 2 for k in self.k_grids)
        k2.setflags(write=False)
        return k2

    def broadcast_axis(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Reshape a 1D per-axis array so it broadcasts along `axis`."""
        shape = [1] * self.dim
        shape[axis] = self.n
        return np.reshape(values, shape)

    def compatible_with(self, other: "Grid") -> bool:
        return self.key == other.key


class Field(BaseModel):
    """Complex samples of a function on a Grid.

    Values are stored as a read-only complex128 copy, so a Field is never
    mutated after construction.
    """
    grid: Grid
    values: np.ndarray
    post_blowup: bool = False

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("values", mode="before")
    @classmethod
    def _as_complex_array(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=np.complex128, copy=True)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shape_and_finite(self) -> "Field":
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}")
        if not self.post_blowup and not np.all(np.isfinite(self.values)):
            raise ValueError("field holds non-finite values and is not flagged post-blow-up")
        return self

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid=grid, values=np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        """Sample fn(x) (d=1) or fn(x, y) (d=2) on the grid."""
        return cls(grid=grid, values=fn(*grid.coords))

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(grid=self.grid, values=values)

    def _other_values(self, other: Any) -> Any:
        if isinstance(other, Field):
            if not self.grid.compatible_with(other.grid):
                raise GridMismatchError()
            return other.values
        return other

    def __add__(self, other: Any) -> "Field":
        return self.with_values(self.values + self._other_values(other))

    def __sub__(self, other: Any) -> "Field":
        return self.with_values(self.values - self._other_values(other))

    def __mul__(self, other: Any) -> "Field":
        return self.with_values(self.values * self._other_values(other))

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def conj(self) -> "Field":
        return self.with_values(np.conj(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def at_origin(self) -> complex:
        return complex(self.values[self.grid.origin_index])


class GNReport(BaseModel):
    """Sharp Gagliardo-Nirenberg threshold check."""
    left: float
    right: float
    satisfied: bool

    @property
    def margin(self) -> float:
        return self.right - self.left
