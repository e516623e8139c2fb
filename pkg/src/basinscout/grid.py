"""Rectilinear grids, the per-cell code table, and the attractor/basin encoding.

Cell codes are plain integers:

* ``-1``  trajectory diverged or left the grid for good,
* ``0``   transient mark, only ever present while one initial condition runs,
* ``1``   unknown content,
* ``2k``  cell contains a point of attractor ``k`` (k >= 1),
* ``2k+1``  cell belongs to the basin of attractor ``k``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import ConfigurationError, ConsistencyError

CODE_DIVERGED = -1
CODE_MARKED = 0
CODE_UNKNOWN = 1


class Decoded(enum.Enum):
    """Non-attractor outcomes of decoding a cell code."""

    DIVERGED = "diverged"
    UNKNOWN = "unknown"


def code_of_attractor(k: int) -> int:
    """Even code ``2k`` for a cell holding a point of attractor ``k``."""
    if k < 1:
        raise ConfigurationError(f"attractor id must be >= 1, got {k}")
    return 2 * k


def code_of_basin(k: int) -> int:
    """Odd code ``2k + 1`` for a cell in the basin of attractor ``k``."""
    if k < 1:
        raise ConfigurationError(f"attractor id must be >= 1, got {k}")
    return 2 * k + 1


def id_of_code(code: int) -> int | Decoded:
    """Map a stored cell code back to its attractor id or a special outcome.

    The transient mark ``0`` must never survive a completed run, so decoding
    it is a consistency error.
    """
    if code == CODE_DIVERGED:
        return Decoded.DIVERGED
    if code == CODE_UNKNOWN:
        return Decoded.UNKNOWN
    if code == CODE_MARKED:
        raise ConsistencyError("transient mark (code 0) survived a run")
    if code < 0:
        raise ConfigurationError(f"invalid cell code {code}")
    return code // 2


@dataclass(frozen=True)
class Axis:
    """One grid axis: `length` cell centers evenly spaced on [lo, hi]."""

    lo: float
    hi: float
    length: int

    def __post_init__(self):
        if not np.isfinite(self.lo) or not np.isfinite(self.hi):
            raise ConfigurationError("axis bounds must be finite")
        if not self.lo < self.hi:
            raise ConfigurationError(f"axis requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.length < 2:
            raise ConfigurationError(f"axis needs at least 2 points, got {self.length}")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.length - 1)

    def centers(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.length)


@dataclass(frozen=True)
class Grid:
    """Rectilinear grid of cell centers; cells extend half a step around them.

    A point belongs to the cell with the nearest center; on the midpoint
    between two centers the upper cell wins, i.e. each cell covers the
    half-open box ``[center - step/2, center + step/2)`` per axis.
    """

    axes: tuple[Axis, ...]

    def __post_init__(self):
        if not self.axes:
            raise ConfigurationError("grid needs at least one axis")

    @classmethod
    def from_ranges(cls, ranges: Iterable[Sequence[float]]) -> "Grid":
        """Build from ``(lo, hi, length)`` triples."""
        return cls(tuple(Axis(float(lo), float(hi), int(n)) for lo, hi, n in ranges))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.length for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod([a.length for a in self.axes], dtype=np.int64))

    @property
    def steps(self) -> np.ndarray:
        return np.array([a.step for a in self.axes])

    @property
    def lows(self) -> np.ndarray:
        return np.array([a.lo for a in self.axes])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([a.length for a in self.axes], dtype=np.int64)

    def cell_index(self, point: Sequence[float]) -> tuple[int, ...] | None:
        """Index of the cell enclosing `point`, or None when outside the grid."""
        p = np.asarray(point, dtype=float)
        if p.shape != (self.ndim,):
            raise ConfigurationError(
                f"point has dimension {p.shape}, grid has {self.ndim} axes"
            )
        idx = []
        for x, ax in zip(p, self.axes):
            i = int(np.floor((x - ax.lo) / ax.step + 0.5))
            if i < 0 or i >= ax.length:
                return None
            idx.append(i)
        return tuple(idx)

    def cell_center(self, index: Sequence[int]) -> np.ndarray:
        """Grid point at `index`; inverse of cell_index on every valid index."""
        idx = tuple(int(i) for i in index)
        if len(idx) != self.ndim:
            raise ConfigurationError(
                f"index has {len(idx)} entries, grid has {self.ndim} axes"
            )
        for i, ax in zip(idx, self.axes):
            if i < 0 or i >= ax.length:
                raise ConfigurationError(f"index {idx} outside grid of shape {self.shape}")
        return np.array([ax.lo + i * ax.step for i, ax in zip(idx, self.axes)])

    def ravel(self, index: Sequence[int]) -> int:
        """Row-major flat index (last axis fastest)."""
        flat = 0
        for i, ax in zip(index, self.axes):
            flat = flat * ax.length + int(i)
        return flat

    def unravel(self, flat: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(flat, self.shape))

    def describe(self) -> list[dict]:
        return [{"min": a.lo, "max": a.hi, "length": a.length} for a in self.axes]


@njit(cache=True)
def flat_cell_index(point, lows, steps, lengths):
    """Flat row-major cell index of `point`, or -1 when any axis falls outside."""
    flat = 0
    for d in range(lows.shape[0]):
        i = int(np.floor((point[d] - lows[d]) / steps[d] + 0.5))
        if i < 0 or i >= lengths[d]:
            return -1
        flat = flat * lengths[d] + i
    return flat


@dataclass
class CellStore:
    """Dense row-major code array over a grid plus the attractor counter.

    Single writer: one sweep mutates one store; share read-only afterwards.
    """

    grid: Grid
    codes: np.ndarray = field(default=None)  # type: ignore[assignment]
    attractor_count: int = 0

    def __post_init__(self):
        if self.codes is None:
            self.codes = np.full(self.grid.size, CODE_UNKNOWN, dtype=np.int32)
        else:
            self.codes = np.asarray(self.codes, dtype=np.int32).reshape(-1)
            if self.codes.shape[0] != self.grid.size:
                raise ConfigurationError(
                    f"code array has {self.codes.shape[0]} entries, grid has {self.grid.size} cells"
                )

    @property
    def array(self) -> np.ndarray:
        """Codes reshaped to the grid shape (view)."""
        return self.codes.reshape(self.grid.shape)

    def code_at(self, index: Sequence[int]) -> int:
        return int(self.codes[self.grid.ravel(index)])

    def mark_count(self) -> int:
        return int(np.count_nonzero(self.codes == CODE_MARKED))
