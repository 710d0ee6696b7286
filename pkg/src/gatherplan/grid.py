"""Occupancy grid, grid paths and line-of-sight tests.

Cells are addressed by linear index ``idx = y * width + x`` with row 0 at
the top of the map. Distances are metric (cell_size units per cell side).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = float(np.sqrt(2.0))


@dataclass(frozen=True)
class OccupancyGrid:
    """Rectangular free/obstacle cell map with one operation-center cell."""

    free: np.ndarray          # bool, shape (height, width); True = free
    oc: int                   # linear index of the operation center
    cell_size: float = 1.0

    def __post_init__(self):
        free = np.asarray(self.free, dtype=bool)
        object.__setattr__(self, "free", free)
        if free.ndim != 2 or free.shape[0] < 1 or free.shape[1] < 1:
            raise ValueError("grid must be a 2-D array with positive shape")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if not (0 <= self.oc < free.size):
            raise ValueError(f"operation center {self.oc} out of bounds")
        if not free.flat[self.oc]:
            raise ValueError("operation center must be on a free cell")

    @property
    def height(self) -> int:
        return self.free.shape[0]

    @property
    def width(self) -> int:
        return self.free.shape[1]

    @property
    def n_cells(self) -> int:
        return self.free.size

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    def free_flat(self) -> np.ndarray:
        return self.free.ravel()

    def free_indices(self) -> np.ndarray:
        return np.flatnonzero(self.free.ravel())

    def index(self, x: int, y: int) -> int:
        return y * self.width + x

    def xy(self, idx: int) -> tuple[int, int]:
        return idx % self.width, idx // self.width

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, idx: int) -> bool:
        return bool(self.free.flat[idx])


@dataclass(frozen=True)
class GridPath:
    """Ordered 8-connected cell sequence with accumulated metric length."""

    cells: tuple[int, ...]
    length: float

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def start(self) -> int:
        return self.cells[0]

    @property
    def end(self) -> int:
        return self.cells[-1]


def path_from_cells(cells, grid: OccupancyGrid) -> GridPath:
    """Build a GridPath from a cell sequence, accumulating step lengths."""
    cells = tuple(int(c) for c in cells)
    length = 0.0
    w = grid.width
    for a, b in zip(cells, cells[1:]):
        dx = abs(a % w - b % w)
        dy = abs(a // w - b // w)
        length += (SQRT2 if dx and dy else 1.0) * grid.cell_size
    return GridPath(cells, length)


def path_time(path: GridPath, speed: float, cell_size: float = 1.0) -> float:
    """Seconds to traverse ``path`` at ``speed`` cells per second."""
    if speed <= 0:
        raise ValueError("speed must be positive")
    return path.length / (speed * cell_size)


def diagonal_ok(free_flat: np.ndarray, width: int, x: int, y: int, nx: int, ny: int) -> bool:
    """A diagonal step may not squeeze between two touching obstacle corners."""
    a = y * width + nx
    b = ny * width + x
    return bool(free_flat[a]) or bool(free_flat[b])


def supercover_cells(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Every cell the segment between two cell centers touches.

    Corner crossings include both side cells, making occlusion tests
    conservative and the traversal symmetric in its endpoints.
    """
    if (x1, y1) < (x0, y0):
        x0, y0, x1, y1 = x1, y1, x0, y0
    cells = [(x0, y0)]
    sx = 1 if x1 > x0 else -1
    sy = 1 if y1 > y0 else -1
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    x, y = x0, y0
    k = m = 0  # vertical / horizontal grid lines crossed so far
    while k < dx or m < dy:
        # Crossing "times" compared exactly in integers:
        # t_x = (2k+1)/(2dx), t_y = (2m+1)/(2dy).
        tx = (2 * k + 1) * dy
        ty = (2 * m + 1) * dx
        if m == dy or (k < dx and tx < ty):
            x += sx
            k += 1
        elif k == dx or ty < tx:
            y += sy
            m += 1
        else:
            # Exact corner crossing: include both side cells.
            cells.append((x + sx, y))
            cells.append((x, y + sy))
            x += sx
            y += sy
            k += 1
            m += 1
        cells.append((x, y))
    return cells


def line_of_sight(grid: OccupancyGrid, a: int, b: int) -> bool:
    """True iff the supercover ray between cell centers crosses no obstacle."""
    ax, ay = grid.xy(a)
    bx, by = grid.xy(b)
    if not (grid.in_bounds(ax, ay) and grid.in_bounds(bx, by)):
        raise ValueError("line_of_sight endpoints out of bounds")
    flat = grid.free_flat()
    w = grid.width
    for x, y in supercover_cells(ax, ay, bx, by):
        if not flat[y * w + x]:
            return False
    return True
