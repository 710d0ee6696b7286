"""First-order upwind eikonal solver on occupancy grids (fast marching).

Wavefronts expand from source cells at per-cell speed F, solving
|grad D| * F = 1. Updates use the 8-neighbor triangulated stencil: every
(axis, adjacent-diagonal) simplex contributes a Fermat candidate, which
keeps arrival times between the straight-line distance and the 8-neighbor
Dijkstra distance on uniform speed. Diagonal steps never squeeze between
two touching obstacle corners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import SQRT2, GridPath, OccupancyGrid, path_from_cells

SPEED_EPS = 1e-6   # floor for positive speeds on free cells
UNREACHED = np.inf

# Telemetry: number of kernel invocations since import (planner complexity checks).
_solve_calls = 0


def solve_call_count() -> int:
    return _solve_calls


@njit(cache=True)
def _heap_less(hv, hi, a, b):
    if hv[a] != hv[b]:
        return hv[a] < hv[b]
    return hi[a] < hi[b]


@njit(cache=True)
def _heap_push(hv, hi, size, val, idx):
    pos = size
    hv[pos] = val
    hi[pos] = idx
    while pos > 0:
        parent = (pos - 1) >> 1
        if _heap_less(hv, hi, pos, parent):
            hv[pos], hv[parent] = hv[parent], hv[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(hv, hi, size):
    top_v = hv[0]
    top_i = hi[0]
    size -= 1
    if size > 0:
        hv[0] = hv[size]
        hi[0] = hi[size]
        pos = 0
        while True:
            left = 2 * pos + 1
            if left >= size:
                break
            right = left + 1
            child = left
            if right < size and _heap_less(hv, hi, right, left):
                child = right
            if _heap_less(hv, hi, child, pos):
                hv[pos], hv[child] = hv[child], hv[pos]
                hi[pos], hi[child] = hi[child], hi[pos]
                pos = child
            else:
                break
    return top_v, top_i, size

# Axis dirs E,S,W,N (y grows with row index) and diagonals; diagonal d is
# adjacent to axis d and axis (d+1)%4.
_AX_DX = np.array([1, 0, -1, 0], dtype=np.int64)
_AX_DY = np.array([0, 1, 0, -1], dtype=np.int64)
_DG_DX = np.array([1, -1, -1, 1], dtype=np.int64)
_DG_DY = np.array([1, 1, -1, -1], dtype=np.int64)


@njit(cache=True)
def _update_cell(values, state, label, open_cells, speed, width, height, h,
                 cx, cy, av, al, dv, dl):
    """Best arrival-time candidate at (cx, cy) from accepted neighbors.

    Returns (value, donor_label); (inf, -1) when no accepted donor exists.
    av/al/dv/dl are caller-provided 4-slot scratch buffers.
    """
    idx = cy * width + cx
    f = speed[idx]
    if f <= 0.0:
        return UNREACHED, -1
    hf = h / f
    for i in range(4):
        av[i] = UNREACHED
        al[i] = -1
        dv[i] = UNREACHED
        dl[i] = -1
    for i in range(4):
        x = cx + _AX_DX[i]
        y = cy + _AX_DY[i]
        if 0 <= x < width and 0 <= y < height:
            j = y * width + x
            if state[j] == 2:
                av[i] = values[j]
                al[i] = label[j]
    for i in range(4):
        x = cx + _DG_DX[i]
        y = cy + _DG_DY[i]
        if 0 <= x < width and 0 <= y < height:
            # corner rule: one of the two shared axis cells must be open
            if open_cells[cy * width + x] == 0 and open_cells[y * width + cx] == 0:
                continue
            j = y * width + x
            if state[j] == 2:
                dv[i] = values[j]
                dl[i] = label[j]
    best = UNREACHED
    best_label = -1
    for i in range(4):
        if av[i] < UNREACHED:
            cand = av[i] + hf
            if cand < best or (cand == best and 0 <= al[i] < best_label):
                best = cand
                best_label = al[i]
    for i in range(4):
        if dv[i] < UNREACHED:
            cand = dv[i] + SQRT2 * hf
            if cand < best or (cand == best and 0 <= dl[i] < best_label):
                best = cand
                best_label = dl[i]
    inv_sqrt2 = 1.0 / SQRT2
    for i in range(4):
        A = av[i]
        if A == UNREACHED:
            continue
        for jj in range(2):
            d = i if jj == 0 else (i + 3) % 4
            B = dv[d]
            if B == UNREACHED or A <= B:
                continue
            k = (A - B) / hf
            if k >= inv_sqrt2:
                continue
            cand = A + hf * np.sqrt(1.0 - k * k)
            lab = dl[d]  # diagonal donor is the closer one (B < A)
            if cand < best or (cand == best and 0 <= lab < best_label):
                best = cand
                best_label = lab
    return best, best_label


@njit(cache=True)
def _fmm_kernel(open_cells, speed, width, height, h,
                seeds, seed_vals, seed_labels, max_accept):
    n = open_cells.size
    values = np.full(n, UNREACHED)
    label = np.full(n, -1, np.int64)
    state = np.zeros(n, np.uint8)  # 0 far, 1 narrow, 2 accepted
    order = np.full(n, -1, np.int64)
    cap = 10 * n + seeds.size + 8
    hv = np.empty(cap)
    hi = np.empty(cap, np.int64)
    hsize = 0
    av = np.empty(4)
    al = np.empty(4, np.int64)
    dv = np.empty(4)
    dl = np.empty(4, np.int64)
    for s in range(seeds.size):
        idx = seeds[s]
        if seed_vals[s] < values[idx] or (seed_vals[s] == values[idx]
                                          and seed_labels[s] < label[idx]):
            values[idx] = seed_vals[s]
            label[idx] = seed_labels[s]
            state[idx] = 1
            hsize = _heap_push(hv, hi, hsize, values[idx], idx)
    n_acc = 0
    while hsize > 0:
        val, idx, hsize = _heap_pop(hv, hi, hsize)
        if state[idx] == 2:
            continue
        state[idx] = 2
        order[n_acc] = idx
        n_acc += 1
        if max_accept >= 0 and n_acc >= max_accept:
            break
        cx = idx % width
        cy = idx // width
        for i in range(8):
            if i < 4:
                x = cx + _AX_DX[i]
                y = cy + _AX_DY[i]
            else:
                x = cx + _DG_DX[i - 4]
                y = cy + _DG_DY[i - 4]
            if not (0 <= x < width and 0 <= y < height):
                continue
            j = y * width + x
            if open_cells[j] == 0 or state[j] == 2:
                continue
            if i >= 4 and open_cells[cy * width + x] == 0 \
                    and open_cells[y * width + cx] == 0:
                continue
            cand, lab = _update_cell(values, state, label, open_cells, speed,
                                     width, height, h, x, y, av, al, dv, dl)
            if cand < values[j]:
                values[j] = cand
                label[j] = lab
                state[j] = 1
                hsize = _heap_push(hv, hi, hsize, cand, j)
            elif cand == values[j] and 0 <= lab < label[j]:
                label[j] = lab
    return values, label, order, n_acc


@njit(cache=True)
def _descend_kernel(values, open_cells, width, height, start):
    """Steepest-descent walk (8 neighbors) from start to a zero-value cell.

    Returns (cells, n, ok): visited cells start-first; ok = 0 when stuck.
    """
    cap = values.size + 1
    out = np.empty(cap, np.int64)
    cur = start
    n = 0
    out[n] = cur
    n += 1
    while values[cur] > 0.0:
        cx = cur % width
        cy = cur // width
        best = values[cur]
        best_j = -1
        for i in range(8):
            if i < 4:
                x = cx + _AX_DX[i]
                y = cy + _AX_DY[i]
            else:
                x = cx + _DG_DX[i - 4]
                y = cy + _DG_DY[i - 4]
            if not (0 <= x < width and 0 <= y < height):
                continue
            j = y * width + x
            if open_cells[j] == 0:
                continue
            if i >= 4 and open_cells[cy * width + x] == 0 \
                    and open_cells[y * width + cx] == 0:
                continue
            v = values[j]
            if v < best or (v == best and best_j >= 0 and j < best_j):
                best = v
                best_j = j
        if best_j < 0 or best >= values[cur]:
            return out, n, 0
        cur = best_j
        out[n] = cur
        n += 1
    return out, n, 1


@dataclass(frozen=True)
class SpeedField:
    """Per-cell propagation speed; zero on obstacles."""

    values: np.ndarray

    def normalized(self, grid: OccupancyGrid) -> "SpeedField":
        """Scale so the maximum over free cells is 1 (map-independent timing)."""
        vmax = float(self.values[grid.free].max())
        if vmax <= 0:
            raise ValueError("speed field has no positive value on free space")
        return SpeedField(self.values / vmax)


@dataclass(frozen=True)
class DistanceField:
    """Arrival times of an eikonal wavefront; inf marks unreached cells."""

    grid: OccupancyGrid
    values: np.ndarray             # (h, w) float
    label: np.ndarray              # (h, w) int, nearest-source index, -1 unreached
    source_cells: tuple[int, ...]

    def value_at(self, idx: int) -> float:
        return float(self.values.flat[idx])

    def reached(self, idx: int) -> bool:
        return np.isfinite(self.values.flat[idx])


def _speed_array(grid: OccupancyGrid, speed) -> np.ndarray:
    if isinstance(speed, str):
        if speed != "uniform":
            raise ValueError(f"unknown speed spec {speed!r}")
        arr = grid.free.astype(np.float64)
    else:
        arr = np.asarray(speed.values if isinstance(speed, SpeedField) else speed,
                         dtype=np.float64)
        if arr.shape != grid.free.shape:
            raise ValueError("speed field shape does not match grid")
        arr = np.where(grid.free, np.maximum(arr, SPEED_EPS), 0.0)
    return arr.ravel()


def _solve(grid: OccupancyGrid, seeds, seed_vals, seed_labels, speed,
           mask: np.ndarray | None = None, max_accept: int = -1):
    """Run the kernel; returns flat (values, label, order array)."""
    global _solve_calls
    open_cells = grid.free_flat().copy() if mask is None \
        else (grid.free_flat() & mask.ravel())
    speed_arr = _speed_array(grid, speed)
    speed_arr[~open_cells.ravel()] = 0.0
    _solve_calls += 1
    values, label, order, n_acc = _fmm_kernel(
        open_cells.astype(np.uint8), speed_arr,
        grid.width, grid.height, grid.cell_size,
        np.asarray(seeds, dtype=np.int64),
        np.asarray(seed_vals, dtype=np.float64),
        np.asarray(seed_labels, dtype=np.int64),
        max_accept)
    return values, label, order[:n_acc]


def solve_eikonal(grid: OccupancyGrid, sources, speed="uniform",
                  mask: np.ndarray | None = None) -> DistanceField:
    """Multi-source eikonal solve; D = 0 on sources, labels = nearest source.

    With a mask the wave only travels over cells inside it.
    """
    sources = [int(s) for s in sources]
    if not sources:
        raise ValueError("at least one source cell is required")
    if len(set(sources)) != len(sources):
        raise ValueError("duplicate source cells")
    for s in sources:
        if not (0 <= s < grid.n_cells):
            raise ValueError(f"source {s} out of bounds")
        if not grid.is_free(s):
            raise ValueError(f"source {s} is an obstacle cell")
    values, label, _ = _solve(grid, sources, np.zeros(len(sources)),
                              np.arange(len(sources)), speed, mask=mask)
    return DistanceField(grid, values.reshape(grid.free.shape),
                         label.reshape(grid.free.shape), tuple(sources))


def obstacle_field(grid: OccupancyGrid, boundary_ring: bool = True,
                   mask: np.ndarray | None = None) -> DistanceField:
    """Distance to the nearest obstacle (map boundary counts as a wall).

    Obstacle cells carry value 0 (they are the wave sources); free cells
    adjacent to a wall are seeded with their exact step distance. With a
    mask, cells outside it count as obstacles too.
    """
    open_inner = grid.free if mask is None \
        else grid.free & np.asarray(mask, dtype=bool)
    padded = np.zeros((grid.height + 2, grid.width + 2), dtype=bool)
    padded[1:-1, 1:-1] = open_inner
    if not boundary_ring:
        padded[0, :] = padded[-1, :] = True
        padded[:, 0] = padded[:, -1] = True
        if open_inner.all():
            raise ValueError("no obstacle cells and boundary ring disabled")
    blocked = ~padded
    straight = (blocked[:-2, 1:-1] | blocked[2:, 1:-1]
                | blocked[1:-1, :-2] | blocked[1:-1, 2:])
    diagonal = (blocked[:-2, :-2] | blocked[:-2, 2:]
                | blocked[2:, :-2] | blocked[2:, 2:])
    seed_val = np.where(straight, 1.0, np.where(diagonal, SQRT2, np.inf))
    seed_val *= grid.cell_size
    seed_mask = open_inner & np.isfinite(seed_val)
    seeds = np.flatnonzero(seed_mask.ravel())
    if seeds.size == 0:
        raise ValueError("no obstacle-adjacent cells to seed from")
    values, label, _ = _solve(grid, seeds, seed_val.ravel()[seeds],
                              np.zeros(seeds.size, dtype=np.int64), "uniform",
                              mask=open_inner)
    values = values.reshape(grid.free.shape).copy()
    label = label.reshape(grid.free.shape).copy()
    values[~open_inner] = 0.0
    label[~open_inner] = 0
    sources = tuple(np.flatnonzero(~open_inner.ravel()).tolist())
    return DistanceField(grid, values, label, sources)


def descend_cells(field: DistanceField, from_cell: int) -> list[int]:
    """Steepest-descent cell walk from ``from_cell`` down to a source."""
    grid = field.grid
    if not (0 <= from_cell < grid.n_cells):
        raise ValueError(f"cell {from_cell} out of bounds")
    if not field.reached(from_cell):
        raise ValueError(f"cell {from_cell} was not reached by the field")
    cells, n, ok = _descend_kernel(field.values.ravel(),
                                   grid.free_flat().astype(np.uint8),
                                   grid.width, grid.height, int(from_cell))
    if not ok:
        raise ValueError(f"descent from cell {from_cell} stalled before a source")
    return [int(c) for c in cells[:n]]


def extract_path(field: DistanceField, from_cell: int) -> GridPath:
    """Steepest-descent path from a source cell out to ``from_cell``."""
    return path_from_cells(descend_cells(field, from_cell)[::-1], field.grid)
