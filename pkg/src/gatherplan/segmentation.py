"""Free-space partitioning into worker segments.

Three methods, all driven by wavefront propagation:

* BAP  -- balanced areas: grow regions of ~A/n cells outward from the
  operation center, merging undersized leftovers and halving oversized
  segments until the requested count is met.
* PAP  -- polygonal: centroids seeded at obstacle-distance maxima, then
  moved step by step toward the farthest cell of their region until the
  configuration repeats (uniform wavefronts).
* RAP  -- room-like: same iteration but wavefronts travel at a speed
  proportional to the obstacle distance, so fronts race across rooms and
  collide in doorways.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fmm import DistanceField, SpeedField, _solve, extract_path, obstacle_field, solve_eikonal
from .grid import OccupancyGrid

MAX_PARTITION_ITERS = 500

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Partition:
    """Per-cell segment labels (-1 on obstacles) with centroids and areas."""

    grid: OccupancyGrid
    labels: np.ndarray            # (h, w) int
    centroids: tuple[int, ...]
    areas: tuple[int, ...]
    method: str                   # BAP | PAP | RAP
    iterations: int = 1

    @property
    def n_segments(self) -> int:
        return len(self.areas)

    def segment_of(self, cell: int) -> int:
        return int(self.labels.flat[cell])

    def cells_of(self, segment: int) -> np.ndarray:
        return np.flatnonzero(self.labels.ravel() == segment)


def _areas_from_labels(labels: np.ndarray, n: int) -> tuple[int, ...]:
    flat = labels.ravel()
    return tuple(int((flat == s).sum()) for s in range(n))


def _farthest_per_segment(values: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """Per-segment argmax of the arrival time; ties go to the lowest index."""
    flat_v = values.ravel()
    flat_l = labels.ravel()
    valid = (flat_l >= 0) & np.isfinite(flat_v)
    idxs = np.flatnonzero(valid)
    far = np.full(n, -1, dtype=np.int64)
    if idxs.size == 0:
        return far
    order = np.lexsort((idxs, -flat_v[idxs]))
    sorted_idx = idxs[order]
    sorted_lab = flat_l[sorted_idx]
    uniq, first_pos = np.unique(sorted_lab, return_index=True)
    far[uniq] = sorted_idx[first_pos]
    return far


def init_centroids(grid: OccupancyGrid, obstacle_f: DistanceField, n: int,
                   mask: np.ndarray | None = None) -> list[int]:
    """Pick n cells at successive maxima of the obstacle distance.

    After each pick, every cell within a disk of radius equal to the picked
    value is suppressed, spreading the picks over distinct open areas. When
    suppression exhausts the map the bookkeeping restarts (prior picks stay
    excluded), so n picks always exist for n <= free cells.
    """
    if n < 1:
        raise ValueError("need at least one centroid")
    allowed = grid.free_flat().copy()
    if mask is not None:
        allowed &= np.asarray(mask, dtype=bool).ravel()
    vals = np.where(allowed, obstacle_f.values.ravel(), -np.inf)
    w = grid.width
    ys, xs = np.divmod(np.arange(grid.n_cells), w)
    available = allowed.copy()
    picked: list[int] = []
    for _ in range(n):
        masked = np.where(available, vals, -np.inf)
        best = int(np.argmax(masked))
        if masked[best] == -np.inf:
            available = allowed.copy()
            available[picked] = False
            masked = np.where(available, vals, -np.inf)
            best = int(np.argmax(masked))
            if masked[best] == -np.inf:
                raise ValueError("more centroids requested than available cells")
        picked.append(best)
        r_cells = vals[best] / grid.cell_size
        d2 = (xs - best % w) ** 2 + (ys - best // w) ** 2
        available &= d2 > r_cells * r_cells
    return picked


def iterative_partition(centroids, costmap, grid: OccupancyGrid, *,
                        mask: np.ndarray | None = None,
                        max_iters: int = MAX_PARTITION_ITERS,
                        method: str = "PAP") -> tuple[Partition, list[int]]:
    """Move centroids toward the farthest cell of their region until the
    configuration repeats; labels are the final nearest-centroid regions.

    Labels are the raw wavefront-collision regions (no connectivity fixup);
    the segment_* wrappers post-process them.
    """
    xc = [int(c) for c in centroids]
    k = len(xc)
    if len(set(xc)) != k:
        raise ValueError("duplicate centroid cells")
    seen: set[tuple[int, ...]] = set()
    iters = 0
    field = None
    labels = None
    while iters < max_iters:
        key = tuple(sorted(xc))
        if key in seen:
            break
        seen.add(key)
        values, flat_labels, _ = _solve(grid, xc, np.zeros(k), np.arange(k),
                                        costmap, mask=mask)
        field = DistanceField(grid, values.reshape(grid.free.shape),
                              flat_labels.reshape(grid.free.shape), tuple(xc))
        labels = field.label
        iters += 1
        far = _farthest_per_segment(field.values, labels, k)
        desired = []
        for s in range(k):
            if far[s] < 0 or far[s] == xc[s]:
                desired.append(xc[s])
                continue
            path = extract_path(field, int(far[s]))
            desired.append(path.cells[1] if len(path) > 1 else path.cells[0])
        taken: set[int] = set()
        new_xc: list[int] = []
        for s in range(k):
            for cand in (desired[s], xc[s]):
                if cand not in taken:
                    taken.add(cand)
                    new_xc.append(cand)
                    break
            else:
                seg_cells = np.flatnonzero(labels.ravel() == s)
                free_cells = [int(c) for c in seg_cells if int(c) not in taken]
                if not free_cells:
                    raise RuntimeError("could not keep centroids distinct")
                taken.add(free_cells[0])
                new_xc.append(free_cells[0])
        if new_xc == xc:
            break
        xc = new_xc
    if labels is None or tuple(xc) != field.source_cells:
        values, flat_labels, _ = _solve(grid, xc, np.zeros(k), np.arange(k),
                                        costmap, mask=mask)
        labels = flat_labels.reshape(grid.free.shape)
    part = Partition(grid, labels, tuple(xc), _areas_from_labels(labels, k),
                     method, iterations=iters)
    return part, xc


def connectivity_repair(grid: OccupancyGrid, labels: np.ndarray,
                        centroids=None) -> np.ndarray:
    """Reassign 4-disconnected label fragments to an adjacent segment.

    The fragment containing the segment's centroid (or the largest one) is
    kept; orphans join the 4-adjacent label with the longest shared border.
    """
    labels = labels.copy()
    n = int(labels.max()) + 1
    h, w = labels.shape
    changed = True
    while changed:
        changed = False
        for s in range(n):
            mask = labels == s
            if not mask.any():
                continue
            comp, nc = ndimage.label(mask, structure=_CROSS)
            if nc <= 1:
                continue
            if centroids is not None and mask.flat[centroids[s]]:
                keep = comp.flat[centroids[s]]
            else:
                sizes = ndimage.sum_labels(np.ones_like(comp), comp,
                                           index=range(1, nc + 1))
                keep = int(np.argmax(sizes)) + 1
            for c in range(1, nc + 1):
                if c == keep:
                    continue
                orphan = comp == c
                votes: dict[int, int] = {}
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    shifted = np.full_like(labels, -1)
                    ys = slice(max(dy, 0), h + min(dy, 0))
                    xs = slice(max(dx, 0), w + min(dx, 0))
                    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
                    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
                    shifted[ys, xs] = labels[ys_src, xs_src]
                    nb = shifted[orphan]
                    for lab in nb[(nb >= 0) & (nb != s)]:
                        votes[int(lab)] = votes.get(int(lab), 0) + 1
                if not votes:
                    continue  # fragment isolated from every other label
                target = min(votes, key=lambda t: (-votes[t], t))
                labels[orphan] = target
                changed = True
    return labels


def _finalize(grid: OccupancyGrid, labels: np.ndarray, n: int, method: str,
              centroids=None, iterations: int = 1) -> Partition:
    labels = connectivity_repair(grid, labels, centroids)
    if centroids is None:
        centroids = []
        w = grid.width
        for s in range(n):
            cells = np.flatnonzero(labels.ravel() == s)
            cx = (cells % w).mean()
            cy = (cells // w).mean()
            d2 = (cells % w - cx) ** 2 + (cells // w - cy) ** 2
            centroids.append(int(cells[np.argmin(d2)]))
    return Partition(grid, labels, tuple(int(c) for c in centroids),
                     _areas_from_labels(labels, n), method, iterations=iterations)


def _check_n(grid: OccupancyGrid, n: int):
    if not 1 <= n <= grid.n_free:
        raise ValueError(f"segment count {n} outside 1..{grid.n_free}")


def segment_pap(grid: OccupancyGrid, n_segments: int) -> Partition:
    _check_n(grid, n_segments)
    of = obstacle_field(grid)
    seeds = init_centroids(grid, of, n_segments)
    part, xc = iterative_partition(seeds, "uniform", grid, method="PAP")
    return _finalize(grid, part.labels, n_segments, "PAP", xc, part.iterations)


def segment_rap(grid: OccupancyGrid, n_segments: int) -> Partition:
    _check_n(grid, n_segments)
    of = obstacle_field(grid)
    costmap = SpeedField(of.values).normalized(grid)
    seeds = init_centroids(grid, of, n_segments)
    part, xc = iterative_partition(seeds, costmap, grid, method="RAP")
    return _finalize(grid, part.labels, n_segments, "RAP", xc, part.iterations)


def _region_adjacent_segments(labels_flat: np.ndarray, region: np.ndarray,
                              w: int, h: int) -> set[int]:
    found: set[int] = set()
    for idx in region:
        x, y = idx % w, idx // w
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h:
                lab = labels_flat[ny * w + nx]
                if lab >= 0:
                    found.add(int(lab))
    return found


def _split_segment(grid: OccupancyGrid, labels: np.ndarray, seg: int, new_id: int):
    """Halve one segment in place via a two-centroid iterative partition."""
    mask = (labels == seg)
    cells = np.flatnonzero(mask.ravel())
    start = int(cells[0])
    v1, _, _ = _solve(grid, [start], [0.0], [0], "uniform", mask=mask)
    f1 = int(np.flatnonzero(np.isfinite(v1))[np.argmax(v1[np.isfinite(v1)])])
    v2, _, _ = _solve(grid, [f1], [0.0], [0], "uniform", mask=mask)
    f2 = int(np.flatnonzero(np.isfinite(v2))[np.argmax(v2[np.isfinite(v2)])])
    if f1 == f2:
        f2 = int(cells[0] if cells[0] != f1 else cells[1])
    part, _ = iterative_partition([f1, f2], "uniform", grid, mask=mask)
    half = (part.labels == 1)
    labels[half] = new_id


def segment_bap(grid: OccupancyGrid, n_segments: int) -> Partition:
    """Grow ~A/n-cell regions outward from the operation center."""
    _check_n(grid, n_segments)
    field_oc = solve_eikonal(grid, [grid.oc])
    a_total = grid.n_free
    a_opt = a_total / n_segments
    cap = max(1, int(round(a_opt)))
    labels = np.full(grid.free.shape, -1, dtype=np.int64)
    labels_flat = labels.ravel()
    unclassified = grid.free.copy()
    doc = field_oc.values.ravel()
    areas: list[int] = []
    pending: list[np.ndarray] = []
    w, h = grid.width, grid.height
    while unclassified.any():
        cand = np.where(unclassified.ravel(), doc, np.inf)
        origin = int(np.argmin(cand))
        if not np.isfinite(cand[origin]):
            origin = int(np.flatnonzero(unclassified.ravel())[0])
        _, _, region = _solve(grid, [origin], [0.0], [0], "uniform",
                              mask=unclassified, max_accept=cap)
        if region.size >= a_opt / 2 and len(areas) < n_segments:
            labels_flat[region] = len(areas)
            areas.append(int(region.size))
        else:
            adjacent = _region_adjacent_segments(labels_flat, region, w, h)
            if adjacent:
                target = min(adjacent, key=lambda s: (areas[s], s))
                labels_flat[region] = target
                areas[target] += int(region.size)
            elif len(areas) < n_segments:
                labels_flat[region] = len(areas)
                areas.append(int(region.size))
            else:
                pending.append(region)
        unclassified.ravel()[region] = False
    for region in pending:
        adjacent = _region_adjacent_segments(labels_flat, region, w, h)
        if adjacent:
            target = min(adjacent, key=lambda s: (areas[s], s))
        else:
            # disconnected pocket: attach to the segment with the nearest mean
            rx, ry = (region % w).mean(), (region // w).mean()
            best, best_d = 0, np.inf
            for s in range(len(areas)):
                cells = np.flatnonzero(labels_flat == s)
                d = ((cells % w).mean() - rx) ** 2 + ((cells // w).mean() - ry) ** 2
                if d < best_d:
                    best, best_d = s, d
            target = best
        labels_flat[region] = target
        areas[target] += int(region.size)
    while len(areas) < n_segments:
        seg = int(np.argmax(areas))
        new_id = len(areas)
        _split_segment(grid, labels, seg, new_id)
        areas[seg] = int((labels == seg).sum())
        areas.append(int((labels == new_id).sum()))
    return _finalize(grid, labels, n_segments, "BAP")


def place_segment_points(grid: OccupancyGrid, partition: Partition,
                         segment: int, count: int) -> list[int]:
    """Spread ``count`` roughly equidistant cells inside one segment.

    Runs the PAP machinery with everything outside the segment treated as
    an obstacle; used to synthesize goal layouts for workload estimates.
    """
    if count <= 0:
        return []
    mask = partition.labels == segment
    size = int(mask.sum())
    count = min(count, size)
    of = obstacle_field(grid, mask=mask)
    seeds = init_centroids(grid, of, count, mask=mask)
    _, xc = iterative_partition(seeds, "uniform", grid, mask=mask)
    return xc
