"""Mission planning: balance workers against collectors and pick the best plan.

For every segmentation method and every collector count the planner
partitions the map, estimates per-segment workloads from synthetic
equidistant goals, places collector turnaround points at well-connected
segments, contracts the collector loops until the refresh estimate stops
improving, and finally scores every candidate with

    U = alpha * (1 - T_c / max T_c) + beta * (M_d / max M_d)

where T_c is the estimated refresh period and M_d the estimated number of
packages delivered over the mission.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import fmm
from .fmm import DistanceField, SpeedField, extract_path, solve_eikonal
from .grid import GridPath, OccupancyGrid, path_from_cells
from .routing import TravelOracle, build_oracle, nn_tour, select_router, \
    tour_with_window, two_opt
from .segmentation import Partition, iterative_partition, place_segment_points, \
    segment_bap, segment_pap, segment_rap

METHODS = ("BAP", "PAP", "RAP")
_SEGMENTERS = {"BAP": segment_bap, "PAP": segment_pap, "RAP": segment_rap}


@dataclass(frozen=True)
class PlanConfig:
    """Mission parameters; defaults reproduce the reference experiments."""

    n_agents: int = 20
    n_goals: int = 100
    alpha: float = 0.5
    beta: float = 0.5
    worker_speed: float = 2.0       # cells per second
    collector_speed: float = 2.0
    gather_time: float = 5.0        # seconds per goal
    transmit_time: float = 1.0      # seconds per package
    d_com: float = 10.0             # communication range, cells
    t_mission: float = 1000.0
    max_collectors: int | None = None

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError("need at least 2 agents")
        if self.n_goals < 1:
            raise ValueError("need at least 1 goal")
        if self.alpha < 0 or self.beta < 0 or abs(self.alpha + self.beta - 1) > 1e-9:
            raise ValueError("alpha and beta must be non-negative and sum to 1")
        if self.d_com < 1:
            raise ValueError("d_com must be at least one cell")
        for name in ("worker_speed", "collector_speed", "gather_time",
                     "transmit_time", "t_mission"):
            if getattr(self, name) < 0 or (name.endswith("speed")
                                           and getattr(self, name) <= 0):
                raise ValueError(f"{name} out of range")

    @property
    def collector_cap(self) -> int:
        cap = self.n_agents // 2
        return cap if self.max_collectors is None else min(self.max_collectors, cap)


@dataclass(frozen=True)
class SegmentGraph:
    """Segment adjacency with the direct-upload zone around the center."""

    n: int
    adjacency: dict
    direct: frozenset
    pruned: dict                    # adjacency restricted to non-direct vertices

    def degree(self, s: int) -> int:
        return len(self.pruned.get(s, ()))


def build_segment_graph(partition: Partition) -> SegmentGraph:
    labels = partition.labels
    n = partition.n_segments
    adjacency: dict[int, set[int]] = {s: set() for s in range(n)}
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        m = (a >= 0) & (b >= 0) & (a != b)
        for u, v in zip(a[m].ravel(), b[m].ravel()):
            adjacency[int(u)].add(int(v))
            adjacency[int(v)].add(int(u))
    oc_seg = partition.segment_of(partition.grid.oc)
    direct = frozenset({oc_seg} | adjacency[oc_seg])
    pruned = {s: {t for t in adjacency[s] if t not in direct}
              for s in range(n) if s not in direct}
    return SegmentGraph(n, adjacency, direct, pruned)


@dataclass(frozen=True)
class Association:
    """Collector turnaround points and the worker segments grouped to them."""

    seed_segments: tuple[int, ...]
    x_cols: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]
    iterations: int


def segment_frontier_cells(partition: Partition) -> np.ndarray:
    """Free cells 4-adjacent to a differently labeled free cell."""
    labels = partition.labels
    frontier = np.zeros(labels.shape, dtype=bool)
    a, b = labels[:, :-1], labels[:, 1:]
    m = (a >= 0) & (b >= 0) & (a != b)
    frontier[:, :-1] |= m
    frontier[:, 1:] |= m
    a, b = labels[:-1, :], labels[1:, :]
    m = (a >= 0) & (b >= 0) & (a != b)
    frontier[:-1, :] |= m
    frontier[1:, :] |= m
    return np.flatnonzero(frontier.ravel())


def associate_collectors(grid: OccupancyGrid, partition: Partition,
                         graph: SegmentGraph, n_collectors: int) -> Association | None:
    """Seed collectors at the best-connected non-direct segments and group
    worker segments to them by frontier-speed wavefront collision.

    Returns None when every segment uploads directly (no one to serve).
    """
    if n_collectors < 1:
        raise ValueError("need at least one collector")
    non_direct = [s for s in range(graph.n) if s not in graph.direct]
    if not non_direct:
        return None
    ranked = sorted(non_direct,
                    key=lambda s: (-graph.degree(s), -partition.areas[s], s))
    seeds = ranked[:min(n_collectors, len(non_direct))]
    seed_cells = [partition.centroids[s] for s in seeds]
    mask = np.isin(partition.labels, non_direct)
    frontier = segment_frontier_cells(partition)
    if frontier.size == 0:
        # single segment: fall back to uniform propagation
        costmap = "uniform"
    else:
        front_field = solve_eikonal(grid, frontier.tolist())
        vals = np.where(np.isfinite(front_field.values), front_field.values, 0.0)
        costmap = SpeedField(vals).normalized(grid)
    part, x_cols = iterative_partition(seed_cells, costmap, grid, mask=mask)
    coll_labels = part.labels
    groups: list[list[int]] = [[] for _ in seeds]
    for s in non_direct:
        lab = int(coll_labels.flat[partition.centroids[s]])
        if lab < 0:
            # centroid unreachable inside the masked region: nearest turnaround
            cx, cy = grid.xy(partition.centroids[s])
            best, best_d = 0, np.inf
            for j, xc in enumerate(x_cols):
                xx, yy = grid.xy(xc)
                d = (xx - cx) ** 2 + (yy - cy) ** 2
                if d < best_d:
                    best, best_d = j, d
            lab = best
        groups[lab].append(s)
    kept = [(seeds[j], x_cols[j], tuple(groups[j]))
            for j in range(len(seeds)) if groups[j]]
    if not kept:
        return None
    return Association(
        seed_segments=tuple(k[0] for k in kept),
        x_cols=tuple(k[1] for k in kept),
        groups=tuple(k[2] for k in kept),
        iterations=part.iterations)


@dataclass(frozen=True)
class CollectorRoute:
    """Out-and-back loop between the operation center and x_col."""

    path: GridPath                     # oc -> x_col
    cycle_time: float                  # full loop, seconds
    assigned_workers: tuple[int, ...]  # worker segment ids

    @property
    def x_col(self) -> int:
        return self.path.end


def contract_collector_path(grid: OccupancyGrid, route: CollectorRoute,
                            worker_times, config: PlanConfig, *,
                            worker_time_fn=None, other_refresh_terms=(),
                            direct_mask: np.ndarray | None = None
                            ) -> CollectorRoute | None:
    """Pull the turnaround point toward the center while the refresh estimate
    improves and the slowest assigned worker can still make the cycle.

    Returns None when the loop contracts into the direct-upload zone (the
    collector is pointless there and is removed).
    """
    cells = route.path.cells
    v_c = config.collector_speed * grid.cell_size
    steps = np.array([path_from_cells(cells[i:i + 2], grid).length
                      for i in range(len(cells) - 1)])
    cum = np.concatenate(([0.0], np.cumsum(steps)))
    pos = len(cells) - 1
    t_c = 2.0 * cum[pos] / v_c
    times = list(worker_time_fn(cells[pos])) if worker_time_fn else list(worker_times)
    others = list(other_refresh_terms)
    cur_est = float(np.mean(others + [t_c]))
    while pos > 1:
        cand = cells[pos - 1]
        t_new = 2.0 * cum[pos - 1] / v_c
        new_times = list(worker_time_fn(cand)) if worker_time_fn else times
        if new_times and max(new_times) > t_new + 1e-9:
            break  # the balance constraint would be violated
        est_new = float(np.mean(others + [t_new]))
        if est_new >= cur_est - 1e-12:
            break
        if direct_mask is not None and direct_mask.ravel()[cand]:
            return None
        pos -= 1
        t_c = t_new
        times = new_times
        cur_est = est_new
    path = path_from_cells(cells[:pos + 1], grid)
    return CollectorRoute(path, 2.0 * path.length / v_c, route.assigned_workers)


def utility(est_tc, est_md, alpha: float, beta: float) -> np.ndarray:
    """Score candidates on normalized refresh time and deliveries."""
    tc = np.asarray(est_tc, dtype=float)
    md = np.asarray(est_md, dtype=float)
    if tc.size == 0:
        raise ValueError("no candidates to score")
    max_tc = tc.max()
    max_md = md.max()
    term_tc = 1.0 - tc / max_tc if max_tc > 0 else np.zeros_like(tc)
    term_md = md / max_md if max_md > 0 else np.zeros_like(md)
    return alpha * term_tc + beta * term_md


@dataclass(frozen=True)
class PlannerStats:
    fmm_calls: int
    b_w: int                 # segmentation balance iterations
    b_c: int                 # collector association iterations
    estimation_points: int   # synthetic goals placed


@dataclass(frozen=True)
class PlanCandidate:
    method: str
    n_collectors: int
    partition: Partition
    collectors: tuple[CollectorRoute, ...]
    pairing: dict                    # worker segment id -> collector idx | None
    est_refresh: float
    est_delivered: int
    goal_counts: tuple[int, ...]
    workloads: tuple[float, ...]
    stats: PlannerStats
    utility: float = float("nan")

    @property
    def n_workers(self) -> int:
        return self.partition.n_segments


@dataclass(frozen=True)
class MissionPlan:
    winner: PlanCandidate
    candidates: tuple[PlanCandidate, ...]


def allocate_goal_counts(partition: Partition, m_goals: int) -> list[int]:
    """Split M goals across segments proportionally to area (sums exactly)."""
    areas = np.asarray(partition.areas, dtype=float)
    raw = m_goals * areas / areas.sum()
    counts = np.floor(raw + 0.5).astype(int)
    by_size = sorted(range(len(areas)), key=lambda s: (-areas[s], s))
    i = 0
    while counts.sum() != m_goals:
        s = by_size[i % len(by_size)]
        if counts.sum() < m_goals:
            counts[s] += 1
        elif counts[s] > 0:
            counts[s] -= 1
        i += 1
    return counts.tolist()


def estimate_workload(grid: OccupancyGrid, partition: Partition, segment: int,
                      m_goals: int, config: PlanConfig,
                      count: int | None = None) -> float:
    """Tour time from the segment centroid through synthetic equidistant
    goals (gathering included, no delivery leg)."""
    if count is None:
        count = int(math.floor(m_goals * partition.areas[segment]
                               / sum(partition.areas) + 0.5))
    if count <= 0:
        return 0.0
    goals = place_segment_points(grid, partition, segment, count)
    mask = partition.labels == segment
    oracle = build_oracle(grid, partition.centroids[segment], goals, None,
                          config.worker_speed, config.gather_time, mask=mask)
    tour = two_opt(nn_tour(oracle), oracle)
    return tour.total_time


def _oracle_with_sink(oracle: TravelOracle, sink: int, sink_field: DistanceField,
                      speed_cells: float) -> TravelOracle:
    """Attach a delivery sink to a segment-local oracle using one extra field."""
    v = speed_cells * sink_field.grid.cell_size
    flat = sink_field.values.ravel()
    t_sink = np.array([flat[g] / v for g in oracle.goals])
    return dataclasses.replace(oracle, sink=sink, t_sink=t_sink,
                               t_start_sink=float(flat[oracle.start] / v))


def plan_mission(grid: OccupancyGrid, config: PlanConfig,
                 methods=METHODS, collector_counts=None) -> MissionPlan:
    """Evaluate every (method, collector count) candidate and keep the best."""
    field_oc = solve_eikonal(grid, [grid.oc])
    v_w = config.worker_speed * grid.cell_size
    if collector_counts is None:
        collector_counts = range(config.collector_cap + 1)
    candidates: list[PlanCandidate] = []
    for method in methods:
        if method not in _SEGMENTERS:
            raise ValueError(f"unknown segmentation method {method!r}")
        for n_c in collector_counts:
            calls_before = fmm.solve_call_count()
            candidates.append(_evaluate_candidate(
                grid, config, method, int(n_c), field_oc, v_w, calls_before))
    scores = utility([c.est_refresh for c in candidates],
                     [c.est_delivered for c in candidates],
                     config.alpha, config.beta)
    candidates = [dataclasses.replace(c, utility=float(u))
                  for c, u in zip(candidates, scores)]
    rank = {m: i for i, m in enumerate(METHODS)}
    winner = min(candidates,
                 key=lambda c: (-c.utility, c.n_collectors, rank[c.method]))
    return MissionPlan(winner, tuple(candidates))


def _direct_cycle(workload: float, centroid: int, field_oc: DistanceField,
                  v_w: float) -> float:
    return workload + 2.0 * float(field_oc.values.ravel()[centroid]) / v_w


def _contribution(per_cycle_goals: int, cycle_time: float, t_mission: float) -> int:
    if per_cycle_goals <= 0 or cycle_time <= 0:
        return 0
    return int(math.floor(per_cycle_goals * t_mission / cycle_time))


def _segment_estimates(grid: OccupancyGrid, partition: Partition, counts,
                       config: PlanConfig):
    """Per-segment synthetic goal layouts, travel oracles and workload times."""
    oracles: list[TravelOracle | None] = []
    workloads: list[float] = []
    for s in range(partition.n_segments):
        if counts[s] <= 0:
            oracles.append(None)
            workloads.append(0.0)
            continue
        goals = place_segment_points(grid, partition, s, counts[s])
        mask = partition.labels == s
        oracle = build_oracle(grid, partition.centroids[s], goals, None,
                              config.worker_speed, config.gather_time, mask=mask)
        oracles.append(oracle)
        workloads.append(two_opt(nn_tour(oracle), oracle).total_time)
    return oracles, workloads


def _evaluate_candidate(grid: OccupancyGrid, config: PlanConfig, method: str,
                        n_c: int, field_oc: DistanceField, v_w: float,
                        calls_before: int) -> PlanCandidate:
    n_w = config.n_agents - n_c
    partition = _SEGMENTERS[method](grid, n_w)
    counts = allocate_goal_counts(partition, config.n_goals)
    oracles, workloads = _segment_estimates(grid, partition, counts, config)
    graph = build_segment_graph(partition)
    assoc = associate_collectors(grid, partition, graph, n_c) if n_c > 0 else None
    collectors: list[CollectorRoute] = []
    pairing: dict[int, int | None] = {s: None for s in range(n_w)}
    b_c = 0
    if assoc is not None:
        b_c = assoc.iterations
        direct_mask = np.isin(partition.labels, sorted(graph.direct))
        centroid_fields: dict[int, DistanceField] = {}
        for workers, x_col in zip(assoc.groups, assoc.x_cols):
            for s in workers:
                if s not in centroid_fields:
                    centroid_fields[s] = solve_eikonal(grid, [partition.centroids[s]])

            def worker_time_fn(cell, _workers=workers):
                return [workloads[s]
                        + float(centroid_fields[s].values.ravel()[cell]) / v_w
                        for s in _workers]

            path = extract_path(field_oc, x_col)
            v_c = config.collector_speed * grid.cell_size
            route = CollectorRoute(path, 2.0 * path.length / v_c, tuple(workers))
            other = [c.cycle_time for c in collectors] \
                + [_direct_cycle(workloads[s], partition.centroids[s], field_oc, v_w)
                   for s in sorted(graph.direct)]
            route = contract_collector_path(
                grid, route, worker_time_fn(x_col), config,
                worker_time_fn=worker_time_fn, other_refresh_terms=other,
                direct_mask=direct_mask)
            if route is not None:
                collectors.append(route)
                for s in route.assigned_workers:
                    pairing[s] = len(collectors) - 1
    refresh_terms: list[float] = [c.cycle_time for c in collectors]
    est_md = 0
    for s in range(n_w):
        if pairing[s] is None:
            cycle = _direct_cycle(workloads[s], partition.centroids[s], field_oc, v_w)
            refresh_terms.append(cycle)
            est_md += _contribution(counts[s], cycle, config.t_mission)
    for route in collectors:
        sink_field = solve_eikonal(grid, [route.x_col])
        for s in route.assigned_workers:
            if counts[s] <= 0 or oracles[s] is None:
                continue
            oracle = _oracle_with_sink(oracles[s], route.x_col, sink_field,
                                       config.worker_speed)
            tour = tour_with_window(oracle, select_router(counts[s]),
                                    route.cycle_time, config.transmit_time)
            est_md += _contribution(tour.visited_count, route.cycle_time,
                                    config.t_mission)
    est_refresh = float(np.mean(refresh_terms))
    stats = PlannerStats(
        fmm_calls=fmm.solve_call_count() - calls_before,
        b_w=partition.iterations, b_c=b_c,
        estimation_points=int(sum(counts)))
    return PlanCandidate(method, n_c, partition, tuple(collectors), pairing,
                         est_refresh, est_md, tuple(counts), tuple(workloads),
                         stats)
