"""Worker tours over goal cells: exact search, NN+2-opt, time-window variants.

Travel times come from one wavefront solve per goal (plus one from the
start cell); the pairwise matrix is symmetrized with the smaller of the
two directional values. Workers that deliver to a moving collector route
under a cycle-budget rule: goal j is only accepted while

    t_budget - t_tx >= t_accum + t_goal_j + t_goal_j_to_sink

with t_tx growing linearly in the packages carried. Exact routing is used
up to 12 goals, the NN+2-opt heuristic above that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .fmm import DistanceField, solve_eikonal
from .grid import OccupancyGrid

BF_GOAL_CAP = 13        # hard upper bound for exact routing
BF_SELECT_LIMIT = 12    # router switch point
_ENUM_LIMIT = 9         # exhaustive permutation scan below, subset DP above


@dataclass(frozen=True)
class TravelOracle:
    """Pairwise travel times between start, goals and the delivery sink."""

    start: int
    goals: tuple[int, ...]
    sink: int | None
    speed: float
    gather_time: float
    t_start: np.ndarray        # (k,) seconds start -> goal
    t_pair: np.ndarray         # (k, k) symmetric
    t_sink: np.ndarray         # (k,) goal -> sink (zeros when sink is None)
    t_start_sink: float
    fields: dict = field(default=None, repr=False, compare=False)

    @property
    def n_goals(self) -> int:
        return len(self.goals)

    def leg(self, a: int, b: int) -> float:
        """Travel seconds between tour positions; -1 denotes the start."""
        if a == -1:
            return float(self.t_start[b])
        if b == -1:
            return float(self.t_start[a])
        return float(self.t_pair[a, b])


def build_oracle(grid: OccupancyGrid, start: int, goals, sink: int | None,
                 speed: float, gather_time: float,
                 keep_fields: bool = False, mask=None) -> TravelOracle:
    if speed <= 0:
        raise ValueError("speed must be positive")
    goals = tuple(int(g) for g in goals)
    for cell, what in [(start, "start")] + [(g, "goal") for g in goals] \
            + ([(sink, "sink")] if sink is not None else []):
        if not (0 <= cell < grid.n_cells) or not grid.is_free(cell):
            raise ValueError(f"{what} cell {cell} is not a free cell")
    v = speed * grid.cell_size
    k = len(goals)
    f_start = solve_eikonal(grid, [start], mask=mask)
    goal_fields = [solve_eikonal(grid, [g], mask=mask) for g in goals]
    t_start = np.empty(k)
    t_pair = np.zeros((k, k))
    t_sink = np.zeros(k)
    sv = f_start.values.ravel()
    for i, fi in enumerate(goal_fields):
        fv = fi.values.ravel()
        t_start[i] = min(sv[goals[i]], fv[start]) / v
        if sink is not None:
            t_sink[i] = fv[sink] / v
        for j in range(i + 1, k):
            d = min(fv[goals[j]], goal_fields[j].values.ravel()[goals[i]])
            t_pair[i, j] = t_pair[j, i] = d / v
    t_start_sink = float(sv[sink] / v) if sink is not None else 0.0
    fields = None
    if keep_fields:
        fields = {start: f_start}
        fields.update({g: f for g, f in zip(goals, goal_fields)})
    return TravelOracle(start, goals, sink, speed, gather_time,
                        t_start, t_pair, t_sink, t_start_sink, fields)


@dataclass(frozen=True)
class Tour:
    """Visit order (goal indices), per-goal completion times, full duration."""

    order: tuple[int, ...]
    visit_times: tuple[float, ...]
    total_time: float

    @property
    def visited_count(self) -> int:
        return len(self.order)


def make_tour(oracle: TravelOracle, order) -> Tour:
    """Recompute timings for an explicit visit order."""
    t = 0.0
    cur = -1
    visits = []
    for g in order:
        t += oracle.leg(cur, g) + oracle.gather_time
        visits.append(t)
        cur = g
    total = t + (float(oracle.t_sink[cur]) if cur != -1 and oracle.sink is not None
                 else (oracle.t_start_sink if oracle.sink is not None else 0.0))
    return Tour(tuple(order), tuple(visits), total)


def nn_tour(oracle: TravelOracle) -> Tour:
    """Greedy nearest-unvisited order; ties to the lower goal index."""
    k = oracle.n_goals
    remaining = list(range(k))
    order = []
    cur = -1
    while remaining:
        best = None
        best_t = np.inf
        for g in remaining:
            t = oracle.leg(cur, g)
            if t < best_t:
                best, best_t = g, t
        if not np.isfinite(best_t):
            break  # rest unreachable
        order.append(best)
        remaining.remove(best)
        cur = best
    return make_tour(oracle, order)


def two_opt(tour: Tour, oracle: TravelOracle) -> Tour:
    """Apply the best improving segment reversal until none improves."""
    order = list(tour.order)
    k = len(order)
    if k < 2:
        return make_tour(oracle, order)
    has_sink = oracle.sink is not None
    while True:
        best_delta = -1e-12
        best_move = None
        for i in range(k - 1):
            pred = order[i - 1] if i > 0 else -1
            for j in range(i + 1, k):
                delta = oracle.leg(pred, order[j]) - oracle.leg(pred, order[i])
                if j < k - 1:
                    delta += oracle.leg(order[i], order[j + 1]) \
                        - oracle.leg(order[j], order[j + 1])
                elif has_sink:
                    delta += float(oracle.t_sink[order[i]] - oracle.t_sink[order[j]])
                if delta < best_delta:
                    best_delta = delta
                    best_move = (i, j)
        if best_move is None:
            break
        i, j = best_move
        order[i:j + 1] = reversed(order[i:j + 1])
    return make_tour(oracle, order)


@njit(cache=True)
def _held_karp(t_start, t_pair, t_sink):
    k = t_start.size
    size = 1 << k
    dp = np.full((size, k), np.inf)
    parent = np.full((size, k), -1, np.int64)
    for i in range(k):
        dp[1 << i, i] = t_start[i]
    for mask in range(1, size):
        for last in range(k):
            cur = dp[mask, last]
            if not np.isfinite(cur) or (mask >> last) & 1 == 0:
                continue
            for j in range(k):
                if (mask >> j) & 1:
                    continue
                nm = mask | (1 << j)
                cand = cur + t_pair[last, j]
                if cand < dp[nm, j]:
                    dp[nm, j] = cand
                    parent[nm, j] = last
    full = size - 1
    best = np.inf
    best_last = -1
    for last in range(k):
        cand = dp[full, last] + t_sink[last]
        if cand < best:
            best = cand
            best_last = last
    order = np.empty(k, np.int64)
    mask = full
    last = best_last
    for pos in range(k - 1, -1, -1):
        order[pos] = last
        prev = parent[mask, last]
        mask ^= 1 << last
        last = prev
    return order


def bf_tour(oracle: TravelOracle) -> Tour:
    """Exact minimum-duration tour over all goals (start fixed, sink last)."""
    k = oracle.n_goals
    if k > BF_GOAL_CAP:
        raise ValueError(f"exact routing capped at {BF_GOAL_CAP} goals, got {k}")
    if k == 0:
        return make_tour(oracle, [])
    if k <= _ENUM_LIMIT:
        perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
        cost = oracle.t_start[perms[:, 0]].copy()
        for c in range(1, k):
            cost += oracle.t_pair[perms[:, c - 1], perms[:, c]]
        if oracle.sink is not None:
            cost += oracle.t_sink[perms[:, -1]]
        order = perms[int(np.argmin(cost))]
    else:
        t_sink = oracle.t_sink if oracle.sink is not None else np.zeros(k)
        order = _held_karp(oracle.t_start, oracle.t_pair, np.asarray(t_sink, float))
    return make_tour(oracle, order)


def window_accepts(oracle: TravelOracle, t_budget: float, t_tx_per_pkg: float,
                   t_accum: float, carried: int, cur: int, goal: int) -> bool:
    """The cycle-budget acceptance rule for one more goal."""
    t_tx = t_tx_per_pkg * (carried + 1)
    t_goal = oracle.leg(cur, goal) + oracle.gather_time
    return t_budget - t_tx >= t_accum + t_goal + float(oracle.t_sink[goal])


@njit(cache=True)
def _window_dp(t_start, t_pair, t_sink, gather, t_budget, per_pkg, carried0):
    """Maximize accepted goals (then minimize duration) under the budget rule."""
    k = t_start.size
    size = 1 << k
    dp = np.full((size, k), np.inf)
    parent = np.full((size, k), -1, np.int64)
    for i in range(k):
        acc = t_start[i] + gather
        if t_budget - per_pkg * (carried0 + 1) >= acc + t_sink[i]:
            dp[1 << i, i] = acc
    best_count = 0
    best_cost = np.inf
    best_mask = 0
    best_last = -1
    for mask in range(1, size):
        cnt = 0
        m = mask
        while m:
            cnt += m & 1
            m >>= 1
        for last in range(k):
            cur = dp[mask, last]
            if not np.isfinite(cur) or (mask >> last) & 1 == 0:
                continue
            total = cur + t_sink[last]
            if cnt > best_count or (cnt == best_count and total < best_cost):
                best_count = cnt
                best_cost = total
                best_mask = mask
                best_last = last
            t_tx = per_pkg * (carried0 + cnt + 1)
            for j in range(k):
                if (mask >> j) & 1:
                    continue
                acc = cur + t_pair[last, j] + gather
                if t_budget - t_tx >= acc + t_sink[j] and acc < dp[mask | (1 << j), j]:
                    dp[mask | (1 << j), j] = acc
                    parent[mask | (1 << j), j] = last
    order = np.empty(best_count, np.int64)
    mask = best_mask
    last = best_last
    for pos in range(best_count - 1, -1, -1):
        order[pos] = last
        prev = parent[mask, last]
        mask ^= 1 << last
        last = prev
    return order


def tour_with_window(oracle: TravelOracle, base: str, t_c: float,
                     t_tx_per_pkg: float, carried: int = 0) -> Tour:
    """Route under the collector cycle budget; stops at the first rejection.

    base='nn2o' truncates the NN+2-opt order greedily; base='bf' searches
    all feasible orders for the maximum accepted count (ties by duration).
    ``carried`` packages from earlier cycles inflate the transmit time.
    """
    if t_c <= 0:
        raise ValueError("cycle budget must be positive")
    if oracle.sink is None:
        raise ValueError("window routing needs a delivery sink")
    k = oracle.n_goals
    if base == "bf":
        if k > BF_GOAL_CAP:
            raise ValueError(f"exact routing capped at {BF_GOAL_CAP} goals, got {k}")
        if k == 0:
            return make_tour(oracle, [])
        order = _window_dp(oracle.t_start, oracle.t_pair,
                           np.asarray(oracle.t_sink, float),
                           oracle.gather_time, t_c, t_tx_per_pkg, carried)
        return make_tour(oracle, order)
    if base != "nn2o":
        raise ValueError(f"unknown base router {base!r}")
    base_order = two_opt(nn_tour(oracle), oracle).order
    accepted: list[int] = []
    t_accum = 0.0
    cur = -1
    for g in base_order:
        if not window_accepts(oracle, t_c, t_tx_per_pkg, t_accum,
                              carried + len(accepted), cur, g):
            break
        t_accum += oracle.leg(cur, g) + oracle.gather_time
        accepted.append(g)
        cur = g
    return make_tour(oracle, accepted)


def select_router(goal_count: int) -> str:
    """Exact search up to 12 goals, NN+2-opt beyond."""
    return "bf" if goal_count <= BF_SELECT_LIMIT else "nn2o"


def plan_route(oracle: TravelOracle, t_c: float | None = None,
               t_tx_per_pkg: float = 0.0) -> Tour:
    """Route with the size-selected method; budget-constrained when t_c given."""
    base = select_router(oracle.n_goals)
    if t_c is None:
        return bf_tour(oracle) if base == "bf" else two_opt(nn_tour(oracle), oracle)
    return tour_with_window(oracle, base, t_c, t_tx_per_pkg)
