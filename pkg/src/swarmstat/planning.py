"""Simultaneous target assignment and trajectory planning on the A* grid.

A* searches run for every agent/target pair, the resulting path costs feed an
optimal assignment, and the winning grid paths are mapped back to world
coordinates as waypoint lists.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .scenario import GridSpec, MissionArea, grid_to_world, world_to_grid

SQRT2 = math.sqrt(2.0)

_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


class NoPath(Exception):
    """The goal is not reachable from the start."""


class InvalidEndpoint(ValueError):
    """Start or goal is outside the grid or on an obstacle."""


class Infeasible(Exception):
    """No assignment with finite total cost exists."""


@dataclass(frozen=True)
class GridPath:
    nodes: tuple[tuple[int, int], ...]
    cost: float

    @property
    def start(self):
        return self.nodes[0]

    @property
    def goal(self):
        return self.nodes[-1]


def path_cost(nodes, cost_mode: str = "octile") -> float:
    """Cost of a node chain computed from its move counts (order independent)."""
    n_diag = sum(1 for a, b in zip(nodes, nodes[1:]) if a[0] != b[0] and a[1] != b[1])
    n_orth = len(nodes) - 1 - n_diag
    if cost_mode == "octile":
        return n_orth + n_diag * SQRT2
    return float(n_orth + n_diag)


def astar(grid: GridSpec, obstacles, start, goal, cost_mode: str = "octile") -> GridPath:
    """8-connected A* from ``start`` to ``goal`` avoiding obstacle nodes.

    cost_mode
        ``"octile"``: moves cost 1 (orthogonal) or sqrt(2) (diagonal) with the
        Euclidean heuristic, admissible and consistent.
        ``"unit"``: every move costs 1 (nodes traversed); the Euclidean
        heuristic is divided by sqrt(2) to stay admissible.
        ``"paper"``: unit moves with the raw Euclidean heuristic. Not
        guaranteed optimal for diagonal moves.

    Open-list ties in f go to the larger g, then the lexicographically
    smaller node.
    """
    start = tuple(start)
    goal = tuple(goal)
    for name, node in (("start", start), ("goal", goal)):
        if not grid.contains(node):
            raise InvalidEndpoint(f"{name} {node} outside grid")
        if node in obstacles:
            raise InvalidEndpoint(f"{name} {node} is an obstacle")
    if cost_mode == "octile":
        diag_cost, h_scale = SQRT2, 1.0
    elif cost_mode == "unit":
        diag_cost, h_scale = 1.0, 1.0 / SQRT2
    elif cost_mode == "paper":
        diag_cost, h_scale = 1.0, 1.0
    else:
        raise ValueError(f"unknown cost mode {cost_mode!r}")

    gr, gc = goal

    def h(node):
        return h_scale * math.hypot(node[0] - gr, node[1] - gc)

    n_rows, n_cols = grid.n_rows, grid.n_cols
    g_best = {start: 0.0}
    parent = {start: None}
    closed = set()
    heap = [(h(start), -0.0, start)]
    while heap:
        f, neg_g, node = heapq.heappop(heap)
        if node in closed:
            continue
        if node == goal:
            chain = []
            while node is not None:
                chain.append(node)
                node = parent[node]
            chain.reverse()
            return GridPath(tuple(chain), path_cost(chain, cost_mode))
        closed.add(node)
        g = -neg_g
        r, c = node
        for dr, dc in _MOVES:
            nb = (r + dr, c + dc)
            if not (0 <= nb[0] < n_rows and 0 <= nb[1] < n_cols) or nb in obstacles or nb in closed:
                continue
            ng = g + (diag_cost if dr and dc else 1.0)
            if ng < g_best.get(nb, math.inf):
                g_best[nb] = ng
                parent[nb] = node
                heapq.heappush(heap, (ng + h(nb), -ng, nb))
    raise NoPath(f"no path from {start} to {goal}")


# ---------------------------------------------------------------------------
# assignment


@dataclass(frozen=True)
class Assignment:
    """Agent index -> target index, plus the targets left without an agent."""

    pairs: dict
    unassigned: tuple[int, ...]
    total: float

    def vector(self, n_agents: int) -> tuple:
        return tuple(self.pairs.get(i) for i in range(n_agents))


def _kuhn_munkres(c: np.ndarray):
    """Shortest augmenting path Hungarian method for an n x m matrix, n <= m.

    Returns (row -> col array, row potentials u, column potentials v) with
    c[i, j] - u[i] - v[j] >= 0 and equality on the matched edges.
    """
    n, m = c.shape
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) matched to column j
    way = [0] * (m + 1)
    rows = c.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = INF
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    match = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            match[p[j] - 1] = j - 1
    return match, np.array(u[1:]), np.array(v[1:])


def _has_perfect_matching(adj: list[list[int]], rows: list[int], banned_cols: set) -> bool:
    match_col: dict[int, int] = {}

    def augment(r, seen):
        for cidx in adj[r]:
            if cidx in banned_cols or cidx in seen:
                continue
            seen.add(cidx)
            if cidx not in match_col or augment(match_col[cidx], seen):
                match_col[cidx] = r
                return True
        return False

    return all(augment(r, set()) for r in rows)


def _solve(costs: np.ndarray) -> tuple[list[int], float]:
    """Optimal n x m (n <= m) assignment; lexicographically smallest among ties."""
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    finite = np.isfinite(costs)
    if not finite.any(axis=1).all():
        raise Infeasible("an agent has no finite-cost target")
    scale = float(np.abs(costs[finite]).max()) if finite.any() else 0.0
    big = (scale + 1.0) * (n + 1) * 4.0
    work = np.where(finite, costs, big)
    # pad to square with zero-cost dummy rows so surplus columns are free
    square = np.vstack([work, np.zeros((m - n, m))])
    match, u, v = _kuhn_munkres(square)
    if any(not finite[i, match[i]] for i in range(n)):
        raise Infeasible("no finite-cost assignment exists")
    # optimal assignments are exactly the perfect matchings of tight edges
    tol = 1e-9 * (scale + 1.0)
    reduced = square - u[:, None] - v[None, :]
    adj = [[j for j in range(m) if reduced[i, j] <= tol and (i >= n or finite[i, j])] for i in range(m)]
    chosen: list[int] = []
    banned: set[int] = set()
    for i in range(n):
        for j in adj[i]:
            if j in banned:
                continue
            banned.add(j)
            if _has_perfect_matching(adj, list(range(i + 1, m)), banned):
                chosen.append(j)
                break
            banned.discard(j)
        else:  # numerical fallback: keep the solver's own choice
            j = int(match[i])
            chosen.append(j)
            banned.add(j)
    total = 0.0
    for i, j in enumerate(chosen):
        total += costs[i, j]
    return chosen, total


def hungarian(costs) -> Assignment:
    """Minimum-total-cost perfect matching of a square cost matrix.

    ``inf`` entries mark forbidden pairs. Raises :class:`Infeasible` when no
    finite perfect matching exists.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2 or costs.shape[0] != costs.shape[1]:
        raise ValueError("hungarian needs a square matrix")
    if np.any(costs < 0):
        raise ValueError("costs must be non-negative")
    cols, total = _solve(costs)
    return Assignment(dict(enumerate(cols)), (), total)


def assign_unequal(costs) -> Assignment:
    """Optimal assignment with more targets than agents; surplus targets stay unassigned."""
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    if n > m:
        raise ValueError("assign_unequal needs n_targets >= n_agents")
    if n == m:
        return hungarian(costs)
    if np.any(costs < 0):
        raise ValueError("costs must be non-negative")
    cols, total = _solve(costs)
    unassigned = tuple(j for j in range(m) if j not in set(cols))
    return Assignment(dict(enumerate(cols)), unassigned, total)


def assign_greedy(costs) -> Assignment:
    """Repeatedly match the globally cheapest remaining agent/target pair."""
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    pairs: dict[int, int] = {}
    order = sorted((costs[i, j], i, j) for i in range(n) for j in range(m) if np.isfinite(costs[i, j]))
    used_t: set[int] = set()
    total = 0.0
    for c, i, j in order:
        if i in pairs or j in used_t:
            continue
        pairs[i] = j
        used_t.add(j)
        total += c
    if len(pairs) < min(n, m):
        raise Infeasible("greedy assignment left an agent without a reachable target")
    return Assignment(dict(sorted(pairs.items())), tuple(j for j in range(m) if j not in used_t), total)


def _assign(costs: np.ndarray, mode: str) -> Assignment:
    n, m = costs.shape
    if mode == "greedy":
        return assign_greedy(costs)
    if n <= m:
        return assign_unequal(costs)
    # more agents than targets: give every target its best agent, rest idle
    t = assign_unequal(costs.T)
    pairs = {a: tgt for tgt, a in t.pairs.items()}
    return Assignment(dict(sorted(pairs.items())), (), t.total)


# ---------------------------------------------------------------------------
# mission planning


@dataclass(frozen=True)
class MissionPlan:
    """Output of one planning pass.

    ``assignment`` maps an agent id to a target id; ids are whatever the
    caller passed in (scenario indices for the initial plan, track labels for
    re-plans). ``waypoints`` holds the world-frame route of each assigned agent.
    """

    replan_index: int
    t: float
    agent_ids: tuple
    target_ids: tuple
    assignment: dict
    waypoints: dict
    paths: dict
    unassigned_targets: tuple
    idle_agents: tuple
    cost_matrix: np.ndarray = field(repr=False)
    total_cost: float = 0.0


def nearest_free_node(node, grid: GridSpec, obstacles):
    """``node`` itself when free, else the closest free node (ties lexicographic)."""
    if node not in obstacles:
        return node
    best = None
    for cand in grid.nodes():
        if cand in obstacles:
            continue
        d = (cand[0] - node[0]) ** 2 + (cand[1] - node[1]) ** 2
        if best is None or d < best[0]:
            best = (d, cand)
    if best is None:
        raise Infeasible("grid has no free node")
    return best[1]


def plan_mission(agent_positions: Sequence, target_positions: Sequence, grid: GridSpec, area: MissionArea,
                 obstacles, *, agent_ids: Sequence[Hashable] | None = None,
                 target_ids: Sequence[Hashable] | None = None, cost_mode: str = "octile",
                 assignment_mode: str = "optimal", replan_index: int = 0, t: float = 0.0) -> MissionPlan:
    """Run A* for every agent/target pair, assign, and build world waypoints.

    Positions that fall on obstacle nodes are moved to the nearest free node.
    Each route ends at the target's world position unless the target sits
    over an obstacle, in which case it ends at the relocated node.
    """
    agent_ids = tuple(range(len(agent_positions))) if agent_ids is None else tuple(agent_ids)
    target_ids = tuple(range(len(target_positions))) if target_ids is None else tuple(target_ids)
    if len(agent_ids) != len(agent_positions) or len(target_ids) != len(target_positions):
        raise ValueError("id lists must match position lists")
    if not agent_positions or not target_positions:
        raise Infeasible("planning needs at least one agent and one target")
    obstacles = frozenset(obstacles)
    starts = [nearest_free_node(world_to_grid(p, grid, area), grid, obstacles) for p in agent_positions]
    raw_goals = [world_to_grid(p, grid, area) for p in target_positions]
    goals = [nearest_free_node(g, grid, obstacles) for g in raw_goals]

    n, m = len(starts), len(goals)
    costs = np.full((n, m), math.inf)
    found: dict[tuple[int, int], GridPath] = {}
    for i, s in enumerate(starts):
        for j, g in enumerate(goals):
            try:
                p = astar(grid, obstacles, s, g, cost_mode)
            except NoPath:
                continue
            found[i, j] = p
            costs[i, j] = p.cost
    assignment = _assign(costs, assignment_mode)

    pairs, waypoints, paths = {}, {}, {}
    for i, j in assignment.pairs.items():
        path = found[i, j]
        wps = [grid_to_world(nd, grid, area) for nd in path.nodes]
        if goals[j] == raw_goals[j]:
            wps[-1] = (float(target_positions[j][0]), float(target_positions[j][1]))
        pairs[agent_ids[i]] = target_ids[j]
        waypoints[agent_ids[i]] = tuple(wps)
        paths[agent_ids[i]] = path
    assigned_t = set(assignment.pairs.values())
    return MissionPlan(
        replan_index=replan_index,
        t=t,
        agent_ids=agent_ids,
        target_ids=target_ids,
        assignment=pairs,
        waypoints=waypoints,
        paths=paths,
        unassigned_targets=tuple(target_ids[j] for j in range(m) if j not in assigned_t),
        idle_agents=tuple(agent_ids[i] for i in range(n) if i not in assignment.pairs),
        cost_matrix=costs,
        total_cost=assignment.total,
    )
