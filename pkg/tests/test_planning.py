import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmstat.planning import (
    Infeasible,
    InvalidEndpoint,
    NoPath,
    assign_greedy,
    assign_unequal,
    astar,
    hungarian,
    path_cost,
    plan_mission,
)
from swarmstat.scenario import GridSpec, MissionArea, bundled_scenario, grid_to_world, world_to_grid

from .oracles import SQRT2, brute_assignment, dijkstra_path


def test_astar_degenerate_and_diagonal():
    g = GridSpec(3, 3)
    p = astar(g, set(), (1, 1), (1, 1))
    assert p.nodes == ((1, 1),) and p.cost == 0
    assert astar(g, set(), (0, 0), (2, 2), "unit").cost == 2
    assert astar(g, set(), (0, 0), (2, 2), "paper").cost == 2
    assert astar(g, set(), (0, 0), (2, 2)).cost == pytest.approx(2 * SQRT2)


def test_astar_walled_goal_and_bad_endpoints():
    g = GridSpec(5, 5)
    wall = {(r, c) for r in range(1, 4) for c in range(1, 4)} - {(2, 2)}
    with pytest.raises(NoPath):
        astar(g, wall, (0, 0), (2, 2))
    with pytest.raises(InvalidEndpoint):
        astar(g, {(0, 0)}, (0, 0), (4, 4))
    with pytest.raises(InvalidEndpoint):
        astar(g, set(), (0, 0), (5, 0))


def test_astar_tie_break_deterministic():
    g = GridSpec(6, 6)
    a = astar(g, {(2, 2)}, (0, 0), (5, 5))
    b = astar(g, {(2, 2)}, (0, 0), (5, 5))
    assert a == b


@st.composite
def grids(draw):
    rows, cols = draw(st.integers(2, 9)), draw(st.integers(2, 9))
    nodes = [(r, c) for r in range(rows) for c in range(cols)]
    obs = set(draw(st.lists(st.sampled_from(nodes), max_size=len(nodes) // 3)))
    free = [n for n in nodes if n not in obs]
    if len(free) < 2:
        obs = set()
        free = nodes
    s = draw(st.sampled_from(free))
    t = draw(st.sampled_from(free))
    return rows, cols, obs, s, t


@given(grids(), st.sampled_from(["octile", "unit"]))
def test_astar_matches_dijkstra(case, mode):
    rows, cols, obs, s, t = case
    ref = dijkstra_path(rows, cols, obs, s, t, SQRT2 if mode == "octile" else 1.0)
    if ref is None:
        with pytest.raises(NoPath):
            astar(GridSpec(rows, cols), obs, s, t, mode)
        return
    p = astar(GridSpec(rows, cols), obs, s, t, mode)
    assert p.cost == path_cost(ref, mode)
    assert p.start == s and p.goal == t
    assert not set(p.nodes) & obs
    for a, b in zip(p.nodes, p.nodes[1:]):
        assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


@given(grids())
def test_paper_cost_mode_is_legal_path(case):
    rows, cols, obs, s, t = case
    try:
        p = astar(GridSpec(rows, cols), obs, s, t, "paper")
    except NoPath:
        return
    ref = dijkstra_path(rows, cols, obs, s, t, 1.0)
    assert p.cost >= path_cost(ref, "unit") and not set(p.nodes) & obs


def test_hungarian_examples():
    a = hungarian([[1, 2], [2, 4]])
    assert a.pairs == {0: 1, 1: 0} and a.total == 4
    eye = 1 - np.eye(4)
    assert hungarian(eye).pairs == {i: i for i in range(4)}
    with pytest.raises(Infeasible):
        hungarian([[1, math.inf], [2, math.inf]])


def test_hungarian_tie_lexicographic():
    assert hungarian(np.ones((3, 3))).vector(3) == (0, 1, 2)
    assert hungarian([[1, 1], [1, 1]]).pairs == {0: 0, 1: 1}


def test_assign_unequal_examples():
    a = assign_unequal([[5, 2, 9]])
    assert a.pairs == {0: 1} and a.unassigned == (0, 2)
    sq = [[3, 1], [1, 3]]
    assert assign_unequal(sq) == hungarian(sq)
    with pytest.raises(Infeasible):
        assign_unequal([[math.inf, math.inf, math.inf], [1, 2, 3]])


@given(st.integers(1, 6), st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_assignment_matches_brute_force(n, extra, seed):
    rng = np.random.default_rng(seed)
    C = rng.integers(0, 20, size=(n, n + extra)).astype(float)
    a = assign_unequal(C)
    assert a.total == brute_assignment(C)
    assert len(set(a.pairs.values())) == n
    assert sorted(a.unassigned) == sorted(set(range(n + extra)) - set(a.pairs.values()))


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_assignment_infinite_entries(n, seed):
    rng = np.random.default_rng(seed)
    C = rng.random((n, n + 1)) * 10
    C[rng.random(C.shape) < 0.3] = math.inf
    ref = brute_assignment(C)
    if math.isinf(ref):
        with pytest.raises(Infeasible):
            assign_unequal(C)
    else:
        assert assign_unequal(C).total == pytest.approx(ref, abs=1e-9)


def test_greedy_is_feasible_and_not_better():
    C = np.array([[1.0, 2.0], [2.0, 100.0]])
    g = assign_greedy(C)
    assert g.pairs == {0: 0, 1: 1} and g.total >= hungarian(C).total


AREA = MissionArea(0, 1000, 0, 1000)


def test_plan_single_pair_straight_chain():
    g = GridSpec(11, 11)
    p = plan_mission([(0.0, 0.0)], [(1000.0, 0.0)], g, AREA, set())
    assert p.assignment == {0: 0}
    wps = p.waypoints[0]
    assert len(wps) == 11 and all(y == 0.0 for _, y in wps)
    assert wps[-1] == (1000.0, 0.0)


def test_plan_enclosed_agent_infeasible():
    g = GridSpec(11, 11)
    box = {(r, c) for r in range(3) for c in range(3) if max(r, c) == 2}
    with pytest.raises(Infeasible):
        plan_mission([(0.0, 0.0)], [(1000.0, 1000.0)], g, AREA, box)


def test_plan_target_over_obstacle_relocated():
    g = GridSpec(11, 11)
    goal_node = (5, 10)
    p = plan_mission([(0.0, 500.0)], [(1000.0, 500.0)], g, AREA, {goal_node})
    end = p.waypoints[0][-1]
    assert world_to_grid(end, g, AREA) != goal_node
    assert math.dist(end, (1000.0, 500.0)) == pytest.approx(100.0)


def test_fig3_plan_matches_brute_force_assignment():
    s = bundled_scenario("fig3_analog")
    p = plan_mission([(a.x, a.y) for a in s.initial_agents], [(t.x, t.y) for t in s.initial_targets],
                     s.grid, s.area, s.obstacles)
    assert len(set(p.assignment.values())) == 4
    assert p.total_cost == pytest.approx(brute_assignment(p.cost_matrix), abs=1e-12)
    for wps in p.waypoints.values():
        assert all(world_to_grid(w, s.grid, s.area) not in s.obstacles for w in wps)


def test_plan_rectangular_leaves_far_targets():
    g = GridSpec(11, 11)
    p = plan_mission([(0.0, 0.0)], [(900.0, 900.0), (100.0, 0.0), (500.0, 500.0)], g, AREA, set())
    assert p.assignment == {0: 1} and p.unassigned_targets == (0, 2)


@given(st.integers(0, 2**32 - 1))
def test_plan_paths_legal_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(12, 12)
    obs = {(int(r), int(c)) for r, c in rng.integers(0, 12, size=(25, 2))}
    starts = [tuple(rng.random(2) * 1000) for _ in range(2)]
    goals = [tuple(rng.random(2) * 1000) for _ in range(3)]
    try:
        p1 = plan_mission(starts, goals, g, AREA, obs)
    except Infeasible:
        return
    p2 = plan_mission(starts, goals, g, AREA, obs)
    assert p1.assignment == p2.assignment and p1.waypoints == p2.waypoints
    for path in p1.paths.values():
        assert not set(path.nodes) & obs
    for wps in p1.waypoints.values():
        assert all(AREA.contains(*w) for w in wps)
