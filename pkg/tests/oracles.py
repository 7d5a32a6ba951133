"""Independent reference implementations used by the tests."""

import itertools
import math

import networkx as nx
import numpy as np

SQRT2 = math.sqrt(2.0)


def brute_assignment(costs):
    """Minimum total over injective row -> column maps (rows <= cols)."""
    costs = np.asarray(costs, dtype=float)
    n, m = costs.shape
    best = math.inf
    for cols in itertools.permutations(range(m), n):
        total = sum(costs[i, j] for i, j in enumerate(cols))
        best = min(best, total)
    return best


def grid_graph(rows, cols, obstacles, diag_weight):
    g = nx.Graph()
    for r in range(rows):
        for c in range(cols):
            if (r, c) in obstacles:
                continue
            g.add_node((r, c))
            for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                nb = (r + dr, c + dc)
                if 0 <= nb[0] < rows and 0 <= nb[1] < cols and nb not in obstacles:
                    g.add_edge((r, c), nb, weight=diag_weight if dr and dc else 1.0)
    return g


def dijkstra_path(rows, cols, obstacles, start, goal, diag_weight):
    g = grid_graph(rows, cols, obstacles, diag_weight)
    try:
        return nx.dijkstra_path(g, start, goal, weight="weight")
    except nx.NetworkXNoPath:
        return None
