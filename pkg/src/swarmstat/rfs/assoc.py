"""Ranked enumeration helpers for GLMB prediction and update.

``ranked_subsets`` lists the most probable outcomes of independent Bernoulli
trials (survival and birth). ``enumerate_associations`` and ``murty`` list
label-to-measurement associations by descending log weight.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from scipy.optimize import linear_sum_assignment


def ranked_subsets(probs, k: int | None = None) -> list[tuple[tuple[bool, ...], float]]:
    """Most probable inclusion patterns of independent events, best first.

    Returns up to ``k`` (all when None) pairs of (inclusion mask, log
    probability). Zero-probability patterns are never returned. Ties keep a
    deterministic order.
    """
    probs = [float(p) for p in probs]
    n = len(probs)
    base_mask = [False] * n
    base = 0.0
    free: list[int] = []
    costs: list[float] = []
    for i, p in enumerate(probs):
        if not 0.0 <= p <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if p == 1.0:
            base_mask[i] = True
        elif p > 0.0:
            mode = p >= 0.5
            base_mask[i] = mode
            hi, lo = (p, 1.0 - p) if mode else (1.0 - p, p)
            base += math.log(hi)
            free.append(i)
            costs.append(math.log(hi) - math.log(lo))
    order = sorted(range(len(free)), key=lambda t: (costs[t], free[t]))
    c = [costs[t] for t in order]
    idx = [free[t] for t in order]
    total = 2 ** len(free)
    limit = total if k is None else min(k, total)

    def mask_of(flips):
        mask = list(base_mask)
        for t in flips:
            mask[idx[t]] = not mask[idx[t]]
        return tuple(mask)

    out = [(mask_of(()), base)]
    heap: list = []
    if c:
        heap.append((c[0], (0,)))
    while len(out) < limit and heap:
        s, flips = heapq.heappop(heap)
        out.append((mask_of(flips), base - s))
        last = flips[-1]
        if last + 1 < len(c):
            heapq.heappush(heap, (s + c[last + 1], flips + (last + 1,)))
            heapq.heappush(heap, (s - c[last] + c[last + 1], flips[:-1] + (last + 1,)))
    return out


def association_count(det: np.ndarray, miss: np.ndarray) -> int:
    """Upper bound on associations: product over labels of available options."""
    opts = np.isfinite(det).sum(axis=1) + np.isfinite(miss)
    return math.prod(int(v) for v in opts)


def enumerate_associations(det: np.ndarray, miss: np.ndarray, *, require_all: bool = False,
                           rel_threshold: float = 0.0, floor: float = -math.inf
                           ) -> list[tuple[tuple[int, ...], float]]:
    """Depth-first enumeration of one-to-one label-to-measurement associations.

    ``det[i, j]`` is the log score of label i taking measurement j (-inf when
    not allowed), ``miss[i]`` the log score of a missed detection. An
    association's score is the sum of its entries; -1 marks a miss. With
    ``require_all`` every measurement must be taken. Associations scoring
    below ``rel_threshold`` times the best are skipped with an admissible
    bound; zero keeps all of them. Associations scoring below ``floor`` are
    skipped as well. Results are sorted by descending score.
    """
    n, m = det.shape
    opts = []
    best_opt = np.empty(n)
    det_rows = det.tolist()
    miss_row = [float(v) for v in miss]
    for i in range(n):
        o = [(v, j) for j, v in enumerate(det_rows[i]) if v > -math.inf]
        if miss_row[i] > -math.inf:
            o.append((miss_row[i], -1))
        o.sort(key=lambda t: (-t[0], t[1]))
        opts.append(o)
        best_opt[i] = o[0][0] if o else -math.inf
    suffix = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + best_opt[i]
    log_rel = math.log(rel_threshold) if rel_threshold > 0 else -math.inf
    found: list[tuple[tuple[int, ...], float]] = []
    best = [-math.inf]
    used = [False] * m
    choice = [-1] * n

    def dfs(i: int, score: float, n_used: int):
        if score + suffix[i] < max(best[0] + log_rel, floor):
            return
        if require_all and m - n_used > n - i:
            return
        if i == n:
            found.append((tuple(choice), score))
            if score > best[0]:
                best[0] = score
            return
        for s, j in opts[i]:
            if j >= 0:
                if used[j]:
                    continue
                used[j] = True
                choice[i] = j
                dfs(i + 1, score + s, n_used + 1)
                used[j] = False
            else:
                choice[i] = -1
                dfs(i + 1, score + s, n_used)

    if n == 0:
        return [((), 0.0)] if not (require_all and m) else []
    dfs(0, 0.0, 0)
    cut = max(best[0] + log_rel, floor)
    kept = [(a, s) for a, s in found if s >= cut]
    kept.sort(key=lambda t: -t[1])
    return kept


def _solve(C: np.ndarray):
    try:
        rows, cols = linear_sum_assignment(C)
    except ValueError:
        return None
    cost = C[rows, cols].sum()
    if not np.isfinite(cost):
        return None
    return tuple(int(c) for c in cols), float(cost)


def murty(det: np.ndarray, miss: np.ndarray, k: int) -> list[tuple[tuple[int, ...], float]]:
    """K best associations by Murty's partitioning over an n x (m + n) cost matrix.

    Same scoring and output convention as :func:`enumerate_associations`.
    """
    n, m = det.shape
    if n == 0:
        return [((), 0.0)]
    C = np.full((n, m + n), np.inf)
    C[:, :m] = np.where(np.isfinite(det), -det, np.inf)
    C[np.arange(n), m + np.arange(n)] = np.where(np.isfinite(miss), -miss, np.inf)

    def decode(cols):
        return tuple(c if c < m else -1 for c in cols)

    first = _solve(C)
    if first is None:
        return []
    heap = [(first[1], 0, first[0], C)]
    counter = 1
    out = []
    while heap and len(out) < k:
        cost, _, cols, Cn = heapq.heappop(heap)
        out.append((decode(cols), -cost))
        Cf = Cn.copy()
        for i in range(n):
            child = Cf.copy()
            child[i, cols[i]] = np.inf
            sol = _solve(child)
            if sol is not None:
                heapq.heappush(heap, (sol[1], counter, sol[0], child))
                counter += 1
            # fix row i to its current column for the remaining partitions
            keep = Cf[i, cols[i]]
            Cf[i, :] = np.inf
            Cf[:, cols[i]] = np.inf
            Cf[i, cols[i]] = keep
    return out
