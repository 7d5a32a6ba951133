"""Set densities of Bernoulli, multi-Bernoulli and labeled (GLMB) random finite sets.

These are evaluation utilities used for checking; the filter itself never
evaluates a set density.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

import numpy as np

from .gaussian import GaussianMixture, gm_eval


def bernoulli_density(track, X: Sequence) -> float:
    """1 - r for the empty set, r p(x) for a singleton, zero otherwise.

    ``track`` is anything with attributes ``r`` and ``p``.
    """
    X = list(X)
    if not X:
        return 1.0 - track.r
    if len(X) == 1:
        return track.r * gm_eval(track.p, X[0])
    return 0.0


def multi_bernoulli_density(params: Sequence[tuple[float, GaussianMixture]], X: Sequence) -> float:
    """Multi-Bernoulli set density as a sum over injective component-to-point maps."""
    X = list(X)
    M, n = len(params), len(X)
    if n > M:
        return 0.0
    base = math.prod(1.0 - r for r, _ in params)
    if n == 0:
        return base
    total = 0.0
    for idx in itertools.permutations(range(M), n):
        term = 1.0
        chosen = set(idx)
        # rebuild the product instead of dividing by (1 - r), which may be zero
        for j, (r, _) in enumerate(params):
            if j not in chosen:
                term *= 1.0 - r
        for x, j in zip(X, idx):
            r, p = params[j]
            term *= r * gm_eval(p, x)
        total += term
    return total


def lmb_hypothesis_weight(existence: dict, labels: Iterable) -> float:
    """Labeled multi-Bernoulli weight of a label set: prod r over members times prod (1 - r) elsewhere."""
    labels = set(labels)
    if not labels <= set(existence):
        return 0.0
    w = 1.0
    for lab, r in existence.items():
        w *= r if lab in labels else 1.0 - r
    return w


def glmb_density(density, X: Sequence[tuple]) -> float:
    """Labeled set density Delta(X) w(L(X)) prod p^l(x) for X = [(label, x), ...].

    Returns zero when a label repeats or is unknown to the track table.
    """
    X = list(X)
    labels = [lab for lab, _ in X]
    if len(set(labels)) != len(labels):
        return 0.0
    if any(lab not in density.tracks for lab in labels):
        return 0.0
    w = density.label_set_weight(frozenset(labels))
    if w == 0.0:
        return 0.0
    for lab, x in X:
        w *= gm_eval(density.tracks[lab].p, np.atleast_1d(x))
    return w
