"""Gaussian-mixture GLMB filter over labeled tracks.

The density keeps one marginal spatial mixture per label plus a list of
weighted label-set hypotheses, each carrying its per-label association
history. Existence probabilities in the track table are always the sum of the
weights of the hypotheses that contain the label.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.stats import chi2

from .assoc import association_count, enumerate_associations, murty, ranked_subsets
from .gaussian import GaussianMixture, gm_combine, gm_predict, gm_prune, gm_update_scan


class _LabelBase(NamedTuple):
    birth_step: int
    birth_index: int


class Label(_LabelBase):
    """(birth step, birth index) pair; a tuple so hashing and ordering stay cheap."""

    __slots__ = ()

    def __new__(cls, birth_step: int, birth_index: int):
        if birth_step < 0 or birth_index < 0:
            raise ValueError("label components must be non-negative")
        return super().__new__(cls, int(birth_step), int(birth_index))

    def __repr__(self) -> str:
        return f"L({self.birth_step},{self.birth_index})"


class AssocHistory:
    """Immutable measurement-index sequence of one label with O(1) append.

    -1 marks a missed detection. Behaves like a read-only tuple.
    """

    __slots__ = ("last", "prev", "_len")

    def __init__(self, items=()):
        items = tuple(int(j) for j in items)
        self._len = len(items)
        self.last = items[-1] if items else None
        self.prev = AssocHistory(items[:-1]) if items else None

    def append(self, j: int) -> "AssocHistory":
        h = AssocHistory.__new__(AssocHistory)
        h.last, h.prev, h._len = j, self, self._len + 1
        return h

    def to_tuple(self) -> tuple[int, ...]:
        out = []
        h = self
        while h is not None and h._len:
            out.append(h.last)
            h = h.prev
        return tuple(reversed(out))

    def __len__(self) -> int:
        return self._len

    def __iter__(self):
        return iter(self.to_tuple())

    def __getitem__(self, i):
        if i == -1 and self._len:
            return self.last
        return self.to_tuple()[i]

    def __eq__(self, other) -> bool:
        if isinstance(other, AssocHistory):
            return self.to_tuple() == other.to_tuple()
        return self.to_tuple() == tuple(other)

    def __hash__(self) -> int:
        return hash(self.to_tuple())

    def __repr__(self) -> str:
        return f"AssocHistory({list(self.to_tuple())})"


EMPTY_HISTORY = AssocHistory()


@dataclass(frozen=True)
class BernoulliTrack:
    label: Label
    r: float
    p: GaussianMixture

    def __post_init__(self):
        if not -1e-12 <= self.r <= 1.0 + 1e-9:
            raise ValueError(f"existence probability {self.r} outside [0, 1]")


@dataclass(frozen=True)
class GlmbHypothesis:
    """Weighted label set; ``history[i]`` is the association sequence of ``labels[i]``.

    Labels are kept sorted.
    """

    weight: float
    labels: tuple[Label, ...]
    history: tuple[AssocHistory, ...]

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("hypothesis weight must be non-negative")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("hypothesis labels must be distinct")
        if len(self.history) != len(self.labels):
            raise ValueError("history must align with labels")
        order = sorted(range(len(self.labels)), key=lambda i: self.labels[i])
        hist = tuple(h if isinstance(h, AssocHistory) else AssocHistory(h) for h in self.history)
        object.__setattr__(self, "labels", tuple(self.labels[i] for i in order))
        object.__setattr__(self, "history", tuple(hist[i] for i in order))

    @classmethod
    def _make(cls, weight: float, labels: tuple, history: tuple) -> "GlmbHypothesis":
        # internal constructor: inputs already sorted and valid
        h = object.__new__(cls)
        object.__setattr__(h, "weight", weight)
        object.__setattr__(h, "labels", labels)
        object.__setattr__(h, "history", history)
        return h

    @property
    def label_set(self) -> frozenset:
        return frozenset(self.labels)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class GlmbDensity:
    tracks: Mapping[Label, BernoulliTrack]
    hypotheses: tuple[GlmbHypothesis, ...]

    def validate(self, tol: float = 1e-9) -> None:
        if not self.hypotheses:
            raise ValueError("density has no hypotheses")
        total = math.fsum(h.weight for h in self.hypotheses)
        if abs(total - 1.0) > tol:
            raise ValueError(f"hypothesis weights sum to {total}")
        for h in self.hypotheses:
            for lab in h.labels:
                if lab not in self.tracks:
                    raise ValueError(f"hypothesis references unknown label {lab}")
        for t in self.tracks.values():
            if abs(t.p.weights.sum() - 1.0) > tol:
                raise ValueError(f"mixture of {t.label} is not normalized")

    @classmethod
    def empty(cls) -> "GlmbDensity":
        return cls({}, (GlmbHypothesis(1.0, (), ()),))

    @classmethod
    def from_lmb(cls, tracks: Sequence[BernoulliTrack]) -> "GlmbDensity":
        """Expand a labeled multi-Bernoulli into its hypotheses (exponential in size)."""
        labels = [t.label for t in tracks]
        probs = [t.r for t in tracks]
        hyps = []
        for mask, lp in ranked_subsets(probs):
            labs = tuple(sorted(lab for lab, inc in zip(labels, mask) if inc))
            hyps.append(GlmbHypothesis(math.exp(lp), labs, tuple(() for _ in labs)))
        return _assemble({t.label: t.p for t in tracks}, hyps)

    def label_set_weight(self, labels: frozenset) -> float:
        return math.fsum(h.weight for h in self.hypotheses if h.label_set == labels)

    def cardinality(self) -> dict[int, float]:
        dist: dict[int, float] = defaultdict(float)
        for h in self.hypotheses:
            dist[len(h)] += h.weight
        return dict(sorted(dist.items()))

    def existence(self, label: Label) -> float:
        t = self.tracks.get(label)
        return 0.0 if t is None else t.r


@dataclass(frozen=True)
class BirthModel:
    """Birth Bernoullis; component i is born with label (step, i)."""

    components: tuple[tuple[float, GaussianMixture], ...] = ()

    def __post_init__(self):
        for r, _ in self.components:
            if not 0.0 <= r <= 1.0:
                raise ValueError("birth probability must be in [0, 1]")

    def __len__(self) -> int:
        return len(self.components)


def _normalize_log(logw: list[float]) -> list[float]:
    """Normalize log weights; zeros stay zero."""
    if not logw:
        return []
    mx = max(logw)
    if mx == -math.inf:
        return [0.0] * len(logw)
    w = [math.exp(v - mx) for v in logw]
    total = math.fsum(w)
    return [v / total for v in w]


def _assemble(mixtures: Mapping[Label, GaussianMixture], hyps) -> GlmbDensity:
    """Build a density, recomputing existence and dropping unreferenced tracks."""
    r: dict[Label, float] = defaultdict(float)
    for h in hyps:
        for lab in h.labels:
            r[lab] += h.weight
    tracks = {lab: BernoulliTrack(lab, min(r[lab], 1.0), mixtures[lab]) for lab in sorted(r)}
    return GlmbDensity(tracks, tuple(hyps))


def _single_drops(patterns, probs, n: int) -> list:
    """Best pattern with one surviving label removed, for each label not already covered."""
    best_mask, best_lp = patterns[0]
    seen = {m for m, _ in patterns}
    out = []
    for i in range(n):
        if not best_mask[i]:
            continue
        mask = best_mask[:i] + (False,) + best_mask[i + 1:]
        if mask not in seen:
            p = probs[i]
            out.append((mask, best_lp - math.log(p) + math.log1p(-p)))
    return out


def glmb_predict(density: GlmbDensity, F, Q, p_survival: float, birth: BirthModel, step: int,
                 *, max_children: int | None = None) -> GlmbDensity:
    """Chapman-Kolmogorov step: survival of existing labels plus labeled births.

    Each parent hypothesis spawns its ``max_children`` most probable
    survival/birth patterns (all of them when None). A truncated set also
    keeps, for every label, the most probable pattern with that label gone,
    so an object that stops producing measurements can always be dropped.
    Children of distinct parents stay distinct hypotheses.
    """
    if not 0.0 <= p_survival <= 1.0:
        raise ValueError("survival probability must be in [0, 1]")
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    birth_labels = [Label(step, i) for i in range(len(birth))]
    for lab in birth_labels:
        if lab in density.tracks:
            raise ValueError(f"birth label {lab} already in use")
    mixtures = {lab: gm_predict(t.p, F, Q) for lab, t in density.tracks.items()}
    for lab, (_, gm) in zip(birth_labels, birth.components):
        mixtures[lab] = gm
    birth_probs = [r for r, _ in birth.components]
    kids, logw = [], []
    for h in density.hypotheses:
        if h.weight <= 0.0:
            continue
        lw = math.log(h.weight)
        n = len(h.labels)
        probs = [p_survival] * n + birth_probs
        patterns = ranked_subsets(probs, max_children)
        if max_children is not None and 0.0 < p_survival < 1.0:
            patterns = patterns + _single_drops(patterns, probs, n)
        for mask, lp in patterns:
            labs = [lab for lab, inc in zip(h.labels, mask) if inc]
            hist = [hs for hs, inc in zip(h.history, mask) if inc]
            # birth labels carry the current step, so they sort after survivors
            for lab, inc in zip(birth_labels, mask[n:]):
                if inc:
                    labs.append(lab)
                    hist.append(EMPTY_HISTORY)
            kids.append((tuple(labs), tuple(hist)))
            logw.append(lw + lp)
    weights = _normalize_log(logw)
    hyps = [GlmbHypothesis._make(w, labs, hist) for (labs, hist), w in zip(kids, weights) if w > 0.0]
    return _assemble(mixtures, hyps)


def glmb_update(density: GlmbDensity, scan, p_detect: float, clutter_rate: float, H, R, area,
                *, gate_prob: float = 1.0, max_enumeration: int | None = None, murty_k: int = 32,
                rel_threshold: float = 0.0) -> GlmbDensity:
    """Bayes update against one scan.

    Every hypothesis spawns one child per label-to-measurement association
    (missed: 1 - p_D; matched: p_D q / kappa with kappa = clutter_rate /
    area). When an association count exceeds ``max_enumeration`` the
    ``murty_k`` best are used instead. Raises ValueError when no
    association has positive weight, which happens with zero clutter and a
    measurement no track can explain.
    """
    if not 0.0 <= p_detect <= 1.0:
        raise ValueError("detection probability must be in [0, 1]")
    if clutter_rate < 0:
        raise ValueError("clutter rate must be non-negative")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Z = np.asarray(getattr(scan, "points", scan), dtype=float).reshape(-1, H.shape[0])
    m = Z.shape[0]
    gate = chi2.ppf(gate_prob, H.shape[0]) if gate_prob < 1.0 else math.inf
    with np.errstate(divide="ignore"):
        log_pd = math.log(p_detect) if p_detect > 0 else -math.inf
        log_miss = math.log1p(-p_detect) if p_detect < 1 else -math.inf
    kappa = clutter_rate / area.size
    log_kappa = math.log(kappa) if kappa > 0 else -math.inf

    updates = {lab: gm_update_scan(t.p, Z, H, R, gate) for lab, t in density.tracks.items()}
    det_rows = {}
    for lab, u in updates.items():
        row = log_pd + u.log_q if m else np.empty(0)
        if kappa > 0:
            row = row - log_kappa
        det_rows[lab] = row

    log_rel = math.log(rel_threshold) if rel_threshold > 0 else -math.inf
    kids, logw = [], []
    best = -math.inf
    # heaviest parents first so the global floor tightens early
    for h in sorted(density.hypotheses, key=lambda h: -h.weight):
        if h.weight <= 0.0:
            continue
        n = len(h.labels)
        lw = math.log(h.weight)
        det = np.stack([det_rows[lab] for lab in h.labels]) if n else np.empty((0, m))
        miss = np.full(n, log_miss)
        if kappa > 0 and max_enumeration is not None and association_count(det, miss) > max_enumeration:
            assocs = murty(det, miss, murty_k)
        else:
            assocs = enumerate_associations(det, miss, require_all=kappa == 0, rel_threshold=rel_threshold,
                                            floor=best + log_rel - lw)
        for a, s in assocs:
            v = lw + s
            if v < best + log_rel:
                continue
            best = max(best, v)
            kids.append((h.labels, tuple(old.append(j) for old, j in zip(h.history, a))))
            logw.append(v)
    keep = [i for i, v in enumerate(logw) if v >= best + log_rel]
    weights = _normalize_log([logw[i] for i in keep])
    if not weights or max(weights) == 0.0:
        raise ValueError("scan has zero likelihood under the model (no clutter and an unexplained measurement)")

    assoc_mass: dict[Label, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    hyps = []
    for i, w in zip(keep, weights):
        if w <= 0.0:
            continue
        labs, hist = kids[i]
        hyps.append(GlmbHypothesis._make(w, labs, hist))
        for lab, hseq in zip(labs, hist):
            assoc_mass[lab][hseq.last] += w
    mixtures = {}
    for lab, per_j in assoc_mass.items():
        parts = []
        for j in sorted(per_j):
            gm = density.tracks[lab].p if j < 0 else updates[lab].posterior(j)
            parts.append((per_j[j], gm))
        mixtures[lab] = parts[0][1] if len(parts) == 1 else gm_combine(parts)
    return _assemble(mixtures, hyps)


def merge_hypotheses(density: GlmbDensity) -> GlmbDensity:
    """Collapse hypotheses sharing a label set; the heaviest one supplies the histories."""
    groups: dict = {}
    for h in density.hypotheses:
        g = groups.get(h.labels)
        if g is None:
            groups[h.labels] = [h.weight, h]
        else:
            g[0] += h.weight
            if h.weight > g[1].weight:
                g[1] = h
    if len(groups) == len(density.hypotheses):
        return density
    hyps = [GlmbHypothesis._make(w, best.labels, best.history) for w, best in groups.values()]
    return _assemble({lab: t.p for lab, t in density.tracks.items()}, hyps)


def prune_hypotheses(density: GlmbDensity, w_min: float, H_max: int, gm_prune_threshold: float = 0.0,
                     gm_cap: int | None = None) -> GlmbDensity:
    """Threshold and cap hypotheses, then prune each track's mixture.

    The single best hypothesis always survives. Surviving hypotheses keep
    their original order.
    """
    if not 0.0 <= w_min <= 1.0 or not 0.0 <= gm_prune_threshold <= 1.0:
        raise ValueError("thresholds must be in [0, 1]")
    if H_max < 1 or (gm_cap is not None and gm_cap < 1):
        raise ValueError("caps must be at least 1")
    hyps = density.hypotheses
    order = sorted(range(len(hyps)), key=lambda i: -hyps[i].weight)
    keep = [i for i in order if hyps[i].weight >= w_min][:H_max]
    if not keep:
        keep = [order[0]]
    keep.sort()
    total = math.fsum(hyps[i].weight for i in keep)
    new_hyps = [GlmbHypothesis._make(hyps[i].weight / total, hyps[i].labels, hyps[i].history) for i in keep]
    cap = gm_cap if gm_cap is not None else 10**9
    mixtures = {}
    for lab, t in density.tracks.items():
        gm = t.p
        if gm_prune_threshold > 0.0 or len(gm) > cap:
            gm = gm_prune(gm, gm_prune_threshold, cap)
        mixtures[lab] = gm
    return _assemble(mixtures, new_hyps)


def extract_states(density: GlmbDensity) -> list[tuple[Label, np.ndarray]]:
    """MAP cardinality, then the best hypothesis of that size; one top-component mean per label.

    Cardinality ties go to the smaller size. Returned positions are the
    first two state components.
    """
    card = density.cardinality()
    n_star = max(card, key=lambda n: (card[n], -n))
    best = None
    for h in density.hypotheses:
        if len(h) == n_star and (best is None or h.weight > best.weight):
            best = h
    return [(lab, density.tracks[lab].p.top_mean()[:2].copy()) for lab in best.labels]


def cv_model(dt: float, q: float, R) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Planar constant-velocity model [x, y, vx, vy] with position measurements.

    ``q`` is the white-acceleration intensity. Returns (F, Q, H, R).
    """
    I2 = np.eye(2)
    F = np.block([[I2, dt * I2], [np.zeros((2, 2)), I2]])
    Q = q * np.block([[dt**3 / 3 * I2, dt**2 / 2 * I2], [dt**2 / 2 * I2, dt * I2]])
    H = np.hstack([I2, np.zeros((2, 2))])
    return F, Q, H, np.asarray(R, dtype=float)


@dataclass
class GlmbFilter:
    """One filter instance: births at fixed start states, CV motion, position measurements.

    ``birth_means`` are 4-vectors; component i is born as (step, i) so label
    birth indices name the start locations. ``accel_noise`` is the
    white-acceleration intensity of the constant-velocity model. The
    modeled detection probability is capped at ``config.max_detect_prob`` so
    an object that leaves the scene reads as a run of misses.
    """

    birth_means: Sequence
    config: object  # GlmbConfig
    accel_noise: float
    dt: float
    p_detect: float
    clutter_rate: float
    R: np.ndarray
    area: object
    density: GlmbDensity = field(default_factory=GlmbDensity.empty)
    step_index: int = 0

    def __post_init__(self):
        c = self.config
        self.F, self.Q, self.H, self.R = cv_model(self.dt, self.accel_noise, self.R)
        cov = np.diag([c.birth_pos_std**2] * 2 + [c.birth_vel_std**2] * 2)
        self._birth_gms = [GaussianMixture.single(np.asarray(mu, dtype=float), cov) for mu in self.birth_means]

    def birth_model(self, step: int) -> BirthModel:
        r = self.config.birth_prob_initial if step == 0 else self.config.birth_prob
        return BirthModel(tuple((r, gm) for gm in self._birth_gms))

    def step(self, points, clutter_rate: float | None = None) -> list[tuple[Label, np.ndarray]]:
        """Predict, update, merge, prune and extract for one scan."""
        c = self.config
        k = self.step_index
        lam = self.clutter_rate if clutter_rate is None else clutter_rate
        d = glmb_predict(self.density, self.F, self.Q, c.survival_prob, self.birth_model(k), k,
                         max_children=c.max_predict_children)
        p_detect = min(self.p_detect, c.max_detect_prob)
        d = glmb_update(d, points, p_detect, lam, self.H, self.R, self.area,
                        gate_prob=c.gate_prob, max_enumeration=c.max_enumeration, murty_k=c.murty_k,
                        rel_threshold=c.assoc_rel_threshold)
        d = merge_hypotheses(d)
        d = prune_hypotheses(d, c.prune_threshold, c.max_hypotheses, c.gm_prune, c.gm_cap)
        self.density = d
        self.step_index = k + 1
        return extract_states(d)
