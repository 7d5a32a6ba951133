"""Multirate mission loop: truth dynamics, sensing, both GLMB filters, deaths and re-planning.

One ``numpy.random.Generator`` seeded with the scenario seed drives every
random draw. Draw order per dynamics tick: target acceleration noise (by
target id, random-motion scenarios only). Per filter tick: clutter, agent
detections by id, target detections by id, scan shuffle, then random deaths
by id at death ticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics import (
    AgentState,
    GuidanceState,
    LinearModel,
    TargetState,
    advance_waypoint,
    death_process,
    heading_command,
    initial_agent,
    lqr_gain,
    step_agent,
    step_target,
    wrap_angle,
)
from .planning import Infeasible, MissionPlan, plan_mission
from .rfs.glmb import GlmbFilter, Label
from .rfs.sensors import CLUTTER, MeasurementScan, generate_clutter, generate_measurements
from .scenario import Scenario

# go-around band in seconds of flight at the forward speed
GO_AROUND_IN = 5.0
GO_AROUND_OUT = 10.0

EVENT_KINDS = ("death", "replan", "replan_skipped", "waypoint_reached", "target_reached",
               "spurious_extraction", "termination")


@dataclass(frozen=True)
class SimClock:
    """Integer tick counter at the dynamics rate with exact sub-rate predicates."""

    dyn_rate: float
    filter_rate: float
    replan_rate: float
    death_rate: float = 1.0

    def __post_init__(self):
        for slow, fast in ((self.filter_rate, self.dyn_rate), (self.replan_rate, self.filter_rate),
                           (self.death_rate, self.dyn_rate)):
            ratio = fast / slow
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("rates must be integer multiples of each other")

    @property
    def dt(self) -> float:
        return 1.0 / self.dyn_rate

    @property
    def filter_every(self) -> int:
        return round(self.dyn_rate / self.filter_rate)

    @property
    def replan_every(self) -> int:
        return round(self.dyn_rate / self.replan_rate)

    @property
    def death_every(self) -> int:
        return round(self.dyn_rate / self.death_rate)

    def time(self, tick: int) -> float:
        return tick / self.dyn_rate

    def is_filter_tick(self, tick: int) -> bool:
        return tick % self.filter_every == 0

    def is_replan_tick(self, tick: int) -> bool:
        return tick % self.replan_every == 0

    def is_death_tick(self, tick: int) -> bool:
        return tick % self.death_every == 0


@dataclass(frozen=True)
class SimEvent:
    t: float
    kind: str
    detail: str = ""

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


class Extractions(NamedTuple):
    """Filter outputs at one instant: lists of (Label, position) for agents and targets."""

    agents: list
    targets: list


@dataclass
class SimTrace:
    scenario: str
    seed: int
    dyn_rate: float
    filter_rate: float
    replan_rate: float
    truth: list = field(default_factory=list)  # (t, kind, id, x, y, alive)
    scans: list = field(default_factory=list)  # (t, MeasurementScan)
    agent_estimates: list = field(default_factory=list)  # (t, [(Label, pos)])
    target_estimates: list = field(default_factory=list)
    plans: list = field(default_factory=list)  # MissionPlan
    plan_agents: list = field(default_factory=list)  # per plan: {plan agent id -> physical agent or -1}
    plan_targets: list = field(default_factory=list)  # per plan: {plan target id -> true target index}
    events: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)  # agent id -> (outcome, t_final)

    def events_of(self, kind: str) -> list[SimEvent]:
        return [e for e in self.events if e.kind == kind]

    @property
    def n_replans(self) -> int:
        return len(self.events_of("replan"))

    @property
    def end_time(self) -> float:
        return self.events_of("termination")[-1].t

    def completion(self) -> tuple[int, int]:
        """(surviving agents that reached a target, surviving agents)."""
        surv = [o for o, _ in self.summary.values() if o != "dead"]
        return sum(o == "reached" for o in surv), len(surv)

    def mission_complete(self) -> bool:
        reached, surv = self.completion()
        return surv > 0 and reached == surv


def _oldest_per_index(items) -> list:
    keep: dict = {}
    for lab, pos in items:
        b = lab.birth_index
        if b not in keep or lab < keep[b][0]:
            keep[b] = (lab, pos)
    return [keep[b] for b in sorted(keep)]


def mission_view(ex: Extractions, done_agents=(), done_targets=()) -> Extractions:
    """Extractions still relevant to the mission.

    Objects already paired up (agent at its target) are dropped, and when
    several labels share a birth index only the oldest is kept: a younger
    label born at an occupied start region is a duplicate of that object.
    """
    done_agents, done_targets = set(done_agents), set(done_targets)
    return Extractions(_oldest_per_index(e for e in ex.agents if e[0].birth_index not in done_agents),
                       _oldest_per_index(e for e in ex.targets if e[0].birth_index not in done_targets))


def replan_check(previous: Extractions, current: Extractions, movement_threshold: float) -> bool:
    """True when the agent count dropped, a target label moved too far, or a new target label appeared."""
    if len(current.agents) < len(previous.agents):
        return True
    before = {lab: pos for lab, pos in previous.targets}
    for lab, pos in current.targets:
        old = before.get(lab)
        if old is None:
            return True
        if math.hypot(pos[0] - old[0], pos[1] - old[1]) > movement_threshold:
            return True
    return False


def replan(agent_extractions, target_extractions, scenario: Scenario, *, replan_index: int = 1,
           t: float = 0.0, completed_agents=(), completed_targets=()) -> MissionPlan:
    """Plan from filter outputs only; ids in the plan are the extraction labels.

    Agents whose birth index is in ``completed_agents`` and targets whose
    birth index is in ``completed_targets`` are left out.
    """
    agents = [(lab, p) for lab, p in agent_extractions if lab.birth_index not in set(completed_agents)]
    targets = [(lab, p) for lab, p in target_extractions if lab.birth_index not in set(completed_targets)]
    if not agents:
        raise Infeasible("no agent extractions to plan for")
    if not targets:
        raise Infeasible("no target extractions to plan for")
    prm = scenario.params
    return plan_mission([tuple(p) for _, p in agents], [tuple(p) for _, p in targets], scenario.grid,
                        scenario.area, scenario.obstacles, agent_ids=[lab for lab, _ in agents],
                        target_ids=[lab for lab, _ in targets], cost_mode=prm.cost_mode,
                        assignment_mode=prm.assignment_mode, replan_index=replan_index, t=t)


def ospa(estimates, truth, cutoff: float = 100.0, order: float = 1.0) -> float:
    """OSPA distance between two finite point sets."""
    if cutoff <= 0 or order < 1:
        raise ValueError("cutoff must be positive and order at least 1")
    X = np.asarray(estimates, dtype=float).reshape(-1, 2)
    Y = np.asarray(truth, dtype=float).reshape(-1, 2)
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(cutoff)
    if m > n:
        X, Y, m, n = Y, X, n, m
    D = np.minimum(np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2), cutoff) ** order
    r, c = linear_sum_assignment(D)
    total = D[r, c].sum() + cutoff**order * (n - m)
    return float((total / n) ** (1.0 / order))


def _reflect(t: TargetState, area) -> TargetState:
    (x, y), (vx, vy) = t.pos, t.vel
    if x < area.x_min:
        x, vx = 2 * area.x_min - x, -vx
    elif x > area.x_max:
        x, vx = 2 * area.x_max - x, -vx
    if y < area.y_min:
        y, vy = 2 * area.y_min - y, -vy
    elif y > area.y_max:
        y, vy = 2 * area.y_max - y, -vy
    return TargetState(t.id, (x, y), (vx, vy))


class _Engine:
    def __init__(self, scenario: Scenario, decimate: float | None = 10.0):
        self.sc = sc = scenario
        p = sc.params
        self.p = p
        self.clock = SimClock(p.dyn_rate, p.filter_rate, p.replan_rate, p.death_rate)
        self.rng = np.random.default_rng(sc.seed)
        self.model = LinearModel(np.array(p.lateral_A), np.array(p.lateral_B), self.clock.dt)
        self.gain = lqr_gain(self.model, np.array(p.lqr_Q), np.array(p.lqr_R))
        if decimate is None or decimate >= p.dyn_rate:
            self.truth_every = 1
        else:
            self.truth_every = max(1, round(p.dyn_rate / decimate))
        self.agents = [initial_agent(i, a.x, a.y, a.heading) for i, a in enumerate(sc.initial_agents)]
        self.targets = [TargetState(j, (t.x, t.y), (t.vx, t.vy)) for j, t in enumerate(sc.initial_targets)]
        self.guidance: dict[int, GuidanceState] = {}
        self.reached: dict[int, float] = {}
        self.died: dict[int, float] = {}
        self.go_around: set[int] = set()
        u = p.forward_speed
        agent_births = [(a.x, a.y, u * math.cos(a.heading), u * math.sin(a.heading)) for a in sc.initial_agents]
        target_births = [(t.x, t.y, t.vx, t.vy) for t in sc.nominal_targets]
        # each filter sees the other class as extra clutter
        fdt = 1.0 / p.filter_rate
        self.agent_filter = GlmbFilter(agent_births, p.glmb, p.glmb.agent_accel_noise, fdt, p.detect_prob, p.clutter_rate, p.R_z, sc.area)
        self.target_filter = GlmbFilter(target_births, p.glmb, p.glmb.target_accel_noise, fdt, p.detect_prob, p.clutter_rate, p.R_z, sc.area)
        self.agent_lambda = p.clutter_rate + p.detect_prob * len(sc.nominal_targets)
        self.target_lambda = p.clutter_rate + p.detect_prob * len(sc.initial_agents)
        self.trace = SimTrace(sc.name, sc.seed, p.dyn_rate, p.filter_rate, p.replan_rate)
        self.pending_deaths = sorted(((d.t, d.agent) for d in sc.scripted_deaths))
        self.latest = Extractions([], [])

    # -- events --------------------------------------------------------------
    def event(self, t: float, kind: str, detail: str = "") -> None:
        self.trace.events.append(SimEvent(t, kind, detail))

    # -- planning ------------------------------------------------------------
    def initial_plan(self) -> None:
        sc = self.sc
        starts = [(a.x, a.y) for a in sc.initial_agents]
        goals = [(t.x, t.y) for t in sc.nominal_targets]
        plan = plan_mission(starts, goals, sc.grid, sc.area, sc.obstacles, cost_mode=self.p.cost_mode,
                            assignment_mode=self.p.assignment_mode, replan_index=0, t=0.0)
        self.trace.plans.append(plan)
        self.trace.plan_agents.append({i: i for i in plan.agent_ids})
        self.trace.plan_targets.append({j: j for j in plan.target_ids})
        for a in self.agents:
            if a.id in plan.assignment:
                self.guidance[a.id] = self._route(plan.assignment[a.id], plan.waypoints[a.id])
        # the reference the next replan check compares against
        self.reference = Extractions(
            [(Label(0, i), np.array(s)) for i, s in enumerate(starts)],
            [(Label(0, j), np.array(g)) for j, g in enumerate(goals)],
        )

    @staticmethod
    def _route(target: int, waypoints) -> GuidanceState:
        return GuidanceState(target, tuple(waypoints), 1 if len(waypoints) > 1 else 0)

    def done_sets(self):
        done_targets = {self.guidance[a].target_id for a in self.reached}
        return set(self.reached), done_targets

    def maybe_replan(self, t: float) -> None:
        done_a, done_t = self.done_sets()
        cur = mission_view(self.latest, done_a, done_t)
        ref = mission_view(self.reference, done_a, done_t)
        if not replan_check(ref, cur, self.p.movement_limit):
            return
        if not cur.agents:
            self.event(t, "replan_skipped", "no agent extractions; previous plan kept")
            return
        index = len(self.trace.plans)
        try:
            plan = replan(cur.agents, cur.targets, self.sc, replan_index=index, t=t,
                          completed_agents=done_a, completed_targets=done_t)
        except Infeasible as exc:
            self.event(t, "replan_skipped", f"infeasible ({exc}); previous plan kept")
            return
        # oldest label per birth index drives the physical agent
        driver: dict[int, Label] = {}
        for lab in plan.agent_ids:
            b = lab.birth_index
            if b < len(self.agents) and (b not in driver or lab < driver[b]):
                driver[b] = lab
        physical = {lab: (lab.birth_index if driver.get(lab.birth_index) == lab else -1) for lab in plan.agent_ids}
        changes = []
        for a in self.agents:
            lab = driver.get(a.id)
            if not a.alive or a.id in self.reached or lab is None or lab not in plan.assignment:
                continue
            tgt = plan.assignment[lab].birth_index
            old = self.guidance.get(a.id)
            if old is None or old.target_id != tgt:
                changes.append(f"agent {a.id}: {None if old is None else old.target_id}->{tgt}")
            self.guidance[a.id] = self._route(tgt, plan.waypoints[lab])
        self.trace.plans.append(plan)
        self.trace.plan_agents.append(physical)
        self.trace.plan_targets.append({lab: lab.birth_index for lab in plan.target_ids})
        self.reference = Extractions(list(self.latest.agents), list(self.latest.targets))
        detail = f"index {index}; " + ("; ".join(changes) if changes else "no assignment change")
        self.event(t, "replan", detail)

    # -- sensing and filtering ----------------------------------------------
    def scan(self, tick: int, t: float) -> None:
        p, area, rng = self.p, self.sc.area, self.rng
        clutter = generate_clutter(p.clutter_rate, area, rng)
        # agents that reached their target have left the scene
        live = [a for a in self.agents if a.alive and a.id not in self.reached]
        za, ia = generate_measurements([a.pos for a in live], p.detect_prob, p.R_z, rng)
        # a reached target is serviced and leaves with its agent
        _, done_t = self.done_sets()
        open_t = [tg for tg in self.targets if tg.id not in done_t]
        zt, it = generate_measurements([tg.pos for tg in open_t], p.detect_prob, p.R_z, rng)
        pts = np.vstack([clutter, za, zt])
        tags = ["clutter"] * len(clutter) + [f"agent:{live[i].id}" for i in ia] + \
               [f"target:{open_t[i].id}" for i in it]
        perm = rng.permutation(len(pts))
        pts = pts[perm]
        tags = tuple(tags[i] for i in perm)
        pts[:, 0] = np.clip(pts[:, 0], area.x_min, area.x_max)
        pts[:, 1] = np.clip(pts[:, 1], area.y_min, area.y_max)
        step = tick // self.clock.filter_every
        scan = MeasurementScan(step, pts, tags)
        self.trace.scans.append((t, scan))
        ea = self.agent_filter.step(pts, self.agent_lambda)
        et = self.target_filter.step(pts, self.target_lambda)
        self.trace.agent_estimates.append((t, ea))
        self.trace.target_estimates.append((t, et))
        self.latest = Extractions(ea, et)
        self.refresh_final_waypoints(et)
        n_live = len(live)
        if len(ea) > n_live:
            self.event(t, "spurious_extraction", f"{len(ea)} agent extractions for {n_live} living agents")

    def refresh_final_waypoints(self, target_extractions) -> None:
        """Agents on their last leg steer at the newest estimate of their target."""
        est = {lab.birth_index: pos for lab, pos in _oldest_per_index(target_extractions)}
        for a in self.agents:
            g = self.guidance.get(a.id)
            if g is None or not a.alive or a.id in self.reached:
                continue
            last = len(g.waypoints) - 1
            if g.active < last or g.target_id not in est:
                continue
            x, y = est[g.target_id]
            wps = g.waypoints[:-1] + ((float(x), float(y)),)
            self.guidance[a.id] = GuidanceState(g.target_id, wps, last)

    def deaths(self, t: float) -> None:
        while self.pending_deaths and self.pending_deaths[0][0] <= t + 1e-9:
            _, aid = self.pending_deaths.pop(0)
            a = self.agents[aid]
            if a.alive and aid not in self.reached:
                self.agents[aid] = replace(a, alive=False)
                self.died[aid] = t
                self.event(t, "death", f"agent {aid} (scripted)")
        active_idx = [i for i, a in enumerate(self.agents) if a.alive and a.id not in self.reached]
        after = death_process([self.agents[i] for i in active_idx], self.p.death_prob_per_step, self.rng)
        for i, a in zip(active_idx, after):
            if not a.alive:
                self.agents[i] = a
                self.died[a.id] = t
                self.event(t, "death", f"agent {a.id}")

    # -- truth ----------------------------------------------------------------
    def record_truth(self, t: float) -> None:
        rows = self.trace.truth
        for a in self.agents:
            rows.append((t, "agent", a.id, a.pos[0], a.pos[1], int(a.alive)))
        _, done_t = self.done_sets()
        for tg in self.targets:
            rows.append((t, "target", tg.id, tg.pos[0], tg.pos[1], int(tg.id not in done_t)))

    def step_dynamics(self, t: float) -> None:
        dt = self.clock.dt
        if self.sc.target_motion == "random" and self.p.target_process_noise > 0:
            std = math.sqrt(self.p.target_process_noise / dt)
            acc = std * self.rng.standard_normal((len(self.targets), 2))
        else:
            acc = np.zeros((len(self.targets), 2))
        self.targets = [_reflect(step_target(tg, dt, acc[j]), self.sc.area) for j, tg in enumerate(self.targets)]
        thr = self.p.waypoint_threshold
        for i, a in enumerate(self.agents):
            if not a.alive or a.id in self.reached:
                continue
            g = self.guidance.get(a.id)
            if g is None:
                a = step_agent(a, a.heading, self.model, self.gain, self.p.forward_speed)
            else:
                wp = g.current if g.current is not None else g.waypoints[-1]
                cmd = self.steer(a, wp)
                a = step_agent(a, cmd, self.model, self.gain, self.p.forward_speed)
                g2 = advance_waypoint(g, a.pos, thr)
                if g2.active != g.active:
                    self.event(t, "waypoint_reached", f"agent {a.id} waypoint {g.active}")
                self.guidance[a.id] = g2
                tg = self.targets[g.target_id] if 0 <= g.target_id < len(self.targets) else None
                if tg is not None and math.hypot(tg.pos[0] - a.pos[0], tg.pos[1] - a.pos[1]) < thr:
                    self.reached[a.id] = t
                    self.event(t, "target_reached", f"agent {a.id} target {g.target_id}")
            self.agents[i] = a

    def steer(self, a: AgentState, wp) -> float:
        """Heading command toward ``wp`` with a go-around when it lies close behind.

        Pure pursuit of a point inside the turning circle never converges, so
        the agent holds its heading until it is far enough out to turn back
        onto a straight approach.
        """
        d = math.hypot(wp[0] - a.pos[0], wp[1] - a.pos[1])
        if a.id in self.go_around:
            if d <= GO_AROUND_OUT * self.p.forward_speed:
                return a.heading
            self.go_around.discard(a.id)
        if d == 0.0:
            return a.heading
        cmd = heading_command(a.pos, wp)
        if d < GO_AROUND_IN * self.p.forward_speed and abs(wrap_angle(cmd - a.heading)) > math.pi / 2:
            self.go_around.add(a.id)
            return a.heading
        return cmd

    def finished(self) -> bool:
        return all((not a.alive) or a.id in self.reached for a in self.agents)

    def run(self) -> SimTrace:
        self.initial_plan()
        self.record_truth(0.0)
        clock = self.clock
        max_tick = int(round(self.p.max_time * clock.dyn_rate))
        tick = 0
        reason = "time cap reached"
        while tick < max_tick:
            tick += 1
            t = clock.time(tick)
            self.step_dynamics(t)
            filt = clock.is_filter_tick(tick)
            if filt:
                self.scan(tick, t)
                if clock.is_death_tick(tick):
                    self.deaths(t)
            elif clock.is_death_tick(tick):
                self.deaths(t)
            if clock.is_replan_tick(tick):
                self.maybe_replan(t)
            if filt or tick % self.truth_every == 0:
                self.record_truth(t)
            if self.finished():
                reason = "all agents disabled or at a target"
                break
        t_end = clock.time(tick)
        for a in self.agents:
            if a.id in self.reached:
                self.trace.summary[a.id] = ("reached", self.reached[a.id])
            elif a.id in self.died:
                self.trace.summary[a.id] = ("dead", self.died[a.id])
            else:
                self.trace.summary[a.id] = ("incomplete", t_end)
        self.event(t_end, "termination", reason)
        return self.trace


def run_simulation(scenario: Scenario, *, decimate: float | None = 10.0) -> SimTrace:
    """Run one mission; the trace is a pure function of the scenario (including its seed).

    ``decimate`` is the truth recording rate in Hz (None for every tick);
    filter ticks are always recorded.
    """
    return _Engine(scenario, decimate).run()
