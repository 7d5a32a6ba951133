"""Agent and target truth dynamics, LQR heading control, waypoint guidance and agent death."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
from scipy.signal import cont2discrete

HEADING = 4  # index of psi in the lateral state


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class LinearModel:
    """Continuous lateral model plus its zero-order-hold discretization at ``dt``."""

    A: np.ndarray
    B: np.ndarray
    dt: float
    F: np.ndarray = field(init=False, repr=False)
    G: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        n, m = B.shape
        F, G, *_ = cont2discrete((A, B, np.eye(n), np.zeros((n, m))), self.dt)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)


@dataclass(frozen=True)
class LqrGain:
    K: np.ndarray

    def closed_loop(self, model: LinearModel) -> np.ndarray:
        return model.F - model.G @ self.K

    def is_stable(self, model: LinearModel) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(self.closed_loop(model)))) < 1.0)


def lqr_gain(model: LinearModel, Q, R) -> LqrGain:
    """Discrete infinite-horizon LQR gain for the dt-discretized model."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    F, G = model.F, model.G
    try:
        P = la.solve_discrete_are(F, G, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"Riccati solution failed (pair not stabilizable?): {exc}") from None
    K = np.linalg.solve(G.T @ P @ G + R, G.T @ P @ F)
    gain = LqrGain(K)
    if not gain.is_stable(model):
        raise ValueError("LQR closed loop is not stable")
    return gain


@dataclass(frozen=True)
class AgentState:
    id: int
    x_lat: np.ndarray  # (v, p, r, phi, psi)
    pos: tuple[float, float]
    alive: bool = True

    @property
    def heading(self) -> float:
        return float(self.x_lat[HEADING])


@dataclass(frozen=True)
class TargetState:
    id: int
    pos: tuple[float, float]
    vel: tuple[float, float]


def initial_agent(agent_id: int, x: float, y: float, heading: float) -> AgentState:
    x_lat = np.zeros(5)
    x_lat[HEADING] = wrap_angle(heading)
    return AgentState(agent_id, x_lat, (float(x), float(y)))


def heading_command(agent_pos, waypoint) -> float:
    """Bearing to the waypoint, east = 0, counterclockwise positive, in (-pi, pi]."""
    dx = waypoint[0] - agent_pos[0]
    dy = waypoint[1] - agent_pos[1]
    if dx == 0.0 and dy == 0.0:
        raise ValueError("agent is exactly on the waypoint; advance the waypoint first")
    return wrap_angle(math.atan2(dy, dx))


def step_agent(state: AgentState, psi_cmd: float, model: LinearModel, gain: LqrGain, u: float) -> AgentState:
    """Advance one discrete step under LQR heading regulation.

    The feedback acts on the lateral state with the heading entry replaced by
    the shortest-angle heading error. Position is integrated with the body
    velocities (u forward, v lateral) rotated through the heading.
    """
    if not state.alive:
        raise ValueError(f"agent {state.id} is dead and cannot be propagated")
    x = state.x_lat
    err = x.copy()
    err[HEADING] = wrap_angle(x[HEADING] - psi_cmd)
    x_next = model.F @ x - model.G @ (gain.K @ err)
    x_next[HEADING] = wrap_angle(x_next[HEADING])
    psi = x[HEADING]
    v = x[0]
    c, s = math.cos(psi), math.sin(psi)
    dt = model.dt
    px = state.pos[0] + dt * (u * c - v * s)
    py = state.pos[1] + dt * (u * s + v * c)
    return AgentState(state.id, x_next, (px, py), True)


def step_target(state: TargetState, dt: float, accel_noise=(0.0, 0.0)) -> TargetState:
    """Exact double-integrator step with a constant acceleration over ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    ax, ay = accel_noise
    vx, vy = state.vel
    x = state.pos[0] + vx * dt + 0.5 * ax * dt * dt
    y = state.pos[1] + vy * dt + 0.5 * ay * dt * dt
    return TargetState(state.id, (x, y), (vx + ax * dt, vy + ay * dt))


@dataclass(frozen=True)
class GuidanceState:
    """Onboard waypoint list of one agent.

    ``target_id`` is whatever the planner used to name the goal; the engine
    stores the true-target index it resolves to.
    """

    target_id: int | None
    waypoints: tuple[tuple[float, float], ...]
    active: int = 0
    mission_complete: bool = False

    def __post_init__(self):
        if not 0 <= self.active <= len(self.waypoints):
            raise ValueError("active waypoint index out of range")
        if self.mission_complete and self.active != len(self.waypoints):
            raise ValueError("mission_complete requires every waypoint to be consumed")

    @property
    def current(self) -> tuple[float, float] | None:
        if self.active < len(self.waypoints):
            return self.waypoints[self.active]
        return None


def advance_waypoint(guidance: GuidanceState, agent_pos, threshold: float) -> GuidanceState:
    """Consume the active waypoint once the agent is strictly inside ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    wp = guidance.current
    if wp is None:
        return guidance
    if math.hypot(wp[0] - agent_pos[0], wp[1] - agent_pos[1]) < threshold:
        nxt = guidance.active + 1
        return replace(guidance, active=nxt, mission_complete=nxt == len(guidance.waypoints))
    return guidance


def death_process(agents, p: float, rng: np.random.Generator) -> list[AgentState]:
    """Kill each living agent with probability ``p``.

    One uniform draw per living agent in ascending id order. Dead agents keep
    their last state and never revive.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("death probability must be in [0, 1]")
    out = list(agents)
    order = sorted((i for i, a in enumerate(out) if a.alive), key=lambda i: out[i].id)
    draws = rng.random(len(order))
    for i, u in zip(order, draws):
        if u < p:
            out[i] = replace(out[i], alive=False)
    return out
