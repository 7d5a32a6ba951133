"""Mission scenarios: area, A* grid, obstacles, initial objects and model parameters.

Scenario files are YAML documents (see ``docs/scenario_format.md``). Unknown
keys are rejected so typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

FORMAT_VERSION = 1

# independent RNG streams derived from the scenario seed
_OBSTACLE_STREAM = 1
_TARGET_STREAM = 2

Node = tuple[int, int]


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or violates an invariant."""


# Default agent lateral model: 5 states (v, p, r, phi, psi), inputs (aileron,
# rudder). Numeric entries are configuration for a small fixed-wing airframe,
# not ground truth for any particular vehicle.
DEFAULT_LATERAL_A = (
    (-2.382, 0.0, -30.1, 65.49, 0.0),
    (-0.702, -16.06, 0.872, 0.0, 0.0),
    (0.817, -16.65, -3.54, 0.0, 0.0),
    (0.0, 1.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 1.0, 0.0, 0.0),
)
DEFAULT_LATERAL_B = (
    (0.0, -7.41),
    (-36.3, -688.0),
    (-0.673, -68.0),
    (0.0, 0.0),
    (0.0, 0.0),
)


def _eye(n: int) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(1.0 if i == j else 0.0 for j in range(n)) for i in range(n))


@dataclass(frozen=True)
class MissionArea:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ScenarioError(f"degenerate mission area {self}")

    @property
    def size(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class GridSpec:
    n_rows: int
    n_cols: int

    def __post_init__(self):
        if self.n_rows < 2 or self.n_cols < 2:
            raise ScenarioError(f"grid must be at least 2x2, got {self.n_rows}x{self.n_cols}")

    def contains(self, node: Node) -> bool:
        return 0 <= node[0] < self.n_rows and 0 <= node[1] < self.n_cols

    def nodes(self) -> Iterable[Node]:
        for r in range(self.n_rows):
            for c in range(self.n_cols):
                yield (r, c)


@dataclass(frozen=True)
class GlmbConfig:
    """Tuning of the two GLMB filter instances."""

    survival_prob: float = 0.9999
    birth_prob_initial: float = 0.95
    birth_prob: float = 0.001
    birth_pos_std: float = 25.0
    birth_vel_std: float = 10.0
    agent_accel_noise: float = 25.0  # white-acceleration intensity of the agent track model, m^2/s^3
    target_accel_noise: float = 0.5  # same for the target track model
    max_detect_prob: float = 0.999  # cap on the modeled p_D; 1 would make any vanished object impossible
    gate_prob: float = 0.9999  # chi-square gate; 1.0 disables gating
    prune_threshold: float = 1e-5
    max_hypotheses: int = 50
    gm_prune: float = 1e-4
    gm_cap: int = 4
    max_enumeration: int = 256
    murty_k: int = 32
    max_predict_children: int = 8
    assoc_rel_threshold: float = 1e-7


@dataclass(frozen=True)
class ModelParams:
    forward_speed: float = 15.0
    waypoint_threshold: float = 10.0
    dyn_rate: float = 100.0
    filter_rate: float = 1.0
    replan_rate: float = 0.2
    death_rate: float = 1.0
    death_prob_per_step: float = 0.0
    clutter_rate: float = 10.0
    detect_prob: float = 0.98
    meas_noise_cov: tuple = ((25.0, 0.0), (0.0, 25.0))
    target_process_noise: float = 0.02
    movement_threshold: float | None = None
    lqr_Q: tuple = _eye(5)
    lqr_R: tuple = _eye(2)
    lateral_A: tuple = DEFAULT_LATERAL_A
    lateral_B: tuple = DEFAULT_LATERAL_B
    max_time: float = 400.0
    cost_mode: str = "octile"
    assignment_mode: str = "optimal"
    glmb: GlmbConfig = field(default_factory=GlmbConfig)

    @property
    def movement_limit(self) -> float:
        if self.movement_threshold is None:
            return 2.0 * self.waypoint_threshold
        return self.movement_threshold

    @property
    def R_z(self) -> np.ndarray:
        return np.array(self.meas_noise_cov, dtype=float)

    def validate(self) -> None:
        for name in ("death_prob_per_step", "detect_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ScenarioError(f"{name} must be in [0, 1], got {v}")
        g = self.glmb
        for name in ("survival_prob", "birth_prob_initial", "birth_prob", "gate_prob", "max_detect_prob",
                     "prune_threshold", "gm_prune"):
            v = getattr(g, name)
            if not 0.0 <= v <= 1.0:
                raise ScenarioError(f"glmb.{name} must be in [0, 1], got {v}")
        for name in ("max_hypotheses", "gm_cap", "max_enumeration", "murty_k", "max_predict_children"):
            if getattr(g, name) < 1:
                raise ScenarioError(f"glmb.{name} must be >= 1")
        for name in ("forward_speed", "waypoint_threshold", "dyn_rate", "filter_rate",
                     "replan_rate", "death_rate", "max_time"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be positive")
        if self.clutter_rate < 0 or self.target_process_noise < 0:
            raise ScenarioError("clutter_rate and target_process_noise must be non-negative")
        for slow, fast in (("filter_rate", "dyn_rate"), ("replan_rate", "filter_rate"),
                           ("death_rate", "dyn_rate")):
            ratio = getattr(self, fast) / getattr(self, slow)
            if abs(ratio - round(ratio)) > 1e-9:
                raise ScenarioError(f"{fast} must be an integer multiple of {slow}")
        _check_spd(self.R_z, "meas_noise_cov", allow_semi=False)
        _check_spd(np.array(self.lqr_Q, float), "lqr_Q", allow_semi=True)
        _check_spd(np.array(self.lqr_R, float), "lqr_R", allow_semi=False)
        if np.shape(self.lqr_Q) != (5, 5) or np.shape(self.lqr_R) != (2, 2):
            raise ScenarioError("lqr_Q must be 5x5 and lqr_R 2x2")
        if np.shape(self.lateral_A) != (5, 5) or np.shape(self.lateral_B) != (5, 2):
            raise ScenarioError("lateral_A must be 5x5 and lateral_B 5x2")
        if self.cost_mode not in ("octile", "unit", "paper"):
            raise ScenarioError(f"unknown cost_mode {self.cost_mode!r}")
        if self.assignment_mode not in ("optimal", "greedy"):
            raise ScenarioError(f"unknown assignment_mode {self.assignment_mode!r}")


def _check_spd(m: np.ndarray, name: str, allow_semi: bool) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
        raise ScenarioError(f"{name} must be a symmetric square matrix")
    eig = np.linalg.eigvalsh(m)
    if eig.min() < 0 or (not allow_semi and eig.min() <= 0):
        raise ScenarioError(f"{name} must be positive {'semi-' if allow_semi else ''}definite")


@dataclass(frozen=True)
class AgentStart:
    x: float
    y: float
    heading: float = 0.0


@dataclass(frozen=True)
class TargetStart:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0


@dataclass(frozen=True)
class ScriptedDeath:
    agent: int
    t: float


@dataclass(frozen=True)
class Scenario:
    """A fully materialized mission.

    ``obstacles`` and ``initial_targets`` are derived from the seed when the
    scenario asks for random obstacles or randomized targets; the nominal
    inputs are kept so the scenario can be re-seeded or saved.
    """

    name: str
    area: MissionArea
    grid: GridSpec
    initial_agents: tuple[AgentStart, ...]
    nominal_targets: tuple[TargetStart, ...]
    params: ModelParams = field(default_factory=ModelParams)
    seed: int = 0
    fixed_obstacles: frozenset = frozenset()
    obstacle_threshold: float = 0.0
    target_motion: str = "prescribed"
    target_position_std: float = 0.0
    target_velocity_std: float = 0.0
    scripted_deaths: tuple[ScriptedDeath, ...] = ()
    obstacles: frozenset = field(init=False, compare=False)
    initial_targets: tuple[TargetStart, ...] = field(init=False, compare=False)

    def __post_init__(self):
        _validate(self)
        targets = _materialize_targets(self)
        object.__setattr__(self, "initial_targets", targets)
        protected = {world_to_grid((a.x, a.y), self.grid, self.area) for a in self.initial_agents}
        protected |= {world_to_grid((t.x, t.y), self.grid, self.area) for t in targets}
        clash = sorted(protected & self.fixed_obstacles)
        if clash:
            raise ScenarioError(f"obstacle placed on an agent/target start node: {clash[0]}")
        obstacles = set(self.fixed_obstacles)
        if self.obstacle_threshold > 0:
            rng = np.random.default_rng([self.seed, _OBSTACLE_STREAM])
            obstacles |= generate_random_obstacles(self.grid, self.obstacle_threshold, protected, rng)
        object.__setattr__(self, "obstacles", frozenset(obstacles))

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=int(seed))

    def with_params(self, **changes) -> "Scenario":
        return dataclasses.replace(self, params=dataclasses.replace(self.params, **changes))


def _validate(s: Scenario) -> None:
    if not 0 <= s.seed < 2**64:
        raise ScenarioError("seed must be a 64-bit unsigned integer")
    if len(s.initial_agents) < 1:
        raise ScenarioError("scenario needs at least one agent")
    if len(s.nominal_targets) < len(s.initial_agents):
        raise ScenarioError("scenario needs at least as many targets as agents")
    for i, a in enumerate(s.initial_agents):
        if not s.area.contains(a.x, a.y):
            raise ScenarioError(f"agent {i} at ({a.x}, {a.y}) lies outside the mission area")
    for j, t in enumerate(s.nominal_targets):
        if not s.area.contains(t.x, t.y):
            raise ScenarioError(f"target {j} at ({t.x}, {t.y}) lies outside the mission area")
    for node in s.fixed_obstacles:
        if not s.grid.contains(node):
            raise ScenarioError(f"obstacle {node} lies outside the grid")
    if not 0.0 <= s.obstacle_threshold <= 1.0:
        raise ScenarioError("obstacle threshold must be in [0, 1]")
    if s.target_motion not in ("prescribed", "random"):
        raise ScenarioError(f"target_motion must be 'prescribed' or 'random', got {s.target_motion!r}")
    if s.target_position_std < 0 or s.target_velocity_std < 0:
        raise ScenarioError("target randomization spreads must be non-negative")
    for d in s.scripted_deaths:
        if not 0 <= d.agent < len(s.initial_agents):
            raise ScenarioError(f"scripted death names unknown agent {d.agent}")
    s.params.validate()


def _materialize_targets(s: Scenario) -> tuple[TargetStart, ...]:
    if s.target_position_std == 0 and s.target_velocity_std == 0:
        return s.nominal_targets
    rng = np.random.default_rng([s.seed, _TARGET_STREAM])
    a = s.area
    out = []
    for t in s.nominal_targets:
        dx, dy, dvx, dvy = rng.standard_normal(4)
        x = min(max(t.x + s.target_position_std * dx, a.x_min), a.x_max)
        y = min(max(t.y + s.target_position_std * dy, a.y_min), a.y_max)
        out.append(TargetStart(x, y, t.vx + s.target_velocity_std * dvx, t.vy + s.target_velocity_std * dvy))
    return tuple(out)


# ---------------------------------------------------------------------------
# grid <-> world mapping and obstacle generation


def _spacing(grid: GridSpec, area: MissionArea) -> tuple[float, float]:
    return ((area.x_max - area.x_min) / (grid.n_cols - 1),
            (area.y_max - area.y_min) / (grid.n_rows - 1))


def grid_to_world(node: Node, grid: GridSpec, area: MissionArea) -> tuple[float, float]:
    """World position of a grid node; columns run along x and rows along y."""
    if not grid.contains(node):
        raise IndexError(f"node {node} outside {grid.n_rows}x{grid.n_cols} grid")
    dx, dy = _spacing(grid, area)
    row, col = node
    return (area.x_min + col * dx, area.y_min + row * dy)


def world_to_grid(pos, grid: GridSpec, area: MissionArea) -> Node:
    """Nearest grid node to a world position; exact ties go to the lower index.

    Positions up to one cell outside the area are clamped onto the border.
    """
    x, y = float(pos[0]), float(pos[1])
    dx, dy = _spacing(grid, area)
    fc = (x - area.x_min) / dx
    fr = (y - area.y_min) / dy
    if not (-1.0 <= fc <= grid.n_cols and -1.0 <= fr <= grid.n_rows):
        raise ValueError(f"position ({x}, {y}) is more than one cell outside the mission area")
    # ceil(v - 0.5) rounds half down, which is the lexicographic tie rule
    col = min(max(math.ceil(fc - 0.5), 0), grid.n_cols - 1)
    row = min(max(math.ceil(fr - 0.5), 0), grid.n_rows - 1)
    return (row, col)


def generate_random_obstacles(grid: GridSpec, threshold: float, protected, rng: np.random.Generator) -> set[Node]:
    """Mark each unprotected node as an obstacle when its uniform draw is below ``threshold``.

    One draw is consumed per node in row-major order, protected or not, so the
    result depends only on the grid, threshold, protected set and RNG state.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    protected = set(protected)
    for node in protected:
        if not grid.contains(node):
            raise ValueError(f"protected node {node} outside grid")
    draws = rng.random((grid.n_rows, grid.n_cols))
    return {(r, c) for r, c in grid.nodes() if draws[r, c] < threshold and (r, c) not in protected}


# ---------------------------------------------------------------------------
# file format

_TOP_KEYS = {"format_version", "name", "seed", "area", "grid", "obstacles", "agents", "targets",
             "target_motion", "scripted_deaths", "params"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where} must be a mapping")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ScenarioError(f"unknown key {extra[0]!r} in {where}")


def _matrix(v) -> tuple:
    return tuple(tuple(float(x) for x in row) for row in v)


_MATRIX_FIELDS = {"meas_noise_cov", "lqr_Q", "lqr_R", "lateral_A", "lateral_B"}


def _params_from_dict(d: dict) -> ModelParams:
    fields = {f.name for f in dataclasses.fields(ModelParams)}
    _reject_unknown(d, fields, "params")
    kwargs = {}
    for k, v in d.items():
        if k == "glmb":
            gfields = {f.name for f in dataclasses.fields(GlmbConfig)}
            _reject_unknown(v, gfields, "params.glmb")
            kwargs[k] = GlmbConfig(**v)
        elif k in _MATRIX_FIELDS:
            kwargs[k] = _matrix(v)
        else:
            kwargs[k] = v
    return ModelParams(**kwargs)


def scenario_from_dict(doc: dict) -> Scenario:
    _reject_unknown(doc, _TOP_KEYS, "scenario")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        area_d = doc["area"]
        _reject_unknown(area_d, {"x_min", "x_max", "y_min", "y_max"}, "area")
        area = MissionArea(**{k: float(v) for k, v in area_d.items()})
        grid_d = doc["grid"]
        _reject_unknown(grid_d, {"n_rows", "n_cols"}, "grid")
        grid = GridSpec(int(grid_d["n_rows"]), int(grid_d["n_cols"]))
        obs_d = doc.get("obstacles") or {}
        _reject_unknown(obs_d, {"nodes", "random_threshold"}, "obstacles")
        nodes = [tuple(int(i) for i in n) for n in obs_d.get("nodes") or []]
        if len(set(nodes)) != len(nodes):
            raise ScenarioError("duplicate obstacle node")
        agents = []
        for a in doc["agents"]:
            _reject_unknown(a, {"x", "y", "heading"}, "agents[]")
            agents.append(AgentStart(float(a["x"]), float(a["y"]), float(a.get("heading", 0.0))))
        targets_d = doc["targets"]
        if isinstance(targets_d, dict):
            _reject_unknown(targets_d, {"nominal", "position_std", "velocity_std"}, "targets")
            pos_std = float(targets_d.get("position_std", 0.0))
            vel_std = float(targets_d.get("velocity_std", 0.0))
            targets_list = targets_d["nominal"]
        else:
            pos_std = vel_std = 0.0
            targets_list = targets_d
        targets = []
        for t in targets_list:
            _reject_unknown(t, {"x", "y", "vx", "vy"}, "targets[]")
            targets.append(TargetStart(float(t["x"]), float(t["y"]), float(t.get("vx", 0.0)), float(t.get("vy", 0.0))))
        deaths = []
        for dd in doc.get("scripted_deaths") or []:
            _reject_unknown(dd, {"agent", "t"}, "scripted_deaths[]")
            deaths.append(ScriptedDeath(int(dd["agent"]), float(dd["t"])))
        params = _params_from_dict(doc.get("params") or {})
    except KeyError as exc:
        raise ScenarioError(f"missing required key {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ScenarioError(str(exc)) from None
    return Scenario(
        name=str(doc.get("name", "unnamed")),
        area=area,
        grid=grid,
        initial_agents=tuple(agents),
        nominal_targets=tuple(targets),
        params=params,
        seed=int(doc.get("seed", 0)),
        fixed_obstacles=frozenset(nodes),
        obstacle_threshold=float(obs_d.get("random_threshold", 0.0)),
        target_motion=str(doc.get("target_motion", "prescribed")),
        target_position_std=pos_std,
        target_velocity_std=vel_std,
        scripted_deaths=tuple(deaths),
    )


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if dataclasses.is_dataclass(v):
        return {f.name: _plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    return v


def scenario_to_dict(s: Scenario) -> dict:
    targets = [dataclasses.asdict(t) for t in s.nominal_targets]
    doc = {
        "format_version": FORMAT_VERSION,
        "name": s.name,
        "seed": s.seed,
        "area": dataclasses.asdict(s.area),
        "grid": dataclasses.asdict(s.grid),
        "obstacles": {"nodes": [list(n) for n in sorted(s.fixed_obstacles)],
                      "random_threshold": s.obstacle_threshold},
        "agents": [dataclasses.asdict(a) for a in s.initial_agents],
        "targets": {"nominal": targets, "position_std": s.target_position_std,
                    "velocity_std": s.target_velocity_std},
        "target_motion": s.target_motion,
        "scripted_deaths": [dataclasses.asdict(d) for d in s.scripted_deaths],
        "params": _plain(s.params),
    }
    return doc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed scenario file {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"malformed scenario file {path}: top level must be a mapping")
    return scenario_from_dict(doc)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(s), sort_keys=False), encoding="utf-8")


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``fig3_analog``."""
    ref = resources.files("swarmstat") / "scenarios" / f"{name}.yaml"
    return Path(str(ref))


def bundled_scenario(name: str, seed: int | None = None) -> Scenario:
    s = load_scenario(bundled_scenario_path(name))
    return s if seed is None else s.with_seed(seed)
