"""Deterministic planar rigid-body simulator for multi-agent carrying.

The object moves in the horizontal plane under the agents' forces applied at
fixed grasp points. Integration is semi-implicit Euler at a fixed step so a
given scenario and seed always produce the same bits.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import AgentMeta, TrialMeta, TrialRecord
from .errors import ConfigError, InstabilityError

GRAVITY = 9.81
DIVERGENCE_LIMIT = 1e6

POLICIES = ("leader-waypoint-pd", "follower-damper", "follower-proportional", "scripted")

_DEFAULT_PARAMS = {
    "leader-waypoint-pd": {
        "kp": 40.0, "kd": 40.0, "f_max": 60.0,
        "ref_speed": 0.5, "arrive_tol": 0.1,
        "kp_yaw": 0.0, "kd_yaw": 0.0, "tau_max": 20.0, "ref_yaw_rate": 0.5,
    },
    "follower-damper": {"b": 20.0},
    "follower-proportional": {"k": 10.0, "lag_s": 0.2, "a_eps": 1e-6},
    "scripted": {"profile": []},
}


@dataclass
class AgentSpec:
    id: str
    grasp_offset: tuple[float, float, float]
    policy: str
    params: dict = field(default_factory=dict)
    noise_std: float = 0.0
    torque_noise_std: float = 0.0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        self.grasp_offset = tuple(float(v) for v in self.grasp_offset)
        if len(self.grasp_offset) != 3:
            raise ConfigError(f"agent {self.id!r}: grasp_offset needs 3 components")
        unknown = set(self.params) - set(_DEFAULT_PARAMS[self.policy])
        if unknown:
            raise ConfigError(f"agent {self.id!r}: unknown {self.policy} params {sorted(unknown)}")
        self.params = {**_DEFAULT_PARAMS[self.policy], **self.params}
        if self.noise_std < 0 or self.torque_noise_std < 0:
            raise ConfigError(f"agent {self.id!r}: noise stddev must be >= 0")


@dataclass
class SimScenario:
    agents: list[AgentSpec]
    mass: float = 20.0
    inertia_z: float = 8.0
    dt: float = 0.005
    duration: float = 10.0
    seed: int = 0
    waypoints: list[tuple[float, float, float]] = field(default_factory=list)
    initial_position: tuple[float, float] = (0.0, 0.0)
    initial_yaw: float = 0.0
    study_label: str = "sim"
    trial_id: str = "sim-0"

    def __post_init__(self):
        self.agents = [a if isinstance(a, AgentSpec) else AgentSpec(**a) for a in self.agents]
        # (x, y) waypoints get yaw 0.
        self.waypoints = [tuple(float(v) for v in w) + ((0.0,) if len(w) == 2 else ())
                          for w in self.waypoints]
        if not self.agents:
            raise ConfigError("scenario needs at least one agent")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate agent ids {ids}")
        for name in ("mass", "inertia_z", "dt", "duration"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if any(len(w) != 3 for w in self.waypoints):
            raise ConfigError("waypoints must be (x, y[, yaw])")
        if any(a.policy == "leader-waypoint-pd" for a in self.agents) and not self.waypoints:
            raise ConfigError("a leader-waypoint-pd agent needs at least one waypoint")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["waypoints"] = [list(w) for w in self.waypoints]
        d["initial_position"] = list(self.initial_position)
        for a in d["agents"]:
            a["grasp_offset"] = list(a["grasp_offset"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimScenario":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_scenario(path) -> SimScenario:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return SimScenario.from_dict(data)


@dataclass(frozen=True)
class ObjectState:
    position: tuple[float, float] = (0.0, 0.0)
    yaw: float = 0.0
    velocity: tuple[float, float] = (0.0, 0.0)
    yaw_rate: float = 0.0


def _rotate(offset, yaw: float) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return (c * offset[0] - s * offset[1], s * offset[0] + c * offset[1])


def _advance(state: ObjectState, wrenches, offsets, mass: float, inertia_z: float, dt: float):
    fx = fy = tz = 0.0
    for (f, tau), off in zip(wrenches, offsets):
        rx, ry = _rotate(off, state.yaw)
        fx += f[0]
        fy += f[1]
        tz += rx * f[1] - ry * f[0] + tau[2]
    ax, ay, alpha = fx / mass, fy / mass, tz / inertia_z
    vx = state.velocity[0] + ax * dt
    vy = state.velocity[1] + ay * dt
    w = state.yaw_rate + alpha * dt
    new = ObjectState(
        position=(state.position[0] + vx * dt, state.position[1] + vy * dt),
        yaw=state.yaw + w * dt,
        velocity=(vx, vy),
        yaw_rate=w,
    )
    return new, (ax, ay), alpha


def step(state: ObjectState, agent_wrenches, scenario: SimScenario) -> ObjectState:
    """Advance one ``dt``.

    ``agent_wrenches`` holds one ``(force, torque)`` pair per scenario agent,
    in the world frame, applied at that agent's grasp point.
    """
    offsets = [a.grasp_offset for a in scenario.agents]
    new, _, _ = _advance(state, agent_wrenches, offsets, scenario.mass, scenario.inertia_z, scenario.dt)
    return new


# ---------------------------------------------------------------- policies


@dataclass
class PolicyContext:
    t: float
    dt: float
    state: ObjectState
    grasp_offset: tuple[float, float]  # world frame, relative to COM
    grasp_velocity: tuple[float, float]
    accel_history: list = field(default_factory=list)


class LeaderPD:
    """PD pull toward a reference that slides along the waypoints at ``ref_speed``.

    Without ``ref_speed`` the reference jumps to each waypoint and advances once
    the object is within ``arrive_tol``.
    """

    def __init__(self, params: dict, waypoints, initial_position, initial_yaw):
        self.p = params
        self.waypoints = list(waypoints)
        self.index = 0
        self.ref = list(initial_position) if params["ref_speed"] else list(self.waypoints[0][:2])
        self.ref_yaw = initial_yaw if params["ref_speed"] else self.waypoints[0][2]

    def _slide(self, dt: float):
        speed = self.p["ref_speed"]
        budget = speed * dt
        while budget > 0 and self.index < len(self.waypoints):
            wx, wy, _ = self.waypoints[self.index]
            dx, dy = wx - self.ref[0], wy - self.ref[1]
            dist = math.hypot(dx, dy)
            if dist <= budget:
                self.ref = [wx, wy]
                budget -= dist
                if self.index < len(self.waypoints) - 1:
                    self.index += 1
                else:
                    break
            else:
                self.ref = [self.ref[0] + dx / dist * budget, self.ref[1] + dy / dist * budget]
                budget = 0.0
        target_yaw = self.waypoints[self.index][2]
        dyaw = target_yaw - self.ref_yaw
        max_dyaw = self.p["ref_yaw_rate"] * dt
        self.ref_yaw += max(-max_dyaw, min(max_dyaw, dyaw))

    def __call__(self, ctx: PolicyContext):
        p = self.p
        s = ctx.state
        if p["ref_speed"]:
            self._slide(ctx.dt)
        else:
            wx, wy, wyaw = self.waypoints[self.index]
            if (math.hypot(wx - s.position[0], wy - s.position[1]) < p["arrive_tol"]
                    and self.index < len(self.waypoints) - 1):
                self.index += 1
            self.ref = list(self.waypoints[self.index][:2])
            self.ref_yaw = self.waypoints[self.index][2]
        return leader_wrench(self.ref, self.ref_yaw, s, p)


def _saturate(x: float, y: float, limit: float):
    n = math.hypot(x, y)
    if limit is not None and n > limit:
        return x * limit / n, y * limit / n
    return x, y


def leader_wrench(ref, ref_yaw: float, s: ObjectState, p: dict):
    fx = p["kp"] * (ref[0] - s.position[0]) - p["kd"] * s.velocity[0]
    fy = p["kp"] * (ref[1] - s.position[1]) - p["kd"] * s.velocity[1]
    fx, fy = _saturate(fx, fy, p["f_max"])
    tz = p["kp_yaw"] * (ref_yaw - s.yaw) - p["kd_yaw"] * s.yaw_rate
    tz = max(-p["tau_max"], min(p["tau_max"], tz))
    return (fx, fy, 0.0), (0.0, 0.0, tz)


class FollowerDamper:
    def __init__(self, params: dict):
        self.b = params["b"]

    def __call__(self, ctx: PolicyContext):
        vx, vy = ctx.grasp_velocity
        return (-self.b * vx + 0.0, -self.b * vy + 0.0, 0.0), (0.0, 0.0, 0.0)


class FollowerProportional:
    """Pushes with fixed magnitude along the object acceleration seen ``lag_s`` ago."""

    def __init__(self, params: dict, dt: float):
        self.k = params["k"]
        self.lag = max(1, int(round(params["lag_s"] / dt)))
        self.a_eps = params["a_eps"]

    def __call__(self, ctx: PolicyContext):
        if len(ctx.accel_history) < self.lag:
            return (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)
        ax, ay = ctx.accel_history[-self.lag]
        n = math.hypot(ax, ay)
        if n <= self.a_eps:
            return (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)
        return (self.k * ax / n, self.k * ay / n, 0.0), (0.0, 0.0, 0.0)


class Scripted:
    """Piecewise-linear force/torque table; held constant outside its time span."""

    def __init__(self, params: dict):
        rows = []
        for entry in params["profile"]:
            if isinstance(entry, dict):
                t = float(entry["t"])
                f = tuple(float(v) for v in entry.get("force", (0.0, 0.0, 0.0)))
                tau = tuple(float(v) for v in entry.get("torque", (0.0, 0.0, 0.0)))
            else:
                t, f, tau = float(entry[0]), tuple(float(v) for v in entry[1]), (0.0, 0.0, 0.0)
                if len(entry) > 2:
                    tau = tuple(float(v) for v in entry[2])
            rows.append((t, f, tau))
        if not rows:
            raise ConfigError("scripted policy needs a non-empty profile")
        rows.sort(key=lambda r: r[0])
        self.times = np.array([r[0] for r in rows])
        self.values = np.array([r[1] + r[2] for r in rows])

    def at(self, t: float):
        w = [float(np.interp(t, self.times, self.values[:, j])) for j in range(6)]
        return tuple(w[:3]), tuple(w[3:])

    def __call__(self, ctx: PolicyContext):
        return self.at(ctx.t)


def make_policy(spec: AgentSpec, scenario: SimScenario):
    p = spec.params
    if spec.policy == "leader-waypoint-pd":
        return LeaderPD(p, scenario.waypoints, scenario.initial_position, scenario.initial_yaw)
    if spec.policy == "follower-damper":
        return FollowerDamper(p)
    if spec.policy == "follower-proportional":
        return FollowerProportional(p, scenario.dt)
    if spec.policy == "scripted":
        return Scripted(p)
    raise ConfigError(f"unknown policy {spec.policy!r}")


def agent_policy(policy: str, ctx: PolicyContext, params: dict | None = None, waypoints=None):
    """One-shot policy evaluation with no internal history (leader uses its first waypoint)."""
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    p = {**_DEFAULT_PARAMS[policy], **(params or {})}
    if policy == "leader-waypoint-pd":
        if not waypoints:
            raise ConfigError("leader-waypoint-pd needs a waypoint")
        w = tuple(waypoints[0]) + (0.0,) * (3 - len(waypoints[0]))
        return leader_wrench(w[:2], w[2], ctx.state, p)
    if policy == "follower-damper":
        return FollowerDamper(p)(ctx)
    if policy == "follower-proportional":
        return FollowerProportional(p, ctx.dt)(ctx)
    return Scripted(p)(ctx)


# ---------------------------------------------------------------- running


def _agent_key(agent_id: str) -> int:
    return int.from_bytes(hashlib.sha256(agent_id.encode("utf-8")).digest()[:8], "little")


def agent_noise(seed: int, agent_id: str, n: int, force_std: float, torque_std: float) -> np.ndarray:
    """``(n, 6)`` Gaussian wrench noise keyed by (seed, agent id) only."""
    if force_std == 0 and torque_std == 0:
        return np.zeros((n, 6))
    bitgen = np.random.Philox(key=[seed & (2**64 - 1), _agent_key(agent_id)])
    z = np.random.Generator(bitgen).standard_normal((n, 6))
    return z * np.array([force_std] * 3 + [torque_std] * 3)


def run_scenario(scenario: SimScenario, seed: int | None = None) -> TrialRecord:
    """Simulate the scenario and return a validated trial.

    Each sample holds the state at ``t_k``, the wrenches applied during
    ``[t_k, t_k + dt)`` and the resulting accelerations.
    """
    seed = scenario.seed if seed is None else int(seed)
    n = scenario.n_samples
    dt = scenario.dt
    m, inertia = scenario.mass, scenario.inertia_z
    agents = scenario.agents
    n_agents = len(agents)
    policies = [make_policy(a, scenario) for a in agents]
    offsets = [a.grasp_offset for a in agents]

    pos = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    acc = np.zeros((n, 3))
    yaw = np.zeros(n)
    yaw_rate = np.zeros(n)
    yaw_accel = np.zeros(n)
    true_f = {a.id: np.zeros((n, 3)) for a in agents}
    true_t = {a.id: np.zeros((n, 3)) for a in agents}

    state = ObjectState(position=tuple(scenario.initial_position), yaw=scenario.initial_yaw)
    history: list = []
    for k in range(n):
        t = k * dt
        wrenches = []
        for spec, policy in zip(agents, policies):
            rx, ry = _rotate(spec.grasp_offset, state.yaw)
            gv = (state.velocity[0] - state.yaw_rate * ry, state.velocity[1] + state.yaw_rate * rx)
            ctx = PolicyContext(t, dt, state, (rx, ry), gv, history)
            f, tau = policy(ctx)
            wrenches.append((f, tau))
        new_state, (ax, ay), alpha = _advance(state, wrenches, offsets, m, inertia, dt)

        pos[k, :2] = state.position
        vel[k, :2] = state.velocity
        acc[k, :2] = (ax, ay)
        yaw[k] = state.yaw
        yaw_rate[k] = state.yaw_rate
        yaw_accel[k] = alpha
        for spec, (f, tau) in zip(agents, wrenches):
            true_f[spec.id][k] = (f[0], f[1], f[2])
            true_t[spec.id][k] = tau
        history.append((ax, ay))

        for v in (*new_state.position, new_state.yaw, *new_state.velocity, new_state.yaw_rate):
            if not (abs(v) <= DIVERGENCE_LIMIT):
                raise InstabilityError(f"state diverged at t={t + dt:.6g} s (|component| > {DIVERGENCE_LIMIT:g})")
        state = new_state

    share = -m * GRAVITY / n_agents
    sensed_f, sensed_t = {}, {}
    for spec in agents:
        true_f[spec.id][:, 2] += share
        noise = agent_noise(seed, spec.id, n, spec.noise_std, spec.torque_noise_std)
        sensed_f[spec.id] = true_f[spec.id] + noise[:, :3]
        sensed_t[spec.id] = true_t[spec.id] + noise[:, 3:]

    meta = TrialMeta(
        study_label=scenario.study_label,
        trial_id=scenario.trial_id,
        sample_rate_hz=1.0 / dt,
        agents=[AgentMeta(a.id, a.grasp_offset) for a in agents],
        gravity_axis=(0.0, 0.0, 1.0),
        mass_kg=float(m),
        inertia_z=float(inertia),
        frame="world",
        extra={
            "generator": "forcedecomp.sim",
            "version": __version__,
            "seed": seed,
            "scenario": scenario.as_dict(),
        },
    )
    record = TrialRecord(
        meta=meta,
        t=np.arange(n) * dt,
        forces=sensed_f,
        torques=sensed_t,
        position=pos,
        yaw=yaw,
        velocity=vel,
        acceleration=acc,
        yaw_rate=yaw_rate,
        yaw_accel=yaw_accel,
        true_forces=true_f,
        true_torques=true_t,
    )
    return record.validate()
