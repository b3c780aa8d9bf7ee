"""Behavior models: frozen world view in, planned trajectory out.

Concrete models: Standard Driver and Risky Driver (path following with the
intelligent-driver acceleration law), Constant Velocity, Emergency Brake,
and ground-truth Replay. Learned predictors plug in through the same
ModelSpec/Trajectory contract.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import yaml

from .errors import ModelError, SchemaError
from .geometry import wrap_angle
from .map_model import Path
from .scene_io import ParticipantState

MODEL_KINDS = ("standard", "risky", "constant_velocity", "emergency_brake", "replay")
IDM_KINDS = ("standard", "risky")

MIN_TRAJECTORY_STEPS = 30
LEADER_CLEARANCE = 5.0
PERCEPTION_RANGE = 50.0
HARD_BRAKE_DECEL = 9.0
EMERGENCY_BRAKE_DECEL = 5.0
MIN_NET_GAP = 0.01

# Table-driven driver profiles; a_max and v0 are repo defaults, the rest is
# the published parametrization of each profile.
IDM_PROFILES = {
    "standard": dict(a_max=2.0, b=3.0, T=3.1, s0=9.0, delta=4.0),
    "risky": dict(a_max=2.5, b=8.0, T=2.1, s0=5.0, delta=4.0),
}


@dataclass(frozen=True)
class IdmParams:
    a_max: float
    b: float
    T: float
    s0: float
    delta: float
    v0: float | None = None

    def validated(self) -> "IdmParams":
        for name in ("a_max", "b", "T", "s0", "delta", "v0"):
            v = getattr(self, name)
            if v is None or v <= 0.0:
                raise ModelError(f"IDM parameter {name} must be > 0, got {v!r}")
        return self


def profile_params(kind, v0=None, **overrides) -> IdmParams:
    base = dict(IDM_PROFILES[kind])
    base.update(overrides)
    return IdmParams(v0=v0, **base)


@dataclass(frozen=True)
class ModelSpec:
    """Roster entry: model kind plus kind-specific parameters."""

    kind: str
    params: IdmParams | None = None
    route_selector: object = "straightest"
    brake_decel: float = EMERGENCY_BRAKE_DECEL
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.weight <= 0.0:
            raise ModelError("model weight must be > 0")
        if self.kind == "emergency_brake" and self.brake_decel <= 0.0:
            raise ModelError("brake_decel must be > 0")


@dataclass(frozen=True)
class WorldView:
    """Read-only environment snapshot handed to every model."""

    frames: tuple
    map_graph: object
    self_id: int
    horizon_steps: int = MIN_TRAJECTORY_STEPS
    dt: float = 0.1

    @property
    def current(self):
        return self.frames[-1]

    def self_state(self) -> ParticipantState:
        state = self.current.get(self.self_id)
        if state is None:
            raise ModelError(f"track {self.self_id} missing from the current frame")
        return state


@dataclass(frozen=True)
class LocalParticipant:
    track_id: int
    x: float
    y: float
    yaw: float
    vx: float
    vy: float
    length: float
    width: float


@dataclass(frozen=True)
class LocalView:
    self_id: int
    others: tuple


@dataclass(frozen=True)
class Leader:
    track_id: int
    s_net: float
    delta_v: float


@dataclass(frozen=True)
class Trajectory:
    """Planned future states for steps t+1 ... t+horizon."""

    states: tuple
    owner: int


def perceive(view: WorldView, perception_range=PERCEPTION_RANGE) -> LocalView:
    """All other participants within range, in the self vehicle frame."""
    me = view.self_state()
    cos_y = math.cos(-me.yaw)
    sin_y = math.sin(-me.yaw)
    others = []
    for s in view.current.states:
        if s.track_id == view.self_id:
            continue
        dx = s.x - me.x
        dy = s.y - me.y
        if math.hypot(dx, dy) > perception_range:
            continue
        others.append(LocalParticipant(
            s.track_id,
            cos_y * dx - sin_y * dy,
            sin_y * dx + cos_y * dy,
            wrap_angle(s.yaw - me.yaw),
            cos_y * s.vx - sin_y * s.vy,
            sin_y * s.vx + cos_y * s.vy,
            s.length, s.width,
        ))
    return LocalView(view.self_id, tuple(others))


def find_leader(view: WorldView, path: Path, clearance=LEADER_CLEARANCE):
    """Nearest participant ahead on (or near) the path, or None.

    Candidates project within `clearance` laterally; the net gap subtracts
    the mean of both vehicle lengths and is clamped to stay positive.
    """
    me = view.self_state()
    own_station, _ = path.project(me.x, me.y)
    best = None
    for s in view.current.states:
        if s.track_id == view.self_id:
            continue
        station, lateral = path.project(s.x, s.y)
        if abs(lateral) > clearance or station <= own_station:
            continue
        if best is None or station < best[0]:
            best = (station, s)
    if best is None:
        return None
    station, other = best
    s_net = max(station - own_station - 0.5 * (me.length + other.length), MIN_NET_GAP)
    return Leader(other.track_id, s_net, me.speed - other.speed)


def idm_accel(p: IdmParams, v, s_net=math.inf, delta_v=0.0) -> float:
    """Intelligent-driver acceleration toward v0 with dynamic desired gap.

    Free flow is the s_net = inf limit. The desired gap is clamped at s0,
    and the result at [-HARD_BRAKE_DECEL, a_max].
    """
    a = p.a_max * (1.0 - (v / p.v0) ** p.delta)
    if s_net != math.inf:
        s_star = p.s0 + v * p.T + v * delta_v / (2.0 * math.sqrt(p.a_max * p.b))
        if s_star < p.s0:
            s_star = p.s0
        a -= p.a_max * (s_star / s_net) ** 2
    return min(max(a, -HARD_BRAKE_DECEL), p.a_max)


def plan_path_follow(view: WorldView, spec: ModelSpec, path: Path,
                     clearance=LEADER_CLEARANCE) -> Trajectory:
    """Forward-integrate speed along a fixed path.

    Other participants are frozen at their current state for the whole
    planning horizon; reactivity comes from replanning. Past the path end
    the vehicle continues along the last tangent.
    """
    if spec.kind == "replay":
        raise ModelError("replay models plan via plan_replay")
    me = view.self_state()
    dt = view.dt
    degenerate = path.polyline is None
    if degenerate:
        s = 0.0
        yaw = me.yaw
    else:
        s, _ = path.project(me.x, me.y)
    v = me.speed

    leaders = []
    if spec.kind in IDM_KINDS:
        params = (spec.params or profile_params(spec.kind, v0=max(v, 1.0))).validated()
        if not degenerate:
            for other in view.current.states:
                if other.track_id == view.self_id:
                    continue
                station, lateral = path.project(other.x, other.y)
                if abs(lateral) <= clearance:
                    leaders.append((station, other.speed, other.length))
            leaders.sort()

    states = []
    for _ in range(view.horizon_steps):
        if spec.kind == "constant_velocity":
            a = 0.0
        elif spec.kind == "emergency_brake":
            a = -spec.brake_decel if v > 0.0 else 0.0
        else:
            s_net = math.inf
            dv = 0.0
            for station, speed, length in leaders:
                if station > s:
                    s_net = max(station - s - 0.5 * (me.length + length), MIN_NET_GAP)
                    dv = v - speed
                    break
            a = idm_accel(params, v, s_net, dv)
        v1 = v + a * dt
        if v1 < 0.0:
            v1 = 0.0
        s1 = s + 0.5 * (v + v1) * dt
        if degenerate:
            x = me.x + s1 * math.cos(yaw)
            y = me.y + s1 * math.sin(yaw)
            th = yaw
        else:
            x, y = path.point_at(s1, extrapolate=True)
            th = path.tangent_at(s1)
        states.append(ParticipantState(
            me.track_id, me.agent_type, x, y, th,
            v1 * math.cos(th), v1 * math.sin(th), me.length, me.width,
        ))
        v, s = v1, s1
    return Trajectory(tuple(states), me.track_id)


def plan_replay(view: WorldView, recorded, current_index) -> Trajectory:
    """Return the recorded future verbatim; hold the last state when the
    recording ends (constant position, zero speed)."""
    base = None
    for idx in range(min(current_index, len(recorded) - 1), -1, -1):
        base = recorded[idx].get(view.self_id)
        if base is not None:
            break
    if base is None:
        raise ModelError(f"track {view.self_id} absent from the recording")
    states = []
    held = None
    for k in range(1, view.horizon_steps + 1):
        idx = current_index + k
        state = recorded[idx].get(view.self_id) if idx < len(recorded) else None
        if state is not None:
            base = state
            states.append(state)
        else:
            if held is None:
                held = replace(base, vx=0.0, vy=0.0)
            states.append(held)
    return Trajectory(tuple(states), view.self_id)


def _spec_from_record(rec, index):
    if not isinstance(rec, dict) or "kind" not in rec:
        raise SchemaError(f"models[{index}]: expected a mapping with a 'kind' field")
    kind = str(rec["kind"])
    params = None
    raw = rec.get("params")
    if raw is not None:
        if kind not in IDM_KINDS:
            raise SchemaError(f"models[{index}]: params only apply to IDM kinds")
        base = dict(IDM_PROFILES.get(kind, IDM_PROFILES["standard"]))
        unknown = set(raw) - {"a_max", "b", "T", "s0", "delta", "v0"}
        if unknown:
            raise SchemaError(f"models[{index}]: unknown param(s) {sorted(unknown)}")
        v0 = raw.get("v0")
        base.update({k: float(v) for k, v in raw.items() if k != "v0"})
        params = IdmParams(v0=float(v0) if v0 is not None else None, **base)
    try:
        return ModelSpec(
            kind=kind,
            params=params,
            route_selector=rec.get("route_selector", "straightest"),
            brake_decel=float(rec.get("brake_decel", EMERGENCY_BRAKE_DECEL)),
            weight=float(rec.get("weight", 1.0)),
        )
    except ModelError as exc:
        raise SchemaError(f"models[{index}]: {exc}") from exc


def load_roster(path):
    """Load a model roster (YAML list of model specs with weights)."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SchemaError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != "scenex-roster":
        raise SchemaError(f"{path}: field 'format' must be 'scenex-roster'")
    if doc.get("version") != 1:
        raise SchemaError(f"{path}: unsupported roster version")
    models = doc.get("models")
    if not isinstance(models, list) or not models:
        raise SchemaError(f"{path}: field 'models' must be a non-empty list")
    return [_spec_from_record(rec, i) for i, rec in enumerate(models)]
