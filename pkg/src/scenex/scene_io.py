"""Scene and trajectory I/O in the INTERACTION-compatible CSV layout.

Track CSV columns, exact and in order::

    case_id, track_id, frame_id, timestamp_ms, agent_type, x, y, vx, vy,
    psi_rad, length, width

The frame period is fixed at 100 ms (10 Hz).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

from .errors import InsufficientHistoryError, SchemaError, SynthParamError
from .geometry import Polyline
from .map_model import DEFAULT_LANE_WIDTH, Lane, MapGraph

log = logging.getLogger(__name__)

TRACK_COLUMNS = [
    "case_id", "track_id", "frame_id", "timestamp_ms", "agent_type",
    "x", "y", "vx", "vy", "psi_rad", "length", "width",
]
FRAME_PERIOD_MS = 100
DEFAULT_HISTORY_LEN = 10
DEFAULT_VEHICLE_LENGTH = 4.5
DEFAULT_VEHICLE_WIDTH = 1.8

# agent types that carry no behavior model and are dropped on load
_DROPPED_AGENT_TYPES = {"pedestrian", "bicycle", "pedestrian/bicycle"}
_KNOWN_VEHICLE_TYPES = {"car", "truck"}


@dataclass(frozen=True)
class ParticipantState:
    track_id: int
    agent_type: str
    x: float
    y: float
    yaw: float
    vx: float
    vy: float
    length: float = DEFAULT_VEHICLE_LENGTH
    width: float = DEFAULT_VEHICLE_WIDTH

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError(f"track {self.track_id}: non-positive dimensions")
        if not (math.isfinite(self.vx) and math.isfinite(self.vy)):
            raise ValueError(f"track {self.track_id}: non-finite velocity")

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class SceneFrame:
    timestamp_ms: int
    states: tuple

    def __post_init__(self):
        states = tuple(sorted(self.states, key=lambda s: s.track_id))
        ids = [s.track_id for s in states]
        if len(set(ids)) != len(ids):
            raise ValueError(f"frame {self.timestamp_ms}: duplicate track ids")
        object.__setattr__(self, "states", states)

    @property
    def track_ids(self):
        return frozenset(s.track_id for s in self.states)

    def get(self, track_id):
        for s in self.states:
            if s.track_id == track_id:
                return s
        return None


@dataclass(frozen=True)
class SeedScene:
    """Map reference plus a short history window; last frame is current."""

    map_graph: MapGraph
    frames: tuple
    case_id: int = 0

    def __post_init__(self):
        if not self.frames:
            raise ValueError("seed scene needs at least one frame")
        ids = self.frames[0].track_ids
        prev = None
        for fr in self.frames:
            if prev is not None and fr.timestamp_ms - prev != FRAME_PERIOD_MS:
                raise ValueError("seed frames must be spaced exactly 100 ms")
            prev = fr.timestamp_ms
            if fr.track_ids != ids:
                raise ValueError("participant set must be constant over the history")

    @property
    def current(self) -> SceneFrame:
        return self.frames[-1]

    @property
    def track_ids(self):
        return sorted(self.current.track_ids)


@dataclass(frozen=True)
class ScenarioLog:
    """One simulated child-scenario: 100 ms frames under one assignment."""

    seed: SeedScene
    assignment: object
    frames: tuple
    run_seed: int


@dataclass(frozen=True)
class Case:
    case_id: int
    frames: tuple


@dataclass
class TrackDataset:
    cases: list
    dropped_nonvehicle: int = 0

    def case(self, case_id) -> Case:
        for c in self.cases:
            if c.case_id == case_id:
                return c
        raise KeyError(f"no case {case_id} in dataset")


def _normalize_agent_type(raw: str) -> str:
    t = raw.strip().lower()
    return t if t in _KNOWN_VEHICLE_TYPES else "other"


def load_tracks(path) -> TrackDataset:
    """Load a track CSV, grouping rows into cases of ordered frames.

    Non-vehicle rows (pedestrians, bicycles) are dropped and counted. The
    raw load does not force participant-set constancy; `extract_seed` does.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != TRACK_COLUMNS:
            missing = [c for c in TRACK_COLUMNS if c not in header]
            if missing:
                raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
            raise SchemaError(
                f"{path}: columns must be exactly {','.join(TRACK_COLUMNS)}"
            )
        dropped = 0
        cases = {}
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACK_COLUMNS):
                raise SchemaError(f"{path}:{lineno}: expected {len(TRACK_COLUMNS)} fields")
            raw_type = row[4]
            if raw_type.strip().lower() in _DROPPED_AGENT_TYPES:
                dropped += 1
                continue
            try:
                case_id = int(row[0])
                track_id = int(row[1])
                frame_id = int(row[2])
                ts = int(row[3])
                x, y, vx, vy, yaw = (float(v) for v in (row[5], row[6], row[7], row[8], row[9]))
                length = float(row[10]) if row[10] else DEFAULT_VEHICLE_LENGTH
                width = float(row[11]) if row[11] else DEFAULT_VEHICLE_WIDTH
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            key = (case_id, track_id, frame_id)
            if key in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate (case, track, frame) {key}")
            seen.add(key)
            state = ParticipantState(track_id, _normalize_agent_type(raw_type),
                                     x, y, yaw, vx, vy, length, width)
            cases.setdefault(case_id, {}).setdefault(frame_id, (ts, []))[1].append(state)

    out = []
    for case_id in sorted(cases):
        frames = []
        prev_ts = None
        for frame_id in sorted(cases[case_id]):
            ts, states = cases[case_id][frame_id]
            if prev_ts is not None and ts <= prev_ts:
                raise SchemaError(
                    f"{path}: case {case_id}: non-monotonic timestamps at frame {frame_id}"
                )
            prev_ts = ts
            frames.append(SceneFrame(ts, tuple(states)))
        out.append(Case(case_id, tuple(frames)))
    if dropped:
        log.info("dropped %d non-vehicle rows from %s", dropped, path)
    return TrackDataset(out, dropped)


def write_case(case_id, frames, path) -> None:
    """Write frames as track CSV rows ordered by (frame, track)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_COLUMNS)
        for fr in frames:
            frame_id = fr.timestamp_ms // FRAME_PERIOD_MS
            for s in fr.states:
                writer.writerow([
                    case_id, s.track_id, frame_id, fr.timestamp_ms, s.agent_type,
                    repr(s.x), repr(s.y), repr(s.vx), repr(s.vy), repr(s.yaw),
                    repr(s.length), repr(s.width),
                ])


def write_log(log_: ScenarioLog, path) -> None:
    """Write a scenario log in the same CSV layout it was loaded from."""
    write_case(log_.seed.case_id, log_.frames, path)


def extract_seed(case: Case, current_index, history_len=DEFAULT_HISTORY_LEN,
                 map_graph=None) -> SeedScene:
    """Cut a history window ending at `current_index` out of a case.

    The participant set is restricted to tracks present in every selected
    frame; behavior models assume complete histories.
    """
    if current_index < history_len - 1 or current_index >= len(case.frames):
        raise InsufficientHistoryError(
            f"case {case.case_id}: insufficient history for current index "
            f"{current_index} (need {history_len} frames)"
        )
    window = case.frames[current_index - history_len + 1: current_index + 1]
    common = frozenset.intersection(*(fr.track_ids for fr in window))
    if not common:
        raise InsufficientHistoryError(
            f"case {case.case_id}: no participant present over the whole window"
        )
    frames = tuple(
        SceneFrame(fr.timestamp_ms,
                   tuple(s for s in fr.states if s.track_id in common))
        for fr in window
    )
    return SeedScene(map_graph, frames, case.case_id)


def _require(params, allowed):
    unknown = set(params) - set(allowed)
    if unknown:
        raise SynthParamError(f"unknown template parameter(s): {sorted(unknown)}")


def _history_frames(specs, history_len):
    """Back-extrapolate constant-velocity histories; last frame is current.

    `specs` is a list of (track_id, x, y, yaw, vx, vy, length, width).
    """
    frames = []
    for k in range(history_len):
        steps_back = history_len - 1 - k
        states = tuple(
            ParticipantState(tid, "car",
                             x - vx * 0.1 * steps_back, y - vy * 0.1 * steps_back,
                             yaw, vx, vy, length, width)
            for tid, x, y, yaw, vx, vy, length, width in specs
        )
        frames.append(SceneFrame(FRAME_PERIOD_MS * (k + 1), states))
    return tuple(frames)


def synth_scene(template, params=None):
    """Generate a synthetic (MapGraph, SeedScene) pair for desk-scale runs.

    Templates: car_following (straight lane, N vehicles at given gaps and
    speeds), merge (ramp joining a main road), crossing (perpendicular lanes
    through a shared conflict point). Histories are back-extrapolated at
    constant velocity; yaw equals the path tangent.
    """
    params = dict(params or {})
    history_len = int(params.pop("history_len", DEFAULT_HISTORY_LEN))
    length = float(params.pop("vehicle_length", DEFAULT_VEHICLE_LENGTH))
    width = float(params.pop("vehicle_width", DEFAULT_VEHICLE_WIDTH))

    if template == "car_following":
        _require(params, {"n_vehicles", "gap", "gaps", "speed", "speeds", "lane_length"})
        n = int(params.get("n_vehicles", 2))
        if n < 1:
            raise SynthParamError("n_vehicles must be >= 1")
        gaps = params.get("gaps")
        if gaps is None:
            gaps = [float(params.get("gap", 20.0))] * (n - 1)
        gaps = [float(g) for g in gaps]
        if len(gaps) != n - 1:
            raise SynthParamError(f"need {n - 1} gaps for {n} vehicles")
        if any(g <= 0.0 for g in gaps):
            raise SynthParamError("gaps must be > 0")
        speeds = params.get("speeds")
        if speeds is None:
            speeds = [float(params.get("speed", 10.0))] * n
        speeds = [float(v) for v in speeds]
        if len(speeds) != n or any(v < 0.0 for v in speeds):
            raise SynthParamError("speeds must be non-negative, one per vehicle")
        lane_length = float(params.get("lane_length", 500.0))
        graph = MapGraph([Lane("main", Polyline([(0.0, 0.0), (lane_length, 0.0)]),
                               DEFAULT_LANE_WIDTH, ())])
        specs = []
        x = 60.0
        for i in range(n):
            if i > 0:
                x += gaps[i - 1]
            specs.append((i + 1, x, 0.0, 0.0, speeds[i], 0.0, length, width))
        return graph, SeedScene(graph, _history_frames(specs, history_len), 1)

    if template == "merge":
        _require(params, {"gap", "distance", "speed_main", "speed_ramp"})
        gap = float(params.get("gap", 15.0))
        distance = float(params.get("distance", 60.0))
        v_main = float(params.get("speed_main", 10.0))
        v_ramp = float(params.get("speed_ramp", 10.0))
        if gap <= 0.0:
            raise SynthParamError("merge gap must be > 0")
        if distance <= 0.0:
            raise SynthParamError("distance to the merge point must be > 0")
        if v_main < 0.0 or v_ramp < 0.0:
            raise SynthParamError("speeds must be non-negative")
        merge_x = 150.0
        main_in = Polyline([(-200.0, 0.0), (merge_x, 0.0)])
        ramp = Polyline([(0.0, -40.0), (merge_x, 0.0)])
        main_out = Polyline([(merge_x, 0.0), (500.0, 0.0)])
        graph = MapGraph([
            Lane("main_in", main_in, DEFAULT_LANE_WIDTH, ("main_out",)),
            Lane("ramp", ramp, DEFAULT_LANE_WIDTH, ("main_out",)),
            Lane("main_out", main_out, DEFAULT_LANE_WIDTH, ()),
        ])
        # main vehicle leads by `gap` meters of arc distance to the merge point
        x_main = merge_x - distance + gap
        if x_main >= merge_x:
            raise SynthParamError("main vehicle would start past the merge point")
        ramp_station = ramp.length - distance
        if ramp_station < 0.0:
            raise SynthParamError("distance exceeds the ramp length")
        rx, ry = ramp.point_at(ramp_station)
        ryaw = ramp.tangent_at(ramp_station)
        specs = [
            (1, x_main, 0.0, 0.0, v_main, 0.0, length, width),
            (2, rx, ry, ryaw, v_ramp * math.cos(ryaw), v_ramp * math.sin(ryaw),
             length, width),
        ]
        return graph, SeedScene(graph, _history_frames(specs, history_len), 1)

    if template == "crossing":
        _require(params, {"distance_a", "distance_b", "speed_a", "speed_b"})
        d_a = float(params.get("distance_a", 30.0))
        d_b = float(params.get("distance_b", 30.0))
        v_a = float(params.get("speed_a", 10.0))
        v_b = float(params.get("speed_b", 10.0))
        if d_a <= 0.0 or d_b <= 0.0:
            raise SynthParamError("distances to the conflict point must be > 0")
        if v_a < 0.0 or v_b < 0.0:
            raise SynthParamError("speeds must be non-negative")
        graph = MapGraph([
            Lane("east", Polyline([(-150.0, 0.0), (200.0, 0.0)]),
                 DEFAULT_LANE_WIDTH, ()),
            Lane("north", Polyline([(0.0, -150.0), (0.0, 200.0)]),
                 DEFAULT_LANE_WIDTH, ()),
        ])
        specs = [
            (1, -d_a, 0.0, 0.0, v_a, 0.0, length, width),
            (2, 0.0, -d_b, math.pi / 2, 0.0, v_b, length, width),
        ]
        return graph, SeedScene(graph, _history_frames(specs, history_len), 1)

    raise SynthParamError(f"unknown template {template!r}")
