"""Criticality metrics: per-step pairwise values and scenario aggregates.

Nanoscopic values are computed for every ordered participant pair each
frame; per-frame extrema are then aggregated to the per-scenario fingerprint
(worst value plus mean of per-frame extrema, per metric).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import OffMapError, SchemaError
from .map_model import match_to_lane, path_for_pose, path_intersection

DEFAULT_METRICS = ("distance", "gap_time", "inv_ttc", "pttc", "wttc")
# metrics whose scenario worst is the maximum; all others minimize
MAX_IS_WORST = frozenset({"inv_ttc"})

DEFAULT_PTTC_DECEL = 3.0
DEFAULT_WTTC_ACCEL = 7.5
GAP_TIME_MIN_SPEED = 0.1


def effective_radius(state) -> float:
    """Circumscribed-circle radius of the vehicle's bounding box."""
    return 0.5 * math.hypot(state.length, state.width)


@dataclass(frozen=True)
class PairContext:
    """Geometric context of an ordered pair (self/follower first).

    `s_net`/`delta_v` are present when b is a leader of a along a's path;
    `d_self`/`d_other` are the remaining distances to the paths' conflict
    point when one exists ahead of both.
    """

    a: object
    b: object
    s_net: float | None = None
    delta_v: float | None = None
    d_self: float | None = None
    d_other: float | None = None

    @property
    def following(self) -> bool:
        return self.s_net is not None

    @property
    def crossing(self) -> bool:
        return self.d_self is not None


def metric_distance(a, b) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def metric_inverse_ttc(ctx: PairContext):
    """1/TTC of a car-following pair; 0 when the gap is opening."""
    if not ctx.following:
        return None
    return ctx.delta_v / ctx.s_net if ctx.delta_v > 0.0 else 0.0


def metric_pttc(ctx: PairContext, decel=DEFAULT_PTTC_DECEL):
    """Time until the gap closes if the leader brakes at `decel` while the
    follower holds speed; piecewise after the leader stops."""
    if not ctx.following:
        return None
    s = ctx.s_net
    dv = ctx.delta_v
    v_leader = ctx.b.speed
    t_stop = v_leader / decel
    root = (-dv + math.sqrt(dv * dv + 2.0 * decel * s)) / decel
    if root <= t_stop:
        return root
    gap_at_stop = s - dv * t_stop - 0.5 * decel * t_stop * t_stop
    v_follower = ctx.a.speed
    if v_follower <= 0.0:
        return None
    return t_stop + gap_at_stop / v_follower


def metric_wttc(ctx: PairContext, accel=DEFAULT_WTTC_ACCEL) -> float:
    """Earliest contact of reachable discs growing at r + v*t + a/2*t^2.

    Defined for every pair; 0 when the footprints already overlap.
    """
    d = metric_distance(ctx.a, ctx.b)
    gap = d - effective_radius(ctx.a) - effective_radius(ctx.b)
    if gap <= 0.0:
        return 0.0
    vs = ctx.a.speed + ctx.b.speed
    return (-vs + math.sqrt(vs * vs + 4.0 * accel * gap)) / (2.0 * accel)


def metric_gap_time(ctx: PairContext, min_speed=GAP_TIME_MIN_SPEED):
    """Difference of predicted arrival times at the paths' conflict point."""
    if not ctx.crossing:
        return None
    v_a = ctx.a.speed
    v_b = ctx.b.speed
    if v_a <= min_speed or v_b <= min_speed:
        return None
    return abs(ctx.d_self / v_a - ctx.d_other / v_b)


@dataclass(frozen=True)
class MetricStats:
    worst: float
    mean_of_extrema: float
    defined_frames: int


@dataclass(frozen=True)
class MetricPlugin:
    """Frame-level metric provider (e.g. a traffic-quality model)."""

    fn: object  # callable(frame, contexts) -> float | None
    max_is_worst: bool = True


class MetricEngine:
    """Computes pair contexts, per-frame extrema, and scenario fingerprints.

    Paths for leader detection and conflict points are the straightest
    continuation of each participant's matched lane, cached per lane;
    off-map participants contribute to distance and WTTC only.
    """

    def __init__(self, map_graph, clearance=5.0, pttc_decel=DEFAULT_PTTC_DECEL,
                 wttc_accel=DEFAULT_WTTC_ACCEL, route_horizon=150.0,
                 match_distance=10.0, plugins=None):
        self.map_graph = map_graph
        self.clearance = clearance
        self.pttc_decel = pttc_decel
        self.wttc_accel = wttc_accel
        self.route_horizon = route_horizon
        self.match_distance = match_distance
        self.plugins = dict(plugins or {})
        self._path_cache = {}
        self._isect_cache = {}

    @property
    def metric_names(self):
        return tuple(DEFAULT_METRICS) + tuple(sorted(self.plugins))

    def _max_is_worst(self, metric) -> bool:
        if metric in self.plugins:
            return self.plugins[metric].max_is_worst
        return metric in MAX_IS_WORST

    def _participant_path(self, state):
        """Path of the matched lane's straightest continuation, or None.

        Route choice is canonicalized on the lane (start pose of the matched
        lane) so the cache stays valid for every pose on it.
        """
        if self.map_graph is None:
            return None
        try:
            lane_id, _, _ = match_to_lane(self.map_graph, state.x, state.y,
                                          state.yaw, max_distance=self.match_distance)
        except OffMapError:
            return None
        if lane_id in self._path_cache:
            return self._path_cache[lane_id]
        lane = self.map_graph.lane(lane_id)
        pose = (lane.polyline.xs[0], lane.polyline.ys[0], lane.polyline.tangent_at(0.0))
        path = path_for_pose(self.map_graph, pose[0], pose[1], pose[2],
                             horizon=self.route_horizon,
                             max_distance=self.match_distance, seed_pose=pose)
        self._path_cache[lane_id] = path
        return path

    def _conflict(self, path_a, path_b):
        key = (path_a.source_route, path_b.source_route)
        if key in self._isect_cache:
            return self._isect_cache[key]
        hit = path_intersection(path_a, path_b)
        self._isect_cache[key] = hit
        return hit

    def pair_contexts(self, frame):
        """All ordered pair contexts of a frame."""
        info = []
        for state in frame.states:
            path = self._participant_path(state)
            station = None
            if path is not None and path.polyline is not None:
                station, _ = path.project(state.x, state.y)
            info.append((state, path, station))
        contexts = []
        for a, path_a, st_a in info:
            for b, path_b, st_b in info:
                if a.track_id == b.track_id:
                    continue
                s_net = delta_v = d_self = d_other = None
                if path_a is not None and st_a is not None:
                    station_b, lateral_b = path_a.project(b.x, b.y)
                    if abs(lateral_b) <= self.clearance and station_b > st_a:
                        s_net = max(station_b - st_a - 0.5 * (a.length + b.length),
                                    0.01)
                        delta_v = a.speed - b.speed
                    if (path_b is not None and st_b is not None
                            and path_a.source_route != path_b.source_route):
                        hit = self._conflict(path_a, path_b)
                        if hit is not None:
                            _, sa, sb = hit
                            if sa - st_a > 1e-9 and sb - st_b > 1e-9:
                                d_self = sa - st_a
                                d_other = sb - st_b
                contexts.append(PairContext(a, b, s_net, delta_v, d_self, d_other))
        return contexts

    def pair_values(self, ctx: PairContext):
        """All metric values for one ordered pair (None where undefined)."""
        return {
            "distance": metric_distance(ctx.a, ctx.b),
            "gap_time": metric_gap_time(ctx),
            "inv_ttc": metric_inverse_ttc(ctx),
            "pttc": metric_pttc(ctx, self.pttc_decel),
            "wttc": metric_wttc(ctx, self.wttc_accel),
        }

    def frame_extrema(self, frame, contexts=None):
        """Worst value per metric over the frame's defined pairs."""
        if contexts is None:
            contexts = self.pair_contexts(frame)
        extrema = {}
        for ctx in contexts:
            for metric, value in self.pair_values(ctx).items():
                if value is None:
                    continue
                cur = extrema.get(metric)
                if cur is None:
                    extrema[metric] = value
                elif self._max_is_worst(metric):
                    extrema[metric] = max(cur, value)
                else:
                    extrema[metric] = min(cur, value)
        for name, plugin in self.plugins.items():
            value = plugin.fn(frame, contexts)
            if value is not None:
                extrema[name] = value
        return extrema

    def aggregate(self, log):
        """Per-scenario fingerprint: worst and mean-of-extrema per metric.

        Metrics with no defined frame are absent from the result.
        """
        per_metric = {}
        for frame in log.frames:
            for metric, value in self.frame_extrema(frame).items():
                per_metric.setdefault(metric, []).append(value)
        vector = {}
        for metric, values in per_metric.items():
            worst = max(values) if self._max_is_worst(metric) else min(values)
            vector[metric] = MetricStats(worst, sum(values) / len(values), len(values))
        return vector


def write_metric_table(path, rows, metrics=DEFAULT_METRICS) -> None:
    """Write one row per child-scenario: run identity plus the fingerprint.

    `rows` is a list of (run_index, run_seed, vector) with vector a dict
    metric -> MetricStats; undefined metrics serialize as empty fields.
    """
    header = ["run_index", "run_seed"]
    for m in metrics:
        header += [f"{m}_worst", f"{m}_mean", f"{m}_defined_frames"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for run_index, run_seed, vector in rows:
            row = [run_index, run_seed]
            for m in metrics:
                stats = vector.get(m)
                if stats is None:
                    row += ["", "", "0"]
                else:
                    row += [repr(stats.worst), repr(stats.mean_of_extrema),
                            str(stats.defined_frames)]
            writer.writerow(row)


def read_metric_table(path):
    """Read a metric table; returns (metric names, rows)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty metric table") from None
        if header[:2] != ["run_index", "run_seed"]:
            raise SchemaError(f"{path}: not a metric table")
        metrics = []
        for i in range(2, len(header), 3):
            name = header[i]
            if not name.endswith("_worst"):
                raise SchemaError(f"{path}: unexpected column {name!r}")
            metrics.append(name[: -len("_worst")])
        rows = []
        for row in reader:
            vector = {}
            for k, m in enumerate(metrics):
                worst, mean, frames = row[2 + 3 * k: 5 + 3 * k]
                if worst != "":
                    vector[m] = MetricStats(float(worst), float(mean), int(frames))
            rows.append((int(row[0]), int(row[1]), vector))
    return metrics, rows
