"""Lane-graph road map: loading, matching, routing, and path queries.

The canonical map format is a YAML document with a versioned header::

    format: scenex-map
    version: 1
    lanes:
      - id: A
        width: 3.5
        points: [[0.0, 0.0], [100.0, 0.0]]
        successors: [B]

Coordinates are meters in a local Cartesian frame. Conversion from
third-party HD-map formats attaches at ``load_map`` (write a converter that
emits this format).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import yaml

from .errors import GeometryError, MapFormatError, OffMapError, RouteSelectionError
from .geometry import Polyline, segment_intersection, wrap_angle

MAP_FORMAT = "scenex-map"
MAP_VERSION = 1
DEFAULT_LANE_WIDTH = 3.5
DEFAULT_ROUTE_HORIZON = 150.0
DEFAULT_MATCH_DISTANCE = 10.0


@dataclass(frozen=True)
class Lane:
    lane_id: str
    polyline: Polyline
    width: float
    successors: tuple


@dataclass(frozen=True)
class Route:
    """An ordered lane sequence; `exit_angle` is set by `select_route`."""

    lane_ids: tuple
    entry_station: float = 0.0
    exit_angle: float | None = None


class Path:
    """Arc-length-parametrized centerline derived from a route.

    A zero-length path (entry station at the end of an exhausted route) has
    `polyline` None and length 0.
    """

    __slots__ = ("polyline", "source_route", "exhausted")

    def __init__(self, polyline, source_route=(), exhausted=False):
        self.polyline = polyline
        self.source_route = tuple(source_route)
        self.exhausted = exhausted

    @property
    def length(self) -> float:
        return 0.0 if self.polyline is None else self.polyline.length

    @property
    def points(self):
        return [] if self.polyline is None else self.polyline.points

    @property
    def cumulative_station(self):
        return [] if self.polyline is None else list(self.polyline.cum)

    def project(self, x, y):
        if self.polyline is None:
            raise GeometryError("cannot project onto a zero-length path")
        station, lateral, _ = self.polyline.project(x, y)
        return station, lateral

    def point_at(self, station, extrapolate=True):
        if self.polyline is None:
            raise GeometryError("zero-length path has no points")
        return self.polyline.point_at(station, extrapolate=extrapolate)

    def tangent_at(self, station):
        if self.polyline is None:
            raise GeometryError("zero-length path has no tangent")
        return self.polyline.tangent_at(station)


class MapGraph:
    """Immutable lane graph; all queries are read-only."""

    def __init__(self, lanes):
        self._lanes = {}
        for lane in lanes:
            if lane.lane_id in self._lanes:
                raise MapFormatError(f"duplicate lane id {lane.lane_id!r}")
            if lane.width <= 0.0:
                raise MapFormatError(f"lane {lane.lane_id!r}: width must be > 0")
            self._lanes[lane.lane_id] = lane
        for lane in self._lanes.values():
            for succ in lane.successors:
                if succ not in self._lanes:
                    raise MapFormatError(
                        f"lane {lane.lane_id!r}: dangling successor {succ!r}"
                    )

    @property
    def lanes(self):
        return dict(self._lanes)

    @property
    def lane_ids(self):
        return sorted(self._lanes)

    def lane(self, lane_id) -> Lane:
        try:
            return self._lanes[lane_id]
        except KeyError:
            raise MapFormatError(f"unknown lane id {lane_id!r}") from None

    def __len__(self):
        return len(self._lanes)


def _lane_from_record(rec, index):
    if not isinstance(rec, dict):
        raise MapFormatError(f"lanes[{index}]: expected a mapping")
    try:
        lane_id = str(rec["id"])
        points = rec["points"]
    except KeyError as exc:
        raise MapFormatError(f"lanes[{index}]: missing field {exc.args[0]!r}") from None
    width = float(rec.get("width", DEFAULT_LANE_WIDTH))
    successors = tuple(str(s) for s in rec.get("successors", []))
    try:
        polyline = Polyline(points)
    except (GeometryError, TypeError, ValueError) as exc:
        raise MapFormatError(f"lane {lane_id!r}: bad centerline: {exc}") from exc
    return Lane(lane_id, polyline, width, successors)


def load_map(path) -> MapGraph:
    """Load a lane-graph map from the canonical YAML format."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise MapFormatError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise MapFormatError(f"{path}: expected a mapping at top level")
    if doc.get("format") != MAP_FORMAT:
        raise MapFormatError(f"{path}: field 'format' must be {MAP_FORMAT!r}")
    if doc.get("version") != MAP_VERSION:
        raise MapFormatError(f"{path}: unsupported map version {doc.get('version')!r}")
    lanes_rec = doc.get("lanes")
    if not isinstance(lanes_rec, list) or not lanes_rec:
        raise MapFormatError(f"{path}: field 'lanes' must be a non-empty list")
    return MapGraph([_lane_from_record(rec, i) for i, rec in enumerate(lanes_rec)])


def save_map(graph: MapGraph, path) -> None:
    doc = {
        "format": MAP_FORMAT,
        "version": MAP_VERSION,
        "lanes": [
            {
                "id": lane.lane_id,
                "width": lane.width,
                "points": [[x, y] for x, y in lane.polyline.points],
                "successors": list(lane.successors),
            }
            for lane in (graph.lane(lid) for lid in graph.lane_ids)
        ],
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def match_to_lane(graph: MapGraph, x, y, yaw, max_distance=DEFAULT_MATCH_DISTANCE):
    """Match a pose to the lane minimizing |lateral offset|.

    Only lanes whose tangent at the matched station differs from `yaw` by
    less than 90 degrees are candidates. Raises OffMapError when no lane is
    within `max_distance`.
    """
    if len(graph) == 0:
        raise OffMapError("map has no lanes")
    best = None
    for lane_id in graph.lane_ids:
        lane = graph.lane(lane_id)
        station, lateral, dist = lane.polyline.project(x, y)
        if dist > max_distance:
            continue
        if abs(wrap_angle(lane.polyline.tangent_at(station) - yaw)) >= math.pi / 2:
            continue
        key = (abs(lateral), lane_id)
        if best is None or key < best[0]:
            best = (key, lane_id, station, lateral)
    if best is None:
        raise OffMapError(
            f"pose ({x:.2f}, {y:.2f}, yaw {yaw:.2f}) is off-map "
            f"(no lane within {max_distance} m)"
        )
    return best[1], best[2], best[3]


def enumerate_routes(graph, start, start_station=0.0, horizon=DEFAULT_ROUTE_HORIZON):
    """Depth-limited forward traversal of the successor relation.

    Each route either reaches `horizon` meters measured from `start_station`
    or ends at a lane with no unvisited successors (truncated). Lanes are
    never revisited within one route, which bounds traversal through cycles.
    Output is sorted lexicographically by lane id sequence.
    """
    start_lane = graph.lane(start)
    routes = []

    def dfs(lane, acc_len, seq):
        first = len(seq) == 0
        seq = seq + [lane.lane_id]
        length = lane.polyline.length - (start_station if first else 0.0)
        total = acc_len + max(length, 0.0)
        nxt = [s for s in sorted(lane.successors) if s not in seq]
        if total >= horizon or not nxt:
            routes.append(Route(tuple(seq), entry_station=start_station))
            return
        for succ in nxt:
            dfs(graph.lane(succ), total, seq)

    dfs(start_lane, 0.0, [])
    routes.sort(key=lambda r: r.lane_ids)
    return routes


def select_route(graph, routes, seed_pose, selector="straightest"):
    """Pick a route by the signed chord angle in the seed vehicle frame.

    Each route's exit angle is the bearing of (route end - route start)
    expressed relative to the seed pose's yaw. Routes are sorted by signed
    angle ascending; an integer selector indexes that order, the default
    "straightest" picks the minimal |angle|. Ties break on the
    lexicographically smaller lane id sequence.
    """
    if not routes:
        raise RouteSelectionError("no routes to select from")
    _, _, yaw = seed_pose
    annotated = []
    for route in routes:
        first = graph.lane(route.lane_ids[0]).polyline
        sx, sy = first.point_at(route.entry_station)
        last = graph.lane(route.lane_ids[-1]).polyline
        ex, ey = last.xs[-1], last.ys[-1]
        if math.hypot(ex - sx, ey - sy) < 1e-9:
            angle = 0.0
        else:
            angle = wrap_angle(math.atan2(ey - sy, ex - sx) - yaw)
        annotated.append(replace(route, exit_angle=angle))
    annotated.sort(key=lambda r: (r.exit_angle, r.lane_ids))
    if selector == "straightest":
        return min(annotated, key=lambda r: (abs(r.exit_angle), r.lane_ids))
    try:
        index = int(selector)
    except (TypeError, ValueError):
        raise RouteSelectionError(f"bad route selector {selector!r}") from None
    if not 0 <= index < len(annotated):
        raise RouteSelectionError(
            f"route selector index {index} out of range (have {len(annotated)} routes)"
        )
    return annotated[index]


def route_centerline(graph, route, entry_station=None, horizon=None) -> Path:
    """Concatenated lane centerlines from `entry_station` onward.

    Duplicate junction points are removed and stations are recomputed from 0.
    The path is flagged exhausted when it is shorter than `horizon` (or
    empty).
    """
    entry = route.entry_station if entry_station is None else entry_station
    pts = []

    def push(x, y):
        if pts and math.hypot(x - pts[-1][0], y - pts[-1][1]) < 1e-9:
            return
        pts.append((x, y))

    for k, lane_id in enumerate(route.lane_ids):
        pl = graph.lane(lane_id).polyline
        if k == 0 and entry > 0.0:
            if entry >= pl.length - 1e-12:
                continue
            push(*pl.point_at(entry))
            for i, s in enumerate(pl.cum):
                if s > entry + 1e-12:
                    push(pl.xs[i], pl.ys[i])
        else:
            for x, y in zip(pl.xs, pl.ys):
                push(x, y)

    if len(pts) < 2:
        return Path(None, route.lane_ids, exhausted=True)
    polyline = Polyline(pts)
    exhausted = horizon is not None and polyline.length < horizon
    return Path(polyline, route.lane_ids, exhausted=exhausted)


def project_onto_path(path: Path, point):
    """Station and signed lateral offset of the closest path point."""
    return path.project(point[0], point[1])


def path_intersection(a: Path, b: Path):
    """First crossing of two paths in increasing station order on `a`.

    Returns ((x, y), station_a, station_b) or None. Collinear overlap is not
    a crossing.
    """
    if a.polyline is None or b.polyline is None:
        return None
    pa, pb = a.polyline, b.polyline
    for i in range(len(pa.cum) - 1):
        best = None
        seg_a = pa.cum[i + 1] - pa.cum[i]
        for j in range(len(pb.cum) - 1):
            hit = segment_intersection(
                pa.xs[i], pa.ys[i], pa.xs[i + 1], pa.ys[i + 1],
                pb.xs[j], pb.ys[j], pb.xs[j + 1], pb.ys[j + 1],
            )
            if hit is None:
                continue
            x, y, t, u = hit
            sa = pa.cum[i] + t * seg_a
            sb = pb.cum[j] + u * (pb.cum[j + 1] - pb.cum[j])
            if best is None or (sa, sb) < (best[1], best[2]):
                best = ((x, y), sa, sb)
        if best is not None:
            return best
    return None


def path_for_pose(graph, x, y, yaw, selector="straightest",
                  horizon=DEFAULT_ROUTE_HORIZON, max_distance=DEFAULT_MATCH_DISTANCE,
                  seed_pose=None):
    """Match a pose, enumerate routes, select one, and build its centerline.

    `seed_pose` defaults to the queried pose; pass the participant's
    seed-scene pose to keep route choice fixed over a whole run.
    """
    lane_id, _, _ = match_to_lane(graph, x, y, yaw, max_distance=max_distance)
    routes = enumerate_routes(graph, lane_id, 0.0, horizon=horizon)
    route = select_route(graph, routes, seed_pose or (x, y, yaw), selector)
    return route_centerline(graph, route, entry_station=0.0, horizon=horizon)
