"""Closed-loop child-scenario execution.

A run assigns one behavior model per participant, replans every
`replan_interval` steps from an identical frozen world view, advances all
participants along their cached trajectories at 10 Hz, and logs every frame.
Batches derive per-child seeds from the batch seed so results are
independent of scheduling and worker count.
"""
from __future__ import annotations

import hashlib
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .behavior import (
    IDM_KINDS,
    ModelSpec,
    Trajectory,
    WorldView,
    plan_path_follow,
    plan_replay,
    profile_params,
)
from .errors import ChildRunError, EnumerationCapError, ScenexError
from .map_model import match_to_lane, path_for_pose
from .scene_io import FRAME_PERIOD_MS, SceneFrame, ScenarioLog, SeedScene

DEFAULT_N_RUNS = 385
DEFAULT_ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class SimConfig:
    horizon_steps: int = 30
    replan_interval: int = 5
    dt: float = 0.1
    rng_seed: int = 0
    history_len: int = 10
    route_horizon: float = 150.0
    match_distance: float = 10.0
    leader_clearance: float = 5.0
    default_v0: float = 10.0
    min_initial_v0: float = 0.5

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if not 1 <= self.replan_interval <= self.horizon_steps:
            raise ValueError("replan_interval must be in 1..horizon_steps")
        if self.dt != 0.1:
            raise ValueError("the frame period is fixed at 0.1 s")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")


@dataclass(frozen=True)
class Assignment:
    """Participant -> model mapping plus how it was drawn."""

    mapping: dict
    origin: tuple  # ("sampled", run_seed) | ("enumerated", index)

    @property
    def run_seed(self) -> int:
        return int(self.origin[1])

    def kinds(self):
        return {tid: spec.kind for tid, spec in sorted(self.mapping.items())}


def _unit_interval(run_seed, track_id) -> float:
    digest = hashlib.sha256(f"{run_seed}|{track_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def assign_models(seed: SeedScene, roster, run_seed) -> Assignment:
    """Draw one roster entry per participant, weighted, deterministically.

    The draw for each track depends only on (run_seed, track_id), so the
    result is independent of iteration order and scheduling.
    """
    if not roster:
        raise ValueError("roster must be non-empty")
    total = sum(spec.weight for spec in roster)
    mapping = {}
    for tid in seed.track_ids:
        u = _unit_interval(run_seed, tid) * total
        acc = 0.0
        chosen = roster[-1]
        for spec in roster:
            acc += spec.weight
            if u < acc:
                chosen = spec
                break
        mapping[tid] = chosen
    return Assignment(mapping, ("sampled", run_seed))


def enumeration_count(seed: SeedScene, roster) -> int:
    return len(roster) ** len(seed.track_ids)


def enumerate_assignments(seed: SeedScene, roster, cap=DEFAULT_ENUMERATION_CAP):
    """Mixed-radix enumeration over participants sorted by track id."""
    ids = seed.track_ids
    base = len(roster)
    total = base ** len(ids)
    if total > cap:
        raise EnumerationCapError(
            f"{total} assignments exceed the cap of {cap}; "
            "use sampled runs (cmd_simulate) instead"
        )
    for index in range(total):
        mapping = {}
        rem = index
        for tid in reversed(ids):
            mapping[tid] = roster[rem % base]
            rem //= base
        yield Assignment(mapping, ("enumerated", index))


def _resolve_spec(spec: ModelSpec, initial_speed, cfg: SimConfig) -> ModelSpec:
    """Fill profile defaults and the target speed v0 for IDM drivers."""
    if spec.kind not in IDM_KINDS:
        return spec
    params = spec.params or profile_params(spec.kind)
    if params.v0 is None:
        v0 = initial_speed if initial_speed >= cfg.min_initial_v0 else cfg.default_v0
        params = replace(params, v0=v0)
    return replace(spec, params=params.validated())


def _recorded_base_index(recorded, seed: SeedScene) -> int:
    ts = seed.current.timestamp_ms
    for i, fr in enumerate(recorded):
        if fr.timestamp_ms == ts:
            return i
    raise ScenexError("recording does not contain the seed's current timestamp")


def run_child(seed: SeedScene, assignment: Assignment, cfg: SimConfig = SimConfig(),
              recorded=None) -> ScenarioLog:
    """Simulate one child-scenario under a fixed model assignment.

    Replay models follow `recorded` (the full case frames); without a
    recording they hold their seed state. All models plan from the same
    frozen history window; plans are cached for `replan_interval` steps.
    """
    ids = seed.track_ids
    missing = [tid for tid in ids if tid not in assignment.mapping]
    if missing:
        raise ScenexError(f"assignment misses participant(s) {missing}")

    current = seed.current
    resolved = {
        tid: _resolve_spec(assignment.mapping[tid], current.get(tid).speed, cfg)
        for tid in ids
    }
    seed_pose = {
        tid: (current.get(tid).x, current.get(tid).y, current.get(tid).yaw)
        for tid in ids
    }
    rec_frames = tuple(recorded) if recorded is not None else seed.frames
    base_index = _recorded_base_index(rec_frames, seed)

    plan_len = max(30, cfg.replan_interval)
    history = deque(seed.frames[-cfg.history_len:], maxlen=cfg.history_len)
    path_cache = {}
    plans = {}
    plan_step = 0
    ts = current.timestamp_ms
    out = []

    for step in range(cfg.horizon_steps):
        if step % cfg.replan_interval == 0:
            frames = tuple(history)
            for tid in ids:
                spec = resolved[tid]
                view = WorldView(frames, seed.map_graph, tid, plan_len, cfg.dt)
                try:
                    if spec.kind == "replay":
                        traj = plan_replay(view, rec_frames, base_index + step)
                    else:
                        me = frames[-1].get(tid)
                        key = None
                        path = None
                        if seed.map_graph is not None:
                            lane_id, _, _ = match_to_lane(
                                seed.map_graph, me.x, me.y, me.yaw,
                                max_distance=cfg.match_distance,
                            )
                            key = (tid, lane_id)
                            path = path_cache.get(key)
                        if path is None:
                            path = path_for_pose(
                                seed.map_graph, me.x, me.y, me.yaw,
                                selector=spec.route_selector,
                                horizon=cfg.route_horizon,
                                max_distance=cfg.match_distance,
                                seed_pose=seed_pose[tid],
                            )
                            if key is not None:
                                path_cache[key] = path
                        traj = plan_path_follow(view, spec, path,
                                                clearance=cfg.leader_clearance)
                except ScenexError as exc:
                    raise ChildRunError(tid, step, spec.kind, str(exc)) from exc
                plans[tid] = traj
            plan_step = step
        ts += FRAME_PERIOD_MS
        frame = SceneFrame(
            ts, tuple(plans[tid].states[step - plan_step] for tid in ids)
        )
        history.append(frame)
        out.append(frame)
    return ScenarioLog(seed, assignment, tuple(out), assignment.run_seed)


@dataclass(frozen=True)
class ChildResult:
    index: int
    assignment: Assignment
    log: ScenarioLog | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.log is not None


@dataclass(frozen=True)
class BatchResult:
    children: tuple

    @property
    def logs(self):
        return [c.log for c in self.children if c.ok]

    @property
    def failures(self):
        return [c for c in self.children if not c.ok]

    @property
    def n_failed(self) -> int:
        return len(self.failures)


_WORKER_CTX = {}


def _init_worker(seed, cfg, recorded):
    _WORKER_CTX["seed"] = seed
    _WORKER_CTX["cfg"] = cfg
    _WORKER_CTX["recorded"] = recorded


def _run_one(seed, assignment, cfg, recorded, index) -> ChildResult:
    try:
        log = run_child(seed, assignment, cfg, recorded=recorded)
        return ChildResult(index, assignment, log)
    except ScenexError as exc:
        return ChildResult(index, assignment, None, error=str(exc))


def _worker(args):
    index, assignment = args
    return _run_one(_WORKER_CTX["seed"], assignment, _WORKER_CTX["cfg"],
                    _WORKER_CTX["recorded"], index)


def _execute(seed, cfg, recorded, tasks, jobs) -> BatchResult:
    if jobs and jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker,
            initargs=(seed, cfg, recorded),
        ) as pool:
            results = list(pool.map(_worker, tasks, chunksize=64))
    else:
        results = [_run_one(seed, a, cfg, recorded, i) for i, a in tasks]
    results.sort(key=lambda c: c.index)
    return BatchResult(tuple(results))


def run_batch(seed: SeedScene, roster, n_runs=DEFAULT_N_RUNS,
              cfg: SimConfig = SimConfig(), recorded=None, jobs=1) -> BatchResult:
    """Run `n_runs` sampled children; child i uses run seed rng_seed XOR i."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    tasks = [
        (i, assign_models(seed, roster, cfg.rng_seed ^ i)) for i in range(n_runs)
    ]
    return BatchResult(_execute(seed, cfg, recorded, tasks, jobs).children)


def run_enumerated(seed: SeedScene, roster, cfg: SimConfig = SimConfig(),
                   recorded=None, jobs=1, cap=DEFAULT_ENUMERATION_CAP) -> BatchResult:
    """Run every possible assignment (|roster| ** participants children)."""
    tasks = list(enumerate(enumerate_assignments(seed, roster, cap=cap)))
    return _execute(seed, cfg, recorded, tasks, jobs)
