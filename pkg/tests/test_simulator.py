import math

import pytest

from scenex import simulator
from scenex.behavior import ModelSpec
from scenex.errors import EnumerationCapError, ScenexError
from scenex.scene_io import extract_seed, synth_scene
from scenex.simulator import (
    SimConfig,
    assign_models,
    enumerate_assignments,
    enumeration_count,
    run_batch,
    run_child,
    run_enumerated,
)


def replay_case(n_tracks=2, n_frames=50):
    from tests.test_scene_io import make_case

    return make_case(n_tracks=n_tracks, n_frames=n_frames)


class TestSimConfig:
    def test_defaults(self):
        cfg = SimConfig()
        assert cfg.horizon_steps == 30
        assert cfg.replan_interval == 5
        assert cfg.dt == 0.1

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SimConfig(replan_interval=0)
        with pytest.raises(ValueError):
            SimConfig(replan_interval=31)
        with pytest.raises(ValueError):
            SimConfig(dt=0.05)
        with pytest.raises(ValueError):
            SimConfig(horizon_steps=0)


class TestAssignModels:
    def test_single_model_roster(self, following_scene):
        _, seed = following_scene
        a = assign_models(seed, [ModelSpec("constant_velocity")], 0)
        assert set(a.kinds().values()) == {"constant_velocity"}

    def test_same_seed_same_assignment(self, following_scene, roster6):
        _, seed = following_scene
        a = assign_models(seed, roster6, 42)
        b = assign_models(seed, roster6, 42)
        assert a.kinds() == b.kinds()

    def test_draw_depends_only_on_seed_and_track(self, roster6):
        _, two = synth_scene("car_following", {"n_vehicles": 2})
        _, four = synth_scene("car_following", {"n_vehicles": 4})
        a = assign_models(two, roster6, 7).kinds()
        b = assign_models(four, roster6, 7).kinds()
        assert all(b[tid] == kind for tid, kind in a.items())

    def test_equal_weights_uniform(self, following_scene, roster6):
        # 6000 draws over 6 slots; chi-square bound at ~5 sigma for 5 dof
        _, seed = following_scene
        counts = dict.fromkeys(range(len(roster6)), 0)
        index = {id(spec): i for i, spec in enumerate(roster6)}
        for run_seed in range(3000):
            for spec in assign_models(seed, roster6, run_seed).mapping.values():
                counts[index[id(spec)]] += 1
        expected = 6000 / 6
        chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
        assert chi2 < 40.0

    def test_weighted_draws(self, following_scene):
        _, seed = following_scene
        roster = [ModelSpec("standard", weight=1.0),
                  ModelSpec("constant_velocity", weight=3.0)]
        n_cv = sum(
            spec.kind == "constant_velocity"
            for run_seed in range(2000)
            for spec in assign_models(seed, roster, run_seed).mapping.values()
        )
        assert 0.75 == pytest.approx(n_cv / 4000, abs=0.03)


class TestEnumeration:
    def test_count(self, following_scene, roster6):
        _, seed = following_scene
        assert enumeration_count(seed, roster6) == 36
        _, five = synth_scene("car_following", {"n_vehicles": 5})
        assert enumeration_count(five, roster6) == 7776

    def test_lexicographic_order(self, following_scene):
        _, seed = following_scene
        roster = [ModelSpec("standard"), ModelSpec("risky")]
        combos = [tuple(a.kinds().values()) for a in enumerate_assignments(seed, roster)]
        assert combos == [
            ("standard", "standard"), ("standard", "risky"),
            ("risky", "standard"), ("risky", "risky"),
        ]
        indices = [a.origin for a in enumerate_assignments(seed, roster)]
        assert indices == [("enumerated", i) for i in range(4)]

    def test_cap_enforced(self, roster6):
        _, seed = synth_scene("car_following", {"n_vehicles": 11, "gap": 30.0})
        assert enumeration_count(seed, roster6) == 6 ** 11
        with pytest.raises(EnumerationCapError):
            next(enumerate_assignments(seed, roster6))


def cv_assignment(seed):
    spec = ModelSpec("constant_velocity")
    return simulator.Assignment({tid: spec for tid in seed.track_ids}, ("sampled", 0))


class TestRunChild:
    def test_constant_velocity_exact(self, following_scene):
        _, seed = following_scene
        log = run_child(seed, cv_assignment(seed))
        assert len(log.frames) == 30
        rear, front = log.frames[-1].states
        assert rear.x == pytest.approx(90.0)
        assert front.x == pytest.approx(110.0)

    def test_timestamps_and_participants(self, following_scene):
        _, seed = following_scene
        log = run_child(seed, cv_assignment(seed))
        ts0 = seed.current.timestamp_ms
        for k, fr in enumerate(log.frames, start=1):
            assert fr.timestamp_ms == ts0 + 100 * k
            assert fr.track_ids == seed.current.track_ids

    def test_missing_assignment_rejected(self, following_scene):
        _, seed = following_scene
        a = simulator.Assignment({1: ModelSpec("constant_velocity")}, ("sampled", 0))
        with pytest.raises(ScenexError, match="misses"):
            run_child(seed, a)

    def test_replay_reproduces_recording(self):
        case = replay_case()
        seed = extract_seed(case, 9)
        spec = ModelSpec("replay")
        a = simulator.Assignment({tid: spec for tid in seed.track_ids}, ("sampled", 0))
        log = run_child(seed, a, recorded=case.frames)
        assert log.frames == case.frames[10:40]

    def test_replan_interval_changes_reactivity(self, following_scene):
        _, seed = following_scene
        follower = ModelSpec("risky")
        leader = ModelSpec("emergency_brake")
        a = simulator.Assignment({1: follower, 2: leader}, ("sampled", 0))
        tight = run_child(seed, a, SimConfig(replan_interval=1))
        loose = run_child(seed, a, SimConfig(replan_interval=30))
        gap_tight = tight.frames[-1].get(2).x - tight.frames[-1].get(1).x
        gap_loose = loose.frames[-1].get(2).x - loose.frames[-1].get(1).x
        # a single stale plan treats the leader as frozen at its seed
        # position, so the follower brakes harder than when replanning
        assert gap_loose > gap_tight + 1.0

    def test_planning_call_count(self, following_scene, monkeypatch):
        _, seed = following_scene
        calls = []
        original = simulator.plan_path_follow

        def counting(view, spec, path, **kw):
            calls.append(view.self_id)
            return original(view, spec, path, **kw)

        monkeypatch.setattr(simulator, "plan_path_follow", counting)
        run_child(seed, cv_assignment(seed), SimConfig(replan_interval=7))
        assert len(calls) == math.ceil(30 / 7) * 2

    def test_plan_horizon_covers_replan_interval(self, following_scene):
        _, seed = following_scene
        log = run_child(seed, cv_assignment(seed),
                        SimConfig(horizon_steps=45, replan_interval=45))
        assert len(log.frames) == 45
        assert log.frames[-1].get(1).x == pytest.approx(105.0)


class TestBatches:
    def test_run_batch_shape_and_order(self, following_scene, roster6):
        graph, seed = following_scene
        batch = run_batch(seed, roster6, n_runs=10)
        assert len(batch.children) == 10
        assert [c.index for c in batch.children] == list(range(10))
        assert batch.n_failed == 0

    def test_run_batch_deterministic(self, following_scene, roster6):
        _, seed = following_scene
        a = run_batch(seed, roster6, n_runs=6)
        b = run_batch(seed, roster6, n_runs=6)
        for ca, cb in zip(a.children, b.children):
            assert ca.log.frames == cb.log.frames

    def test_jobs_do_not_change_results(self, following_scene, roster6):
        _, seed = following_scene
        serial = run_batch(seed, roster6, n_runs=8, jobs=1)
        parallel = run_batch(seed, roster6, n_runs=8, jobs=2)
        for cs, cp in zip(serial.children, parallel.children):
            assert cs.log.frames == cp.log.frames

    def test_child_seeds_are_xor_derived(self, following_scene, roster6):
        _, seed = following_scene
        cfg = SimConfig(rng_seed=12)
        batch = run_batch(seed, roster6, n_runs=3, cfg=cfg)
        assert [c.assignment.run_seed for c in batch.children] == [12, 13, 14]

    def test_single_run_batch(self, following_scene, roster6):
        _, seed = following_scene
        batch = run_batch(seed, roster6, n_runs=1)
        assert len(batch.children) == 1
        assert batch.children[0].log is not None

    def test_run_enumerated_small(self, following_scene):
        _, seed = following_scene
        roster = [ModelSpec("constant_velocity"), ModelSpec("emergency_brake")]
        batch = run_enumerated(seed, roster)
        assert len(batch.children) == 4
        assert batch.n_failed == 0
        finals = {tuple(c.assignment.kinds().values()):
                  c.log.frames[-1].get(1).x for c in batch.children}
        # the rear vehicle's outcome depends only on its own model here
        assert finals[("constant_velocity", "constant_velocity")] == pytest.approx(90.0)
        assert finals[("emergency_brake", "constant_velocity")] == pytest.approx(70.0)
