"""End-to-end acceptance gate.

Each test class pins one externally checkable property of the library:
oracle equivalence for the estimated force gradient, controller reduction
and speed laws, kinematics accuracy, plant-physics invariants, the
behavioural orderings of the three controllers on the fixed reference
suite, the force-weight sweep trend, repetition determinism, window
bookkeeping at the two control rates, and the high-level step compute
budget.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from canopynav import harness as harness_mod
from canopynav.arm import forward_kinematics, jacobian, reference_6r_model, rrmc_step
from canopynav.canopy import BranchSpec, ContactLoad, build_canopy, relax_deformation
from canopynav.controllers import (
    HybridParams,
    RiceParams,
    force_gradient,
    hybrid_step,
    position_step,
    rice_step,
)
from canopynav.harness import run_trial, run_sweep, summarize
from canopynav.scenarios import (
    BLOCKING_NAMES,
    STIFF_NAMES,
    reference_suite,
    repetition_scenarios,
    sweep_scenario,
)
from canopynav.tactile import TactileWindow

from test_canopy import analytic_tip_deflection, vertical_branch
from test_numerics import normal_equations_oracle


def make_window(forces, positions, x_ref=(0, 0, 0), f_ref=None):
    if f_ref is None:
        f_ref = np.zeros(3)
    return TactileWindow(
        forces=np.asarray(forces, dtype=float),
        taxel_positions=np.asarray(positions, dtype=float),
        f_ref=np.asarray(f_ref, dtype=float),
        x_ref=np.asarray(x_ref, dtype=float),
    )


def random_window(rng, s=64):
    positions = rng.normal(size=(s, 3)) * 0.02 + np.array([0.05, 0, 0])
    forces = rng.normal(size=(s, 3))
    return make_window(
        forces, positions,
        x_ref=rng.normal(size=3) * 0.01,
        f_ref=rng.normal(size=3) * 0.1,
    )


class TestCriterion1ForceGradientOracle:
    def test_matches_brute_force_normal_equations(self):
        rng = np.random.default_rng(100)
        windows = [random_window(rng) for _ in range(1000)]
        start = time.perf_counter()
        grads = [force_gradient(w) for w in windows]
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0
        for w, (g, contact) in zip(windows, grads):
            assert contact
            rel = w.taxel_positions - w.x_ref
            d_hat = rel / np.linalg.norm(rel, axis=1)[:, None]
            delta = np.linalg.norm(w.forces, axis=1) - np.linalg.norm(w.f_ref)
            want = normal_equations_oracle(d_hat, delta)
            want /= np.linalg.norm(want)
            assert np.linalg.norm(g - want) / np.linalg.norm(want) < 1e-9


class TestCriterion2ReductionLaw:
    def test_rice_equals_position_without_force_term(self):
        rng = np.random.default_rng(101)
        zero_contact = make_window(
            np.zeros((64, 3)), rng.normal(size=(64, 3)) + np.array([0.05, 0, 0])
        )
        for _ in range(1000):
            x = rng.normal(size=3)
            target = rng.normal(size=3)
            want = position_step(x, target, 0.01).v
            a = rice_step(x, target, zero_contact, RiceParams()).v
            assert np.max(np.abs(a - want)) < 1e-12
            b = rice_step(x, target, random_window(rng), RiceParams(w_f=0.0)).v
            assert np.max(np.abs(b - want)) < 1e-12


class TestCriterion3VelocityNorm:
    def test_all_controllers_command_alpha_speed(self):
        rng = np.random.default_rng(102)
        alpha = 0.01
        admittance_v = 0.0
        for _ in range(300):
            x = rng.normal(size=3)
            target = rng.normal(size=3)
            w = random_window(rng)
            cmd = rice_step(x, target, w, RiceParams(alpha=alpha))
            n = float(np.linalg.norm(cmd.v))
            assert n == 0.0 or abs(n - alpha) < 1e-9

            cmd = position_step(x, target, alpha)
            assert abs(np.linalg.norm(cmd.v) - alpha) < 1e-9

            # hybrid straight pursuit: no contact force present
            cmd, admittance_v = hybrid_step(
                x, target, 0.0, admittance_v, HybridParams(alpha=alpha), 0.02
            )
            assert abs(np.linalg.norm(cmd.v) - alpha) < 1e-9


class TestCriterion4Kinematics:
    def test_jacobian_matches_central_differences(self):
        model = reference_6r_model()
        rng = np.random.default_rng(103)
        h = 1e-6
        for _ in range(100):
            q = rng.uniform(-np.pi, np.pi, size=6)
            j = jacobian(model, q)
            fd = np.empty_like(j)
            for col in range(6):
                dq = np.zeros(6)
                dq[col] = h
                p_plus, _ = forward_kinematics(model, q + dq)
                p_minus, _ = forward_kinematics(model, q - dq)
                fd[:, col] = (p_plus - p_minus) / (2 * h)
            assert np.max(np.abs(j - fd)) < 1e-6

    def test_closed_loop_reaches_random_targets(self):
        model = reference_6r_model()
        rng = np.random.default_rng(104)
        for _ in range(20):
            q = rng.uniform(-1.2, 1.2, size=6)
            q_goal = q + rng.uniform(-0.4, 0.4, size=6)
            target, _ = forward_kinematics(model, q_goal)
            for _ in range(5000):
                p, _ = forward_kinematics(model, q)
                if np.linalg.norm(p - target) <= 0.005:
                    break
                cmd = position_step(p, target, alpha=0.01)
                q = rrmc_step(model, q, cmd.v, 0.01).q
            p, _ = forward_kinematics(model, q)
            assert np.linalg.norm(p - target) <= 0.005


class TestCriterion5PlantPhysics:
    def test_energy_non_increase_random_loads(self):
        rng = np.random.default_rng(105)
        for _ in range(100):
            spec = vertical_branch(dimension=float(rng.choice([0.005, 0.010, 0.012])))
            state = build_canopy([spec])
            loads = []
            for _ in range(int(rng.integers(1, 4))):
                link = int(rng.integers(0, spec.particle_count - 1))
                t = float(rng.uniform())
                point = (
                    state.particle_positions(0)[link]
                    + t * np.array([0, 0, spec.link_length()])
                )
                loads.append(ContactLoad(0, link, point, rng.normal(size=3) * 0.5))
            _, energies = relax_deformation(state, loads, return_energies=True)
            assert np.all(np.diff(energies) <= 1e-12)

    def test_breakage_latches_and_shape_persists(self):
        spec = vertical_branch(dimension=0.005, break_angle=0.15)
        state = build_canopy([spec])
        tip = state.tip_positions()[0]
        big = ContactLoad(0, spec.particle_count - 2, tip, np.array([5.0, 0.0, 0.0]))
        bent = relax_deformation(state, [big])
        assert bent.broken[0]
        after = relax_deformation(bent, [])
        assert after.broken[0]
        assert np.array_equal(after.theta, bent.theta)
        assert np.allclose(after.tip_positions(), bent.tip_positions())

    def test_zero_load_restoration(self):
        spec = vertical_branch()
        state = build_canopy([spec])
        tip = state.tip_positions()[0]
        load = ContactLoad(0, spec.particle_count - 2, tip, np.array([0.3, 0.0, 0.0]))
        state = relax_deformation(state, [load])
        rest_tip = state.static.rest_tip(0)
        assert np.linalg.norm(state.tip_positions()[0] - rest_tip) > 1e-4
        for _ in range(20):
            state = relax_deformation(state, [])
            if np.linalg.norm(state.tip_positions()[0] - rest_tip) < 1e-4:
                break
        assert np.linalg.norm(state.tip_positions()[0] - rest_tip) < 1e-4
        assert not state.broken[0]

    def test_tip_deflection_matches_analytic_chain(self):
        spec = vertical_branch()
        state = build_canopy([spec])
        force = 0.05
        tip = state.tip_positions()[0]
        load = ContactLoad(0, spec.particle_count - 2, tip, np.array([force, 0.0, 0.0]))
        for _ in range(10):
            state = relax_deformation(state, [load])
        deflection = state.tip_positions()[0][0]
        expect = analytic_tip_deflection(spec, force)
        assert abs(deflection - expect) < 0.10 * expect


@pytest.fixture(scope="module")
def suite_results():
    start = time.perf_counter()
    results = {}
    for controller in ("rice", "position", "hybrid"):
        trials = [
            run_trial(replace(s, controller=controller))
            for s in reference_suite()
        ]
        results[controller] = {t.scenario_name: t for t in trials}
    results["elapsed"] = time.perf_counter() - start
    return results


class TestCriterion6ReferenceSuiteOrderings:
    def test_runtime_budget(self, suite_results):
        assert suite_results["elapsed"] < 60.0

    def test_rice_no_break_reach_rate_is_one(self, suite_results):
        trials = list(suite_results["rice"].values())
        summary = summarize(trials)
        assert summary.no_break_reach_rate == 1.0
        for t in trials:
            assert t.reached
            assert t.broken_branch_count == 0

    def test_position_reaches_but_breaks_stiff_branches(self, suite_results):
        for name, t in suite_results["position"].items():
            assert t.reached, name
            if name in STIFF_NAMES:
                assert t.broken_branch_count >= 1, name

    def test_hybrid_stalls_on_blocking_scenarios(self, suite_results):
        stalled = [
            name
            for name in BLOCKING_NAMES
            if not suite_results["hybrid"][name].reached
        ]
        assert 2 * len(stalled) >= len(BLOCKING_NAMES)


class TestCriterion7ForceWeightSweep:
    def test_high_weight_disturbs_less_than_low_weight(self):
        base = sweep_scenario()
        results = dict(run_sweep(base, [0.2, 1.0, 2.0, 3.0]))
        best_high = min(results[wf].median_disturbance for wf in (1.0, 2.0, 3.0))
        assert best_high < results[0.2].median_disturbance

    def test_zero_weight_is_trajectory_identical_to_position(self):
        base = sweep_scenario()
        (_, zero_summary), = run_sweep(base, [0.0])
        rice_traj = zero_summary.trials[0].trajectory
        pos_traj = run_trial(replace(base, controller="position")).trajectory
        assert np.array_equal(rice_traj.position, pos_traj.position)
        assert np.array_equal(rice_traj.velocity, pos_traj.velocity)
        assert np.array_equal(rice_traj.tip_positions, pos_traj.tip_positions)
        assert rice_traj.stop_reason == pos_traj.stop_reason


class TestCriterion8RepetitionDeterminism:
    def test_25_repeats_identical_and_clean(self):
        for scenario in repetition_scenarios():
            repeats = [run_trial(scenario) for _ in range(25)]
            summary = summarize(repeats)
            assert summary.no_break_reach_rate == 1.0
            first = repeats[0]
            for other in repeats[1:]:
                assert other.reached == first.reached
                assert other.stop_reason == first.stop_reason
                assert other.broken_branch_count == first.broken_branch_count
                assert other.total_disturbance == first.total_disturbance
                assert other.final_target_deviation == first.final_target_deviation
                assert np.array_equal(
                    other.trajectory.position, first.trajectory.position
                )
                assert np.array_equal(
                    other.trajectory.velocity, first.trajectory.velocity
                )
                assert np.array_equal(
                    other.trajectory.tip_positions, first.trajectory.tip_positions
                )


class TestCriterion9WindowBookkeeping:
    def test_two_frames_of_32_taxels_per_high_level_step(self, monkeypatch):
        scenario = replace(repetition_scenarios()[1], max_duration=2.0)
        assert scenario.f_high == 50.0
        assert scenario.f_low == 100.0
        assert scenario.frames_per_window == 2
        assert scenario.sensor.taxel_count == 32

        observed = []
        real = harness_mod.aggregate_window

        def spy(frames, ee_ref_position):
            window = real(frames, ee_ref_position)
            observed.append((len(frames), [f.forces.shape for f in frames], window))
            return window

        monkeypatch.setattr(harness_mod, "aggregate_window", spy)
        result = run_trial(scenario)

        assert len(observed) >= 10
        for n_frames, shapes, window in observed:
            assert n_frames == 2
            assert shapes == [(32, 3), (32, 3)]
            assert window.forces.shape == (64, 3)
            assert window.taxel_positions.shape == (64, 3)
        # one window consumed per high-level step, j low-level rows each
        assert result.trajectory.t.shape[0] == 2 * len(observed)


class TestCriterion10StepBudget:
    def test_rice_step_median_under_2ms(self):
        rng = np.random.default_rng(106)
        windows = [random_window(rng) for _ in range(1000)]
        params = RiceParams()
        times = []
        for w in windows:
            x = rng.normal(size=3)
            target = rng.normal(size=3)
            start = time.perf_counter()
            rice_step(x, target, w, params)
            times.append(time.perf_counter() - start)
        assert float(np.median(times)) < 0.002
