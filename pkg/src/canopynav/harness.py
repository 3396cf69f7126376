"""Trial execution: the two-rate control loop, stop conditions and metrics.

A trial advances the end effector (point mass or 6R arm) at the low-level
rate while the plant relaxes under the tactile reaction loads; every j
low-level steps the aggregated tactile window feeds the selected high-level
controller, which produces the next velocity command.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import arm as arm_mod
from .canopy import build_canopy, total_disturbance
from .controllers import HybridParams, RiceParams, hybrid_step, position_step, rice_step
from .tactile import (
    SensorGeometry,
    TactileFrame,
    aggregate_window,
    sample_tactile,
    taxel_world_positions,
)

CONTROLLERS = ("rice", "position", "hybrid")
STOP_REASONS = ("target", "stall", "timeout", "breakage", "geometry_violation")


@dataclass(frozen=True)
class KeepOutBox:
    """Axis-aligned volume the EE must not enter (mounting frame, etc.)."""

    lo: tuple
    hi: tuple

    def contains(self, p):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return bool(np.all(p >= lo) and np.all(p <= hi))


@dataclass(frozen=True)
class Scenario:
    canopy: tuple                      # BranchSpec list
    x_target: tuple
    controller: str = "rice"
    controller_params: object = None   # RiceParams / HybridParams / None
    alpha: float = 0.01                # used by the position controller
    mode: str = "point_mass"           # or "arm"
    initial_position: tuple = (0.0, 0.0, 0.0)
    initial_joint_state: tuple = ()
    arm_model: object = None
    sensor: SensorGeometry = field(default_factory=SensorGeometry)
    f_high: float = 50.0
    f_low: float = 100.0
    max_duration: float = 120.0
    target_tolerance: float = 0.005
    stall_window: int = 100            # high-level steps
    stall_eps: float = 0.001           # metres
    stop_on_breakage: bool = False
    keep_out: tuple = ()
    relax_iterations: int = 50
    relax_step_gain: float = 0.5
    seed: int = 0
    name: str = ""

    def validate(self):
        if self.controller not in CONTROLLERS:
            raise ValueError("unknown controller %r" % (self.controller,))
        if self.f_high <= 0 or self.f_low <= 0:
            raise ValueError("rates must be positive")
        ratio = self.f_low / self.f_high
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("f_low / f_high must be a positive integer")
        if self.max_duration <= 0:
            raise ValueError("max_duration must be positive")
        if self.mode not in ("point_mass", "arm"):
            raise ValueError("mode must be 'point_mass' or 'arm'")
        if self.mode == "arm" and self.arm_model is None:
            raise ValueError("arm mode needs an arm_model")

    @property
    def frames_per_window(self):
        return int(round(self.f_low / self.f_high))

    def resolved_params(self):
        if self.controller_params is not None:
            return self.controller_params
        if self.controller == "rice":
            return RiceParams(alpha=self.alpha)
        if self.controller == "hybrid":
            return HybridParams(alpha=self.alpha)
        return None


@dataclass
class Trajectory:
    """Per-low-level-step log; arrays share the leading step dimension."""

    t: np.ndarray              # (n,)
    position: np.ndarray       # (n, 3) EE position
    velocity: np.ndarray       # (n, 3) commanded velocity
    tip_positions: np.ndarray  # (n, B, 3)
    broken: np.ndarray         # (n, B) bool
    stop_reason: str


@dataclass
class TrialResult:
    reached: bool
    stop_reason: str
    broken_branch_count: int
    per_branch_max_deviation: np.ndarray
    total_disturbance: float
    final_target_deviation: float
    trajectory: Trajectory
    scenario_name: str = ""
    seed: int = 0


@dataclass
class SuiteSummary:
    trials: list
    median_disturbance: float
    median_target_deviation: float
    no_break_reach_rate: float


def run_trial(scenario):
    """Run one deterministic trial to its stop condition."""
    scenario.validate()
    canopy = build_canopy(scenario.canopy, seed=scenario.seed)
    geom = scenario.sensor
    params = scenario.resolved_params()
    j = scenario.frames_per_window
    tau = 1.0 / scenario.f_low
    big_t = 1.0 / scenario.f_high

    if scenario.mode == "arm":
        model = scenario.arm_model
        q = np.asarray(scenario.initial_joint_state, dtype=float)
        ee_pos, ee_rot = arm_mod.forward_kinematics(model, q)
    else:
        q = None
        ee_pos = np.asarray(scenario.initial_position, dtype=float).copy()
        ee_rot = np.eye(3)
    ee_rot0 = ee_rot.copy()

    # conservative per-branch reach bound (any deformation stays inside it),
    # used to skip contact resolution when the sensor cannot touch anything
    st = canopy.static
    if st.n_branches:
        reach = (st.pcount - 1) * st.link_len + st.radius
        for l in range(st.n_leaves):
            b = st.leaf_branch[l]
            reach[b] = max(
                reach[b],
                (st.pcount[b] - 1) * st.link_len[b]
                + 2.0 * st.leaf_half[l, 0] + st.leaf_thickness[l],
            )
    else:
        reach = np.zeros(0)
    sensor_reach = (
        float(np.max(np.linalg.norm(geom.taxel_local_positions(), axis=1)))
        + geom.taxel_contact_radius + 1e-3
    )

    target = np.asarray(scenario.x_target, dtype=float)
    v = np.zeros(3)
    admittance_v = 0.0
    n_branches = canopy.n_branches

    max_high_steps = int(np.ceil(scenario.max_duration / big_t))
    log_t, log_p, log_v, log_tips, log_broken = [], [], [], [], []
    high_positions = [ee_pos.copy()]
    stop_reason = "timeout"
    t = 0.0

    for _k in range(max_high_steps):
        x_ref = ee_pos.copy()
        frames = []
        for _m in range(j):
            # settle the plant against the sensor spheres at the current
            # pose, then read the equilibrium contact forces
            near = st.n_branches > 0 and bool(
                np.any(
                    np.linalg.norm(st.attach_pos - ee_pos, axis=1)
                    <= reach + sensor_reach
                )
            )
            if near:
                canopy = canopy_relax(canopy, geom, ee_pos, ee_rot, scenario)
                frame, _loads = sample_tactile(geom, ee_pos, ee_rot, canopy)
            else:
                if canopy.theta.any() or canopy.leaf_theta.any():
                    canopy = canopy_relax(canopy, None, ee_pos, ee_rot, scenario)
                frame = TactileFrame(
                    forces=np.zeros((geom.taxel_count, 3)),
                    taxel_positions=taxel_world_positions(geom, ee_pos, ee_rot),
                )
            if scenario.mode == "arm":
                res = arm_mod.rrmc_step(scenario.arm_model, q, v, tau)
                q = res.q
                ee_pos, ee_rot = arm_mod.forward_kinematics(scenario.arm_model, q)
            else:
                ee_pos = arm_mod.point_mass_step(ee_pos, v, tau)
            t += tau
            frames.append(frame)
            log_t.append(t)
            log_p.append(ee_pos.copy())
            log_v.append(v.copy())
            log_tips.append(canopy.tip_positions())
            log_broken.append(canopy.broken.copy())

        window = aggregate_window(frames, x_ref)
        if scenario.controller == "rice":
            cmd = rice_step(ee_pos, target, window, params)
            v = cmd.v
        elif scenario.controller == "position":
            cmd = position_step(ee_pos, target, scenario.alpha)
            v = cmd.v
        else:
            f_net = window.forces.reshape(j, -1, 3).sum(axis=1).mean(axis=0)
            measured_x = abs(float(f_net[0]))
            cmd, admittance_v = hybrid_step(
                ee_pos, target, measured_x, admittance_v, params, big_t
            )
            v = cmd.v

        high_positions.append(ee_pos.copy())

        deviation = float(np.linalg.norm(ee_pos - target))
        if deviation <= scenario.target_tolerance:
            stop_reason = "target"
            break
        if any(box.contains(ee_pos) for box in scenario.keep_out):
            stop_reason = "geometry_violation"
            break
        if scenario.stop_on_breakage and canopy.broken.any():
            stop_reason = "breakage"
            break
        if len(high_positions) > scenario.stall_window:
            moved = np.linalg.norm(
                high_positions[-1] - high_positions[-1 - scenario.stall_window]
            )
            if moved < scenario.stall_eps:
                stop_reason = "stall"
                break

    final_dev = float(np.linalg.norm(ee_pos - target))
    trajectory = Trajectory(
        t=np.asarray(log_t),
        position=np.asarray(log_p).reshape(-1, 3),
        velocity=np.asarray(log_v).reshape(-1, 3),
        tip_positions=np.asarray(log_tips, dtype=float).reshape(len(log_t), n_branches, 3),
        broken=np.asarray(log_broken, dtype=bool).reshape(len(log_t), n_branches),
        stop_reason=stop_reason,
    )
    # orientation is held by construction in point-mass mode
    if scenario.mode == "point_mass":
        assert np.linalg.norm(ee_rot - ee_rot0) < 1e-12
    return TrialResult(
        reached=stop_reason == "target",
        stop_reason=stop_reason,
        broken_branch_count=int(canopy.broken.sum()),
        per_branch_max_deviation=canopy.max_tip_deviation.copy(),
        total_disturbance=total_disturbance(canopy),
        final_target_deviation=final_dev,
        trajectory=trajectory,
        scenario_name=scenario.name,
        seed=scenario.seed,
    )


def canopy_relax(canopy, geom, ee_pos, ee_rot, scenario):
    from .canopy import relax_deformation
    from .tactile import taxel_world_positions

    if geom is None:  # out of sensor range: plain spring-back
        return relax_deformation(
            canopy, [],
            iterations=scenario.relax_iterations,
            step_gain=scenario.relax_step_gain,
        )
    return relax_deformation(
        canopy, [],
        iterations=scenario.relax_iterations,
        step_gain=scenario.relax_step_gain,
        taxel_positions=taxel_world_positions(geom, ee_pos, ee_rot),
        taxel_radius=geom.taxel_contact_radius,
        contact_stiffness=geom.contact_stiffness,
    )


def summarize(trials):
    """Suite statistics; medians use the midpoint convention (numpy)."""
    trials = list(trials)
    if not trials:
        raise ValueError("cannot summarize an empty trial list")
    disturbances = [tr.total_disturbance for tr in trials]
    deviations = [tr.final_target_deviation for tr in trials]
    clean = sum(1 for tr in trials if tr.reached and tr.broken_branch_count == 0)
    return SuiteSummary(
        trials=trials,
        median_disturbance=float(np.median(disturbances)),
        median_target_deviation=float(np.median(deviations)),
        no_break_reach_rate=clean / len(trials),
    )


def run_trials(scenarios, jobs=1):
    """Run independent trials, optionally in parallel processes.

    Results are merged by scenario index, so the output is identical
    regardless of the worker count.
    """
    scenarios = list(scenarios)
    if jobs <= 1 or len(scenarios) <= 1:
        return [run_trial(s) for s in scenarios]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_trial, scenarios))


def run_sweep(base_scenario, wf_values, repeats=1):
    """One summary per force-weight value, everything else held fixed."""
    results = []
    for wf in wf_values:
        if wf < 0:
            raise ValueError("force weights must be >= 0")
        params = base_scenario.resolved_params()
        if not isinstance(params, RiceParams):
            params = RiceParams(alpha=base_scenario.alpha)
        scenario = replace(
            base_scenario,
            controller="rice",
            controller_params=replace(params, w_f=float(wf)),
        )
        trials = [
            run_trial(replace(scenario, seed=scenario.seed + rep))
            for rep in range(repeats)
        ]
        results.append((float(wf), summarize(trials)))
    return results
