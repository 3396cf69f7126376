"""Scenario JSON and result export formats.

Scenario files are versioned JSON (schemaVersion 1).  Trial trajectories
export to CSV with a fixed column order; suite summaries export to JSON
that carries enough per-trial data to recompute every statistic.
"""

import csv
import json
import os

import numpy as np

from .arm import ArmModel
from .canopy import BranchSpec, LeafSpec
from .controllers import HybridParams, RiceParams
from .harness import KeepOutBox, Scenario, SuiteSummary, summarize
from .tactile import SensorGeometry

SCHEMA_VERSION = 1


class ScenarioFormatError(ValueError):
    """Parse failure; carries the offending field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__("scenario field %r: %s" % (field, message))


_MISSING = object()


def _get(obj, field, kind, default=_MISSING):
    if field not in obj:
        if default is not _MISSING:
            return default
        raise ScenarioFormatError(field, "missing")
    value = obj[field]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, kind):
        raise ScenarioFormatError(field, "expected %s, got %r" % (kind.__name__, value))
    return value


def _vec3(obj, field, default=None):
    v = _get(obj, field, list, _MISSING if default is None else list(default))
    if len(v) != 3 or not all(isinstance(x, (int, float)) for x in v):
        raise ScenarioFormatError(field, "expected a list of 3 numbers")
    return tuple(float(x) for x in v)


def scenario_to_dict(s):
    d = {
        "schemaVersion": SCHEMA_VERSION,
        "name": s.name,
        "seed": s.seed,
        "controller": s.controller,
        "mode": s.mode,
        "alpha": s.alpha,
        "target": list(s.x_target),
        "initialPosition": list(s.initial_position),
        "rates": {"highHz": s.f_high, "lowHz": s.f_low},
        "maxDuration": s.max_duration,
        "targetTolerance": s.target_tolerance,
        "stallWindow": s.stall_window,
        "stallEps": s.stall_eps,
        "stopOnBreakage": s.stop_on_breakage,
        "relax": {"iterations": s.relax_iterations, "stepGain": s.relax_step_gain},
        "sensor": {
            "n": s.sensor.n,
            "pitch": s.sensor.pitch,
            "padLateralOffset": s.sensor.pad_lateral_offset,
            "padVerticalOffset": s.sensor.pad_vertical_offset,
            "padForwardOffset": s.sensor.pad_forward_offset,
            "taxelContactRadius": s.sensor.taxel_contact_radius,
            "contactStiffness": s.sensor.contact_stiffness,
        },
        "keepOut": [{"lo": list(b.lo), "hi": list(b.hi)} for b in s.keep_out],
        "canopy": [_branch_to_dict(b) for b in s.canopy],
    }
    params = s.controller_params
    if isinstance(params, RiceParams):
        d["controllerParams"] = {
            "wX": params.w_x, "wF": params.w_f,
            "alpha": params.alpha, "noContactEps": params.no_contact_eps,
        }
    elif isinstance(params, HybridParams):
        d["controllerParams"] = {
            "desiredForce": params.desired_force,
            "virtualMass": params.virtual_mass,
            "virtualDamping": params.virtual_damping,
            "alpha": params.alpha, "contactEps": params.contact_eps,
        }
    if s.mode == "arm":
        d["initialJointState"] = list(s.initial_joint_state)
        d["armModel"] = {
            "dh": np.asarray(s.arm_model.dh_parameters).tolist(),
            "jointLimits": np.asarray(s.arm_model.joint_limits).tolist(),
        }
    return d


def _branch_to_dict(b):
    return {
        "crossSection": b.cross_section,
        "dimension": b.dimension,
        "length": b.length,
        "particleCount": b.particle_count,
        "attachPosition": list(b.attach_position),
        "attachOrientation": list(b.attach_orientation),
        "orientationDeg": b.orientation_deg,
        "externalJointStiffness": b.external_joint_stiffness,
        "internalJointStiffness": b.internal_joint_stiffness,
        "breakAngle": b.break_angle,
        "elasticModulus": b.elastic_modulus,
        "leaves": [
            {
                "attachParticleIndex": lf.attach_particle_index,
                "petioleStiffness": lf.petiole_stiffness,
                "patchHalfExtents": list(lf.patch_half_extents),
                "patchNormal": list(lf.patch_normal),
                "thickness": lf.thickness,
            }
            for lf in b.leaf_specs
        ],
    }


def _branch_from_dict(d, idx):
    try:
        leaves = tuple(
            LeafSpec(
                attach_particle_index=_get(lf, "attachParticleIndex", int),
                petiole_stiffness=_get(lf, "petioleStiffness", float, 0.002),
                patch_half_extents=tuple(_get(lf, "patchHalfExtents", list, [0.02, 0.015])),
                patch_normal=tuple(_get(lf, "patchNormal", list, [1.0, 0.0, 0.0])),
                thickness=_get(lf, "thickness", float, 0.001),
            )
            for lf in _get(d, "leaves", list, [])
        )
        ext = d.get("externalJointStiffness")
        internal = d.get("internalJointStiffness")
        return BranchSpec(
            cross_section=_get(d, "crossSection", str, "circular"),
            dimension=_get(d, "dimension", float),
            length=_get(d, "length", float),
            particle_count=_get(d, "particleCount", int, 6),
            attach_position=_vec3(d, "attachPosition"),
            attach_orientation=_vec3(d, "attachOrientation", (0.0, 0.0, 0.0)),
            orientation_deg=_get(d, "orientationDeg", float, 0.0),
            external_joint_stiffness=None if ext is None else float(ext),
            internal_joint_stiffness=None if internal is None else float(internal),
            break_angle=_get(d, "breakAngle", float, 0.35),
            elastic_modulus=_get(d, "elasticModulus", float, 3.0e9),
            leaf_specs=leaves,
        )
    except ScenarioFormatError as exc:
        raise ScenarioFormatError("canopy[%d].%s" % (idx, exc.field), str(exc)) from exc


def scenario_from_dict(d):
    version = _get(d, "schemaVersion", int)
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError("schemaVersion", "unknown version %r" % version)
    controller = _get(d, "controller", str, "rice")
    params = None
    if "controllerParams" in d:
        p = _get(d, "controllerParams", dict)
        if controller == "rice":
            params = RiceParams(
                w_x=_get(p, "wX", float, 1.0),
                w_f=_get(p, "wF", float, 2.0),
                alpha=_get(p, "alpha", float, 0.01),
                no_contact_eps=_get(p, "noContactEps", float, 0.01),
            )
        elif controller == "hybrid":
            params = HybridParams(
                desired_force=_get(p, "desiredForce", float, 1.0),
                virtual_mass=_get(p, "virtualMass", float, 100.0),
                virtual_damping=_get(p, "virtualDamping", float, 50.0),
                alpha=_get(p, "alpha", float, 0.01),
                contact_eps=_get(p, "contactEps", float, 0.01),
            )
    sensor_d = _get(d, "sensor", dict, {})
    sensor = SensorGeometry(
        n=_get(sensor_d, "n", int, 4),
        pitch=_get(sensor_d, "pitch", float, 0.005),
        pad_lateral_offset=_get(sensor_d, "padLateralOffset", float, 0.025),
        pad_vertical_offset=_get(sensor_d, "padVerticalOffset", float, 0.0),
        pad_forward_offset=_get(sensor_d, "padForwardOffset", float, 0.03),
        taxel_contact_radius=_get(sensor_d, "taxelContactRadius", float, 0.004),
        contact_stiffness=_get(sensor_d, "contactStiffness", float, 2000.0),
    )
    rates = _get(d, "rates", dict, {})
    relax = _get(d, "relax", dict, {})
    mode = _get(d, "mode", str, "point_mass")
    arm_model = None
    if mode == "arm":
        am = _get(d, "armModel", dict)
        arm_model = ArmModel(
            dh_parameters=np.asarray(_get(am, "dh", list), dtype=float),
            joint_limits=np.asarray(_get(am, "jointLimits", list), dtype=float),
        )
    keep_out = tuple(
        KeepOutBox(lo=_vec3(box, "lo"), hi=_vec3(box, "hi"))
        for box in _get(d, "keepOut", list, [])
    )
    scenario = Scenario(
        canopy=tuple(
            _branch_from_dict(b, i) for i, b in enumerate(_get(d, "canopy", list))
        ),
        x_target=_vec3(d, "target"),
        controller=controller,
        controller_params=params,
        alpha=_get(d, "alpha", float, 0.01),
        mode=mode,
        initial_position=_vec3(d, "initialPosition", (0.0, 0.0, 0.0)),
        initial_joint_state=tuple(_get(d, "initialJointState", list, [])),
        arm_model=arm_model,
        sensor=sensor,
        f_high=_get(rates, "highHz", float, 50.0),
        f_low=_get(rates, "lowHz", float, 100.0),
        max_duration=_get(d, "maxDuration", float, 120.0),
        target_tolerance=_get(d, "targetTolerance", float, 0.005),
        stall_window=_get(d, "stallWindow", int, 100),
        stall_eps=_get(d, "stallEps", float, 0.001),
        stop_on_breakage=_get(d, "stopOnBreakage", bool, False),
        keep_out=keep_out,
        relax_iterations=_get(relax, "iterations", int, 50),
        relax_step_gain=_get(relax, "stepGain", float, 0.5),
        seed=_get(d, "seed", int, 0),
        name=_get(d, "name", str, ""),
    )
    scenario.validate()
    return scenario


def save_scenario(scenario, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)


def load_scenario(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(
                "<json>", "line %d: %s" % (exc.lineno, exc.msg)
            ) from exc
    return scenario_from_dict(data)


def trajectory_to_csv(result, path):
    """Fixed column order: t, x, y, z, vx, vy, vz, per-branch tip x/y/z,
    brokenFlags, stopReason (final row only)."""
    traj = result.trajectory
    n_branches = traj.tip_positions.shape[1]
    header = ["t", "x", "y", "z", "vx", "vy", "vz"]
    for b in range(n_branches):
        header += ["tip%d_x" % b, "tip%d_y" % b, "tip%d_z" % b]
    header += ["brokenFlags", "stopReason"]
    n = traj.t.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            row = [repr(float(traj.t[i]))]
            row += [repr(float(x)) for x in traj.position[i]]
            row += [repr(float(x)) for x in traj.velocity[i]]
            for b in range(n_branches):
                row += [repr(float(x)) for x in traj.tip_positions[i, b]]
            row.append("".join("1" if f else "0" for f in traj.broken[i]))
            row.append(traj.stop_reason if i == n - 1 else "")
            writer.writerow(row)


def trial_record(result):
    return {
        "scenario": result.scenario_name,
        "seed": result.seed,
        "reached": result.reached,
        "stopReason": result.stop_reason,
        "brokenBranchCount": result.broken_branch_count,
        "perBranchMaxDeviation": [float(x) for x in result.per_branch_max_deviation],
        "totalDisturbance": result.total_disturbance,
        "finalTargetDeviation": result.final_target_deviation,
    }


def export_results(suite, out_dir, write_trajectories=True):
    """Write summary.json plus one trajectory CSV per trial."""
    os.makedirs(out_dir, exist_ok=True)
    summary = {
        "schemaVersion": SCHEMA_VERSION,
        "medianDisturbance": suite.median_disturbance,
        "medianTargetDeviation": suite.median_target_deviation,
        "noBreakReachRate": suite.no_break_reach_rate,
        "trials": [trial_record(tr) for tr in suite.trials],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if write_trajectories:
        for i, tr in enumerate(suite.trials):
            trajectory_to_csv(tr, os.path.join(out_dir, "trial_%03d.csv" % i))
    return os.path.join(out_dir, "summary.json")


def load_summary(path):
    """Read an exported summary.json (or the directory containing it)."""
    if os.path.isdir(path):
        path = os.path.join(path, "summary.json")
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schemaVersion") != SCHEMA_VERSION:
        raise ScenarioFormatError("schemaVersion", "unknown version")
    return data


def resummarize(summary_data):
    """Recompute suite statistics from the exported per-trial records."""
    from .harness import TrialResult, Trajectory

    trials = []
    for rec in summary_data["trials"]:
        dev = np.asarray(rec["perBranchMaxDeviation"], dtype=float)
        trials.append(
            TrialResult(
                reached=rec["reached"],
                stop_reason=rec["stopReason"],
                broken_branch_count=rec["brokenBranchCount"],
                per_branch_max_deviation=dev,
                total_disturbance=rec["totalDisturbance"],
                final_target_deviation=rec["finalTargetDeviation"],
                trajectory=Trajectory(
                    t=np.empty(0), position=np.empty((0, 3)),
                    velocity=np.empty((0, 3)),
                    tip_positions=np.empty((0, dev.size, 3)),
                    broken=np.empty((0, dev.size), dtype=bool),
                    stop_reason=rec["stopReason"],
                ),
                scenario_name=rec["scenario"],
                seed=rec["seed"],
            )
        )
    return summarize(trials)
