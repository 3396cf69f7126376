"""Serial-arm kinematics and the low-level resolved-rate velocity controller.

Only the 3-D position of the end effector is controlled; the desired
Cartesian velocity is mapped to joint rates through the truncated-SVD
pseudoinverse of the 3 x b positional Jacobian and integrated explicitly
over the low-level period.  A point-mass mode bypasses kinematics for
controller unit tests.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import pseudoinverse


@dataclass(frozen=True)
class ArmModel:
    """Standard-DH revolute-joint arm.

    dh_parameters rows are (a, alpha, d, theta_offset) per joint.
    """

    dh_parameters: np.ndarray        # (b, 4)
    joint_limits: np.ndarray         # (b, 2) lower/upper, radians
    base_position: np.ndarray = None
    base_rotation: np.ndarray = None

    def __post_init__(self):
        dh = np.asarray(self.dh_parameters, dtype=float).reshape(-1, 4)
        lims = np.asarray(self.joint_limits, dtype=float).reshape(-1, 2)
        if dh.shape[0] < 3:
            raise ValueError("need at least 3 joints for 3-D velocity tracking")
        if lims.shape[0] != dh.shape[0]:
            raise ValueError("joint_limits rows must match dh_parameters rows")
        if np.any(lims[:, 0] >= lims[:, 1]):
            raise ValueError("joint limits must satisfy lower < upper")
        object.__setattr__(self, "dh_parameters", dh)
        object.__setattr__(self, "joint_limits", lims)
        base_p = np.zeros(3) if self.base_position is None else np.asarray(self.base_position, float)
        base_r = np.eye(3) if self.base_rotation is None else np.asarray(self.base_rotation, float)
        object.__setattr__(self, "base_position", base_p)
        object.__setattr__(self, "base_rotation", base_r)

    @property
    def dof(self):
        return self.dh_parameters.shape[0]


def _dh_transform(a, alpha, d, theta):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _chain(model, q):
    """All intermediate frames; returns (origins (b+1,3), z_axes (b+1,3), T_ee)."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != model.dof:
        raise ValueError("joint vector length %d != dof %d" % (q.shape[0], model.dof))
    t = np.eye(4)
    t[:3, :3] = model.base_rotation
    t[:3, 3] = model.base_position
    origins = np.empty((model.dof + 1, 3))
    z_axes = np.empty((model.dof + 1, 3))
    origins[0] = t[:3, 3]
    z_axes[0] = t[:3, 2]
    for i, (a, alpha, d, off) in enumerate(model.dh_parameters):
        t = t @ _dh_transform(a, alpha, d, q[i] + off)
        origins[i + 1] = t[:3, 3]
        z_axes[i + 1] = t[:3, 2]
    return origins, z_axes, t


def forward_kinematics(model, q):
    """End-effector pose: (position (3,), rotation (3,3))."""
    _, _, t = _chain(model, q)
    return t[:3, 3].copy(), t[:3, :3].copy()


def jacobian(model, q):
    """Geometric positional Jacobian, 3 x b: column i = z_i x (p_ee - p_i)."""
    origins, z_axes, t = _chain(model, q)
    p_ee = t[:3, 3]
    cols = np.cross(z_axes[:-1], p_ee - origins[:-1])
    return cols.T.copy()


@dataclass(frozen=True)
class RrmcResult:
    q: np.ndarray
    saturated: bool          # any joint clamped at a limit this step
    ee_velocity_error: float  # ||achieved - desired||, m/s


def rrmc_step(model, q, v_desired, dt, svd_tol=1e-6):
    """One explicit-Euler resolved-rate step: q' = clamp(q + J^+ v dt).

    Near singular configurations the truncated pseudoinverse keeps the
    joint rates finite; the reported velocity error then grows instead.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = np.asarray(q, dtype=float).reshape(-1)
    v = np.asarray(v_desired, dtype=float).reshape(3)
    j = jacobian(model, q)
    q_dot = pseudoinverse(j, tol=svd_tol) @ v
    q_new = q + q_dot * dt
    clamped = np.clip(q_new, model.joint_limits[:, 0], model.joint_limits[:, 1])
    saturated = bool(np.any(clamped != q_new))
    p0, _ = forward_kinematics(model, q)
    p1, _ = forward_kinematics(model, clamped)
    err = float(np.linalg.norm((p1 - p0) / dt - v))
    return RrmcResult(q=clamped, saturated=saturated, ee_velocity_error=err)


def point_mass_step(x, v, dt):
    """Kinematic point-mass integration: x' = x + v*dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.asarray(x, dtype=float) + np.asarray(v, dtype=float) * dt


def reference_6r_model():
    """Fixed generic 6R arm used by tests and as the default arm-mode model."""
    dh = np.array(
        [
            # a, alpha, d, theta_offset
            [0.0, -np.pi / 2, 0.30, 0.0],
            [0.30, 0.0, 0.0, -np.pi / 2],
            [0.08, -np.pi / 2, 0.0, 0.0],
            [0.0, np.pi / 2, 0.30, 0.0],
            [0.0, -np.pi / 2, 0.0, 0.0],
            [0.0, 0.0, 0.10, 0.0],
        ]
    )
    limits = np.array([[-2.0 * np.pi, 2.0 * np.pi]] * 6)
    return ArmModel(dh_parameters=dh, joint_limits=limits)
