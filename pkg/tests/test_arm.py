import numpy as np
import pytest

from canopynav.arm import (
    ArmModel,
    forward_kinematics,
    jacobian,
    point_mass_step,
    reference_6r_model,
    rrmc_step,
)
from canopynav.controllers import position_step


def fk_oracle(model, q):
    """Independent homogeneous-transform product (4x4 matmul chain)."""
    t = np.eye(4)
    t[:3, :3] = model.base_rotation
    t[:3, 3] = model.base_position
    for i, (a, alpha, d, off) in enumerate(model.dh_parameters):
        theta = q[i] + off
        rot_z = np.eye(4)
        rot_z[:2, :2] = [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        trans = np.eye(4)
        trans[2, 3] = d
        trans[0, 3] = a
        rot_x = np.eye(4)
        rot_x[1:3, 1:3] = [[np.cos(alpha), -np.sin(alpha)], [np.sin(alpha), np.cos(alpha)]]
        t = t @ rot_z @ trans @ rot_x
    return t[:3, 3]


def planar_3r(lengths=(0.3, 0.25, 0.15)):
    """3R arm in the x-y plane (all alpha = 0, d = 0)."""
    dh = np.array([[l, 0.0, 0.0, 0.0] for l in lengths])
    limits = np.array([[-2 * np.pi, 2 * np.pi]] * 3)
    return ArmModel(dh_parameters=dh, joint_limits=limits)


def planar_jacobian_oracle(lengths, q):
    """Hand-derived positional Jacobian of the planar 3R arm."""
    l1, l2, l3 = lengths
    q1, q2, q3 = q
    s1, s12, s123 = np.sin(q1), np.sin(q1 + q2), np.sin(q1 + q2 + q3)
    c1, c12, c123 = np.cos(q1), np.cos(q1 + q2), np.cos(q1 + q2 + q3)
    return np.array(
        [
            [-l1 * s1 - l2 * s12 - l3 * s123, -l2 * s12 - l3 * s123, -l3 * s123],
            [l1 * c1 + l2 * c12 + l3 * c123, l2 * c12 + l3 * c123, l3 * c123],
            [0.0, 0.0, 0.0],
        ]
    )


class TestForwardKinematics:
    def test_zero_config_planar(self):
        model = planar_3r()
        p, _ = forward_kinematics(model, [0, 0, 0])
        assert np.allclose(p, [0.7, 0, 0], atol=1e-12)

    def test_base_rotation_symmetry(self):
        model = planar_3r()
        p0, _ = forward_kinematics(model, [0, 0, 0])
        p1, _ = forward_kinematics(model, [np.pi / 2, 0, 0])
        rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        assert np.allclose(p1, rot @ p0, atol=1e-12)

    def test_matches_independent_oracle(self):
        model = reference_6r_model()
        rng = np.random.default_rng(4)
        for _ in range(50):
            q = rng.uniform(-np.pi, np.pi, size=6)
            p, _ = forward_kinematics(model, q)
            assert np.linalg.norm(p - fk_oracle(model, q)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward_kinematics(planar_3r(), [0, 0])


class TestJacobian:
    def test_finite_difference_oracle(self):
        model = reference_6r_model()
        rng = np.random.default_rng(6)
        for _ in range(100):
            q = rng.uniform(-np.pi, np.pi, size=6)
            j = jacobian(model, q)
            dq = rng.normal(size=6)
            dq *= 1e-5 / np.linalg.norm(dq)
            p0, _ = forward_kinematics(model, q)
            p1, _ = forward_kinematics(model, q + dq)
            assert np.linalg.norm(j @ dq - (p1 - p0)) < 1e-6

    def test_planar_analytic(self):
        lengths = (0.3, 0.25, 0.15)
        model = planar_3r(lengths)
        rng = np.random.default_rng(7)
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, size=3)
            assert np.allclose(jacobian(model, q), planar_jacobian_oracle(lengths, q), atol=1e-12)

    def test_singular_config_finite(self):
        model = planar_3r()
        res = rrmc_step(model, [0.0, 0.0, 0.0], [0.01, 0, 0], 0.01)  # fully stretched
        assert np.all(np.isfinite(res.q))


class TestRrmcStep:
    def test_zero_velocity(self):
        model = reference_6r_model()
        q = np.full(6, 0.3)
        res = rrmc_step(model, q, [0, 0, 0], 0.01)
        assert np.allclose(res.q, q)

    def test_velocity_tracking(self):
        model = reference_6r_model()
        q = np.array([0.2, -0.4, 0.5, 0.1, 0.6, -0.3])
        res = rrmc_step(model, q, [0.01, 0, 0], 0.01)
        p0, _ = forward_kinematics(model, q)
        p1, _ = forward_kinematics(model, res.q)
        assert np.linalg.norm((p1 - p0) / 0.01 - [0.01, 0, 0]) < 1e-4

    def test_limit_saturation_flag(self):
        model = planar_3r()
        limits = np.array([[-0.01, 0.01]] * 3)
        tight = ArmModel(dh_parameters=model.dh_parameters, joint_limits=limits)
        res = rrmc_step(tight, [0.0, 0.009, 0.0], [0, 0.05, 0], 0.1)
        assert res.saturated

    def test_closed_loop_reaches_targets(self):
        model = reference_6r_model()
        rng = np.random.default_rng(8)
        for _ in range(20):
            q = rng.uniform(-1.2, 1.2, size=6)
            p_start, _ = forward_kinematics(model, q)
            # reachable target: FK of a nearby perturbed configuration
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


class TestPointMass:
    def test_basic_step(self):
        assert np.allclose(point_mass_step([0, 0, 0], [0.01, 0, 0], 0.01), [1e-4, 0, 0])

    def test_zero_velocity(self):
        x = np.array([0.3, -0.1, 0.2])
        assert np.array_equal(point_mass_step(x, [0, 0, 0], 0.5), x)

    def test_closed_form_integration(self):
        x = np.zeros(3)
        direction = np.array([1.0, 0, 0])
        for _ in range(100):
            x = point_mass_step(x, 0.01 * direction, 0.01)
        assert abs(x[0] - 0.01) < 1e-12
