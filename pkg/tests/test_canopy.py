import numpy as np
import pytest

from canopynav.canopy import (
    BranchSpec,
    ContactLoad,
    LeafSpec,
    build_canopy,
    closest_point_on_canopy,
    closest_points_batch,
    relax_deformation,
    total_disturbance,
)


def vertical_branch(**kw):
    defaults = dict(dimension=0.010, length=0.30, particle_count=6)
    defaults.update(kw)
    return BranchSpec(**defaults)


def analytic_tip_deflection(spec, force):
    """Small-angle torsional-chain oracle: delta = F * sum(d_j^2 / kappa_j).

    Joints: external at s=0 plus one internal joint at the base of each
    link (s = 0, l, 2l, ...); a lateral tip force F torques joint j by
    F * (L - s_j) and the tip moves by theta_j * (L - s_j).
    """
    ell = spec.link_length()
    length = spec.length
    total = length**2 / spec.external_stiffness()
    for j in range(spec.particle_count - 1):
        total += (length - j * ell) ** 2 / spec.internal_stiffness()
    return force * total


class TestBuildCanopy:
    def test_rest_tip_straight(self):
        state = build_canopy([vertical_branch()])
        tip = state.tip_positions()[0]
        assert np.allclose(tip, [0, 0, 0.30], atol=1e-12)

    def test_joint_count(self):
        specs = [vertical_branch(), vertical_branch(attach_position=(0.2, 0, 0))]
        state = build_canopy(specs)
        # per branch: 2 DoF per internal joint (particle_count - 1 of them)
        # plus the 2-DoF external joint
        per_branch = 2 * (specs[0].particle_count - 1) + 2
        assert state.theta.size == 2 * per_branch

    def test_determinism(self):
        specs = [vertical_branch(orientation_deg=30.0)]
        a = build_canopy(specs, seed=7)
        b = build_canopy(specs, seed=7)
        assert np.array_equal(a.theta, b.theta)
        assert np.array_equal(a.tip_positions(), b.tip_positions())

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            build_canopy([vertical_branch(dimension=-1.0)])
        with pytest.raises(ValueError):
            build_canopy([vertical_branch(particle_count=1)])

    def test_empty_canopy_is_free_space(self):
        state = build_canopy([])
        assert state.n_branches == 0
        assert total_disturbance(state) == 0.0

    def test_orientation_tilts_tip(self):
        state = build_canopy([vertical_branch(orientation_deg=30.0)])
        tip = state.tip_positions()[0]
        expect = 0.30 * np.array([np.sin(np.deg2rad(30)), 0, np.cos(np.deg2rad(30))])
        assert np.allclose(tip, expect, atol=1e-12)


class TestRelaxDeformation:
    def test_no_loads_rest_unchanged(self):
        state = build_canopy([vertical_branch()])
        out = relax_deformation(state, [])
        assert np.array_equal(out.theta, state.theta)
        assert not out.broken.any()

    def test_tip_deflection_matches_analytic_oracle(self):
        spec = vertical_branch()
        state = build_canopy([spec])
        force = 0.05  # N, keeps angles small
        tip = state.tip_positions()[0]
        load = ContactLoad(0, spec.particle_count - 2, tip, np.array([force, 0.0, 0.0]))
        for _ in range(10):
            state = relax_deformation(state, [load])
        deflection = state.tip_positions()[0][0]
        expect = analytic_tip_deflection(spec, force)
        assert abs(deflection - expect) < 0.10 * expect

    def test_energy_monotone(self):
        state = build_canopy([vertical_branch()])
        tip = state.tip_positions()[0]
        load = ContactLoad(0, 4, tip, np.array([0.4, 0.1, 0.0]))
        _, energies = relax_deformation(state, [load], return_energies=True)
        assert np.all(np.diff(energies) <= 1e-12)

    def test_energy_monotone_random_loads(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            specs = [vertical_branch(dimension=rng.choice([0.005, 0.010, 0.012]))]
            state = build_canopy(specs)
            loads = []
            for _ in range(rng.integers(1, 4)):
                link = int(rng.integers(0, specs[0].particle_count - 1))
                t = rng.uniform()
                point = state.particle_positions(0)[link] + t * np.array([0, 0, specs[0].link_length()])
                loads.append(ContactLoad(0, link, point, rng.normal(size=3) * 0.5))
            _, energies = relax_deformation(state, loads, return_energies=True)
            assert np.all(np.diff(energies) <= 1e-12)

    def test_breakage_latches_and_freezes(self):
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
        dist = np.linalg.norm(state.tip_positions()[0] - rest_tip)
        assert dist > 1e-4
        prev = dist
        for _ in range(20):
            state = relax_deformation(state, [])
            dist = np.linalg.norm(state.tip_positions()[0] - rest_tip)
            assert dist < prev or dist < 1e-4
            prev = dist
            if dist < 1e-4:
                break
        assert dist < 1e-4
        assert not state.broken[0]

    def test_max_tip_deviation_monotone(self):
        spec = vertical_branch()
        state = build_canopy([spec])
        tip = state.tip_positions()[0]
        load = ContactLoad(0, spec.particle_count - 2, tip, np.array([0.3, 0.0, 0.0]))
        state = relax_deformation(state, [load])
        peak = state.max_tip_deviation[0]
        assert peak > 0
        state = relax_deformation(state, [])
        assert state.max_tip_deviation[0] >= peak


class TestClosestPoint:
    def test_far_query(self):
        state = build_canopy([vertical_branch()])
        b, l, point, dist, normal = closest_point_on_canopy(state, [1.0 + 0.005, 0, 0.15])
        assert b == 0
        assert abs(dist - 1.0) < 1e-9
        assert np.allclose(normal, [1, 0, 0], atol=1e-12)

    def test_on_axis_inside(self):
        state = build_canopy([vertical_branch()])
        b, l, point, dist, normal = closest_point_on_canopy(state, [0, 0, 0.15])
        assert dist == pytest.approx(-0.005, abs=1e-12)
        assert abs(np.linalg.norm(normal) - 1.0) < 1e-9

    def test_against_brute_force_sampling(self):
        spec = vertical_branch(leaf_specs=(LeafSpec(attach_particle_index=3),))
        state = build_canopy([spec, vertical_branch(attach_position=(0.1, 0.05, 0.0))])
        particles, _, leaf_rot = state._fk()
        st = state.static

        # finely sample all capsule surfaces and leaf patches
        samples = []
        for b in range(st.n_branches):
            r = st.radius[b]
            for i in range(st.pcount[b] - 1):
                a = particles[st.poff[b] + i]
                c = particles[st.poff[b] + i + 1]
                for t in np.linspace(0, 1, 120):
                    axis_pt = a + t * (c - a)
                    for ang in np.linspace(0, 2 * np.pi, 90, endpoint=False):
                        perp1 = np.array([1.0, 0, 0])
                        axis = (c - a) / np.linalg.norm(c - a)
                        perp1 = perp1 - axis * np.dot(perp1, axis)
                        perp1 /= np.linalg.norm(perp1)
                        perp2 = np.cross(axis, perp1)
                        samples.append(axis_pt + r * (np.cos(ang) * perp1 + np.sin(ang) * perp2))
            # hemispherical end caps at the branch root and tip
            for end in (particles[st.poff[b]], particles[st.poff[b + 1] - 1]):
                for theta in np.linspace(0, np.pi, 30):
                    for phi in np.linspace(0, 2 * np.pi, 60, endpoint=False):
                        d = np.array(
                            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
                        )
                        samples.append(end + r * d)
        for l in range(st.n_leaves):
            origin = particles[st.poff[st.leaf_branch[l]] + st.leaf_particle[l]]
            u, v = leaf_rot[l][:, 0], leaf_rot[l][:, 1]
            nvec = leaf_rot[l][:, 2]
            hu, hv = st.leaf_half[l]
            # the patch surface is the rectangle inflated by the contact
            # thickness (rounded edges included), so sample sphere offsets
            dirs = np.array(
                [d for d in np.ndindex(3, 3, 3) if d != (1, 1, 1)], dtype=float
            ) - 1.0
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
            for au in np.linspace(0, 2 * hu, 60):
                for av in np.linspace(-hv, hv, 45):
                    base = origin + au * u + av * v
                    frame = np.column_stack([u, v, nvec])
                    for d in dirs:
                        samples.append(base + st.leaf_thickness[l] * (frame @ d))
        samples = np.array(samples)

        rng = np.random.default_rng(5)
        queries = rng.uniform([-0.2, -0.2, -0.1], [0.3, 0.3, 0.4], size=(100, 3))
        _, _, _, dist, _ = closest_points_batch(state, queries)
        for k in range(100):
            brute = np.min(np.linalg.norm(samples - queries[k], axis=1))
            if dist[k] >= 0:
                assert abs(dist[k] - brute) < 1e-3
            else:
                # inside the surface: brute-force surface distance equals |dist|
                assert abs(abs(dist[k]) - brute) < 1e-3


class TestTotalDisturbance:
    def test_rest_zero(self):
        state = build_canopy([vertical_branch()])
        assert total_disturbance(state) == 0.0

    def test_sum(self):
        state = build_canopy([vertical_branch(), vertical_branch(attach_position=(0.2, 0, 0))])
        state.max_tip_deviation[:] = [0.022, 0.013]
        assert total_disturbance(state) == pytest.approx(0.035)
