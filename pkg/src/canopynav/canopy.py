"""Deformable mock-plant environment.

Branches are particle chains with 2-DoF torsional bending joints (one
external attachment joint plus one internal joint per link), deformed
quasi-statically by energy descent under contact loads.  Breakage is
plastic: a branch whose joint bend exceeds its break angle latches broken
and holds its deformed shape for the rest of the trial.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

BALSA_E = 3.0e9  # Pa, default elastic modulus for stiffness-from-cross-section

DEFAULT_ITERATIONS = 50
DEFAULT_STEP_GAIN = 0.5


def rotvec_to_matrix(r):
    """Rodrigues' formula; r is a rotation vector in radians."""
    r = np.asarray(r, dtype=float)
    angle = float(np.linalg.norm(r))
    if angle < 1e-12:
        return np.eye(3)
    k = r / angle
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


@dataclass(frozen=True)
class LeafSpec:
    attach_particle_index: int
    petiole_stiffness: float = 0.002      # N*m/rad, intentionally low
    patch_half_extents: tuple = (0.02, 0.015)   # metres (u, v)
    patch_normal: tuple = (1.0, 0.0, 0.0)       # unit vector, branch-local frame
    thickness: float = 0.001                    # contact half-thickness, metres

    def validate(self, particle_count):
        if not 0 <= self.attach_particle_index < particle_count:
            raise ValueError("leaf attach_particle_index outside parent chain")
        if self.petiole_stiffness <= 0:
            raise ValueError("leaf petiole_stiffness must be positive")
        if min(self.patch_half_extents) <= 0:
            raise ValueError("leaf patch_half_extents must be positive")


@dataclass(frozen=True)
class BranchSpec:
    cross_section: str = "circular"       # "circular" or "square"
    dimension: float = 0.010              # diameter or side, metres
    length: float = 0.30                  # metres
    particle_count: int = 6
    attach_position: tuple = (0.0, 0.0, 0.0)
    attach_orientation: tuple = (0.0, 0.0, 0.0)   # rotation vector, radians
    orientation_deg: float = 0.0          # extra tilt about the local y axis
    external_joint_stiffness: float | None = None  # N*m/rad; None = derive
    internal_joint_stiffness: float | None = None
    break_angle: float = 0.35             # rad per joint
    elastic_modulus: float = BALSA_E
    leaf_specs: tuple = ()

    def validate(self):
        if self.cross_section not in ("circular", "square"):
            raise ValueError("cross_section must be 'circular' or 'square'")
        if self.dimension <= 0:
            raise ValueError("branch dimension must be positive")
        if self.length <= 0:
            raise ValueError("branch length must be positive")
        if self.particle_count < 2:
            raise ValueError("particle_count must be >= 2")
        if self.break_angle <= 0:
            raise ValueError("break_angle must be positive")
        for stiff in (self.external_joint_stiffness, self.internal_joint_stiffness):
            if stiff is not None and stiff <= 0:
                raise ValueError("joint stiffness must be positive")
        for leaf in self.leaf_specs:
            leaf.validate(self.particle_count)

    @property
    def radius(self):
        return self.dimension / 2.0

    def second_moment(self):
        d = self.dimension
        if self.cross_section == "circular":
            return np.pi * d**4 / 64.0
        return d**4 / 12.0

    def link_length(self):
        return self.length / (self.particle_count - 1)

    def internal_stiffness(self):
        if self.internal_joint_stiffness is not None:
            return self.internal_joint_stiffness
        return self.elastic_modulus * self.second_moment() / self.link_length()

    def external_stiffness(self):
        if self.external_joint_stiffness is not None:
            return self.external_joint_stiffness
        return self.internal_stiffness()

    def attach_rotation(self):
        tilt = np.deg2rad(self.orientation_deg)
        c, s = np.cos(tilt), np.sin(tilt)
        r_y = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return rotvec_to_matrix(self.attach_orientation) @ r_y


@dataclass(frozen=True)
class ContactLoad:
    branch_index: int
    link_index: int
    point: np.ndarray   # world, metres; on the indexed link (or leaf patch)
    force: np.ndarray   # world, newtons, applied to the plant


class CanopyStatic:
    """Flattened immutable geometry shared by every state of one canopy."""

    def __init__(self, specs):
        self.specs = tuple(specs)
        self.n_branches = len(self.specs)
        self.pcount = np.array([s.particle_count for s in self.specs], dtype=np.int64)
        self.poff = np.concatenate(([0], np.cumsum(self.pcount))).astype(np.int64)
        self.attach_pos = np.array(
            [s.attach_position for s in self.specs], dtype=float
        ).reshape(self.n_branches, 3)
        self.attach_rot = np.array(
            [s.attach_rotation() for s in self.specs]
        ).reshape(self.n_branches, 3, 3)
        self.link_len = np.array([s.link_length() for s in self.specs])
        self.radius = np.array([s.radius for s in self.specs])
        self.break_angle = np.array([s.break_angle for s in self.specs])

        kappa = np.empty(self.poff[-1])
        for b, s in enumerate(self.specs):
            j0 = self.poff[b]
            kappa[j0] = s.external_stiffness()
            kappa[j0 + 1 : self.poff[b + 1]] = s.internal_stiffness()
        self.kappa = kappa

        leaf_branch, leaf_particle, leaf_kappa = [], [], []
        leaf_half, leaf_rest_rot, leaf_thickness, leaf_slot = [], [], [], []
        for b, s in enumerate(self.specs):
            for slot, leaf in enumerate(s.leaf_specs):
                leaf_branch.append(b)
                leaf_particle.append(leaf.attach_particle_index)
                leaf_kappa.append(leaf.petiole_stiffness)
                leaf_half.append(leaf.patch_half_extents)
                leaf_rest_rot.append(_leaf_rest_frame(leaf.patch_normal))
                leaf_thickness.append(leaf.thickness)
                leaf_slot.append(slot)
        self.n_leaves = len(leaf_branch)
        self.leaf_branch = np.array(leaf_branch, dtype=np.int64)
        self.leaf_particle = np.array(leaf_particle, dtype=np.int64)
        self.leaf_kappa = np.array(leaf_kappa, dtype=float)
        self.leaf_half = np.array(leaf_half, dtype=float).reshape(self.n_leaves, 2)
        self.leaf_rest_rot = np.array(leaf_rest_rot, dtype=float).reshape(self.n_leaves, 3, 3)
        self.leaf_thickness = np.array(leaf_thickness, dtype=float)
        self.leaf_slot = np.array(leaf_slot, dtype=np.int64)

        # rest pose: straight chains along the attach frame's +z axis
        rest = np.empty((self.poff[-1], 3))
        for b, s in enumerate(self.specs):
            axis = self.attach_rot[b][:, 2]
            idx = np.arange(s.particle_count)
            rest[self.poff[b] : self.poff[b + 1]] = (
                self.attach_pos[b] + np.outer(idx * self.link_len[b], axis)
            )
        self.rest_particles = rest
        self.leaf_rest_rot_world = np.array(
            [self.attach_rot[self.leaf_branch[l]] @ self.leaf_rest_rot[l]
             for l in range(self.n_leaves)]
        ).reshape(self.n_leaves, 3, 3)

    def rest_tip(self, b):
        return self.rest_particles[self.poff[b + 1] - 1]


def _leaf_rest_frame(patch_normal):
    """Branch-local (u, v, n) frame for a leaf patch; u points off the branch."""
    n = np.asarray(patch_normal, dtype=float)
    norm = np.linalg.norm(n)
    if norm < 1e-9:
        raise ValueError("leaf patch_normal must be a nonzero vector")
    n = n / norm
    u = np.cross(n, np.array([0.0, 0.0, 1.0]))
    if np.linalg.norm(u) < 1e-6:
        u = np.cross(n, np.array([1.0, 0.0, 0.0]))
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return np.column_stack([u, v, n])


@dataclass(frozen=True)
class CanopyState:
    """Value-semantics canopy state; operations return new states."""

    static: CanopyStatic
    theta: np.ndarray           # (n_joints, 2) bending angles, radians
    leaf_theta: np.ndarray      # (n_leaves, 2) petiole angles
    broken: np.ndarray          # (n_branches,) latching flags
    max_tip_deviation: np.ndarray  # (n_branches,) metres, non-decreasing
    seed: int = 0
    _fk_cache: list = field(default_factory=lambda: [None], repr=False, compare=False)

    def _fk(self):
        if self._fk_cache[0] is None:
            self._fk_cache[0] = kernels.fk_all(self.static, self.theta, self.leaf_theta)
        return self._fk_cache[0]

    @property
    def n_branches(self):
        return self.static.n_branches

    def particle_positions(self, b):
        particles, _, _ = self._fk()
        return particles[self.static.poff[b] : self.static.poff[b + 1]].copy()

    def tip_positions(self):
        particles, _, _ = self._fk()
        return particles[self.static.poff[1:] - 1].copy()

    def tip_deviations(self):
        tips = self.tip_positions()
        rests = np.array(
            [self.static.rest_tip(b) for b in range(self.n_branches)]
        ).reshape(self.n_branches, 3)
        return np.linalg.norm(tips - rests, axis=1)


def build_canopy(specs, seed=0):
    """Canopy at rest: straight branches, nothing broken, zero deviation.

    An empty spec list yields an empty canopy (free space), which the
    harness uses for obstacle-free trials.
    """
    specs = tuple(specs)
    for s in specs:
        s.validate()
    static = CanopyStatic(specs)
    return CanopyState(
        static=static,
        theta=np.zeros((static.poff[-1], 2)),
        leaf_theta=np.zeros((static.n_leaves, 2)),
        broken=np.zeros(static.n_branches, dtype=bool),
        max_tip_deviation=np.zeros(static.n_branches),
        seed=seed,
    )


def _split_loads(state, loads):
    """Sort ContactLoads into link loads (axis parameter t) and leaf loads (u,v)."""
    st = state.static
    particles, _, leaf_rot = state._fk()
    link_lb, link_li, link_t, link_f = [], [], [], []
    leaf_ll, leaf_uv, leaf_f = [], [], []
    for load in loads:
        b = load.branch_index
        if not 0 <= b < st.n_branches:
            raise ValueError("contact load references invalid branch %d" % b)
        n_links = st.pcount[b] - 1
        point = np.asarray(load.point, dtype=float)
        force = np.asarray(load.force, dtype=float)
        if load.link_index < n_links:
            i = st.poff[b] + load.link_index
            a, bb = particles[i], particles[i + 1]
            ab = bb - a
            t = float(np.dot(point - a, ab) / max(np.dot(ab, ab), 1e-30))
            link_lb.append(b)
            link_li.append(load.link_index)
            link_t.append(min(max(t, 0.0), 1.0))
            link_f.append(force)
        else:
            slot = load.link_index - n_links
            matches = np.flatnonzero((st.leaf_branch == b) & (st.leaf_slot == slot))
            if matches.size != 1:
                raise ValueError("contact load references invalid leaf slot")
            l = int(matches[0])
            origin = particles[st.poff[b] + st.leaf_particle[l]]
            rel = point - origin
            au = float(np.clip(np.dot(rel, leaf_rot[l][:, 0]), 0.0, 2 * st.leaf_half[l, 0]))
            av = float(np.clip(np.dot(rel, leaf_rot[l][:, 1]), -st.leaf_half[l, 1], st.leaf_half[l, 1]))
            leaf_ll.append(l)
            leaf_uv.append((au, av))
            leaf_f.append(force)
    return (
        np.array(link_lb, dtype=np.int64),
        np.array(link_li, dtype=np.int64),
        np.array(link_t, dtype=float),
        np.array(link_f, dtype=float).reshape(-1, 3),
        np.array(leaf_ll, dtype=np.int64),
        np.array(leaf_uv, dtype=float).reshape(-1, 2),
        np.array(leaf_f, dtype=float).reshape(-1, 3),
    )


def relax_deformation(state, loads, iterations=DEFAULT_ITERATIONS,
                      step_gain=DEFAULT_STEP_GAIN, return_energies=False,
                      taxel_positions=None, taxel_radius=0.0,
                      contact_stiffness=0.0):
    """Quasi-static energy descent under the given contact loads.

    Returns a new CanopyState (and the per-iteration energy trace when
    requested).  Broken branches stay frozen; breakage latches.

    ``taxel_positions`` (with radius and stiffness) adds the penalty
    contact of the sensor spheres to the energy, so the plant settles
    in equilibrium with the sensor instead of under a one-shot load.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if step_gain <= 0:
        raise ValueError("step_gain must be positive")
    load_arrays = _split_loads(state, loads)

    theta = state.theta.copy()
    leaf_theta = state.leaf_theta.copy()
    broken = state.broken.copy()
    energies = kernels.relax(
        state.static, theta, leaf_theta, broken, *load_arrays,
        int(iterations), float(step_gain),
        taxel_positions, float(taxel_radius), float(contact_stiffness),
    )
    new_state = CanopyState(
        static=state.static,
        theta=theta,
        leaf_theta=leaf_theta,
        broken=broken,
        max_tip_deviation=state.max_tip_deviation.copy(),
        seed=state.seed,
    )
    new_state.max_tip_deviation[:] = np.maximum(
        state.max_tip_deviation, new_state.tip_deviations()
    )
    if return_energies:
        return new_state, energies
    return new_state


def closest_point_on_canopy(state, query_point):
    """Nearest surface point over all link capsules and leaf patches.

    Returns (branch_index, link_index, point, distance, surface_normal);
    leaf hits report link_index >= particle_count-1 (see kernels docs).
    Negative distance means the query is inside the surface.
    """
    particles, _, leaf_rot = state._fk()
    q = np.asarray(query_point, dtype=float).reshape(1, 3)
    b_idx, l_idx, point, dist, normal = kernels.closest_points(
        state.static, particles, leaf_rot, q
    )
    return int(b_idx[0]), int(l_idx[0]), point[0], float(dist[0]), normal[0]


def closest_points_batch(state, query_points):
    """Vectorized form of closest_point_on_canopy for many queries."""
    particles, _, leaf_rot = state._fk()
    q = np.asarray(query_points, dtype=float).reshape(-1, 3)
    return kernels.closest_points(state.static, particles, leaf_rot, q)


def total_disturbance(state):
    """Sum over branches of the running max tip deviation, metres."""
    return float(np.sum(state.max_tip_deviation))
