"""Pure NumPy reference implementation of the hot simulation kernels.

The compiled extension (``_kernels_cy``) implements the same three entry
points with identical semantics; ``kernels.py`` picks one at import time.

Canopy layout
-------------
A canopy is a set of branches.  Branch ``b`` has ``pcount[b]`` particles
spaced ``link_len[b]`` apart along its rest axis, and ``pcount[b]`` joints,
each with two bending DoF:

* joint 0: the external attachment joint, located at particle 0,
* joint j (1 <= j <= P-1): internal joint at particle j-1, bending link j-1.

Joint rotations are applied as Rx(theta[j,0]) followed by Ry(theta[j,1]) in
the running local frame; the link then extends along the local +z axis.

Leaves hang off a branch particle through a single 2-DoF petiole joint and
carry a rigid rectangular patch spanning ``[0, 2*half_u] x [-half_v, half_v]``
in the leaf's (u, v) plane.
"""

import numpy as np


def _rot_x(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _fk_branch(static, b, theta):
    """Forward chain for one branch.

    Returns (particles (P,3), frames (P,3,3), axes (P,2,3), origins (P,3)).
    ``frames[i]`` is the orientation carried by particle i (used to place
    leaves); ``axes[j]`` are the world-frame rotation axes of joint j's two
    DoF and ``origins[j]`` its pivot point.
    """
    p0, p1 = static.poff[b], static.poff[b + 1]
    n = p1 - p0
    th = theta[p0:p1]
    ell = static.link_len[b]

    particles = np.empty((n, 3))
    frames = np.empty((n, 3, 3))
    axes = np.empty((n, 2, 3))
    origins = np.empty((n, 3))

    R = static.attach_rot[b].copy()
    p = static.attach_pos[b].copy()
    particles[0] = p

    # external joint at particle 0
    origins[0] = p
    axes[0, 0] = R[:, 0]
    R = R @ _rot_x(th[0, 0])
    axes[0, 1] = R[:, 1]
    R = R @ _rot_y(th[0, 1])
    frames[0] = R

    for i in range(n - 1):
        j = i + 1
        origins[j] = p
        axes[j, 0] = R[:, 0]
        R = R @ _rot_x(th[j, 0])
        axes[j, 1] = R[:, 1]
        R = R @ _rot_y(th[j, 1])
        p = p + ell * R[:, 2]
        particles[i + 1] = p
        frames[i + 1] = R

    return particles, frames, axes, origins


def _leaf_rot_world(static, l, frames_b, leaf_theta):
    """World rotation of leaf l's patch frame (columns u, v, n)."""
    a = static.leaf_particle[l]
    base = frames_b[a] @ static.leaf_rest_rot[l]
    return base @ _rot_x(leaf_theta[l, 0]) @ _rot_y(leaf_theta[l, 1])


def fk_all(static, theta, leaf_theta):
    """Forward kinematics of the whole canopy.

    Returns (particles (n_particles,3), frames (n_particles,3,3),
    leaf_rot (n_leaves,3,3) world patch frames).
    """
    particles = np.empty((static.poff[-1], 3))
    frames = np.empty((static.poff[-1], 3, 3))
    for b in range(static.n_branches):
        p0, p1 = static.poff[b], static.poff[b + 1]
        particles[p0:p1], frames[p0:p1], _, _ = _fk_branch(static, b, theta)

    leaf_rot = np.empty((static.n_leaves, 3, 3))
    for l in range(static.n_leaves):
        b = static.leaf_branch[l]
        p0 = static.poff[b]
        leaf_rot[l] = _leaf_rot_world(
            static, l, frames[p0 : static.poff[b + 1]], leaf_theta
        )
    return particles, frames, leaf_rot


def _load_positions(static, theta, leaf_theta, link_lb, link_li, link_t, leaf_ll, leaf_uv):
    """World positions of every load application point under (theta, leaf_theta)."""
    particles, frames, leaf_rot = fk_all(static, theta, leaf_theta)
    pos_link = np.empty((len(link_lb), 3))
    for k in range(len(link_lb)):
        i = static.poff[link_lb[k]] + link_li[k]
        pos_link[k] = particles[i] + link_t[k] * (particles[i + 1] - particles[i])
    pos_leaf = np.empty((len(leaf_ll), 3))
    for k in range(len(leaf_ll)):
        l = leaf_ll[k]
        origin = particles[static.poff[static.leaf_branch[l]] + static.leaf_particle[l]]
        pos_leaf[k] = origin + leaf_rot[l][:, 0] * leaf_uv[k, 0] + leaf_rot[l][:, 1] * leaf_uv[k, 1]
    return pos_link, pos_leaf


def _energy(static, theta, leaf_theta, link_lb, link_li, link_t, link_f, leaf_ll, leaf_uv, leaf_f):
    """Total potential: joint springs minus work done by the external loads."""
    e = 0.5 * float(np.sum(static.kappa[:, None] * theta**2))
    if static.n_leaves:
        e += 0.5 * float(np.sum(static.leaf_kappa[:, None] * leaf_theta**2))

    if len(link_lb) or len(leaf_ll):
        pos_link, pos_leaf = _load_positions(
            static, theta, leaf_theta, link_lb, link_li, link_t, leaf_ll, leaf_uv
        )
        for k in range(len(link_lb)):
            i = static.poff[link_lb[k]] + link_li[k]
            rest = static.rest_particles[i] + link_t[k] * (
                static.rest_particles[i + 1] - static.rest_particles[i]
            )
            e -= float(np.dot(link_f[k], pos_link[k] - rest))
        for k in range(len(leaf_ll)):
            l = leaf_ll[k]
            origin_rest = static.rest_particles[
                static.poff[static.leaf_branch[l]] + static.leaf_particle[l]
            ]
            rr = static.leaf_rest_rot_world[l]
            rest = origin_rest + rr[:, 0] * leaf_uv[k, 0] + rr[:, 1] * leaf_uv[k, 1]
            e -= float(np.dot(leaf_f[k], pos_leaf[k] - rest))
    return e


def _contact_terms(static, particles, leaf_rot, taxel_pos, taxel_radius, k_c):
    """Penalty contact of taxel spheres against the canopy.

    Returns (energy, link_contacts, leaf_contacts) where link contacts are
    (branch, link, point, force-on-canopy) and leaf contacts are
    (leaf, attach_particle, point, force-on-canopy).  Each taxel interacts
    with its nearest canopy feature only, matching the tactile model.
    """
    b_idx, l_idx, point, dist, normal = closest_points(
        static, particles, leaf_rot, taxel_pos
    )
    energy = 0.0
    link_contacts = []
    leaf_contacts = []
    for k in range(len(taxel_pos)):
        b = b_idx[k]
        if b < 0:
            continue
        pen = taxel_radius - dist[k]
        if pen <= 0.0:
            continue
        energy += 0.5 * k_c * pen * pen
        force = -k_c * pen * normal[k]
        if l_idx[k] < static.pcount[b] - 1:
            link_contacts.append((int(b), int(l_idx[k]), point[k], force))
        else:
            slot = int(l_idx[k]) - (static.pcount[b] - 1)
            for l in range(static.n_leaves):
                if static.leaf_branch[l] == b and static.leaf_slot[l] == slot:
                    leaf_contacts.append((l, int(static.leaf_particle[l]), point[k], force))
                    break
    return energy, link_contacts, leaf_contacts


def _gradient(static, theta, leaf_theta, broken, link_lb, link_li, link_t, link_f, leaf_ll, leaf_uv, leaf_f,
              link_contacts=(), leaf_contacts=()):
    """dE/dtheta for joint and petiole DoF; zero for broken branches."""
    g = static.kappa[:, None] * theta
    g_leaf = static.leaf_kappa[:, None] * leaf_theta if static.n_leaves else np.zeros((0, 2))

    # cache per-branch FK only for branches that carry loads
    fk_cache = {}

    def branch_fk(b):
        if b not in fk_cache:
            fk_cache[b] = _fk_branch(static, b, theta)
        return fk_cache[b]

    for k in range(len(link_lb)):
        b = link_lb[k]
        if broken[b]:
            continue
        particles, frames, axes, origins = branch_fk(b)
        i = link_li[k]
        p = particles[i] + link_t[k] * (particles[i + 1] - particles[i])
        f = link_f[k]
        j0 = static.poff[b]
        for j in range(min(i + 1, static.pcount[b] - 1) + 1):
            lever = np.cross(p - origins[j], f)
            g[j0 + j, 0] -= np.dot(axes[j, 0], lever)
            g[j0 + j, 1] -= np.dot(axes[j, 1], lever)

    for k in range(len(leaf_ll)):
        l = leaf_ll[k]
        b = static.leaf_branch[l]
        if broken[b]:
            continue
        particles, frames, axes, origins = branch_fk(b)
        a = static.leaf_particle[l]
        origin = particles[a]
        rot = _leaf_rot_world(static, l, frames, leaf_theta)
        p = origin + rot[:, 0] * leaf_uv[k, 0] + rot[:, 1] * leaf_uv[k, 1]
        f = leaf_f[k]
        j0 = static.poff[b]
        for j in range(a + 1):
            lever = np.cross(p - origins[j], f)
            g[j0 + j, 0] -= np.dot(axes[j, 0], lever)
            g[j0 + j, 1] -= np.dot(axes[j, 1], lever)
        # petiole axes: leaf-local u before Rx, then leaf-local v after Rx
        base = frames[a] @ static.leaf_rest_rot[l]
        ax_u = base[:, 0]
        ax_v = (base @ _rot_x(leaf_theta[l, 0]))[:, 1]
        lever = np.cross(p - origin, f)
        g_leaf[l, 0] -= np.dot(ax_u, lever)
        g_leaf[l, 1] -= np.dot(ax_v, lever)

    for b, i, p, f in link_contacts:
        if broken[b]:
            continue
        particles, frames, axes, origins = branch_fk(b)
        j0 = static.poff[b]
        for j in range(min(i + 1, static.pcount[b] - 1) + 1):
            lever = np.cross(p - origins[j], f)
            g[j0 + j, 0] -= np.dot(axes[j, 0], lever)
            g[j0 + j, 1] -= np.dot(axes[j, 1], lever)

    for l, a, p, f in leaf_contacts:
        b = static.leaf_branch[l]
        if broken[b]:
            continue
        particles, frames, axes, origins = branch_fk(b)
        origin = particles[a]
        j0 = static.poff[b]
        for j in range(a + 1):
            lever = np.cross(p - origins[j], f)
            g[j0 + j, 0] -= np.dot(axes[j, 0], lever)
            g[j0 + j, 1] -= np.dot(axes[j, 1], lever)
        base = frames[a] @ static.leaf_rest_rot[l]
        ax_u = base[:, 0]
        ax_v = (base @ _rot_x(leaf_theta[l, 0]))[:, 1]
        lever = np.cross(p - origin, f)
        g_leaf[l, 0] -= np.dot(ax_u, lever)
        g_leaf[l, 1] -= np.dot(ax_v, lever)

    # broken branches are frozen: kill their joint and petiole gradients
    for b in range(static.n_branches):
        if broken[b]:
            g[static.poff[b] : static.poff[b + 1]] = 0.0
    for l in range(static.n_leaves):
        if broken[static.leaf_branch[l]]:
            g_leaf[l] = 0.0

    return g, g_leaf


def relax(static, theta, leaf_theta, broken, link_lb, link_li, link_t, link_f,
          leaf_ll, leaf_uv, leaf_f, iterations, step_gain,
          taxel_pos=None, taxel_radius=0.0, contact_stiffness=0.0):
    """Damped preconditioned gradient descent on the deformation energy.

    Mutates theta, leaf_theta and broken in place.  Returns the per-iteration
    accepted energy (non-increasing by construction: each step is accepted
    only if it does not raise the energy, halving the step otherwise).

    When taxel sphere centres are supplied, a penalty contact term
    (0.5 * k_c * penetration^2 against the nearest canopy feature per taxel)
    joins the energy, so relaxation settles where elastic restoring torques
    balance the contact forces rather than under a frozen external load.
    """
    args = (link_lb, link_li, link_t, link_f, leaf_ll, leaf_uv, leaf_f)
    if taxel_pos is None:
        taxel_pos = np.zeros((0, 3))
    taxel_pos = np.asarray(taxel_pos, dtype=float).reshape(-1, 3)
    inv_kappa = 1.0 / static.kappa[:, None]
    inv_leaf_kappa = (
        1.0 / static.leaf_kappa[:, None] if static.n_leaves else np.zeros((0, 2))
    )

    def evaluate(th, lth):
        e = _energy(static, th, lth, *args)
        if len(taxel_pos) == 0:
            return e, (), ()
        particles, frames, leaf_rot = fk_all(static, th, lth)
        e_c, link_c, leaf_c = _contact_terms(
            static, particles, leaf_rot, taxel_pos, taxel_radius, contact_stiffness
        )
        return e + e_c, link_c, leaf_c

    energies = np.empty(iterations)
    e_old, link_c, leaf_c = evaluate(theta, leaf_theta)
    n_done = 0
    for it in range(iterations):
        g, g_leaf = _gradient(static, theta, leaf_theta, broken, *args,
                              link_contacts=link_c, leaf_contacts=leaf_c)
        step = step_gain
        accepted = False
        for _ in range(40):
            th_new = theta - step * g * inv_kappa
            lth_new = leaf_theta - step * g_leaf * inv_leaf_kappa if static.n_leaves else leaf_theta
            e_new, link_new, leaf_new = evaluate(th_new, lth_new)
            if e_new <= e_old + 1e-14 * max(1.0, abs(e_old)):
                accepted = True
                break
            step *= 0.5
        e_prev = e_old
        if accepted:
            theta[:] = th_new
            if static.n_leaves:
                leaf_theta[:] = lth_new
            e_old = min(e_old, e_new)
            link_c, leaf_c = link_new, leaf_new
        energies[it] = e_old
        n_done = it + 1

        # plastic breakage: latch and freeze at the first over-limit angle
        for b in range(static.n_branches):
            if broken[b]:
                continue
            th_b = theta[static.poff[b] : static.poff[b + 1]]
            if np.any(np.hypot(th_b[:, 0], th_b[:, 1]) > static.break_angle[b]):
                broken[b] = True

        # converged: no acceptable descent step, or negligible decrease
        if not accepted or e_prev - e_old <= 1e-13 * max(1.0, abs(e_old)):
            break
    return energies[:n_done]


def closest_points(static, particles, leaf_rot, queries):
    """Nearest surface point on the canopy for each query point.

    Link capsules have radius ``static.radius[b]``; leaf patches are thin
    slabs of half-thickness ``static.leaf_thickness[l]``.  Returns
    (branch_idx, link_idx, point (Q,3), dist (Q,), normal (Q,3)); leaf hits
    use link_idx = pcount[b]-1 + slot, where slot counts that branch's
    leaves in definition order.  dist <= 0 means the query is inside the
    surface; the normal always points from the surface toward the query.
    """
    q = np.asarray(queries, dtype=float)
    nq = q.shape[0]
    best_d = np.full(nq, np.inf)
    b_idx = np.full(nq, -1, dtype=np.int64)
    l_idx = np.full(nq, -1, dtype=np.int64)
    point = np.zeros((nq, 3))
    normal = np.zeros((nq, 3))

    for b in range(static.n_branches):
        p0, p1 = static.poff[b], static.poff[b + 1]
        r = static.radius[b]
        a = particles[p0 : p1 - 1]          # link starts
        bb = particles[p0 + 1 : p1]         # link ends
        ab = bb - a
        ab2 = np.einsum("ij,ij->i", ab, ab)
        for k in range(nq):
            t = np.einsum("ij,ij->i", q[k] - a, ab) / np.maximum(ab2, 1e-30)
            t = np.clip(t, 0.0, 1.0)
            c = a + t[:, None] * ab
            d_vec = q[k] - c
            d_axis = np.sqrt(np.einsum("ij,ij->i", d_vec, d_vec))
            i = int(np.argmin(d_axis))
            dist = d_axis[i] - r
            if dist < best_d[k]:
                if d_axis[i] > 1e-12:
                    nrm = d_vec[i] / d_axis[i]
                else:
                    # query on the axis: pick any perpendicular
                    axis = ab[i] / max(np.sqrt(ab2[i]), 1e-30)
                    nrm = np.cross(axis, np.array([1.0, 0.0, 0.0]))
                    if np.linalg.norm(nrm) < 1e-6:
                        nrm = np.cross(axis, np.array([0.0, 1.0, 0.0]))
                    nrm /= np.linalg.norm(nrm)
                best_d[k] = dist
                b_idx[k] = b
                l_idx[k] = i
                point[k] = c[i] + r * nrm
                normal[k] = nrm

    for l in range(static.n_leaves):
        b = static.leaf_branch[l]
        origin = particles[static.poff[b] + static.leaf_particle[l]]
        u, v, nvec = leaf_rot[l][:, 0], leaf_rot[l][:, 1], leaf_rot[l][:, 2]
        hu, hv = static.leaf_half[l]
        thick = static.leaf_thickness[l]
        for k in range(nq):
            rel = q[k] - origin
            au = np.clip(np.dot(rel, u), 0.0, 2.0 * hu)
            av = np.clip(np.dot(rel, v), -hv, hv)
            c = origin + au * u + av * v
            d_vec = q[k] - c
            d_plane = np.linalg.norm(d_vec)
            dist = d_plane - thick
            if dist < best_d[k]:
                if d_plane > 1e-12:
                    nrm = d_vec / d_plane
                else:
                    nrm = nvec
                best_d[k] = dist
                b_idx[k] = b
                l_idx[k] = static.pcount[b] - 1 + static.leaf_slot[l]
                point[k] = c + thick * nrm
                normal[k] = nrm

    return b_idx, l_idx, point, best_d, normal
