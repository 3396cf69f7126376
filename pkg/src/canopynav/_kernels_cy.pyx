# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementation of the hot simulation kernels.

Mirrors ``_kernels_py`` exactly (same entry points, same iteration and
tie-breaking order) so the two backends produce matching results; see that
module for the canopy layout documentation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, hypot, sqrt, sin, cos

cnp.import_array()


# ---------------------------------------------------------------------------
# small dense-3 helpers

cdef inline double _dot3(const double* a, const double* b) nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void _cross3(const double* a, const double* b, double* out) nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void _mat33_mul(const double* a, const double* b, double* out) nogil:
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = (
                a[3 * i + 0] * b[0 + j]
                + a[3 * i + 1] * b[3 + j]
                + a[3 * i + 2] * b[6 + j]
            )


cdef inline void _post_rot_x(double* R, double t) nogil:
    # R <- R @ Rx(t): col1' = c*col1 + s*col2, col2' = -s*col1 + c*col2
    cdef double c = cos(t), s = sin(t)
    cdef double c1, c2
    cdef int i
    for i in range(3):
        c1 = R[3 * i + 1]
        c2 = R[3 * i + 2]
        R[3 * i + 1] = c * c1 + s * c2
        R[3 * i + 2] = -s * c1 + c * c2


cdef inline void _post_rot_y(double* R, double t) nogil:
    # R <- R @ Ry(t): col0' = c*col0 - s*col2, col2' = s*col0 + c*col2
    cdef double c = cos(t), s = sin(t)
    cdef double c0, c2
    cdef int i
    for i in range(3):
        c0 = R[3 * i + 0]
        c2 = R[3 * i + 2]
        R[3 * i + 0] = c * c0 - s * c2
        R[3 * i + 2] = s * c0 + c * c2


# ---------------------------------------------------------------------------
# static-layout unpacking (python-level attribute access happens once per call)

cdef class _Static:
    cdef cnp.int64_t[:] poff, pcount
    cdef cnp.int64_t[:] leaf_branch, leaf_particle, leaf_slot
    cdef double[:] link_len, radius, kappa, break_angle
    cdef double[:] leaf_kappa, leaf_thickness
    cdef double[:, :] attach_pos, leaf_half, rest_particles
    cdef double[:, :, :] attach_rot, leaf_rest_rot, leaf_rest_rot_world
    cdef int n_branches, n_leaves, n_particles

    def __init__(self, static):
        self.poff = np.ascontiguousarray(static.poff, dtype=np.int64)
        self.pcount = np.ascontiguousarray(static.pcount, dtype=np.int64)
        self.link_len = np.ascontiguousarray(static.link_len, dtype=np.float64)
        self.radius = np.ascontiguousarray(static.radius, dtype=np.float64)
        self.kappa = np.ascontiguousarray(static.kappa, dtype=np.float64)
        self.break_angle = np.ascontiguousarray(static.break_angle, dtype=np.float64)
        self.attach_pos = np.ascontiguousarray(static.attach_pos, dtype=np.float64)
        self.attach_rot = np.ascontiguousarray(static.attach_rot, dtype=np.float64)
        self.rest_particles = np.ascontiguousarray(static.rest_particles, dtype=np.float64)
        self.n_branches = static.n_branches
        self.n_leaves = static.n_leaves
        self.n_particles = self.poff[self.n_branches]
        if static.n_leaves:
            self.leaf_branch = np.ascontiguousarray(static.leaf_branch, dtype=np.int64)
            self.leaf_particle = np.ascontiguousarray(static.leaf_particle, dtype=np.int64)
            self.leaf_slot = np.ascontiguousarray(static.leaf_slot, dtype=np.int64)
            self.leaf_kappa = np.ascontiguousarray(static.leaf_kappa, dtype=np.float64)
            self.leaf_thickness = np.ascontiguousarray(static.leaf_thickness, dtype=np.float64)
            self.leaf_half = np.ascontiguousarray(static.leaf_half, dtype=np.float64)
            self.leaf_rest_rot = np.ascontiguousarray(static.leaf_rest_rot, dtype=np.float64)
            self.leaf_rest_rot_world = np.ascontiguousarray(
                static.leaf_rest_rot_world, dtype=np.float64
            )
        else:
            self.leaf_branch = np.zeros(0, dtype=np.int64)
            self.leaf_particle = np.zeros(0, dtype=np.int64)
            self.leaf_slot = np.zeros(0, dtype=np.int64)
            self.leaf_kappa = np.zeros(0, dtype=np.float64)
            self.leaf_thickness = np.zeros(0, dtype=np.float64)
            self.leaf_half = np.zeros((0, 2), dtype=np.float64)
            self.leaf_rest_rot = np.zeros((0, 3, 3), dtype=np.float64)
            self.leaf_rest_rot_world = np.zeros((0, 3, 3), dtype=np.float64)


# ---------------------------------------------------------------------------
# forward kinematics

cdef void _fk_branch_c(_Static st, int b, double[:, :] theta,
                       double[:, :] particles, double[:, :, :] frames,
                       double[:, :, :] axes, double[:, :] origins) nogil:
    """Chain FK for one branch; writes the branch's slice of the buffers."""
    cdef cnp.int64_t p0 = st.poff[b]
    cdef cnp.int64_t n = st.poff[b + 1] - p0
    cdef double ell = st.link_len[b]
    cdef double R[9]
    cdef double p[3]
    cdef int i, j, k
    cdef cnp.int64_t idx

    for i in range(3):
        p[i] = st.attach_pos[b, i]
        for j in range(3):
            R[3 * i + j] = st.attach_rot[b, i, j]

    for k in range(3):
        particles[p0, k] = p[k]
        origins[p0, k] = p[k]
        axes[p0, 0, k] = R[3 * k + 0]
    _post_rot_x(R, theta[p0, 0])
    for k in range(3):
        axes[p0, 1, k] = R[3 * k + 1]
    _post_rot_y(R, theta[p0, 1])
    for i in range(3):
        for j in range(3):
            frames[p0, i, j] = R[3 * i + j]

    for i in range(n - 1):
        idx = p0 + i + 1
        for k in range(3):
            origins[idx, k] = p[k]
            axes[idx, 0, k] = R[3 * k + 0]
        _post_rot_x(R, theta[idx, 0])
        for k in range(3):
            axes[idx, 1, k] = R[3 * k + 1]
        _post_rot_y(R, theta[idx, 1])
        for k in range(3):
            p[k] = p[k] + ell * R[3 * k + 2]
            particles[idx, k] = p[k]
        for j in range(3):
            for k in range(3):
                frames[idx, j, k] = R[3 * j + k]


cdef void _leaf_rot_c(_Static st, int l, double[:, :, :] frames,
                      double[:, :] leaf_theta, double* out) nogil:
    """World patch frame of leaf l (columns u, v, n)."""
    cdef cnp.int64_t a = st.poff[st.leaf_branch[l]] + st.leaf_particle[l]
    cdef double base[9]
    cdef double fa[9]
    cdef double rr[9]
    cdef int i, j
    for i in range(3):
        for j in range(3):
            fa[3 * i + j] = frames[a, i, j]
            rr[3 * i + j] = st.leaf_rest_rot[l, i, j]
    _mat33_mul(fa, rr, base)
    _post_rot_x(base, leaf_theta[l, 0])
    _post_rot_y(base, leaf_theta[l, 1])
    for i in range(9):
        out[i] = base[i]


cdef void _fk_all_c(_Static st, double[:, :] theta, double[:, :] leaf_theta,
                    double[:, :] particles, double[:, :, :] frames,
                    double[:, :, :] axes, double[:, :] origins,
                    double[:, :, :] leaf_rot) nogil:
    cdef int b, l, i, j
    cdef double lr[9]
    for b in range(st.n_branches):
        _fk_branch_c(st, b, theta, particles, frames, axes, origins)
    for l in range(st.n_leaves):
        _leaf_rot_c(st, l, frames, leaf_theta, lr)
        for i in range(3):
            for j in range(3):
                leaf_rot[l, i, j] = lr[3 * i + j]


def fk_all(static, theta, leaf_theta):
    """Forward kinematics of the whole canopy (see _kernels_py.fk_all)."""
    cdef _Static st = _Static(static)
    th = np.ascontiguousarray(theta, dtype=np.float64)
    lth = np.ascontiguousarray(leaf_theta, dtype=np.float64).reshape(-1, 2)
    particles = np.empty((st.n_particles, 3))
    frames = np.empty((st.n_particles, 3, 3))
    axes = np.empty((st.n_particles, 2, 3))
    origins = np.empty((st.n_particles, 3))
    leaf_rot = np.empty((st.n_leaves, 3, 3))
    _fk_all_c(st, th, lth, particles, frames, axes, origins, leaf_rot)
    return particles, frames, leaf_rot


# ---------------------------------------------------------------------------
# closest surface point

cdef void _closest_one(_Static st, double[:, :] particles,
                       double[:, :, :] leaf_rot, const double* q,
                       cnp.int64_t* best_b, cnp.int64_t* best_l,
                       double* point, double* dist, double* normal) nogil:
    cdef double best_d = INFINITY
    cdef cnp.int64_t bb = -1, ll = -1
    cdef int b, l, i, k
    cdef cnp.int64_t p0, p1, nl, besti
    cdef double r, ab2, t, d_axis, d, best_axis
    cdef double a[3]
    cdef double ab[3]
    cdef double c[3]
    cdef double dv[3]
    cdef double nrm[3]
    cdef double axis[3]
    cdef double tmp[3]
    cdef double bestc[3]
    cdef double au, av, hu, hv, thick, d_plane
    cdef double u[3]
    cdef double v[3]
    cdef double nvec[3]
    cdef double rel[3]
    cdef double n_axis

    for b in range(st.n_branches):
        p0 = st.poff[b]
        p1 = st.poff[b + 1]
        r = st.radius[b]
        nl = p1 - p0 - 1
        best_axis = INFINITY
        besti = -1
        for i in range(nl):
            for k in range(3):
                a[k] = particles[p0 + i, k]
                ab[k] = particles[p0 + i + 1, k] - a[k]
            ab2 = _dot3(ab, ab)
            if ab2 < 1e-30:
                ab2 = 1e-30
            for k in range(3):
                tmp[k] = q[k] - a[k]
            t = _dot3(tmp, ab) / ab2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            for k in range(3):
                c[k] = a[k] + t * ab[k]
                dv[k] = q[k] - c[k]
            d_axis = sqrt(_dot3(dv, dv))
            if d_axis < best_axis:
                best_axis = d_axis
                besti = i
        if besti < 0:
            continue
        d = best_axis - r
        if d < best_d:
            # recompute the winning link's geometry
            for k in range(3):
                a[k] = particles[p0 + besti, k]
                ab[k] = particles[p0 + besti + 1, k] - a[k]
            ab2 = _dot3(ab, ab)
            if ab2 < 1e-30:
                ab2 = 1e-30
            for k in range(3):
                tmp[k] = q[k] - a[k]
            t = _dot3(tmp, ab) / ab2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            for k in range(3):
                c[k] = a[k] + t * ab[k]
                dv[k] = q[k] - c[k]
            d_axis = sqrt(_dot3(dv, dv))
            if d_axis > 1e-12:
                for k in range(3):
                    nrm[k] = dv[k] / d_axis
            else:
                n_axis = sqrt(ab2)
                if n_axis < 1e-30:
                    n_axis = 1e-30
                for k in range(3):
                    axis[k] = ab[k] / n_axis
                tmp[0] = 1.0; tmp[1] = 0.0; tmp[2] = 0.0
                _cross3(axis, tmp, nrm)
                if sqrt(_dot3(nrm, nrm)) < 1e-6:
                    tmp[0] = 0.0; tmp[1] = 1.0; tmp[2] = 0.0
                    _cross3(axis, tmp, nrm)
                n_axis = sqrt(_dot3(nrm, nrm))
                for k in range(3):
                    nrm[k] /= n_axis
            best_d = d
            bb = b
            ll = besti
            for k in range(3):
                bestc[k] = c[k] + r * nrm[k]
                normal[k] = nrm[k]

    for l in range(st.n_leaves):
        b = <int> st.leaf_branch[l]
        p0 = st.poff[b] + st.leaf_particle[l]
        for k in range(3):
            u[k] = leaf_rot[l, k, 0]
            v[k] = leaf_rot[l, k, 1]
            nvec[k] = leaf_rot[l, k, 2]
            rel[k] = q[k] - particles[p0, k]
        hu = st.leaf_half[l, 0]
        hv = st.leaf_half[l, 1]
        thick = st.leaf_thickness[l]
        au = _dot3(rel, u)
        if au < 0.0:
            au = 0.0
        elif au > 2.0 * hu:
            au = 2.0 * hu
        av = _dot3(rel, v)
        if av < -hv:
            av = -hv
        elif av > hv:
            av = hv
        for k in range(3):
            c[k] = particles[p0, k] + au * u[k] + av * v[k]
            dv[k] = q[k] - c[k]
        d_plane = sqrt(_dot3(dv, dv))
        d = d_plane - thick
        if d < best_d:
            if d_plane > 1e-12:
                for k in range(3):
                    nrm[k] = dv[k] / d_plane
            else:
                for k in range(3):
                    nrm[k] = nvec[k]
            best_d = d
            bb = b
            ll = st.pcount[b] - 1 + st.leaf_slot[l]
            for k in range(3):
                bestc[k] = c[k] + thick * nrm[k]
                normal[k] = nrm[k]

    best_b[0] = bb
    best_l[0] = ll
    dist[0] = best_d
    if bb >= 0:
        for k in range(3):
            point[k] = bestc[k]
    else:
        for k in range(3):
            point[k] = 0.0
            normal[k] = 0.0


def closest_points(static, particles, leaf_rot, queries):
    """Nearest canopy surface point per query (see _kernels_py)."""
    cdef _Static st = _Static(static)
    cdef double[:, :] parts = np.ascontiguousarray(particles, dtype=np.float64)
    cdef double[:, :, :] lrot = np.ascontiguousarray(
        leaf_rot, dtype=np.float64
    ).reshape(-1, 3, 3)
    q_arr = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :] q = q_arr
    cdef Py_ssize_t nq = q.shape[0]

    b_np = np.full(nq, -1, dtype=np.int64)
    l_np = np.full(nq, -1, dtype=np.int64)
    point_np = np.zeros((nq, 3))
    dist_np = np.full(nq, np.inf)
    normal_np = np.zeros((nq, 3))
    cdef cnp.int64_t[:] b_idx = b_np
    cdef cnp.int64_t[:] l_idx = l_np
    cdef double[:, :] point = point_np
    cdef double[:] dist = dist_np
    cdef double[:, :] normal = normal_np

    cdef Py_ssize_t k
    cdef double qv[3]
    for k in range(nq):
        qv[0] = q[k, 0]; qv[1] = q[k, 1]; qv[2] = q[k, 2]
        _closest_one(st, parts, lrot, qv,
                     &b_idx[k], &l_idx[k], &point[k, 0], &dist[k], &normal[k, 0])
    return b_np, l_np, point_np, dist_np, normal_np


# ---------------------------------------------------------------------------
# relaxation

cdef double _energy_c(_Static st, double[:, :] theta, double[:, :] leaf_theta,
                      double[:, :] particles, double[:, :, :] leaf_rot,
                      cnp.int64_t[:] link_lb, cnp.int64_t[:] link_li,
                      double[:] link_t, double[:, :] link_f,
                      cnp.int64_t[:] leaf_ll, double[:, :] leaf_uv,
                      double[:, :] leaf_f) nogil:
    """Spring energy minus external-load work (FK already computed)."""
    cdef double e = 0.0
    cdef int j, k, kk
    cdef cnp.int64_t i, l, o
    cdef double pos[3]
    cdef double rest[3]

    for j in range(st.n_particles):
        e += 0.5 * st.kappa[j] * (theta[j, 0] * theta[j, 0] + theta[j, 1] * theta[j, 1])
    for j in range(st.n_leaves):
        e += 0.5 * st.leaf_kappa[j] * (
            leaf_theta[j, 0] * leaf_theta[j, 0] + leaf_theta[j, 1] * leaf_theta[j, 1]
        )

    for k in range(link_lb.shape[0]):
        i = st.poff[link_lb[k]] + link_li[k]
        for kk in range(3):
            pos[kk] = particles[i, kk] + link_t[k] * (particles[i + 1, kk] - particles[i, kk])
            rest[kk] = st.rest_particles[i, kk] + link_t[k] * (
                st.rest_particles[i + 1, kk] - st.rest_particles[i, kk]
            )
            e -= link_f[k, kk] * (pos[kk] - rest[kk])

    for k in range(leaf_ll.shape[0]):
        l = leaf_ll[k]
        o = st.poff[st.leaf_branch[l]] + st.leaf_particle[l]
        for kk in range(3):
            pos[kk] = (
                particles[o, kk]
                + leaf_rot[l, kk, 0] * leaf_uv[k, 0]
                + leaf_rot[l, kk, 1] * leaf_uv[k, 1]
            )
            rest[kk] = (
                st.rest_particles[o, kk]
                + st.leaf_rest_rot_world[l, kk, 0] * leaf_uv[k, 0]
                + st.leaf_rest_rot_world[l, kk, 1] * leaf_uv[k, 1]
            )
            e -= leaf_f[k, kk] * (pos[kk] - rest[kk])
    return e


cdef double _contact_terms_c(_Static st, double[:, :] particles,
                             double[:, :, :] leaf_rot, double[:, :] taxel_pos,
                             double taxel_radius, double k_c,
                             cnp.int64_t[:] c_kind, cnp.int64_t[:] c_b,
                             cnp.int64_t[:] c_i, double[:, :] c_point,
                             double[:, :] c_force, cnp.int64_t* n_contacts) nogil:
    """Penalty contact of taxel spheres; fills the contact arrays.

    kind 0 = link contact (c_b branch, c_i link); kind 1 = leaf contact
    (c_b leaf index, c_i attach particle index within the branch).
    """
    cdef double energy = 0.0
    cdef cnp.int64_t m = 0
    cdef Py_ssize_t k
    cdef int kk, l, slot
    cdef cnp.int64_t bb, ll
    cdef double dist, pen
    cdef double qv[3]
    cdef double point[3]
    cdef double normal[3]

    for k in range(taxel_pos.shape[0]):
        qv[0] = taxel_pos[k, 0]; qv[1] = taxel_pos[k, 1]; qv[2] = taxel_pos[k, 2]
        _closest_one(st, particles, leaf_rot, qv, &bb, &ll, point, &dist, normal)
        if bb < 0:
            continue
        pen = taxel_radius - dist
        if pen <= 0.0:
            continue
        energy += 0.5 * k_c * pen * pen
        if ll < st.pcount[bb] - 1:
            c_kind[m] = 0
            c_b[m] = bb
            c_i[m] = ll
        else:
            slot = <int> (ll - (st.pcount[bb] - 1))
            for l in range(st.n_leaves):
                if st.leaf_branch[l] == bb and st.leaf_slot[l] == slot:
                    c_kind[m] = 1
                    c_b[m] = l
                    c_i[m] = st.leaf_particle[l]
                    break
        for kk in range(3):
            c_point[m, kk] = point[kk]
            c_force[m, kk] = -k_c * pen * normal[kk]
        m += 1
    n_contacts[0] = m
    return energy


cdef void _gradient_c(_Static st, double[:, :] theta, double[:, :] leaf_theta,
                      cnp.uint8_t[:] broken,
                      double[:, :] particles, double[:, :, :] frames,
                      double[:, :, :] axes, double[:, :] origins,
                      double[:, :, :] leaf_rot,
                      cnp.int64_t[:] link_lb, cnp.int64_t[:] link_li,
                      double[:] link_t, double[:, :] link_f,
                      cnp.int64_t[:] leaf_ll, double[:, :] leaf_uv,
                      double[:, :] leaf_f,
                      cnp.int64_t[:] c_kind, cnp.int64_t[:] c_b,
                      cnp.int64_t[:] c_i, double[:, :] c_point,
                      double[:, :] c_force, cnp.int64_t n_contacts,
                      double[:, :] g, double[:, :] g_leaf) nogil:
    """dE/dtheta; FK buffers must match (theta, leaf_theta)."""
    cdef int k, kk, j, jmax, a
    cdef cnp.int64_t b, i, l, j0, o
    cdef double p[3]
    cdef double f[3]
    cdef double rel[3]
    cdef double lever[3]
    cdef double base[9]
    cdef double fa[9]
    cdef double rr[9]
    cdef double c1, c2, ct, stt
    cdef double ax_u[3]
    cdef double ax_v[3]

    for j in range(st.n_particles):
        g[j, 0] = st.kappa[j] * theta[j, 0]
        g[j, 1] = st.kappa[j] * theta[j, 1]
    for j in range(st.n_leaves):
        g_leaf[j, 0] = st.leaf_kappa[j] * leaf_theta[j, 0]
        g_leaf[j, 1] = st.leaf_kappa[j] * leaf_theta[j, 1]

    # external link loads
    for k in range(link_lb.shape[0]):
        b = link_lb[k]
        if broken[b]:
            continue
        i = st.poff[b] + link_li[k]
        for kk in range(3):
            p[kk] = particles[i, kk] + link_t[k] * (particles[i + 1, kk] - particles[i, kk])
            f[kk] = link_f[k, kk]
        _apply_point_load(st, b, <int> link_li[k], p, f, axes, origins, g)

    # external leaf loads
    for k in range(leaf_ll.shape[0]):
        l = leaf_ll[k]
        b = st.leaf_branch[l]
        if broken[b]:
            continue
        o = st.poff[b] + st.leaf_particle[l]
        for kk in range(3):
            p[kk] = (
                particles[o, kk]
                + leaf_rot[l, kk, 0] * leaf_uv[k, 0]
                + leaf_rot[l, kk, 1] * leaf_uv[k, 1]
            )
            f[kk] = leaf_f[k, kk]
        _apply_leaf_load(st, <int> l, p, f, theta, leaf_theta,
                         particles, frames, axes, origins, g, g_leaf)

    # contact loads
    for k in range(n_contacts):
        for kk in range(3):
            p[kk] = c_point[k, kk]
            f[kk] = c_force[k, kk]
        if c_kind[k] == 0:
            b = c_b[k]
            if broken[b]:
                continue
            _apply_point_load(st, b, <int> c_i[k], p, f, axes, origins, g)
        else:
            l = c_b[k]
            if broken[st.leaf_branch[l]]:
                continue
            _apply_leaf_load(st, <int> l, p, f, theta, leaf_theta,
                             particles, frames, axes, origins, g, g_leaf)

    # broken branches are frozen
    for b in range(st.n_branches):
        if broken[b]:
            for j in range(<int> st.poff[b], <int> st.poff[b + 1]):
                g[j, 0] = 0.0
                g[j, 1] = 0.0
    for l in range(st.n_leaves):
        if broken[st.leaf_branch[l]]:
            g_leaf[l, 0] = 0.0
            g_leaf[l, 1] = 0.0


cdef inline void _apply_point_load(_Static st, cnp.int64_t b, int i,
                                   const double* p, const double* f,
                                   double[:, :, :] axes, double[:, :] origins,
                                   double[:, :] g) nogil:
    """Torque contribution of a force at p on link i of branch b."""
    cdef cnp.int64_t j0 = st.poff[b]
    cdef int jmax = i + 1
    cdef int j, kk
    cdef double rel[3]
    cdef double lever[3]
    cdef double ax[3]
    if jmax > <int> st.pcount[b] - 1:
        jmax = <int> st.pcount[b] - 1
    for j in range(jmax + 1):
        for kk in range(3):
            rel[kk] = p[kk] - origins[j0 + j, kk]
        _cross3(rel, f, lever)
        for kk in range(3):
            ax[kk] = axes[j0 + j, 0, kk]
        g[j0 + j, 0] -= _dot3(ax, lever)
        for kk in range(3):
            ax[kk] = axes[j0 + j, 1, kk]
        g[j0 + j, 1] -= _dot3(ax, lever)


cdef void _apply_leaf_load(_Static st, int l, const double* p, const double* f,
                           double[:, :] theta, double[:, :] leaf_theta,
                           double[:, :] particles, double[:, :, :] frames,
                           double[:, :, :] axes, double[:, :] origins,
                           double[:, :] g, double[:, :] g_leaf) nogil:
    """Torque contribution of a force applied to leaf l's patch."""
    cdef cnp.int64_t b = st.leaf_branch[l]
    cdef cnp.int64_t j0 = st.poff[b]
    cdef int a = <int> st.leaf_particle[l]
    cdef cnp.int64_t o = j0 + a
    cdef int j, kk
    cdef double rel[3]
    cdef double lever[3]
    cdef double ax[3]
    cdef double base[9]
    cdef double fa[9]
    cdef double rr[9]
    cdef double ct, stt, c1, c2

    for j in range(a + 1):
        for kk in range(3):
            rel[kk] = p[kk] - origins[j0 + j, kk]
        _cross3(rel, f, lever)
        for kk in range(3):
            ax[kk] = axes[j0 + j, 0, kk]
        g[j0 + j, 0] -= _dot3(ax, lever)
        for kk in range(3):
            ax[kk] = axes[j0 + j, 1, kk]
        g[j0 + j, 1] -= _dot3(ax, lever)

    # petiole axes: leaf-local u before Rx, then leaf-local v after Rx
    for j in range(3):
        for kk in range(3):
            fa[3 * j + kk] = frames[o, j, kk]
            rr[3 * j + kk] = st.leaf_rest_rot[l, j, kk]
    _mat33_mul(fa, rr, base)
    for kk in range(3):
        ax[kk] = base[3 * kk + 0]
        rel[kk] = p[kk] - particles[o, kk]
    _cross3(rel, f, lever)
    g_leaf[l, 0] -= _dot3(ax, lever)
    ct = cos(leaf_theta[l, 0])
    stt = sin(leaf_theta[l, 0])
    for kk in range(3):
        c1 = base[3 * kk + 1]
        c2 = base[3 * kk + 2]
        ax[kk] = ct * c1 + stt * c2  # column 1 of base @ Rx(theta)
    g_leaf[l, 1] -= _dot3(ax, lever)


def relax(static, theta, leaf_theta, broken, link_lb, link_li, link_t, link_f,
          leaf_ll, leaf_uv, leaf_f, iterations, step_gain,
          taxel_pos=None, taxel_radius=0.0, contact_stiffness=0.0):
    """Damped preconditioned gradient descent (see _kernels_py.relax)."""
    cdef _Static st = _Static(static)
    cdef double[:, :] th = theta
    cdef double[:, :] lth = np.asarray(leaf_theta, dtype=np.float64).reshape(-1, 2)
    broken_u8 = broken.view(np.uint8)
    cdef cnp.uint8_t[:] brk = broken_u8

    cdef cnp.int64_t[:] llb = np.ascontiguousarray(link_lb, dtype=np.int64)
    cdef cnp.int64_t[:] lli = np.ascontiguousarray(link_li, dtype=np.int64)
    cdef double[:] lt = np.ascontiguousarray(link_t, dtype=np.float64)
    cdef double[:, :] lf = np.ascontiguousarray(link_f, dtype=np.float64).reshape(-1, 3)
    cdef cnp.int64_t[:] fll = np.ascontiguousarray(leaf_ll, dtype=np.int64)
    cdef double[:, :] fuv = np.ascontiguousarray(leaf_uv, dtype=np.float64).reshape(-1, 2)
    cdef double[:, :] ff = np.ascontiguousarray(leaf_f, dtype=np.float64).reshape(-1, 3)

    if taxel_pos is None:
        taxel_pos = np.zeros((0, 3))
    cdef double[:, :] tax = np.ascontiguousarray(taxel_pos, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t n_tax = tax.shape[0]
    cdef double t_rad = taxel_radius
    cdef double k_c = contact_stiffness

    cdef int n_iter = iterations
    cdef double gain = step_gain
    cdef int np_ = st.n_particles
    cdef int nl_ = st.n_leaves

    # FK and trial buffers
    particles = np.empty((np_, 3)); frames = np.empty((np_, 3, 3))
    axes = np.empty((np_, 2, 3)); origins = np.empty((np_, 3))
    leaf_rot = np.empty((nl_, 3, 3))
    particles2 = np.empty((np_, 3)); frames2 = np.empty((np_, 3, 3))
    axes2 = np.empty((np_, 2, 3)); origins2 = np.empty((np_, 3))
    leaf_rot2 = np.empty((nl_, 3, 3))
    cdef double[:, :] parts = particles, parts2 = particles2
    cdef double[:, :, :] frm = frames, frm2 = frames2
    cdef double[:, :, :] axs = axes, axs2 = axes2
    cdef double[:, :] org = origins, org2 = origins2
    cdef double[:, :, :] lrot = leaf_rot, lrot2 = leaf_rot2

    th_new_np = np.empty((np_, 2)); lth_new_np = np.empty((nl_, 2))
    cdef double[:, :] th_new = th_new_np
    cdef double[:, :] lth_new = lth_new_np
    g_np = np.empty((np_, 2)); g_leaf_np = np.empty((nl_, 2))
    cdef double[:, :] g = g_np
    cdef double[:, :] g_leaf = g_leaf_np

    # two contact-list buffers (accepted + trial)
    c_kind_a = np.zeros(n_tax, dtype=np.int64); c_kind_b = np.zeros(n_tax, dtype=np.int64)
    c_b_a = np.zeros(n_tax, dtype=np.int64); c_b_b = np.zeros(n_tax, dtype=np.int64)
    c_i_a = np.zeros(n_tax, dtype=np.int64); c_i_b = np.zeros(n_tax, dtype=np.int64)
    c_pt_a = np.zeros((n_tax, 3)); c_pt_b = np.zeros((n_tax, 3))
    c_f_a = np.zeros((n_tax, 3)); c_f_b = np.zeros((n_tax, 3))
    cdef cnp.int64_t[:] ck = c_kind_a, ck2 = c_kind_b
    cdef cnp.int64_t[:] cb = c_b_a, cb2 = c_b_b
    cdef cnp.int64_t[:] ci = c_i_a, ci2 = c_i_b
    cdef double[:, :] cp = c_pt_a, cp2 = c_pt_b
    cdef double[:, :] cf = c_f_a, cf2 = c_f_b
    cdef cnp.int64_t n_con = 0, n_con2 = 0

    energies_np = np.empty(n_iter)
    cdef double[:] energies = energies_np

    cdef double e_old, e_new, e_prev, step, tol, thr
    cdef bint accepted
    cdef int it, ls, j, kk, b, l, n_done = 0

    _fk_all_c(st, th, lth, parts, frm, axs, org, lrot)
    e_old = _energy_c(st, th, lth, parts, lrot, llb, lli, lt, lf, fll, fuv, ff)
    if n_tax:
        e_old += _contact_terms_c(st, parts, lrot, tax, t_rad, k_c,
                                  ck, cb, ci, cp, cf, &n_con)

    for it in range(n_iter):
        _gradient_c(st, th, lth, brk, parts, frm, axs, org, lrot,
                    llb, lli, lt, lf, fll, fuv, ff,
                    ck, cb, ci, cp, cf, n_con, g, g_leaf)
        step = gain
        accepted = False
        tol = 1.0 if fabs(e_old) < 1.0 else fabs(e_old)
        for ls in range(40):
            for j in range(np_):
                th_new[j, 0] = th[j, 0] - step * g[j, 0] / st.kappa[j]
                th_new[j, 1] = th[j, 1] - step * g[j, 1] / st.kappa[j]
            for l in range(nl_):
                lth_new[l, 0] = lth[l, 0] - step * g_leaf[l, 0] / st.leaf_kappa[l]
                lth_new[l, 1] = lth[l, 1] - step * g_leaf[l, 1] / st.leaf_kappa[l]
            _fk_all_c(st, th_new, lth_new, parts2, frm2, axs2, org2, lrot2)
            e_new = _energy_c(st, th_new, lth_new, parts2, lrot2,
                              llb, lli, lt, lf, fll, fuv, ff)
            if n_tax:
                e_new += _contact_terms_c(st, parts2, lrot2, tax, t_rad, k_c,
                                          ck2, cb2, ci2, cp2, cf2, &n_con2)
            if e_new <= e_old + 1e-14 * tol:
                accepted = True
                break
            step *= 0.5
        e_prev = e_old
        if accepted:
            for j in range(np_):
                th[j, 0] = th_new[j, 0]
                th[j, 1] = th_new[j, 1]
            for l in range(nl_):
                lth[l, 0] = lth_new[l, 0]
                lth[l, 1] = lth_new[l, 1]
            if e_new < e_old:
                e_old = e_new
            parts, parts2 = parts2, parts
            frm, frm2 = frm2, frm
            axs, axs2 = axs2, axs
            org, org2 = org2, org
            lrot, lrot2 = lrot2, lrot
            ck, ck2 = ck2, ck
            cb, cb2 = cb2, cb
            ci, ci2 = ci2, ci
            cp, cp2 = cp2, cp
            cf, cf2 = cf2, cf
            n_con = n_con2
        energies[it] = e_old
        n_done = it + 1

        # plastic breakage: latch and freeze at the first over-limit angle
        for b in range(st.n_branches):
            if brk[b]:
                continue
            for j in range(<int> st.poff[b], <int> st.poff[b + 1]):
                if hypot(th[j, 0], th[j, 1]) > st.break_angle[b]:
                    brk[b] = True
                    break

        thr = 1.0 if fabs(e_old) < 1.0 else fabs(e_old)
        if not accepted or e_prev - e_old <= 1e-13 * thr:
            break
    return energies_np[:n_done]
