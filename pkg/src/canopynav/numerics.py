"""Small dense linear-algebra helpers used by the controllers and kinematics."""

import numpy as np

# Below this condition estimate the normal equations are solved directly;
# above it we fall back to the minimum-norm (truncated SVD) solution.
COND_LIMIT = 1e10


def normalize(v, eps=1e-12):
    """Return v / ||v||, or the zero vector when ||v|| <= eps.

    A zero return means "no usable direction"; callers treat it as such
    rather than as an error.
    """
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n <= eps:
        return np.zeros_like(v)
    return v / n


def pseudoinverse(m, tol=1e-10):
    """Moore-Penrose pseudoinverse via SVD with relative truncation.

    Singular values below tol * sigma_max are treated as zero, which keeps
    the result finite near singular configurations.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("pseudoinverse: matrix has non-finite entries")
    if m.size == 0:
        return m.T.copy()
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    smax = s[0] if s.size else 0.0
    cutoff = tol * smax
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (vt.T * s_inv) @ u.T


def solve_normal_equations(d, b):
    """Least-squares solve of d @ g = b for g in R^3.

    Solves the normal equations (d^T d) g = d^T b when d^T d is well
    conditioned; otherwise returns the minimum-norm solution via the
    truncated pseudoinverse of d.
    """
    d = np.asarray(d, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if d.ndim != 2 or d.shape[1] != 3:
        raise ValueError("solve_normal_equations: d must be an R x 3 matrix")
    if d.shape[0] < 3:
        raise ValueError("solve_normal_equations: need at least 3 rows")
    if d.shape[0] != b.shape[0]:
        raise ValueError("solve_normal_equations: row count mismatch")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(b))):
        raise ValueError("solve_normal_equations: non-finite input")

    dtd = d.T @ d
    # 2-norm condition estimate of the 3x3 Gram matrix.
    w = np.linalg.eigvalsh(dtd)
    wmax = w[-1]
    wmin = w[0]
    if wmin <= 0.0 or wmax / wmin > COND_LIMIT:
        return pseudoinverse(d) @ b
    return np.linalg.solve(dtd, d.T @ b)
