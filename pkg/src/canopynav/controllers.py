"""High-level velocity controllers.

Three controllers, each emitting one Cartesian velocity per high-level
step: the blended tactile-gradient controller ("rice"), a pure position
controller, and a hybrid admittance baseline that regulates force along
x_EE and keeps position control on y/z.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import normalize, solve_normal_equations

GRADIENT_EPS = 1e-9


@dataclass(frozen=True)
class RiceParams:
    w_x: float = 1.0
    w_f: float = 2.0
    alpha: float = 0.01          # m/s, fixed command speed
    no_contact_eps: float = 0.01  # N, below this the force gradient is gated off

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.w_x < 0 or self.w_f < 0 or (self.w_x == 0 and self.w_f == 0):
            raise ValueError("weights must be >= 0 and not both zero")


@dataclass(frozen=True)
class HybridParams:
    desired_force: float = 1.0   # N setpoint along x_EE
    virtual_mass: float = 100.0
    virtual_damping: float = 50.0
    alpha: float = 0.01
    contact_eps: float = 0.01    # N, below this the x axis reverts to pursuit

    def __post_init__(self):
        if self.virtual_mass <= 0 or self.virtual_damping < 0:
            raise ValueError("virtual mass must be > 0 and damping >= 0")


@dataclass(frozen=True)
class ControllerCommand:
    v: np.ndarray                       # m/s, ||v|| <= alpha
    target_gradient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    force_gradient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    blended_gradient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    contact: bool = False


def target_gradient(x_k, x_target):
    """Normalized gradient of the squared distance-to-target cost.

    Points away from the target (descent direction is its negative); zero
    when already at the target.
    """
    x_k = np.asarray(x_k, dtype=float)
    x_target = np.asarray(x_target, dtype=float)
    return normalize(-2.0 * (x_target - x_k))


def force_gradient(window, no_contact_eps=0.01):
    """Least-squares spatial gradient of the taxel force magnitudes.

    Builds unit direction rows from x_ref to each taxel and solves
    D g = delta_g for g in R^3, where delta_g[i] = ||f_i|| - ||f_ref||.
    Returns (unit gradient, contact flag); the gradient is forced to zero
    with contact=False when no taxel exceeds no_contact_eps or fewer than
    3 usable direction rows remain.
    """
    mags = np.linalg.norm(window.forces, axis=1)
    if mags.size == 0 or float(mags.max()) < no_contact_eps:
        return np.zeros(3), False

    rel = window.taxel_positions - window.x_ref
    norms = np.linalg.norm(rel, axis=1)
    usable = norms > 1e-12
    if int(usable.sum()) < 3:
        return np.zeros(3), False

    d_hat = rel[usable] / norms[usable, None]
    delta_g = mags[usable] - float(np.linalg.norm(window.f_ref))
    grad = solve_normal_equations(d_hat, delta_g)
    return normalize(grad), True


def rice_step(x_k, x_target, window, params):
    """Blend the normalized target and force gradients into one velocity.

    v = -alpha * grad_H / ||grad_H|| with
    grad_H = w_x * unit(grad_U) + w_f * unit(grad_G); zero velocity when
    the blend cancels below tolerance.
    """
    g_u = target_gradient(x_k, x_target)
    g_g, contact = force_gradient(window, params.no_contact_eps)
    grad_h = params.w_x * g_u + params.w_f * g_g
    norm = float(np.linalg.norm(grad_h))
    if norm < GRADIENT_EPS:
        v = np.zeros(3)
    else:
        v = -params.alpha * grad_h / norm
    return ControllerCommand(
        v=v, target_gradient=g_u, force_gradient=g_g,
        blended_gradient=grad_h, contact=contact,
    )


def position_step(x_k, x_target, alpha=0.01):
    """Straight-line pursuit at fixed speed, blind to any contact.

    Computed through the same normalize-the-blend arithmetic as rice_step
    so that a force weight of zero reproduces this controller bit-for-bit.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    g_u = target_gradient(x_k, x_target)
    norm = float(np.linalg.norm(g_u))
    if norm < GRADIENT_EPS:
        v = np.zeros(3)
    else:
        v = -alpha * g_u / norm
    return ControllerCommand(v=v, target_gradient=g_u)


def hybrid_step(x_k, x_target, measured_force_x, admittance_velocity, params, dt):
    """Admittance along x_EE, position control on y/z.

    Integrates m*dv/dt + b*v = (f_d - f_x) on the forward axis while any
    contact force is present; with no contact the x axis reverts to the
    pursuit component.  Returns (command, new admittance velocity state).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pursuit = position_step(x_k, x_target, params.alpha)
    v = pursuit.v.copy()

    if measured_force_x >= params.contact_eps:
        accel = (
            params.desired_force - measured_force_x
            - params.virtual_damping * admittance_velocity
        ) / params.virtual_mass
        v_x = admittance_velocity + accel * dt
        v_x = float(np.clip(v_x, -params.alpha, params.alpha))
        v[0] = v_x
        # keep the overall speed within alpha without flipping direction
        norm = float(np.linalg.norm(v))
        if norm > params.alpha:
            v *= params.alpha / norm
        new_state = v_x
    else:
        new_state = float(v[0])

    return (
        ControllerCommand(
            v=v,
            target_gradient=pursuit.target_gradient,
            contact=measured_force_x >= params.contact_eps,
        ),
        new_state,
    )
