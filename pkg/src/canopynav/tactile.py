"""Simulated fingertip taxel arrays and window aggregation.

Two planar n x n pads face forward (+x of the end-effector frame), offset
laterally along y_EE (and optionally z_EE).  Each taxel runs a frictionless
linear penalty spring against the canopy: within the contact radius the
taxel reports k_c * penetration along the surface normal, and the plant
receives the equal-and-opposite load at the contact point.
"""

from dataclasses import dataclass

import numpy as np

from .canopy import ContactLoad, closest_points_batch


@dataclass(frozen=True)
class SensorGeometry:
    n: int = 4                       # taxels per side, per pad
    pitch: float = 0.005             # metres between taxel centres
    pad_lateral_offset: float = 0.025   # +- along y_EE
    pad_vertical_offset: float = 0.0    # along z_EE
    # fingertip pads sit ahead of the EE reference point; a substantial
    # forward component in the taxel direction vectors keeps the x part of
    # the least-squares force gradient well conditioned
    pad_forward_offset: float = 0.03    # along x_EE
    taxel_contact_radius: float = 0.004  # metres
    contact_stiffness: float = 2000.0    # k_c, N/m

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.pitch <= 0 or self.taxel_contact_radius <= 0:
            raise ValueError("pitch and contact radius must be positive")
        if self.contact_stiffness <= 0:
            raise ValueError("contact_stiffness must be positive")

    @property
    def taxel_count(self):
        return 2 * self.n * self.n

    def taxel_local_positions(self):
        """(N, 3) taxel centres in the EE frame; pad 0 (-y) rows first."""
        n = self.n
        span = (np.arange(n) - (n - 1) / 2.0) * self.pitch
        local = np.empty((2 * n * n, 3))
        idx = 0
        for side in (-1.0, 1.0):
            for row in range(n):       # z
                for col in range(n):   # y
                    local[idx] = (
                        self.pad_forward_offset,
                        side * self.pad_lateral_offset + span[col],
                        self.pad_vertical_offset + span[row],
                    )
                    idx += 1
        return local


@dataclass(frozen=True)
class TactileFrame:
    forces: np.ndarray            # (N, 3), newtons, EE frame
    taxel_positions: np.ndarray   # (N, 3), metres, world frame


@dataclass(frozen=True)
class TactileWindow:
    forces: np.ndarray            # F_k, (s, 3)
    taxel_positions: np.ndarray   # P_k, (s, 3), world
    f_ref: np.ndarray             # mean taxel force of the first frame
    x_ref: np.ndarray             # EE position at the start of the window


def taxel_world_positions(geometry, ee_position, ee_rotation):
    """(N, 3) taxel centres in the world frame for the given EE pose."""
    ee_position = np.asarray(ee_position, dtype=float)
    ee_rotation = np.asarray(ee_rotation, dtype=float)
    return ee_position + geometry.taxel_local_positions() @ ee_rotation.T


def sample_tactile(geometry, ee_position, ee_rotation, canopy_state):
    """One tactile frame plus the reaction loads on the plant."""
    ee_position = np.asarray(ee_position, dtype=float)
    ee_rotation = np.asarray(ee_rotation, dtype=float)
    world = taxel_world_positions(geometry, ee_position, ee_rotation)

    b_idx, l_idx, point, dist, normal = closest_points_batch(canopy_state, world)

    n_tax = geometry.taxel_count
    forces = np.zeros((n_tax, 3))
    loads = []
    for i in range(n_tax):
        penetration = geometry.taxel_contact_radius - dist[i]
        if penetration <= 0.0:
            continue
        f_world = geometry.contact_stiffness * penetration * normal[i]
        forces[i] = ee_rotation.T @ f_world
        loads.append(
            ContactLoad(
                branch_index=int(b_idx[i]),
                link_index=int(l_idx[i]),
                point=point[i].copy(),
                force=-f_world,
            )
        )
    return TactileFrame(forces=forces, taxel_positions=world), loads


def aggregate_window(frames, ee_ref_position):
    """Concatenate j frames (frame-major, taxel-minor) into one window."""
    if not frames:
        raise ValueError("window needs at least one frame")
    n_tax = frames[0].forces.shape[0]
    for fr in frames:
        if fr.forces.shape[0] != n_tax or fr.taxel_positions.shape[0] != n_tax:
            raise ValueError("mismatched frame sizes in window")
    return TactileWindow(
        forces=np.vstack([fr.forces for fr in frames]),
        taxel_positions=np.vstack([fr.taxel_positions for fr in frames]),
        f_ref=frames[0].forces.mean(axis=0),
        x_ref=np.asarray(ee_ref_position, dtype=float).copy(),
    )
