"""Lagrangian point movement over (possibly moving) surfaces.

Points advance with a second-order extrapolated displacement from the
fluid velocity, are projected back onto the surface (given by the
background cloud when one exists, else by the fluid cloud's own
positions before the move), and then both clouds move with the surface
velocity.  Inflow/outflow/Dirichlet points are held fixed with respect
to the fluid velocity; slip points slide along the boundary curve;
points crossing an outflow boundary are deleted.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .cloud import Label, PointCloud, is_fixed
from .projection import project_to_boundary_curve, project_to_surface
from .regularize import regularize_cloud
from .tessellation import build_geometry, detect_free_boundary


@dataclass
class MotionState:
    """Previous-step velocities and time-step bookkeeping."""
    v_prev: Optional[np.ndarray]
    w_prev: Optional[np.ndarray]
    dt: float
    dt0: float
    first_step: bool = False


@dataclass
class DualCloud:
    """Fluid cloud plus the optional background surface cloud."""
    fluid: PointCloud
    background: Optional[PointCloud] = None


def _move_delta(u_n, u_prev, dt, dt0, first_step):
    u_n = np.asarray(u_n, dtype=float)
    if first_step or u_prev is None:
        return u_n * dt
    return u_n * dt + 0.5 * (u_n - np.asarray(u_prev)) / dt0 * dt * dt


def fluid_move_delta(v_n, v_prev, dt, dt0, first_step=False):
    """Displacement from the fluid velocity (second-order extrapolation)."""
    return _move_delta(v_n, v_prev, dt, dt0, first_step)


def surface_move_delta(w_n, w_prev, dt, dt0, first_step=False):
    """Displacement from the surface velocity (same extrapolation)."""
    return _move_delta(w_n, w_prev, dt, dt0, first_step)


def _outflow_crossers(x_new, cloud):
    """Points that ended up past the outflow boundary plane.

    A point is past the boundary when its offset from the nearest outflow
    point has a positive component along that point's conormal.
    """
    out = cloud.label == Label.OUTFLOW
    if not out.any():
        return np.zeros(len(cloud), dtype=bool)
    tree = cKDTree(cloud.x[out])
    check = ~is_fixed(cloud.label)
    crossed = np.zeros(len(cloud), dtype=bool)
    idx = np.flatnonzero(check)
    d, j = tree.query(x_new[idx], k=1)
    near = d < 2.0 * cloud.h[idx]
    xb = cloud.x[out][j[near]]
    nub = cloud.nu[out][j[near]]
    off = ((x_new[idx[near]] - xb) * nub).sum(axis=1)
    crossed[idx[near]] = off > 0.0
    return crossed


def advance_positions(dual: DualCloud, motion: MotionState) -> DualCloud:
    """One Lagrangian movement: fluid move + projection, then surface move.

    Returns a new DualCloud; points that crossed an outflow boundary are
    deleted (their previous-velocity extras are dropped with them).
    """
    fluid = dual.fluid.copy()
    reference = (dual.background if dual.background is not None
                 else dual.fluid.copy())

    hold = is_fixed(fluid.label) & (fluid.label != Label.SLIP)
    dx1 = fluid_move_delta(fluid.v, motion.v_prev, motion.dt, motion.dt0,
                           motion.first_step)
    dx1[hold] = 0.0
    x_mid = fluid.x + dx1

    moved = ~hold
    if moved.any():
        x_mid[moved] = project_to_surface(x_mid[moved], reference)
    slip = fluid.label == Label.SLIP
    if slip.any():
        curve_mask = is_fixed(reference.label)
        x_mid[slip] = project_to_boundary_curve(x_mid[slip], reference,
                                                curve_mask)

    fluid.x = x_mid
    crossed = _outflow_crossers(x_mid, fluid)
    if crossed.any():
        fluid = fluid.subset(~crossed)

    w_prev = motion.w_prev
    if w_prev is not None and crossed.any():
        w_prev = w_prev[~crossed]
    dx2 = surface_move_delta(fluid.w, w_prev, motion.dt, motion.dt0,
                             motion.first_step)
    fluid.x = fluid.x + dx2
    fluid.invalidate_index()

    background = None
    if dual.background is not None:
        background = dual.background.copy()
        bw_prev = background.extra.get("w_prev")
        bdx2 = surface_move_delta(background.w, bw_prev, motion.dt,
                                  motion.dt0, motion.first_step)
        background.x = background.x + bdx2
        background.invalidate_index()

    return DualCloud(fluid, background)


def regularize(dual: DualCloud, relabel: bool = True,
               background_too: bool = True,
               inserted_log: Optional[list] = None) -> DualCloud:
    """Merge/insert distortion fixing for both clouds, then relabeling.

    `background_too` can be disabled when the surface is not moving (the
    background cloud then never distorts).
    """
    fluid = regularize_cloud(dual.fluid, relabel=False,
                             inserted_log=inserted_log)
    background = dual.background
    if background is not None and background_too:
        background = regularize_cloud(background, relabel=False)
    if relabel:
        geo = build_geometry(fluid)
        fluid.label = detect_free_boundary(fluid, geo)
    return DualCloud(fluid, background)
