"""Benchmark scenarios, analytic reference fields, and error metrics.

Each scenario bundles a cloud builder, analytic closures (exact velocity
and pressure where available, surface velocity, body force), fluid
parameters, and a resolution/time-step schedule.  Scenarios come in two
kinds: "transport" (prescribed velocity, movement machinery only) and
"flow" (full momentum/pressure solve).  Error records are emitted in a
flat CSV schema; figures are rendered downstream from the CSVs.
"""

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .cloud import Label, PointCloud, is_boundary, is_fixed
from .errors import UnknownScenario
from .sampling import (sample_cylinder, sample_droplet_on_cylinder,
                       sample_hemisphere, sample_spherical_annulus,
                       sample_sphere, sample_three_quarter_sphere,
                       sample_torus)
from .solver import (BoundaryData, FluidParams, manufactured_gravity,
                     time_step)
from .transport import (DualCloud, MotionState, advance_positions,
                        regularize)

CSV_HEADER = ("scenario,h,dt,t,eps_v,eps_p,eps_x,"
              "xmin,xmax,ymin,ymax,zmin,zmax")


# ----------------------------------------------------------------------
# metrics

def metric_velocity_error(cloud: PointCloud, v_exact, t, return_flag=False):
    """Relative discrete-L2 velocity error against an exact field.

    eps_2 = rms(|v_i - v_exact(x_i, t)|) / rms(|v_exact(x_i, t)|); falls
    back to the absolute rms (flagged) when the exact field vanishes.
    """
    ve = np.asarray(v_exact(cloud.x, t), dtype=float)
    err = np.sqrt(np.mean(np.sum((cloud.v - ve) ** 2, axis=1)))
    ref = np.sqrt(np.mean(np.sum(ve ** 2, axis=1)))
    if ref == 0.0:
        return (err, True) if return_flag else err
    return (err / ref, False) if return_flag else err / ref


def metric_pressure_error(cloud: PointCloud, p_exact, t, return_flag=False):
    """Relative discrete-L2 pressure error (same convention as velocity)."""
    pe = np.asarray(p_exact(cloud.x, t), dtype=float)
    err = np.sqrt(np.mean((cloud.p - pe) ** 2))
    ref = np.sqrt(np.mean(pe ** 2))
    if ref == 0.0:
        return (err, True) if return_flag else err
    return (err / ref, False) if return_flag else err / ref


def metric_droplet_center(cloud: PointCloud) -> np.ndarray:
    """Geometric center (arithmetic mean) of the fluid positions."""
    return cloud.x.mean(axis=0)


def metric_extrema(cloud: PointCloud):
    """(xmin, xmax, ymin, ymax, zmin, zmax) over the fluid positions."""
    mn = cloud.x.min(axis=0)
    mx = cloud.x.max(axis=0)
    return (mn[0], mx[0], mn[1], mx[1], mn[2], mx[2])


def eoc(e_coarse: float, e_fine: float) -> float:
    """Observed order between errors at resolutions differing by 2x."""
    return float(np.log2(e_coarse / e_fine))


@dataclass
class ErrorRecord:
    scenario: str
    h: float
    dt: float
    t: float
    eps_v: Optional[float] = None
    eps_p: Optional[float] = None
    eps_x: Optional[float] = None
    extrema: Optional[tuple] = None

    def csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else f"{v:.10g}"
        ext = self.extrema if self.extrema is not None else (None,) * 6
        cells = [self.scenario, fmt(self.h), fmt(self.dt), fmt(self.t),
                 fmt(self.eps_v), fmt(self.eps_p), fmt(self.eps_x)]
        cells += [fmt(v) for v in ext]
        return ",".join(cells)


# ----------------------------------------------------------------------
# scenario definitions

@dataclass
class Scenario:
    name: str
    kind: str                                    # "transport" | "flow"
    build: Callable                              # (h, seed) -> DualCloud
    params: FluidParams = dc_field(default_factory=FluidParams)
    v_field: Optional[Callable] = None           # (cloud, t) -> (N,3)
    v_exact: Optional[Callable] = None           # (x, t) -> (N,3)
    p_exact: Optional[Callable] = None           # (x, t) -> (N,)
    w_field: Optional[Callable] = None           # (x, t) -> (N,3)
    bc: Optional[BoundaryData] = None
    renormalize: Optional[Callable] = None       # (cloud) -> None
    hook_factory: Optional[Callable] = None      # (h) -> hook(dual) -> dual
    exact_center: Optional[Callable] = None      # (t) -> 3-vector
    schedule: list = dc_field(default_factory=list)   # (h, dt, t_end)
    metrics: list = dc_field(default_factory=list)


def _cylinder_radial_normals(cloud):
    r = np.sqrt(cloud.x[:, 1] ** 2 + cloud.x[:, 2] ** 2)
    r = np.where(r == 0, 1.0, r)
    cloud.n = np.column_stack([np.zeros(len(cloud)),
                               cloud.x[:, 1] / r, cloud.x[:, 2] / r])


def _sphere_normals(cloud):
    cloud.n = cloud.x / np.linalg.norm(cloud.x, axis=1, keepdims=True)


def _droplet_v(cloud, t):
    x = cloud.x
    return np.column_stack([np.full(len(x), 0.2 * np.sin(2 * np.pi * t)),
                            -np.pi * x[:, 2], np.pi * x[:, 1]])


def _rotate_x(c, angle):
    y = c[1] * np.cos(angle) - c[2] * np.sin(angle)
    z = c[1] * np.sin(angle) + c[2] * np.cos(angle)
    return np.array([c[0], y, z])


def _droplet_scenario() -> Scenario:
    def build(h, seed):
        fluid = sample_droplet_on_cylinder(0.5, seed=seed)
        background = sample_cylinder(h, radius=0.5, xlim=(-0.5, 0.5),
                                     seed=seed + 1,
                                     end_labels=(Label.DIRICHLET,
                                                 Label.DIRICHLET))
        return DualCloud(fluid, background)

    c0_holder = {}

    def exact_center(t, c0):
        shift = 0.2 * (1.0 - np.cos(2 * np.pi * t)) / (2 * np.pi)
        c = _rotate_x(c0, np.pi * t)
        c[0] += shift
        return c

    return Scenario(
        name="droplet-cylinder", kind="transport", build=build,
        v_field=_droplet_v,
        renormalize=_cylinder_radial_normals,
        exact_center=exact_center,
        schedule=[(0.149, dt, 2.0) for dt in (0.1, 0.05, 0.025, 0.0125)],
        metrics=["eps_x"])


def _moving_cylinder_radius(t):
    return 0.5 - 0.5 * np.sin(2 * np.pi * t) / (2 * np.pi)


def _moving_droplet_scenario() -> Scenario:
    base = _droplet_scenario()

    def w_field(x, t):
        r = np.sqrt(x[:, 1] ** 2 + x[:, 2] ** 2)
        r = np.where(r == 0, 1.0, r)
        n = np.column_stack([np.zeros(len(x)), x[:, 1] / r, x[:, 2] / r])
        w = np.zeros_like(x)
        w[:, 0] = 0.5 * np.sin(np.pi * t)
        return w - 0.5 * np.cos(2 * np.pi * t) * n

    def exact_center(t, c0):
        shift = (0.2 * (1.0 - np.cos(2 * np.pi * t)) / (2 * np.pi)
                 + 0.5 * (1.0 - np.cos(np.pi * t)) / np.pi)
        c = _rotate_x(c0, np.pi * t)
        scale = _moving_cylinder_radius(t) / 0.5
        return np.array([c0[0] + shift, c[1] * scale, c[2] * scale])

    return Scenario(
        name="droplet-moving-cylinder", kind="transport", build=base.build,
        v_field=_droplet_v, w_field=w_field,
        renormalize=_cylinder_radial_normals,
        exact_center=exact_center,
        schedule=base.schedule, metrics=["eps_x", "radius"])


def _torus_twist_scenario() -> Scenario:
    def build(h, seed):
        fluid = sample_torus(h, u_range=(0.0, np.pi / 2), seed=seed)
        background = sample_torus(h, seed=seed + 1)
        return DualCloud(fluid, background)

    def v_field(cloud, t):
        raw = np.zeros((len(cloud), 3))
        sign_y = np.where(cloud.x[:, 1] < 0, -1.0, 1.0)
        raw[:, 1] = sign_y * np.sin(2 * np.pi * t)
        ndot = (raw * cloud.n).sum(axis=1, keepdims=True)
        return raw - ndot * cloud.n

    def w_field(x, t):
        return np.column_stack([-x[:, 1] * x[:, 2],
                                np.zeros(len(x)), x[:, 0] * x[:, 2]])

    return Scenario(
        name="torus-twist", kind="transport", build=build,
        v_field=v_field, w_field=w_field,
        schedule=[(0.1, 0.005, 1.0)], metrics=["extrema"])


_SPHERE_N_EXPRS = ("x/sqrt(x**2+y**2+z**2)", "y/sqrt(x**2+y**2+z**2)",
                   "z/sqrt(x**2+y**2+z**2)")
_GRAVITY_CACHE = {}


def _cached_gravity(key, v_exprs, p_expr, params, n_exprs):
    if key not in _GRAVITY_CACHE:
        _GRAVITY_CACHE[key] = manufactured_gravity(v_exprs, p_expr, params,
                                                   n_exprs)
    return _GRAVITY_CACHE[key]


def _sphere_vortices_scenario(eta=0.01, rho=1.0) -> Scenario:
    def v_exact(x, t):
        damp = np.exp(-4.0 * eta * t)
        return np.column_stack([-x[:, 1] * x[:, 2], x[:, 0] * x[:, 2],
                                np.zeros(len(x))]) * damp

    def p_exact(x, t):
        return -(x[:, 2] ** 4 / 4.0) * np.exp(-8.0 * eta * t)

    params = FluidParams(rho=rho, eta=eta)
    params.g = _cached_gravity(
        ("sphere-vortices", rho, eta),
        (f"-y*z*exp(-4*{eta}*t)", f"x*z*exp(-4*{eta}*t)", "0"),
        f"-(z**4/4)*exp(-8*{eta}*t)", params, _SPHERE_N_EXPRS)

    def build(h, seed):
        return DualCloud(sample_three_quarter_sphere(h, seed=seed))

    def hook_factory(h):
        def hook(dual):
            fluid = dual.fluid
            az = np.mod(np.arctan2(fluid.x[:, 1], fluid.x[:, 0]),
                        2 * np.pi)
            ring = np.maximum(np.sqrt(1.0 - np.minimum(fluid.x[:, 2] ** 2,
                                                       1.0)), 1e-9)
            margin = 0.15 * h / ring
            outside = ((az > 1.5 * np.pi + margin)
                       & (az < 2 * np.pi - margin)
                       & ~is_fixed(fluid.label))
            if outside.any():
                return DualCloud(fluid.subset(~outside), dual.background)
            return dual
        return hook

    return Scenario(
        name="sphere-vortices", kind="flow", build=build, params=params,
        v_exact=v_exact, p_exact=p_exact,
        bc=BoundaryData(v_dirichlet=v_exact, p_dirichlet=p_exact),
        renormalize=_sphere_normals, hook_factory=hook_factory,
        schedule=[(h, 1.0 / np.ceil(1.0 / h ** 2), 1.0)
                  for h in (0.4, 0.2, 0.1)],
        metrics=["eps_v", "eps_p"])


_CYL_N_EXPRS = ("0", "y/sqrt(y**2+z**2)", "z/sqrt(y**2+z**2)")


def _cylinder_flow_scenario(eta=0.01, rho=1.0) -> Scenario:
    def v_exact(x, t):
        return np.column_stack([x[:, 1] ** 2, -x[:, 2], x[:, 1]]) * t

    def p_exact(x, t):
        return x[:, 0] * t

    def p_neumann(x, t, nu):
        # grad_M p = (t, 0, 0): the pressure gradient is axial, hence
        # already tangential to the cylinder
        return nu[:, 0] * t

    def v_neumann(x, t, nu):
        # ambient gradients of every component are tangential with zero
        # axial part, so the axial directional derivative vanishes
        return np.zeros((len(x), 3))

    params = FluidParams(rho=rho, eta=eta)
    params.g = _cached_gravity(
        ("cylinder-flow", rho, eta),
        ("y**2*t", "-z*t", "y*t"), "x*t", params, _CYL_N_EXPRS)

    def build(h, seed):
        return DualCloud(sample_cylinder(h, radius=1.0, xlim=(0.0, 1.0),
                                         seed=seed))

    return Scenario(
        name="cylinder-flow", kind="flow", build=build, params=params,
        v_exact=v_exact, p_exact=p_exact,
        bc=BoundaryData(v_dirichlet=v_exact, p_dirichlet=p_exact,
                        p_neumann=p_neumann, v_neumann=v_neumann),
        renormalize=_cylinder_radial_normals,
        # dt capped by the advective limit (|v| reaches sqrt(2) at t = 1)
        # and by the diffusive limit at high viscosity
        schedule=[(0.1, min(0.02, 0.01 / eta), 1.0)],
        metrics=["eps_v", "eps_p"])


def _drop_fall_scenario(eta=0.001, rho=1.0) -> Scenario:
    def build(h, seed):
        fluid = sample_spherical_annulus(h, seed=seed,
                                         spacing_factor=0.315)
        fluid.v = np.column_stack([fluid.x[:, 1], -fluid.x[:, 0],
                                   np.zeros(len(fluid))])
        background = sample_hemisphere(h, seed=seed + 1)
        return DualCloud(fluid, background)

    def hook_factory(h):
        def hook(dual):
            fluid = dual.fluid
            near_rim = fluid.x[:, 0] > -0.3 * h
            conv = near_rim & (fluid.label != Label.SLIP)
            if conv.any():
                rho2d = np.sqrt(fluid.x[conv, 1] ** 2
                                + fluid.x[conv, 2] ** 2)
                fluid.x[conv, 0] = 0.0
                fluid.x[conv, 1] /= rho2d
                fluid.x[conv, 2] /= rho2d
                fluid.label[conv] = Label.SLIP
                fluid.nu[conv] = [1.0, 0.0, 0.0]
                fluid.invalidate_index()
            return dual
        return hook

    return Scenario(
        name="drop-fall", kind="flow", build=build,
        params=FluidParams(rho=rho, eta=eta),
        renormalize=_sphere_normals, hook_factory=hook_factory,
        schedule=[(0.06, 0.006, 1.45)],
        metrics=["extrema"])


_CATALOG = {
    "droplet-cylinder": _droplet_scenario,
    "droplet-moving-cylinder": _moving_droplet_scenario,
    "torus-twist": _torus_twist_scenario,
    "sphere-vortices": _sphere_vortices_scenario,
    "cylinder-flow": _cylinder_flow_scenario,
    "drop-fall": _drop_fall_scenario,
}


def scenario_catalog():
    """All scenario names in the catalog."""
    return sorted(_CATALOG)


def get_scenario(name: str, **overrides) -> Scenario:
    """Construct a catalog scenario; eta/rho overrides where applicable."""
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; available: "
                              + ", ".join(scenario_catalog()))
    if overrides:
        return factory(**overrides)
    return factory()


# ----------------------------------------------------------------------
# run loops

def run_transport(scn: Scenario, h, dt, t_end, seed=0, on_step=None):
    """Kinematic run: prescribed velocities, movement machinery only.

    Returns (records, final DualCloud).  `on_step(dual, t)` is called
    after every step.
    """
    dual = scn.build(h, seed)
    c0 = metric_droplet_center(dual.fluid)
    prev_v = prev_w = None
    nsteps = int(round(t_end / dt))
    records = []
    t = 0.0
    for k in range(nsteps):
        fluid = dual.fluid
        fluid.v = np.asarray(scn.v_field(fluid, t))
        if scn.w_field is not None:
            fluid.w = np.asarray(scn.w_field(fluid.x, t))
            if dual.background is not None:
                dual.background.w = np.asarray(
                    scn.w_field(dual.background.x, t))
        motion = MotionState(prev_v, prev_w, dt, dt, first_step=(k == 0))
        dual = advance_positions(dual, motion)
        if dual.background is not None and scn.w_field is not None:
            dual.background.extra["w_prev"] = dual.background.w.copy()
        has_free = bool(np.any(dual.fluid.label == Label.FREE_BOUNDARY))
        dual = regularize(dual, relabel=has_free,
                          background_too=scn.w_field is not None)
        if scn.renormalize is not None:
            scn.renormalize(dual.fluid)
            if dual.background is not None and scn.w_field is not None:
                scn.renormalize(dual.background)
        prev_v = dual.fluid.v.copy()
        prev_w = dual.fluid.w.copy()
        t = (k + 1) * dt
        if on_step is not None:
            on_step(dual, t)
    rec = ErrorRecord(scn.name, h, dt, t, extrema=metric_extrema(dual.fluid))
    if scn.exact_center is not None:
        center = metric_droplet_center(dual.fluid)
        rec.eps_x = float(np.linalg.norm(center - scn.exact_center(t, c0)))
    records.append(rec)
    return records, dual


def run_flow(scn: Scenario, h, dt, t_end, seed=0, on_step=None,
             inserted_log=None, solver_tol=1e-9):
    """Full solver run.  Returns (records, final DualCloud, step reports)."""
    dual = scn.build(h, seed)
    fluid = dual.fluid
    if scn.v_exact is not None:
        fluid.v = np.asarray(scn.v_exact(fluid.x, 0.0))
    if scn.p_exact is not None:
        fluid.p = np.asarray(scn.p_exact(fluid.x, 0.0))
    hook = scn.hook_factory(h) if scn.hook_factory is not None else None
    motion = MotionState(None, None, dt, dt, first_step=True)
    nsteps = int(round(t_end / dt))
    reports = []
    t = 0.0
    for k in range(nsteps):
        dual, motion, rep = time_step(
            dual, motion, scn.params, dt, t, bc=scn.bc,
            w_field=scn.w_field, renormalize=scn.renormalize, hook=hook,
            inserted_log=inserted_log, solver_tol=solver_tol)
        t = (k + 1) * dt
        reports.append(rep)
        if on_step is not None:
            on_step(dual, t, rep)
    rec = ErrorRecord(scn.name, h, dt, t, extrema=metric_extrema(dual.fluid))
    if scn.v_exact is not None:
        rec.eps_v = float(metric_velocity_error(dual.fluid, scn.v_exact, t))
    if scn.p_exact is not None:
        rec.eps_p = float(metric_pressure_error(dual.fluid, scn.p_exact, t))
    return [rec], dual, reports


def run_scenario(scn: Scenario, h, dt, t_end, seed=0, **kw):
    if scn.kind == "transport":
        records, dual = run_transport(scn, h, dt, t_end, seed=seed,
                                      on_step=kw.get("on_step"))
        return records, dual, []
    return run_flow(scn, h, dt, t_end, seed=seed, **kw)


# ----------------------------------------------------------------------
# drop-fall diagnostics

def boundary_components(cloud: PointCloud, link_factor=0.66):
    """Connected components of the free-boundary points.

    Points are linked when closer than link_factor * h; returns the
    number of components (0 when there are no free-boundary points).
    """
    idx = np.flatnonzero(cloud.label == Label.FREE_BOUNDARY)
    if idx.size == 0:
        return 0
    pts = cloud.x[idx]
    radius = link_factor * cloud.h[idx].max()
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    parent = np.arange(idx.size)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return np.unique([find(a) for a in range(idx.size)]).size


def insertions_inside(cloud: PointCloud, inserted, tol_factor=0.5):
    """Check inserted sites lie on the fluid side of the nearest boundary.

    `inserted` is an (m, 3) array of freshly inserted positions; a site
    counts as outside when its offset from the nearest boundary point has
    a component along that point's conormal exceeding tol_factor * h.
    """
    bnd = is_boundary(cloud.label)
    if not bnd.any() or len(inserted) == 0:
        return True
    xb = cloud.x[bnd]
    nub = cloud.nu[bnd]
    hb = cloud.h[bnd]
    _, j = cKDTree(xb).query(np.asarray(inserted), k=1)
    off = ((np.asarray(inserted) - xb[j]) * nub[j]).sum(axis=1)
    return bool(np.all(off <= tol_factor * hb[j]))
