"""Point-cloud generators for analytic surfaces and mesh-vertex ingestion.

All generators produce irregular samplings: points start on a regular
layout (Fibonacci spiral on spheres, parameter grids elsewhere) at
spacing ``SPACING_FACTOR * h`` and are jittered tangentially by
``JITTER_FACTOR`` of the spacing with a seeded RNG, then mapped back
onto the exact surface.  Boundary curves are sampled explicitly and
labeled, with outward conormals filled in analytically; boundary points
are jittered only along their curve.
"""

import numpy as np

from .cloud import Label, PointCloud
from .errors import ParseError

SPACING_FACTOR = 0.3
JITTER_FACTOR = 0.1

_GOLDEN = np.pi * (3.0 - np.sqrt(5.0))


def _spacing(h, factor=SPACING_FACTOR):
    return factor * h


def fibonacci_sphere(count: int) -> np.ndarray:
    """Near-uniform points on the unit sphere (Fibonacci spiral)."""
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = _GOLDEN * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _cloud(x, n, h, label=None, nu=None):
    pc = PointCloud(np.asarray(x, dtype=float), n=np.asarray(n, dtype=float),
                    h=np.full(len(x), float(h)))
    if label is not None:
        pc.label[:] = label
    if nu is not None:
        pc.nu[:] = nu
    return pc


def _concat(parts):
    out = parts[0]
    for p in parts[1:]:
        out = out.append(p)
    return out


def sample_plane(h, extent=1.0, spacing_factor=SPACING_FACTOR,
                 jitter=JITTER_FACTOR, seed=0, rim_label=Label.DIRICHLET):
    """Jittered grid on the square [-extent, extent]^2 in the z=0 plane.

    The outermost grid ring is labeled ``rim_label`` (conormal = outward
    in-plane direction) and left unjittered in the outward direction.
    """
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    m = max(2, int(round(2 * extent / s)))
    g = np.linspace(-extent, extent, m + 1)
    X, Y = np.meshgrid(g, g)
    x = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    rim = (np.abs(x[:, 0]) > extent - 1e-12) | (np.abs(x[:, 1]) > extent - 1e-12)
    jit = jitter * s * rng.uniform(-1, 1, size=(len(x), 2))
    x[~rim, :2] += jit[~rim]
    n = np.tile([0.0, 0.0, 1.0], (len(x), 1))
    pc = _cloud(x, n, h)
    if rim_label is not None:
        pc.label[rim] = rim_label
        nu = np.zeros((rim.sum(), 3))
        xr = x[rim]
        east = np.abs(xr[:, 0]) >= np.abs(xr[:, 1])
        nu[east, 0] = np.sign(xr[east, 0])
        nu[~east, 1] = np.sign(xr[~east, 1])
        pc.nu[rim] = nu
    return pc


def sample_sphere(h, radius=1.0, jitter=JITTER_FACTOR, seed=0,
                  spacing_factor=SPACING_FACTOR):
    """Closed unit-radius (by default) sphere sampling; no boundary."""
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    count = max(12, int(round(4.0 * np.pi * radius**2 / s**2)))
    x = radius * fibonacci_sphere(count)
    x = _jitter_on_sphere(x, jitter * s, rng) * radius
    n = x / np.linalg.norm(x, axis=1, keepdims=True)
    return _cloud(x, n, h)


def _jitter_on_sphere(x, amp, rng):
    u = x / np.linalg.norm(x, axis=1, keepdims=True)
    d = rng.normal(size=x.shape)
    d -= (d * u).sum(axis=1, keepdims=True) * u
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    d /= np.where(norms == 0, 1.0, norms)
    y = u + amp * rng.uniform(0, 1, size=(len(x), 1)) * d
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def sample_three_quarter_sphere(h, jitter=JITTER_FACTOR, seed=0,
                                spacing_factor=SPACING_FACTOR):
    """Unit sphere restricted to azimuth in [0, 3*pi/2].

    The two cut meridians (azimuth 0 and 3*pi/2) are sampled explicitly
    and labeled DIRICHLET; conormals point out of the retained sector.
    """
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    count = max(16, int(round(4.0 * np.pi / s**2)))
    x = fibonacci_sphere(count)
    x = _jitter_on_sphere(x, jitter * s, rng)
    az = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    # keep a margin of ~0.7 spacing from the cut planes so interior points
    # do not collide with the explicit meridian samples
    colat = np.arccos(np.clip(x[:, 2], -1, 1))
    ring_r = np.maximum(np.sin(colat), 1e-9)
    margin = 0.7 * s / ring_r
    keep = (az > margin) & (az < 1.5 * np.pi - margin)
    interior = _cloud(x[keep], x[keep], h)

    parts = [interior]
    # inward = azimuthal direction pointing into the retained sector:
    # +e_phi at the azimuth-0 cut, -e_phi at the azimuth-3pi/2 cut
    for phi, inward in ((0.0, np.array([0.0, 1.0, 0.0])),
                        (1.5 * np.pi, np.array([-1.0, 0.0, 0.0]))):
        m = max(4, int(round(np.pi / s)))
        theta = np.linspace(0, np.pi, m + 1)[1:-1]   # exclude poles, added once
        theta += jitter * s * rng.uniform(-1, 1, size=theta.size)
        theta = np.clip(theta, 0.3 * s, np.pi - 0.3 * s)
        e_r = np.array([np.cos(phi), np.sin(phi), 0.0])
        pts = (np.sin(theta)[:, None] * e_r + np.cos(theta)[:, None]
               * np.array([0.0, 0.0, 1.0]))
        nrm = pts.copy()
        # conormal: tangent to the sphere, normal to the meridian, pointing
        # away from the retained sector
        nu = np.cross(nrm, np.cross(-inward, nrm))
        nu /= np.linalg.norm(nu, axis=1, keepdims=True)
        parts.append(_cloud(pts, nrm, h, label=Label.DIRICHLET, nu=nu))
    poles = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    parts.append(_cloud(poles, poles.copy(), h, label=Label.DIRICHLET,
                        nu=np.tile([-1.0, 0.0, 0.0], (2, 1))))
    return _concat(parts)


def sample_cylinder(h, radius=1.0, xlim=(0.0, 1.0), jitter=JITTER_FACTOR,
                    seed=0, spacing_factor=SPACING_FACTOR,
                    end_labels=(Label.INFLOW, Label.OUTFLOW)):
    """Cylinder y^2 + z^2 = radius^2 over x in xlim.

    End rings are sampled exactly on the end circles and labeled per
    `end_labels` (None keeps an end unlabeled/interior); conormals are
    -x̂ at xlim[0] and +x̂ at xlim[1].
    """
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    x0, x1 = xlim
    L = x1 - x0
    nth = max(6, int(round(2 * np.pi * radius / s)))
    nx = max(2, int(round(L / s)))
    xs = np.linspace(x0, x1, nx + 1)
    parts = []
    for k, xv in enumerate(xs):
        end = k == 0 or k == nx
        th = (np.arange(nth) + 0.5 * (k % 2)) * (2 * np.pi / nth)
        jx = np.zeros(nth) if end else jitter * s * rng.uniform(-1, 1, nth)
        jth = jitter * s / radius * rng.uniform(-1, 1, nth)
        th = th + jth
        pts = np.column_stack([np.full(nth, xv) + jx,
                               radius * np.cos(th), radius * np.sin(th)])
        nrm = np.column_stack([np.zeros(nth), np.cos(th), np.sin(th)])
        lab = None
        nu = None
        if end:
            lab = end_labels[0] if k == 0 else end_labels[1]
            if lab is not None:
                sign = -1.0 if k == 0 else 1.0
                nu = np.tile([sign, 0.0, 0.0], (nth, 1))
        parts.append(_cloud(pts, nrm, h, label=lab, nu=nu))
    return _concat(parts)


def sample_hemisphere(h, jitter=JITTER_FACTOR, seed=0,
                      spacing_factor=SPACING_FACTOR,
                      rim_label=Label.SLIP):
    """Unit hemisphere x <= 0; rim circle x = 0 labeled (slip by default)."""
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    count = max(16, int(round(4.0 * np.pi / s**2)))
    x = fibonacci_sphere(count)
    x = _jitter_on_sphere(x, jitter * s, rng)
    keep = x[:, 0] <= -0.7 * s
    interior = _cloud(x[keep], x[keep], h)

    m = max(6, int(round(2 * np.pi / s)))
    th = np.arange(m) * (2 * np.pi / m)
    th = th + jitter * s * rng.uniform(-1, 1, m)
    rim = np.column_stack([np.zeros(m), np.cos(th), np.sin(th)])
    nu = np.tile([1.0, 0.0, 0.0], (m, 1))
    rim_pc = _cloud(rim, rim.copy(), h, label=rim_label, nu=nu)
    return _concat([interior, rim_pc])


def sample_spherical_annulus(h, r_in=0.3, r_out=0.5, jitter=JITTER_FACTOR,
                             seed=0, spacing_factor=SPACING_FACTOR):
    """Annular band on the unit hemisphere x <= 0: r_in^2 <= y^2+z^2 <= r_out^2.

    Both rims are sampled on their exact circles and labeled FreeBoundary;
    conormals point out of the band (tangentially to the sphere).
    """
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    count = max(16, int(round(4.0 * np.pi / s**2)))
    x = fibonacci_sphere(count)
    x = _jitter_on_sphere(x, jitter * s, rng)
    rho2 = x[:, 1]**2 + x[:, 2]**2
    band = ((x[:, 0] < 0)
            & (rho2 > (r_in + 0.7 * s)**2) & (rho2 < (r_out - 0.7 * s)**2))
    parts = [_cloud(x[band], x[band], h)]
    for r, outward in ((r_in, -1.0), (r_out, +1.0)):
        xc = -np.sqrt(1.0 - r * r)
        m = max(6, int(round(2 * np.pi * r / s)))
        th = np.arange(m) * (2 * np.pi / m)
        th = th + jitter * s / r * rng.uniform(-1, 1, m)
        pts = np.column_stack([np.full(m, xc), r * np.cos(th), r * np.sin(th)])
        nrm = pts.copy()
        # conormal = tangential direction of increasing (outward>0) radius
        radial = np.column_stack([np.zeros(m), np.cos(th), np.sin(th)])
        nu = outward * (radial - (radial * nrm).sum(1, keepdims=True) * nrm)
        nu /= np.linalg.norm(nu, axis=1, keepdims=True)
        parts.append(_cloud(pts, nrm, h, label=Label.FREE_BOUNDARY, nu=nu))
    return _concat(parts)


def sample_torus(h, major=0.75, minor=0.25, u_range=(0.0, 2 * np.pi),
                 jitter=JITTER_FACTOR, seed=0,
                 spacing_factor=SPACING_FACTOR,
                 rim_label=Label.FREE_BOUNDARY):
    """Torus (major, minor) swept over major angle u in u_range.

    A partial sweep gets explicitly sampled cut circles labeled
    `rim_label`.  Axis of revolution: z; u is the angle in the xy plane.
    """
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    u0, u1 = u_range
    closed = abs((u1 - u0) - 2 * np.pi) < 1e-12
    nv = max(6, int(round(2 * np.pi * minor / s)))

    def ring(u, jit_u):
        vv = (np.arange(nv) + 0.5) * (2 * np.pi / nv)
        if jit_u:
            vv = vv + jitter * s / minor * rng.uniform(-1, 1, nv)
        uu = np.full(nv, u)
        if jit_u:
            uu = uu + jitter * s / major * rng.uniform(-1, 1, nv)
        cu, su = np.cos(uu), np.sin(uu)
        cv, sv = np.cos(vv), np.sin(vv)
        pts = np.column_stack([(major + minor * cv) * cu,
                               (major + minor * cv) * su, minor * sv])
        nrm = np.column_stack([cv * cu, cv * su, sv])
        return pts, nrm, uu

    nu_steps = max(3, int(round((u1 - u0) * major / s)))
    us = np.linspace(u0, u1, nu_steps + 1)
    if closed:
        us = us[:-1]
    parts = []
    for k, u in enumerate(us):
        cut = (not closed) and (k == 0 or k == nu_steps)
        pts, nrm, uu = ring(u, jit_u=not cut)
        lab = rim_label if cut else None
        nu = None
        if cut:
            sign = -1.0 if k == 0 else 1.0
            # conormal: tangent direction of increasing u, times the cut sign
            nu = sign * np.column_stack([-np.sin(uu), np.cos(uu),
                                         np.zeros(nv)])
        parts.append(_cloud(pts, nrm, h, label=lab, nu=nu))
    return _concat(parts)


def sample_droplet_on_cylinder(h, radius=0.5, xlim=(-0.5, 0.5),
                               jitter=JITTER_FACTOR, seed=0,
                               spacing_factor=SPACING_FACTOR):
    """Fluid droplet on the cylinder y^2+z^2 = radius^2: the region inside
    the unit sphere centered at (0, 0, radius).

    Parameterized by (x, theta) with z = radius*cos(theta); the droplet is
    |x| <= min(-xlim[0], cos(theta/2)) (derived from the sphere equation).
    Rim points are labeled FreeBoundary.
    """
    rng = np.random.default_rng(seed)
    s = _spacing(h, spacing_factor)
    xcap = xlim[1]

    def xmax(theta):
        c = np.sqrt(np.maximum(0.0, 0.5 * (1.0 + np.cos(theta))))
        return np.minimum(xcap, c)

    nth = max(6, int(round(2 * np.pi * radius / s)))
    parts = []
    rim_pts, rim_nrm, rim_nu = [], [], []
    for k in range(nth):
        th = (k + 0.5) * 2 * np.pi / nth
        xm = xmax(np.array([th]))[0]
        if xm < 0.35 * s:
            continue
        nrm0 = np.array([0.0, np.sin(th), np.cos(th)])
        # interior strip
        nx = int(round(2 * xm / s))
        if nx >= 2:
            xs = np.linspace(-xm, xm, nx + 1)[1:-1]
            thj = th + jitter * s / radius * rng.uniform(-1, 1, xs.size)
            xs = xs + jitter * s * rng.uniform(-1, 1, xs.size)
            xs = np.clip(xs, -xm + 0.5 * s, xm - 0.5 * s)
            pts = np.column_stack([xs, radius * np.sin(thj),
                                   radius * np.cos(thj)])
            nrm = np.column_stack([np.zeros(xs.size), np.sin(thj),
                                   np.cos(thj)])
            parts.append(_cloud(pts, nrm, h))
        # rim points at +-xm
        for sign in (1.0, -1.0):
            rim_pts.append([sign * xm, radius * np.sin(th),
                            radius * np.cos(th)])
            rim_nrm.append(nrm0)
            if xm >= xcap - 1e-12:
                nu = np.array([sign, 0.0, 0.0])
            else:
                grad = np.array([2 * sign * xm, 2 * radius * np.sin(th),
                                 2 * (radius * np.cos(th) - radius)])
                nu = grad - (grad @ nrm0) * nrm0
                nu /= np.linalg.norm(nu)
            rim_nu.append(nu)
    parts.append(_cloud(np.array(rim_pts), np.array(rim_nrm), h,
                        label=Label.FREE_BOUNDARY, nu=np.array(rim_nu)))
    return _concat(parts)


def load_vertices(path, h, normals_from_faces=True) -> PointCloud:
    """Read vertex records from an ASCII OBJ or PLY file.

    Faces are ignored except (for OBJ, optionally) to seed per-vertex
    normals by area-weighted face-normal accumulation.
    """
    text = open(path).read()
    if text.lstrip().lower().startswith("ply"):
        verts = _parse_ply(text)
        faces = []
    else:
        verts, faces = _parse_obj(text)
    verts = np.asarray(verts, dtype=float)
    if verts.size == 0:
        raise ParseError(f"no vertices found in {path}")
    pc = PointCloud(verts, h=np.full(len(verts), float(h)))
    if normals_from_faces and faces:
        acc = np.zeros_like(verts)
        for f in faces:
            a, b, c = verts[f[0]], verts[f[1]], verts[f[2]]
            fn = np.cross(b - a, c - a)
            for idx in f[:3]:
                acc[idx] += fn
        norms = np.linalg.norm(acc, axis=1, keepdims=True)
        ok = norms[:, 0] > 0
        pc.n[ok] = acc[ok] / norms[ok]
    return pc


def _parse_obj(text):
    verts, faces = [], []
    for ln, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError("malformed vertex record", line=ln)
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            try:
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"malformed face record: {exc}", line=ln)
    return verts, faces


def _parse_ply(text):
    lines = text.splitlines()
    try:
        end = next(i for i, l in enumerate(lines)
                   if l.strip() == "end_header")
    except StopIteration:
        raise ParseError("PLY header without end_header")
    nvert = None
    for l in lines[:end]:
        parts = l.split()
        if parts[:2] == ["element", "vertex"]:
            nvert = int(parts[2])
        if parts[0:2] == ["format", "binary_little_endian"] or \
           parts[0:2] == ["format", "binary_big_endian"]:
            raise ParseError("binary PLY not supported")
    if nvert is None:
        raise ParseError("PLY header missing vertex element")
    verts = []
    for l in lines[end + 1:end + 1 + nvert]:
        p = l.split()
        verts.append([float(p[0]), float(p[1]), float(p[2])])
    return verts
