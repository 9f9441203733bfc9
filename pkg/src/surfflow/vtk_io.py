"""Legacy-VTK ASCII polydata snapshots of point clouds.

Each snapshot stores the point positions as POLYDATA vertices together
with the per-point fields needed to inspect a simulation state: the
velocity ``v``, the surface velocity ``w``, the surface normals, the
pressure, and the integer point label.  A minimal reader for the same
dialect is provided so emitted files can be round-tripped in tests
without an external VTK dependency.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .errors import ParseError

__all__ = ["write_vtk", "read_vtk"]


def write_vtk(path, cloud: PointCloud, title: str = "surfflow snapshot"):
    """Write a point cloud to `path` as legacy VTK ASCII polydata."""
    n = len(cloud)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(title.replace("\n", " ")[:255] + "\n")
        f.write("ASCII\n")
        f.write("DATASET POLYDATA\n")
        f.write(f"POINTS {n} double\n")
        np.savetxt(f, cloud.x, fmt="%.17g")
        f.write(f"VERTICES {n} {2 * n}\n")
        np.savetxt(f, np.column_stack([np.ones(n, dtype=int),
                                       np.arange(n)]), fmt="%d")
        f.write(f"POINT_DATA {n}\n")
        f.write("VECTORS v double\n")
        np.savetxt(f, cloud.v, fmt="%.17g")
        f.write("VECTORS w double\n")
        np.savetxt(f, cloud.w, fmt="%.17g")
        f.write("NORMALS normals double\n")
        np.savetxt(f, cloud.n, fmt="%.17g")
        f.write("SCALARS p double 1\nLOOKUP_TABLE default\n")
        np.savetxt(f, cloud.p, fmt="%.17g")
        f.write("SCALARS label int 1\nLOOKUP_TABLE default\n")
        np.savetxt(f, cloud.label, fmt="%d")


def read_vtk(path):
    """Read a snapshot written by :func:`write_vtk`.

    Returns a dict with keys ``x``, ``v``, ``w``, ``normals``, ``p`` and
    ``label``.  Raises ParseError on files that do not follow the legacy
    ASCII polydata layout this package emits.
    """
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    pos = 0

    def expect(prefix):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines) or not lines[pos].upper().startswith(prefix):
            raise ParseError(f"expected {prefix!r}", line=pos + 1)
        tokens = lines[pos].split()
        pos += 1
        return tokens

    def block(count, width):
        nonlocal pos
        vals = []
        while len(vals) < count * width:
            vals.extend(float(t) for t in lines[pos].split())
            pos += 1
        arr = np.array(vals)
        return arr.reshape(count, width) if width > 1 else arr

    expect("# VTK DATAFILE")
    pos += 1                       # title line
    expect("ASCII")
    expect("DATASET POLYDATA")
    n = int(expect("POINTS")[1])
    out = {"x": block(n, 3)}
    nverts = int(expect("VERTICES")[1])
    block(nverts, 2)
    npd = int(expect("POINT_DATA")[1])
    if npd != n:
        raise ParseError(f"POINT_DATA count {npd} != POINTS count {n}")
    while pos < len(lines):
        line = lines[pos].strip()
        if not line:
            pos += 1
            continue
        tokens = line.split()
        kind = tokens[0].upper()
        pos += 1
        if kind in ("VECTORS", "NORMALS"):
            out[tokens[1]] = block(n, 3)
        elif kind == "SCALARS":
            expect("LOOKUP_TABLE")
            data = block(n, 1)
            if tokens[2].lower() == "int":
                data = data.astype(int)
            out[tokens[1]] = data
        else:
            raise ParseError(f"unknown attribute {tokens[0]!r}", line=pos)
    return out
