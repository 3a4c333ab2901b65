"""Conforming triangulations of the coupled fluid/porous geometries."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

FLUID = 0
POROUS = 1
REGION_NAMES = ("fluid", "porous")

BOUNDARY_LABELS = (
    "inlet_f",
    "outlet_f",
    "inlet_p",
    "outlet_p",
    "ext_p",
    "interface",
    "symmetry",
    "other",
)


class InvalidGeometryError(ValueError):
    """Raised for geometry parameters that cannot be meshed."""


class FoldOverError(ValueError):
    """Raised when a mapped triangle loses positive orientation."""


@dataclass(frozen=True)
class InterfaceEdges:
    """Edges shared by one fluid and one porous triangle.

    ``normals`` point out of the fluid region.
    """

    edges: np.ndarray
    fluid_tri: np.ndarray
    porous_tri: np.ndarray
    normals: np.ndarray

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def tangents(self) -> np.ndarray:
        return np.column_stack([-self.normals[:, 1], self.normals[:, 0]])


@dataclass(frozen=True)
class Mesh2D:
    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: tuple[str, ...]
    boundary_tri: np.ndarray
    interface: InterfaceEdges
    reference_vertices: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_area(self, region: int) -> float:
        return float(self.signed_areas()[self.regions == region].sum())

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.stack(
            [np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)],
            axis=1,
        )
        return lengths.max(axis=1)

    def edges_with_label(self, label: str) -> np.ndarray:
        mask = np.array([lab == label for lab in self.boundary_labels], dtype=bool)
        return np.flatnonzero(mask)

    def interface_lengths(self) -> np.ndarray:
        p = self.vertices[self.interface.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def validate(self) -> None:
        areas = self.signed_areas()
        if np.any(areas <= 0.0):
            raise InvalidGeometryError(
                f"{int(np.sum(areas <= 0))} triangle(s) with non-positive area"
            )
        itf = self.interface
        if len(itf):
            lengths = self.interface_lengths()
            if np.any(lengths <= 0):
                raise InvalidGeometryError("degenerate interface edge")
            if np.any(self.regions[itf.fluid_tri] != FLUID) or np.any(
                self.regions[itf.porous_tri] != POROUS
            ):
                raise InvalidGeometryError("interface edge not shared fluid/porous")
            c = self.centroids()
            if np.any(np.einsum("ij,ij->i", itf.normals, c[itf.porous_tri] - c[itf.fluid_tri]) <= 0):
                raise InvalidGeometryError("interface normal not oriented fluid -> porous")


def interface_h(edge) -> float:
    """Euclidean length of an edge given as a pair of points."""
    a, b = np.asarray(edge, dtype=float)
    return float(np.hypot(*(b - a)))


def _orient(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri = triangles.copy()
    tri[neg, 1], tri[neg, 2] = triangles[neg, 2], triangles[neg, 1]
    return tri


def _finalize(
    vertices: np.ndarray,
    triangles: np.ndarray,
    regions: np.ndarray,
    labeler: Callable[[np.ndarray, np.ndarray], list[str]],
    reference_vertices: Optional[np.ndarray] = None,
) -> Mesh2D:
    """Derive boundary and interface edge records from connectivity.

    ``labeler(midpoints, region_of_adjacent_triangle)`` names each boundary edge.
    """
    triangles = _orient(vertices, np.asarray(triangles, dtype=np.int64))
    regions = np.asarray(regions, dtype=np.int8)
    m = len(triangles)
    local = np.array([[0, 1], [1, 2], [2, 0]])
    all_edges = triangles[:, local].reshape(-1, 2)
    owner = np.repeat(np.arange(m), 3)
    keys = np.sort(all_edges, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise InvalidGeometryError("non-manifold edge in triangulation")

    order = np.argsort(inverse, kind="stable")
    sorted_inv = inverse[order]
    starts = np.flatnonzero(np.r_[True, sorted_inv[1:] != sorted_inv[:-1]])
    first = order[starts]
    mult = counts[sorted_inv[starts]]

    single = first[mult == 1]
    b_edges = all_edges[single]
    b_tri = owner[single]

    pair_first = first[mult == 2]
    pair_second = order[starts[mult == 2] + 1]
    t1 = owner[pair_first]
    t2 = owner[pair_second]
    differ = regions[t1] != regions[t2]
    t1, t2, e_idx = t1[differ], t2[differ], pair_first[differ]
    fluid_tri = np.where(regions[t1] == FLUID, t1, t2)
    porous_tri = np.where(regions[t1] == FLUID, t2, t1)
    i_edges = all_edges[e_idx]
    # sort interface edges by midpoint for a stable, readable ordering
    mid = vertices[i_edges].mean(axis=1)
    perm = np.lexsort((mid[:, 1], mid[:, 0]))
    i_edges, fluid_tri, porous_tri = i_edges[perm], fluid_tri[perm], porous_tri[perm]

    d = vertices[i_edges[:, 1]] - vertices[i_edges[:, 0]]
    nrm = np.column_stack([d[:, 1], -d[:, 0]])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    c = vertices[triangles].mean(axis=1)
    flip = np.einsum("ij,ij->i", nrm, c[porous_tri] - c[fluid_tri]) < 0
    nrm[flip] *= -1.0

    labels = labeler(vertices[b_edges].mean(axis=1), regions[b_tri]) if len(b_edges) else []

    mesh = Mesh2D(
        vertices=vertices,
        triangles=triangles,
        regions=regions,
        boundary_edges=b_edges,
        boundary_labels=tuple(labels),
        boundary_tri=b_tri,
        interface=InterfaceEdges(i_edges, fluid_tri, porous_tri, nrm),
        reference_vertices=reference_vertices,
    )
    for arr in (vertices, triangles, regions, b_edges, b_tri, i_edges, fluid_tri, porous_tri, nrm):
        arr.flags.writeable = False
    mesh.validate()
    return mesh


def build_channel_mesh(L: float, R: float, r_p: float, h: float) -> Mesh2D:
    """Half channel [0,L]x[0,R] (fluid) under the wall [0,L]x[R,R+r_p] (porous).

    The bottom edge y=0 is a symmetry line. Each strip gets at least one row
    of cells even when ``h`` exceeds its thickness.
    """
    for name, val in (("L", L), ("R", R), ("r_p", r_p), ("h", h)):
        if not np.isfinite(val) or val <= 0:
            raise InvalidGeometryError(f"{name} must be positive, got {val}")
    nx = max(1, int(round(L / h)))
    ny_f = max(1, int(round(R / h)))
    ny_p = max(1, int(round(r_p / h)))
    xs = np.linspace(0.0, L, nx + 1)
    ys = np.concatenate([np.linspace(0.0, R, ny_f + 1), np.linspace(R, R + r_p, ny_p + 1)[1:]])
    ny = len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    triangles = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    reg_cell = np.where(j < ny_f, FLUID, POROUS)
    regions = np.concatenate([reg_cell, reg_cell])
    tol = 1e-9 * max(L, R + r_p)

    def labeler(mid, reg):
        out = []
        for (x, y), r in zip(mid, reg):
            if abs(y) < tol:
                out.append("symmetry")
            elif abs(y - (R + r_p)) < tol:
                out.append("ext_p")
            elif abs(x) < tol:
                out.append("inlet_f" if r == FLUID else "inlet_p")
            elif abs(x - L) < tol:
                out.append("outlet_f" if r == FLUID else "outlet_p")
            else:
                out.append("other")
        return out

    return _finalize(vertices, triangles, regions, labeler)


def fracture_half_thickness(x: np.ndarray, a: float, c: float = 0.008) -> np.ndarray:
    """Half thickness of the lens y^2 = c^2 (x-a)^2 (x+a)^2 for |x| <= a, else 0."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < a, c * (a * a - x * x), 0.0)


def _graded(length: float, h0: float, ratio: float, h_max: float) -> np.ndarray:
    """Cumulative node offsets on [0, length] with spacing growing from h0."""
    steps = []
    s, total = h0, 0.0
    while total + s < length - 0.5 * min(s, h_max):
        steps.append(s)
        total += s
        s = min(s * ratio, h_max)
    steps.append(max(length - total, 0.0))
    steps = np.asarray(steps)
    if len(steps) > 1 and steps[-1] < 0.5 * steps[-2]:
        steps[-2] += steps[-1]
        steps = steps[:-1]
    steps *= length / steps.sum()
    return np.concatenate([[0.0], np.cumsum(steps)])


def build_reservoir_mesh(
    halfWidth: float,
    fractureHalfLength: float,
    h: float,
    *,
    grading: float = 1.25,
    h_max_factor: float = 6.0,
    fluid_layers: Optional[int] = None,
) -> Mesh2D:
    """Reference square [-W, W]^2 with a lens-shaped fluid fracture at its centre.

    Columns are uniform with spacing ~h across the fracture and graded towards
    the outer boundary; rows follow the fracture boundary inside the lens. The
    vertex set is mirror-symmetric about x=0 by construction.
    """
    W, a = float(halfWidth), float(fractureHalfLength)
    if not (h > 0 and a > 0 and W > 0):
        raise InvalidGeometryError("halfWidth, fractureHalfLength and h must be positive")
    if a >= W:
        raise InvalidGeometryError("fractureHalfLength must be smaller than halfWidth")
    t_max = float(fracture_half_thickness(0.0, a))
    if t_max <= 0 or t_max >= W:
        raise InvalidGeometryError("fracture curve degenerate for these dimensions")

    n_in = max(1, int(np.ceil(a / h)))
    inner = np.linspace(0.0, a, n_in + 1)
    outer = a + _graded(W - a, a / n_in, grading, h_max_factor * h)
    xpos = np.concatenate([inner, outer[1:]])
    xs = np.concatenate([-xpos[:0:-1], xpos])
    nxc = len(xs)

    m = fluid_layers if fluid_layers is not None else max(1, min(3, int(np.ceil(t_max / h))))
    ys_out = _graded(W, min(h, t_max / m), grading, h_max_factor * h)
    ys_out = ys_out / ys_out[-1]  # normalized 0..1 offsets above the fracture line
    K = len(ys_out) - 1
    rows = np.arange(-(m + K), m + K + 1)
    nyr = len(rows)

    yc = fracture_half_thickness(xs, a)
    ids = -np.ones((nxc, nyr), dtype=np.int64)
    coords = []
    for i in range(nxc):
        for jj, j in enumerate(rows):
            collapsed = yc[i] == 0.0 and abs(j) <= m
            if collapsed and j != 0:
                continue
            if abs(j) <= m:
                y = (j / m) * yc[i]
            else:
                k = abs(j) - m
                y = np.sign(j) * (yc[i] + (W - yc[i]) * ys_out[k])
            ids[i, jj] = len(coords)
            coords.append((xs[i], y))
        if yc[i] == 0.0:
            centre = ids[i, m + K]
            for jj, j in enumerate(rows):
                if abs(j) <= m:
                    ids[i, jj] = centre
    vertices = np.asarray(coords, dtype=float)
    # exact mirror symmetry: snap x to the mirrored grid and y rows are even in x already
    tris, regs = [], []
    for i in range(nxc - 1):
        for jj in range(nyr - 1):
            j = rows[jj]
            A, B, C, D = ids[i, jj], ids[i + 1, jj], ids[i + 1, jj + 1], ids[i, jj + 1]
            reg = FLUID if -m <= j < m else POROUS
            if A == D and B == C:
                continue
            if A == D:
                tris.append((A, B, C))
            elif B == C:
                tris.append((A, B, D))
            elif (i < nxc // 2) == (j < 0):
                tris += [(A, B, C), (A, C, D)]
                regs.append(reg)
            else:
                tris += [(A, B, D), (B, C, D)]
                regs.append(reg)
            regs.append(reg)
    triangles = np.asarray(tris, dtype=np.int64)
    regions = np.asarray(regs, dtype=np.int8)

    def labeler(mid, reg):
        return ["ext_p" if r == POROUS else "other" for r in reg]

    return _finalize(vertices, triangles, regions, labeler, reference_vertices=vertices.copy())


def reservoir_map(xh: np.ndarray, yh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = (
        5.0 * np.cos((xh + yh) / 100.0) * np.cos((np.pi * xh + yh) / 100.0) ** 2
        + yh / 5.0
        - xh / 10.0
    )
    return np.asarray(xh, dtype=float).copy(), y


def map_reservoir_domain(mesh: Mesh2D) -> Mesh2D:
    """Push a reference reservoir mesh through the smooth domain map."""
    ref = mesh.vertices
    if np.any(np.abs(ref) > 100.0 + 1e-9):
        raise InvalidGeometryError("reference vertices must lie in [-100, 100]^2")
    x, y = reservoir_map(ref[:, 0], ref[:, 1])
    new = np.column_stack([x, y])
    p = new[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    if np.any(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] <= 0):
        raise FoldOverError("mapped triangulation has non-positive areas")
    labels = dict(zip(map(tuple, np.sort(mesh.boundary_edges, axis=1)), mesh.boundary_labels))
    ref_v = mesh.reference_vertices if mesh.reference_vertices is not None else ref.copy()
    out = _finalize(new, np.array(mesh.triangles), np.array(mesh.regions), _placeholder, ref_v)
    return _relabel(out, labels)


def _placeholder(mid, reg):
    return ["other"] * len(mid)


def _relabel(mesh: Mesh2D, labels: dict) -> Mesh2D:
    keys = map(tuple, np.sort(mesh.boundary_edges, axis=1).tolist())
    object.__setattr__(mesh, "boundary_labels", tuple(labels.get(k, "other") for k in keys))
    return mesh


# --- plain text exchange format -------------------------------------------------

def write_mesh(mesh: Mesh2D, path) -> None:
    lines = ["mesh2d v1", f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [
        f"{i} {j} {k} {REGION_NAMES[r]}"
        for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.regions.tolist())
    ]
    edges = [(int(a), int(b), lab) for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels)]
    edges += [(int(a), int(b), "interface") for a, b in mesh.interface.edges]
    lines.append(f"edges {len(edges)}")
    lines += [f"{a} {b} {lab}" for a, b, lab in edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_mesh(path) -> Mesh2D:
    tokens = Path(path).read_text(encoding="ascii").splitlines()
    if not tokens or tokens[0].strip() != "mesh2d v1":
        raise ValueError(f"{path}: not a 'mesh2d v1' file")
    pos = 1
    nv = int(tokens[pos].split()[1]); pos += 1
    vertices = np.array([[float(s) for s in tokens[pos + k].split()] for k in range(nv)])
    pos += nv
    nt = int(tokens[pos].split()[1]); pos += 1
    tri, reg = [], []
    for k in range(nt):
        i, j, l, r = tokens[pos + k].split()
        tri.append((int(i), int(j), int(l)))
        reg.append(REGION_NAMES.index(r))
    pos += nt
    ne = int(tokens[pos].split()[1]); pos += 1
    labels = {}
    for k in range(ne):
        a, b, lab = tokens[pos + k].split()
        if lab != "interface":
            labels[tuple(sorted((int(a), int(b))))] = lab

    mesh = _finalize(vertices, np.array(tri), np.array(reg), _placeholder)
    return _relabel(mesh, labels)
