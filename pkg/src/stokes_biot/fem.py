"""Reference-element machinery: shape functions, quadrature, kernels, dof maps.

Points on a triangle are handled in barycentric coordinates throughout.
Local node order for P2 is (v0, v1, v2, e01, e12, e20).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import FLUID, POROUS, Mesh2D

FIELD_ORDER = ("v", "p_f", "q", "p_p", "U", "Udot")
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class DegenerateElementError(ValueError):
    pass


class ContractError(ValueError):
    pass


# --------------------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric (nq, 3) for triangles, parameter in [0,1] for edges
    weights: np.ndarray
    order: int

    def __post_init__(self):
        self.points.flags.writeable = False
        self.weights.flags.writeable = False


def _triangle_q4() -> QuadratureRule:
    a1, w1 = 0.44594849091596488, 0.22338158967801147
    a2, w2 = 0.091576213509770743, 0.10995174365532187
    pts, wts = [], []
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        for p in ((a, a, b), (a, b, a), (b, a, a)):
            pts.append(p)
            wts.append(0.5 * w)
    return QuadratureRule(np.array(pts), np.array(wts), 4)


def gauss_edge_rule(n: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, 2 * n - 1)


def collapsed_triangle_rule(n: int) -> QuadratureRule:
    """Tensor Gauss rule pulled back through the Duffy collapse.

    Exact for polynomials of total degree <= 2n - 2. Used as a brute-force
    oracle for the production rules.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    u, wu = 0.5 * (x + 1.0), 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    xi = U.ravel()
    eta = (V * (1.0 - U)).ravel()
    wts = (WU * WV * (1.0 - U)).ravel()
    pts = np.column_stack([1.0 - xi - eta, xi, eta])
    return QuadratureRule(pts, wts, 2 * n - 2)


TRIANGLE_RULE = _triangle_q4()
EDGE_RULE = gauss_edge_rule(3)


# --------------------------------------------------------------------------- shape functions

NLOC = {"P1": 3, "P2": 6}


def _shape_bary(kind: str, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values (..., nloc) and derivatives w.r.t. barycentrics (..., nloc, 3)."""
    lam = np.asarray(lam, dtype=float)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    shape = lam.shape[:-1]
    if kind == "P1":
        vals = lam.copy()
        d = np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
        return vals, d
    if kind != "P2":
        raise ValueError(f"unknown element kind {kind!r}")
    vals = np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )
    d = np.zeros(shape + (6, 3))
    d[..., 0, 0] = 4 * l0 - 1
    d[..., 1, 1] = 4 * l1 - 1
    d[..., 2, 2] = 4 * l2 - 1
    d[..., 3, 0], d[..., 3, 1] = 4 * l1, 4 * l0
    d[..., 4, 1], d[..., 4, 2] = 4 * l2, 4 * l1
    d[..., 5, 2], d[..., 5, 0] = 4 * l0, 4 * l2
    return vals, d


# reference gradient of (l0, l1, l2) w.r.t. (xi, eta) with l1 = xi, l2 = eta
_DLAM_REF = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def shape_values(kind: str, point) -> tuple[np.ndarray, np.ndarray]:
    """Nodal basis values and reference gradients (d/dxi, d/deta) at a barycentric point."""
    lam = np.asarray(point, dtype=float)
    if lam.shape[-1] != 3 or np.any(lam < -1e-14) or np.any(lam > 1 + 1e-14) or np.any(
        np.abs(lam.sum(axis=-1) - 1.0) > 1e-12
    ):
        raise ValueError(f"invalid barycentric coordinates {point}")
    vals, d = _shape_bary(kind, lam)
    return vals, d @ _DLAM_REF


def bary_gradients(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Constant gradients of the barycentric coordinates and signed areas.

    ``p`` has shape (E, 3, 2); returns grads (E, 3, 2) and area (E,).
    """
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    scale = np.max(np.abs(p - p[:, :1]), axis=(1, 2)) ** 2
    if np.any(np.abs(area2) <= 1e-14 * scale) or np.any(scale == 0):
        raise DegenerateElementError("degenerate triangle")
    g = np.empty_like(p)
    g[:, 0, 0], g[:, 0, 1] = y[:, 1] - y[:, 2], x[:, 2] - x[:, 1]
    g[:, 1, 0], g[:, 1, 1] = y[:, 2] - y[:, 0], x[:, 0] - x[:, 2]
    g[:, 2, 0], g[:, 2, 1] = y[:, 0] - y[:, 1], x[:, 1] - x[:, 0]
    return g / area2[:, None, None], 0.5 * np.abs(area2)


def barycentric_of(p: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points X (E,2) in triangles p (E,3,2)."""
    g, _ = bary_gradients(p)
    lam = np.einsum("ekd,ed->ek", g, X - p[:, 0])
    lam[:, 0] += 1.0
    return lam


class ElementData:
    """Values and physical gradients of a basis on a batch of triangles."""

    def __init__(self, kind: str, p: np.ndarray, rule: QuadratureRule = TRIANGLE_RULE):
        self.kind = kind
        self.grad_lam, self.area = bary_gradients(p)
        self.N, dN = _shape_bary(kind, rule.points)  # (nq, n), (nq, n, 3)
        self.dN = np.einsum("qak,ekd->eqad", dN, self.grad_lam)  # (E, nq, n, 2)
        self.w = 2.0 * self.area[:, None] * rule.weights[None, :]  # (E, nq)
        self.points = np.einsum("qk,ekd->eqd", rule.points, p)


# --------------------------------------------------------------------------- batched element kernels

def _interleave(K4: np.ndarray) -> np.ndarray:
    """(E, n, 2, m, 2) -> (E, 2n, 2m) with dof index 2*node + comp."""
    E, n, _, m, _ = K4.shape
    return K4.reshape(E, 2 * n, 2 * m)


def kernel_mass(ed: ElementData, weight=1.0) -> np.ndarray:
    w = ed.w * (np.asarray(weight, dtype=float) if np.ndim(weight) else weight)
    return np.einsum("eq,qa,qb->eab", w, ed.N, ed.N)


def kernel_vector_mass(ed: ElementData, tensor=None) -> np.ndarray:
    """Integral of phi . T psi for a constant 2x2 tensor T (identity by default)."""
    M = kernel_mass(ed)
    T = np.eye(2) if tensor is None else np.asarray(tensor, dtype=float)
    return _interleave(np.einsum("eab,cd->eacbd", M, T))


def kernel_grad_grad(ed: ElementData) -> np.ndarray:
    return np.einsum("eq,eqad,eqbd->eab", ed.w, ed.dN, ed.dN)


def kernel_strain(ed: ElementData, weight: float = 1.0) -> np.ndarray:
    """Integral of 2w D(u):D(phi) on vector fields."""
    G = np.einsum("eq,eqad,eqbd->eab", ed.w, ed.dN, ed.dN)
    K = np.einsum("eab,cd->eacbd", G, np.eye(2))
    K += np.einsum("eq,eqad,eqbc->eacbd", ed.w, ed.dN, ed.dN)
    return weight * _interleave(K)


def kernel_divdiv(ed: ElementData, weight: float = 1.0) -> np.ndarray:
    K = np.einsum("eq,eqac,eqbd->eacbd", ed.w, ed.dN, ed.dN)
    return weight * _interleave(K)


def kernel_div_coupling(ed_v: ElementData, ed_p: ElementData, weight: float = 1.0) -> np.ndarray:
    """Integral of psi div(phi): rows pressure dofs, columns interleaved vector dofs."""
    K = np.einsum("eq,qi,eqbd->eibd", ed_v.w, ed_p.N, ed_v.dN)
    E, n, m, _ = K.shape
    return weight * K.reshape(E, n, 2 * m)


# --------------------------------------------------------------------------- single-element helpers

def _as_tri(triangle) -> np.ndarray:
    p = np.asarray(triangle, dtype=float).reshape(1, 3, 2)
    return p


def local_mass_p1(triangle, rule: QuadratureRule = TRIANGLE_RULE) -> np.ndarray:
    return kernel_mass(ElementData("P1", _as_tri(triangle), rule))[0]


def local_strain_stiffness(kind: str, weight: float, triangle, rule: QuadratureRule = TRIANGLE_RULE) -> np.ndarray:
    return kernel_strain(ElementData(kind, _as_tri(triangle), rule), weight)[0]


def local_div_coupling(kindV: str, kindP: str, triangle, rule: QuadratureRule = TRIANGLE_RULE) -> np.ndarray:
    p = _as_tri(triangle)
    return kernel_div_coupling(ElementData(kindV, p, rule), ElementData(kindP, p, rule))[0]


def edge_trace_kernel(
    edge,
    sides: dict,
    weight,
    integrand: tuple,
    rule: QuadratureRule = EDGE_RULE,
) -> np.ndarray:
    """Local block of an interface/boundary edge integral.

    ``sides`` maps a side name to ``(kind, triangle_vertices)``; ``integrand`` is
    ``(test, trial)`` where each entry is ``(side, selector)`` with selector one of
    ``"n"``, ``"t"`` (vector traces) or ``"snn"``, ``"snt"`` (fluid stress traces of
    a vector field with unit viscosity, pressure excluded) or ``"val"`` (scalar).
    ``weight`` is a constant or a callable of the arc parameter. The edge normal
    is taken from ``sides['normal']`` if given, else the left normal of the edge.
    """
    a, b = np.asarray(edge, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length <= 0:
        raise DegenerateElementError("degenerate edge")
    n = np.asarray(sides.get("normal", [(b - a)[1] / length, -(b - a)[0] / length]), dtype=float)
    t = np.array([-n[1], n[0]])
    X = (1 - rule.points)[:, None] * a + rule.points[:, None] * b
    wq = rule.weights * length
    if callable(weight):
        wq = wq * np.array([weight(s) for s in rule.points])
    else:
        wq = wq * weight

    def evaluate(spec):
        side, sel = spec
        if side not in sides:
            raise ContractError(f"no {side!r} side available on this edge")
        kind, tri = sides[side]
        tri = np.asarray(tri, dtype=float)
        lam = barycentric_of(np.repeat(tri[None], len(X), axis=0), X)
        vals, dl = _shape_bary(kind, lam)
        g, _ = bary_gradients(tri[None])
        grads = np.einsum("qak,kd->qad", dl, g[0])  # (nq, n, 2)
        nq, nl = vals.shape
        if sel == "val":
            return vals
        out = np.zeros((nq, 2 * nl))
        if sel in ("n", "t"):
            d = n if sel == "n" else t
            out[:, 0::2] = vals * d[0]
            out[:, 1::2] = vals * d[1]
            return out
        if sel in ("snn", "snt"):
            d = n if sel == "snn" else t
            # 2 d.D(phi)n for phi = N_a e_c: (d_c dN_a.n + n_c dN_a.d)
            gn = grads @ n
            gd = grads @ d
            out[:, 0::2] = d[0] * gn + n[0] * gd
            out[:, 1::2] = d[1] * gn + n[1] * gd
            return out
        raise ValueError(f"unknown selector {sel!r}")

    A = evaluate(integrand[0])
    B = evaluate(integrand[1])
    return np.einsum("q,qi,qj->ij", wq, A, B)


# --------------------------------------------------------------------------- dof maps

@dataclass
class FieldSpace:
    name: str
    kind: str
    ncomp: int
    region: int
    offset: int
    node_global: np.ndarray  # global node ids (vertex id or nv + edge id)
    node_coords: np.ndarray
    elem_tris: np.ndarray  # global triangle ids in region order
    elem_nodes: np.ndarray  # (E, nloc) local node numbers
    tri_to_elem: np.ndarray  # (M,) element index or -1

    @property
    def n_nodes(self) -> int:
        return len(self.node_global)

    @property
    def ndof(self) -> int:
        return self.ncomp * self.n_nodes

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.ndof)

    def elem_dofs(self) -> np.ndarray:
        """Global dof numbers per element, interleaved for vector fields."""
        base = self.offset + self.ncomp * self.elem_nodes
        if self.ncomp == 1:
            return base
        return np.stack([base + c for c in range(self.ncomp)], axis=-1).reshape(len(base), -1)

    def dof(self, node: np.ndarray, comp: int = 0) -> np.ndarray:
        return self.offset + self.ncomp * np.asarray(node) + comp


@dataclass
class DofMap:
    mesh: Mesh2D
    fields: dict
    total: int
    edges: np.ndarray  # global edge list (vertex pairs) used for P2 nodes
    tri_edges: np.ndarray  # (M, 3) edge id of each local edge
    constraints: dict = field(default_factory=dict)  # field -> label -> list of (node, direction)

    @property
    def offsets(self) -> dict:
        return {k: f.offset for k, f in self.fields.items()}

    def __getitem__(self, name: str) -> FieldSpace:
        return self.fields[name]

    def split(self, y: np.ndarray) -> dict:
        return {k: y[f.slice] for k, f in self.fields.items()}

    def group_slices(self) -> list[slice]:
        f = self.fields
        return [
            slice(f["v"].offset, f["p_f"].offset + f["p_f"].ndof),
            slice(f["q"].offset, f["p_p"].offset + f["p_p"].ndof),
            slice(f["U"].offset, f["Udot"].offset + f["Udot"].ndof),
        ]

    # ---- Dirichlet bookkeeping
    def boundary_nodes(self, name: str, label: str) -> np.ndarray:
        fs = self.fields[name]
        mesh = self.mesh
        idx = mesh.edges_with_label(label)
        if len(idx) == 0:
            return np.zeros(0, dtype=np.int64)
        idx = idx[fs.tri_to_elem[mesh.boundary_tri[idx]] >= 0]
        glob = [mesh.boundary_edges[idx].ravel()]
        if fs.kind == "P2":
            keys = np.sort(mesh.boundary_edges[idx], axis=1)
            glob.append(mesh.n_vertices + _edge_ids(self.edges, keys))
        glob = np.unique(np.concatenate(glob))
        loc = np.searchsorted(fs.node_global, glob)
        return loc

    def constrain(self, name: str, label: str, mode: str) -> None:
        """Record a homogeneous essential condition on nodes of ``label``.

        ``mode``: "all", "x", "y" or "normal" (normal component; corners get both).
        """
        fs = self.fields[name]
        nodes = self.boundary_nodes(name, label)
        if fs.ncomp == 1:
            dirs = np.ones((len(nodes), 1))
            entries = [(int(k), dirs[i]) for i, k in enumerate(nodes)]
        elif mode == "all":
            entries = [(int(k), np.array([1.0, 0.0])) for k in nodes]
            entries += [(int(k), np.array([0.0, 1.0])) for k in nodes]
        elif mode in ("x", "y"):
            e = np.array([1.0, 0.0]) if mode == "x" else np.array([0.0, 1.0])
            entries = [(int(k), e) for k in nodes]
        elif mode == "normal":
            entries = []
            normals = self._node_normals(fs, label)
            for k in nodes:
                nn = normals[int(k)]
                if nn is None:
                    entries += [(int(k), np.array([1.0, 0.0])), (int(k), np.array([0.0, 1.0]))]
                else:
                    entries.append((int(k), nn))
        else:
            raise ValueError(f"unknown constraint mode {mode!r}")
        self.constraints.setdefault(name, {})[label] = entries

    def _node_normals(self, fs: FieldSpace, label: str) -> dict:
        mesh = self.mesh
        idx = mesh.edges_with_label(label)
        idx = idx[fs.tri_to_elem[mesh.boundary_tri[idx]] >= 0]
        ed = mesh.boundary_edges[idx]
        p = mesh.vertices[ed]
        d = p[:, 1] - p[:, 0]
        nrm = np.column_stack([d[:, 1], -d[:, 0]])
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        c = mesh.centroids()[mesh.boundary_tri[idx]]
        flip = np.einsum("ij,ij->i", nrm, p.mean(axis=1) - c) < 0
        nrm[flip] *= -1
        collect: dict = {}
        for e, (a, b) in enumerate(ed):
            for g in (a, b):
                collect.setdefault(int(g), []).append(nrm[e])
        if fs.kind == "P2":
            eids = _edge_ids(self.edges, np.sort(ed, axis=1))
            for e, eid in enumerate(eids):
                collect.setdefault(mesh.n_vertices + int(eid), []).append(nrm[e])
        out = {}
        for g, lst in collect.items():
            loc = int(np.searchsorted(fs.node_global, g))
            arr = np.array(lst)
            if len(arr) > 1 and np.min(arr @ arr[0]) < 0.9:
                out[loc] = None  # corner
            else:
                v = arr.sum(axis=0)
                out[loc] = v / np.linalg.norm(v)
        return out

    def constraint_basis(self) -> sp.csr_matrix:
        """Orthonormal columns spanning the constrained directions."""
        rows, cols, vals = [], [], []
        col = 0
        seen = set()
        for name in FIELD_ORDER:
            fs = self.fields[name]
            per_node: dict = {}
            for entries in self.constraints.get(name, {}).values():
                for node, d in entries:
                    per_node.setdefault(node, []).append(np.asarray(d, dtype=float))
            for node in sorted(per_node):
                dirs = np.array(per_node[node])
                # orthonormalize the directions recorded for this node
                q, r = np.linalg.qr(dirs.T)
                rank = int(np.sum(np.abs(np.diag(r)) > 1e-10))
                for k in range(rank):
                    key = (name, node, k)
                    if key in seen:
                        continue
                    seen.add(key)
                    for c in range(fs.ncomp):
                        if abs(q[c, k]) > 1e-15:
                            rows.append(fs.dof(node, c))
                            cols.append(col)
                            vals.append(q[c, k])
                    col += 1
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.total, col))

    def constrained_dofs(self, name: str, label: Optional[str] = None) -> np.ndarray:
        """Axis-aligned constrained dof indices (for reporting)."""
        fs = self.fields[name]
        out = []
        for lab, entries in self.constraints.get(name, {}).items():
            if label is not None and lab != label:
                continue
            for node, d in entries:
                c = int(np.argmax(np.abs(d)))
                out.append(fs.dof(node, c))
        return np.unique(np.array(out, dtype=np.int64))


def _edge_ids(edges: np.ndarray, keys: np.ndarray) -> np.ndarray:
    # edges are lexicographically sorted unique pairs
    code_e = edges[:, 0] * (edges.max() + 1) + edges[:, 1]
    code_k = keys[:, 0] * (edges.max() + 1) + keys[:, 1]
    pos = np.searchsorted(code_e, code_k)
    if np.any(pos >= len(code_e)) or np.any(code_e[pos] != code_k):
        raise KeyError("edge not present in mesh")
    return pos


PRESETS = {
    "inf-sup": {"v": "P2", "p_f": "P1", "q": "P2", "p_p": "P1", "U": "P2", "Udot": "P2"},
    "equal-order": {k: "P1" for k in FIELD_ORDER},
}
_COMPONENTS = {"v": 2, "p_f": 1, "q": 2, "p_p": 1, "U": 2, "Udot": 2}
_REGION = {"v": FLUID, "p_f": FLUID, "q": POROUS, "p_p": POROUS, "U": POROUS, "Udot": POROUS}


def build_dofmap(mesh: Mesh2D, preset: str = "inf-sup") -> DofMap:
    if preset not in PRESETS:
        raise ValueError(f"unknown element preset {preset!r}")
    kinds = PRESETS[preset]
    tri = mesh.triangles
    keys = np.sort(tri[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
    edges, inv = np.unique(keys, axis=0, return_inverse=True)
    tri_edges = inv.reshape(-1, 3)
    nv = mesh.n_vertices
    fields = {}
    offset = 0
    for name in FIELD_ORDER:
        kind, region = kinds[name], _REGION[name]
        elem_tris = np.flatnonzero(mesh.regions == region)
        gnodes = tri[elem_tris]
        if kind == "P2":
            gnodes = np.concatenate([gnodes, nv + tri_edges[elem_tris]], axis=1)
        node_global, local = np.unique(gnodes, return_inverse=True)
        local = local.reshape(gnodes.shape)
        coords = np.empty((len(node_global), 2))
        isv = node_global < nv
        coords[isv] = mesh.vertices[node_global[isv]]
        eid = node_global[~isv] - nv
        coords[~isv] = mesh.vertices[edges[eid]].mean(axis=1)
        t2e = -np.ones(mesh.n_triangles, dtype=np.int64)
        t2e[elem_tris] = np.arange(len(elem_tris))
        fs = FieldSpace(name, kind, _COMPONENTS[name], region, offset, node_global, coords,
                        elem_tris, local, t2e)
        fields[name] = fs
        offset += fs.ndof
    return DofMap(mesh, fields, offset, edges, tri_edges)


# --------------------------------------------------------------------------- assembly helpers

def element_data(dm: DofMap, name: str, rule: QuadratureRule = TRIANGLE_RULE) -> ElementData:
    fs = dm[name]
    return ElementData(fs.kind, dm.mesh.vertices[dm.mesh.triangles[fs.elem_tris]], rule)


def scatter(dm: DofMap, row: str, col: str, local: np.ndarray) -> sp.csr_matrix:
    """Sum element matrices into a global-size sparse matrix (fixed element order)."""
    r = dm[row].elem_dofs()
    c = dm[col].elem_dofs()
    I = np.broadcast_to(r[:, :, None], local.shape).ravel()
    J = np.broadcast_to(c[:, None, :], local.shape).ravel()
    return sp.csr_matrix((local.ravel(), (I, J)), shape=(dm.total, dm.total))


def scatter_vector(dm: DofMap, name: str, local: np.ndarray) -> np.ndarray:
    out = np.zeros(dm.total)
    np.add.at(out, dm[name].elem_dofs().ravel(), local.ravel())
    return out


@dataclass
class PointTrace:
    """Sparse evaluation operators of one field at a list of points."""

    value: list  # per component: csr (npts x ndof)
    grad: list  # grad[c][d]: d/dx_d of component c


def point_trace(dm: DofMap, name: str, tris: np.ndarray, X: np.ndarray) -> PointTrace:
    """Values and gradients of field ``name`` at points X inside triangles ``tris``."""
    fs = dm[name]
    elem = fs.tri_to_elem[tris]
    if np.any(elem < 0):
        raise ContractError(f"field {name} is not defined on some requested triangles")
    p = dm.mesh.vertices[dm.mesh.triangles[tris]]
    lam = barycentric_of(p, X)
    vals, dl = _shape_bary(fs.kind, lam)  # (P, n), (P, n, 3)
    g, _ = bary_gradients(p)
    grads = np.einsum("pak,pkd->pad", dl, g)
    P, n = vals.shape
    rows = np.repeat(np.arange(P), n)
    nodes = fs.elem_nodes[elem].ravel()
    shape = (P, dm.total)

    def mat(data, comp):
        return sp.csr_matrix((data.ravel(), (rows, fs.dof(nodes, comp))), shape=shape)

    value = [mat(vals, c) for c in range(fs.ncomp)]
    grad = [[mat(grads[:, :, d], c) for d in range(2)] for c in range(fs.ncomp)]
    return PointTrace(value, grad)


def edge_quadrature(mesh: Mesh2D, edges: np.ndarray, rule: QuadratureRule = EDGE_RULE):
    """Quadrature points (P,2), weights (P,) and owning edge index (P,)."""
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    s = rule.points
    X = (1 - s)[None, :, None] * a[:, None, :] + s[None, :, None] * b[:, None, :]
    L = np.linalg.norm(b - a, axis=1)
    w = L[:, None] * rule.weights[None, :]
    owner = np.repeat(np.arange(len(edges)), len(s))
    return X.reshape(-1, 2), w.ravel(), owner
