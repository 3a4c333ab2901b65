"""Bilinear forms, interface operators and stabilizers over a DofMap.

Row convention. Fluid and Darcy rows are tested with (phi_f, psi_f, r, psi_p);
the two structure rows are tested with phi_p / tau and dphi_p / tau, so the
kinematic jump on the trial side and its test counterpart are the same linear
map K = v.n - q.n - U.n / tau. This makes the penalty block K^T W K
symmetric, gives the structure penalty its 1/tau^2 scale, and turns the
velocity-displacement and pressure-displacement couplings into skew pairs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import DofMap, FIELD_ORDER, build_dofmap
from .mesh import FLUID, Mesh2D
from .sparsela import BlockSystem, as_csr


@dataclass(frozen=True)
class PhysParams:
    rho_f: float
    mu_f: float
    rho_p: float
    mu_p: float
    lambda_p: float
    kappa: np.ndarray
    s_0: float
    alpha: float
    xi: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim == 0:
            k = k * np.eye(2)
        elif k.shape == (2,):
            k = np.diag(k)
        object.__setattr__(self, "kappa", k)
        for name in ("rho_f", "mu_f", "rho_p", "mu_p", "lambda_p", "s_0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PhysParams: {name} must be > 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("PhysParams: alpha must lie in (0, 1]")
        if self.xi < 0 or self.beta < 0:
            raise ValueError("PhysParams: xi and beta must be >= 0")
        if not np.allclose(k, k.T) or np.any(np.linalg.eigvalsh(k) <= 0):
            raise ValueError("PhysParams: kappa must be symmetric positive definite")

    @property
    def kappa_inv(self) -> np.ndarray:
        (a, b), (c, d) = self.kappa
        det = a * d - b * c
        return np.array([[d, -b], [-c, a]]) / det


@dataclass(frozen=True)
class NitscheParams:
    gamma_f: float
    gamma_stab: float = 1.0
    gamma_stab_prime: float = 0.0
    varsigma: int = 1
    theta: int = 1
    tangential_mode: str = "noSlip"
    gamma_p: float = 0.0
    gamma_q: float = 0.0

    def __post_init__(self):
        if not self.gamma_f > 0:
            raise ValueError("NitscheParams: gamma_f must be > 0")
        for name in ("gamma_stab", "gamma_stab_prime", "gamma_p", "gamma_q"):
            if getattr(self, name) < 0:
                raise ValueError(f"NitscheParams: {name} must be >= 0")
        if self.varsigma not in (-1, 0, 1):
            raise ValueError("NitscheParams: varsigma must be -1, 0 or 1")
        if self.theta not in (0, 1):
            raise ValueError("NitscheParams: theta must be 0 or 1")
        if self.tangential_mode not in ("noSlip", "BJS"):
            raise ValueError("NitscheParams: tangential_mode must be noSlip or BJS")


# --------------------------------------------------------------------------- interface traces

@dataclass
class InterfaceTraces:
    """Sparse maps from the global vector to values at interface quadrature points."""

    X: np.ndarray
    w: np.ndarray
    h: np.ndarray
    n: np.ndarray
    t: np.ndarray
    Vn: sp.csr_matrix
    Vt: sp.csr_matrix
    Qn: sp.csr_matrix
    Qt: sp.csr_matrix
    Un: sp.csr_matrix
    Ut: sp.csr_matrix
    Pf: sp.csr_matrix
    Pp: sp.csr_matrix
    SNN: sp.csr_matrix  # 2 n.D(v)n
    SNT: sp.csr_matrix  # 2 t.D(v)n

    def W(self, scale=1.0) -> sp.dia_matrix:
        return sp.diags(self.w * scale)


def interface_traces(dm: DofMap) -> InterfaceTraces:
    mesh = dm.mesh
    itf = mesh.interface
    if len(itf) == 0:
        warnings.warn("mesh has no interface edges; interface blocks are empty")
    X, w, owner = fem.edge_quadrature(mesh, np.asarray(itf.edges))
    n = itf.normals[owner]
    t = itf.tangents[owner]
    h = mesh.interface_lengths()[owner]
    ftri = itf.fluid_tri[owner]
    ptri = itf.porous_tri[owner]
    v = fem.point_trace(dm, "v", ftri, X)
    q = fem.point_trace(dm, "q", ptri, X)
    U = fem.point_trace(dm, "U", ptri, X)
    pf = fem.point_trace(dm, "p_f", ftri, X)
    pp = fem.point_trace(dm, "p_p", ptri, X)

    def comp(tr, d):
        return as_csr(sp.diags(d[:, 0]) @ tr.value[0] + sp.diags(d[:, 1]) @ tr.value[1])

    snn = sp.csr_matrix((len(X), dm.total))
    snt = sp.csr_matrix((len(X), dm.total))
    for c in range(2):
        for d in range(2):
            snn = snn + sp.diags(2.0 * n[:, c] * n[:, d]) @ v.grad[c][d]
            snt = snt + sp.diags(t[:, c] * n[:, d] + n[:, c] * t[:, d]) @ v.grad[c][d]
    return InterfaceTraces(
        X, w, h, n, t,
        comp(v, n), comp(v, t), comp(q, n), comp(q, t), comp(U, n), comp(U, t),
        as_csr(pf.value[0]), as_csr(pp.value[0]), as_csr(snn), as_csr(snt),
    )


# --------------------------------------------------------------------------- domain forms

def _scatter(dm, row, col, local):
    return as_csr(fem.scatter(dm, row, col, local))


def assemble_mass(dm: DofMap, name: str, weight: float = 1.0) -> sp.csr_matrix:
    ed = fem.element_data(dm, name)
    if dm[name].ncomp == 2:
        return _scatter(dm, name, name, weight * fem.kernel_vector_mass(ed))
    return _scatter(dm, name, name, weight * fem.kernel_mass(ed))


def assemble_strain(dm: DofMap, name: str, weight: float) -> sp.csr_matrix:
    """2 w D(u):D(phi) on a vector field."""
    return _scatter(dm, name, name, fem.kernel_strain(fem.element_data(dm, name), weight))


def assemble_a_s(dm: DofMap, phys: PhysParams, include_spring: bool = True) -> sp.csr_matrix:
    ed = fem.element_data(dm, "U")
    local = fem.kernel_strain(ed, phys.mu_p) + fem.kernel_divdiv(ed, phys.lambda_p)
    if include_spring and phys.xi > 0:
        local = local + phys.xi * fem.kernel_vector_mass(ed)
    return _scatter(dm, "U", "U", local)


def _div_coupling(dm, vname, pname, weight):
    ev = fem.element_data(dm, vname)
    ep = fem.element_data(dm, pname)
    return _scatter(dm, pname, vname, fem.kernel_div_coupling(ev, ep, weight))


def assemble_b_s(dm: DofMap, phys: PhysParams) -> sp.csr_matrix:
    """alpha * int p_p div(phi_p): rows p_p, columns U."""
    return _div_coupling(dm, "U", "p_p", phys.alpha)


def assemble_a_f(dm: DofMap, phys: PhysParams) -> sp.csr_matrix:
    return assemble_strain(dm, "v", phys.mu_f)


def assemble_b_f(dm: DofMap) -> sp.csr_matrix:
    return _div_coupling(dm, "v", "p_f", 1.0)


def assemble_a_p(dm: DofMap, phys: PhysParams) -> sp.csr_matrix:
    ed = fem.element_data(dm, "q")
    return _scatter(dm, "q", "q", fem.kernel_vector_mass(ed, phys.kappa_inv))


def assemble_b_p(dm: DofMap) -> sp.csr_matrix:
    return _div_coupling(dm, "q", "p_p", 1.0)


def _h2_grad_grad(dm: DofMap, name: str, gamma: float) -> sp.csr_matrix:
    ed = fem.element_data(dm, name)
    h = dm.mesh.diameters()[dm[name].elem_tris]
    return _scatter(dm, name, name, gamma * (h ** 2)[:, None, None] * fem.kernel_grad_grad(ed))


# --------------------------------------------------------------------------- interface operators

def _trial_jumps(tr: InterfaceTraces, tau: float):
    """Normal and tangential kinematic jump maps (implicit part)."""
    K = as_csr(tr.Vn - tr.Qn - tr.Un / tau)
    Kt = as_csr(tr.Vt - tr.Ut / tau)
    return K, Kt


def assemble_interface_penalty(tr: InterfaceTraces, phys: PhysParams, nit: NitscheParams, tau: float) -> dict:
    """Penalty operator and its history part.

    Returns ``lhs`` (K^T Wp K + Kt^T Wt Kt) and ``hist`` (the U^{n-1} part moved
    to the right-hand side), where Wt is the penalty weight or beta for BJS.
    """
    K, Kt = _trial_jumps(tr, tau)
    Wp = tr.W(nit.gamma_f * phys.mu_f / tr.h)
    Wt = tr.W(phys.beta) if nit.tangential_mode == "BJS" else Wp
    lhs = K.T @ Wp @ K + Kt.T @ Wt @ Kt
    hist = -(K.T @ Wp @ tr.Un + Kt.T @ Wt @ tr.Ut) / tau
    return {"lhs": as_csr(lhs), "hist": as_csr(hist), "normal": as_csr(K.T @ Wp @ K),
            "tangential": as_csr(Kt.T @ Wt @ Kt)}


def assemble_interface_consistency(tr: InterfaceTraces, phys: PhysParams, nit: NitscheParams, tau: float) -> dict:
    """One-sided consistency terms and their varsigma-weighted adjoints.

    ``consistency``: -int n.sigma(v,p)n K(z) - int t.sigma(v)n Kt(z)
    ``adjoint``:     -int n.sigma(s phi, -psi)n K(y) - int t.sigma(s phi)n Kt(y)
    ``hist``:        U^{n-1} part of the adjoint, moved to the right-hand side.
    In BJS mode the tangential pieces are absent.
    """
    K, Kt = _trial_jumps(tr, tau)
    W = tr.W()
    mu, s = phys.mu_f, nit.varsigma
    snn = mu * tr.SNN - tr.Pf
    snn_adj = s * mu * tr.SNN + tr.Pf
    cons = -K.T @ W @ snn
    adj = -snn_adj.T @ W @ K
    hist = snn_adj.T @ W @ tr.Un / tau
    if nit.tangential_mode == "noSlip":
        cons = cons - Kt.T @ W @ (mu * tr.SNT)
        adj = adj - (s * mu * tr.SNT).T @ W @ Kt
        hist = hist + (s * mu * tr.SNT).T @ W @ tr.Ut / tau
    return {"consistency": as_csr(cons), "adjoint": as_csr(adj), "hist": as_csr(hist)}


def assemble_stabilizers(dm: DofMap, tr: InterfaceTraces, phys: PhysParams, nit: NitscheParams, tau: float) -> dict:
    """Interface increment stabilizers (tau already folded in) and domain h^2 stabilizers.

    The increment ones act as S (y^n - y^{n-1}); the same matrix appears on
    both sides.
    """
    gm = nit.gamma_f * phys.mu_f
    S_fp = tr.Pf.T @ tr.W(nit.gamma_stab * tr.h / gm) @ tr.Pf
    Wv = tr.W(nit.gamma_stab_prime * gm / tr.h)
    S_fv = tr.Vn.T @ Wv @ tr.Vn
    S_fq = tr.Qn.T @ Wv @ tr.Qn
    return {
        "S_fp": as_csr(S_fp),
        "S_fv": as_csr(S_fv),
        "S_fq": as_csr(S_fq),
        "S_p": _h2_grad_grad(dm, "p_f", nit.gamma_p),
        "S_q": _h2_grad_grad(dm, "p_p", nit.gamma_q),
    }


# --------------------------------------------------------------------------- forcing

def boundary_load(dm: DofMap, label: str) -> np.ndarray:
    """Vector of -int_{label} phi . n_out over fluid velocity test functions."""
    mesh = dm.mesh
    idx = mesh.edges_with_label(label)
    out = np.zeros(dm.total)
    if len(idx) == 0:
        return out
    ed = mesh.boundary_edges[idx]
    X, w, owner = fem.edge_quadrature(mesh, ed)
    tris = mesh.boundary_tri[idx][owner]
    p = mesh.vertices[ed]
    d = p[:, 1] - p[:, 0]
    nrm = np.column_stack([d[:, 1], -d[:, 0]])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    c = mesh.centroids()[mesh.boundary_tri[idx]]
    nrm[np.einsum("ij,ij->i", nrm, p.mean(axis=1) - c) < 0] *= -1
    nrm = nrm[owner]
    v = fem.point_trace(dm, "v", tris, X)
    return -(v.value[0].T @ (w * nrm[:, 0]) + v.value[1].T @ (w * nrm[:, 1]))


def region_source(dm: DofMap, mask_tris: np.ndarray) -> np.ndarray:
    """Vector of int_{selected fluid triangles} psi_f."""
    fs = dm["p_f"]
    ed = fem.element_data(dm, "p_f")
    local = np.einsum("eq,qa->ea", ed.w, ed.N)
    local = local * mask_tris[fs.elem_tris][:, None]
    return fem.scatter_vector(dm, "p_f", local)


@dataclass
class Forcing:
    """F(t) = amplitude(t) * shape."""

    shape: np.ndarray
    amplitude: Callable[[float], float]

    def __call__(self, t: float) -> np.ndarray:
        a = self.amplitude(t)
        return a * self.shape if a != 0.0 else np.zeros_like(self.shape)


def assemble_forcing(t: float, forcing: Forcing) -> np.ndarray:
    return forcing(t)


# --------------------------------------------------------------------------- operators

def field_mask(dm: DofMap, names) -> sp.dia_matrix:
    m = np.zeros(dm.total)
    for nm in ([names] if isinstance(names, str) else names):
        m[dm[nm].slice] = 1.0
    return sp.diags(m)


def field_block(dm: DofMap, A, row: str, col) -> sp.csr_matrix:
    return as_csr(field_mask(dm, row) @ A @ field_mask(dm, col))


def group_index(dm: DofMap, theta: int) -> np.ndarray:
    """Splitting group of every dof: fluid 0, then Darcy/structure (theta=1) or Biot (theta=0)."""
    g = np.zeros(dm.total, dtype=np.int64)
    if theta == 1:
        for nm, k in (("q", 1), ("p_p", 1), ("U", 2), ("Udot", 2)):
            g[dm[nm].slice] = k
    else:
        for nm in ("q", "p_p", "U", "Udot"):
            g[dm[nm].slice] = 1
    return g


def strictly_lower(A: sp.spmatrix, groups: np.ndarray) -> sp.csr_matrix:
    C = sp.coo_matrix(A)
    keep = groups[C.row] > groups[C.col]
    return as_csr(sp.coo_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=A.shape))


@dataclass
class Problem:
    """Everything needed to advance one discrete coupled problem in time."""

    mesh: Mesh2D
    dm: DofMap
    phys: PhysParams
    nit: NitscheParams
    tau: float
    traces: InterfaceTraces
    base: dict
    system: BlockSystem
    forcing: Forcing
    loose_a: Optional[BlockSystem] = None
    cache: dict = field(default_factory=dict, repr=False)

    def with_forcing(self, forcing: Forcing) -> "Problem":
        return replace(self, forcing=forcing)


def assemble_base(dm: DofMap, tr: InterfaceTraces, phys: PhysParams, nit: NitscheParams, tau: float) -> dict:
    base = {
        "M_v": assemble_mass(dm, "v"),
        "M_pf": assemble_mass(dm, "p_f"),
        "M_q": assemble_mass(dm, "q"),
        "M_pp": assemble_mass(dm, "p_p"),
        "M_U": assemble_mass(dm, "U"),
        "M_Udot": assemble_mass(dm, "Udot"),
        "A_f": assemble_a_f(dm, phys),
        "B_f": assemble_b_f(dm),
        "A_q": assemble_a_p(dm, phys),
        "B_p": assemble_b_p(dm),
        "A_s": assemble_a_s(dm, phys),
        "A_s_elastic": assemble_a_s(dm, phys, include_spring=False),
        "B_s": assemble_b_s(dm, phys),
        "D_v": assemble_strain(dm, "v", 0.5),  # |D(v)|^2 form
        "D_U": assemble_strain(dm, "U", 0.5),
    }
    base["div_U"] = _scatter(dm, "U", "U", fem.kernel_divdiv(fem.element_data(dm, "U")))
    # mass coupling between the U rows and Udot columns (identical nodal layouts)
    MU = base["M_U"][dm["U"].slice, dm["U"].slice]
    off_u, off_ud, n = dm["U"].offset, dm["Udot"].offset, dm.total
    base["M_U_Udot"] = _shift(MU, off_u, off_ud, n)
    base["M_Udot_U"] = _shift(MU, off_ud, off_u, n)
    base.update(assemble_stabilizers(dm, tr, phys, nit, tau))
    return base


def _shift(B: sp.spmatrix, r0: int, c0: int, n: int) -> sp.csr_matrix:
    C = sp.coo_matrix(B)
    return as_csr(sp.coo_matrix((C.data, (C.row + r0, C.col + c0)), shape=(n, n)))


def monolithic_operator(dm: DofMap, tr: InterfaceTraces, base: dict, phys: PhysParams, nit: NitscheParams, tau: float):
    """Left operator (with the interface pressure stabilizer) and history operator.

    Returns (A, R, pieces) where pieces holds the individual term matrices.
    """
    pen = assemble_interface_penalty(tr, phys, nit, tau)
    con = assemble_interface_consistency(tr, phys, nit, tau)
    B_f, B_p, B_s = base["B_f"], base["B_p"], base["B_s"]
    pieces = {
        "mass_v": phys.rho_f / tau * base["M_v"],
        "A_f": base["A_f"],
        "B_f": B_f,
        "B_f^T": -B_f.T,
        "S_p": base["S_p"],
        "S_fp": base["S_fp"],
        "A_q": base["A_q"],
        "B_p": B_p,
        "B_p^T": -B_p.T,
        "mass_pp": phys.s_0 / tau * base["M_pp"],
        "S_q": base["S_q"],
        "B_s": B_s / tau,
        "B_s^T": -B_s.T / tau,
        "A_s": base["A_s"] / tau,
        "M_s": phys.rho_p / tau ** 2 * base["M_U_Udot"],
        "-M_s": -phys.rho_p / tau ** 2 * base["M_Udot_U"],
        "Mdot_s": phys.rho_p / tau * base["M_Udot"],
        "penalty": pen["lhs"],
        "consistency": con["consistency"],
        "adjoint": con["adjoint"],
    }
    A = as_csr(sum(pieces.values()))
    R = (
        phys.rho_f / tau * base["M_v"]
        + base["S_fp"]
        + phys.s_0 / tau * base["M_pp"]
        + B_s / tau
        + phys.rho_p / tau ** 2 * base["M_U_Udot"]
        - phys.rho_p / tau ** 2 * base["M_Udot_U"]
        + pen["hist"]
        + con["hist"]
    )
    pieces["penalty_hist"] = pen["hist"]
    pieces["adjoint_hist"] = con["hist"]
    pieces["penalty_normal"] = pen["normal"]
    pieces["penalty_tangential"] = pen["tangential"]
    return A, as_csr(R), pieces


def lagged_operator(dm: DofMap, A: sp.csr_matrix, pieces: dict, theta: int) -> sp.csr_matrix:
    """Part of the monolithic operator evaluated at the previous level by the splitting."""
    g = group_index(dm, theta)
    fluid_cons = field_mask(dm, "v") @ pieces["consistency"]
    lower = strictly_lower(A, g)
    return as_csr(lower + fluid_cons)


def loose_operator(dm, A, R, pieces, base, theta: int):
    L = lagged_operator(dm, A, pieces, theta)
    S = theta * (base["S_fv"] + base["S_fq"])
    return as_csr(A - L + S), as_csr(R - L + S), L


def named_blocks(dm: DofMap, pieces: dict) -> dict:
    """Blocks under the names of the block display, in global numbering."""
    fb = lambda A, r, c: field_block(dm, A, r, c)  # noqa: E731
    pen, cons, adj = pieces["penalty"], pieces["consistency"], pieces["adjoint"]
    itf = as_csr(pen + cons + adj)
    return {
        "M_f": pieces["mass_v"],
        "A_f": pieces["A_f"],
        "Γ_f^γ": fb(pen, "v", "v"),
        "Γ_f^σ": fb(cons, "v", "v"),
        "S_f": pieces.get("S_fv", sp.csr_matrix(pen.shape)),
        "B_pf": pieces["B_f"],
        "Γ_pf": fb(adj, "p_f", "v"),
        "S_p": as_csr(pieces["S_p"] + pieces["S_fp"]),
        "Γ_qf": fb(itf, "q", "v"),
        "Γ_qp": fb(itf, "q", "p_f"),
        "A_q": pieces["A_q"],
        "Γ_q": fb(pen, "q", "q"),
        "S_q": pieces.get("S_fq", sp.csr_matrix(pen.shape)),
        "B_pq": pieces["B_p"],
        "M_p": pieces["mass_pp"],
        "Γ_sf": fb(itf, "U", "v"),
        "Γ_sp": fb(itf, "U", "p_f"),
        "Γ_sq": fb(itf, "U", "q"),
        "B_sp": pieces["B_s"],
        "A_s": pieces["A_s"],
        "Γ_s": fb(pen, "U", "U"),
        "M_s": pieces["M_s"],
        "Ṁ_s": pieces["Mdot_s"],
        "Γ_sf^γ": fb(pen, "U", "v"),
        "Γ_sf^σ": fb(cons, "U", "v"),
        "Γ_sp^σ": fb(cons, "U", "p_f"),
        "Γ_sq^γ": fb(pen, "U", "q"),
    }


def build_problem(
    mesh: Mesh2D,
    preset: str,
    phys: PhysParams,
    nit: NitscheParams,
    tau: float,
    essential: list,
    forcing_builder: Optional[Callable[[DofMap], Forcing]] = None,
) -> Problem:
    """Assemble all operators for one setting.

    ``essential`` lists (field, label, mode) homogeneous conditions.
    The preconditioner/loosely coupled system always uses the three-group
    splitting (theta=1); the theta=0 variant is kept alongside.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    dm = build_dofmap(mesh, preset)
    for name, label, mode in essential:
        dm.constrain(name, label, mode)
    tr = interface_traces(dm)
    base = assemble_base(dm, tr, phys, nit, tau)
    A, R, pieces = monolithic_operator(dm, tr, base, phys, nit, tau)
    pieces["S_fv"], pieces["S_fq"] = base["S_fv"], base["S_fq"]
    N = dm.constraint_basis()
    systems = {}
    for theta in (1, 0):
        Ah, Rh, L = loose_operator(dm, A, R, pieces, base, theta)
        groups = dm.group_slices()
        if theta == 0:
            groups = [groups[0], slice(groups[1].start, groups[2].stop)]
        sysm = BlockSystem(named_blocks(dm, pieces), A, R, Ah, Rh, groups, N,
                           meta={"theta": theta, "tau": tau, "preset": preset},
                           field_slices=[fs.slice for fs in dm.fields.values()])
        sysm.lagged = L
        systems[theta] = sysm
    systems[0]._cache = systems[1]._cache
    forcing = forcing_builder(dm) if forcing_builder else Forcing(np.zeros(dm.total), lambda t: 0.0)
    prob = Problem(mesh, dm, phys, nit, tau, tr, base, systems[1], forcing, loose_a=systems[0])
    prob.cache["pieces"] = pieces
    return prob
