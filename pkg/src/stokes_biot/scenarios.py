"""Configured experiments: the artery channel, the fractured reservoir, and two studies."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import fem, schemes
from .forms import Forcing, NitscheParams, PhysParams, Problem, boundary_load, build_problem, region_source
from .mesh import FLUID, POROUS, Mesh2D, build_channel_mesh, build_reservoir_mesh, map_reservoir_domain

log = logging.getLogger(__name__)


@dataclass
class ScenarioConfig:
    scenario: str
    units: str
    geometry: dict
    phys: PhysParams
    nit: NitscheParams
    tau: float
    T_final: float
    elementPreset: str = "inf-sup"
    scheme: str = "monolithic"
    inflow: dict = field(default_factory=lambda: {"p_max": 13334.0, "T_max": 0.003})
    source: dict = field(default_factory=lambda: {"rate": 25.0, "radius": 7.0})
    output: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    precond: dict = field(default_factory=dict)
    energy: dict = field(default_factory=lambda: {"c": 0.1, "C": 10.0})
    override: bool = False
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return float(self.geometry["h"])

    @property
    def n_steps(self) -> int:
        n = int(round(self.T_final / self.tau))
        cap = self.output.get("maxSteps")
        return min(n, int(cap)) if cap else n

    def with_overrides(self, **kw) -> "ScenarioConfig":
        geo = dict(self.geometry)
        if kw.get("h") is not None:
            geo["h"] = kw["h"]
        out = dict(self.output)
        if kw.get("out_dir") is not None:
            out["outDir"] = kw["out_dir"]
        if kw.get("max_steps") is not None:
            out["maxSteps"] = kw["max_steps"]
        if kw.get("dump_matrix"):
            out["dumpMatrix"] = True
        conv = dict(self.convergence)
        if kw.get("tau_ref") is not None:
            conv["tauRef"] = kw["tau_ref"]
        new = replace(self, geometry=geo, output=out, convergence=conv)
        if kw.get("tau") is not None:
            new = replace(new, tau=kw["tau"])
        if kw.get("scheme") is not None:
            new = replace(new, scheme=kw["scheme"])
        return new


# --------------------------------------------------------------------------- small pieces

def inflow_pressure(t: float, p_max: float = 13334.0, T_max: float = 0.003) -> float:
    """Raised-cosine pulse: p_max/2 (1 - cos(2 pi t / T_max)) for t <= T_max, zero afterwards."""
    if t < 0:
        raise ValueError("time must be non-negative")
    if t > T_max:
        return 0.0
    return 0.5 * p_max * (1.0 - np.cos(2.0 * np.pi * t / T_max))


def bjs_coefficient(alpha: float, mu_f: float, kappa) -> float:
    """Slip coefficient from the permeability tensor K = kappa * mu_f."""
    k = np.atleast_2d(np.asarray(kappa, dtype=float))
    if k.shape == (1, 1):
        k = k[0, 0] * np.eye(2)
    elif k.shape == (1, 2):
        k = np.diag(k[0])
    tr = float(np.trace(k * mu_f))
    if tr <= 0:
        raise ValueError("permeability trace must be positive")
    return float(np.sqrt(tr) / (alpha * mu_f * np.sqrt(3.0)))


# factors taking CGS values to SI
_CGS_TO_SI = {
    "rho_f": 1e3, "rho_p": 1e3,          # g/cm^3 -> kg/m^3
    "mu_f": 0.1,                          # g/(cm s) -> Pa s
    "mu_p": 0.1, "lambda_p": 0.1,         # dyne/cm^2 -> Pa
    "kappa": 1e-3,                        # cm^3 s/g -> m^3 s/kg
    "s_0": 10.0,                          # cm^2/dyne -> 1/Pa
    "alpha": 1.0,
    "xi": 1e3,                            # dyne/cm^4 -> Pa/m^2
    "beta": 1e-3,
}
_LENGTH = {"CGS": 1e-2, "SI": 1.0}


def convert_units(phys: dict, geometry: dict, src: str, dst: str) -> tuple[dict, dict]:
    """Convert parameter and geometry dictionaries between CGS and SI."""
    if src == dst:
        return dict(phys), dict(geometry)
    if {src, dst} != {"CGS", "SI"}:
        raise ValueError(f"unsupported unit conversion {src} -> {dst}")
    up = src == "CGS"
    out = {}
    for k, v in phys.items():
        f = _CGS_TO_SI.get(k, 1.0)
        f = f if up else 1.0 / f
        out[k] = (np.asarray(v, dtype=float) * f).tolist() if isinstance(v, (list, tuple, np.ndarray)) else v * f
    lf = _LENGTH[src] / _LENGTH[dst]
    geo = {k: v * lf for k, v in geometry.items()}
    return out, geo


# --------------------------------------------------------------------------- problem builders

ARTERY_ESSENTIAL = (
    [("v", "symmetry", "y")]
    + [(f, lab, "all") for f in ("U", "Udot") for lab in ("inlet_p", "outlet_p")]
    + [(f, "ext_p", "x") for f in ("U", "Udot")]
    + [("q", lab, "x") for lab in ("inlet_p", "outlet_p")]
)
RESERVOIR_ESSENTIAL = [(f, "ext_p", "normal") for f in ("q", "U", "Udot")]


def artery_mesh(cfg: ScenarioConfig, h: Optional[float] = None) -> Mesh2D:
    g = cfg.geometry
    return build_channel_mesh(g["L"], g["R"], g["r_p"], h or g["h"])


def artery_problem(cfg: ScenarioConfig, h: Optional[float] = None, tau: Optional[float] = None,
                   preset: Optional[str] = None, forced: bool = True) -> Problem:
    mesh = artery_mesh(cfg, h)
    p_max, T_max = cfg.inflow["p_max"], cfg.inflow["T_max"]
    amp = (lambda t: inflow_pressure(t, p_max, T_max)) if forced else (lambda t: 0.0)
    return build_problem(mesh, preset or cfg.elementPreset, cfg.phys, cfg.nit, tau or cfg.tau,
                         ARTERY_ESSENTIAL, lambda dm: Forcing(boundary_load(dm, "inlet_f"), amp))


def reservoir_meshes(cfg: ScenarioConfig, h: Optional[float] = None) -> tuple[Mesh2D, Mesh2D]:
    g = cfg.geometry
    ref = build_reservoir_mesh(g["halfWidth"], g["fractureHalfLength"], h or g["h"])
    return ref, map_reservoir_domain(ref)


def reservoir_problem(cfg: ScenarioConfig, h: Optional[float] = None, tau: Optional[float] = None,
                      forced: bool = True) -> Problem:
    ref, mesh = reservoir_meshes(cfg, h)
    rate = cfg.source["rate"] / cfg.phys.rho_f
    radius = cfg.source["radius"]
    c = ref.centroids()
    mask = ((mesh.regions == FLUID) & (np.hypot(c[:, 0], c[:, 1]) <= radius)).astype(float)
    amp = (lambda t: 1.0) if forced else (lambda t: 0.0)
    prob = build_problem(mesh, cfg.elementPreset, cfg.phys, cfg.nit, tau or cfg.tau,
                         RESERVOIR_ESSENTIAL, lambda dm: Forcing(rate * region_source(dm, mask), amp))
    prob.cache["reference_mesh"] = ref
    return prob


def make_problem(cfg: ScenarioConfig, **kw) -> Problem:
    if cfg.scenario == "artery":
        return artery_problem(cfg, **kw)
    return reservoir_problem(cfg, **{k: v for k, v in kw.items() if k != "preset"})


# --------------------------------------------------------------------------- field outputs

def locate_points(mesh: Mesh2D, X: np.ndarray, region: int) -> np.ndarray:
    """Index of a triangle of ``region`` containing each point (brute force)."""
    tris = np.flatnonzero(mesh.regions == region)
    p = mesh.vertices[mesh.triangles[tris]]
    out = np.empty(len(X), dtype=np.int64)
    for i, x in enumerate(X):
        lam = fem.barycentric_of(p, np.broadcast_to(x, (len(tris), 2)))
        k = np.argmax(lam.min(axis=1))
        if lam[k].min() < -1e-9:
            raise ValueError(f"point {x} lies outside the region")
        out[i] = tris[k]
    return out


def nodal_values(prob: Problem, y: np.ndarray, name: str) -> np.ndarray:
    """Field values at mesh vertices (zero outside the field's region)."""
    fs = prob.dm[name]
    nv = prob.mesh.n_vertices
    out = np.zeros((nv, fs.ncomp))
    isv = fs.node_global < nv
    vals = y[fs.slice].reshape(-1, fs.ncomp)
    out[fs.node_global[isv]] = vals[isv]
    return out[:, 0] if fs.ncomp == 1 else out


def interface_profile(prob: Problem, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(x, U.n) at interface quadrature points, sorted by abscissa."""
    tr = prob.traces
    order = np.argsort(tr.X[:, 0], kind="stable")
    return tr.X[order, 0], (tr.Un @ y)[order]


def intramural_planes(prob: Problem, cfg: ScenarioConfig, y: np.ndarray, nx: int = 241) -> dict:
    """q.n along the interface, mid-wall and outer planes of the artery wall."""
    g = cfg.geometry
    xs = np.linspace(0.0, g["L"], nx)
    eps = 1e-9 * g["L"]
    xs = np.clip(xs, eps, g["L"] - eps)
    planes = {"interface": g["R"], "mid": g["R"] + 0.5 * g["r_p"], "outer": g["R"] + g["r_p"]}
    key = ("planes", nx)
    if key not in prob.cache:
        mats = {}
        for name, yy in planes.items():
            yq = yy + (eps if name == "interface" else -eps if name == "outer" else 0.0)
            X = np.column_stack([xs, np.full(nx, yq)])
            tris = locate_points(prob.mesh, X, POROUS)
            mats[name] = fem.point_trace(prob.dm, "q", tris, X).value[1]
        prob.cache[key] = mats
    return {"x": xs, **{k: M @ y for k, M in prob.cache[key].items()}}


# --------------------------------------------------------------------------- runners

def _stepper(scheme: str):
    if scheme == "preconditioned":
        return lambda prob, s: schemes.step_preconditioned(prob, s)[0]
    return schemes.STEPPERS[scheme]


def _snapshot_steps(cfg: ScenarioConfig, n_steps: int) -> dict:
    times = cfg.output.get("snapshotTimes", [])
    return {int(round(t / cfg.tau)): t for t in times if 0 < round(t / cfg.tau) <= n_steps}


def run_scenario(cfg: ScenarioConfig, forced: bool = True, write: bool = True) -> dict:
    """Advance the configured scheme, record logs and snapshots, optionally write files."""
    from . import io as sio

    prob = make_problem(cfg, forced=forced)
    if cfg.scheme == "algoB":
        schemes.check_stability_constraint(prob, 1)
    out_dir = Path(cfg.output.get("outDir", "out"))
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    if write and cfg.output.get("dumpMatrix"):
        from .sparsela import dump_matrix
        dump_matrix(prob.system.A_mono_c, out_dir / "A_mono.mtx")
        dump_matrix(prob.system.A_loose_c, out_dir / "A_loose.mtx")
    n_steps = cfg.n_steps
    snaps = _snapshot_steps(cfg, n_steps)
    step = _stepper(cfg.scheme)
    state = schemes.State.zero(prob)
    rows, snapshots, profiles, fluxes = [], {}, {}, {}
    work = 0.0
    t0 = time.perf_counter()
    for _ in range(n_steps):
        iters = 0
        if cfg.scheme == "preconditioned":
            state, rep = schemes.step_preconditioned(prob, state)
            iters = rep.iterations
        else:
            state = step(prob, state)
        if not np.all(np.isfinite(state.y)):
            raise schemes.SolverFailure("non-finite fields", step=state.n)
        w = float(prob.forcing(state.t) @ state.y)
        work += cfg.tau * abs(w)
        en = schemes.compute_energy(prob, state, cfg.scheme, forcing_work=w)
        rows.append({
            "n": state.n, "t": state.t, "E_f": en.E_f, "E_p": en.E_p,
            "storage": en.storage, "dissipation": en.dissipation_fluid + en.dissipation_darcy,
            "forcingWork": w,
            "interfaceMisfitNormal": en.misfit_normal,
            "interfaceMisfitTangential": en.misfit_tangential,
            "gmresIters": iters,
        })
        if state.n in snaps:
            t_snap = snaps[state.n]
            snapshots[t_snap] = state.y.copy()
            if cfg.scenario == "artery":
                profiles[t_snap] = interface_profile(prob, state.y)
                fluxes[t_snap] = intramural_planes(prob, cfg, state.y)
    wall = time.perf_counter() - t0
    result = {"problem": prob, "state": state, "log": rows, "snapshots": snapshots,
              "profiles": profiles, "fluxes": fluxes, "wallTime": wall}
    if write:
        meta = sio.table_metadata(cfg)
        sio.write_table(rows, out_dir / "log.csv", meta)
        for t_snap, y in snapshots.items():
            sio.write_vtk(sio.snapshot_from_state(prob, y, t_snap), out_dir / f"snapshot_{t_snap:.6g}.vtk")
        if profiles:
            prof_rows = []
            for t_snap, (x, un) in sorted(profiles.items()):
                prof_rows += [{"t": t_snap, "x": a, "Un": b} for a, b in zip(x, un)]
            sio.write_table(prof_rows, out_dir / "interface_displacement.csv", meta)
            flux_rows = []
            for t_snap, d in sorted(fluxes.items()):
                flux_rows += [{"t": t_snap, "x": d["x"][i], "interface": d["interface"][i],
                               "mid": d["mid"][i], "outer": d["outer"][i]} for i in range(len(d["x"]))]
            sio.write_table(flux_rows, out_dir / "intramural_flux.csv", meta)
    log.info("%s run: %d steps in %.2fs", cfg.scenario, n_steps, wall)
    return result


def run_artery(cfg: ScenarioConfig, forced: bool = True, write: bool = True) -> dict:
    if cfg.scenario != "artery":
        raise ValueError("run_artery needs an artery config")
    return run_scenario(cfg, forced, write)


def run_reservoir(cfg: ScenarioConfig, forced: bool = True, write: bool = True) -> dict:
    if cfg.scenario != "reservoir":
        raise ValueError("run_reservoir needs a reservoir config")
    res = run_scenario(cfg, forced, write)
    prob, y = res["problem"], res["state"].y
    fs = prob.dm["p_f"]
    pf = y[fs.slice]
    ref = prob.cache["reference_mesh"]
    nv = ref.n_vertices
    isv = fs.node_global < nv
    x_ref = ref.vertices[fs.node_global[isv], 0]
    i = int(np.argmax(pf[isv]))
    a = cfg.geometry["fractureHalfLength"]
    res["pressurePeak"] = {"x": float(x_ref[i]), "value": float(pf[isv][i]),
                           "tipDistance": float(a - abs(x_ref[i]))}
    return res


# --------------------------------------------------------------------------- studies

def _advance(prob: Problem, scheme: str, n_steps: int) -> schemes.State:
    state = schemes.State.zero(prob)
    step = _stepper(scheme)
    for _ in range(n_steps):
        state = step(prob, state)
    return state


def observed_rates(errors: list) -> list:
    """log2 ratios between consecutive rows (None for the first row)."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append([float(np.log2(x / y)) if x > 0 and y > 0 else float("nan") for x, y in zip(a, b)])
    return out


def run_convergence_study(cfg: ScenarioConfig) -> list:
    """Errors against a fine monolithic reference for a halving sequence of time steps."""
    conv = {"tau0": 1e-4, "levels": 4, "T": 1e-3, "tauRef": 1e-6, "schemes": ["monolithic", "algoA"]}
    conv.update(cfg.convergence)
    h, T, tau_ref = conv.get("h", cfg.h), conv["T"], conv["tauRef"]
    taus = [conv["tau0"] / 2 ** k for k in range(conv["levels"])]
    if tau_ref >= min(taus):
        raise ValueError("reference time step must be finer than the studied ones")
    make = lambda tau: make_problem(cfg, h=h, tau=tau)  # noqa: E731
    ref_prob = make(tau_ref)
    ref = _advance(ref_prob, "monolithic", int(round(T / tau_ref)))
    log.info("reference computed at tau=%g", tau_ref)
    rows = []
    for scheme in conv["schemes"]:
        errs = []
        for tau in taus:
            s = _advance(make(tau), scheme, int(round(T / tau)))
            errs.append(list(schemes.compute_error_indicators(ref_prob, s, ref).sqrt()))
        for tau, e, r in zip(taus, errs, observed_rates(errs)):
            rows.append({
                "scheme": scheme, "tau": tau,
                "E_f": e[0], "rate_f": r[0] if r else "",
                "E_p_a": e[1], "rate_a": r[1] if r else "",
                "E_p_b": e[2], "rate_b": r[2] if r else "",
                "E_p_c": e[3], "rate_c": r[3] if r else "",
            })
    return rows


def run_preconditioner_study(cfg: ScenarioConfig) -> list:
    """Mean GMRES iterations over the first steps, with and without the splitting preconditioner."""
    pc = {"steps": 10, "tol": 1e-6, "restart": 200, "maxIter": 2000}
    pc.update(cfg.precond)
    h_list = pc.get("hList", [cfg.h])
    tau_list = pc.get("tauList", [cfg.tau])
    rows = []
    for tau in tau_list:
        for h in h_list:
            prob = make_problem(cfg, h=h, tau=tau)
            counts = {True: [], False: []}
            flagged = {True: False, False: False}
            state = schemes.State.zero(prob)
            for _ in range(pc["steps"]):
                nxt = None
                for pre in (True, False):
                    s, rep = schemes.step_preconditioned(prob, state, tol=pc["tol"], precondition=pre,
                                                         restart=pc["restart"], maxIter=pc["maxIter"])
                    counts[pre].append(rep.iterations)
                    flagged[pre] |= not rep.converged
                    if pre:
                        nxt = s
                state = nxt
            rows.append({
                "h": h, "tau": tau, "ndof": prob.dm.total,
                "gmres": float(np.mean(counts[False])), "gmresPrec": float(np.mean(counts[True])),
                "unconverged": int(flagged[False]), "unconvergedPrec": int(flagged[True]),
            })
            log.info("precond study h=%g tau=%g: %s", h, tau, rows[-1])
    return rows
