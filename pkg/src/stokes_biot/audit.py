"""Executable checks of the stability and equivalence statements behind the schemes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import schemes
from .forms import Problem


@dataclass
class TheoremCheckResult:
    checkName: str
    passed: bool
    measured: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _context(prob: Problem) -> dict:
    return {"ndof": prob.dm.total, "tau": prob.tau,
            "h": float(np.max(prob.mesh.diameters()))}


def check_energy_inequality(rows: list, tau: float, initial: float = 0.0, c: float = 0.1,
                            C: float = 10.0) -> TheoremCheckResult:
    """E^N + storage^N + c sum tau*dissipation <= C (E^0 + storage^0) + C sum tau|F(v^n)| for every N.

    ``rows`` are per-step records with E_f, E_p, storage, dissipation and forcingWork.
    """
    acc_diss, acc_work = 0.0, 0.0
    worst = np.inf
    worst_n = None
    for r in rows:
        acc_diss += tau * r["dissipation"]
        acc_work += tau * abs(r["forcingWork"])
        lhs = r["E_f"] + r["E_p"] + r["storage"] + c * acc_diss
        rhs = C * (initial + acc_work)
        margin = rhs - lhs
        if margin < worst:
            worst, worst_n = margin, r["n"]
    if not rows:
        worst = 0.0
    scale = max(C * (initial + acc_work), 1e-300)
    passed = bool(worst >= -1e-12 * scale)
    return TheoremCheckResult("energy_inequality", passed,
                              {"minMargin": float(worst), "atStep": worst_n, "steps": len(rows)},
                              {"c": c, "C": C})


def check_parameter_constraints(phys, nit, scheme: str, tau: float, h: float) -> TheoremCheckResult:
    """Splitting constraint theta*alpha^2/(lambda_p s_0) < 1 and the regime the parameters fall in."""
    theta = {"algoA": 0, "algoB": 1}.get(scheme, nit.theta if scheme == "preconditioned" else 0)
    ratio = theta * phys.alpha ** 2 / (phys.lambda_p * phys.s_0)
    if scheme in ("monolithic",):
        regime = "implicit"
    elif theta == 0:
        regime = "two-step splitting: constraint always satisfied"
    elif nit.gamma_stab_prime > 0:
        regime = "three-step splitting with velocity/flux stabilization"
    else:
        regime = "three-step splitting without velocity/flux stabilization: needs tau = O(h^2)"
    measured = {"ratio": ratio, "theta": theta, "tau_over_h": tau / h, "tau_over_h2": tau / h ** 2,
                "regime": regime}
    return TheoremCheckResult("parameter_constraints", bool(ratio < 1), measured, {"ratio": 1.0},
                              {"scheme": scheme, "tau": tau, "h": h})


def check_imex_identity(prob: Problem, state: "schemes.State", theta: int, tol: float = 1e-9) -> TheoremCheckResult:
    """One splitting step from ``state`` must satisfy the implicit rewriting to ``tol``."""
    step = schemes.step_algorithm_b if theta == 1 else schemes.step_algorithm_a
    new = step(prob, state)
    B = prob.system if theta == 1 else prob.loose_a
    A, R, L = B.A_mono, B.R_mono, B.lagged
    S = theta * (prob.base["S_fv"] + prob.base["S_fq"])
    d = new.y - state.y
    terms = [A @ new.y, S @ d, -prob.forcing(new.t), -(R @ state.y), -(L @ d)]
    res = B.Q @ sum(terms)
    scale = sum(np.linalg.norm(B.Q @ t) for t in terms)
    rel = float(np.linalg.norm(res) / max(scale, 1e-300))
    return TheoremCheckResult("imex_identity", rel <= tol, {"relativeResidual": rel}, {"tol": tol},
                              {**_context(prob), "theta": theta})


def rayleigh_ratios(A, Ah, Q, scale: np.ndarray, n_probes: int = 200, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Ratios (Y^T A Y)/(Y^T Ah Y) and normalized denominators for scaled random probes.

    Probes are Q(scale * g) with g standard normal: they satisfy the homogeneous
    constraints and weight every field by its natural magnitude.
    """
    rng = np.random.default_rng(seed)
    dmax = float(np.abs(A.diagonal()).max())
    ratios, dens = [], []
    for _ in range(n_probes):
        Y = Q @ (scale * rng.standard_normal(A.shape[0]))
        num = float(Y @ (A @ Y))
        den = float(Y @ (Ah @ Y))
        ratios.append(num / den if den != 0 else np.nan)
        dens.append(den / (dmax * float(Y @ Y)))
    return np.array(ratios), np.array(dens)


def check_spectral_scan(prob: Problem, n_probes: int = 200, seed: int = 0,
                        loose=None) -> TheoremCheckResult:
    """Interval of Rayleigh ratios between the monolithic and the loosely coupled operator."""
    B = prob.system
    Ah = B.A_loose if loose is None else loose
    r, dens = rayleigh_ratios(B.A_mono, Ah, B.Q, schemes.field_scaling(prob), n_probes, seed)
    lo, hi = float(np.nanmin(r)), float(np.nanmax(r))
    min_den = float(dens.min())
    passed = bool(lo > 0 and np.all(np.isfinite(r)) and min_den >= -1e-10)
    return TheoremCheckResult("spectral_scan", passed,
                              {"lower": lo, "upper": hi, "widthRatio": hi / lo if lo > 0 else np.inf,
                               "minNormalizedDenominator": min_den, "probes": n_probes},
                              {"denominator": -1e-10}, _context(prob), seed)


def spectral_drift(coarse: TheoremCheckResult, fine: TheoremCheckResult, limit: float = 0.25) -> TheoremCheckResult:
    a, b = coarse.measured["widthRatio"], fine.measured["widthRatio"]
    drift = abs(b - a) / a
    return TheoremCheckResult("spectral_drift", bool(coarse.passed and fine.passed and drift < limit),
                              {"coarse": a, "fine": b, "drift": drift}, {"drift": limit})


def trace_inverse_probe(prob: Problem, n_probes: int = 100, seed: int = 0) -> TheoremCheckResult:
    """Largest h |D(v)n|^2_interface / |D(v)|^2_fluid over random discrete velocities.

    An empirical estimate of the trace-inverse constant that the penalty
    parameter has to dominate. Probes live on the nodes of fluid elements
    touching the interface, where the supremum is attained.
    """
    rng = np.random.default_rng(seed)
    tr, fs = prob.traces, prob.dm["v"]
    Dv = prob.base["D_v"]
    nodes = np.unique(fs.elem_nodes[fs.tri_to_elem[prob.mesh.interface.fluid_tri]])
    dofs = np.concatenate([fs.dof(nodes, c) for c in range(fs.ncomp)])
    ratios = []
    for _ in range(n_probes):
        y = np.zeros(prob.dm.total)
        y[dofs] = rng.standard_normal(len(dofs))
        dnn, dnt = 0.5 * (tr.SNN @ y), 0.5 * (tr.SNT @ y)
        ratios.append(float(np.sum(tr.w * tr.h * (dnn ** 2 + dnt ** 2)) / _q(Dv, y)))
    r = np.array(ratios)
    return TheoremCheckResult("trace_inverse", bool(np.all(np.isfinite(r))),
                              {"max": float(r.max()), "mean": float(r.mean()), "probes": n_probes},
                              {}, _context(prob), seed)


def trace_inverse_drift(coarse: TheoremCheckResult, fine: TheoremCheckResult, limit: float = 0.3) -> TheoremCheckResult:
    a, b = coarse.measured["max"], fine.measured["max"]
    drift = abs(b - a) / a
    return TheoremCheckResult("trace_inverse_drift", bool(drift < limit),
                              {"coarse": a, "fine": b, "drift": drift}, {"drift": limit})


def _q(M, y) -> float:
    return float(y @ (M @ y))


def check_energy_decay(prob: Problem, scheme: str, n_states: int = 50, n_steps: int = 3, seed: int = 0,
                       tol: float = 1e-8) -> TheoremCheckResult:
    """Unforced steps from random states never raise energy plus stabilization storage."""
    rng = np.random.default_rng(seed)
    B = prob.system
    scale = schemes.field_scaling(prob)
    step = schemes.STEPPERS[scheme]
    worst = -np.inf
    for _ in range(n_states):
        st = schemes.State(0, 0.0, B.Q @ (scale * rng.standard_normal(prob.dm.total)))
        e_prev = _stored(prob, st, scheme)
        for _ in range(n_steps):
            st = step(prob, st)
            e = _stored(prob, st, scheme)
            worst = max(worst, (e - e_prev) / e_prev)
            e_prev = e
    return TheoremCheckResult("energy_decay", bool(worst <= tol), {"maxRelativeIncrease": float(worst)},
                              {"tol": tol}, {**_context(prob), "scheme": scheme}, seed)


def _stored(prob: Problem, st, scheme: str) -> float:
    en = schemes.compute_energy(prob, st, scheme)
    return en.E_f + en.E_p + en.storage


def run_audit(cfg, h: Optional[float] = None) -> list:
    """All checks for one configuration; used by the ``audit`` command."""
    from .scenarios import make_problem

    prob = make_problem(cfg, h=h, forced=False)
    h_val = h or cfg.h
    out = [check_parameter_constraints(cfg.phys, cfg.nit, s, cfg.tau, h_val)
           for s in ("monolithic", "algoA", "algoB")]
    out.append(check_energy_decay(prob, "monolithic", n_states=10, seed=cfg.seed))
    out.append(check_energy_decay(prob, "algoA", n_states=10, seed=cfg.seed))
    out.append(check_energy_decay(prob, "algoB", n_states=10, seed=cfg.seed))
    rng = np.random.default_rng(cfg.seed)
    st = schemes.State(0, 0.0, prob.system.Q @ (schemes.field_scaling(prob) * rng.standard_normal(prob.dm.total)))
    out.append(check_imex_identity(prob, st, 0))
    out.append(check_imex_identity(prob, st, 1))
    out.append(check_spectral_scan(prob, seed=cfg.seed))
    out.append(trace_inverse_probe(prob, seed=cfg.seed))
    forced = make_problem(cfg, h=h)
    steps = min(cfg.n_steps, 20)
    state = schemes.State.zero(forced)
    rows = []
    for _ in range(steps):
        state = schemes.step_monolithic(forced, state)
        en = schemes.compute_energy(forced, state)
        rows.append({"n": state.n, "E_f": en.E_f, "E_p": en.E_p, "storage": en.storage,
                     "dissipation": en.dissipation_fluid + en.dissipation_darcy,
                     "forcingWork": float(forced.forcing(state.t) @ state.y)})
    out.append(check_energy_inequality(rows, cfg.tau, 0.0, cfg.energy.get("c", 0.1), cfg.energy.get("C", 10.0)))
    return out
