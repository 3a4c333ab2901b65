"""Time stepping: monolithic, the two splittings, and preconditioned GMRES.

The splitting steppers below assemble each sub-problem directly from the
interface traces and lagged fields. They deliberately do not reuse the
assembled loosely coupled operator, which serves as an independent check
(`step_loose`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .forms import Problem
from .sparsela import FactorizationError, SolveReport, apply_loosely_coupled_preconditioner, as_csr, factorize, gmres


class SolverFailure(RuntimeError):
    def __init__(self, message: str, step: Optional[int] = None, substep: Optional[str] = None):
        super().__init__(message)
        self.step = step
        self.substep = substep


@dataclass
class State:
    n: int
    t: float
    y: np.ndarray

    def field(self, prob: Problem, name: str) -> np.ndarray:
        return self.y[prob.dm[name].slice]

    @staticmethod
    def zero(prob: Problem) -> "State":
        return State(0, 0.0, np.zeros(prob.dm.total))


@dataclass
class EnergyReport:
    E_f: float
    E_p: float
    dissipation_fluid: float
    dissipation_darcy: float
    misfit_normal: float
    misfit_tangential: float
    storage: float
    forcing_work: float
    triple_norm: float

    @property
    def total(self) -> float:
        return self.E_f + self.E_p


@dataclass
class ErrorIndicators:
    fluid: float
    kinetic: float
    elastic: float
    pressure: float

    def sqrt(self) -> tuple:
        return tuple(float(np.sqrt(max(x, 0.0))) for x in (self.fluid, self.kinetic, self.elastic, self.pressure))


# --------------------------------------------------------------------------- monolithic

def step_monolithic(prob: Problem, state: State, solver: str = "direct", tol: float = 1e-12) -> State:
    """Implicit step of the fully coupled problem (with the pressure stabilizer)."""
    B = prob.system
    t = state.t + prob.tau
    b = B.rhs_mono(prob.forcing(t), state.y)
    if solver == "direct":
        y = B.mono_factor().solve(b)
    else:
        # unscaled Krylov iterations stall on the mixed units, so reuse the scaled solve
        d = field_scaling(prob)
        A = lambda x: d * (B.A_mono_c @ (d * x))  # noqa: E731
        M = lambda r: apply_loosely_coupled_preconditioner(B, r / d) / d  # noqa: E731
        x, rep = gmres(A, d * b, M=M, tol=tol, restart=200, maxIter=2000)
        if not rep.converged:
            raise SolverFailure("GMRES did not converge", step=state.n + 1)
        y = d * x
    if not np.all(np.isfinite(y)):
        raise SolverFailure("non-finite monolithic solution", step=state.n + 1)
    return State(state.n + 1, t, y)


def field_scaling(prob: Problem) -> np.ndarray:
    """One scalar per field, 1/sqrt(median |diag|) of its diagonal block.

    This is a change of units for each unknown and test family; the Krylov
    solves run on D A D so that the fields enter with comparable magnitudes,
    and every LU factorization is computed on the same scaled operator.
    """
    return prob.system.scale


def step_preconditioned(
    prob: Problem,
    state: State,
    tol: float = 1e-6,
    precondition: bool = True,
    restart: int = 200,
    maxIter: int = 2000,
) -> tuple[State, SolveReport]:
    """Monolithic step solved by GMRES, optionally preconditioned by the splitting operator.

    Both variants act on the field-scaled system D A D (D y' = y); with the
    preconditioner the scaling only changes the norm the residual is measured in.
    """
    B = prob.system
    t = state.t + prob.tau
    d = field_scaling(prob)
    b = d * B.rhs_mono(prob.forcing(t), state.y)
    A = lambda x: d * (B.A_mono_c @ (d * x))  # noqa: E731
    M = (lambda r: apply_loosely_coupled_preconditioner(B, r / d) / d) if precondition else None
    x, rep = gmres(A, b, M=M, tol=tol, restart=restart, maxIter=maxIter)
    if not rep.converged:
        warnings.warn(f"GMRES not converged at step {state.n + 1} after {rep.iterations} iterations")
    return State(state.n + 1, t, d * x), rep


def step_loose(prob: Problem, state: State, theta: int = 1) -> State:
    """Backward substitution on the assembled block upper-triangular system."""
    B = prob.system if theta == 1 else prob.loose_a
    t = state.t + prob.tau
    y = B.loose.solve(B.rhs_loose(prob.forcing(t), state.y))
    return State(state.n + 1, t, y)


# --------------------------------------------------------------------------- splitting sub-problems

class _Ctx:
    """Shorthands for the sub-problem assembly."""

    def __init__(self, prob: Problem):
        self.prob = prob
        tr, ph, nt, tau = prob.traces, prob.phys, prob.nit, prob.tau
        self.tr, self.ph, self.nt, self.tau = tr, ph, nt, tau
        self.W = tr.W()
        self.Wp = tr.W(nt.gamma_f * ph.mu_f / tr.h)
        self.noslip = nt.tangential_mode == "noSlip"
        self.Wt = self.Wp if self.noslip else tr.W(ph.beta)
        self.b = prob.base
        self.dm = prob.dm

    def sigma(self, y):
        """Fluid normal/tangential stress traces at the quadrature points."""
        tr, mu = self.tr, self.ph.mu_f
        return mu * (tr.SNN @ y) - tr.Pf @ y, mu * (tr.SNT @ y)

    def itf_load(self, Tn, Tt, snn, snt, jn, jt, adjoint=False):
        """Interface terms evaluated on known data, as a left-hand-side contribution.

        Tn, Tt are test maps; jn, jt known kinematic jump values.
        """
        W, Wp, Wt = self.W, self.Wp, self.Wt
        out = -(Tn.T @ (W @ snn)) + Tn.T @ (Wp @ jn)
        if Tt is not None:
            out += Tt.T @ (Wt @ jt)
            if self.noslip:
                out -= Tt.T @ (W @ snt)
        if adjoint:
            tr, s, mu = self.tr, self.nt.varsigma, self.ph.mu_f
            out -= (s * mu * tr.SNN + tr.Pf).T @ (W @ jn)
            if self.noslip:
                out -= (s * mu * tr.SNT).T @ (W @ jt)
        return out


def _group_solver(prob: Problem, key: str, A: sp.spmatrix, g: slice):
    cache = prob.cache.setdefault("substeps", {})
    if key not in cache:
        B = prob.system
        Qg = B.Q[g, g]
        Ag = as_csr(Qg @ A[g, g] @ Qg + B.NNt[g, g])
        cache[key] = (factorize(Ag, group=key, scale=B.scale[g]), Qg)
    return cache[key]


def _solve_group(prob: Problem, key: str, A_builder, rhs: np.ndarray, g: slice, step: int) -> np.ndarray:
    cache = prob.cache.setdefault("substeps", {})
    if key not in cache:
        try:
            _group_solver(prob, key, A_builder(), g)
        except FactorizationError as exc:
            raise SolverFailure(str(exc), step=step, substep=key) from exc
    fac, Qg = cache[key]
    try:
        x = fac.solve(Qg @ rhs[g])
    except Exception as exc:  # pragma: no cover - surfaced with context
        raise SolverFailure(str(exc), step=step, substep=key) from exc
    if not np.all(np.isfinite(x)):
        raise SolverFailure("non-finite sub-problem solution", step=step, substep=key)
    return x


def _fluid_lhs(c: _Ctx, theta: int) -> sp.csr_matrix:
    tr, b, ph, nt, tau = c.tr, c.b, c.ph, c.nt, c.tau
    s, mu = nt.varsigma, ph.mu_f
    A = (ph.rho_f / tau * b["M_v"] + b["A_f"] - b["B_f"].T + b["B_f"] + b["S_p"] + b["S_fp"]
         + tr.Vn.T @ c.Wp @ tr.Vn + tr.Vt.T @ c.Wt @ tr.Vt
         - (s * mu * tr.SNN + tr.Pf).T @ c.W @ tr.Vn)
    if c.noslip:
        A = A - (s * mu * tr.SNT).T @ c.W @ tr.Vt
    if theta == 1:
        A = A + b["S_fv"]
    return as_csr(A)


def _fluid_step(c: _Ctx, y_prev: np.ndarray, y_new: np.ndarray, F: np.ndarray, theta: int, step: int) -> np.ndarray:
    """Fluid sub-problem: Nitsche data from the fresh porous fields, lagged stress."""
    tr, b, ph, tau = c.tr, c.b, c.ph, c.tau
    snn, snt = c.sigma(y_prev)
    dU = y_new - y_prev
    jn = -(tr.Qn @ y_new) - (tr.Un @ dU) / tau
    jt = -(tr.Ut @ dU) / tau
    rhs = F + ph.rho_f / tau * (b["M_v"] @ y_prev) + b["S_fp"] @ y_prev
    if theta == 1:
        rhs += b["S_fv"] @ y_prev
    rhs -= c.itf_load(tr.Vn, tr.Vt, snn, snt, jn, jt, adjoint=True)
    g = c.dm.group_slices()[0]
    return _solve_group(c.prob, f"fluid{theta}", lambda: _fluid_lhs(c, theta), rhs, g, step)


def _structure_lhs(c: _Ctx) -> sp.csr_matrix:
    tr, b, ph, tau = c.tr, c.b, c.ph, c.tau
    Un, Ut = tr.Un / tau, tr.Ut / tau
    A = (b["A_s"] / tau + Un.T @ c.Wp @ Un + Ut.T @ c.Wt @ Ut
         + ph.rho_p / tau ** 2 * (b["M_U_Udot"] - b["M_Udot_U"]) + ph.rho_p / tau * b["M_Udot"])
    return as_csr(A)


def _darcy_lhs(c: _Ctx) -> sp.csr_matrix:
    tr, b, ph, tau = c.tr, c.b, c.ph, c.tau
    A = (b["A_q"] + tr.Qn.T @ c.Wp @ tr.Qn + b["S_fq"] - b["B_p"].T + b["B_p"]
         + ph.s_0 / tau * b["M_pp"] + b["S_q"])
    return as_csr(A)


def _biot_lhs(c: _Ctx) -> sp.csr_matrix:
    tr, b, ph, tau = c.tr, c.b, c.ph, c.tau
    Kb = as_csr(-tr.Qn - tr.Un / tau)
    Ut = tr.Ut / tau
    A = (b["A_q"] - b["B_p"].T + b["B_p"] + ph.s_0 / tau * b["M_pp"] + b["S_q"]
         + b["B_s"] / tau - b["B_s"].T / tau + b["A_s"] / tau
         + ph.rho_p / tau ** 2 * (b["M_U_Udot"] - b["M_Udot_U"]) + ph.rho_p / tau * b["M_Udot"]
         + Kb.T @ c.Wp @ Kb + Ut.T @ c.Wt @ Ut)
    return as_csr(A)


def _history_structure(c: _Ctx, y_prev):
    b, ph, tau = c.b, c.ph, c.tau
    return ph.rho_p / tau ** 2 * (b["M_U_Udot"] @ y_prev - b["M_Udot_U"] @ y_prev)


def step_algorithm_b(prob: Problem, state: State) -> State:
    """Structure, then Darcy, then fluid, each with lagged interface data."""
    c = _Ctx(prob)
    tr, b, ph, tau = c.tr, c.b, c.ph, c.tau
    n = state.n + 1
    yp = state.y
    F = prob.forcing(state.t + tau)
    y = np.zeros_like(yp)
    g_f, g_d, g_s = prob.dm.group_slices()
    snn, snt = c.sigma(yp)

    # structure: elastodynamics with lagged pore pressure and Robin-type interface data
    jn = tr.Vn @ yp - tr.Qn @ yp + (tr.Un @ yp) / tau
    jt = tr.Vt @ yp + (tr.Ut @ yp) / tau
    rhs = F + _history_structure(c, yp) + b["B_s"].T @ yp / tau
    rhs -= c.itf_load(-tr.Un / tau, -tr.Ut / tau, snn, snt, jn, jt)
    y[g_s] = _solve_group(prob, "structure", lambda: _structure_lhs(c), rhs, g_s, n)

    # Darcy: fresh displacement, lagged fluid data
    dU = y - yp
    jn = tr.Vn @ yp - (tr.Un @ dU) / tau
    rhs = F + b["S_fq"] @ yp + ph.s_0 / tau * (b["M_pp"] @ yp) - b["B_s"] @ dU / tau
    rhs -= c.itf_load(-tr.Qn, None, snn, snt, jn, None)
    y[g_d] = _solve_group(prob, "darcy", lambda: _darcy_lhs(c), rhs, g_d, n)

    y[g_f] = _fluid_step(c, yp, y, F, 1, n)[...]
    return State(n, state.t + tau, y)


def step_algorithm_a(prob: Problem, state: State) -> State:
    """Coupled Biot solve with lagged fluid data, then the fluid solve."""
    c = _Ctx(prob)
    tr, b, ph, tau = c.tr, c.b, c.ph, c.tau
    n = state.n + 1
    yp = state.y
    F = prob.forcing(state.t + tau)
    y = np.zeros_like(yp)
    g_f, g_d, g_s = prob.dm.group_slices()
    g_b = slice(g_d.start, g_s.stop)
    snn, snt = c.sigma(yp)

    jn = tr.Vn @ yp + (tr.Un @ yp) / tau
    jt = tr.Vt @ yp + (tr.Ut @ yp) / tau
    rhs = (F + _history_structure(c, yp) + ph.s_0 / tau * (b["M_pp"] @ yp) + b["B_s"] @ yp / tau)
    rhs -= c.itf_load(as_csr(-tr.Qn - tr.Un / tau), -tr.Ut / tau, snn, snt, jn, jt)
    y[g_b] = _solve_group(prob, "biot", lambda: _biot_lhs(c), rhs, g_b, n)

    y[g_f] = _fluid_step(c, yp, y, F, 0, n)
    return State(n, state.t + tau, y)


def check_stability_constraint(prob: Problem, theta: int) -> float:
    ratio = theta * prob.phys.alpha ** 2 / (prob.phys.lambda_p * prob.phys.s_0)
    if ratio >= 1:
        warnings.warn(
            f"splitting constraint theta*alpha^2/(lambda_p*s_0) = {ratio:.3g} >= 1; "
            "the structure/Darcy split may be unstable"
        )
    return ratio


STEPPERS = {
    "monolithic": step_monolithic,
    "algoA": step_algorithm_a,
    "algoB": step_algorithm_b,
}


# --------------------------------------------------------------------------- energies and norms

def _q(M, x) -> float:
    return float(x @ (M @ x))


def storage(prob: Problem, y: np.ndarray, scheme: str = "monolithic") -> float:
    """Stabilization storage carried by the discrete energy balance.

    Monolithic: tau/2 * s_fp(p_f, p_f). Splittings add the telescoped
    penalty storage of the lagged interface velocity traces.
    """
    tr, b, tau = prob.traces, prob.base, prob.tau
    st = 0.5 * tau * _q(b["S_fp"], y)
    if scheme in ("algoA", "algoB"):
        Wp = tr.W(prob.nit.gamma_f * prob.phys.mu_f / tr.h)
        vn, vt = tr.Vn @ y, tr.Vt @ y
        theta = 1 if scheme == "algoB" else 0
        st += 0.5 * tau * (1 + theta) * float(vn @ (Wp @ vn))
        if prob.nit.tangential_mode == "noSlip":
            st += 0.5 * tau * float(vt @ (Wp @ vt))
        if theta:
            qn = tr.Qn @ y
            st += 0.5 * tau * float(qn @ (Wp @ qn)) + 0.5 * tau * _q(b["S_fv"] + b["S_fq"], y)
    return st


def interface_misfit(prob: Problem, y: np.ndarray) -> tuple[float, float]:
    """h^{-1}-weighted L2 norms of v - q - Udot (normal) and v - Udot (tangential)."""
    tr, dm = prob.traces, prob.dm
    shift = np.zeros_like(y)
    shift[dm["U"].slice] = y[dm["Udot"].slice]
    jn = tr.Vn @ y - tr.Qn @ y - tr.Un @ shift
    jt = tr.Vt @ y - tr.Ut @ shift
    w = tr.w / tr.h
    return float(np.sqrt(np.sum(w * jn ** 2))), float(np.sqrt(np.sum(w * jt ** 2)))


def _udot_as_u(prob: Problem, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[prob.dm["U"].slice] = y[prob.dm["Udot"].slice]
    return out


def compute_energy(prob: Problem, state: State, scheme: str = "monolithic", forcing_work: float = 0.0) -> EnergyReport:
    b, ph, y = prob.base, prob.phys, state.y
    E_f = 0.5 * ph.rho_f * _q(b["M_v"], y)
    E_p = 0.5 * (ph.rho_p * _q(b["M_Udot"], y) + _q(b["A_s"], y) + ph.s_0 * _q(b["M_pp"], y))
    mn, mt = interface_misfit(prob, y)
    return EnergyReport(
        E_f=E_f,
        E_p=E_p,
        dissipation_fluid=_q(b["A_f"], y),
        dissipation_darcy=_q(b["A_q"], y),
        misfit_normal=mn,
        misfit_tangential=mt,
        storage=storage(prob, y, scheme),
        forcing_work=forcing_work,
        triple_norm=triple_norm(prob, state),
    )


def triple_norm(prob: Problem, state: State) -> float:
    """Energy norm of a state; the displacement velocity enters through Udot."""
    b, ph, tr, tau, y = prob.base, prob.phys, prob.traces, prob.tau, state.y
    gm = prob.nit.gamma_f * ph.mu_f
    ud = _udot_as_u(prob, y)
    jn = tr.Vn @ y - tr.Qn @ y - tr.Un @ ud
    jt = tr.Vt @ y - tr.Ut @ ud
    pf = tr.Pf @ y
    val = (
        ph.rho_f * _q(b["M_v"], y)
        + _q(b["A_s"], y)
        + ph.s_0 * _q(b["M_pp"], y)
        + ph.rho_p * _q(b["M_Udot"], y)
        + tau * _q(b["A_f"], y)
        + tau * _q(b["A_q"], y)
        + ph.mu_f * tau * float(np.sum(tr.w / tr.h * (jn ** 2 + jt ** 2)))
        + tau * float(np.sum(tr.w * tr.h / gm * pf ** 2))
    )
    return float(np.sqrt(val))


def compute_error_indicators(prob: Problem, state: State, reference: State) -> ErrorIndicators:
    if state.y.shape != reference.y.shape:
        raise ValueError("states live on different dof maps")
    b, ph = prob.base, prob.phys
    d = state.y - reference.y
    return ErrorIndicators(
        fluid=ph.rho_f * _q(b["M_v"], d),
        kinetic=ph.rho_p * _q(b["M_Udot"], d),
        elastic=_q(b["A_s_elastic"], d),
        pressure=ph.s_0 * _q(b["M_pp"], d),
    )


def dtau_identity_residual(M, u_new: np.ndarray, u_old: np.ndarray, tau: float) -> float:
    """Relative defect of u.M d_tau u = 1/2 d_tau(u.M u) + tau/2 d_tau u.M d_tau u."""
    du = (u_new - u_old) / tau
    lhs = u_new @ (M @ du)
    rhs = 0.5 * (u_new @ (M @ u_new) - u_old @ (M @ u_old)) / tau + 0.5 * tau * du @ (M @ du)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


# --------------------------------------------------------------------------- driver

@dataclass
class RunLog:
    rows: list = field(default_factory=list)
    states: list = field(default_factory=list)

    COLUMNS = ("n", "t", "E_f", "E_p", "interfaceMisfitNormal", "interfaceMisfitTangential", "gmresIters")


def advance(
    prob: Problem,
    scheme: str,
    n_steps: int,
    state: Optional[State] = None,
    keep: Optional[set] = None,
    gmres_tol: float = 1e-6,
    on_step=None,
) -> tuple[State, RunLog]:
    """Run ``n_steps`` steps of ``scheme``; keep the states whose index is in ``keep``."""
    if scheme == "algoB":
        check_stability_constraint(prob, 1)
    state = State.zero(prob) if state is None else state
    log = RunLog()
    for _ in range(n_steps):
        iters = 0
        if scheme == "preconditioned":
            state, rep = step_preconditioned(prob, state, tol=gmres_tol)
            iters = rep.iterations
        else:
            state = STEPPERS[scheme](prob, state)
        en = compute_energy(prob, state, scheme)
        log.rows.append((state.n, state.t, en.E_f, en.E_p, en.misfit_normal, en.misfit_tangential, iters))
        if keep is not None and state.n in keep:
            log.states.append(state)
        if on_step is not None:
            on_step(state)
    return state, log
