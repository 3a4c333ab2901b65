"""Sparse storage, direct factorization, GMRES and block back-substitution.

Storage and sparse LU come from scipy; the Krylov solver and the
block-triangular solve are implemented here.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

CsrMatrix = sp.csr_matrix
DENSE_LIMIT = 200


class FactorizationError(RuntimeError):
    def __init__(self, message: str, row: Optional[int] = None, group: Optional[str] = None):
        super().__init__(message)
        self.row = row
        self.group = group


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR: summed duplicates, sorted column indices, finite values."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix contains non-finite entries")
    return A


def spmv(A, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} vs vector {x.shape}")
    return A @ x


def dump_matrix(A, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))


class Factorization:
    """LU factors of a square matrix; dense below DENSE_LIMIT rows.

    With ``scale`` = d the factors are those of D A D (D = diag(d)) and
    ``solve`` undoes the change of variables. This equilibrates operators whose
    unknowns carry very different units.
    """

    def __init__(self, A, group: Optional[str] = None, scale: Optional[np.ndarray] = None):
        n, m = A.shape
        if n != m:
            raise ValueError("factorize needs a square matrix")
        self.shape = A.shape
        self.group = group
        self.scale = None if scale is None else np.asarray(scale, dtype=float)
        if self.scale is not None:
            if self.scale.shape != (n,) or not np.all(self.scale > 0):
                raise ValueError("scale must be a positive vector matching the matrix size")
            D = sp.diags(self.scale)
            A = D @ A @ D if sp.issparse(A) else self.scale[:, None] * np.asarray(A, dtype=float) * self.scale
        if n <= DENSE_LIMIT:
            dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(dense, check_finite=True)
            zero = np.flatnonzero(np.diag(lu) == 0.0)
            if len(zero):
                raise FactorizationError(
                    f"zero pivot at row {zero[0]}" + (f" in group {group}" if group else ""),
                    row=int(zero[0]), group=group)
            self._dense = (lu, piv)
            self._lu = None
        else:
            csc = sp.csc_matrix(A)
            empty = np.flatnonzero(np.diff(sp.csr_matrix(A).indptr) == 0)
            if len(empty):
                raise FactorizationError(f"empty row {empty[0]}" + (f" in group {group}" if group else ""),
                                         row=int(empty[0]), group=group)
            try:
                self._lu = spla.splu(csc, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise FactorizationError(f"{exc}" + (f" in group {group}" if group else ""), group=group) from exc
            self._dense = None

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.scale is not None:
            b = self.scale * b
        x = self._lu.solve(b) if self._lu is not None else sla.lu_solve(self._dense, b)
        return x if self.scale is None else self.scale * x


def factorize(A, group: Optional[str] = None, scale: Optional[np.ndarray] = None) -> Factorization:
    return Factorization(A, group, scale)


@dataclass
class SolveReport:
    iterations: int
    relativeResiduals: list
    converged: bool
    wallTime: float
    breakdown: bool = False


Operator = Union[Callable[[np.ndarray], np.ndarray], sp.spmatrix, np.ndarray]


def _as_callable(A: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if A is None:
        return lambda x: x
    if callable(A):
        return A
    return lambda x: A @ x


def gmres(
    A: Operator,
    b: np.ndarray,
    M: Optional[Operator] = None,
    tol: float = 1e-6,
    restart: int = 200,
    maxIter: int = 1000,
    x0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Restarted GMRES on M A x = M b, where ``M`` applies the preconditioner inverse.

    Residuals are measured as |M(b - A x)| / |M b| in the Euclidean norm.
    Orthogonalization is classical Gram-Schmidt with one re-orthogonalization pass.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if restart < 1:
        raise ValueError("restart must be >= 1")
    t0 = time.perf_counter()
    matvec = _as_callable(A)
    prec = _as_callable(M)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    ref = np.linalg.norm(prec(b))
    if ref == 0.0:
        return np.zeros(n), SolveReport(0, [0.0], True, time.perf_counter() - t0)
    r = prec(b - matvec(x)) if x0 is not None else prec(b)
    history = [np.linalg.norm(r) / ref]
    total = 0
    breakdown = False
    while True:
        beta = np.linalg.norm(r)
        if beta / ref <= tol or total >= maxIter or breakdown:
            break
        m = min(restart, maxIter - total)
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for j in range(m):
            w = prec(matvec(V[j]))
            Vj = V[: j + 1]
            h = Vj @ w
            w -= Vj.T @ h
            h2 = Vj @ w
            w -= Vj.T @ h2
            h += h2
            hn = np.linalg.norm(w)
            col = np.concatenate([h, [hn]])
            for i in range(j):
                a, c = col[i], col[i + 1]
                col[i] = cs[i] * a + sn[i] * c
                col[i + 1] = -sn[i] * a + cs[i] * c
            denom = np.hypot(col[j], col[j + 1])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = col[j] / denom, col[j + 1] / denom
            col[j] = denom
            col[j + 1] = 0.0
            H[: j + 2, j] = col
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            k = j + 1
            history.append(abs(g[j + 1]) / ref)
            if hn < 1e-300:
                breakdown = True
                break
            if history[-1] <= tol:
                break
            V[j + 1] = w / hn
        y = sla.solve_triangular(H[:k, :k], g[:k], lower=False, check_finite=False)
        x += V[:k].T @ y
        r = prec(b - matvec(x))
        # the recurrence estimate can drift from the true residual; trust the latter
        history[-1] = np.linalg.norm(r) / ref
        if breakdown and history[-1] > tol:
            break
    converged = history[-1] <= tol
    return x, SolveReport(total, history, bool(converged), time.perf_counter() - t0, breakdown)


# --------------------------------------------------------------------------- block systems

@dataclass
class LooseOperator:
    """A block upper-triangular operator solved by backward substitution.

    ``groups`` are contiguous index slices in increasing order.
    """

    matrix: sp.csr_matrix
    groups: Sequence[slice]
    names: Sequence[str]
    scale: Optional[np.ndarray] = None
    _factors: Optional[list] = field(default=None, repr=False)

    def factors(self) -> list:
        if self._factors is None:
            self._factors = [
                factorize(self.matrix[g, g], group=name, scale=None if self.scale is None else self.scale[g])
                for g, name in zip(self.groups, self.names)
            ]
        return self._factors

    def off_diagonal_lower_norm(self) -> float:
        worst = 0.0
        for i, gi in enumerate(self.groups):
            for gj in self.groups[:i]:
                blk = self.matrix[gi, gj]
                if blk.nnz:
                    worst = max(worst, float(np.abs(blk.data).max()))
        return worst

    def solve(self, r: np.ndarray) -> np.ndarray:
        z = np.zeros_like(np.asarray(r, dtype=float))
        facs = self.factors()
        for k in range(len(self.groups) - 1, -1, -1):
            g = self.groups[k]
            rhs = r[g].copy()
            if g.stop < len(r):
                rhs -= self.matrix[g, g.stop:] @ z[g.stop:]
            z[g] = facs[k].solve(rhs)
        return z


@dataclass
class BlockSystem:
    """Named blocks and assembled operators of one (mesh, parameters, tau) setting.

    Operators come in raw form (``A_mono`` etc.) and in constrained form
    (``*_c``) where homogeneous essential conditions have been eliminated:
    A_c = Q A Q + N N^T with Q = I - N N^T.
    """

    blocks: dict
    A_mono: sp.csr_matrix
    R_mono: sp.csr_matrix
    A_loose: sp.csr_matrix
    R_loose: sp.csr_matrix
    groups: Sequence[slice]
    constraint_basis: sp.csr_matrix
    meta: dict = field(default_factory=dict)
    field_slices: Optional[Sequence[slice]] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        N = self.constraint_basis
        n = self.A_mono.shape[0]
        self.Q = as_csr(sp.identity(n) - N @ N.T)
        self.NNt = as_csr(N @ N.T)
        self.A_mono_c = self.constrain(self.A_mono)
        self.A_loose_c = self.constrain(self.A_loose)
        self.R_mono_c = as_csr(self.Q @ self.R_mono)
        self.R_loose_c = as_csr(self.Q @ self.R_loose)
        self.scale = self._field_scale()
        names = ["fluid", "darcy", "structure"] if len(self.groups) == 3 else ["fluid", "biot"]
        self.loose = LooseOperator(self.A_loose_c, list(self.groups), names, self.scale)

    def _field_scale(self) -> np.ndarray:
        """One value per field, 1/sqrt(median |diag|) of its block of the constrained operator."""
        dg = np.abs(self.A_mono_c.diagonal())
        d = np.ones(self.n)
        for g in self.field_slices or [slice(0, self.n)]:
            blk = dg[g]
            if np.any(blk > 0):
                d[g] = 1.0 / np.sqrt(np.median(blk[blk > 0]))
        return d

    @property
    def n(self) -> int:
        return self.A_mono.shape[0]

    def constrain(self, A) -> sp.csr_matrix:
        return as_csr(self.Q @ A @ self.Q + self.NNt)

    def project(self, b: np.ndarray) -> np.ndarray:
        return self.Q @ b

    def mono_factor(self) -> Factorization:
        if "mono" not in self._cache:
            self._cache["mono"] = factorize(self.A_mono_c, group="monolithic", scale=self.scale)
        return self._cache["mono"]

    def rhs_mono(self, F: np.ndarray, y_prev: np.ndarray) -> np.ndarray:
        return self.Q @ F + self.R_mono_c @ y_prev

    def rhs_loose(self, F: np.ndarray, y_prev: np.ndarray) -> np.ndarray:
        return self.Q @ F + self.R_loose_c @ y_prev


def apply_loosely_coupled_preconditioner(B: BlockSystem, r: np.ndarray) -> np.ndarray:
    """Solve A_loose z = r group by group: structure, then Darcy, then fluid."""
    return B.loose.solve(np.asarray(r, dtype=float))
