"""Independent reference computations used by the tests.

Nothing here calls the production shape functions or element kernels. Bases
are built by inverting monomial Vandermonde matrices in physical coordinates
and integrals use high-order rules constructed from scratch.
"""

import numpy as np

P1_NODES = [(0,), (1,), (2,)]
P2_NODES = [(0,), (1,), (2,), (0, 1), (1, 2), (2, 0)]


def triangle_rule(n):
    """Duffy-collapsed Gauss rule on the reference triangle, exact to degree 2n-2.

    Returns reference points (xi, eta) and weights summing to 1/2.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    u, wu = (x + 1) / 2, w / 2
    pts, wts = [], []
    for a, wa in zip(u, wu):
        for b, wb in zip(u, wu):
            pts.append((a, b * (1 - a)))
            wts.append(wa * wb * (1 - a))
    return np.array(pts), np.array(wts)


class Basis:
    """Nodal Lagrange basis of degree 1 or 2 on one physical triangle."""

    def __init__(self, kind, tri):
        self.tri = np.asarray(tri, dtype=float)
        self.c = self.tri.mean(axis=0)
        self.s = np.max(np.abs(self.tri - self.c))
        nodes = P1_NODES if kind == "P1" else P2_NODES
        self.deg = 1 if kind == "P1" else 2
        pts = np.array([self.tri[list(nd)].mean(axis=0) for nd in nodes])
        V = self._mono(pts)
        self.coef = np.linalg.solve(V, np.eye(len(nodes)))  # columns: basis functions

    def _local(self, X):
        X = np.atleast_2d(X)
        return (X[:, 0] - self.c[0]) / self.s, (X[:, 1] - self.c[1]) / self.s

    def _mono(self, X):
        x, y = self._local(X)
        cols = [np.ones_like(x), x, y]
        if self.deg == 2:
            cols += [x * x, x * y, y * y]
        return np.column_stack(cols)

    def values(self, X):
        return self._mono(X) @ self.coef

    def grads(self, X):
        x, y = self._local(X)
        one, zero = np.ones_like(x), np.zeros_like(x)
        dx = [zero, one, zero]
        dy = [zero, zero, one]
        if self.deg == 2:
            dx += [2 * x, y, zero]
            dy += [zero, x, 2 * y]
        gx = np.column_stack(dx) @ self.coef / self.s
        gy = np.column_stack(dy) @ self.coef / self.s
        return np.stack([gx, gy], axis=-1)  # (nq, n, 2)


def physical_rule(tri, n=6):
    tri = np.asarray(tri, dtype=float)
    ref, w = triangle_rule(n)
    J = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    X = tri[0] + ref @ J.T
    return X, w * abs(np.linalg.det(J))


def vector_basis(vals, grads):
    """Interleaved vector basis (dof 2a+c): values (nq, 2n, 2) and gradients (nq, 2n, 2, 2)."""
    nq, n = vals.shape
    V = np.zeros((nq, 2 * n, 2))
    G = np.zeros((nq, 2 * n, 2, 2))
    for a in range(n):
        for c in range(2):
            V[:, 2 * a + c, c] = vals[:, a]
            G[:, 2 * a + c, c, :] = grads[:, a, :]
    return V, G


def mass(kind, tri, weight=1.0):
    X, w = physical_rule(tri)
    N = Basis(kind, tri).values(X)
    return weight * np.einsum("q,qa,qb->ab", w, N, N)


def vector_mass(kind, tri, T):
    X, w = physical_rule(tri)
    b = Basis(kind, tri)
    V, _ = vector_basis(b.values(X), b.grads(X))
    return np.einsum("q,qic,cd,qjd->ij", w, V, np.asarray(T), V)


def grad_grad(kind, tri):
    X, w = physical_rule(tri)
    g = Basis(kind, tri).grads(X)
    return np.einsum("q,qad,qbd->ab", w, g, g)


def strain(kind, tri, weight):
    """Integral of 2 w D(u):D(phi)."""
    X, w = physical_rule(tri)
    b = Basis(kind, tri)
    _, G = vector_basis(b.values(X), b.grads(X))
    D = 0.5 * (G + np.swapaxes(G, -1, -2))
    return 2 * weight * np.einsum("q,qicd,qjcd->ij", w, D, D)


def divdiv(kind, tri, weight):
    X, w = physical_rule(tri)
    b = Basis(kind, tri)
    _, G = vector_basis(b.values(X), b.grads(X))
    div = G[..., 0, 0] + G[..., 1, 1]
    return weight * np.einsum("q,qi,qj->ij", w, div, div)


def div_coupling(kv, kp, tri):
    """Integral of psi div(phi); rows pressure, columns vector dofs."""
    X, w = physical_rule(tri)
    bv = Basis(kv, tri)
    _, G = vector_basis(bv.values(X), bv.grads(X))
    div = G[..., 0, 0] + G[..., 1, 1]
    P = Basis(kp, tri).values(X)
    return np.einsum("q,qi,qj->ij", w, P, div)


def edge_integral(edge, tri_test, kind_test, sel_test, tri_trial, kind_trial, sel_trial, weight=1.0, n_pts=8):
    """Edge integral of selected traces; normal is the left normal of the edge."""
    a, b = np.asarray(edge, dtype=float)
    L = np.linalg.norm(b - a)
    nrm = np.array([(b - a)[1], -(b - a)[0]]) / L
    tng = np.array([-nrm[1], nrm[0]])
    x, wg = np.polynomial.legendre.leggauss(n_pts)
    s = (x + 1) / 2
    X = a + s[:, None] * (b - a)
    wq = wg / 2 * L * weight

    def trace(tri, kind, sel):
        bs = Basis(kind, tri)
        vals, grads = bs.values(X), bs.grads(X)
        if sel == "val":
            return vals
        V, G = vector_basis(vals, grads)
        if sel == "n":
            return V @ nrm
        if sel == "t":
            return V @ tng
        D = G + np.swapaxes(G, -1, -2)  # 2 D(phi)
        d = nrm if sel == "snn" else tng
        return np.einsum("c,qicd,d->qi", d, D, nrm)

    A = trace(tri_test, kind_test, sel_test)
    B = trace(tri_trial, kind_trial, sel_trial)
    return np.einsum("q,qi,qj->ij", wq, A, B)


def random_triangle(rng, min_quality=0.1):
    """Positively oriented triangle with bounded aspect ratio."""
    while True:
        p = rng.uniform(-2, 2, size=(3, 2)) * rng.uniform(0.01, 10)
        d1, d2 = p[1] - p[0], p[2] - p[0]
        area2 = d1[0] * d2[1] - d1[1] * d2[0]
        longest = max(np.sum((p[(k + 1) % 3] - p[k]) ** 2) for k in range(3))
        if abs(area2) / longest > min_quality:
            return p if area2 > 0 else p[[0, 2, 1]]


def structured_counts(L, R, r_p, h):
    """Vertex and triangle counts of the two-strip template, computed by hand."""
    nx = max(1, round(L / h))
    nyf = max(1, round(R / h))
    nyp = max(1, round(r_p / h))
    return (nx + 1) * (nyf + nyp + 1), 2 * nx * (nyf + nyp)


def interpolate(dm, name, f):
    """Global vector holding the nodal interpolant of ``f(x, y)`` in field ``name``, zero elsewhere."""
    fs = dm[name]
    y = np.zeros(dm.total)
    vals = np.array([np.atleast_1d(f(x, yy)) for x, yy in fs.node_coords], dtype=float)
    for c in range(fs.ncomp):
        y[fs.dof(np.arange(fs.n_nodes), c)] = vals[:, c]
    return y
