"""Right-hand-side oracles and analytic references for the test problems.

The PDE operators are written as sums of separable terms: each term carries a
coefficient and, per mode, an optional 1-D finite-difference matrix.  On a
Tucker solution ``S x_k U_k`` such a term is again a Tucker tensor with the
matrices folded into the factors, so a block of fibers only needs the rows of
``M_k U_k`` at the requested indices.  With banded ``M_k`` those rows only
consult ``U_k`` within the stencil halo of the requested indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .grids import DIRICHLET, PERIODIC, Grid1D, diff_matrix
from .oracles import FiberOracle, GridFunctionOracle
from .tensor import (TuckerTensor, mode_product,
                     multi_mode_product, truncate_tucker, tucker_sum)


@dataclass
class Term:
    coef: float
    ops: dict = field(default_factory=dict)


class TuckerOperatorOracle(FiberOracle):
    """Fibers of ``mask * (sum_t coef_t * V x_k M_{t,k} + source(V))`` for a Tucker ``V``.

    ``masks`` (optional, one 1-D array per mode) zeroes boundary nodes.  With
    ``log_access=True`` the factor rows consulted per mode are recorded in
    ``rows_consulted``.
    """

    def __init__(self, solution: TuckerTensor, terms: Sequence[Term], source: Callable | None = None,
                 masks=None, halo_width: int = 1, log_access: bool = False, track_distinct: bool = False):
        super().__init__(solution.shape, track_distinct)
        self.solution = solution
        self.terms = list(terms)
        self.source = source
        self.masks = masks
        self.halo_width = halo_width
        self.rows_consulted = [set() for _ in range(solution.ndim)] if log_access else None

    def _restricted(self, k, p, op, cache):
        key = (k, id(op))
        if key not in cache:
            u = self.solution.factors[k]
            if op is None:
                rows = p
                cache[key] = u[p]
            else:
                sub = op[p]
                rows = np.unique(sub.indices)
                cache[key] = sub[:, rows] @ u[rows]
            if self.rows_consulted is not None:
                self.rows_consulted[k].update(int(i) for i in rows)
        return cache[key]

    def _evaluate(self, mode, indices):
        d = self.ndim
        s = self.solution.core
        u_mode = self.solution.factors[mode]
        cache = {}
        groups = {}
        mode_ops = {}

        def contract(mats):
            return multi_mode_product(s, mats, skip=mode)

        identity_mats = [None if k == mode else self._restricted(k, indices[k], None, cache) for k in range(d)]
        z_identity = contract(identity_mats)
        for term in self.terms:
            mats = list(identity_mats)
            touched = False
            for k, op in term.ops.items():
                if k != mode:
                    mats[k] = self._restricted(k, indices[k], op, cache)
                    touched = True
            z = contract(mats) if touched else z_identity
            op_i = term.ops.get(mode)
            key = id(op_i)
            mode_ops[key] = op_i
            groups[key] = groups[key] + term.coef * z if key in groups else term.coef * z

        halo = 0
        base = u_mode.shape[0] * np.prod([len(indices[k]) for k in range(d) if k != mode])
        for k in range(d):
            if k == mode:
                continue
            ops = {id(t.ops[k]): t.ops[k] for t in self.terms if k in t.ops}
            if ops:
                rows = np.unique(np.concatenate([op[indices[k]].indices for op in ops.values()]))
                extra = np.setdiff1d(rows, indices[k]).size
                halo += int(base / max(len(indices[k]), 1) * extra)

        zs, us = [], []
        for key, z in groups.items():
            op_i = mode_ops[key]
            zs.append(z)
            us.append(u_mode if op_i is None else op_i @ u_mode)
        if zs:
            block = mode_product(np.concatenate(zs, axis=mode), np.hstack(us), mode)
        else:
            block = np.zeros(tuple(u_mode.shape[0] if k == mode else len(indices[k]) for k in range(d)))
        if self.source is not None:
            block = block + self.source(mode_product(z_identity, u_mode, mode))
        if self.masks is not None:
            for k in range(d):
                m = self.masks[k] if k == mode else self.masks[k][indices[k]]
                shape = [1] * d
                shape[k] = m.size
                block = block * m.reshape(shape)
        with self._lock:
            self.halo_entries += halo
        return block


def apply_along(t: np.ndarray, op, mode: int) -> np.ndarray:
    """``t x_mode op`` for a sparse or dense operator."""
    if sp.issparse(op):
        if op.shape[1] > _DENSE_STENCIL_MAX:
            n = t.shape[mode]
            moved = np.moveaxis(t, mode, 0).reshape(n, -1)
            out = (op @ moved).reshape((op.shape[0],) + tuple(np.delete(t.shape, mode)))
            return np.moveaxis(out, 0, mode)
        # a small stencil is cheaper as one dense GEMM than as strided sparse products
        op = op.toarray()
    return mode_product(t, np.asarray(op), mode)


_DENSE_STENCIL_MAX = 128


def apply_dense(v: np.ndarray, terms: Sequence[Term], source=None, masks=None) -> np.ndarray:
    """The same operator as :class:`TuckerOperatorOracle`, on a dense array."""
    out = np.zeros_like(v)
    for term in terms:
        w = v
        for k, op in term.ops.items():
            w = apply_along(w, op, k)
        if w is v:
            out += term.coef * v
        else:
            w *= term.coef
            out += w
    if source is not None:
        out += source(v)
    if masks is not None:
        for k, m in enumerate(masks):
            shape = [1] * v.ndim
            shape[k] = m.size
            out *= m.reshape(shape)
    return out


# -- toy tensors ------------------------------------------------------------

def f1_function(x1, x2, x3):
    return np.exp(-(x1 * x2 * x3) ** 2)


def f2_function(b):
    def f(x1, x2, x3):
        return 1.0 / (x1**b + x2**b + x3**b) ** (1.0 / b)
    return f


def toy_grids(which: str, sizes=None):
    if which == "f1":
        sizes = sizes or (100, 100, 100)
        return [np.linspace(-1.0, 1.0, n) for n in sizes]
    if which == "f2":
        sizes = sizes or (300, 400, 300)
        bounds = (300.0, 400.0, 300.0)
        return [np.linspace(1.0, hi, n) for hi, n in zip(bounds, sizes)]
    raise ValueError(f"unknown toy tensor {which!r}")


def toy_tensor_oracle(which: str, b: float = 3.0, grids=None, track_distinct=False) -> GridFunctionOracle:
    """``f1``: exp(-(x1 x2 x3)^2) on [-1,1]^3; ``f2``: (x1^b+x2^b+x3^b)^(-1/b)."""
    grids = grids if grids is not None else toy_grids(which)
    func = f1_function if which == "f1" else f2_function(b)
    return GridFunctionOracle(func, grids, track_distinct)


# -- shared model plumbing ---------------------------------------------------

class Model:
    """A semi-discrete tensor ODE ``dV/dt = F(t, V)``."""

    name = "model"
    halo_width = 1

    def __init__(self, grids: Sequence[Grid1D]):
        self.grids = list(grids)

    @property
    def shape(self):
        return tuple(g.n for g in self.grids)

    def terms(self, t: float) -> list:
        return []

    def source(self, t: float):
        return None

    def masks(self):
        return None

    def oracle(self, t: float, solution: TuckerTensor, **kw) -> TuckerOperatorOracle:
        return TuckerOperatorOracle(solution, self.terms(t), self.source(t), self.masks(),
                                    halo_width=self.halo_width, **kw)

    def dense_rhs(self, t: float, v: np.ndarray) -> np.ndarray:
        return apply_dense(v, self.terms(t), self.source(t), self.masks())

    def initial_dense(self) -> np.ndarray:
        raise NotImplementedError

    def initial_tucker(self, rank) -> TuckerTensor:
        return initial_tucker(self.initial_dense(), rank)


class LinearDecay(Model):
    """``dV/dt = -rate * V``; the initial condition is a separable bump."""

    name = "decay"
    halo_width = 0

    def __init__(self, grids, rate: float = 1.0):
        super().__init__(grids)
        self.rate = rate

    def terms(self, t):
        return [Term(-self.rate)]

    def initial_tucker(self, rank=1) -> TuckerTensor:
        vecs = []
        for g in self.grids:
            v = np.exp(-g.points**2) + 0.1
            vecs.append((v / np.linalg.norm(v))[:, None])
        tt = TuckerTensor(np.ones((1,) * len(vecs)), tuple(vecs))
        return truncate_tucker(tt, rank)

    def initial_dense(self):
        return self.initial_tucker(1).full()

    def exact(self, t: float, v0: np.ndarray) -> np.ndarray:
        return np.exp(-self.rate * t) * v0


# -- Fokker-Planck -----------------------------------------------------------

@dataclass
class FokkerPlanckParams:
    alpha: float = 0.75
    diffusion: np.ndarray = field(default_factory=lambda: np.eye(4))
    mean0: np.ndarray = field(default_factory=lambda: np.array([1.5, 0.6, -0.3, -1.2]))
    cov0: np.ndarray = field(default_factory=lambda: 0.5 * np.eye(4) + 0.5)

    def __post_init__(self):
        self.diffusion = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
        self.mean0 = np.asarray(self.mean0, dtype=float)
        self.cov0 = np.atleast_2d(np.asarray(self.cov0, dtype=float))
        d = self.mean0.size
        if self.diffusion.shape != (d, d) or self.cov0.shape != (d, d):
            raise ValueError("diffusion and covariance must be d x d")
        if not np.allclose(self.diffusion, self.diffusion.T) or np.linalg.eigvalsh(self.diffusion).min() < -1e-12:
            raise ValueError("diffusion matrix must be symmetric positive semidefinite")
        if not np.allclose(self.cov0, self.cov0.T) or np.linalg.eigvalsh(self.cov0).min() <= 0:
            raise ValueError("initial covariance must be symmetric positive definite")

    @property
    def ndim(self):
        return self.mean0.size


def fp_grids(n: int = 31, d: int = 4, half_width: float = 6.0):
    return [Grid1D.uniform(-half_width, half_width, n, DIRICHLET) for _ in range(d)]


def gaussian_density(mean, cov, grids) -> np.ndarray:
    """Dense multivariate normal density on a tensor grid."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.size
    prec = np.linalg.inv(cov)
    norm = 1.0 / np.sqrt((2 * np.pi) ** d * np.linalg.det(cov))
    xs = np.meshgrid(*[g.points - m for g, m in zip(grids, mean)], indexing="ij", sparse=True)
    quad = 0.0
    for i in range(d):
        for j in range(d):
            quad = quad + prec[i, j] * xs[i] * xs[j]
    return norm * np.exp(-0.5 * quad)


class FokkerPlanck(Model):
    """Linear drift ``f_i = -alpha x_i`` with constant diffusion ``D``, zero Dirichlet data."""

    name = "fokker-planck"

    def __init__(self, params: FokkerPlanckParams | None = None, grids=None):
        params = params or FokkerPlanckParams()
        grids = grids or fp_grids(d=params.ndim)
        if any(g.periodic for g in grids):
            raise ValueError("Fokker-Planck grids must be Dirichlet")
        super().__init__(grids)
        self.params = params
        a, dm = params.alpha, params.diffusion
        self._d1 = [diff_matrix(g, 1) for g in grids]
        self._terms = []
        for j, g in enumerate(grids):
            inner = sp.diags(g.interior())
            drift = a * self._d1[j] @ sp.diags(g.points)
            op = inner @ (drift + 0.5 * dm[j, j] * diff_matrix(g, 2))
            self._terms.append(Term(1.0, {j: sp.csr_matrix(op)}))
        for j in range(self.ndim):
            for k in range(j + 1, self.ndim):
                if dm[j, k] != 0.0:
                    dj = sp.csr_matrix(sp.diags(grids[j].interior()) @ self._d1[j])
                    dk = sp.csr_matrix(sp.diags(grids[k].interior()) @ self._d1[k])
                    self._terms.append(Term(dm[j, k], {j: dj, k: dk}))
        self._masks = [g.interior() for g in grids]

    @property
    def ndim(self):
        return len(self.grids)

    def terms(self, t):
        return self._terms

    def masks(self):
        return self._masks

    def initial_dense(self):
        return gaussian_density(self.params.mean0, self.params.cov0, self.grids)

    def analytic(self, t: float) -> np.ndarray:
        mean, cov = fp_moments_analytic(self.params, t)
        return gaussian_density(mean, cov, self.grids)


def fp_moments_analytic(params: FokkerPlanckParams, t: float):
    """Mean ``mu0 e^{-alpha t}`` and covariance ``D/2a + (C0 - D/2a) e^{-2 alpha t}``."""
    a = params.alpha
    stat = params.diffusion / (2 * a)
    if np.isinf(t):
        return np.zeros_like(params.mean0), stat.copy()
    return params.mean0 * np.exp(-a * t), stat + (params.cov0 - stat) * np.exp(-2 * a * t)


def _weighted_rows(tt: TuckerTensor, grids, powers):
    vecs = []
    for k, (u, g) in enumerate(zip(tt.factors, grids)):
        vecs.append(((g.weights() * g.points ** powers[k]) @ u)[None, :])
    return float(multi_mode_product(tt.core, vecs).ravel()[0])


def fp_moments_numeric(solution: TuckerTensor, grids):
    """Mean and covariance of a Tucker density by trapezoidal quadrature, factor-wise."""
    d = solution.ndim
    zero = [0] * d
    mass = _weighted_rows(solution, grids, zero)
    if not mass > 0:
        raise ArithmeticError(f"density integrates to {mass}, cannot normalize")
    mean = np.empty(d)
    second = np.empty((d, d))
    for i in range(d):
        p = list(zero)
        p[i] = 1
        mean[i] = _weighted_rows(solution, grids, p) / mass
        for j in range(i, d):
            q = list(zero)
            q[i] += 1
            q[j] += 1
            second[i, j] = second[j, i] = _weighted_rows(solution, grids, q) / mass
    return mean, second - np.outer(mean, mean)


# -- nonlinear advection -----------------------------------------------------

@dataclass
class AdvectionParams:
    amplitude: float = 0.1

    def source(self, v):
        # in place: fiber blocks are the largest arrays a step allocates
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            return -self.amplitude * v / (1.0 + v * v)
        den = v * v
        den += 1.0
        np.divide(v, den, out=den)
        den *= -self.amplitude
        return den

    @staticmethod
    def velocity(t: float) -> np.ndarray:
        return np.array([-np.sin(t), np.cos(t), -np.sin(np.pi + t), np.cos(np.pi + t)])


def advection_grids(n: int = 33, d: int = 4, half_width: float = 5.0):
    return [Grid1D.uniform(-half_width, half_width, n, PERIODIC) for _ in range(d)]


class Advection(Model):
    """``dv/dt = -b(t) . grad v + s(v)`` on a periodic box."""

    name = "advection"

    def __init__(self, params: AdvectionParams | None = None, grids=None):
        grids = grids or advection_grids()
        if not all(g.periodic for g in grids):
            raise ValueError("advection grids must be periodic")
        if len(grids) != 4:
            raise ValueError("the velocity law is four-dimensional")
        super().__init__(grids)
        self.params = params or AdvectionParams()
        self._d1 = [diff_matrix(g, 1) for g in grids]

    def terms(self, t):
        b = self.params.velocity(t)
        return [Term(-b[j], {j: self._d1[j]}) for j in range(4) if b[j] != 0.0]

    def source(self, t):
        return self.params.source

    def initial_factors(self):
        x = [g.points for g in self.grids]
        f12 = np.exp(-(x[0][:, None] - 0.5) ** 2) * np.exp(-(x[0][:, None] + x[1][None, :] / 2 - 0.5) ** 2)
        f34 = np.exp(-(x[2][:, None] - 0.5) ** 2) * np.exp(-(x[2][:, None] + x[3][None, :] / 2 - 0.5) ** 2)
        g = [np.exp(-(xi + 0.5) ** 2) for xi in x]
        return f12, f34, g

    def initial_dense(self):
        f12, f34, g = self.initial_factors()
        return (f12[:, :, None, None] * f34[None, None, :, :]
                + g[0][:, None, None, None] * g[1][None, :, None, None]
                * g[2][None, None, :, None] * g[3][None, None, None, :])

    def initial_tucker(self, rank) -> TuckerTensor:
        """Term-by-term construction: the pair factors are SVD-split, never densified."""
        f12, f34, g = self.initial_factors()
        pieces = []
        a, sa, bt = np.linalg.svd(f12, full_matrices=False)
        c, sc, et = np.linalg.svd(f34, full_matrices=False)
        ka = int(np.sum(sa > 1e-15 * sa[0]))
        kc = int(np.sum(sc > 1e-15 * sc[0]))
        core = np.zeros((ka, ka, kc, kc))
        idx_a = np.arange(ka)
        idx_c = np.arange(kc)
        core[idx_a[:, None], idx_a[:, None], idx_c[None, :], idx_c[None, :]] = np.outer(sa[:ka], sc[:kc])
        pieces.append(TuckerTensor(core, (a[:, :ka], bt[:ka].T, c[:, :kc], et[:kc].T)))
        pieces.append(TuckerTensor(np.ones((1, 1, 1, 1)), tuple(v[:, None] for v in g)))
        return truncate_tucker(tucker_sum(pieces), rank)


def marginal_x3x4(solution: TuckerTensor, grids) -> np.ndarray:
    """``int int v^2 dx1 dx2`` as an ``N3 x N4`` matrix, via weighted Gram matrices."""
    s = solution.core
    u = solution.factors
    g1 = u[0].T @ (grids[0].weights()[:, None] * u[0])
    g2 = u[1].T @ (grids[1].weights()[:, None] * u[1])
    y = np.einsum("abce,xc,ye->abxy", s, u[2], u[3], optimize=True)
    z = np.einsum("aA,bB,abxy->ABxy", g1, g2, y, optimize=True)
    return np.einsum("abxy,abxy->xy", z, y, optimize=True)


def memory_footprint(n: int, d: int, fibers: int):
    """Dense entry count, cross storage ``d N r'^{d-1} + r'^d`` and their ratio."""
    dense = n ** d
    cross = d * n * fibers ** (d - 1) + fibers ** d
    return dense, cross, dense / cross


def initial_tucker(v0, rank, grids=None) -> TuckerTensor:
    """HOSVD-truncate an initial condition given densely or as a callable on ``grids``."""
    from .cross import hosvd
    if callable(v0):
        pts = [g.points if isinstance(g, Grid1D) else np.asarray(g) for g in grids]
        v0 = v0(*np.meshgrid(*pts, indexing="ij", sparse=True))
    return hosvd(np.asarray(v0, dtype=float), rank)
