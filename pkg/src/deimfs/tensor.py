"""Dense multilinear primitives and the Tucker container.

Dense tensors are plain ``numpy.ndarray`` objects of dtype float64.  Modes are
0-based numpy axes.  Unfoldings follow the Kolda--Bader convention: entry
``(i_0, ..., i_{d-1})`` lands in row ``i_n`` and column
``sum_{k != n} i_k * J_k`` with ``J_k = prod_{m < k, m != n} N_m``, i.e. the
remaining indices are enumerated with the lowest mode varying fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _check_mode(ndim: int, mode: int) -> None:
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for a {ndim}-way tensor")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``(N_mode, prod of the others)``."""
    t = np.asarray(t)
    _check_mode(t.ndim, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m)
    shape = tuple(int(n) for n in shape)
    _check_mode(len(shape), mode)
    rest = shape[:mode] + shape[mode + 1:]
    if m.ndim != 2 or m.shape[0] != shape[mode] or m.shape[1] != int(np.prod(rest, dtype=np.int64)):
        raise ValueError(f"matrix of shape {m.shape} cannot be folded into {shape} along mode {mode}")
    return np.moveaxis(np.reshape(m, (shape[mode],) + rest, order="F"), 0, mode)


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """n-mode product ``t x_mode m`` for a ``J x N_mode`` matrix ``m``."""
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t.ndim, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix of shape {m.shape} does not act on mode {mode} of size {t.shape[mode]}")
    shape = t.shape
    a, n, b = math.prod(shape[:mode]), shape[mode], math.prod(shape[mode + 1:])
    out = shape[:mode] + (m.shape[0],) + shape[mode + 1:]
    # one GEMM (or a batch of them) on a C-order view; no transposed copies
    if b == 1:
        return (t.reshape(a, n) @ m.T).reshape(out)
    if a == 1:
        return (m @ t.reshape(n, b)).reshape(out)
    return np.matmul(m, t.reshape(a, n, b)).reshape(out)


def multi_mode_product(t: np.ndarray, matrices: Sequence[np.ndarray | None],
                       skip: int | None = None) -> np.ndarray:
    """Apply ``matrices[k]`` along every mode ``k``; ``None`` entries are skipped.

    Modes are processed in order of decreasing size reduction so that the
    intermediates stay as small as possible.
    """
    order = []
    for k, m in enumerate(matrices):
        if m is None or k == skip:
            continue
        order.append((m.shape[0] / m.shape[1], k))
    for _, k in sorted(order):
        t = mode_product(t, matrices[k], k)
    return t


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(t)))


def subtensor(t: np.ndarray, selectors: Sequence) -> np.ndarray:
    """Gather ``t[p_1, ..., p_d]`` where each selector is an index list or ``None`` (all)."""
    t = np.asarray(t)
    if len(selectors) != t.ndim:
        raise ValueError(f"expected {t.ndim} selectors, got {len(selectors)}")
    index = []
    for k, sel in enumerate(selectors):
        if sel is None or (isinstance(sel, str) and sel == "all"):
            index.append(np.arange(t.shape[k]))
            continue
        sel = np.asarray(sel, dtype=np.intp).ravel()
        if sel.size and (sel.min() < 0 or sel.max() >= t.shape[k]):
            raise ValueError(f"selector for mode {k} has indices outside [0, {t.shape[k]})")
        index.append(sel)
    return t[np.ix_(*index)]


def truncated_svd(m: np.ndarray, r: int):
    """Rank-``r`` SVD ``(U, s, Vt)`` with a deterministic sign convention.

    Each left singular vector is flipped so that its largest-magnitude entry is
    positive (first such entry on ties); the matching row of ``Vt`` follows.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("truncated_svd expects a matrix")
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"rank {r} outside [1, {min(m.shape)}] for a {m.shape} matrix")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    u, s, vt = u[:, :r], s[:r], vt[:r]
    return _fix_signs(u, s, vt)


def _fix_signs(u, s, vt):
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, s, vt * signs[:, None]


def left_singular_vectors(m: np.ndarray, r: int | None = None):
    """Leading ``r`` left singular vectors and all singular values of ``m``.

    ``r=None`` keeps every available vector.  The Vt factor is never formed.
    """
    m = np.asarray(m, dtype=float)
    rows, cols = m.shape
    if cols > rows:
        # Left vectors of m equal those of the square factor L in m = L Q^T.
        lmat = np.linalg.qr(m.T, mode="r").T
        u, s, _ = np.linalg.svd(lmat, full_matrices=False)
    else:
        u, s, _ = np.linalg.svd(m, full_matrices=False)
    if r is not None:
        if not 1 <= r <= u.shape[1]:
            raise ValueError(f"rank {r} outside [1, {u.shape[1]}]")
        u = u[:, :r]
    u, _, _ = _fix_signs(u, s, np.zeros((u.shape[1], 0)))
    return u, s


@dataclass(frozen=True)
class TuckerTensor:
    """``core x_1 U_1 x_2 ... x_d U_d``.

    Factors are expected to be orthonormal for anything produced by HOSVD,
    DEIM-FS or an accepted DLRA step; FSTD models and intermediate RK stages
    carry non-orthonormal factors, so this is checked by
    :meth:`orthonormality_defect` rather than enforced.
    """

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=float)
        factors = tuple(np.asarray(u, dtype=float) for u in self.factors)
        if core.ndim != len(factors):
            raise ValueError(f"core has {core.ndim} modes but {len(factors)} factors were given")
        for k, u in enumerate(factors):
            if u.ndim != 2 or u.shape[1] != core.shape[k]:
                raise ValueError(f"factor {k} of shape {u.shape} does not match core size {core.shape[k]}")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def ndim(self) -> int:
        return self.core.ndim

    @property
    def shape(self) -> tuple:
        return tuple(u.shape[0] for u in self.factors)

    @property
    def multirank(self) -> tuple:
        return self.core.shape

    def orthonormality_defect(self) -> float:
        return max(np.linalg.norm(u.T @ u - np.eye(u.shape[1])) for u in self.factors)

    def full(self) -> np.ndarray:
        return reconstruct(self)

    def storage(self) -> int:
        return self.core.size + sum(u.size for u in self.factors)


def reconstruct(tt: TuckerTensor) -> np.ndarray:
    """Dense tensor of a Tucker model; small modes are expanded first."""
    return multi_mode_product(tt.core, tt.factors)


def orthonormalize(tt: TuckerTensor) -> TuckerTensor:
    """Thin-QR every factor and absorb the triangular parts into the core."""
    qs, rs = [], []
    for u in tt.factors:
        q, r = np.linalg.qr(u)
        # Positive diagonal in R makes the map the identity on orthonormal input.
        signs = np.where(np.diag(r) < 0, -1.0, 1.0)
        q, r = q * signs, r * signs[:, None]
        qs.append(q)
        rs.append(r)
    return TuckerTensor(multi_mode_product(tt.core, rs), tuple(qs))


def truncate_tucker(tt: TuckerTensor, rank) -> TuckerTensor:
    """Recompress a Tucker model to ``rank`` without densifying it.

    Factors are orthonormalized, then the core is HOSVD-truncated.  If a
    requested rank exceeds what the model carries, the factor is completed
    with orthonormal columns and the core padded with zeros.
    """
    tt = orthonormalize(tt)
    rank = (int(rank),) * tt.ndim if np.isscalar(rank) else tuple(int(r) for r in rank)
    mats, factors = [], []
    for k, r in enumerate(rank):
        v, _ = left_singular_vectors(unfold(tt.core, k))
        v = v[:, :min(r, v.shape[1])]
        mats.append(v.T)
        factors.append(tt.factors[k] @ v)
    core = multi_mode_product(tt.core, mats)
    for k, r in enumerate(rank):
        extra = r - core.shape[k]
        if extra > 0:
            factors[k] = _complete_basis(factors[k], extra)
            pad = np.zeros(core.shape[:k] + (extra,) + core.shape[k + 1:])
            core = np.concatenate([core, pad], axis=k)
    return TuckerTensor(core, tuple(factors))


def _complete_basis(u: np.ndarray, extra: int) -> np.ndarray:
    n, r = u.shape
    if r + extra > n:
        raise ValueError(f"cannot extend a {n}x{r} basis by {extra} columns")
    q, _ = np.linalg.qr(np.hstack([u, np.eye(n)]))
    return np.hstack([u, q[:, r:r + extra]])


def tucker_sum(terms) -> TuckerTensor:
    """Exact sum of Tucker models: concatenated factors, block-diagonal core."""
    terms = list(terms)
    d = terms[0].ndim
    sizes = [[t.core.shape[k] for t in terms] for k in range(d)]
    core = np.zeros(tuple(sum(s) for s in sizes))
    offs = [np.concatenate([[0], np.cumsum(s)]) for s in sizes]
    for j, t in enumerate(terms):
        sl = tuple(slice(offs[k][j], offs[k][j + 1]) for k in range(d))
        core[sl] = t.core
    factors = tuple(np.hstack([t.factors[k] for t in terms]) for k in range(d))
    return TuckerTensor(core, factors)
