"""Greedy DEIM interpolation-index selection."""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DegenerateBasisError

PIVOT_TOL = 1e-12


def deim_indices(basis: np.ndarray) -> np.ndarray:
    """Select one interpolation row per column of ``basis`` (N x p, p <= N).

    The first index is the argmax of ``|u_1|``.  Column ``j+1`` is then
    interpolated on the rows chosen so far and the argmax of the absolute
    residual is appended.  Ties go to the lowest index (``np.argmax``).

    Returns 0-based row indices as an ``intp`` array of length ``p``.  Raises
    :class:`DegenerateBasisError` when an LU pivot of the interpolation
    matrix, or a residual, falls below ``1e-12`` relative to the basis scale.
    """
    u = np.asarray(basis, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n, p = u.shape
    if p > n:
        raise ValueError(f"cannot pick {p} distinct rows out of {n}")
    idx = np.empty(p, dtype=np.intp)
    if p == 0:
        return idx

    scale = float(np.abs(u).max())
    if scale == 0.0 or np.abs(u[:, 0]).max() <= PIVOT_TOL * scale:
        raise DegenerateBasisError("first basis column is numerically zero")
    idx[0] = np.argmax(np.abs(u[:, 0]))
    for j in range(1, p):
        sel = idx[:j]
        lu, piv = lu_factor(u[sel, :j], check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() <= PIVOT_TOL * pivots.max():
            raise DegenerateBasisError(f"interpolation matrix singular at step {j}")
        c = lu_solve((lu, piv), u[sel, j], check_finite=False)
        res = np.abs(u[:, j] - u[:, :j] @ c)
        if res.max() <= PIVOT_TOL * scale:
            raise DegenerateBasisError(f"column {j} is numerically in the span of the previous ones")
        idx[j] = np.argmax(res)
    return idx


def deim_interpolate(basis: np.ndarray, values_at_indices: np.ndarray, indices) -> np.ndarray:
    """``basis @ basis[p]^{-1} @ v[p]``, the DEIM reconstruction of a vector."""
    return basis @ np.linalg.solve(basis[indices], values_at_indices)
