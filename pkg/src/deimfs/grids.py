"""Uniform 1-D grids, finite-difference matrices and trapezoidal weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

PERIODIC = "periodic"
DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Grid1D:
    points: np.ndarray
    boundary: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if self.boundary not in (PERIODIC, DIRICHLET):
            raise ValueError(f"unknown boundary kind {self.boundary!r}")
        if pts.ndim != 1 or pts.size < 2 or np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be a strictly increasing 1-D array")
        h = np.diff(pts)
        if not np.allclose(h, h[0], rtol=1e-10, atol=0):
            raise ValueError("grid must be uniform")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, a: float, b: float, n: int, boundary: str = DIRICHLET) -> "Grid1D":
        """``n`` points on ``[a, b]``; periodic grids leave out the right end."""
        return cls(np.linspace(a, b, n, endpoint=boundary == DIRICHLET), boundary)

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (uniform for periodic grids)."""
        w = np.full(self.n, self.spacing)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.spacing
        return w

    def interior(self) -> np.ndarray:
        """1 on nodes that carry unknowns, 0 on Dirichlet boundary nodes."""
        m = np.ones(self.n)
        if not self.periodic:
            m[0] = m[-1] = 0.0
        return m


def diff_matrix(grid: Grid1D, order: int) -> sp.csr_matrix:
    """Second-order finite-difference derivative of the given order (1 or 2).

    Central stencils in the interior.  Periodic grids wrap; Dirichlet grids
    close with one-sided second-order stencils at the two end nodes, so the
    operator is exact for quadratics everywhere.
    """
    n, h = grid.n, grid.spacing
    if n < 5:
        raise ValueError("finite-difference operators need at least 5 points")
    if order == 1:
        offsets, coeffs = (-1, 1), np.array([-0.5, 0.5]) / h
    elif order == 2:
        offsets, coeffs = (-1, 0, 1), np.array([1.0, -2.0, 1.0]) / h**2
    else:
        raise ValueError("order must be 1 or 2")
    m = sp.lil_matrix((n, n))
    rows = range(n) if grid.periodic else range(1, n - 1)
    for i in rows:
        for off, c in zip(offsets, coeffs):
            m[i, (i + off) % n] += c
    if not grid.periodic:
        if order == 1:
            m[0, :3] = np.array([-1.5, 2.0, -0.5]) / h
            m[n - 1, n - 3:] = np.array([0.5, -2.0, 1.5]) / h
        else:
            m[0, :4] = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
            m[n - 1, n - 4:] = np.array([-1.0, 4.0, -5.0, 2.0]) / h**2
    return m.tocsr()
