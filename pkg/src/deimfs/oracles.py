"""Fiber oracles: callables that produce selected fibers of a target tensor.

A request for mode ``i`` names one index vector per other mode and receives
the block ``F[p_0, ..., :, ..., p_{d-1}]`` (all of mode ``i``) as a dense
array whose mode ``k`` has length ``len(p_k)``.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .tensor import subtensor


class FiberOracle:
    """Base class; subclasses implement :meth:`_evaluate`.

    ``entries`` tallies the number of target entries produced (block sizes
    summed over requests).  ``halo_entries`` tallies extra solution values a
    stencil had to consult beyond the requested positions.  With
    ``track_distinct=True`` the oracle also remembers every multi-index it has
    produced so that :meth:`distinct_entries` can report the exact count.
    """

    halo_width = 0

    def __init__(self, shape: Sequence[int], track_distinct: bool = False):
        self.shape = tuple(int(n) for n in shape)
        self.entries = 0
        self.halo_entries = 0
        self.requests = 0
        self._lock = threading.Lock()
        self._seen = [] if track_distinct else None

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def fibers(self, mode: int, indices: Sequence) -> np.ndarray:
        d = self.ndim
        if not 0 <= mode < d:
            raise ValueError(f"mode {mode} out of range for a {d}-way oracle")
        if len(indices) != d:
            raise ValueError(f"expected {d} index vectors, got {len(indices)}")
        idx = []
        for k in range(d):
            if k == mode:
                idx.append(None)
                continue
            p = np.asarray(indices[k], dtype=np.intp).ravel()
            if p.size and (p.min() < 0 or p.max() >= self.shape[k]):
                raise ValueError(f"fiber indices for mode {k} outside [0, {self.shape[k]})")
            idx.append(p)
        block = np.asarray(self._evaluate(mode, idx), dtype=float)
        expected = tuple(self.shape[k] if k == mode else len(idx[k]) for k in range(d))
        if block.shape != expected:
            raise RuntimeError(f"oracle returned block {block.shape}, expected {expected}")
        with self._lock:
            self.entries += block.size
            self.requests += 1
            if self._seen is not None:
                full = [np.arange(self.shape[k]) if k == mode else idx[k] for k in range(d)]
                grids = np.meshgrid(*full, indexing="ij")
                self._seen.append(np.ravel_multi_index([g.ravel() for g in grids], self.shape))
        return block

    def distinct_entries(self) -> int:
        if self._seen is None:
            raise RuntimeError("oracle was created without track_distinct=True")
        if not self._seen:
            return 0
        return int(np.unique(np.concatenate(self._seen)).size)

    def reset_counters(self) -> None:
        with self._lock:
            self.entries = 0
            self.halo_entries = 0
            self.requests = 0
            if self._seen is not None:
                self._seen = []

    def _evaluate(self, mode: int, indices: list) -> np.ndarray:
        raise NotImplementedError


class DenseOracle(FiberOracle):
    """Serves fibers of an explicitly stored array."""

    def __init__(self, array: np.ndarray, track_distinct: bool = False):
        self.array = np.asarray(array, dtype=float)
        super().__init__(self.array.shape, track_distinct)

    def _evaluate(self, mode, indices):
        return subtensor(self.array, indices)


class GridFunctionOracle(FiberOracle):
    """Pointwise evaluation of ``func(x_0, ..., x_{d-1})`` on a tensor grid.

    ``func`` must broadcast over its arguments.
    """

    def __init__(self, func: Callable, grids: Sequence[np.ndarray], track_distinct: bool = False):
        self.func = func
        self.grids = [np.asarray(g, dtype=float) for g in grids]
        super().__init__([g.size for g in self.grids], track_distinct)

    def _evaluate(self, mode, indices):
        d = self.ndim
        coords = []
        for k in range(d):
            x = self.grids[k] if k == mode else self.grids[k][indices[k]]
            shape = [1] * d
            shape[k] = x.size
            coords.append(x.reshape(shape))
        out = self.func(*coords)
        target = tuple(c.size for c in coords)
        return np.broadcast_to(out, target).astype(float, copy=True)

    def dense(self) -> np.ndarray:
        return np.asarray(self.func(*np.meshgrid(*self.grids, indexing="ij", sparse=True)), dtype=float)
