"""Tucker cross approximation by DEIM fiber sampling, plus reference methods.

``deim_fs`` is the guided algorithm: DEIM picks fiber indices from
approximate left singular vectors ("guides") of each unfolding, factors come
from SVDs of the sampled fiber matrices and the core from a least-squares fit
on the intersection tensor.  ``deim_fs_iterative`` removes the need for
guides by starting from random fibers and feeding each pass's fiber singular
vectors into the next.  ``hosvd`` and ``fstd`` are the dense and the
fiber-sampling baselines used for comparison.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .deim import deim_indices
from .errors import IllConditionedIntersectionError
from .oracles import FiberOracle
from .tensor import (TuckerTensor, left_singular_vectors, mode_product,
                     multi_mode_product, unfold)

PINV_CUTOFF = 1e-12


class RankDeficientWarning(UserWarning):
    pass


def _per_mode(value, d: int, name: str) -> tuple:
    if np.isscalar(value):
        return (int(value),) * d
    value = tuple(int(v) for v in value)
    if len(value) != d:
        raise ValueError(f"{name} needs {d} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class CrossConfig:
    """Target multirank and knobs shared by the cross algorithms.

    ``fiber_counts`` is ``rank + oversampling`` per mode; the default offset of
    2 is where extra fibers stop paying off.
    """

    rank: tuple
    oversampling: int | tuple = 2
    thresholds: tuple | None = None
    max_iterations: int = 50
    tol: float = 1e-8

    def __post_init__(self):
        rank = tuple(int(r) for r in np.atleast_1d(self.rank))
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "oversampling", _per_mode(self.oversampling, len(rank), "oversampling"))
        if min(rank) < 1:
            raise ValueError("target ranks must be positive")
        if min(self.oversampling) < 0:
            raise ValueError("fiber counts must be at least the target rank (oversampling >= 0)")
        if self.thresholds is not None:
            lo, hi = self.thresholds
            if not 0 < lo < hi:
                raise ValueError(f"adaptivity thresholds need 0 < eps_l < eps_u, got {self.thresholds}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    @property
    def fiber_counts(self) -> tuple:
        return tuple(r + o for r, o in zip(self.rank, self.oversampling))

    def with_rank(self, rank) -> "CrossConfig":
        return CrossConfig(tuple(rank), self.oversampling, self.thresholds, self.max_iterations, self.tol)


@dataclass
class FiberSampleSet:
    indices: tuple
    fibers: tuple
    intersection: np.ndarray


@dataclass(frozen=True)
class SingularSpectrum:
    values: tuple

    def __getitem__(self, mode):
        return self.values[mode]

    def norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(s) for s in self.values])


@dataclass
class CrossResult:
    tucker: TuckerTensor
    samples: FiberSampleSet
    spectrum: SingularSpectrum
    #: Left singular vectors of each C_i (one more than the fiber count when
    #: available), used as next guides and to pad after a rank increase.
    fiber_bases: tuple = ()
    entries: int = 0

    def __iter__(self):
        return iter((self.tucker, self.samples, self.spectrum))


def core_spectrum(core: np.ndarray) -> SingularSpectrum:
    """Singular values of every unfolding of ``core``."""
    return SingularSpectrum(tuple(np.linalg.svd(unfold(core, k), compute_uv=False)
                                  for k in range(core.ndim)))


def _gather(oracle: FiberOracle, indices: Sequence[np.ndarray]):
    for mode in range(oracle.ndim):
        yield mode, oracle.fibers(mode, indices)


def sample_fibers(oracle: FiberOracle, guides=None, indices=None) -> FiberSampleSet:
    """Harvest the fiber matrices ``C_i`` and intersection ``W``.

    Indices come from DEIM on ``guides`` unless given explicitly.  ``W`` is
    cut out of the mode-0 block, so the oracle is only queried for fibers.
    """
    if indices is None:
        if guides is None:
            raise ValueError("either guides or indices must be given")
        if len(guides) != oracle.ndim:
            raise ValueError(f"need {oracle.ndim} guide matrices, got {len(guides)}")
        for k, g in enumerate(guides):
            if np.shape(g)[0] != oracle.shape[k]:
                raise ValueError(f"guide {k} has {np.shape(g)[0]} rows, mode size is {oracle.shape[k]}")
        indices = [deim_indices(g) for g in guides]
    indices = tuple(np.asarray(p, dtype=np.intp) for p in indices)
    fibers = []
    w = None
    for mode, block in _gather(oracle, indices):
        if mode == 0:
            w = block[indices[0]]
        fibers.append(unfold(block, mode))
    return FiberSampleSet(indices, tuple(fibers), w)


def factors_from_fibers(samples: FiberSampleSet, rank) -> list:
    """Leading ``rank[i]`` left singular vectors of each ``C_i``."""
    rank = _per_mode(rank, len(samples.fibers), "rank")
    factors = []
    for k, (c, r) in enumerate(zip(samples.fibers, rank)):
        if r > min(c.shape):
            raise ValueError(f"rank {r} exceeds the size {c.shape} of fiber matrix {k}")
        u, s = left_singular_vectors(c, r)
        _warn_rank(s, r, k)
        factors.append(u)
    return factors


def _warn_rank(s, r, mode):
    if s.size and (r > s.size or s[r - 1] <= PINV_CUTOFF * s[0]):
        warnings.warn(f"fiber matrix of mode {mode} has numerical rank below {r}",
                      RankDeficientWarning, stacklevel=3)


def pinv_checked(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    """SVD pseudo-inverse; raises when the matrix is not of full rank to 1e-12."""
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] < PINV_CUTOFF * s[0]:
        raise IllConditionedIntersectionError(
            f"{what} of shape {m.shape} is rank deficient (singular values {s[:1]}..{s[-1:]})")
    return (vt.T / s) @ u.T


def core_from_intersection(w: np.ndarray, factors, indices) -> np.ndarray:
    """Least-squares core: ``W x_i pinv(U_i[p_i, :])`` over all modes."""
    pinvs = [pinv_checked(u[p], f"restricted factor {k}")
             for k, (u, p) in enumerate(zip(factors, indices))]
    return multi_mode_product(w, pinvs)


def _cross_from_indices(oracle, indices, rank, keep_fibers=True, strict=True) -> CrossResult:
    start = oracle.entries
    factors, bases, fibers = [], [], []
    w = None
    for mode, block in _gather(oracle, indices):
        if mode == 0:
            w = block[indices[0]]
        c = unfold(block, mode)
        del block
        r = rank[mode]
        if r > min(c.shape):
            raise ValueError(f"rank {r} exceeds the size {c.shape} of fiber matrix {mode}")
        u, s = left_singular_vectors(c)
        _warn_rank(s, r, mode)
        factors.append(np.ascontiguousarray(u[:, :r]))
        bases.append(np.ascontiguousarray(u[:, :len(indices[mode]) + 1]))
        if keep_fibers:
            fibers.append(c)
        del c
    samples = FiberSampleSet(tuple(indices), tuple(fibers), w)
    try:
        core = core_from_intersection(w, factors, indices)
    except IllConditionedIntersectionError:
        if strict:
            raise
        # Fiber bases are still usable as guides for the next pass.
        return CrossResult(None, samples, None, tuple(bases), oracle.entries - start)
    return CrossResult(TuckerTensor(core, tuple(factors)), samples, core_spectrum(core),
                       tuple(bases), oracle.entries - start)


def deim_fs(oracle: FiberOracle, guides, cfg: CrossConfig, keep_fibers: bool = True) -> CrossResult:
    """DEIM fiber sampling with the given guide bases (one per mode).

    Each guide must have ``N_i`` rows and ``cfg.fiber_counts[i]`` columns
    (extra columns are ignored).
    """
    d = oracle.ndim
    if len(guides) != d or len(cfg.rank) != d:
        raise ValueError(f"expected {d} guides and a {d}-mode rank")
    counts = cfg.fiber_counts
    indices = []
    for k, g in enumerate(guides):
        g = np.asarray(g, dtype=float)
        if g.shape[0] != oracle.shape[k]:
            raise ValueError(f"guide {k} has {g.shape[0]} rows, mode size is {oracle.shape[k]}")
        if g.shape[1] < counts[k]:
            raise ValueError(f"guide {k} has {g.shape[1]} columns, {counts[k]} fibers requested")
        indices.append(deim_indices(g[:, :counts[k]]))
    return _cross_from_indices(oracle, indices, cfg.rank, keep_fibers)


def error_proxy(spectrum: SingularSpectrum, mode: int) -> float:
    """Smallest retained singular value relative to the norm of all of them."""
    s = np.asarray(spectrum[mode], dtype=float)
    if s.size == 0:
        raise ValueError(f"empty spectrum for mode {mode}")
    total = np.linalg.norm(s)
    return float(s.min() / total) if total > 0 else 0.0


def adapt_rank(rank: int, eps: float, thresholds, max_rank: int | None = None) -> int:
    """One step of the threshold rule: grow above ``eps_u``, shrink below ``eps_l``."""
    lo, hi = thresholds
    if not lo < hi:
        raise ValueError(f"need eps_l < eps_u, got {thresholds}")
    if eps > hi:
        rank += 1
    elif eps < lo:
        rank -= 1
    rank = max(rank, 1)
    if max_rank is not None:
        rank = min(rank, max_rank)
    return rank


@dataclass
class IterativeResult:
    tucker: TuckerTensor
    iterations: int
    converged: bool
    criterion: list = field(default_factory=list)
    cross: CrossResult | None = None

    def __iter__(self):
        return iter((self.tucker, self.iterations))


def _index_key(indices) -> tuple:
    return tuple(tuple(sorted(p.tolist())) for p in indices)


def deim_fs_iterative(oracle: FiberOracle, cfg: CrossConfig, seed=None,
                      keep_fibers: bool = False) -> IterativeResult:
    """Guide-free DEIM-FS.

    The first pass samples uniformly random distinct fibers.  Every pass keeps
    the first ``r'_i`` left singular vectors of ``C_i`` as the guides for the
    next one.  Iteration stops once the relative change of the core's
    Frobenius norm (the norm of every unfolding spectrum) drops below
    ``cfg.tol`` for all modes.  It also stops when the DEIM indices revisit an
    earlier set (the passes then cycle) or after ``cfg.max_iterations`` passes;
    without convergence the iterate with the smallest criterion value is
    returned with ``converged=False``.
    A pass whose restricted factors are too ill-conditioned for a core (typical
    of random fibers in near-zero regions) still supplies guides; it only
    restarts the convergence test.  Such a failure on the last pass raises.
    """
    rng = np.random.default_rng(seed)
    counts = cfg.fiber_counts
    indices = []
    for k, n in enumerate(oracle.shape):
        if counts[k] > n:
            raise ValueError(f"cannot sample {counts[k]} distinct fibers from a mode of size {n}")
        indices.append(np.sort(rng.choice(n, size=counts[k], replace=False)))
    history = []
    prev = None
    res = None
    best = None
    seen = set()
    for it in range(1, cfg.max_iterations + 1):
        last = it == cfg.max_iterations
        key = _index_key(indices)
        seen.add(key)
        res = _cross_from_indices(oracle, indices, cfg.rank, keep_fibers, strict=last)
        if res.tucker is None:
            prev = None
            indices = [deim_indices(b[:, :counts[k]]) for k, b in enumerate(res.fiber_bases)]
            continue
        norms = res.spectrum.norms()
        if prev is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                change = np.abs(norms - prev) / norms
            change = np.where(norms == 0, np.where(prev == 0, 0.0, np.inf), change)
            crit = float(change.max())
            history.append(crit)
            if crit < cfg.tol:
                return IterativeResult(res.tucker, it, True, history, res)
            if best is None or crit < best[0]:
                best = (crit, res)
        prev = norms
        indices = [deim_indices(b[:, :counts[k]]) for k, b in enumerate(res.fiber_bases)]
        # a pass depends only on its indices: a fixed point converges on the
        # next pass, any other revisited set cycles forever
        nxt = _index_key(indices)
        if nxt != key and nxt in seen:
            break
    if best is None:
        best = (None, res)
    if best[1].tucker is None:
        raise IllConditionedIntersectionError("no pass produced a well-conditioned intersection")
    return IterativeResult(best[1].tucker, it, False, history, best[1])


def unfolding_bases(t: np.ndarray, cols=None) -> list:
    """Left singular vectors of every unfolding of a dense tensor (exact guides)."""
    out = []
    for k in range(t.ndim):
        c = None if cols is None else _per_mode(cols, t.ndim, "cols")[k]
        out.append(left_singular_vectors(unfold(t, k), c)[0])
    return out


def hosvd(t: np.ndarray, rank, bases=None) -> TuckerTensor:
    """Truncated higher-order SVD; precomputed ``bases`` may be passed in."""
    t = np.asarray(t, dtype=float)
    rank = _per_mode(rank, t.ndim, "rank")
    for k, r in enumerate(rank):
        if not 1 <= r <= t.shape[k]:
            raise ValueError(f"rank {r} outside [1, {t.shape[k]}] for mode {k}")
    if bases is None:
        factors = [left_singular_vectors(unfold(t, k), r)[0] for k, r in enumerate(rank)]
    else:
        factors = [np.ascontiguousarray(b[:, :r]) for b, r in zip(bases, rank)]
    core = multi_mode_product(t, [u.T for u in factors])
    return TuckerTensor(core, tuple(factors))


@dataclass
class FstdResult:
    tucker: TuckerTensor
    indices: tuple
    entries: int


def _fstd_model(oracle, indices):
    blocks = [oracle.fibers(k, indices) for k in range(oracle.ndim)]
    w = blocks[0][indices[0]]
    factors = []
    for k, block in enumerate(blocks):
        wk = unfold(w, k)
        if not np.any(wk):
            raise IllConditionedIntersectionError(f"intersection unfolding {k} is numerically zero")
        u, s, vt = np.linalg.svd(wk, full_matrices=False)
        keep = s > PINV_CUTOFF * s[0]
        wpinv = (vt[keep].T / s[keep]) @ u[:, keep].T
        factors.append(unfold(block, k) @ wpinv)
    return w, factors, blocks


def fstd(oracle: FiberOracle, counts, seed=None) -> FstdResult:
    """Fiber-sampling Tucker baseline ``W x_i (C_i pinv(W_(i)))``.

    Fibers are chosen greedily: start from one random multi-index, then in
    each round and for each mode append the row whose sampled fibers show the
    largest absolute residual against the current model (ties to the lowest
    index, already chosen rows excluded).  The factors are not orthonormal.
    """
    d = oracle.ndim
    counts = _per_mode(counts, d, "counts")
    for k in range(d):
        if not 1 <= counts[k] <= oracle.shape[k]:
            raise ValueError(f"fiber count {counts[k]} invalid for mode size {oracle.shape[k]}")
    start = oracle.entries
    rng = np.random.default_rng(seed)
    indices = [np.array([rng.integers(n)], dtype=np.intp) for n in oracle.shape]
    while any(len(indices[k]) < counts[k] for k in range(d)):
        for k in range(d):
            if len(indices[k]) >= counts[k]:
                continue
            w, factors, blocks = _fstd_model(oracle, indices)
            restricted = [f if m == k else f[indices[m]] for m, f in enumerate(factors)]
            approx = multi_mode_product(w, restricted)
            resid = np.abs(blocks[k] - approx)
            score = unfold(resid, k).max(axis=1)
            score[indices[k]] = -1.0
            indices[k] = np.append(indices[k], np.argmax(score))
    w, factors, _ = _fstd_model(oracle, indices)
    return FstdResult(TuckerTensor(w, tuple(factors)), tuple(indices), oracle.entries - start)


def _as_chunks(approx, chunk_rows):
    if isinstance(approx, TuckerTensor):
        u0 = approx.factors[0]
        rest = multi_mode_product(approx.core, approx.factors, skip=0)
        for lo in range(0, u0.shape[0], chunk_rows):
            yield lo, mode_product(rest, u0[lo:lo + chunk_rows], 0)
    else:
        approx = np.asarray(approx, dtype=float)
        for lo in range(0, approx.shape[0], chunk_rows):
            yield lo, approx[lo:lo + chunk_rows]


def absolute_error(approx, truth: np.ndarray, chunk_rows: int = 16) -> float:
    """``||approx - truth||_F``, reconstructing a Tucker model slab by slab."""
    truth = np.asarray(truth, dtype=float)
    total = 0.0
    for lo, block in _as_chunks(approx, chunk_rows):
        diff = block - truth[lo:lo + block.shape[0]]
        total += float(np.vdot(diff, diff))
    return float(np.sqrt(total))


def relative_error(approx, truth: np.ndarray, chunk_rows: int = 16) -> float:
    norm = float(np.linalg.norm(np.ravel(truth)))
    if norm == 0.0:
        raise ZeroDivisionError("relative error against a zero tensor")
    return absolute_error(approx, truth, chunk_rows) / norm
