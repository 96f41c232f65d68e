"""Dynamical low-rank integration of tensor ODEs on the fixed-rank Tucker manifold.

The solution ``V = S x_i U_i`` evolves by the Galerkin equations

    dS/dt   = F x_i U_i^T
    dU_i/dt = (I - U_i U_i^T) [F x_{k!=i} U_k^T]_(i) S_(i)^+

where ``F`` is either given densely (reference path) or, in the production
path, replaced by a DEIM-FS cross approximation ``S_F x_i U_F_i`` built from
fibers of the right-hand side at the current state.  With a Tucker ``F``
every product above only involves ``r x r_F`` Gram matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .cross import (CrossConfig, SingularSpectrum, adapt_rank, deim_fs, deim_fs_iterative,
                    error_proxy)
from .errors import ConfigError, SingularCoreError
from .oracles import FiberOracle
from .tensor import TuckerTensor, _complete_basis, multi_mode_product, orthonormalize, unfold

SINGULAR_CORE_CUTOFF = 1e-12

Evaluator = Callable[[float, TuckerTensor], FiberOracle]


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    rank: tuple
    rhs_rank: tuple
    oversampling: int = 2
    thresholds: tuple | None = None
    reorthonormalize: bool = True
    stage_refresh: bool = True
    max_rhs_rank: int | None = None
    warm_start_iterations: int = 10

    def __post_init__(self):
        rank = tuple(int(r) for r in np.atleast_1d(self.rank))
        rhs = tuple(int(r) for r in np.atleast_1d(self.rhs_rank))
        if len(rhs) == 1 and len(rank) > 1:
            rhs = rhs * len(rank)
        if len(rank) == 1 and len(rhs) > 1:
            rank = rank * len(rhs)
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "rhs_rank", rhs)
        if not self.dt > 0:
            raise ConfigError(f"time step must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ConfigError(f"t_end must be nonnegative, got {self.t_end}")
        if len(rank) != len(rhs):
            raise ConfigError("solution rank and rhs rank need the same number of modes")
        if min(rank) < 1 or min(rhs) < 1:
            raise ConfigError("ranks must be positive")
        if self.oversampling < 0:
            raise ConfigError("oversampling must be nonnegative (r' >= r)")
        if self.thresholds is not None:
            lo, hi = self.thresholds
            if not 0 < lo < hi:
                raise ConfigError(f"adaptivity thresholds need 0 < eps_l < eps_u, got {self.thresholds}")

    def for_ndim(self, d: int) -> "IntegratorConfig":
        """Broadcast scalar ranks to ``d`` modes."""
        if len(self.rank) == d:
            return self
        if len(self.rank) != 1:
            raise ConfigError(f"config has {len(self.rank)} modes, problem has {d}")
        return replace(self, rank=self.rank * d, rhs_rank=self.rhs_rank * d)

    @property
    def adaptive(self) -> bool:
        return self.thresholds is not None

    def cross_config(self, rhs_rank=None) -> CrossConfig:
        return CrossConfig(tuple(rhs_rank or self.rhs_rank), self.oversampling,
                           self.thresholds, max_iterations=self.warm_start_iterations)


@dataclass
class DlraState:
    t: float
    solution: TuckerTensor
    rhs_warm_start: tuple
    rhs_rank: tuple
    spectrum: SingularSpectrum | None = None
    entries: int = 0
    steps: int = 0


# -- Galerkin vector field ---------------------------------------------------

def _solution(state) -> TuckerTensor:
    return state.solution if isinstance(state, DlraState) else state


def _grams(sol: TuckerTensor, rhs: TuckerTensor) -> list:
    if sol.ndim != rhs.ndim:
        raise ValueError(f"solution has {sol.ndim} modes, rhs has {rhs.ndim}")
    out = []
    for k, (u, uf) in enumerate(zip(sol.factors, rhs.factors)):
        if u.shape[0] != uf.shape[0]:
            raise ValueError(f"mode {k}: solution factor has {u.shape[0]} rows, rhs factor {uf.shape[0]}")
        out.append(u.T @ uf)
    return out


def core_rhs(state, rhs: TuckerTensor) -> np.ndarray:
    """``S_F x_i (U_i^T U_F_i)``."""
    return multi_mode_product(rhs.core, _grams(_solution(state), rhs))


def _core_pinv(core: np.ndarray, mode: int) -> np.ndarray:
    s_i = unfold(core, mode)
    sv = np.linalg.svd(s_i, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0 or sv[-1] < SINGULAR_CORE_CUTOFF * sv[0]:
        raise SingularCoreError(
            f"mode-{mode} unfolding of the core is numerically singular "
            f"(sigma_min/sigma_max = {sv[-1] / sv[0] if sv[0] else 0.0:.3e}); reduce the solution rank")
    return s_i.T @ np.linalg.inv(s_i @ s_i.T)


def factor_rhs(state, rhs: TuckerTensor, mode: int, grams=None) -> np.ndarray:
    """``(I - U U^T) U_F [S_F x_{k!=i} U_k^T U_F_k]_(i) S_(i)^+`` for ``i = mode``."""
    sol = _solution(state)
    grams = grams if grams is not None else _grams(sol, rhs)
    pinv = _core_pinv(sol.core, mode)
    projected = multi_mode_product(rhs.core, grams, skip=mode)
    small = unfold(projected, mode) @ pinv
    u = sol.factors[mode]
    uf = rhs.factors[mode]
    perp = uf - u @ (u.T @ uf)
    return perp @ small


def galerkin_rhs(state, rhs: TuckerTensor):
    sol = _solution(state)
    grams = _grams(sol, rhs)
    ds = multi_mode_product(rhs.core, grams)
    du = [factor_rhs(sol, rhs, k, grams) for k in range(sol.ndim)]
    return ds, du


def dlra_reference_rhs(state, dense_f: np.ndarray):
    """Dense evaluation of the Galerkin equations; a validation oracle only."""
    sol = _solution(state)
    f = np.asarray(dense_f, dtype=float)
    if f.shape != sol.shape:
        raise ValueError(f"dense rhs has shape {f.shape}, solution has {sol.shape}")
    ts = [u.T for u in sol.factors]
    ds = multi_mode_product(f, ts)
    du = []
    for k, u in enumerate(sol.factors):
        proj = unfold(multi_mode_product(f, ts, skip=k), k)
        proj = proj - u @ (u.T @ proj)
        du.append(proj @ _core_pinv(sol.core, k))
    return ds, du


# -- time stepping -----------------------------------------------------------

def _pad_guides(bases, counts) -> tuple:
    out = []
    for b, c in zip(bases, counts):
        if b.shape[1] < c:
            b = _complete_basis(b, c - b.shape[1])
        out.append(b)
    return tuple(out)


def initial_state(evaluator: Evaluator, solution: TuckerTensor, cfg: IntegratorConfig,
                  t0: float = 0.0, seed=0) -> DlraState:
    """Warm-start guides from a guide-free cross approximation of ``F(t0, V0)``."""
    cfg = cfg.for_ndim(solution.ndim)
    if tuple(solution.multirank) != cfg.rank:
        raise ConfigError(f"solution multirank {solution.multirank} differs from configured {cfg.rank}")
    oracle = evaluator(t0, solution)
    res = deim_fs_iterative(oracle, cfg.cross_config(), seed=seed)
    return DlraState(t0, solution, res.cross.fiber_bases, cfg.rhs_rank, res.cross.spectrum,
                     oracle.entries)


def _max_rhs_rank(cfg, shape, k) -> int:
    cap = shape[k] - cfg.oversampling
    if cfg.max_rhs_rank is not None:
        cap = min(cap, cfg.max_rhs_rank)
    return max(cap, 1)


def step_rk4(state: DlraState, evaluator: Evaluator, cfg: IntegratorConfig, dt: float | None = None) -> DlraState:
    """One classical RK4 step of the cross-approximated Galerkin system.

    Every stage samples the right-hand side afresh with DEIM-FS; the guides are
    the newest fiber bases (or the previous step's with ``stage_refresh`` off).
    After the step the factors are re-orthonormalized and the rhs rank is
    adapted once from the last stage's core spectrum.
    """
    dt = cfg.dt if dt is None else dt
    sol = state.solution
    cfg = cfg.for_ndim(sol.ndim)
    d = sol.ndim
    ccfg = cfg.cross_config(state.rhs_rank)
    guides = _pad_guides(state.rhs_warm_start, ccfg.fiber_counts)
    entries = 0
    last = None

    def stage(t, core, factors):
        nonlocal guides, entries, last
        tt = TuckerTensor(core, tuple(factors))
        oracle = evaluator(t, tt)
        cross = deim_fs(oracle, guides, ccfg, keep_fibers=False)
        entries += cross.entries
        last = cross
        if cfg.stage_refresh:
            guides = cross.fiber_bases
        return galerkin_rhs(tt, cross.tucker)

    s0, u0 = sol.core, list(sol.factors)
    k1 = stage(state.t, s0, u0)
    k2 = stage(state.t + dt / 2, s0 + dt / 2 * k1[0], [u + dt / 2 * du for u, du in zip(u0, k1[1])])
    k3 = stage(state.t + dt / 2, s0 + dt / 2 * k2[0], [u + dt / 2 * du for u, du in zip(u0, k2[1])])
    k4 = stage(state.t + dt, s0 + dt * k3[0], [u + dt * du for u, du in zip(u0, k3[1])])
    w = dt / 6
    core = s0 + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    factors = [u0[k] + w * (k1[1][k] + 2 * k2[1][k] + 2 * k3[1][k] + k4[1][k]) for k in range(d)]
    new = TuckerTensor(core, tuple(factors))
    if cfg.reorthonormalize:
        new = orthonormalize(new)

    rhs_rank = state.rhs_rank
    if cfg.adaptive:
        rhs_rank = tuple(adapt_rank(r, error_proxy(last.spectrum, k), cfg.thresholds,
                                    _max_rhs_rank(cfg, sol.shape, k))
                         for k, r in enumerate(state.rhs_rank))
    return DlraState(state.t + dt, new, last.fiber_bases, rhs_rank, last.spectrum,
                     state.entries + entries, state.steps + 1)


@dataclass
class Diagnostics:
    t: float
    rhs_rank: tuple
    singular_values: np.ndarray
    entries: int
    rel_error: float = float("nan")
    extra: dict = field(default_factory=dict)


def n_steps(t0: float, t_end: float, dt: float) -> int:
    n = int(round((t_end - t0) / dt))
    if n < 0 or not np.isclose(t0 + n * dt, t_end, rtol=0, atol=1e-9 * max(1.0, abs(t_end))):
        raise ConfigError(f"interval [{t0}, {t_end}] is not a whole number of steps of {dt}")
    return n


def integrate(state: DlraState, evaluator: Evaluator, cfg: IntegratorConfig,
              probes: Sequence[float] = (), diagnose: Callable | None = None) -> tuple:
    """Advance to ``cfg.t_end``; record diagnostics at the start and at ``probes``.

    ``diagnose(state) -> dict`` may add model-specific quantities; a
    ``"rel_error"`` key fills the error column.  Probe times are rounded to
    the nearest step.
    """
    steps = n_steps(state.t, cfg.t_end, cfg.dt)
    probe_steps = {int(round((p - state.t) / cfg.dt)) for p in probes}
    rows = [_diagnose(state, diagnose)]
    for i in range(1, steps + 1):
        state = step_rk4(state, evaluator, cfg)
        if i in probe_steps:
            rows.append(_diagnose(state, diagnose))
    return state, rows


def _diagnose(state: DlraState, diagnose) -> Diagnostics:
    sv = np.linalg.svd(unfold(state.solution.core, 0), compute_uv=False)
    extra = dict(diagnose(state)) if diagnose is not None else {}
    rel = float(extra.pop("rel_error", float("nan")))
    return Diagnostics(state.t, tuple(state.rhs_rank), sv, state.entries, rel, extra)
