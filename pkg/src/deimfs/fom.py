"""Dense full-order reference integration (classical RK4)."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .dlra import n_steps

DEFAULT_BUDGET = 3_000_000


class BudgetExceededError(MemoryError):
    pass


def check_budget(shape, budget: int = DEFAULT_BUDGET) -> int:
    size = int(np.prod(shape, dtype=np.int64))
    if size > budget:
        raise BudgetExceededError(
            f"dense state of shape {tuple(shape)} has {size:,} entries, above the budget of {budget:,}; "
            "lower N or raise the budget explicitly")
    return size


def rk4_dense(rhs: Callable[[float, np.ndarray], np.ndarray], v0: np.ndarray, dt: float, t_end: float,
              t0: float = 0.0, probes: Sequence[float] = (), budget: int = DEFAULT_BUDGET,
              callback: Callable | None = None) -> dict:
    """Integrate ``dv/dt = rhs(t, v)``; returns ``{t: copy of v}`` at ``t0`` and the probe times.

    Probes are snapped to the nearest step and keys rounded to 9 decimals; with
    no probes only the final state is kept.  ``callback(t, v)`` runs after
    every step.
    """
    v = np.array(v0, dtype=float)
    check_budget(v.shape, budget)
    steps = n_steps(t0, t_end, dt)
    want = {int(round((p - t0) / dt)) for p in probes} if len(probes) else {steps}
    snaps = {round(t0, 9): v.copy()} if 0 in want else {}
    t = t0
    for i in range(1, steps + 1):
        k1 = rhs(t, v)
        k2 = rhs(t + dt / 2, v + dt / 2 * k1)
        k3 = rhs(t + dt / 2, v + dt / 2 * k2)
        k4 = rhs(t + dt, v + dt * k3)
        v += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + i * dt
        if callback is not None:
            callback(t, v)
        if i in want:
            snaps[round(t, 9)] = v.copy()
    return snaps


def run_fom(model, dt: float, t_end: float, probes: Sequence[float] = (), budget: int = DEFAULT_BUDGET,
            v0: np.ndarray | None = None) -> dict:
    """Dense RK4 reference trajectory of a model's discretized operator."""
    check_budget(model.shape, budget)
    v0 = model.initial_dense() if v0 is None else v0
    return rk4_dense(model.dense_rhs, v0, dt, t_end, probes=probes, budget=budget)
