"""Experiment drivers behind the command line: configs, runs and CSV output."""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .cross import (CrossConfig, RankDeficientWarning, absolute_error, deim_fs, deim_fs_iterative,
                    fstd, hosvd, unfolding_bases)
from .dlra import IntegratorConfig, initial_state, integrate, n_steps
from .errors import ConfigError
from .fom import DEFAULT_BUDGET, check_budget, rk4_dense, run_fom
from .models import (Advection, FokkerPlanck, FokkerPlanckParams, LinearDecay, advection_grids,
                     fp_grids, fp_moments_analytic, fp_moments_numeric, marginal_x3x4,
                     toy_tensor_oracle)

EXPERIMENTS = ("cross-compare", "fokker-planck", "advection", "fom", "toy-f1", "toy-f2")
METHODS = ("deim-fs", "deim-fs-iterative", "fstd", "hosvd")
MAX_ADVECTION_N = 41

_DEFAULTS = {
    "fokker-planck": dict(n=31, rank=5, rhs_rank=5, t_end=8.0),
    "advection": dict(n=33, rank=6, rhs_rank=6, t_end=4.0, thresholds=(1e-5, 1e-4)),
    "fom": dict(n=33, t_end=4.0),
    "cross-compare": dict(ranks=tuple(range(2, 17))),
    "toy-f1": dict(ranks=tuple(range(2, 17)), tensors=("f1",)),
    "toy-f2": dict(ranks=tuple(range(2, 17)), tensors=("f2:3", "f2:5")),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment needs; ``None`` fields take per-experiment defaults."""

    experiment: str
    n: int | None = None
    d: int = 4
    rank: int | None = None
    rhs_rank: int | None = None
    oversampling: int = 2
    thresholds: tuple | None = None
    dt: float = 2e-3
    t_end: float | None = None
    seed: int = 0
    out_dir: str = "results"
    ranks: tuple = ()
    threshold_sets: tuple = ()
    dts: tuple = ()
    tensors: tuple = ("f1", "f2:3", "f2:5")
    methods: tuple = METHODS
    n_seeds: int = 1
    probe_interval: float = 0.1
    marginal_times: tuple = ()
    fom_budget: int = DEFAULT_BUDGET
    allow_large: bool = False
    model: str = "advection"
    alpha: float = 0.75

    def resolved(self) -> "ExperimentConfig":
        """Fill defaults and validate; raises :class:`ConfigError`."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        key = self.model if self.experiment == "fom" and self.model in _DEFAULTS else self.experiment
        updates = {}
        for name, value in _DEFAULTS.get(key, {}).items():
            current = getattr(self, name)
            if current is None or (name in ("ranks",) and current == ()) or (
                    name == "tensors" and self.experiment.startswith("toy")):
                updates[name] = value
        cfg = replace(self, **updates)
        cfg._validate()
        return cfg

    def _validate(self):
        if self.oversampling < 0:
            raise ConfigError(f"fiber count r' = r + oversampling must be at least r (oversampling={self.oversampling})")
        for pair in ([self.thresholds] if self.thresholds is not None else []) + list(self.threshold_sets):
            if len(pair) != 2 or not 0 < pair[0] < pair[1]:
                raise ConfigError(f"adaptivity thresholds need 0 < eps_l < eps_u, got {pair}")
        for dt in (self.dt,) + tuple(self.dts):
            if not dt > 0:
                raise ConfigError(f"time step must be positive, got {dt}")
        if self.t_end is not None and self.t_end < 0:
            raise ConfigError(f"t_end must be nonnegative, got {self.t_end}")
        for name in ("n", "rank", "rhs_rank"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.d < 1 or self.n_seeds < 1 or self.fom_budget < 1:
            raise ConfigError("d, n_seeds and fom_budget must be positive")
        if not self.probe_interval > 0:
            raise ConfigError(f"probe_interval must be positive, got {self.probe_interval}")
        if any(r < 1 for r in self.ranks):
            raise ConfigError("sweep ranks must be positive")
        if self.n is not None:
            for r in (self.rank, self.rhs_rank) + tuple(self.ranks):
                if r is not None and self.experiment in ("fokker-planck", "advection") and r > self.n:
                    raise ConfigError(f"rank {r} exceeds the grid size {self.n}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        if self.experiment == "advection" and self.n > MAX_ADVECTION_N and not self.allow_large:
            raise ConfigError(f"advection at N={self.n} needs a dense reference beyond desk scale; "
                              "set allow_large=true to proceed")
        if self.experiment == "fom" and self.model not in ("advection", "fokker-planck", "decay"):
            raise ConfigError(f"unknown fom model {self.model!r}")


# -- config parsing ------------------------------------------------------------

def _parse_value(name: str, raw: str, current):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if name in ("thresholds",):
        return tuple(float(x) for x in raw.split(","))
    if name == "threshold_sets":
        return tuple(tuple(float(x) for x in pair.split(":")) for pair in raw.split(";") if pair)
    if name in ("ranks",):
        return tuple(int(x) for x in raw.split(","))
    if name in ("dts", "marginal_times"):
        return tuple(float(x) for x in raw.split(","))
    if name in ("tensors", "methods"):
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if name == "allow_large":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"allow_large expects a boolean, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if name in ("experiment", "out_dir", "model"):
        return raw
    if name in ("n", "d", "rank", "rhs_rank", "oversampling", "seed", "n_seeds", "fom_budget"):
        return int(float(raw)) if float(raw).is_integer() else _bad(name, raw)
    return float(raw)


def _bad(name, raw):
    raise ConfigError(f"{name} expects an integer, got {raw!r}")


def parse_assignments(lines, base: dict | None = None) -> dict:
    known = {f.name for f in fields(ExperimentConfig)}
    out = dict(base or {})
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = _parse_value(key, value, None)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return out


def load_config(experiment: str, path=None, overrides=(), **extra) -> ExperimentConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        values = parse_assignments(text)
    values = parse_assignments(overrides, values)
    values.update({k: v for k, v in extra.items() if v is not None})
    values["experiment"] = experiment
    return ExperimentConfig(**values).resolved()


# -- output helpers ------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_metadata(out_dir: Path, cfg: ExperimentConfig, extra: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"config": asdict(cfg), **extra}
    path = out_dir / "metadata.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def timeseries_header(d: int, r: int) -> list:
    return (["t", "rel_error"] + [f"rF_{k + 1}" for k in range(d)]
            + [f"sv_{k + 1}" for k in range(r)] + ["entries_touched"])


def timeseries_rows(diags, d: int, r: int) -> list:
    rows = []
    for g in diags:
        sv = list(g.singular_values[:r]) + [0.0] * max(0, r - len(g.singular_values))
        rows.append([round(g.t, 12), g.rel_error] + list(g.rhs_rank) + sv + [g.entries])
    return rows


# -- cross comparison ------------------------------------------------------------

def _parse_tensor(spec: str):
    if spec == "f1":
        return "f1", None
    if spec.startswith("f2"):
        b = float(spec.split(":", 1)[1]) if ":" in spec else 3.0
        return "f2", b
    raise ConfigError(f"unknown toy tensor {spec!r} (use f1 or f2:<b>)")


def _tensor_label(spec: str) -> str:
    which, b = _parse_tensor(spec)
    return which if b is None else f"{which}_b{b:g}"


def cross_compare_tensor(spec: str, ranks, methods=METHODS, seeds=(0,), oversampling=2,
                         sizes=None) -> list:
    """Rows ``(rank, method, seed, abs_error, entries_touched)`` for one toy tensor."""
    which, b = _parse_tensor(spec)
    grids = None
    if sizes is not None:
        from .models import toy_grids
        grids = toy_grids(which, sizes)
    oracle = toy_tensor_oracle(which, b=b or 3.0, grids=grids)
    truth = oracle.dense()
    full = int(truth.size)
    rmax = max(ranks) + oversampling
    bases = unfolding_bases(truth, cols=[min(rmax, n) for n in truth.shape])
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        for r in ranks:
            cfg = CrossConfig((r,) * truth.ndim, oversampling)
            for method in methods:
                if method == "hosvd":
                    tt = hosvd(truth, r, bases=bases)
                    rows.append((r, method, -1, absolute_error(tt, truth), full))
                elif method == "deim-fs":
                    oracle.reset_counters()
                    res = deim_fs(oracle, bases, cfg, keep_fibers=False)
                    rows.append((r, method, -1, absolute_error(res.tucker, truth), oracle.entries))
                elif method == "deim-fs-iterative":
                    for s in seeds:
                        oracle.reset_counters()
                        res = deim_fs_iterative(oracle, cfg, seed=s)
                        rows.append((r, method, s, absolute_error(res.tucker, truth), oracle.entries))
                elif method == "fstd":
                    for s in seeds:
                        oracle.reset_counters()
                        # same-rank comparison: r fibers give an FSTD model of rank r
                        res = fstd(oracle, cfg.rank, seed=s)
                        rows.append((r, method, s, absolute_error(res.tucker, truth), oracle.entries))
    return rows


CROSS_HEADER = ["rank", "method", "seed", "abs_error", "entries_touched"]


def run_cross_compare(cfg: ExperimentConfig) -> dict:
    cfg = cfg.resolved()
    out = Path(cfg.out_dir)
    seeds = tuple(range(cfg.seed, cfg.seed + cfg.n_seeds))
    files, t0 = {}, time.perf_counter()
    for spec in cfg.tensors:
        rows = cross_compare_tensor(spec, cfg.ranks, cfg.methods, seeds, cfg.oversampling)
        files[spec] = write_csv(out / f"cross_compare_{_tensor_label(spec)}.csv", CROSS_HEADER, rows)
    write_metadata(out, cfg, {"files": {k: str(v) for k, v in files.items()},
                              "wall_clock_s": time.perf_counter() - t0})
    return files


# -- Fokker-Planck -----------------------------------------------------------------

def _probe_times(t_end: float, interval: float) -> np.ndarray:
    if t_end <= 0:
        return np.array([])
    k = int(np.floor(t_end / interval + 1e-9))
    pts = list(np.arange(1, k + 1) * interval)
    if not pts or not np.isclose(pts[-1], t_end):
        pts.append(t_end)
    return np.array(pts)


def fokker_planck_model(cfg: ExperimentConfig) -> FokkerPlanck:
    params = FokkerPlanckParams(alpha=cfg.alpha)
    return FokkerPlanck(params, fp_grids(cfg.n, d=4))


def fokker_planck_run(cfg: ExperimentConfig, probes=None, with_error=True):
    """Integrate the FP problem; returns ``(final state, diagnostics, model)``."""
    model = fokker_planck_model(cfg)
    icfg = IntegratorConfig(cfg.dt, cfg.t_end, cfg.rank, cfg.rhs_rank, cfg.oversampling, cfg.thresholds)
    state = initial_state(model.oracle, model.initial_tucker(cfg.rank), icfg, seed=cfg.seed)
    probes = _probe_times(cfg.t_end, cfg.probe_interval) if probes is None else probes

    def diagnose(st):
        if not with_error:
            return {}
        ref = model.analytic(st.t)
        return {"rel_error": absolute_error(st.solution, ref) / np.linalg.norm(ref)}

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        state, diags = integrate(state, model.oracle, icfg, probes, diagnose)
    return state, diags, model


def run_fokker_planck(cfg: ExperimentConfig) -> dict:
    cfg = cfg.resolved()
    out = Path(cfg.out_dir)
    t0 = time.perf_counter()
    state, diags, model = fokker_planck_run(cfg)
    files = {"timeseries": write_csv(out / "fokker_planck_timeseries.csv", timeseries_header(4, cfg.rank),
                                     timeseries_rows(diags, 4, cfg.rank))}
    mean, cov = fp_moments_numeric(state.solution, model.grids)
    mean_a, cov_a = fp_moments_analytic(model.params, state.t)
    rows = [("mean", i, -1, mean[i], mean_a[i]) for i in range(4)]
    rows += [("cov", i, j, cov[i, j], cov_a[i, j]) for i in range(4) for j in range(4)]
    files["moments"] = write_csv(out / "fokker_planck_moments.csv",
                                 ["moment", "i", "j", "numeric", "analytic"], rows)
    write_metadata(out, cfg, {"files": {k: str(v) for k, v in files.items()},
                              "wall_clock_s": time.perf_counter() - t0})
    return files


# -- advection ------------------------------------------------------------------------

@dataclass
class AdvectionRun:
    rank: int
    thresholds: tuple | None
    dt: float
    diagnostics: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        th = "fixed" if self.thresholds is None else f"eu{self.thresholds[1]:.0e}"
        return f"r{self.rank}_{th}_dt{self.dt:g}"


def advection_study(runs, n: int = 33, t_end: float = 4.0, probe_interval: float = 0.1,
                    oversampling: int = 2, fom_dt: float = 2e-3, seed: int = 0, budget=DEFAULT_BUDGET,
                    keep_times=()) -> list:
    """Run DLRA for every ``(rank, thresholds, dt)`` and score it against one dense FOM.

    Solutions are kept in Tucker form at probe times; the FOM is then integrated
    once and compared on the fly so that no dense trajectory is stored.
    """
    model = Advection(grids=advection_grids(n))
    check_budget(model.shape, budget)
    probes = _probe_times(t_end, probe_interval)
    keep = {round(float(t), 9) for t in keep_times}
    results = []
    for rank, thresholds, dt in runs:
        run = AdvectionRun(rank, thresholds, dt)
        icfg = IntegratorConfig(dt, t_end, rank, rank, oversampling, thresholds)
        state = initial_state(model.oracle, model.initial_tucker(rank), icfg, seed=seed)
        sols = {}

        def grab(st, sols=sols):
            sols[round(st.t, 9)] = st.solution
            return {}

        grab(state)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientWarning)
            _, diags = integrate(state, model.oracle, icfg, probes, grab)
        run.diagnostics = diags
        run.snapshots = sols
        results.append(run)

    errors = {id(run): {} for run in results}

    def score(t, v):
        key = round(t, 9)
        norm = None
        for run in results:
            if key in run.snapshots:
                norm = np.linalg.norm(v) if norm is None else norm
                errors[id(run)][key] = absolute_error(run.snapshots[key], v) / norm

    v0 = model.initial_dense()
    score(0.0, v0)
    rk4_dense(model.dense_rhs, v0, fom_dt, t_end, budget=budget, callback=score)
    for run in results:
        for g in run.diagnostics:
            g.rel_error = errors[id(run)].get(round(g.t, 9), float("nan"))
        run.snapshots = {t: s for t, s in run.snapshots.items() if t in keep}
    return results


def run_advection(cfg: ExperimentConfig) -> dict:
    cfg = cfg.resolved()
    out = Path(cfg.out_dir)
    t0 = time.perf_counter()
    ranks = cfg.ranks or (cfg.rank,)
    ths = cfg.threshold_sets or (cfg.thresholds,)
    dts = cfg.dts or (cfg.dt,)
    for dt in dts:
        try:
            n_steps(0.0, cfg.t_end, dt)
            n_steps(0.0, cfg.probe_interval, dt)
        except ConfigError as exc:
            raise ConfigError(f"dt={dt}: {exc}") from None
    runs = [(r, th, dt) for r in ranks for th in ths for dt in dts]
    results = advection_study(runs, cfg.n, cfg.t_end, cfg.probe_interval, cfg.oversampling,
                              seed=cfg.seed, budget=cfg.fom_budget, keep_times=cfg.marginal_times)
    files = {}
    grids = advection_grids(cfg.n)
    for run in results:
        files[run.label] = write_csv(out / f"advection_{run.label}.csv", timeseries_header(4, run.rank),
                                     timeseries_rows(run.diagnostics, 4, run.rank))
        for t, sol in sorted(run.snapshots.items()):
            m = marginal_x3x4(sol, grids)
            rows = [(grids[2].points[i], grids[3].points[j], m[i, j])
                    for i in range(m.shape[0]) for j in range(m.shape[1])]
            files[f"{run.label}_marginal_{t:g}"] = write_csv(
                out / f"marginal_{run.label}_t{t:g}.csv", ["x3", "x4", "value"], rows)
    write_metadata(out, cfg, {"files": {k: str(v) for k, v in files.items()},
                              "wall_clock_s": time.perf_counter() - t0})
    return files


# -- dense reference ------------------------------------------------------------------

def fom_model(cfg: ExperimentConfig):
    if cfg.model == "advection":
        return Advection(grids=advection_grids(cfg.n))
    if cfg.model == "fokker-planck":
        return fokker_planck_model(cfg)
    from .grids import Grid1D
    return LinearDecay([Grid1D.uniform(-3.0, 3.0, cfg.n, "dirichlet") for _ in range(cfg.d)])


def run_fom_experiment(cfg: ExperimentConfig) -> dict:
    cfg = cfg.resolved()
    out = Path(cfg.out_dir)
    model = fom_model(cfg)
    check_budget(model.shape, cfg.fom_budget)
    t0 = time.perf_counter()
    probes = np.concatenate([[0.0], _probe_times(cfg.t_end, cfg.probe_interval)])
    snaps = run_fom(model, cfg.dt, cfg.t_end, probes, budget=cfg.fom_budget)
    times = sorted(snaps)
    out.mkdir(parents=True, exist_ok=True)
    traj = out / f"fom_{cfg.model}.npz"
    np.savez_compressed(traj, times=np.array(times), snapshots=np.stack([snaps[t] for t in times]))
    rows = [(t, float(np.linalg.norm(snaps[t]))) for t in times]
    files = {"trajectory": traj, "norms": write_csv(out / f"fom_{cfg.model}.csv", ["t", "norm"], rows)}
    write_metadata(out, cfg, {"files": {k: str(v) for k, v in files.items()},
                              "wall_clock_s": time.perf_counter() - t0})
    return files


RUNNERS = {
    "cross-compare": run_cross_compare,
    "toy-f1": run_cross_compare,
    "toy-f2": run_cross_compare,
    "fokker-planck": run_fokker_planck,
    "advection": run_advection,
    "fom": run_fom_experiment,
}
