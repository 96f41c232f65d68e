import csv

import numpy as np
import pytest

from deimfs.cross import absolute_error
from deimfs.errors import ConfigError
from deimfs.models import Advection, advection_grids
from deimfs.experiments import (CROSS_HEADER, ExperimentConfig, advection_study, cross_compare_tensor,
                                fokker_planck_run, load_config, parse_assignments, run_advection,
                                run_cross_compare, run_fokker_planck, run_fom_experiment,
                                timeseries_header)


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# -- configuration -------------------------------------------------------------------

def test_defaults_fill_per_experiment():
    fp = ExperimentConfig("fokker-planck").resolved()
    assert (fp.n, fp.rank, fp.rhs_rank, fp.t_end, fp.dt) == (31, 5, 5, 8.0, 2e-3)
    adv = ExperimentConfig("advection").resolved()
    assert (adv.n, adv.rank, adv.t_end, adv.thresholds) == (33, 6, 4.0, (1e-5, 1e-4))


@pytest.mark.parametrize("kwargs, msg", [
    (dict(oversampling=-1), "r' = r \\+ oversampling must be at least r"),
    (dict(thresholds=(1e-4, 1e-4)), "0 < eps_l < eps_u"),
    (dict(dt=0.0), "time step must be positive"),
    (dict(dt=-1e-3), "time step must be positive"),
    (dict(n=45), "allow_large"),
    (dict(rank=0), "rank must be positive"),
])
def test_validation_messages(kwargs, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig("advection", **kwargs).resolved()


def test_validation_messages_are_distinct():
    msgs = set()
    for kw in (dict(oversampling=-1), dict(thresholds=(2.0, 1.0)), dict(dt=0.0)):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig("advection", **kw).resolved()
        msgs.add(str(exc.value).split()[0])
    assert len(msgs) == 3


def test_large_advection_opt_in():
    assert ExperimentConfig("advection", n=85, allow_large=True).resolved().n == 85


def test_unknown_experiment():
    with pytest.raises(ConfigError, match="unknown experiment"):
        ExperimentConfig("nope").resolved()


def test_parse_assignments():
    vals = parse_assignments(["# comment", "n = 11", "thresholds=1e-5,1e-4  # trailing",
                              "ranks=2,3", "allow-large=yes", "threshold_sets=1e-3:1e-2;1e-5:1e-4"])
    assert vals == {"n": 11, "thresholds": (1e-5, 1e-4), "ranks": (2, 3), "allow_large": True,
                    "threshold_sets": ((1e-3, 1e-2), (1e-5, 1e-4))}
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_assignments(["colour=red"])
    with pytest.raises(ConfigError, match="key=value"):
        parse_assignments(["n 11"])
    with pytest.raises(ConfigError, match="integer"):
        parse_assignments(["n=1.5"])


def test_load_config_layers(tmp_path):
    path = tmp_path / "fp.cfg"
    path.write_text("n=11\nrank=3\nrhs_rank=3\nseed=4\n")
    cfg = load_config("fokker-planck", path, ["rank=2"], seed=9, out_dir=str(tmp_path))
    assert (cfg.n, cfg.rank, cfg.seed, cfg.out_dir) == (11, 2, 9, str(tmp_path))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("fokker-planck", tmp_path / "missing.cfg")


# -- cross comparison --------------------------------------------------------------------

def test_cross_compare_rows_small():
    rows = cross_compare_tensor("f1", [2, 4], seeds=(0, 1), sizes=(20, 20, 20))
    methods = [r[1] for r in rows]
    assert methods.count("hosvd") == 2 and methods.count("deim-fs") == 2
    assert methods.count("fstd") == 4 and methods.count("deim-fs-iterative") == 4
    for rank, method, seed, err, entries in rows:
        assert err >= 0 and entries > 0
        if method == "hosvd":
            assert entries == 20 ** 3
        if method == "deim-fs":
            assert entries == 3 * 20 * (rank + 2) ** 2


def test_cross_compare_deim_tracks_hosvd_on_f2():
    rows = cross_compare_tensor("f2:3", [2, 4, 6], methods=("deim-fs", "hosvd"), sizes=(30, 30, 30))
    err = {(r[0], r[1]): r[3] for r in rows}
    for r in (2, 4, 6):
        assert err[(r, "deim-fs")] < 10 * err[(r, "hosvd")]
    assert err[(6, "deim-fs")] < err[(2, "deim-fs")]


def test_unknown_tensor():
    with pytest.raises(ConfigError):
        cross_compare_tensor("f3", [2])


def test_run_cross_compare_csv_and_determinism(tmp_path):
    files = []
    for sub in ("a", "b"):
        cfg = ExperimentConfig("cross-compare", out_dir=str(tmp_path / sub), ranks=(2, 3),
                               tensors=("f2:5",), methods=("deim-fs-iterative", "fstd"), n_seeds=2, seed=3)
        files.append(run_cross_compare(cfg)["f2:5"])
    assert files[0].name == "cross_compare_f2_b5.csv"
    assert files[0].read_bytes() == files[1].read_bytes()
    rows = read(files[0])
    assert rows[0] == CROSS_HEADER
    assert len(rows) == 1 + 2 * 2 * 2
    assert (tmp_path / "a" / "metadata.json").exists()


# -- Fokker-Planck -------------------------------------------------------------------------

def test_fokker_planck_small_run(tmp_path):
    cfg = ExperimentConfig("fokker-planck", n=11, rank=3, rhs_rank=3, t_end=0.02, dt=5e-3,
                           probe_interval=0.01, out_dir=str(tmp_path))
    files = run_fokker_planck(cfg)
    rows = read(files["timeseries"])
    assert rows[0] == timeseries_header(4, 3)
    assert rows[0][:6] == ["t", "rel_error", "rF_1", "rF_2", "rF_3", "rF_4"]
    assert [float(r[0]) for r in rows[1:]] == pytest.approx([0.0, 0.01, 0.02])
    for r in rows[1:]:
        sv = [float(x) for x in r[6:9]]
        assert float(r[1]) >= 0 and sv == sorted(sv, reverse=True)
    mom = read(files["moments"])
    assert mom[0] == ["moment", "i", "j", "numeric", "analytic"] and len(mom) == 1 + 4 + 16


def test_fokker_planck_zero_horizon():
    cfg = ExperimentConfig("fokker-planck", n=11, rank=3, rhs_rank=3, t_end=0.0).resolved()
    state, diags, _ = fokker_planck_run(cfg)
    assert state.t == 0.0 and [g.t for g in diags] == [0.0]


def test_fokker_planck_lower_rank_is_worse():
    errs = {}
    for r in (3, 5):
        cfg = ExperimentConfig("fokker-planck", rank=r, rhs_rank=r, t_end=0.5, dt=5e-3).resolved()
        _, diags, _ = fokker_planck_run(cfg, probes=[0.5])
        errs[r] = diags[-1].rel_error
    assert errs[3] > errs[5]


# -- advection -------------------------------------------------------------------------------

def test_advection_small_run(tmp_path):
    cfg = ExperimentConfig("advection", n=9, rank=3, rhs_rank=3, t_end=0.02, dt=5e-3,
                           probe_interval=0.01, thresholds=(1e-4, 1e-2), marginal_times=(0.02,),
                           out_dir=str(tmp_path))
    files = run_advection(cfg)
    ts = read(files["r3_eu1e-02_dt0.005"])
    assert ts[0] == timeseries_header(4, 3)
    errs = [float(r[1]) for r in ts[1:]]
    model = Advection(grids=advection_grids(9))
    v0 = model.initial_dense()
    trunc = absolute_error(model.initial_tucker(3), v0) / np.linalg.norm(v0)
    assert len(errs) == 3
    assert errs[0] == pytest.approx(trunc, rel=1e-6)
    assert all(abs(e - trunc) < 0.05 * trunc for e in errs)
    marg = read(files["r3_eu1e-02_dt0.005_marginal_0.02"])
    assert marg[0] == ["x3", "x4", "value"] and len(marg) == 1 + 81
    assert all(float(r[2]) >= 0 for r in marg[1:])


def test_advection_dt_must_divide_horizon(tmp_path):
    cfg = ExperimentConfig("advection", n=9, rank=3, rhs_rank=3, t_end=0.02, dt=3e-3,
                           out_dir=str(tmp_path))
    with pytest.raises(ConfigError, match="dt="):
        run_advection(cfg)


def test_advection_study_scores_every_probe():
    runs = advection_study([(2, None, 1e-2), (3, None, 1e-2)], n=9, t_end=0.05, probe_interval=0.01,
                           fom_dt=1e-2)
    for run in runs:
        assert len(run.diagnostics) == 6
        assert run.diagnostics[0].rel_error < 0.5
        assert all(np.isfinite(g.rel_error) for g in run.diagnostics)
    assert runs[1].diagnostics[-1].rel_error < runs[0].diagnostics[-1].rel_error


# -- dense reference ----------------------------------------------------------------------------

def test_fom_experiment(tmp_path):
    cfg = ExperimentConfig("fom", model="decay", n=6, d=3, t_end=0.2, dt=0.01, probe_interval=0.1,
                           out_dir=str(tmp_path))
    files = run_fom_experiment(cfg)
    with np.load(files["trajectory"]) as data:
        assert data["times"].tolist() == pytest.approx([0.0, 0.1, 0.2])
        v = data["snapshots"]
    np.testing.assert_allclose(v[2], np.exp(-0.2) * v[0], rtol=1e-10)
    assert read(files["norms"])[0] == ["t", "norm"]


def test_fom_budget_from_config(tmp_path):
    from deimfs.fom import BudgetExceededError
    cfg = ExperimentConfig("fom", n=33, fom_budget=1000, out_dir=str(tmp_path))
    with pytest.raises(BudgetExceededError):
        run_fom_experiment(cfg)
