import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deimfs.cross import (CrossConfig, RankDeficientWarning, absolute_error, adapt_rank,
                          core_from_intersection, core_spectrum, deim_fs, deim_fs_iterative,
                          error_proxy, factors_from_fibers, fstd, hosvd, relative_error,
                          sample_fibers, unfolding_bases, SingularSpectrum)
from deimfs.deim import deim_indices
from deimfs.errors import IllConditionedIntersectionError
from deimfs.models import toy_tensor_oracle
from deimfs.oracles import DenseOracle
from deimfs.tensor import TuckerTensor, subtensor, truncated_svd, unfold


def random_tucker(rng, shape, ranks):
    fs = tuple(np.linalg.qr(rng.standard_normal((n, r)))[0] for n, r in zip(shape, ranks))
    return TuckerTensor(rng.standard_normal(ranks), fs)


@pytest.fixture(scope="module")
def f1():
    oracle = toy_tensor_oracle("f1")
    truth = oracle.dense()
    return oracle, truth, unfolding_bases(truth, cols=20)


# -- configuration ---------------------------------------------------------------

def test_config_defaults_and_counts():
    cfg = CrossConfig((3, 4, 5))
    assert cfg.fiber_counts == (5, 6, 7)
    assert CrossConfig(3).rank == (3,)
    assert CrossConfig((2, 2), oversampling=(0, 1)).fiber_counts == (2, 3)


@pytest.mark.parametrize("kwargs", [dict(rank=(0, 2)), dict(rank=(2, 2), oversampling=-1),
                                    dict(rank=(2, 2), thresholds=(1e-3, 1e-4)),
                                    dict(rank=(2, 2), max_iterations=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        CrossConfig(**kwargs)


# -- fiber sampling ------------------------------------------------------------------

def test_matrix_case_is_cur():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 9))
    s = sample_fibers(DenseOracle(a), indices=[np.array([1, 4]), np.array([0, 2, 7])])
    np.testing.assert_array_equal(s.fibers[0], a[:, [0, 2, 7]])
    np.testing.assert_array_equal(s.fibers[1], a[[1, 4], :].T)
    np.testing.assert_array_equal(s.intersection, a[np.ix_([1, 4], [0, 2, 7])])


def test_canonical_guides_give_their_indices():
    t = np.random.default_rng(1).standard_normal((6, 7, 8))
    guides = [np.eye(n)[:, [3, 1]] for n in t.shape]
    s = sample_fibers(DenseOracle(t), guides)
    for p in s.indices:
        assert list(p) == [3, 1]


def test_fiber_matrices_are_unfolded_subtensors():
    rng = np.random.default_rng(2)
    t = rng.standard_normal((7, 6, 5))
    guides = [np.linalg.qr(rng.standard_normal((n, 3)))[0] for n in t.shape]
    s = sample_fibers(DenseOracle(t), guides)
    for k in range(3):
        sel = [None if m == k else s.indices[m] for m in range(3)]
        np.testing.assert_array_equal(s.fibers[k], unfold(subtensor(t, sel), k))
        # W's entries reappear in every C_k
        wk = unfold(s.intersection, k)
        np.testing.assert_array_equal(s.fibers[k][s.indices[k]], wk)
    np.testing.assert_array_equal(s.intersection, subtensor(t, list(s.indices)))


def test_sampling_budget_distinct_entries():
    rng = np.random.default_rng(3)
    t = rng.standard_normal((10, 11, 12))
    oracle = DenseOracle(t, track_distinct=True)
    counts = (2, 2, 2)
    guides = [np.linalg.qr(rng.standard_normal((n, c)))[0] for n, c in zip(t.shape, counts)]
    sample_fibers(oracle, guides)
    budget = sum(n * np.prod([c for j, c in enumerate(counts) if j != i]) for i, n in enumerate(t.shape))
    assert oracle.distinct_entries() <= budget
    assert oracle.entries == budget


def test_sample_fibers_needs_guides_or_indices():
    with pytest.raises(ValueError):
        sample_fibers(DenseOracle(np.zeros((3, 3))))


# -- factors and core ----------------------------------------------------------------------

def test_factors_span_exact_low_rank_fibers():
    rng = np.random.default_rng(4)
    tt = random_tucker(rng, (15, 16, 17), (3, 2, 4))
    t = tt.full()
    s = sample_fibers(DenseOracle(t), indices=[np.arange(5), np.arange(4), np.arange(6)])
    factors = factors_from_fibers(s, (3, 2, 4))
    for u, c in zip(factors, s.fibers):
        assert np.linalg.norm(c - u @ (u.T @ c)) <= 1e-12 * np.linalg.norm(c)


def test_identical_columns_give_normalized_column():
    v = np.array([1.0, -2.0, 2.0])
    t = np.repeat(v[:, None], 4, axis=1)
    s = sample_fibers(DenseOracle(t), indices=[np.arange(2), np.arange(3)])
    u = factors_from_fibers(s, (1, 1))[0][:, 0]
    np.testing.assert_allclose(np.abs(u), np.abs(v) / 3.0, atol=1e-14)


def test_factors_match_truncated_svd():
    rng = np.random.default_rng(5)
    t = rng.standard_normal((9, 10, 11))
    s = sample_fibers(DenseOracle(t), indices=[np.arange(4)] * 3)
    for u, c in zip(factors_from_fibers(s, 3), s.fibers):
        ref = truncated_svd(c, 3)[0]
        np.testing.assert_allclose(u, ref, atol=1e-12)


def test_rank_deficient_fibers_warn():
    t = np.ones((5, 6, 7))
    s = sample_fibers(DenseOracle(t), indices=[np.arange(3)] * 3)
    with pytest.warns(RankDeficientWarning):
        factors_from_fibers(s, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_interpolation_when_counts_equal_rank(seed, r):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((10, 9, 8))
    guides = [np.linalg.qr(rng.standard_normal((n, r)))[0] for n in t.shape]
    res = deim_fs(DenseOracle(t), guides, CrossConfig((r,) * 3, oversampling=0))
    approx = res.tucker.full()
    np.testing.assert_allclose(subtensor(approx, list(res.samples.indices)), res.samples.intersection,
                               atol=1e-10 * max(1.0, np.abs(t).max()))


def test_zero_intersection_gives_zero_core():
    u = [np.linalg.qr(np.random.default_rng(6).standard_normal((8, 2)))[0] for _ in range(3)]
    core = core_from_intersection(np.zeros((4, 4, 4)), u, [np.arange(4)] * 3)
    assert np.all(core == 0)


def test_core_solves_least_squares():
    rng = np.random.default_rng(7)
    r, rp = (2, 3, 2), (4, 5, 4)
    factors = [np.linalg.qr(rng.standard_normal((10, k)))[0] for k in r]
    idx = [rng.choice(10, k, replace=False) for k in rp]
    w = rng.standard_normal(rp)
    core = core_from_intersection(w, factors, idx)
    # Kronecker system  K vec(core) = vec(W)  with the unfolding column order
    kron = np.ones((1, 1))
    for u, p in zip(factors, idx):
        kron = np.kron(u[p], kron)
    x = core.reshape(-1, order="F")
    b = w.reshape(-1, order="F")
    resid = kron @ x - b
    assert np.linalg.norm(kron.T @ resid) <= 1e-10 * np.linalg.norm(b)
    x_ref = np.linalg.lstsq(kron, b, rcond=None)[0]
    np.testing.assert_allclose(x, x_ref, atol=1e-10)


def test_ill_conditioned_intersection():
    u = [np.vstack([np.eye(2), np.zeros((3, 2))]) for _ in range(2)]
    with pytest.raises(IllConditionedIntersectionError):
        core_from_intersection(np.ones((2, 2)), u, [np.array([2, 3]), np.array([0, 1])])


# -- DEIM-FS ------------------------------------------------------------------------

def test_rank_one_separable():
    rng = np.random.default_rng(8)
    a, b, c = rng.standard_normal(10), rng.standard_normal(11), rng.standard_normal(12)
    t = np.einsum("i,j,k->ijk", a, b, c)
    res = deim_fs(DenseOracle(t), unfolding_bases(t, 3), CrossConfig((1, 1, 1)))
    assert relative_error(res.tucker, t) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 4]), st.integers(1, 4), st.integers(8, 25))
def test_exact_recovery_with_exact_guides(seed, d, r, n):
    rng = np.random.default_rng(seed)
    t = random_tucker(rng, (n,) * d, (r,) * d).full()
    cfg = CrossConfig((r,) * d)
    res = deim_fs(DenseOracle(t), unfolding_bases(t, cfg.fiber_counts), cfg)
    assert relative_error(res.tucker, t) < 1e-10
    assert res.tucker.orthonormality_defect() < 1e-10


def test_random_tucker_n20():
    rng = np.random.default_rng(9)
    t = random_tucker(rng, (20, 20, 20), (3, 3, 3)).full()
    cfg = CrossConfig((3, 3, 3))
    tucker, samples, spectrum = deim_fs(DenseOracle(t), unfolding_bases(t, 5), cfg)
    assert relative_error(tucker, t) < 1e-12
    for s in spectrum.values:
        assert np.all(np.diff(s) <= 1e-15) and np.all(s >= 0)


def test_guides_with_too_few_columns():
    t = np.random.default_rng(10).standard_normal((6, 6, 6))
    with pytest.raises(ValueError):
        deim_fs(DenseOracle(t), unfolding_bases(t, 2), CrossConfig((2, 2, 2)))


def test_nested_span_invariance_of_indices():
    # Indices depend only on the nested column spans: U -> U R with R upper triangular
    # (orthogonal R of this form are sign flips) leaves them unchanged.
    rng = np.random.default_rng(11)
    u = np.linalg.qr(rng.standard_normal((30, 5)))[0]
    r = np.triu(rng.standard_normal((5, 5))) + 3 * np.eye(5)
    signs = np.diag([1.0, -1.0, -1.0, 1.0, -1.0])
    assert np.array_equal(deim_indices(u), deim_indices(u @ r))
    assert np.array_equal(deim_indices(u), deim_indices(u @ signs))


def test_f1_rank10_close_to_hosvd(f1):
    oracle, truth, bases = f1
    res = deim_fs(oracle, bases, CrossConfig((10,) * 3))
    e_cross = absolute_error(res.tucker, truth)
    e_hosvd = absolute_error(hosvd(truth, 10, bases=bases), truth)
    assert e_cross <= 10 * e_hosvd


def test_f1_error_nonincreasing_in_rank(f1):
    oracle, truth, bases = f1
    errs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        for r in range(2, 13):
            errs.append(absolute_error(deim_fs(oracle, bases, CrossConfig((r,) * 3), False).tucker, truth))
    # below ~200 ulps of ||F|| both methods sit on the roundoff floor
    floor = 5e-14 * np.linalg.norm(truth)
    assert all(b <= a or b <= floor for a, b in zip(errs, errs[1:])), errs
    assert errs[0] / errs[5] > 1e6


# -- rank adaptivity --------------------------------------------------------------------

def test_error_proxy_examples():
    spec = SingularSpectrum((np.array([1.0, 0.1, 0.001]),))
    assert error_proxy(spec, 0) == pytest.approx(0.001 / np.sqrt(1 + 0.01 + 1e-6), rel=1e-14)
    assert error_proxy(SingularSpectrum((np.array([2.5]),)), 0) == 1.0
    assert error_proxy(SingularSpectrum((np.full(4, 0.3),)), 0) == pytest.approx(0.5)


def test_error_proxy_empty():
    with pytest.raises(ValueError):
        error_proxy(SingularSpectrum((np.array([]),)), 0)


def test_adapt_rank_rule():
    assert adapt_rank(4, 1e-5, (1e-6, 1e-4)) == 4
    assert adapt_rank(4, 1e-2, (1e-6, 1e-4)) == 5
    assert adapt_rank(4, 1e-8, (1e-6, 1e-4)) == 3
    assert adapt_rank(1, 1e-8, (1e-5, 1e-4)) == 1
    assert adapt_rank(7, 1.0, (1e-5, 1e-4), max_rank=7) == 7
    with pytest.raises(ValueError):
        adapt_rank(3, 0.1, (1e-3, 1e-4))


def test_core_spectrum_sorted():
    spec = core_spectrum(np.random.default_rng(12).standard_normal((3, 4, 5)))
    assert [len(s) for s in spec.values] == [3, 4, 5]
    for s in spec.values:
        assert np.all(np.diff(s) <= 0)


# -- iterative variant --------------------------------------------------------------

def test_iterative_exact_low_rank_converges_in_two():
    rng = np.random.default_rng(13)
    t = random_tucker(rng, (20, 18, 16), (3, 3, 3)).full()
    res = deim_fs_iterative(DenseOracle(t), CrossConfig((3, 3, 3)), seed=0)
    tucker, iterations = res
    assert res.converged and iterations == 2
    assert res.criterion[-1] < 1e-12
    assert relative_error(tucker, t) < 1e-10


def test_iterative_reports_non_convergence():
    t = np.random.default_rng(14).standard_normal((12, 12, 12))
    res = deim_fs_iterative(DenseOracle(t), CrossConfig((3, 3, 3), max_iterations=2, tol=1e-300), seed=1)
    assert not res.converged and res.iterations == 2


def test_iterative_stops_on_index_cycle_and_keeps_best_iterate():
    t = np.random.default_rng(4).standard_normal((12, 12, 12))
    cfg = CrossConfig((3, 3, 3), tol=1e-300)
    res = deim_fs_iterative(DenseOracle(t), cfg, seed=1)
    assert not res.converged and res.iterations < cfg.max_iterations
    # criterion[j] belongs to pass j + 2; stopping right there must return the same iterate
    stop = int(np.argmin(res.criterion)) + 2
    short = deim_fs_iterative(DenseOracle(t), CrossConfig((3, 3, 3), tol=1e-300, max_iterations=stop), seed=1)
    np.testing.assert_array_equal(res.tucker.core, short.tucker.core)


def test_iterative_deterministic_given_seed():
    oracle = toy_tensor_oracle("f1", grids=[np.linspace(-1, 1, 30)] * 3)
    a = deim_fs_iterative(oracle, CrossConfig((4, 4, 4)), seed=5)
    b = deim_fs_iterative(oracle, CrossConfig((4, 4, 4)), seed=5)
    np.testing.assert_array_equal(a.tucker.core, b.tucker.core)
    assert a.iterations == b.iterations


def test_iterative_too_many_fibers():
    with pytest.raises(ValueError):
        deim_fs_iterative(DenseOracle(np.zeros((3, 3, 3))), CrossConfig((2, 2, 2)), seed=0)


# -- HOSVD ---------------------------------------------------------------------------

def test_hosvd_exact_and_lossless():
    rng = np.random.default_rng(15)
    t = random_tucker(rng, (9, 8, 7), (2, 3, 2)).full()
    assert relative_error(hosvd(t, (2, 3, 2)), t) < 1e-12
    g = rng.standard_normal((4, 5, 3))
    tt = hosvd(g, g.shape)
    assert relative_error(tt, g) < 1e-12


def test_hosvd_quasi_optimal_bound():
    t = np.random.default_rng(16).standard_normal((20, 20, 20))
    tt = hosvd(t, 5)
    tail = sum(np.sum(np.linalg.svd(unfold(t, k), compute_uv=False)[5:] ** 2) for k in range(3))
    assert absolute_error(tt, t) ** 2 <= tail * (1 + 1e-12)
    assert tt.orthonormality_defect() < 1e-10
    assert abs(np.linalg.norm(tt.core) - np.linalg.norm(tt.full())) < 1e-10


def test_hosvd_rank_out_of_range():
    with pytest.raises(ValueError):
        hosvd(np.zeros((3, 3)), 4)


# -- FSTD -------------------------------------------------------------------------------

def test_fstd_rank_one_exact():
    rng = np.random.default_rng(17)
    t = np.einsum("i,j,k->ijk", *(rng.uniform(0.5, 1.5, n) for n in (8, 9, 10)))
    res = fstd(DenseOracle(t), 1, seed=3)
    assert relative_error(res.tucker, t) < 1e-10


def test_fstd_deterministic_and_distinct():
    oracle = toy_tensor_oracle("f1", grids=[np.linspace(-1, 1, 25)] * 3)
    a = fstd(oracle, 5, seed=7)
    b = fstd(oracle, 5, seed=7)
    np.testing.assert_array_equal(a.tucker.core, b.tucker.core)
    for p in a.indices:
        assert len(set(p.tolist())) == 5


def test_fstd_zero_intersection():
    with pytest.raises(IllConditionedIntersectionError):
        fstd(DenseOracle(np.zeros((4, 4, 4))), 2, seed=0)


# -- error measures ------------------------------------------------------------------

def test_errors_against_dense_difference():
    rng = np.random.default_rng(18)
    tt = random_tucker(rng, (20, 6, 7), (2, 2, 2))
    truth = rng.standard_normal((20, 6, 7))
    assert absolute_error(tt, truth) == pytest.approx(np.linalg.norm(tt.full() - truth), rel=1e-12)
    assert relative_error(tt.full(), tt.full()) == 0.0
    assert relative_error(np.zeros_like(truth), truth) == 1.0
    with pytest.raises(ZeroDivisionError):
        relative_error(truth, np.zeros_like(truth))
