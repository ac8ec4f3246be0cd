import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import ortho_group

from lpsharpen.base_measure import BaseMeasure, EmpiricalCounts, make_parametric
from lpsharpen.discovery import bump_scan, dss_embed, lp_transform_matrix
from lpsharpen.sim_bench import generate_hep, hep_null


def test_pval_bounds_and_columns():
    bm = hep_null(60)
    data = generate_hep(60, 2000, bump=(125, 2, 0.1), seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = bump_scan(bm, data, B=200, sigma_level=2, seed=0, max_order=6)
    assert res.grid.size == 60
    assert np.all(res.pval >= 1 / 201) and np.all(res.pval <= 1)
    assert res.pval.min() == pytest.approx(1 / 201)
    np.testing.assert_allclose(res.neglog10, -np.log10(res.pval))
    for lo, hi in res.regions:
        assert lo < hi


def test_too_small_B_is_an_error_without_approximation():
    bm = hep_null(40)
    data = generate_hep(40, 500, seed=2)
    with pytest.raises(ValueError, match="sigma"):
        bump_scan(bm, data, B=100, sigma_level=5, seed=0, approx_tail=False)
    with pytest.warns(UserWarning):
        res = bump_scan(bm, data, B=100, sigma_level=5, seed=0)
    assert res.approximated


def test_scan_is_seed_deterministic():
    bm = hep_null(40)
    data = generate_hep(40, 800, bump=(125, 2, 0.1), seed=3)
    a = bump_scan(bm, data, B=150, sigma_level=2, seed=9)
    b = bump_scan(bm, data, B=150, sigma_level=2, seed=9)
    np.testing.assert_array_equal(a.pval, b.pval)


def test_window_restricts_grid():
    bm = hep_null(50)
    data = generate_hep(50, 800, seed=4)
    res = bump_scan(bm, data, B=120, sigma_level=2, seed=1, window=(120, 180))
    assert res.grid.min() >= 120 and res.grid.max() <= 180


@pytest.mark.slow
def test_null_data_rarely_gives_3_sigma_region():
    bm = hep_null(100)
    hits = 0
    for s in range(40):
        data = generate_hep(100, 5000, seed=100 + s)
        res = bump_scan(bm, data, B=2000, sigma_level=3, seed=s, approx_tail=True)
        hits += bool(res.regions)
    assert hits / 40 <= 0.1


def test_lp_matrix_zero_for_null_sources():
    bm = make_parametric("discrete_uniform", {"k": 10})
    src = [EmpiricalCounts(np.arange(1, 11), np.full(10, 3)) for _ in range(4)]
    L = lp_transform_matrix(src, bm, 5)
    np.testing.assert_allclose(L, 0, atol=1e-12)
    res = dss_embed(L)
    np.testing.assert_allclose(res.discovery_index, 0, atol=1e-20)


def test_binary_source_matches_proportion_formula():
    p0 = 0.3
    bm = BaseMeasure(np.array([0, 1]), np.array([1 - p0, p0]), "custom")
    L = lp_transform_matrix([EmpiricalCounts(np.array([0, 1]), np.array([6, 4]))], bm, 1)
    assert L[0, 0] == pytest.approx((0.4 - p0) / np.sqrt(p0 * (1 - p0)))


def test_dss_requires_two_by_two():
    with pytest.raises(ValueError):
        dss_embed(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        dss_embed(np.zeros((3, 1)))


@given(st.integers(2, 12), st.integers(2, 6), st.integers(0, 2**31))
def test_dss_invariants(g, m, seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(g, m))
    res = dss_embed(L)
    assert np.all(np.diff(res.singular_values) <= 1e-12)
    np.testing.assert_allclose(res.discovery_index, np.sum(res.coords**2, axis=1))
    U, s, Vt = np.linalg.svd(L, full_matrices=False)
    assert np.linalg.norm(L - (U * s) @ Vt) < 1e-8 * np.linalg.norm(L)
    Q = ortho_group.rvs(m, random_state=seed % 2**32) if m > 1 else np.eye(1)
    np.testing.assert_allclose(dss_embed(L @ Q).discovery_index, res.discovery_index, atol=1e-9)


def test_duplicated_rows_preserve_rank_order():
    rng = np.random.default_rng(7)
    L = rng.normal(size=(20, 5))
    a = dss_embed(L).discovery_index
    b = dss_embed(np.vstack([L, L])).discovery_index[:20]
    np.testing.assert_array_equal(np.argsort(a), np.argsort(b))
