import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from lpsharpen.base_measure import BaseMeasure, EmpiricalCounts, default_family, make_parametric
from lpsharpen.inference import (
    bootstrap_se,
    chi2_sf,
    double_bootstrap_test,
    kl_statistic,
    lp_gof,
    lpgof_statistic,
    parametric_bootstrap_test,
    pearson_chisq,
    proportion_ztest,
)
from lpsharpen.io import load_fixture


def test_gambler_die():
    bm = make_parametric("discrete_uniform", {"k": 6})
    data = load_fixture("gambler_die.csv")
    rep = pearson_chisq(data, bm)
    assert rep.statistic == pytest.approx(14.2, abs=1e-9)
    assert rep.df == 5
    lp = lp_gof(data, bm, selection="full")
    assert lp.statistic == pytest.approx(rep.statistic, abs=1e-9)


def test_chi2_sf_accuracy():
    from scipy.special import gammaincc

    assert chi2_sf(30.0, 19) == pytest.approx(0.0518, abs=1e-4)
    assert chi2_sf(30.0, 19) == pytest.approx(gammaincc(9.5, 15.0), rel=1e-10)
    assert chi2_sf(0.0, 3) == 1.0


def test_zero_probability_cell_gives_infinite_statistic():
    bm = BaseMeasure(np.array([0, 1, 2]), np.array([0.5, 0.5, 0.0]), "custom")
    rep = pearson_chisq(EmpiricalCounts(np.array([0, 2]), np.array([3, 1])), bm)
    assert np.isinf(rep.statistic) and rep.p_value == 0.0


def test_empty_selection_reports_no_evidence():
    bm = make_parametric("discrete_uniform", {"k": 6})
    data = EmpiricalCounts(np.arange(1, 7), np.full(6, 10))
    rep = lp_gof(data, bm)
    assert rep.active == () and rep.p_value == 1.0
    assert "no evidence" in rep.note


def test_report_schema():
    bm = make_parametric("discrete_uniform", {"k": 6})
    d = lp_gof(load_fixture("gambler_die.csv"), bm).to_dict()
    assert list(d) == ["method", "statistic", "df", "p_value", "coefficients", "meta"]


@given(st.integers(1, 5000), st.floats(0.01, 0.99), st.data())
def test_proportion_z_equals_lp1(n, p0, data):
    k = data.draw(st.integers(0, n))
    rep = proportion_ztest(k, n, p0)
    z = np.sqrt(n) * (k / n - p0) / np.sqrt(p0 * (1 - p0))
    assert rep.meta["z"] == pytest.approx(z, abs=1e-12 * max(1, abs(z)))
    assert rep.statistic == pytest.approx(z * z, rel=1e-9, abs=1e-12)


def test_parametric_bootstrap_reproducible_and_bounded():
    bm = make_parametric("poisson", {"lam": 2.0})
    data = EmpiricalCounts(np.arange(6), np.array([14, 27, 27, 18, 9, 5]))
    fn = lpgof_statistic(4)
    a = parametric_bootstrap_test(fn, bm, data, 199, seed=3)
    b = parametric_bootstrap_test(fn, bm, data, 199, seed=3)
    assert a.p_value == b.p_value
    assert 1 / 200 <= a.p_value <= 1
    with pytest.raises(ValueError):
        parametric_bootstrap_test(fn, bm, data, 10, seed=3)


def test_double_bootstrap_refits_parameters(spiegel):
    fam = default_family("binomial", {"trials": 5})
    rep = double_bootstrap_test(kl_statistic(None, "full"), fam, spiegel, 199, 0, seed=11)
    assert rep.meta["refit"] and 0.5 <= rep.p_value <= 1.0


def test_bootstrap_se_positive():
    data = EmpiricalCounts(np.arange(5), np.array([10, 20, 30, 20, 10]))
    se = bootstrap_se(lambda d: d.mean(), data, 400, seed=1)
    assert se == pytest.approx(np.sqrt(data.variance() / data.n), rel=0.15)


@pytest.mark.slow
def test_size_under_estimated_null():
    # Poisson with estimated mean, LPgof referred to chi-square: rejection rate near nominal
    fam = default_family("poisson")
    rng = np.random.default_rng(2024)
    rej = 0
    reps = 500
    for _ in range(reps):
        x = rng.poisson(4.0, size=300)
        e = EmpiricalCounts(*np.unique(x, return_counts=True))
        bm = fam.fit(e)
        rep = lp_gof(e, bm, selection=[3, 4])
        rej += rep.p_value < 0.05
    assert 0.03 <= rej / reps <= 0.07
