import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpsharpen.base_measure import make_parametric
from lpsharpen.inference import lp_gof
from lpsharpen.sim_bench import (
    ALTERNATIVES,
    PowerStudySpec,
    card_study,
    generate_hep,
    hep_pmf,
    make_alternative,
    min_n_for_power,
    power_curve,
    simulate_card,
)


def test_simulate_card_counts_and_determinism():
    a = simulate_card(10, 200, seed=1)
    b = simulate_card(10, 200, seed=1)
    assert a.n == 200
    np.testing.assert_array_equal(a.counts, b.counts)
    assert simulate_card(0, 5, seed=0).values.tolist() == [52]


@pytest.mark.parametrize("distinct", [False, True])
def test_card_fixed_point_mean(distinct):
    # E[fixed points] = 1 + 51 * rho^k with rho the nontrivial eigenvalue of one shuffle
    k = 40
    e = simulate_card(k, 20_000, seed=5, distinct=distinct)
    rho = 49 / 51 if distinct else 50 / 52
    assert e.mean() == pytest.approx(1 + 51 * rho**k, abs=0.05)


def test_card_150_location_shift_detected():
    hits = 0
    for s in range(9):
        e = simulate_card(150, 500, seed=s)
        bm = make_parametric("poisson", {"lam": 1.0}, data=e)
        rep = lp_gof(e, bm, selection=[1])
        lp1 = rep.coefficients[0][1]
        hits += lp1 > 0 and rep.p_value < 0.05
    assert hits >= 5


def test_card_study_pvalues_in_unit_interval():
    rows = card_study([50, 300], n=100, B=5, seed=1)
    assert [r["k"] for r in rows] == [50, 300]
    assert all(0 <= r["mean_p"] <= 1 for r in rows)


def test_hep_generator():
    bm, p = hep_pmf(250, (125, 2, 0.1))
    assert p.sum() == pytest.approx(1, abs=1e-12)
    d = generate_hep(250, 10_000, (125, 2, 0.1), seed=2)
    assert d.n == 10_000 and d.values.size == 250
    with pytest.raises(ValueError):
        hep_pmf(250, (300, 2, 0.1))


def test_hep_without_bump_is_null():
    bm, p = hep_pmf(100)
    np.testing.assert_allclose(p, bm.pmf)


@given(st.sampled_from(ALTERNATIVES), st.integers(3, 400))
def test_alternatives_are_distributions(kind, k):
    p = make_alternative(kind, k)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_alternative_parameter_checks():
    with pytest.raises(ValueError):
        make_alternative("step", 10, alpha=3)
    with pytest.raises(ValueError):
        make_alternative("zipf_mix", 10, alpha=-1)
    with pytest.raises(ValueError):
        make_alternative("bogus", 10)
    np.testing.assert_allclose(make_alternative("step", 10, alpha=1.0), 0.1)


def test_power_curve_deterministic_and_ordered():
    k = 200
    spec = PowerStudySpec(np.full(k, 1 / k), make_alternative("step", k, alpha=0.7), [100, 400],
                          B_null=100, B_alt=100, seed=4)
    a, b = power_curve(spec), power_curve(spec)
    assert a == b
    lp = [r["power"] for r in a if r["method"] == "lpgof"]
    assert lp[1] >= lp[0]
    assert min_n_for_power(a, "lpgof", 0.0) == 100


def test_power_spec_validation():
    with pytest.raises(ValueError):
        PowerStudySpec(np.ones(3) / 3, np.ones(4) / 4, [10])
    with pytest.raises(ValueError):
        PowerStudySpec(np.ones(3) / 3, np.ones(3) / 3, [10], methods=("ks",))


def test_null_alternative_has_nominal_size():
    k = 50
    p0 = np.full(k, 1 / k)
    rows = power_curve(PowerStudySpec(p0, p0, [200], B_null=2000, B_alt=1000, seed=8))
    se = np.sqrt(0.05 * 0.95 / 1000)
    for r in rows:
        assert abs(r["power"] - 0.05) <= 3 * se + 0.01
