import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from lpsharpen.base_measure import BaseMeasure, make_parametric
from lpsharpen.lp_basis import basis_table, build_basis, eval_s, quantile_inner, t1


def test_t1_uniform_is_standardized_face():
    bm = make_parametric("discrete_uniform", {"k": 6})
    x = np.arange(1, 7)
    np.testing.assert_allclose(t1(bm), (x - 3.5) / np.sqrt(35 / 12), atol=1e-12)


def test_binary_basis_and_dropped_orders():
    bm = BaseMeasure(np.array([0, 1]), np.array([0.7, 0.3]), "custom")
    basis = build_basis(bm, 3)
    assert basis.orders == (1,)
    assert basis.dropped == (2, 3)
    p = 0.3
    np.testing.assert_allclose(basis.T(1), [-p / np.sqrt(p * (1 - p)), (1 - p) / np.sqrt(p * (1 - p))])
    with pytest.raises(ValueError, match="dropped"):
        basis.T(2)


def test_order_must_be_positive():
    bm = make_parametric("poisson", {"lam": 1.0})
    with pytest.raises(ValueError):
        build_basis(bm, 0)


def test_poisson_quantile_inner():
    basis = build_basis(make_parametric("poisson", {"lam": 1.0}), 1)
    assert quantile_inner(basis) == pytest.approx(0.9596, abs=5e-4)


def test_eval_s_right_continuous():
    bm = make_parametric("discrete_uniform", {"k": 4})
    basis = build_basis(bm, 2)
    assert eval_s(basis, 1, 0.25) == pytest.approx(basis.T(1)[1])
    assert eval_s(basis, 1, 0.2499) == pytest.approx(basis.T(1)[0])
    with pytest.raises(ValueError):
        eval_s(basis, 1, 0.0)


def test_basis_table_shape():
    basis = build_basis(make_parametric("binomial", {"trials": 5, "prob": 0.4}), 3)
    header, rows = basis_table(basis)
    assert header == ["x", "pmf", "cdf", "T1", "T2", "T3"]
    assert len(rows) == 6


def test_basis_depends_only_on_ranks():
    # relabelling the support monotonically leaves the table unchanged
    p = np.array([0.1, 0.4, 0.2, 0.3])
    a = build_basis(BaseMeasure(np.arange(4), p, "custom"), 3).values
    b = build_basis(BaseMeasure(np.array([1.0, 5.0, 7.5, 100.0]), p, "custom"), 3).values
    np.testing.assert_allclose(a, b, atol=1e-12)


@given(st.lists(st.floats(0.005, 1.0), min_size=2, max_size=40), st.integers(1, 12))
def test_gram_is_identity_and_centered(w, M):
    bm = BaseMeasure(np.arange(len(w)), np.array(w), "custom")
    basis = build_basis(bm, M)
    assert basis.m <= min(M, bm.r - 1)
    np.testing.assert_allclose(basis.gram(), np.eye(basis.m), atol=1e-8)
    np.testing.assert_allclose(bm.pmf @ basis.values, 0, atol=1e-10)


@given(
    st.sampled_from(["poisson", "neg_binomial", "binomial", "discrete_uniform", "discretized_exponential"]),
    st.floats(0.2, 30.0),
    st.floats(0.3, 50.0),
    st.integers(2, 60),
)
def test_gram_identity_parametric_families(family, a, b, k):
    params = {
        "poisson": {"lam": a},
        "neg_binomial": {"mu": a, "phi": b},
        "binomial": {"trials": k, "prob": min(a / 31.0, 0.99)},
        "discrete_uniform": {"k": k},
        "discretized_exponential": {"rate": 1.0 / (a + 1.0), "lo": 0.0, "hi": 10.0 * b, "k": k},
    }[family]
    bm = make_parametric(family, params)
    # a measure that is a single atom to float precision has no LP basis
    assume(1.0 - np.sum(bm.pmf**3) > 1e-6)
    basis = build_basis(bm, min(12, bm.r - 1))
    np.testing.assert_allclose(basis.gram(), np.eye(basis.m), atol=1e-8)


def test_numerically_single_atom_rejected():
    bm = make_parametric("discretized_exponential", {"rate": 1 / 1.2, "lo": 0.0, "hi": 90.0, "k": 2})
    with pytest.raises(ValueError, match="degenerate"):
        build_basis(bm, 1)
