import math
from itertools import combinations_with_replacement

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopman_roa.errors import DimensionError
from koopman_roa.polyalg import (
    PowerSeries,
    add,
    basis_size,
    diff,
    enumerate_indices,
    evaluate,
    l1_bound,
    linear_substitute,
    monomial_matrix,
    mul,
    multiset_coeff,
    random_series,
    scale,
    truncate,
)

X = PowerSeries.variable(1, 0, cap=5)


def geometric_series(N):
    """Truncation of x/(1-2x): coefficients 2^(k-1)."""
    return PowerSeries.from_dict(1, N, {(k,): 2.0 ** (k - 1) for k in range(1, N + 1)})


def brute_count(n, N):
    return sum(1 for d in range(N + 1) for _ in combinations_with_replacement(range(n), d))


# -- index enumeration ---------------------------------------------------------


def test_enumerate_one_variable():
    assert enumerate_indices(1, 3) == [(0,), (1,), (2,), (3,)]


@pytest.mark.parametrize("n, N, count", [(1, 3, 4), (2, 70, 2556), (3, 2, 10)])
def test_basis_size(n, N, count):
    assert basis_size(n, N) == count
    assert math.comb(N + n, n) == count


@pytest.mark.parametrize("n, N", [(2, 6), (3, 5), (4, 3)])
def test_basis_size_matches_brute_force(n, N):
    idx = enumerate_indices(n, N)
    assert len(idx) == brute_count(n, N) == basis_size(n, N)
    assert len(set(idx)) == len(idx)


def test_enumeration_is_graded():
    idx = enumerate_indices(3, 4)
    degs = [sum(k) for k in idx]
    assert degs == sorted(degs)


@pytest.mark.parametrize("n, k, count", [(1, 0, 1), (1, 7, 1), (2, 3, 4), (3, 4, 15)])
def test_multiset_coeff(n, k, count):
    assert multiset_coeff(n, k) == count


# -- linear operations -----------------------------------------------------------


def test_add_inverse_is_zero():
    assert add(X, scale(X, -1.0)).is_zero()


def test_scale_and_add_examples():
    x2 = PowerSeries.monomial([2], cap=5)
    assert scale(x2, 2.0) == PowerSeries.monomial([2], 2.0, cap=5)
    lhs = add(add(X, x2), x2)
    assert lhs == PowerSeries.from_dict(1, 5, {(1,): 1.0, (2,): 2.0})


def test_dimension_mismatch_rejected():
    with pytest.raises(DimensionError):
        add(PowerSeries.variable(1, 0), PowerSeries.variable(2, 0))


def test_cap_violation_rejected():
    with pytest.raises(ValueError):
        PowerSeries.monomial([3], cap=2)


# -- multiplication ----------------------------------------------------------------


def test_mul_examples():
    x = PowerSeries.variable(1, 0)
    assert mul(x, x, 2) == PowerSeries.monomial([2], cap=2)
    assert mul(x, x, 1).is_zero()
    one = PowerSeries.constant(1, 1.0, cap=1)
    p = mul(add(one, x), add(one, scale(x, -1.0)), 5)
    assert p == PowerSeries.from_dict(1, 5, {(0,): 1.0, (2,): -1.0})


def test_mul_two_variables_by_hand():
    x = PowerSeries.variable(2, 0, cap=3)
    y = PowerSeries.variable(2, 1, cap=3)
    s = add(x, y)
    sq = mul(s, s, 3)
    assert sq.coeffs == {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0}


def test_product_requires_explicit_cap():
    with pytest.raises(TypeError):
        X * X


series_args = st.tuples(st.integers(1, 3), st.integers(0, 5), st.integers(0, 2**32 - 1))


def _series(args, complex_coeffs=False):
    n, deg, seed = args
    return random_series(n, deg, np.random.default_rng(seed), density=0.7, complex_coeffs=complex_coeffs)


def _trio(n, seed):
    rng = np.random.default_rng(seed)
    return [random_series(n, int(rng.integers(0, 5)), rng, density=0.7, complex_coeffs=True)
            for _ in range(3)]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.integers(0, 8))
def test_mul_ring_laws(n, seed, cap):
    p, q, r = _trio(n, seed)
    assert mul(p, q, cap).allclose(mul(q, p, cap))
    assert mul(mul(p, q, cap), r, cap).allclose(mul(p, mul(q, r, cap), cap), rtol=1e-10, atol=1e-12)
    assert mul(p, add(q, r), cap).allclose(add(mul(p, q, cap), mul(p, r, cap)), rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_mul_matches_pointwise_product(n, seed):
    p, q, _ = _trio(n, seed)
    cap = p.degree + q.degree if not (p.is_zero() or q.is_zero()) else 0
    pts = np.random.default_rng(seed).uniform(-0.8, 0.8, size=(7, n))
    lhs = evaluate(mul(p, q, cap), pts)
    rhs = evaluate(p, pts) * evaluate(q, pts)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_mul_against_numpy_polymul():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(9), rng.standard_normal(6)
    p = PowerSeries.from_dense(a, 8)
    q = PowerSeries.from_dense(b, 5)
    ref = np.polynomial.polynomial.polymul(a, b)
    got = mul(p, q, 13).to_dense((14,))
    assert np.allclose(got, ref, rtol=1e-13, atol=1e-13)


# -- truncation ------------------------------------------------------------------


def test_truncate_examples():
    p = PowerSeries.monomial([2, 1])
    assert truncate(p, 2).is_zero()
    q = PowerSeries.from_dict(1, 3, {(1,): 1.0, (3,): 1.0})
    assert truncate(q, 3) == q


@settings(max_examples=50, deadline=None)
@given(series_args, series_args, st.integers(0, 5), st.floats(-3, 3))
def test_truncate_is_linear_and_idempotent(a, b, N, c):
    p = _series(a)
    q = _series((a[0],) + b[1:])
    t = truncate(p, N)
    assert truncate(t, N) == t
    assert truncate(add(p, scale(q, c)), N).allclose(add(truncate(p, N), scale(truncate(q, N), c)))
    assert np.all(t.degrees <= N)


# -- differentiation ---------------------------------------------------------------


def test_diff_examples():
    assert diff(PowerSeries.monomial([2, 1]), 0) == PowerSeries.monomial([1, 1], 2.0, cap=2)
    assert diff(PowerSeries.constant(2, 3.0, cap=2), 1).is_zero()


def test_diff_of_geometric_series():
    d = diff(geometric_series(30), 0)
    for k in range(30):
        assert d[(k,)] == pytest.approx((k + 1) * 2.0 ** k, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(series_args)
def test_diff_matches_finite_difference(args):
    p = _series(args)
    n = p.n
    x = np.full(n, 0.3)
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd = (evaluate(p, x + e) - evaluate(p, x - e)) / (2 * h)
        assert evaluate(diff(p, i), x) == pytest.approx(fd, rel=1e-6, abs=1e-6)


# -- evaluation and bounds -------------------------------------------------------------


def test_evaluate_examples():
    p = geometric_series(70)
    tail = 0.39 / 0.22 - evaluate(p, np.array([0.39])).real
    assert 0 < tail < 1.2e-7
    # closed-form value 0.39/0.22 = 1.772727...
    assert evaluate(p, np.array([0.39])).real == pytest.approx(1.7727273, abs=1e-7)
    q = PowerSeries.from_dict(2, 2, {(2, 0): 1.0, (0, 2): 1.0})
    assert evaluate(q, np.array([3.0, 4.0])) == pytest.approx(25.0)
    r = PowerSeries.from_dict(2, 3, {(0, 0): 1.5, (1, 2): 4.0})
    assert evaluate(r, np.zeros(2)) == pytest.approx(1.5)


def test_evaluate_dense_and_sparse_paths_agree(rng):
    pts = rng.uniform(-1, 1, size=(50, 2))
    dense = random_series(2, 8, rng)
    # a single very high monomial forces the sparse path
    sparse = add(PowerSeries.monomial([40, 0], 1.0, cap=40), PowerSeries.monomial([0, 1], 2.0, cap=40))
    ref = monomial_matrix(dense.exps, pts) @ dense.vals
    assert np.allclose(evaluate(dense, pts), ref, rtol=1e-13, atol=1e-13)
    assert np.allclose(evaluate(sparse, pts), pts[:, 0] ** 40 + 2 * pts[:, 1], rtol=1e-13)


def test_l1_bound_examples():
    assert l1_bound(PowerSeries.monomial([2]), 0.5) == pytest.approx(0.25)
    ref = math.fsum(2.0 ** (k - 1) * 0.39 ** k for k in range(1, 71))
    assert l1_bound(geometric_series(70), 0.39) == pytest.approx(ref, rel=1e-13)
    assert ref == pytest.approx(1.7727, abs=1e-4)
    assert l1_bound(PowerSeries(2, 4), 0.7) == 0.0


@settings(max_examples=40, deadline=None)
@given(series_args, st.floats(0.05, 1.5), st.integers(0, 2**32 - 1))
def test_l1_bound_dominates_values(args, R, seed):
    p = _series(args, complex_coeffs=True)
    pts = np.random.default_rng(seed).uniform(-R, R, size=(64, p.n))
    assert np.abs(evaluate(p, pts)).max(initial=0) <= l1_bound(p, R) * (1 + 1e-12) + 1e-300


# -- linear substitution -------------------------------------------------------------


def test_linear_substitute_examples(rng):
    p = random_series(2, 4, rng)
    assert linear_substitute(p, np.eye(2), 4).allclose(p)
    swap = linear_substitute(PowerSeries.variable(2, 0), [[0, 1], [1, 0]], 1)
    assert swap == PowerSeries.variable(2, 1)
    assert linear_substitute(PowerSeries.monomial([2]), [[2.0]], 2) == PowerSeries.monomial([2], 4.0)


def test_linear_substitute_matches_evaluation(rng):
    p = random_series(3, 4, rng)
    A = rng.standard_normal((3, 3))
    pts = rng.uniform(-0.5, 0.5, size=(10, 3))
    got = evaluate(linear_substitute(p, A, 4), pts)
    assert np.allclose(got, evaluate(p, pts @ A.T), rtol=1e-11, atol=1e-11)


def test_records_round_trip(rng):
    p = random_series(2, 5, rng, complex_coeffs=True)
    assert PowerSeries.from_records(p.to_records(), 2, 5) == p
