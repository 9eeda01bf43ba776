import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopman_roa.bounds import (
    ErrorBound,
    TailConstants,
    bound_prop1,
    bound_prop2,
    bound_prop3,
    bound_sweep,
    error_bound,
    estimate_M,
    estimate_M1,
    estimate_M2,
    multiset_tail,
    truncation_l1,
    write_bound_csv,
)
from koopman_roa.errors import BoundError
from koopman_roa.polyalg import PowerSeries

from conftest import closed_phi


def geometric(b, top, n=1):
    return PowerSeries.from_dict(n, top, {(k,): b ** k for k in range(top + 1)})


def true_remainder(N, R, points=2001):
    x = np.linspace(-R, R, points)
    approx = sum(2.0 ** (k - 1) * x ** k for k in range(1, N + 1))
    return float(np.abs(closed_phi(x) - approx).max())


# -- tails -------------------------------------------------------------------------


@given(st.integers(1, 4), st.floats(0.01, 0.95), st.integers(0, 80))
@settings(max_examples=60, deadline=None)
def test_multiset_tail_matches_direct_sum(n, r, N):
    direct = math.fsum(math.comb(n + k - 1, k) * r ** k for k in range(N + 1, N + 4000))
    assert multiset_tail(n, r, N) == pytest.approx(direct, rel=1e-10, abs=1e-300)


def test_multiset_tail_one_variable_closed_form():
    r = 0.39 / 0.45
    assert multiset_tail(1, r, 70) == pytest.approx(r ** 71 / (1 - r), rel=1e-12)


def test_multiset_tail_full_sum_identity():
    """sum_{k>=0} C(n+k-1, k) r^k = (1 - r)^(-n)."""
    for n in (1, 2, 3, 5):
        assert multiset_tail(n, 0.6, -1) == pytest.approx((1 - 0.6) ** -n, rel=1e-12)


def test_multiset_tail_rejects_bad_ratio():
    with pytest.raises(BoundError):
        multiset_tail(2, 1.0, 3)


# -- bounds -------------------------------------------------------------------------


def test_prop1_examples():
    assert bound_prop1(5, 0.45, 0.39, 70).value == pytest.approx(1.45e-3, rel=0.02)
    assert bound_prop1(2, 0.43, 0.385, 70, 2).value == pytest.approx(7.4e-3, rel=0.02)
    assert bound_prop1(7, 0.45, 1e-12, 5).value < 1e-60
    assert bound_prop1(2, 0.43, 0.385, 70, 2).assumptions


def test_prop2_examples():
    assert bound_prop2(4e-4, 0.45, 0.39, 70).value == pytest.approx(1.16e-7, rel=0.02)
    assert bound_prop2(3e-4, 0.43, 0.385, 70, 2).value == pytest.approx(9.01e-5, rel=0.01)


def test_prop3_examples():
    assert bound_prop3(1.0, 2.0, 1.0, 0).value == pytest.approx(math.sqrt(1 / 3), rel=1e-12)
    assert bound_prop3(3.0, 0.45, 1e-9, 4).value < 1e-20


def test_error_bound_dispatch_and_validation():
    assert error_bound("prop2", 4e-4, 0.45, 0.39, 70) == bound_prop2(4e-4, 0.45, 0.39, 70)
    with pytest.raises(BoundError):
        error_bound("prop9", 1.0, 0.45, 0.39, 70)
    with pytest.raises(BoundError):
        bound_prop1(1.0, 0.39, 0.45, 70)
    with pytest.raises(BoundError):
        bound_prop2(-1.0, 0.45, 0.39, 70)


@given(st.sampled_from(["prop1", "prop2", "prop3"]), st.integers(1, 3), st.integers(0, 60),
       st.floats(0.05, 0.9))
@settings(max_examples=60, deadline=None)
def test_bounds_decrease_in_N_and_increase_in_R(kind, n, N, r):
    S = 0.5
    b = error_bound(kind, 1.0, S, r * S, N, n).value
    assert error_bound(kind, 1.0, S, r * S, N + 1, n).value <= b
    assert error_bound(kind, 1.0, S, min(r * 1.05, 0.95) * S, N, n).value >= b
    assert error_bound(kind, 2.0, S, r * S, N, n).value >= b


def test_prop2_below_prop1_in_both_examples():
    assert bound_prop2(4e-4, 0.45, 0.39, 70).value < bound_prop1(5, 0.45, 0.39, 70).value
    assert bound_prop2(3e-4, 0.43, 0.385, 70, 2).value < bound_prop1(2, 0.43, 0.385, 70, 2).value


@pytest.mark.parametrize("N", [10, 30, 50, 70])
def test_bounds_dominate_true_remainder(ex1_phi, N):
    S, R = 0.45, 0.39
    actual = true_remainder(N, R)
    M = estimate_M(ex1_phi, S, (1, 200)).value
    M1 = estimate_M1(ex1_phi, S, N, (N + 1, 200)).value
    M2 = estimate_M2(ex1_phi, S, N, (N + 1, 200)).value
    for kind, c in (("prop1", M), ("prop2", M1), ("prop3", M2)):
        assert actual <= error_bound(kind, c, S, R, N).value


# -- constants ------------------------------------------------------------------------


def test_estimate_M_example1(ex1_phi):
    est = estimate_M(ex1_phi, 0.45, (1, 200))
    assert est.value == pytest.approx(4.5, rel=1e-3)
    assert est.value <= 5


def test_estimate_M_linear_eigenfunction():
    p = PowerSeries.from_dict(3, 1, {(1, 0, 0): 1.0, (0, 1, 0): -1.0, (0, 0, 1): 1.0})
    assert estimate_M(p, 0.4).value == pytest.approx(3 * 0.4)


def test_truncation_l1_sequence(ex1_phi):
    seq = truncation_l1(ex1_phi, 0.45)
    assert seq[0] == 0
    assert seq[3] == pytest.approx(0.45 + 2 * 0.45 ** 2 + 4 * 0.45 ** 3)
    assert np.all(np.diff(seq) >= 0)


def test_estimate_M1_example1(ex1_phi):
    est = estimate_M1(ex1_phi, 0.45, 70, (71, 200))
    assert est.value == pytest.approx(0.5 * 0.9 ** 71, rel=1e-12)
    assert est.value < 4e-4
    assert est.decreasing


def test_estimate_M1_vdp(vdp_phi):
    est = estimate_M1(vdp_phi, 0.43, 70, (71, 200))
    assert est.value < 3e-4


def test_estimate_M1_geometric():
    est = estimate_M1(geometric(2.0, 120), 0.3, 20)
    assert est.value == pytest.approx(0.6 ** 21, rel=1e-12)


def test_estimate_M2_example1(ex1_phi):
    est = estimate_M2(ex1_phi, 0.45, 70, (71, 200))
    exact = 0.25 * 0.81 ** 71 / 0.19
    assert est.value == pytest.approx(exact, rel=1e-6)
    assert 3e-7 < est.value < 5e-7
    assert true_remainder(70, 0.39) <= bound_prop3(est.value, 0.45, 0.39, 70).value


def test_estimate_M2_geometric_extrapolation():
    b, S = 2.0, 0.45
    est = estimate_M2(geometric(b, 100), S, 30, (31, 100))
    exact = (b * S) ** 62 / (1 - (b * S) ** 2)
    assert est.value == pytest.approx(exact, rel=0.01)


def test_estimate_M2_zero_tail():
    p = PowerSeries.from_dict(1, 40, {(1,): 1.0})
    assert estimate_M2(p, 0.5, 10).value == 0


def test_estimate_M2_rejects_divergent_series():
    with pytest.raises(BoundError):
        estimate_M2(geometric(2.0, 100), 0.7, 30)


def test_tail_constants_for_kind():
    tc = TailConstants(M=5.0, M1=4e-4)
    assert tc.for_kind("prop1") == 5.0
    with pytest.raises(BoundError):
        tc.for_kind("prop3")


def test_bound_csv(tmp_path):
    rows = bound_sweep("prop2", 4e-4, 0.45, 0.39, [10, 20, 70])
    write_bound_csv(tmp_path / "b.csv", rows)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "kind,N,S,R,n,constant,value"
    assert len(lines) == 4
    assert isinstance(rows[0], ErrorBound) and rows[0].value > rows[-1].value
