import math

import numpy as np
import pytest

from koopman_roa.analyticity import (
    choose_S_R,
    coeff_objective,
    default_grid,
    max_root_terms,
    radius_1d,
    radius_nd,
    scan_objective,
    step_grid,
    write_scan_csv,
)
from koopman_roa.polyalg import PowerSeries


def test_radius_1d_geometric_coefficients(ex1_phi):
    c = [abs(ex1_phi[(k,)]) for k in range(201)]
    assert radius_1d(c) == pytest.approx(0.5, abs=0.01)
    # the estimate approaches 1/2 as the window moves out
    near = [radius_1d(c[:top + 1]) for top in (20, 50, 200)]
    assert abs(near[2] - 0.5) <= abs(near[0] - 0.5)


def test_radius_1d_exact_power():
    c = [3.0 ** k for k in range(60)]
    assert radius_1d(c) == pytest.approx(1 / 3, rel=1e-12)


def test_radius_1d_entire_function_grows():
    c = [1 / math.factorial(k) for k in range(171)]
    r = [radius_1d(c[:top + 1]) for top in (20, 80, 170)]
    assert r[0] < r[1] < r[2]
    assert r[2] > 20
    assert radius_1d([1.0, 0.0, 0.0, 0.0]) == math.inf


def test_radius_1d_window_validation():
    with pytest.raises(ValueError):
        radius_1d([1.0, 2.0, 3.0], window=(5, 9))


def test_objective_examples(ex1_phi):
    assert coeff_objective(ex1_phi, 0.5, 200) == pytest.approx(0.0, abs=0.01)
    assert coeff_objective(ex1_phi, 1e-9, 200) == pytest.approx(1.0, abs=1e-6)


def test_max_root_terms_by_direct_formula(vdp_phi):
    rho = np.array([0.3, 0.4])
    N = 30
    ref = max(abs(c) ** (1 / sum(k)) * (rho[0] ** k[0] * rho[1] ** k[1]) ** (1 / sum(k))
              for k, c in vdp_phi.coeffs.items() if 1 <= sum(k) <= N and c != 0)
    assert max_root_terms(vdp_phi, rho[None, :], N)[0] == pytest.approx(ref, rel=1e-12)


def test_radius_nd_one_dimensional_grid_picks_half(ex1_phi):
    grid = [np.round(np.arange(0.05, 1.0001, 0.05), 10)]
    est = radius_nd(ex1_phi, grid, 200, select="argmin")
    assert est.rho[0] == pytest.approx(0.5)


def test_radius_nd_symmetric_series():
    coeffs = {}
    for d in range(1, 40):
        for a in range(d + 1):
            coeffs[(a, d - a)] = 2.0 ** d * math.comb(d, a)
    p = PowerSeries.from_dict(2, 39, coeffs)
    axis = np.linspace(0.01, 0.6, 60)
    for select in ("boundary", "argmin"):
        est = radius_nd(p, [axis, axis], 39, select=select)
        if select == "boundary":
            assert est.rho[0] == est.rho[1]
        _, obj, _ = scan_objective(p, [axis, axis], 39)
        assert np.allclose(obj, obj.T)


def test_radius_nd_vdp_is_fast_and_near_reference(vdp_phi, vdp):
    est = radius_nd(vdp_phi, step_grid(vdp.domain_box, 0.005), 200)
    assert est.select == "boundary"
    assert np.all(np.abs(est.rho - [0.4550, 0.4690]) <= 0.01)


def test_radius_nd_argmin_on_boundary(vdp_phi, vdp):
    axes, obj, top = scan_objective(vdp_phi, default_grid(vdp.domain_box, 41), 200)
    est = radius_nd(vdp_phi, axes, 200, select="argmin")
    assert est.objective == pytest.approx(obj.min())


def test_radius_nd_rejects_bad_grids(vdp_phi):
    with pytest.raises(ValueError):
        radius_nd(vdp_phi, [[0.1, 0.2]], 10)
    with pytest.raises(ValueError):
        radius_nd(vdp_phi, [[0.0, 0.2], [0.1]], 10)
    with pytest.raises(ValueError):
        radius_nd(vdp_phi, [[0.1], [0.1]], 10, select="best")


def test_step_grid():
    g = step_grid([1.0, 0.5], 0.25)
    assert np.allclose(g[0], [0.25, 0.5, 0.75, 1.0])
    assert np.allclose(g[1], [0.25, 0.5])


def test_write_scan_csv(tmp_path, vdp_phi):
    axes, obj, _ = scan_objective(vdp_phi, [[0.1, 0.2], [0.3]], 20)
    write_scan_csv(tmp_path / "scan.csv", axes, obj)
    lines = (tmp_path / "scan.csv").read_text().splitlines()
    assert lines[0] == "rho_1,rho_2,objective"
    assert len(lines) == 3


@pytest.mark.parametrize("rho, kwargs, expected", [
    (0.5, {"S": 0.45, "R": 0.39}, (0.45, 0.39)),
    ([0.4550, 0.4690], {"S": 0.43, "R": 0.385}, (0.43, 0.385)),
    (1.0, {"f_S": 0.9, "f_R": 0.85}, (0.9, 0.765)),
])
def test_choose_S_R_examples(rho, kwargs, expected):
    assert choose_S_R(rho, **kwargs) == pytest.approx(expected)


def test_choose_S_R_rejects_bad_ordering():
    with pytest.raises(ValueError, match="0 < R < S"):
        choose_S_R(0.5, S=0.4, R=0.45)
    with pytest.raises(ValueError):
        choose_S_R(0.5, S=0.6, R=0.3)
