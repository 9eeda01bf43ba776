import csv
import json

import numpy as np
import pytest

from koopman_roa.config import config_from_dict
from koopman_roa.errors import KoopmanError, StageError
from koopman_roa.pipeline import Pipeline, export_plot_grid, run_pipeline, sweep

from conftest import EX1_TERMS


def small_ex1(**extra):
    doc = {"name": "small", "system": {"components": EX1_TERMS}, "N": 30, "N_max": 80,
           "radius": {"S": 0.45, "R": 0.39}, "constants": {"M1": 0.5 * 0.9 ** 31},
           "validation": {"samples": 50, "horizon": 20.0}}
    doc.update(extra)
    return config_from_dict(doc)


def test_example1_prop_bounds_in_certificate(ex1_pipeline):
    prop2 = ex1_pipeline.certificate(kind="prop2")
    prop1 = ex1_pipeline.certificate(kind="prop1")
    assert prop2.error_bounds[0].value == pytest.approx(1.16e-7, rel=0.03)
    assert prop1.error_bounds[0].value == pytest.approx(1.45e-3, rel=0.02)
    assert prop2.certified and prop1.certified
    assert prop2.band_width > prop1.band_width


def test_vdp_prop2_bound(vdp_pipeline):
    cert = vdp_pipeline.certificate()
    assert cert.error_bounds[0].value == pytest.approx(9.01e-5, rel=0.01)
    assert cert.certified


def test_constant_provenance(ex1_pipeline):
    c = ex1_pipeline.constants()[0]
    assert c["M1"]["source"] == "supplied" and c["M1"]["value"] == 4e-4
    assert c["M2"]["source"] == "estimated"
    assert c["M1"]["estimate"].value == pytest.approx(0.5 * 0.9 ** 71, rel=1e-10)
    other = ex1_pipeline.constants(30)[0]
    assert other["M1"]["source"] == "estimated" and other["M"]["source"] == "supplied"


def test_derived_radii_for_example1():
    cfg = small_ex1(radius={})
    rad = Pipeline(cfg).radius()
    assert rad.rho[0] == pytest.approx(0.5, abs=0.01)
    assert rad.S == pytest.approx(0.9 * rad.rho[0])
    assert rad.R == pytest.approx(0.87 * rad.S)
    assert rad.S_source == "derived"


def test_certificate_file_is_deterministic(tmp_path):
    a = run_pipeline(small_ex1(), tmp_path / "a")
    run_pipeline(small_ex1(), tmp_path / "b")
    assert a.exit_code == 0
    assert (tmp_path / "a" / "certificate.json").read_bytes() == (tmp_path / "b" / "certificate.json").read_bytes()
    doc = json.loads((tmp_path / "a" / "certificate.json").read_text())
    assert doc["schema"] == 1 and doc["status"] == "certified"
    names = {p.name for p in a.files}
    assert {"certificate.json", "summary.txt", "eigenfunctions.json", "coefficient_sequences.csv",
            "radius_scan.csv", "bound_sweep.csv", "vtilde_grid.csv", "omega_boundary.csv",
            "gamma2_level.csv", "surrogate_comparison.csv"} <= names
    summary = (tmp_path / "a" / "summary.txt").read_text()
    assert "M1 = " in summary and "supplied" in summary and "estimated" in summary


def test_export_example1_interval(tmp_path, ex1_pipeline):
    export_plot_grid(ex1_pipeline, tmp_path, 801)
    cert = ex1_pipeline.certificate()
    with open(tmp_path / "omega_boundary.csv") as fh:
        rows = list(csv.DictReader(fh))
    g2 = sorted(float(r["x_1"]) for r in rows if r["level"] == "gamma2")
    g1 = sorted(float(r["x_1"]) for r in rows if r["level"] == "gamma1")
    assert len(g1) == 2 and len(g2) == 2
    # closed form: phi(x)^2 = g has roots x = s / (1 + 2 s) for s = +-sqrt(g)
    for level, roots in ((cert.gamma1, g1), (cert.gamma2, g2)):
        s = np.sqrt(level)
        assert roots == pytest.approx([-s / (1 - 2 * s), s / (1 + 2 * s)], rel=1e-5)
    assert g2[0] > -0.39


def test_export_vdp_closed_curves(tmp_path, vdp_pipeline):
    export_plot_grid(vdp_pipeline, tmp_path, 121)
    with open(tmp_path / "gamma2_level.csv") as fh:
        rows = list(csv.DictReader(fh))
    pts = np.array([[float(r["x_1"]), float(r["x_2"])] for r in rows])
    assert len(pts) > 20
    assert np.abs(pts).max() <= vdp_pipeline.certificate().R + 1e-12


def test_export_empty_band(tmp_path):
    cfg = small_ex1(bound_kind="prop1", constants={"M": 500.0})
    p = Pipeline(cfg)
    assert p.certificate().status == "empty-band"
    files = export_plot_grid(p, tmp_path, 51)
    assert [f.name for f in files] == ["vtilde_grid.csv"]
    assert "the band is empty" in p.summary()
    assert run_pipeline(cfg, tmp_path / "run").exit_code == 2


def test_stage_errors_name_the_stage():
    cfg = small_ex1(bound_kind="prop3", radius={"S": 0.55, "R": 0.5})
    with pytest.raises(StageError, match="stage"):
        Pipeline(cfg).certificate()


def test_sweep_N_decreasing_gamma1(ex1_pipeline):
    res = sweep(ex1_pipeline.cfg, "N", [10, 30, 50, 70], ex1_pipeline)
    g = [r["gamma1"] for r in res.rows]
    assert all(b < a for a, b in zip(g, g[1:]))
    assert res.summary["gamma1_strictly_decreasing"]


def test_sweep_R_directions(tmp_path, ex1_pipeline):
    res = sweep(ex1_pipeline.cfg, "R", [0.3, 0.35, 0.39, 0.44], ex1_pipeline)
    assert res.summary["gamma1_strictly_increasing"]
    assert res.summary["gamma2_strictly_increasing"]
    res.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("axis,value,status")


def test_sweep_records_failures(ex1_pipeline):
    res = sweep(ex1_pipeline.cfg, "R", [0.39, 0.5], ex1_pipeline)
    assert res.rows[0]["status"] == "certified"
    assert res.rows[1]["message"]


def test_sweep_rejects_empty_and_bad_axis(ex1_pipeline):
    with pytest.raises(KoopmanError):
        sweep(ex1_pipeline.cfg, "N", [])
    with pytest.raises(KoopmanError):
        sweep(ex1_pipeline.cfg, "S", [0.4])


def test_validation_stage(tmp_path):
    p = Pipeline(small_ex1())
    rep = p.validation()
    assert rep.status == "ok" and rep.samples == 50


def test_surrogate_stage(ex1_pipeline):
    s = ex1_pipeline.surrogate()
    assert s["exactness_residual"] <= 1e-9 * s["exactness_scale"]
    assert s["spectrum_mismatch"] < 1e-6
    assert s["gamma1"] > 0
