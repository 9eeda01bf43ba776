"""End-to-end certification: spectrum, eigenfunctions, radii, bounds, band, exports.

:class:`Pipeline` runs the stages lazily and caches their results, so the CLI
subcommands can stop after any stage.  Every stage failure is re-raised as a
:class:`~koopman_roa.errors.StageError` naming the stage.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import contourpy
import numpy as np
from scipy.optimize import brentq

from . import analyticity as an
from .bounds import (
    BOUND_KINDS,
    ConstantEstimate,
    ErrorBound,
    error_bound,
    estimate_M,
    estimate_M1,
    estimate_M2,
    truncation_l1,
    write_bound_csv,
)
from .config import JobConfig
from .errors import BoundError, KoopmanError, StageError
from .lyapunov import LyapunovCandidate, RoaCertificate, build_candidate, certify_roa, validate_by_integration
from .spectral import ConditioningWarning, EigenSolve, jacobian_spectrum, solve_eigenfunction, verified_spectrum
from .surrogate import (
    box_grid,
    build_surrogate,
    check_surrogate_spectrum,
    exactness_residual,
    grad_V_bounds,
    surrogate_defect_bounds,
    surrogate_gamma1,
    write_comparison_csv,
)

SCHEMA_VERSION = 1
CONSTANT_FOR_KIND = {"prop1": "M", "prop2": "M1", "prop3": "M2"}


def _stage(name):
    def wrap(fn):
        def run(self, *args, **kwargs):
            try:
                return fn(self, *args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@dataclass
class RadiusChoice:
    estimates: list[an.RadiusEstimate]
    rho: np.ndarray
    S: float
    R: float
    S_source: str
    R_source: str
    scan: tuple | None = field(default=None, repr=False)


class Pipeline:
    """Staged certification run for one configuration."""

    def __init__(self, cfg: JobConfig):
        self.cfg = cfg
        self.sys = cfg.system
        self._cache: dict = {}

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # -- stages --------------------------------------------------------------

    @_stage("spectrum")
    def spectrum(self):
        return self._cached("spectrum", lambda: verified_spectrum(
            jacobian_spectrum(self.sys), self.cfg.N_max, self.cfg.resonance_tol))

    @_stage("eigenfunctions")
    def eigenfunctions(self) -> list[EigenSolve]:
        def solve():
            spec = self.spectrum()
            with warnings.catch_warnings():
                # conditioning notes are kept on each EigenSolve and reported
                warnings.simplefilter("ignore", ConditioningWarning)
                return [solve_eigenfunction(self.sys, spec, g[0], self.cfg.N_max,
                                            resonance_tol=self.cfg.resonance_tol)
                        for g in spec.groups]
        return self._cached("eigenfunctions", solve)

    @property
    def phis(self):
        return [s.series for s in self.eigenfunctions()]

    @_stage("radius")
    def radius(self) -> RadiusChoice:
        return self._cached("radius", self._radius)

    def _radius(self) -> RadiusChoice:
        rc = self.cfg.radius
        box = self.sys.domain_box
        N_max = self.cfg.N_max
        estimates, scan = [], None
        for series in self.phis:
            if self.sys.n == 1:
                mags = np.zeros(N_max + 1)
                mags[series.degrees] = np.abs(series.vals)
                window = (N_max // 2, N_max)
                rho = min(an.radius_1d(mags, window), float(box[0]))
                est = an.RadiusEstimate(np.array([rho]), an.coeff_objective(series, rho, N_max), window)
                if scan is None:
                    axes = an.step_grid(box, rc.step) if rc.step else an.default_grid(box, rc.grid_points)
                    scan = an.scan_objective(series, axes, N_max)[:2]
            else:
                axes = an.step_grid(box, rc.step) if rc.step else an.default_grid(box, rc.grid_points)
                ax, obj, top = an.scan_objective(series, axes, N_max)
                est = an.select_radius(ax, obj, top, N_max, rc.select)
                if scan is None:
                    scan = (ax, obj)
            estimates.append(est)
        rho = np.min([e.rho for e in estimates], axis=0)
        S, R = an.choose_S_R(rho, rc.f_S, rc.f_R, rc.S, rc.R)
        fractions = (rc.f_S, rc.f_R)
        estimates = [e.with_radii(S, R, fractions) for e in estimates]
        return RadiusChoice(estimates, rho, S, R, "supplied" if rc.S is not None else "derived",
                            "supplied" if rc.R is not None else "derived", scan)

    @_stage("constants")
    def constants(self, N: int | None = None) -> list[dict]:
        """Per eigenfunction: name -> {"value", "source", "estimate"}.

        A supplied M holds for every N; supplied M1 and M2 hold only at the
        configured N and are replaced by estimates elsewhere.
        """
        N = self.cfg.N if N is None else N
        return self._cached(("constants", N), lambda: self._constants(N))

    def _constants(self, N: int) -> list[dict]:
        S = self.radius().S
        out = []
        for series in self.phis:
            est: dict[str, ConstantEstimate | None] = {
                "M": estimate_M(series, S, (1, self.cfg.N_max)),
                "M1": estimate_M1(series, S, N, (N + 1, self.cfg.N_max)),
            }
            try:
                est["M2"] = estimate_M2(series, S, N, (N + 1, self.cfg.N_max))
            except BoundError:
                est["M2"] = None
            entry = {}
            for name, e in est.items():
                supplied = self.cfg.constants.get(name)
                if supplied is not None and (name == "M" or N == self.cfg.N):
                    entry[name] = {"value": supplied, "source": "supplied", "estimate": e}
                else:
                    entry[name] = {"value": None if e is None else e.value, "source": "estimated",
                                   "estimate": e}
            out.append(entry)
        return out

    @_stage("bounds")
    def errors(self, N: int | None = None, R: float | None = None, kind: str | None = None) -> list[ErrorBound]:
        N = self.cfg.N if N is None else N
        R = self.radius().R if R is None else R
        kind = self.cfg.bound_kind if kind is None else kind
        name = CONSTANT_FOR_KIND[kind]
        out = []
        for c in self.constants(N):
            value = c[name]["value"]
            if value is None:
                raise BoundError(f"constant {name} unavailable for bound {kind} at N={N}")
            out.append(error_bound(kind, value, self.radius().S, R, N, self.sys.n))
        return out

    @_stage("candidate")
    def candidate(self, N: int | None = None) -> LyapunovCandidate:
        N = self.cfg.N if N is None else N
        return self._cached(("candidate", N), lambda: build_candidate(self.phis, self.spectrum(), N))

    @_stage("certificate")
    def certificate(self, N: int | None = None, R: float | None = None,
                    kind: str | None = None) -> RoaCertificate:
        N = self.cfg.N if N is None else N
        R = self.radius().R if R is None else R
        kind = self.cfg.bound_kind if kind is None else kind

        def run():
            notes = []
            name = CONSTANT_FOR_KIND[kind]
            for i, c in enumerate(self.constants(N)):
                notes.append(f"eigenfunction {i}: {name} {c[name]['source']}")
            if self.radius().S_source == "supplied":
                notes.append("S supplied by the configuration")
            if kind == "prop3":
                notes.append("M2 includes a fitted geometric remainder beyond the coefficient window")
            return certify_roa(self.sys, self.candidate(N), self.errors(N, R, kind), R,
                               self.cfg.grid.gamma2_face, self.cfg.grid.shrink, notes)
        return self._cached(("certificate", N, R, kind), run)

    @_stage("surrogate")
    def surrogate(self) -> dict:
        def run():
            cand = self.candidate()
            cert = self.certificate()
            R = self.radius().R
            sf = build_surrogate(cand)
            defects = surrogate_defect_bounds(self.sys, sf, R, self.cfg.grid.surrogate)
            delta = grad_V_bounds(cand, R)
            g1 = surrogate_gamma1(defects.eps, delta, cand.lambda_m)
            resid, scale = exactness_residual(sf, box_grid(self.sys.n, R, self.cfg.grid.surrogate))
            mismatch = check_surrogate_spectrum(sf, self.spectrum(), R)
            return {
                "field": sf,
                "eps": defects.eps,
                "delta": delta,
                "gamma1": g1,
                "gamma2": cert.gamma2,
                "status": "certified" if g1 < cert.gamma2 else "empty-band",
                "grid_res": defects.grid_res,
                "safety": defects.safety,
                "min_det": defects.min_det,
                "det_tol": sf.det_tol,
                "exactness_residual": resid,
                "exactness_scale": scale,
                "spectrum_mismatch": mismatch,
            }
        return self._cached("surrogate", run)

    @_stage("validation")
    def validation(self):
        v = self.cfg.validation
        return self._cached("validation", lambda: validate_by_integration(
            self.sys, self.candidate(), self.certificate(), v.samples, v.horizon, v.seed, v.step))

    # -- reporting -----------------------------------------------------------

    def document(self, include_surrogate: bool | None = None) -> dict:
        """Certificate document (JSON-ready, deterministic key order)."""
        cfg = self.cfg
        spec = self.spectrum()
        rad = self.radius()
        cert = self.certificate()
        doc = {
            "schema": SCHEMA_VERSION,
            "name": cfg.name,
            "status": cert.status,
            "system": {"name": self.sys.name, "n": self.sys.n, "components": self.sys.to_terms(),
                       "domain_box": [float(b) for b in self.sys.domain_box]},
            "N": cfg.N,
            "N_max": cfg.N_max,
            "bound_kind": cfg.bound_kind,
            "spectrum": {
                "lambdas": [{"re": float(v.real), "im": float(v.imag)} for v in spec.lambdas],
                "groups": [list(g) for g in spec.groups],
                "lambda_m": spec.lambda_m,
                "nonresonant_to": spec.nonresonant_to,
                "resonance_tol": spec.resonance_tol,
                "min_gap": spec.min_gap,
            },
            "eigenfunctions": [
                {"index": s.index, "lambda": {"re": s.lam.real, "im": s.lam.imag},
                 "max_condition": s.max_cond, "conditioning_notes": list(s.warnings)}
                for s in self.eigenfunctions()
            ],
            "radius": {
                "rho": [float(v) for v in rad.rho],
                "per_eigenfunction": [
                    {"rho": [float(v) for v in e.rho], "objective": e.objective, "select": e.select,
                     "window": list(e.window)} for e in rad.estimates],
                "S": rad.S,
                "R": rad.R,
                "S_source": rad.S_source,
                "R_source": rad.R_source,
                "fractions": [cfg.radius.f_S, cfg.radius.f_R],
            },
            "constants": [
                {name: {"value": c["value"], "source": c["source"],
                        "estimate": None if c["estimate"] is None else c["estimate"].to_dict()}
                 for name, c in entry.items()}
                for entry in self.constants()
            ],
            "certificate": cert.to_dict(),
        }
        use_sur = cfg.surrogate if include_surrogate is None else include_surrogate
        if use_sur:
            s = self.surrogate()
            doc["surrogate"] = {k: v for k, v in s.items() if k != "field"}
            doc["surrogate"]["note"] = "eps_i are grid maxima of |F - F~| times a safety factor, not rigorous bounds"
        return doc

    def summary(self) -> str:
        doc = self.document()
        cert = self.certificate()
        rad = self.radius()
        lines = [
            f"job: {self.cfg.name} ({self.sys.name or 'unnamed system'}, n={self.sys.n})",
            f"status: {cert.status}",
            "eigenvalues: " + ", ".join(f"{complex(v):.6g}" for v in self.spectrum().lambdas),
            f"non-resonance verified to degree {self.spectrum().nonresonant_to} "
            f"(min gap {self.spectrum().min_gap:.4g})",
            f"estimated radius rho = {[round(float(v), 6) for v in rad.rho]}",
            f"S = {rad.S} ({rad.S_source}), R = {rad.R} ({rad.R_source}), N = {cert.N}",
        ]
        for i, entry in enumerate(self.constants()):
            for name, c in entry.items():
                est = c["estimate"]
                est_txt = "n/a" if est is None else f"{est.value:.6g}"
                val_txt = "n/a" if c["value"] is None else f"{c['value']:.6g}"
                lines.append(f"  eigenfunction {i}: {name} = {val_txt} [{c['source']}; estimate {est_txt}]")
        for b in cert.error_bounds:
            lines.append(f"truncation error bound ({b.kind}): {b.value:.6g}")
        lines += [
            f"eps1 = {cert.eps1:.6g}, eps2 = {cert.eps2:.6g}",
            f"gamma1 = {cert.gamma1:.6g}, gamma2 = {cert.gamma2:.6g} (sampled {cert.gamma2_sampled:.6g})",
            f"band: {cert.omega()}",
        ]
        if "surrogate" in doc:
            s = doc["surrogate"]
            lines.append(f"surrogate field: gamma1 = {s['gamma1']:.6g} ({s['status']}), "
                         f"spectrum mismatch {s['spectrum_mismatch']:.3g}")
        if cert.status != "certified":
            lines.append("the band is empty: no region of attraction is certified")
        lines.append("assumptions:")
        lines += [f"  - {a}" for a in cert.assumptions]
        return "\n".join(lines) + "\n"


# -- artifacts -------------------------------------------------------------------


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def write_eigenfunctions(path, p: Pipeline) -> None:
    write_json(path, [{"index": s.index, "lambda": {"re": s.lam.real, "im": s.lam.imag},
                       "N_max": s.series.cap, "coefficients": s.series.to_records()}
                      for s in p.eigenfunctions()])


def write_coefficient_sequences(path, p: Pipeline) -> None:
    """Per degree: l1 size of P_k phi at S, max |c_k| S^k, and max |c_k|^(1/k)."""
    S = p.radius().S
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eigenfunction", "degree", "l1_truncation_at_S", "max_coeff_times_S_pow", "max_root_coeff"])
        for i, s in enumerate(p.phis):
            l1 = truncation_l1(s, S)
            per = s.degree_max_abs()
            for d in range(1, len(per)):
                root = per[d] ** (1.0 / d) if per[d] > 0 else 0.0
                w.writerow([i, d, repr(float(l1[d])), repr(float(per[d] * S ** d)), repr(float(root))])


def bound_table(p: Pipeline) -> list[ErrorBound]:
    """All three bounds at N = 10, 20, ..., N with the constants in force at each N."""
    N = p.cfg.N
    Ns = sorted(set(range(10, N + 1, 10)) | {N})
    rows = []
    for kind in BOUND_KINDS:
        for n_ in Ns:
            try:
                rows.extend(p.errors(n_, None, kind))
            except StageError:
                continue
    return rows


def export_plot_grid(p: Pipeline, out_dir, resolution: int | None = None) -> list[Path]:
    """Lattice of V~ with band flags, band boundary curves and the gamma2 level set."""
    out = Path(out_dir)
    cand, cert = p.candidate(), p.certificate()
    n, R = cand.n, cert.R
    res = resolution or p.cfg.grid.omega_export or {1: 2001, 2: 201}.get(n, 41)
    axis = np.linspace(-R, R, res)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    V = cand.value(pts)
    band = (V > cert.gamma1) & (V < cert.gamma2)
    written = [out / "vtilde_grid.csv"]
    with open(written[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x_{i + 1}" for i in range(n)] + ["V", "in_omega"])
        for x, v, b in zip(pts, V, band):
            w.writerow([repr(float(c)) for c in x] + [repr(float(v)), int(b)])
    if cert.status != "certified" or n > 2:
        return written
    curves = {"gamma1": level_curves(cand, R, cert.gamma1, axis, V.reshape(mesh[0].shape)),
              "gamma2": level_curves(cand, R, cert.gamma2, axis, V.reshape(mesh[0].shape))}
    for fname, labels in (("omega_boundary.csv", ("gamma1", "gamma2")), ("gamma2_level.csv", ("gamma2",))):
        path = out / fname
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "value", "curve", "point"] + [f"x_{i + 1}" for i in range(n)])
            for label in labels:
                level = cert.gamma1 if label == "gamma1" else cert.gamma2
                for c, curve in enumerate(curves[label]):
                    for j, x in enumerate(curve):
                        w.writerow([label, repr(level), c, j] + [repr(float(v)) for v in x])
        written.append(path)
    return written


def level_curves(cand: LyapunovCandidate, R: float, level: float, axis: np.ndarray,
                 V: np.ndarray) -> list[np.ndarray]:
    """Points of {V~ = level} on the lattice: bracketed roots in 1-D, contour lines in 2-D."""
    if cand.n == 1:
        g = V - level
        roots = []
        for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
            roots.append(brentq(lambda t: cand.value(np.array([t])) - level, axis[i], axis[i + 1], xtol=1e-14))
        return [np.array([[r]]) for r in roots]
    # contourpy expects z[j, i] at (x[i], y[j]); V is indexed [i1, i2]
    gen = contourpy.contour_generator(axis, axis, V.T)
    return [np.asarray(line) for line in gen.lines(level)]


def write_artifacts(p: Pipeline, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    doc = p.document()
    write_json(out / "certificate.json", doc)
    (out / "summary.txt").write_text(p.summary(), encoding="utf-8")
    files += [out / "certificate.json", out / "summary.txt"]
    write_eigenfunctions(out / "eigenfunctions.json", p)
    write_coefficient_sequences(out / "coefficient_sequences.csv", p)
    files += [out / "eigenfunctions.json", out / "coefficient_sequences.csv"]
    scan = p.radius().scan
    if scan is not None:
        an.write_scan_csv(out / "radius_scan.csv", scan[0], scan[1])
        files.append(out / "radius_scan.csv")
    write_bound_csv(out / "bound_sweep.csv", bound_table(p))
    files.append(out / "bound_sweep.csv")
    files += export_plot_grid(p, out)
    if p.cfg.surrogate:
        sf = p.surrogate()["field"]
        write_comparison_csv(out / "surrogate_comparison.csv", p.sys, sf,
                             box_grid(p.sys.n, p.radius().R, p.cfg.grid.surrogate))
        files.append(out / "surrogate_comparison.csv")
    return files


@dataclass
class PipelineResult:
    pipeline: Pipeline
    certificate: RoaCertificate
    document: dict
    files: list[Path]

    @property
    def exit_code(self) -> int:
        return {"certified": 0, "empty-band": 2}.get(self.certificate.status, 1)


def run_pipeline(cfg: JobConfig, out_dir=None, write: bool = True) -> PipelineResult:
    """Run every stage and (optionally) write the artifacts to ``out_dir``."""
    p = Pipeline(cfg)
    cert = p.certificate()
    doc = p.document()
    files = []
    if write:
        out_dir = out_dir or cfg.outputs or f"out/{cfg.name}"
        files = write_artifacts(p, out_dir)
    return PipelineResult(p, cert, doc, files)


# -- sweeps ----------------------------------------------------------------------


@dataclass
class SweepResult:
    axis: str
    rows: list[dict]
    summary: dict

    def write_csv(self, path) -> None:
        cols = ["axis", "value", "status", "eps1", "eps2", "gamma1", "gamma2", "band_width", "message"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([self.axis] + [r[c] if isinstance(r[c], str) else repr(r[c]) for c in cols[1:]])


def _strict(values, decreasing: bool) -> bool:
    pairs = list(zip(values, values[1:]))
    return all((b < a) if decreasing else (b > a) for a, b in pairs)


def sweep(cfg: JobConfig, axis: str, values, pipeline: Pipeline | None = None) -> SweepResult:
    """Certificates over a list of truncation orders (``axis="N"``) or radii (``axis="R"``).

    A failing point records its error and the sweep continues.
    """
    if axis not in ("N", "R"):
        raise KoopmanError(f"sweep axis must be 'N' or 'R', got {axis!r}")
    values = list(values)
    if not values:
        raise KoopmanError("sweep needs at least one value")
    p = pipeline or Pipeline(cfg)
    rows = []
    for v in values:
        v = int(v) if axis == "N" else float(v)
        try:
            if axis == "N" and not 2 <= v < cfg.N_max:
                raise KoopmanError(f"N={v} outside [2, N_max={cfg.N_max})")
            cert = p.certificate(N=v) if axis == "N" else p.certificate(R=v)
            rows.append({"value": v, "status": cert.status, "eps1": cert.eps1, "eps2": cert.eps2,
                         "gamma1": cert.gamma1, "gamma2": cert.gamma2, "band_width": cert.band_width,
                         "message": ""})
        except KoopmanError as exc:
            nan = math.nan
            rows.append({"value": v, "status": "error", "eps1": nan, "eps2": nan, "gamma1": nan,
                         "gamma2": nan, "band_width": nan, "message": str(exc)})
    ok = [r for r in rows if r["status"] != "error"]
    g1 = [r["gamma1"] for r in ok]
    g2 = [r["gamma2"] for r in ok]
    if axis == "N":
        summary = {"gamma1_strictly_decreasing": _strict(g1, True)}
    else:
        summary = {"gamma1_strictly_increasing": _strict(g1, False),
                   "gamma2_strictly_increasing": _strict(g2, False)}
    summary["points"] = len(rows)
    summary["failed"] = len(rows) - len(ok)
    return SweepResult(axis, rows, summary)
