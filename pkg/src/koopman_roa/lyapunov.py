"""Lyapunov candidate from truncated eigenfunctions and the certified band of attraction.

With principal eigenfunctions phi_i (eigenvalues lam_i, Re lam_i < 0) the
function V = sum_i |phi_i|^2 satisfies dV/dt = 2 sum_i Re(lam_i) |phi_i|^2 <= 2
lam_m V.  The candidate replaces phi_i by its truncation P_N phi_i.  Given
bounds eps1 >= |V - V~| and eps2 >= |dV/dt - dV~/dt| on the box of half-width
R, dV~/dt < 0 wherever V~ > gamma1 = (eps2 + 2|lam_m| eps1) / (2|lam_m|), so
every state of the band

    Omega = {x in box : gamma1 < V~(x) < gamma2},

with gamma2 the smallest value of V~ on the box boundary, is driven into
{V~ < gamma1}.

Real systems contribute one eigenfunction per conjugate pair with weight 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import ErrorBound
from .errors import DimensionError, KoopmanError
from .polyalg import PowerSeries, add, diff, evaluate, l1_bound, mul, scale, truncate
from .spectral import SpectralData, SystemDef, apply_generator

DEFAULT_FACE_POINTS = 2001
DEFAULT_SHRINK = 0.999


@dataclass(frozen=True, eq=False)
class LyapunovCandidate:
    """V~ = sum_i weight_i |P_N phi_i|^2 and the truncated eigenfunctions it is built from.

    ``phis`` holds the complex truncations P_N phi_i, ``parts`` their real and
    imaginary parts, ``lambdas`` the matching eigenvalues.
    """

    V: PowerSeries
    phis: tuple[PowerSeries, ...]
    parts: tuple[tuple[PowerSeries, PowerSeries], ...]
    weights: tuple[int, ...]
    lambdas: tuple[complex, ...]
    N: int
    _grads: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return self.V.n

    @property
    def lambda_m(self) -> float:
        return max(lam.real for lam in self.lambdas)

    def phi_values(self, x: np.ndarray) -> np.ndarray:
        """P_N phi_i at points (P, n); shape (P, groups), complex."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([evaluate(p, pts) for p in self.phis], axis=1)

    def value(self, x) -> np.ndarray | float:
        """V~ at a point or at points of shape (P, n), computed from the eigenfunctions."""
        x = np.asarray(x, dtype=float)
        vals = self.phi_values(x)
        out = (np.abs(vals) ** 2) @ np.asarray(self.weights, dtype=float)
        return float(out[0]) if x.ndim == 1 else out

    def derivative(self, sys: SystemDef, x) -> np.ndarray | float:
        """dV~/dt = grad V~ . F at a point or at points of shape (P, n)."""
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        f = sys(pts)
        out = np.zeros(pts.shape[0])
        grads = self._grads or tuple(tuple(diff(p, j) for j in range(self.n)) for p in self.phis)
        for w, p, g in zip(self.weights, self.phis, grads):
            val = evaluate(p, pts)
            dir_deriv = sum(evaluate(g[j], pts) * f[:, j] for j in range(self.n))
            out += 2.0 * w * np.real(np.conj(val) * dir_deriv)
        return float(out[0]) if x.ndim == 1 else out


def build_candidate(phis, spec: SpectralData, N: int) -> LyapunovCandidate:
    """Candidate from one eigenfunction per entry of ``spec.groups`` (same order)."""
    phis = list(phis)
    if len(phis) != len(spec.groups):
        raise DimensionError(
            f"need one eigenfunction per real eigenvalue or conjugate pair ({len(spec.groups)}), "
            f"got {len(phis)}")
    covered = sorted(i for g in spec.groups for i in g)
    if covered != list(range(len(spec.lambdas))):
        raise DimensionError(f"eigenvalue groups {spec.groups} do not cover all eigenvalues")
    if N < 1:
        raise ValueError(f"truncation degree must be >= 1, got {N}")
    n = len(spec.lambdas)
    trunc, parts, weights, lams = [], [], [], []
    V = PowerSeries(n, 2 * N)
    for (idx, w), phi in zip(spec.principal(), phis):
        if phi.n != n:
            raise DimensionError(f"eigenfunction in {phi.n} variables for an n={n} system")
        if phi.cap < N:
            raise ValueError(f"eigenfunction computed to degree {phi.cap} < N={N}")
        p = truncate(phi, N).with_cap(N)
        re, im = p.real, p.imag
        trunc.append(p)
        parts.append((re, im))
        weights.append(w)
        lams.append(complex(spec.lambdas[idx]))
        V = add(V, scale(add(mul(re, re, 2 * N), mul(im, im, 2 * N)), w))
    grads = tuple(tuple(diff(p, j) for j in range(n)) for p in trunc)
    return LyapunovCandidate(V.real, tuple(trunc), tuple(parts), tuple(weights), tuple(lams), N, grads)


# -- error propagation -------------------------------------------------------------


def bound_V_error(sups, errs, weights) -> tuple[float, list[float]]:
    """B_i = 2 sup_i err_i + err_i^2 and eps1 = sum_i weight_i B_i."""
    sups, errs, weights = list(sups), list(errs), list(weights)
    if not len(sups) == len(errs) == len(weights):
        raise ValueError("sups, errs and weights must have equal length")
    B = [2.0 * s * e + e * e for s, e in zip(sups, errs)]
    return math.fsum(w * b for w, b in zip(weights, B)), B


def defect_polynomials(sys: SystemDef, phi: PowerSeries, N: int) -> tuple[PowerSeries, PowerSeries]:
    """(P_N - I) L P_N phi for the real and imaginary parts of phi.

    Only degrees N+1 .. N+deg(F)-1 can be non-zero; the cap is N+deg(F)-1.
    """
    cap = N + max(sys.degree, 1) - 1
    p = truncate(phi, N)
    out = []
    for part in (p.real, p.imag):
        full = apply_generator(sys, part, cap)
        out.append((truncate(full, N) - full).with_cap(cap))
    return out[0], out[1]


def bound_Vdot_error(lambdas, B, M, K, dR_sups, dI_sups, weights) -> float:
    """eps2 = 2 sum_i weight_i (|Re lam_i| B_i + M_i sup|d_R,i| + K_i sup|d_I,i|)."""
    terms = [w * (abs(complex(lam).real) * b + m * dr + k * di)
             for lam, b, m, k, dr, di, w in zip(lambdas, B, M, K, dR_sups, dI_sups, weights)]
    return 2.0 * math.fsum(terms)


def gamma1(eps1: float, eps2: float, lambda_m: float) -> float:
    """Level above which dV~/dt < 0 is guaranteed: (eps2 + 2|lam_m| eps1) / (2|lam_m|)."""
    if not lambda_m < 0:
        raise ValueError(f"lambda_m must be negative, got {lambda_m}")
    if eps1 < 0 or eps2 < 0:
        raise ValueError("error bounds must be non-negative")
    return (eps2 + 2.0 * abs(lambda_m) * eps1) / (2.0 * abs(lambda_m))


def box_faces(n: int, R: float, grid_res: int, chunk: int = 100_000):
    """Yield chunks of points sampling the 2n faces of the box of half-width R."""
    if grid_res < 2:
        raise ValueError(f"grid_res must be >= 2, got {grid_res}")
    axis = np.linspace(-R, R, grid_res)
    total = grid_res ** (n - 1)
    for j in range(n):
        for side in (-R, R):
            for s in range(0, total, chunk):
                flat = np.arange(s, min(s + chunk, total))
                pts = np.empty((len(flat), n))
                rest = np.unravel_index(flat, (grid_res,) * (n - 1)) if n > 1 else ()
                others = [a for a in range(n) if a != j]
                for a, r in zip(others, rest):
                    pts[:, a] = axis[r]
                pts[:, j] = side
                yield pts


def sampled_gamma2(cand: LyapunovCandidate, R: float, grid_res: int = DEFAULT_FACE_POINTS) -> float:
    """Minimum of V~ over a uniform sampling of the box boundary."""
    return float(min(cand.value(pts).min() for pts in box_faces(cand.n, R, grid_res)))


def gamma2(cand: LyapunovCandidate, R: float, grid_res: int = DEFAULT_FACE_POINTS,
           shrink: float = DEFAULT_SHRINK) -> float:
    """Sampled boundary minimum of V~ times ``shrink`` (the largest level set inside the box)."""
    if not 0 < shrink <= 1:
        raise ValueError(f"shrink must lie in (0, 1], got {shrink}")
    return shrink * sampled_gamma2(cand, R, grid_res)


# -- certificate -----------------------------------------------------------------


@dataclass
class RoaCertificate:
    status: str
    S: float
    R: float
    N: int
    lambda_m: float
    lambdas: list[complex]
    weights: list[int]
    error_bounds: list[ErrorBound]
    sups: list[float]
    B: list[float]
    M: list[float]
    K: list[float]
    defect_sups: list[tuple[float, float]]
    eps1: float
    eps2: float
    gamma1: float
    gamma2: float
    gamma2_sampled: float
    grid_res: int
    shrink: float
    assumptions: list[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    @property
    def band_width(self) -> float:
        return self.gamma2 - self.gamma1

    def omega(self) -> str:
        return (f"{{x : max_i |x_i| <= {self.R!r}, {self.gamma1!r} < V~(x) < {self.gamma2!r}}}")

    def in_omega(self, cand: LyapunovCandidate, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        v = cand.value(pts)
        inside = np.all(np.abs(pts) <= self.R, axis=1)
        return inside & (v > self.gamma1) & (v < self.gamma2)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "S": self.S,
            "R": self.R,
            "N": self.N,
            "lambda_m": self.lambda_m,
            "lambdas": [{"re": complex(v).real, "im": complex(v).imag} for v in self.lambdas],
            "weights": list(self.weights),
            "error_bounds": [b.to_dict() for b in self.error_bounds],
            "sup_PN_phi": list(self.sups),
            "B": list(self.B),
            "M": list(self.M),
            "K": list(self.K),
            "defect_sups": [list(d) for d in self.defect_sups],
            "eps1": self.eps1,
            "eps2": self.eps2,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "gamma2_sampled": self.gamma2_sampled,
            "gamma2_grid_points_per_face_axis": self.grid_res,
            "gamma2_shrink": self.shrink,
            "omega": self.omega(),
            "assumptions": list(self.assumptions),
        }


def certify_roa(sys: SystemDef, cand: LyapunovCandidate, errors: list[ErrorBound], R: float,
                grid_res: int = DEFAULT_FACE_POINTS, shrink: float = DEFAULT_SHRINK,
                assumptions=()) -> RoaCertificate:
    """Assemble eps1, eps2, gamma1 and gamma2 into a certificate.

    ``errors`` holds one truncation-error bound per eigenfunction of ``cand``,
    all evaluated at radius ``R``.  The outcome is reported through ``status``:
    ``certified`` when gamma1 < gamma2, ``empty-band`` otherwise, and
    ``failed`` when some quantity is not finite.
    """
    errors = list(errors)
    if len(errors) != len(cand.phis):
        raise DimensionError(f"{len(errors)} error bounds for {len(cand.phis)} eigenfunctions")
    for e in errors:
        if not math.isclose(e.R, R, rel_tol=1e-12) or e.N != cand.N:
            raise ValueError(f"error bound computed at R={e.R}, N={e.N}; certificate uses R={R}, N={cand.N}")
    notes = list(assumptions)
    notes.append("S is a Cauchy-Hadamard estimate from finitely many coefficients, not a verified radius")
    notes.append(f"gamma2 sampled on {grid_res} points per face axis and scaled by {shrink}")
    for e in errors:
        notes.extend(e.assumptions)

    sups = [l1_bound(p, R) for p in cand.phis]
    eps1, B = bound_V_error(sups, [e.value for e in errors], cand.weights)
    M = [l1_bound(re, R) for re, _ in cand.parts]
    K = [l1_bound(im, R) for _, im in cand.parts]
    dsups = []
    for p in cand.phis:
        dR, dI = defect_polynomials(sys, p, cand.N)
        dsups.append((l1_bound(dR, R), l1_bound(dI, R)))
    eps2 = bound_Vdot_error(cand.lambdas, B, M, K, [d[0] for d in dsups], [d[1] for d in dsups],
                            cand.weights)
    lam_m = cand.lambda_m
    g1 = gamma1(eps1, eps2, lam_m)
    g2_raw = sampled_gamma2(cand, R, grid_res)
    g2 = shrink * g2_raw
    if not all(math.isfinite(v) for v in (eps1, eps2, g1, g2)) or g2 <= 0:
        status = "failed"
    else:
        status = "certified" if g1 < g2 else "empty-band"
    return RoaCertificate(status, errors[0].S, R, cand.N, lam_m, list(cand.lambdas), list(cand.weights),
                          errors, sups, B, M, K, dsups, eps1, eps2, g1, g2, g2_raw, grid_res, shrink, notes)


# -- trajectory validation -------------------------------------------------------


@dataclass
class ValidationReport:
    status: str
    samples: int
    reached: int
    draws: int
    horizon: float
    step: float
    min_margin: float
    max_entry_time: float
    points: np.ndarray = field(repr=False, default_factory=lambda: np.empty((0, 0)))

    @property
    def fraction(self) -> float:
        return self.reached / self.samples if self.samples else 0.0

    def to_dict(self) -> dict:
        return {"status": self.status, "samples": self.samples, "reached": self.reached,
                "fraction": self.fraction, "draws": self.draws, "horizon": self.horizon,
                "step": self.step, "min_margin": self.min_margin,
                "max_entry_time": self.max_entry_time}


def sample_band(cand: LyapunovCandidate, cert: RoaCertificate, samples: int, rng: np.random.Generator,
                budget: int | None = None, batch: int = 4096) -> tuple[np.ndarray, int]:
    """Rejection-sample up to ``samples`` points of Omega; returns (points, draws used)."""
    budget = 1000 * samples if budget is None else budget
    found, draws = [], 0
    count = 0
    while count < samples and draws < budget:
        m = min(batch, budget - draws)
        pts = rng.uniform(-cert.R, cert.R, size=(m, cand.n))
        draws += m
        keep = pts[cert.in_omega(cand, pts)]
        found.append(keep)
        count += len(keep)
    pts = np.concatenate(found) if found else np.empty((0, cand.n))
    return pts[:samples], draws


def rk4_step(sys: SystemDef, x: np.ndarray, h: float) -> np.ndarray:
    k1 = sys(x)
    k2 = sys(x + 0.5 * h * k1)
    k3 = sys(x + 0.5 * h * k2)
    k4 = sys(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def validate_by_integration(sys: SystemDef, cand: LyapunovCandidate, cert: RoaCertificate,
                            samples: int = 1000, horizon: float | None = None, seed: int = 0,
                            step: float | None = None, check_every: int = 20,
                            budget: int | None = None) -> ValidationReport:
    """Integrate sampled band points and count those that enter {V~ < gamma1}.

    Uses the classic fixed-step fourth-order Runge-Kutta scheme with step
    1e-3/|lam_m| and horizon 50/|lam_m| unless given.  ``min_margin`` is the
    smallest -dV~/dt seen at checked trajectory states inside Omega.
    """
    if not cert.certified:
        raise KoopmanError(f"cannot validate a certificate with status {cert.status!r}")
    rate = abs(cert.lambda_m)
    h = 1e-3 / rate if step is None else float(step)
    T = 50.0 / rate if horizon is None else float(horizon)
    rng = np.random.default_rng(seed)
    pts, draws = sample_band(cand, cert, samples, rng, budget)
    if len(pts) < samples:
        return ValidationReport("band-too-thin", len(pts), 0, draws, T, h, math.nan, math.nan, pts)

    x = pts.copy()
    steps = int(math.ceil(T / h))
    # escaping trajectories overflow before they are retired; that is detected below
    with np.errstate(over="ignore", invalid="ignore"):
        reached, entry, margin = _integrate(sys, cand, cert, x, h, steps, check_every)
    n_reached = int(reached.sum())
    status = "ok" if n_reached == len(x) else "escaped"
    max_entry = float(np.nanmax(entry)) if n_reached else math.nan
    return ValidationReport(status, len(x), n_reached, draws, T, h, margin, max_entry, pts)


def _integrate(sys, cand, cert, x, h, steps, check_every):
    """RK4 loop; returns (reached flags, entry times, min margin)."""
    active = np.arange(len(x))
    reached = np.zeros(len(x), dtype=bool)
    entry = np.full(len(x), math.nan)
    margin = math.inf
    for s in range(steps + 1):
        if s % check_every == 0 or s == steps:
            cur = x[active]
            v = cand.value(cur)
            band = (v > cert.gamma1) & (v < cert.gamma2) & np.all(np.abs(cur) <= cert.R, axis=1)
            if band.any():
                margin = min(margin, float((-cand.derivative(sys, cur[band])).min()))
            done = v < cert.gamma1
            bad = ~np.all(np.isfinite(cur), axis=1) | (np.abs(cur).max(axis=1, initial=0) > 1e6)
            reached[active[done]] = True
            entry[active[done]] = s * h
            active = active[~(done | bad)]
            if len(active) == 0 or s == steps:
                break
        x[active] = rk4_step(sys, x[active], h)
    return reached, entry, margin
