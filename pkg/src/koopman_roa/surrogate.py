"""Surrogate vector field for which the truncated eigenfunctions are exact.

Stacking the gradients of the truncated eigenfunctions into J_phi(x), the field

    F~(x) = J_phi(x)^{-1} [lam_1 P_N phi_1(x), ..., lam_n P_N phi_n(x)]^T

satisfies grad(P_N phi_i) . F~ = lam_i P_N phi_i wherever J_phi is invertible.
A conjugate pair contributes the real rows (Re phi, Im phi) with right-hand
sides Re(lam phi) and Im(lam phi), so F~ is computed in real arithmetic.

If |F_i - F~_i| < eps_i and |dV~/dx_i| < delta_i on the box, then V~ decreases
along F wherever V~ > sum_i eps_i delta_i / (2 |lam_m|), which yields a second
band of attraction.  The eps_i here are grid maxima, not rigorous bounds.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import KoopmanError, SingularJacobianError
from .lyapunov import LyapunovCandidate
from .polyalg import EQ_ATOL, EQ_RTOL, PowerSeries, diff, evaluate, l1_bound
from .spectral import SpectralData, SystemDef

DEFAULT_SURROGATE_GRID = 101
DEFAULT_SAFETY = 1.05
DET_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class SurrogateField:
    """Real rows of the eigenfunction system and the data needed to evaluate F~.

    ``rows[r]`` is a real series whose gradient forms row r of J_phi;
    ``rhs[r]`` lists (coefficient, row index) pairs giving row r of the
    right-hand side as a combination of the row series.
    """

    rows: tuple[PowerSeries, ...]
    grads: tuple[tuple[PowerSeries, ...], ...]
    rhs: tuple[tuple[tuple[float, int], ...], ...]
    phis: tuple[PowerSeries, ...]
    lambdas: tuple[complex, ...]
    det_tol: float

    @property
    def n(self) -> int:
        return len(self.rows)

    def jacobian(self, x) -> np.ndarray:
        """J_phi at points (P, n); shape (P, n, n)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        J = np.empty((pts.shape[0], self.n, self.n))
        for r, g in enumerate(self.grads):
            for j in range(self.n):
                J[:, r, j] = evaluate(g[j], pts).real
        return J

    def right_side(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.stack([evaluate(p, pts).real for p in self.rows], axis=1)
        out = np.zeros_like(vals)
        for r, combo in enumerate(self.rhs):
            for c, k in combo:
                out[:, r] += c * vals[:, k]
        return out

    def __call__(self, x):
        return eval_surrogate(self, x)


def build_surrogate(cand: LyapunovCandidate, det_tol: float | None = None) -> SurrogateField:
    """Surrogate field from the truncated eigenfunctions of a Lyapunov candidate."""
    rows, rhs = [], []
    for p, (re, im), lam, w in zip(cand.phis, cand.parts, cand.lambdas, cand.weights):
        a, b = lam.real, lam.imag
        r = len(rows)
        if w == 1:
            rows.append(re)
            rhs.append(((a, r),))
        else:
            rows.extend([re, im])
            rhs.append(((a, r), (-b, r + 1)))
            rhs.append(((a, r + 1), (b, r)))
    n = cand.n
    if len(rows) != n:
        raise KoopmanError(f"{len(rows)} eigenfunction rows for an n={n} system")
    grads = tuple(tuple(diff(p, j) for j in range(n)) for p in rows)
    sf = SurrogateField(tuple(rows), grads, tuple(rhs), cand.phis, cand.lambdas, 0.0)
    if det_tol is None:
        d0 = abs(np.linalg.det(sf.jacobian(np.zeros(n))[0]))
        if d0 == 0:
            raise SingularJacobianError(np.zeros(n), 0.0)
        det_tol = DET_RTOL * d0
    return SurrogateField(sf.rows, grads, sf.rhs, sf.phis, sf.lambdas, float(det_tol))


def eval_surrogate(sf: SurrogateField, x, complex_form: bool = False):
    """F~ at a point (shape (n,)) or at points (shape (P, n)).

    ``complex_form=True`` solves the system with complex conjugate rows
    instead of real rows and checks the imaginary part of the result is below
    rounding level before dropping it.
    """
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    J = sf.jacobian(pts)
    det = np.abs(np.linalg.det(J))
    bad = np.nonzero(~(det > sf.det_tol))[0]
    if len(bad):
        raise SingularJacobianError(pts[bad[0]], det[bad[0]])
    if complex_form:
        out = _complex_solve(sf, pts)
    else:
        out = np.linalg.solve(J, sf.right_side(pts)[..., None])[..., 0]
    return out[0] if x.ndim == 1 else out


def _complex_solve(sf: SurrogateField, pts: np.ndarray) -> np.ndarray:
    Jc, rc = [], []
    for p, lam in zip(sf.phis, sf.lambdas):
        grad = np.stack([evaluate(diff(p, j), pts) for j in range(sf.n)], axis=1)
        val = evaluate(p, pts)
        Jc.append(grad)
        rc.append(lam * val)
        if abs(lam.imag) > 0:
            Jc.append(np.conj(grad))
            rc.append(np.conj(lam * val))
    Jc = np.stack(Jc, axis=1)
    out = np.linalg.solve(Jc, np.stack(rc, axis=1)[..., None])[..., 0]
    tol = EQ_RTOL * np.abs(out).max(axis=1) + EQ_ATOL
    if np.any(np.abs(out.imag).max(axis=1) > tol):
        raise KoopmanError("surrogate field has a non-negligible imaginary part")
    return out.real


def box_grid(n: int, R: float, grid_res: int) -> np.ndarray:
    axis = np.linspace(-R, R, grid_res)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class SurrogateDefects:
    eps: list[float]
    grid_res: int
    safety: float
    min_det: float


def surrogate_defect_bounds(sys: SystemDef, sf: SurrogateField, R: float,
                            grid_res: int = DEFAULT_SURROGATE_GRID,
                            safety: float = DEFAULT_SAFETY) -> SurrogateDefects:
    """eps_i = safety * max over a (grid_res)^n box grid of |F_i - F~_i| (sampled)."""
    pts = box_grid(sys.n, R, grid_res)
    Ft = eval_surrogate(sf, pts)
    diffs = np.abs(sys(pts) - Ft).max(axis=0)
    min_det = float(np.abs(np.linalg.det(sf.jacobian(pts))).min())
    return SurrogateDefects([float(safety * d) for d in diffs], grid_res, safety, min_det)


def grad_V_bounds(cand: LyapunovCandidate, R: float) -> list[float]:
    """delta_i = l1 bound of dV~/dx_i on the box of half-width R."""
    return [l1_bound(diff(cand.V, i), R) for i in range(cand.n)]


def surrogate_gamma1(eps, delta, lambda_m: float) -> float:
    """sum_i eps_i delta_i / (2 |lam_m|)."""
    if not lambda_m < 0:
        raise ValueError(f"lambda_m must be negative, got {lambda_m}")
    return math.fsum(e * d for e, d in zip(eps, delta)) / (2.0 * abs(lambda_m))


def surrogate_jacobian_at_zero(sf: SurrogateField, R: float = 1.0) -> np.ndarray:
    """Central finite-difference Jacobian of F~ at the origin, step 1e-6 max(1, R)."""
    h = 1e-6 * max(1.0, R)
    n = sf.n
    E = np.eye(n) * h
    fwd = eval_surrogate(sf, E)
    bwd = eval_surrogate(sf, -E)
    return ((fwd - bwd) / (2 * h)).T


def check_surrogate_spectrum(sf: SurrogateField, spec: SpectralData, R: float = 1.0) -> float:
    """Largest distance from an eigenvalue of J_F(0) to the spectrum of J_F~(0)."""
    mu = np.linalg.eigvals(surrogate_jacobian_at_zero(sf, R))
    return float(max(np.abs(mu - lam).min() for lam in spec.lambdas))


def exactness_residual(sf: SurrogateField, x) -> tuple[float, float]:
    """(max |grad P_N phi_i . F~ - lam_i P_N phi_i|, magnitude of the terms involved)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    Ft = eval_surrogate(sf, pts)
    worst, scale = 0.0, 0.0
    for p, lam in zip(sf.phis, sf.lambdas):
        grad = np.stack([evaluate(diff(p, j), pts) for j in range(sf.n)], axis=1)
        lhs = (grad * Ft).sum(axis=1)
        rhs = lam * evaluate(p, pts)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
        scale = max(scale, float(np.abs(rhs).max()),
                    float((np.abs(grad) * np.abs(Ft)).sum(axis=1).max()))
    return worst, scale


def write_comparison_csv(path, sys: SystemDef, sf: SurrogateField, pts: np.ndarray) -> None:
    F = sys(pts)
    Ft = eval_surrogate(sf, pts)
    n = sys.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x_{i + 1}" for i in range(n)] + [f"F_{i + 1}" for i in range(n)]
                   + [f"Ft_{i + 1}" for i in range(n)] + [f"err_{i + 1}" for i in range(n)])
        for x, f, ft in zip(pts, F, Ft):
            w.writerow([repr(float(v)) for v in (*x, *f, *ft, *np.abs(f - ft))])
