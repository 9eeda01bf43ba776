"""Cauchy-Hadamard estimates of the polydisc on which an eigenfunction converges.

For a one-variable series the radius is 1 / limsup |c_k|^{1/k}; the limsup is
approximated by the maximum over a tail window of degrees.  In n variables a
candidate polyradius rho is scored by

    | 1 - max_{1 <= |k| <= N} (|c_k| rho^k)^{1/|k|} |,

which vanishes on the boundary of the estimated convergence domain.  That
boundary is a hypersurface, so on a grid the minimizer is not unique: every
grid point hugging the surface scores about the same.  :func:`radius_nd`
therefore picks, among the grid points just inside the surface, the one with
the largest ``min(rho)`` (the quantity that becomes the working radius S);
``select="argmin"`` returns the plain minimizer instead.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .polyalg import PowerSeries

DEFAULT_F_S = 0.9
DEFAULT_F_R = 0.87


@dataclass(frozen=True)
class RadiusEstimate:
    rho: np.ndarray
    objective: float
    window: tuple[int, int]
    S: float | None = None
    R: float | None = None
    fractions: tuple[float, float] | None = None
    select: str = "boundary"
    grid_shape: tuple[int, ...] = field(default=())

    def with_radii(self, S: float, R: float, fractions=None) -> "RadiusEstimate":
        return RadiusEstimate(self.rho, self.objective, self.window, S, R, fractions,
                              self.select, self.grid_shape)


def radius_1d(coeffs, window: tuple[int, int] | None = None) -> float:
    """Radius of convergence from magnitudes ``coeffs[k] = |c_k|``.

    ``window`` is an inclusive degree range; by default the upper half of the
    available degrees.  Returns ``math.inf`` when the window holds only zeros.
    """
    a = np.abs(np.asarray(coeffs, dtype=complex))
    top = len(a) - 1
    lo, hi = window if window is not None else (max(1, top // 2), top)
    lo, hi = max(lo, 1), min(hi, top)
    if hi < lo:
        raise ValueError(f"empty coefficient window ({lo}, {hi})")
    k = np.arange(lo, hi + 1)
    tail = a[lo:hi + 1]
    nz = tail > 0
    if not nz.any():
        return math.inf
    root = np.max(np.exp(np.log(tail[nz]) / k[nz]))
    return float(1.0 / root)


def _log_terms(series: PowerSeries, N: int):
    deg = series.degrees
    keep = (deg >= 1) & (deg <= N)
    d = deg[keep].astype(float)
    weights = series.exps[keep] / d[:, None]
    base = np.log(np.abs(series.vals[keep])) / d
    return weights, base


def max_root_terms(series: PowerSeries, rhos, N: int | None = None, chunk: int = 1024) -> np.ndarray:
    """max_{1<=|k|<=N} (|c_k| rho^k)^{1/|k|} for each row of ``rhos``."""
    N = series.cap if N is None else N
    rhos = np.atleast_2d(np.asarray(rhos, dtype=float))
    weights, base = _log_terms(series, N)
    out = np.zeros(rhos.shape[0])
    if len(base) == 0:
        return out
    with np.errstate(divide="ignore"):
        logs = np.log(rhos)
    for s in range(0, len(logs), chunk):
        out[s:s + chunk] = np.exp((logs[s:s + chunk] @ weights.T + base).max(axis=1))
    return out


def coeff_objective(series: PowerSeries, rho, N: int | None = None) -> float:
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (series.n,))
    return float(abs(1.0 - max_root_terms(series, rho[None, :], N)[0]))


def _grid_axes(grid, n: int) -> list[np.ndarray]:
    if all(np.isscalar(g) for g in grid):
        axes = [np.asarray(grid, dtype=float)] * n
    else:
        axes = [np.asarray(g, dtype=float) for g in grid]
    if len(axes) != n:
        raise ValueError(f"grid has {len(axes)} axes for a series in {n} variables")
    for g in axes:
        if g.size == 0:
            raise ValueError("empty radius grid")
        if np.any(g <= 0):
            raise ValueError("radius grid entries must be positive")
    return axes


def scan_objective(series: PowerSeries, grid, N: int | None = None):
    """Objective and max-root values on a tensor grid; arrays of the grid's shape."""
    axes = _grid_axes(grid, series.n)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    top = max_root_terms(series, pts, N).reshape(mesh[0].shape)
    return axes, np.abs(1.0 - top), top


def _graded_key(idx: tuple[int, ...]):
    return (sum(idx),) + tuple(-i for i in idx)


def radius_nd(series: PowerSeries, grid, N: int | None = None,
              select: str = "boundary") -> RadiusEstimate:
    """Polyradius estimate from a tensor grid of candidate radii.

    ``select="boundary"``: among grid points with max-root < 1 that have a
    neighbour (one step up along some axis) with max-root >= 1, take the one
    maximizing min(rho), then the smallest objective.  Falls back to the plain
    minimizer when the grid does not straddle the boundary.  Remaining ties go
    to the smallest graded-lex grid index.
    """
    N = series.cap if N is None else N
    axes, obj, top = scan_objective(series, grid, N)
    return select_radius(axes, obj, top, N, select)


def select_radius(axes, obj: np.ndarray, top: np.ndarray, N: int,
                  select: str = "boundary") -> RadiusEstimate:
    """Pick the polyradius from a scan produced by :func:`scan_objective`."""
    if select not in ("boundary", "argmin"):
        raise ValueError(f"unknown selection rule {select!r}")
    inside = top < 1.0
    edge = np.zeros_like(inside)
    for ax in range(obj.ndim):
        lead = [slice(None)] * obj.ndim
        nxt = [slice(None)] * obj.ndim
        lead[ax] = slice(0, -1)
        nxt[ax] = slice(1, None)
        edge[tuple(lead)] |= inside[tuple(lead)] & ~inside[tuple(nxt)]
    rule = select
    cands = [tuple(int(i) for i in c) for c in np.argwhere(edge)] if select == "boundary" else []
    if not cands:
        rule = "argmin"
        cands = [tuple(int(i) for i in c) for c in np.argwhere(obj == obj.min())]

    def rho_of(idx):
        return np.array([axes[j][i] for j, i in enumerate(idx)])

    if rule == "boundary":
        best = min(cands, key=lambda c: (-rho_of(c).min(), obj[c], _graded_key(c)))
    else:
        best = min(cands, key=_graded_key)
    return RadiusEstimate(rho_of(best), float(obj[best]), (1, N), select=rule,
                          grid_shape=obj.shape)


def step_grid(domain_box, step: float) -> list[np.ndarray]:
    """Radii step, 2 step, ... up to box_i on each axis."""
    return [step * np.arange(1, int(math.floor(b / step + 1e-9)) + 1) for b in np.atleast_1d(domain_box)]


def write_scan_csv(path, axes, obj: np.ndarray) -> None:
    mesh = np.meshgrid(*axes, indexing="ij")
    n = len(axes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"rho_{i + 1}" for i in range(n)] + ["objective"])
        for row in zip(*(m.ravel() for m in mesh), obj.ravel()):
            w.writerow([repr(float(v)) for v in row])


def default_grid(domain_box, points: int = 101) -> list[np.ndarray]:
    """``points`` radii per axis, evenly spaced on (0, box_i]."""
    return [np.linspace(b / points, b, points) for b in np.atleast_1d(domain_box)]


def choose_S_R(rho, f_S: float = DEFAULT_F_S, f_R: float = DEFAULT_F_R,
               S: float | None = None, R: float | None = None) -> tuple[float, float]:
    """Working radius S and evaluation radius R below the estimated radius.

    Defaults are S = f_S * min(rho) and R = f_R * S; explicit values win.
    """
    rmin = float(np.min(rho))
    if S is None:
        if not 0 < f_S <= 1:
            raise ValueError(f"f_S must lie in (0, 1], got {f_S}")
        S = f_S * rmin
    if R is None:
        if not 0 < f_R < 1:
            raise ValueError(f"f_R must lie in (0, 1), got {f_R}")
        R = f_R * S
    if not 0 < R < S:
        raise ValueError(f"radii must satisfy 0 < R < S, got S={S}, R={R}")
    if S > rmin:
        raise ValueError(f"S={S} exceeds the estimated radius min(rho)={rmin:.6g}")
    return float(S), float(R)
