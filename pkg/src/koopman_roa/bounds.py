"""A-priori bounds on the truncation error |phi - P_N phi| on the polydisc of radius R.

All three bounds assume the series converges on the polydisc of radius S > R
and use r = R / S:

* ``prop1``: M r^{N+1} / (1 - r), where |P_k phi| <= M on radius S for every k.
  The closed form is exact for one variable; for n > 1 it is kept as a
  heuristic (:func:`bound_prop1` records this in ``assumptions``).
* ``prop2``: M1 sum_{k>N} C(n+k-1, k) r^k, where M1 bounds every single
  |c_k| S^{|k|} with |k| > N.
* ``prop3``: sqrt(M2 sum_{k>N} C(n+k-1, k) r^{2k}), where M2 bounds
  sum_{|k|>N} |c_k|^2 S^{2|k|} (Cauchy-Schwarz).

Tails are explicit sums accumulated with :func:`math.fsum` rather than closed
forms, which lose all precision once the tail is far below the full series.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundError
from .polyalg import PowerSeries

BOUND_KINDS = ("prop1", "prop2", "prop3")
TAIL_CUTOFF = 1e-300
MAX_TAIL_TERMS = 10_000_000
FIT_DEGREES = 10


@dataclass(frozen=True)
class ErrorBound:
    """Value of one truncation-error bound and the inputs that produced it."""

    kind: str
    value: float
    N: int
    S: float
    R: float
    n: int
    constant: float
    assumptions: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "N": self.N, "S": self.S, "R": self.R,
                "n": self.n, "constant": self.constant, "assumptions": list(self.assumptions)}


@dataclass(frozen=True)
class ConstantEstimate:
    """A tail constant read off computed coefficients.

    ``window`` is the inclusive degree range used; ``decreasing`` is whether the
    per-degree sequence was observed to be non-increasing there (``None`` when
    not checked).
    """

    name: str
    value: float
    window: tuple[int, int]
    decreasing: bool | None = None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "window": list(self.window),
                "decreasing": self.decreasing, "notes": list(self.notes)}


@dataclass(frozen=True)
class TailConstants:
    """Constants M, M1, M2 with their provenance ("supplied" or "estimated")."""

    M: float | None = None
    M1: float | None = None
    M2: float | None = None
    source: dict = field(default_factory=dict)

    def for_kind(self, kind: str) -> float:
        name = {"prop1": "M", "prop2": "M1", "prop3": "M2"}[_check_kind(kind)]
        value = getattr(self, name)
        if value is None:
            raise BoundError(f"bound {kind} needs the constant {name}")
        return value


def _check_kind(kind: str) -> str:
    if kind not in BOUND_KINDS:
        raise BoundError(f"unknown bound kind {kind!r}; expected one of {BOUND_KINDS}")
    return kind


def _check_inputs(S: float, R: float, N: int, n: int, constant: float, name: str) -> None:
    if not (math.isfinite(S) and math.isfinite(R) and 0 < R < S):
        raise BoundError(f"need 0 < R < S, got R={R}, S={S}")
    if N < 0 or int(N) != N:
        raise BoundError(f"truncation degree must be a non-negative integer, got {N}")
    if n < 1:
        raise BoundError(f"dimension must be >= 1, got {n}")
    if not (math.isfinite(constant) and constant >= 0):
        raise BoundError(f"{name} must be finite and non-negative, got {constant}")


def multiset_tail(n: int, r: float, N: int, cutoff: float = TAIL_CUTOFF) -> float:
    """sum_{k > N} C(n+k-1, k) r^k for 0 <= r < 1, summed term by term."""
    if not 0 <= r < 1:
        raise BoundError(f"tail ratio must lie in [0, 1), got {r}")
    if r == 0:
        return 0.0
    k = N + 1
    log_r = math.log(r)
    log_t = math.lgamma(n + k) - math.lgamma(k + 1) - math.lgamma(n) + k * log_r
    log_cut = math.log(cutoff)
    terms = []
    while True:
        terms.append(math.exp(log_t))
        step = log_r + math.log((n + k) / (k + 1))
        k += 1
        log_t += step
        # stop once terms are negligible and no longer growing
        if log_t < log_cut and step <= 0:
            break
        if len(terms) >= MAX_TAIL_TERMS:
            raise BoundError(f"tail sum did not reach {cutoff:g} within {MAX_TAIL_TERMS} terms (r={r})")
    total = math.fsum(terms)
    if not (math.isfinite(total) and total >= 0):
        raise BoundError(f"inconsistent tail sum {total} for n={n}, r={r}, N={N}")
    return total


def bound_prop1(M: float, S: float, R: float, N: int, n: int = 1) -> ErrorBound:
    _check_inputs(S, R, N, n, M, "M")
    r = R / S
    value = M * r ** (N + 1) / (1 - r)
    notes = ()
    if n > 1:
        notes = ("one-variable geometric tail applied in several variables (heuristic)",)
    return ErrorBound("prop1", value, N, S, R, n, M, notes)


def bound_prop2(M1: float, S: float, R: float, N: int, n: int = 1) -> ErrorBound:
    _check_inputs(S, R, N, n, M1, "M1")
    value = M1 * multiset_tail(n, R / S, N)
    return ErrorBound("prop2", value, N, S, R, n, M1)


def bound_prop3(M2: float, S: float, R: float, N: int, n: int = 1) -> ErrorBound:
    _check_inputs(S, R, N, n, M2, "M2")
    value = math.sqrt(M2 * multiset_tail(n, (R / S) ** 2, N))
    return ErrorBound("prop3", value, N, S, R, n, M2)


def error_bound(kind: str, constant: float, S: float, R: float, N: int, n: int = 1) -> ErrorBound:
    fn = {"prop1": bound_prop1, "prop2": bound_prop2, "prop3": bound_prop3}[_check_kind(kind)]
    return fn(constant, S, R, N, n)


# -- constants from computed coefficients -------------------------------------------


def _weighted(series: PowerSeries, S: float, power: int = 1) -> tuple[np.ndarray, np.ndarray]:
    if S <= 0:
        raise BoundError(f"S must be positive, got {S}")
    deg = series.degrees
    return deg, (np.abs(series.vals) * S ** deg) ** power


def _window(series: PowerSeries, window, default_lo: int) -> tuple[int, int]:
    lo, hi = window if window is not None else (default_lo, series.cap)
    lo, hi = int(lo), min(int(hi), series.cap)
    if hi < lo:
        raise BoundError(f"empty degree window ({lo}, {hi}); the series is computed to {series.cap}")
    return lo, hi


def _per_degree(deg: np.ndarray, w: np.ndarray, lo: int, hi: int, how: str) -> np.ndarray:
    out = np.zeros(hi - lo + 1)
    keep = (deg >= lo) & (deg <= hi)
    if how == "max":
        np.maximum.at(out, deg[keep] - lo, w[keep])
    else:
        np.add.at(out, deg[keep] - lo, w[keep])
    return out


def truncation_l1(series: PowerSeries, S: float) -> np.ndarray:
    """sum_{|k|<=m} |c_k| S^{|k|} for m = 0..cap, an upper bound of |P_m phi| at radius S."""
    deg, w = _weighted(series, S)
    per = _per_degree(deg, w, 0, series.cap, "sum")
    return np.array([math.fsum(per[:m + 1]) for m in range(len(per))])


def estimate_M(series: PowerSeries, S: float, window=None, safety: float = 1.0) -> ConstantEstimate:
    """max over truncation degrees in ``window`` of the l1 bound of P_m phi at radius S."""
    lo, hi = _window(series, window, 1)
    seq = truncation_l1(series, S)[lo:hi + 1]
    return ConstantEstimate("M", float(seq.max()) * safety, (lo, hi),
                            notes=("l1 majorant of the truncations",))


def estimate_M1(series: PowerSeries, S: float, N: int, window=None,
                safety: float = 1.0) -> ConstantEstimate:
    """max |c_k| S^{|k|} over degrees N < |k| <= window end, with a monotonicity check."""
    lo, hi = _window(series, window, N + 1)
    deg, w = _weighted(series, S)
    per = _per_degree(deg, w, lo, hi, "max")
    nz = per[per > 0]
    decreasing = bool(np.all(np.diff(nz) <= 0)) if len(nz) else True
    notes = () if decreasing else ("per-degree maxima not monotone over the window",)
    return ConstantEstimate("M1", float(per.max()) * safety, (lo, hi), decreasing, notes)


def estimate_M2(series: PowerSeries, S: float, N: int, window=None,
                fit_degrees: int = FIT_DEGREES) -> ConstantEstimate:
    """sum of |c_k|^2 S^{2|k|} over |k| > N: window sum plus a fitted geometric remainder.

    The remainder beyond the window extrapolates the per-degree sums with a
    ratio fitted (least squares in log scale) on the last ``fit_degrees``
    non-zero degrees.  A fitted ratio >= 1 means the series is not summable at
    this S and raises :class:`BoundError`.
    """
    lo, hi = _window(series, window, N + 1)
    deg, w = _weighted(series, S, 2)
    per = _per_degree(deg, w, lo, hi, "sum")
    body = math.fsum(per.tolist())
    degs = np.arange(lo, hi + 1)[per > 0][-fit_degrees:]
    vals = per[per > 0][-fit_degrees:]
    if len(vals) < 2:
        return ConstantEstimate("M2", body, (lo, hi), notes=("too few degrees to fit a remainder",))
    slope, icpt = np.polyfit(degs, np.log(vals), 1)
    q = math.exp(slope)
    if q >= 1:
        raise BoundError(f"coefficient energy does not decay at S={S} (fitted ratio {q:.4f})")
    # every degree above the window is assigned the fitted value, a safe overcount
    # for series with vanishing degrees
    start = math.exp(icpt + slope * hi)
    rest = start * q / (1 - q)
    return ConstantEstimate("M2", body + rest, (lo, hi), notes=(f"fitted remainder ratio {q:.6g}",))


def estimate_constants(series_list, S: float, N: int, window_end: int | None = None) -> list[dict]:
    """M, M1, M2 estimates for each eigenfunction, each as a dict of ConstantEstimate."""
    out = []
    for s in series_list:
        hi = s.cap if window_end is None else window_end
        out.append({"M": estimate_M(s, S, (1, hi)),
                    "M1": estimate_M1(s, S, N, (N + 1, hi)),
                    "M2": estimate_M2(s, S, N, (N + 1, hi))})
    return out


def bound_sweep(kind: str, constant: float, S: float, R: float, Ns, n: int = 1) -> list[ErrorBound]:
    return [error_bound(kind, constant, S, R, int(N), n) for N in Ns]


def write_bound_csv(path, bounds: list[ErrorBound]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "N", "S", "R", "n", "constant", "value"])
        for b in bounds:
            w.writerow([b.kind, b.N, repr(b.S), repr(b.R), b.n, repr(b.constant), repr(b.value)])

