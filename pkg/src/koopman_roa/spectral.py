"""Koopman generator on monomials and principal eigenfunction Taylor coefficients.

For a polynomial field F with F(0) = 0 the generator L f = F . grad f maps a
monomial of degree m to monomials of degree >= m, so its matrix over the
graded-lex monomial basis is block lower-triangular.  The Taylor coefficients
of the principal eigenfunction for an eigenvalue lam of J_F(0) are therefore
found degree by degree: the degree-1 part is a left eigenvector of J_F(0), and
the degree-m block solves

    (A_m - lam I) c_m = -r_m,

where A_m is the degree-m diagonal block (the linear part of F) and r_m
collects what the nonlinear part of F produces at degree m from the already
known lower-degree coefficients.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special
import scipy.sparse as sp

from .errors import CapacityError, DimensionError, ResonanceError, SpectrumError
from .polyalg import (
    EQ_ATOL,
    PowerSeries,
    add,
    basis_size,
    degree_indices,
    diff,
    mul,
    random_series,
    scale,
    truncate,
)

MAX_MATRIX_SIZE = 200_000
DEFAULT_COND_LIMIT = 1e12


class ConditioningWarning(UserWarning):
    """A degree block of the eigenfunction recursion is badly conditioned."""


@dataclass(frozen=True, eq=False)
class SystemDef:
    """Polynomial vector field x' = F(x) with an equilibrium at the origin.

    ``F`` holds one real-coefficient series per component and ``domain_box``
    the half-width of the state box along each axis.
    """

    F: tuple[PowerSeries, ...]
    domain_box: np.ndarray
    name: str = ""

    def __post_init__(self):
        F = tuple(self.F)
        if not F:
            raise DimensionError("vector field has no components")
        n = F[0].n
        if len(F) != n or any(f.n != n for f in F):
            raise DimensionError(f"need {n} components in {n} variables, got {[f.n for f in F]}")
        for i, f in enumerate(F):
            if not f.is_real():
                raise ValueError(f"component {i} has complex coefficients")
            if f[(0,) * n] != 0:
                raise ValueError(f"F_{i + 1}(0) != 0: the origin must be an equilibrium")
        box = np.broadcast_to(np.asarray(self.domain_box, dtype=float), (n,)).copy()
        if np.any(box <= 0):
            raise ValueError("domain_box half-widths must be positive")
        object.__setattr__(self, "F", tuple(f.real for f in F))
        object.__setattr__(self, "domain_box", box)

    @property
    def n(self) -> int:
        return self.F[0].n

    @property
    def degree(self) -> int:
        return max(f.degree for f in self.F)

    @classmethod
    def from_terms(cls, components, domain_box=1.0, name: str = "") -> "SystemDef":
        """Build from ``[[{"k": [...], "c": float}, ...], ...]``, one list per component."""
        n = len(components)
        F = []
        for terms in components:
            exps = np.array([t["k"] for t in terms], dtype=np.int64).reshape(-1, n)
            vals = np.array([float(t["c"]) for t in terms])
            cap = int(exps.sum(axis=1).max()) if len(terms) else 1
            F.append(PowerSeries(n, cap, exps, vals))
        return cls(tuple(F), domain_box, name)

    def to_terms(self) -> list[list[dict]]:
        return [[{"k": list(k), "c": c.real} for k, c in f] for f in self.F]

    def jacobian_at_zero(self) -> np.ndarray:
        n = self.n
        J = np.zeros((n, n))
        for i, f in enumerate(self.F):
            lin = f.degrees == 1
            for k, c in zip(f.exps[lin], f.vals[lin]):
                J[i, int(np.argmax(k))] = c.real
        return J

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """F evaluated at points of shape (P, n) (or a single point)."""
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        out = np.stack([_eval_real(f, pts) for f in self.F], axis=1)
        return out[0] if x.ndim == 1 else out


def _eval_real(f: PowerSeries, pts: np.ndarray) -> np.ndarray:
    out = np.zeros(pts.shape[0])
    for k, c in zip(f.exps, f.vals.real):
        term = np.full(pts.shape[0], c)
        for j, e in enumerate(k):
            if e:
                term = term * pts[:, j] ** e
        out += term
    return out


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues of J_F(0) and how they pair up.

    ``lambdas`` is sorted by decreasing real part, then decreasing imaginary
    part.  ``groups`` lists each real eigenvalue as ``(i,)`` and each
    conjugate pair as ``(i, j)`` with ``lambdas[i].imag > 0``.
    """

    lambdas: np.ndarray
    groups: tuple[tuple[int, ...], ...]
    jacobian: np.ndarray
    nonresonant_to: int = 0
    resonance_tol: float = 0.0
    min_gap: float = math.inf

    @property
    def lambda_m(self) -> float:
        return float(self.lambdas.real.max())

    def principal(self) -> list[tuple[int, int]]:
        """(eigen index, weight) per retained eigenfunction; conjugate pairs weigh 2."""
        return [(g[0], len(g)) for g in self.groups]


def jacobian_spectrum(sys: SystemDef, tol: float = 1e-10) -> SpectralData:
    J = sys.jacobian_at_zero()
    lam = np.linalg.eigvals(J).astype(complex)
    lam = lam[np.lexsort((-lam.imag, -lam.real))]
    for v in lam:
        if abs(v.real) <= tol * max(1.0, abs(v)):
            raise SpectrumError(f"equilibrium is not hyperbolic: eigenvalue {v:.6g} on the imaginary axis")
        if v.real > 0:
            raise SpectrumError(f"equilibrium is unstable: eigenvalue {v:.6g} has positive real part")
    groups = []
    used = set()
    scale_ = max(1.0, float(np.abs(lam).max()))
    for i, v in enumerate(lam):
        if i in used:
            continue
        if abs(v.imag) <= tol * scale_:
            lam[i] = v.real
            groups.append((i,))
            used.add(i)
            continue
        partners = [j for j in range(len(lam)) if j not in used and j != i
                    and abs(lam[j] - v.conjugate()) <= 1e-9 * scale_]
        if not partners:
            raise SpectrumError(f"complex eigenvalue {v} has no conjugate partner")
        j = partners[0]
        lam[j] = v.conjugate()
        groups.append((i, j) if v.imag > 0 else (j, i))
        used.update((i, j))
    return SpectralData(lambdas=lam, groups=tuple(groups), jacobian=J)


def check_nonresonance(spec: SpectralData, N: int, tol: float = 1e-8):
    """Check |<k, lam> - lam_i| > tol for all i and 2 <= |k| <= N.

    Returns ``(True, min_gap)``; raises :class:`ResonanceError` naming the
    offending ``(k, i)`` otherwise.
    """
    if N < 2:
        raise ValueError(f"non-resonance order must be >= 2, got {N}")
    lam = spec.lambdas
    n = len(lam)
    best = (math.inf, None, None)
    for d in range(2, N + 1):
        K = np.array(degree_indices(n, d), dtype=float)
        gaps = np.abs((K @ lam)[:, None] - lam[None, :])
        r, i = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
        if gaps[r, i] < best[0]:
            best = (float(gaps[r, i]), K[r].astype(int), int(i))
        if gaps[r, i] <= tol:
            raise ResonanceError(K[r].astype(int), i, gaps[r, i])
    return True, best[0]


def verified_spectrum(spec: SpectralData, N: int, tol: float = 1e-8) -> SpectralData:
    """Copy of ``spec`` with the non-resonance check recorded up to degree ``N``."""
    _, gap = check_nonresonance(spec, N, tol)
    return SpectralData(spec.lambdas, spec.groups, spec.jacobian, N, tol, gap)


def apply_generator(sys: SystemDef, p: PowerSeries, cap: int) -> PowerSeries:
    """L p = sum_i F_i dp/dx_i, truncated at ``cap``."""
    if p.n != sys.n:
        raise DimensionError(f"series has n={p.n}, system has n={sys.n}")
    out = PowerSeries(sys.n, cap)
    for i, f in enumerate(sys.F):
        out = add(out, mul(f, diff(p, i), cap))
    return out.with_cap(cap)


def eigen_residual(sys: SystemDef, phi: PowerSeries, lam: complex, check_cap: int) -> PowerSeries:
    """L phi - lam phi up to degree ``check_cap``."""
    r = add(apply_generator(sys, phi, check_cap), scale(phi, -lam))
    return truncate(r, check_cap)


# -- generator matrix -------------------------------------------------------------


class _Index:
    """Position lookup for exponent vectors of a fixed list (vectorized)."""

    def __init__(self, exps: np.ndarray, top: int):
        self.dims = (top + 1,) * exps.shape[1]
        keys = np.ravel_multi_index(tuple(exps.T), self.dims)
        self.order = np.argsort(keys)
        self.sorted = keys[self.order]

    def find(self, exps: np.ndarray) -> np.ndarray:
        keys = np.ravel_multi_index(tuple(exps.T), self.dims)
        pos = np.searchsorted(self.sorted, keys)
        return self.order[pos]


def _field_terms(sys: SystemDef):
    for i, f in enumerate(sys.F):
        for k, c in zip(f.exps, f.vals.real):
            yield i, k, c


@dataclass(frozen=True)
class GeneratorMatrix:
    """Matrix of P_N L on monomials of degree <= N; column j is P_N L psi_j."""

    N: int
    basis: np.ndarray
    matrix: sp.csc_matrix

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def block(self, m: int, d: int | None = None) -> np.ndarray:
        """Dense block mapping degree-``d`` monomials to degree-``m`` ones (default d = m)."""
        d = m if d is None else d
        deg = self.basis.sum(axis=1)
        rows = np.nonzero(deg == m)[0]
        cols = np.nonzero(deg == d)[0]
        return self.matrix[rows][:, cols].toarray()

    def triplets(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.row, coo.col))
        return [(int(coo.row[t]), int(coo.col[t]), float(coo.data[t])) for t in order]


def build_generator_matrix(sys: SystemDef, N: int, max_size: int = MAX_MATRIX_SIZE) -> GeneratorMatrix:
    n = sys.n
    ell = basis_size(n, N)
    if ell > max_size:
        raise CapacityError(f"generator matrix of size {ell} exceeds budget {max_size}")
    basis = np.concatenate([np.array(degree_indices(n, d), dtype=np.int64).reshape(-1, n)
                            for d in range(N + 1)])
    index = _Index(basis, N + sys.degree)
    rows, cols, data = [], [], []
    all_cols = np.arange(ell)
    for i, e, a in _field_terms(sys):
        src = basis[:, i] > 0
        tgt = basis[src].copy()
        tgt[:, i] -= 1
        tgt += e
        ok = tgt.sum(axis=1) <= N
        rows.append(index.find(tgt[ok]))
        cols.append(all_cols[src][ok])
        data.append(a * basis[src][ok, i])
    mat = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(ell, ell)).tocsc()
    mat.sum_duplicates()
    return GeneratorMatrix(N, basis, mat)


def check_plp_identity(sys: SystemDef, N: int, trials: int = 10, rng=None) -> float:
    """Max coefficient gap between P_N L P_N p and P_N L p over random p.

    The random polynomials have degree <= N + deg F.
    """
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(trials):
        p = random_series(sys.n, N + sys.degree, rng)
        lhs = apply_generator(sys, truncate(p, N), N)
        rhs = apply_generator(sys, p, N)
        gap = add(lhs, scale(rhs, -1.0))
        worst = max(worst, float(np.abs(gap.vals).max(initial=0.0)))
    return worst


# -- principal eigenfunctions -----------------------------------------------------


@dataclass
class EigenSolve:
    """A solved eigenfunction together with per-degree conditioning data."""

    series: PowerSeries
    lam: complex
    index: int
    cond: np.ndarray = field(repr=False)
    warnings: list[str] = field(default_factory=list)

    @property
    def max_cond(self) -> float:
        return float(self.cond.max(initial=1.0))


def left_eigenvector(J: np.ndarray, lam: complex) -> np.ndarray:
    """Eigenvector w of J^T for ``lam``, scaled so its first largest entry equals 1."""
    vals, vecs = np.linalg.eig(J.T.astype(complex))
    w = vecs[:, int(np.argmin(np.abs(vals - lam)))]
    mags = np.abs(w)
    # first entry within rounding of the maximum, so ties resolve deterministically
    pivot = int(np.nonzero(mags >= mags.max() * (1 - 1e-12))[0][0])
    return w / w[pivot]


def solve_eigenfunction(sys: SystemDef, spec: SpectralData, i: int, N_max: int,
                        cond_limit: float = DEFAULT_COND_LIMIT,
                        resonance_tol: float = 1e-8) -> EigenSolve:
    """Taylor coefficients of the principal eigenfunction for ``spec.lambdas[i]`` to degree ``N_max``."""
    if sys.n != len(spec.lambdas):
        raise DimensionError("spectral data does not match the system dimension")
    if N_max < 1:
        raise ValueError(f"N_max must be >= 1, got {N_max}")
    if N_max >= 2 and spec.nonresonant_to < N_max:
        check_nonresonance(spec, N_max, resonance_tol)
    n = sys.n
    lam = complex(spec.lambdas[i])
    J = spec.jacobian
    nonlinear = [(j, e, a) for j, e, a in _field_terms(sys) if e.sum() >= 2]

    blocks = [np.zeros((1, n), dtype=np.int64)]
    coeffs = [np.zeros(1, dtype=complex)]
    for m in range(1, N_max + 1):
        blocks.append(np.array(degree_indices(n, m), dtype=np.int64).reshape(-1, n))
    w = left_eigenvector(J, lam)
    # degree-1 block in graded-lex order is x_1, ..., x_n
    coeffs.append(w.astype(complex))
    cond = np.ones(N_max + 1)
    notes: list[str] = []

    for m in range(2, N_max + 1):
        K = blocks[m]
        b = K.shape[0]
        index = _Index(K, m)
        A = np.zeros((b, b), dtype=complex)
        for r in range(n):
            src = K[:, r] > 0
            for s in range(n):
                if J[r, s] == 0:
                    continue
                tgt = K[src].copy()
                tgt[:, r] -= 1
                tgt[:, s] += 1
                np.add.at(A, (index.find(tgt), np.nonzero(src)[0]), J[r, s] * K[src, r])
        rhs = np.zeros(b, dtype=complex)
        for j, e, a in nonlinear:
            d = m - int(e.sum()) + 1
            if d < 1:
                continue
            S = blocks[d]
            src = S[:, j] > 0
            if not src.any():
                continue
            tgt = S[src].copy()
            tgt[:, j] -= 1
            tgt += e
            np.add.at(rhs, index.find(tgt), a * S[src, j] * coeffs[d][src])
        A -= lam * np.eye(b)
        # diagonal similarity to the sqrt-multinomial basis, where the block is
        # close to normal; raw monomial scaling inflates the estimate geometrically
        logd = 0.5 * (math.lgamma(m + 1) - scipy.special.gammaln(K + 1).sum(axis=1))
        A = A * np.exp(logd[None, :] - logd[:, None])
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        if np.any(np.abs(np.diag(lu)) == 0):
            raise ResonanceError(K[0], i, 0.0)
        anorm = np.abs(A).sum(axis=0).max()
        rcond, _ = scipy.linalg.lapack.zgecon(lu, anorm, norm="1")
        cond[m] = math.inf if rcond == 0 else 1.0 / rcond
        if cond[m] > cond_limit:
            msg = f"degree {m} block condition estimate {cond[m]:.3e} exceeds {cond_limit:.1e}"
            notes.append(msg)
            warnings.warn(msg, ConditioningWarning, stacklevel=2)
        y = scipy.linalg.lu_solve((lu, piv), -rhs * np.exp(-logd), check_finite=False)
        coeffs.append(y * np.exp(logd))

    exps = np.concatenate(blocks)
    vals = np.concatenate(coeffs)
    series = PowerSeries(n, N_max, exps, np.where(np.abs(vals) > 0, vals, 0))
    return EigenSolve(series, lam, i, cond, notes)


def principal_eigenfunction(sys: SystemDef, spec: SpectralData, i: int, N_max: int,
                            **kwargs) -> PowerSeries:
    return solve_eigenfunction(sys, spec, i, N_max, **kwargs).series


def coefficient_scale(p: PowerSeries) -> float:
    return max(EQ_ATOL, float(np.abs(p.vals).max(initial=0.0)))
