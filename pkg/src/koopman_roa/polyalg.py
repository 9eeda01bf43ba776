"""Truncated multivariate power series with complex coefficients.

A :class:`PowerSeries` stores only nonzero coefficients c_k of monomials
x^k = x_1^{k_1} ... x_n^{k_n} with total degree |k| <= cap.  Terms are kept in
graded-lex order: by total degree first, then lexicographically with x_1 the
most significant variable and larger exponents first, so that in two variables
the order reads 1, x1, x2, x1^2, x1 x2, x2^2, ...

Every degree-raising operation takes its cap explicitly.  Multiplication is a
direct (not FFT) Cauchy product, so retained coefficients are exact up to
ordinary floating point rounding.  Several variables are packed into one by
Kronecker substitution so the product runs as a single 1-D convolution.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping

import numpy as np

from .errors import CapacityError, DimensionError

# Per-coefficient equality tolerance.
EQ_RTOL = 1e-12
EQ_ATOL = 1e-14

MAX_BASIS_SIZE = 10_000_000

# Dense evaluation is used when the exponent box is at most this many times the term count.
DENSE_EVAL_RATIO = 8


def multiset_coeff(n: int, k: int) -> int:
    """Number of monomials of total degree ``k`` in ``n`` variables, C(n+k-1, k)."""
    if n < 1 or k < 0:
        raise ValueError(f"multiset_coeff needs n >= 1 and k >= 0, got n={n}, k={k}")
    return math.comb(n + k - 1, k)


def basis_size(n: int, N: int) -> int:
    """Dimension C(n+N, n) of the space of polynomials of degree <= N."""
    return math.comb(n + N, n)


def _compositions(d: int, n: int) -> Iterator[tuple[int, ...]]:
    # exponent vectors of degree d, x_1 most significant, largest first
    if n == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _compositions(d - first, n - 1):
            yield (first,) + rest


def degree_indices(n: int, d: int) -> list[tuple[int, ...]]:
    """All exponent vectors of total degree ``d``, in graded-lex order."""
    return list(_compositions(d, n))


def enumerate_indices(n: int, N: int, limit: int = MAX_BASIS_SIZE) -> list[tuple[int, ...]]:
    """All multi-indices with |k| <= N in graded-lex order, starting at zero."""
    if n < 1 or N < 0:
        raise ValueError(f"enumerate_indices needs n >= 1 and N >= 0, got n={n}, N={N}")
    count = basis_size(n, N)
    if count > limit:
        raise CapacityError(f"basis of {count} monomials (n={n}, N={N}) exceeds limit {limit}")
    out: list[tuple[int, ...]] = []
    for d in range(N + 1):
        out.extend(_compositions(d, n))
    return out


def graded_lex_order(exps: np.ndarray) -> np.ndarray:
    """Permutation that sorts the rows of ``exps`` in graded-lex order."""
    exps = np.asarray(exps)
    keys = [-exps[:, j] for j in range(exps.shape[1] - 1, -1, -1)]
    keys.append(exps.sum(axis=1))
    return np.lexsort(keys)


class PowerSeries:
    """Sparse truncated power series in ``n`` variables.

    Parameters
    ----------
    n : int
        Number of variables.
    cap : int
        Largest total degree that may be stored.
    exps : array_like, shape (T, n)
        Exponent vectors. Duplicate rows are summed.
    vals : array_like, shape (T,)
        Coefficients.

    Instances are immutable by convention; all operations return new series.
    """

    __slots__ = ("n", "cap", "exps", "vals")

    def __init__(self, n: int, cap: int, exps=None, vals=None):
        if n < 1:
            raise DimensionError(f"series needs at least one variable, got n={n}")
        if cap < 0:
            raise ValueError(f"cap must be non-negative, got {cap}")
        self.n = int(n)
        self.cap = int(cap)
        if exps is None:
            exps = np.zeros((0, n), dtype=np.int64)
            vals = np.zeros(0, dtype=complex)
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, n)
        vals = np.asarray(vals, dtype=complex).reshape(-1)
        if exps.shape[0] != vals.shape[0]:
            raise DimensionError("exps and vals have different lengths")
        if exps.size and exps.min() < 0:
            raise ValueError("exponents must be non-negative")
        if exps.size and exps.sum(axis=1).max() > cap:
            raise ValueError(f"term of degree {exps.sum(axis=1).max()} exceeds cap {cap}")
        self.exps, self.vals = _canonical(exps, vals)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, n: int, cap: int, coeffs: Mapping) -> "PowerSeries":
        if not coeffs:
            return cls(n, cap)
        keys = list(coeffs)
        return cls(n, cap, np.array(keys, dtype=np.int64).reshape(-1, n), [coeffs[k] for k in keys])

    @classmethod
    def from_dense(cls, arr: np.ndarray, cap: int) -> "PowerSeries":
        """Build from a dense array indexed by exponents, dropping terms above ``cap``."""
        arr = np.asarray(arr)
        idx = np.nonzero(arr)
        exps = np.stack(idx, axis=1).astype(np.int64) if arr.ndim else np.zeros((0, 1), np.int64)
        vals = arr[idx]
        keep = exps.sum(axis=1) <= cap
        return cls(arr.ndim, cap, exps[keep], vals[keep])

    @classmethod
    def constant(cls, n: int, value: complex, cap: int = 0) -> "PowerSeries":
        return cls(n, cap, np.zeros((1, n), np.int64), [value])

    @classmethod
    def variable(cls, n: int, i: int, cap: int = 1) -> "PowerSeries":
        """The coordinate function x_i (0-based axis)."""
        e = np.zeros((1, n), np.int64)
        e[0, i] = 1
        return cls(n, max(cap, 1), e, [1.0])

    @classmethod
    def monomial(cls, k: Iterable[int], coeff: complex = 1.0, cap: int | None = None) -> "PowerSeries":
        k = tuple(int(e) for e in k)
        return cls(len(k), sum(k) if cap is None else cap, [k], [coeff])

    # -- inspection ---------------------------------------------------------

    @property
    def coeffs(self) -> dict[tuple[int, ...], complex]:
        return {tuple(int(e) for e in k): complex(c) for k, c in zip(self.exps, self.vals)}

    @property
    def degrees(self) -> np.ndarray:
        return self.exps.sum(axis=1)

    @property
    def degree(self) -> int:
        """Largest total degree present; -1 for the zero series."""
        return int(self.degrees.max()) if len(self.vals) else -1

    def __len__(self) -> int:
        return len(self.vals)

    def __iter__(self):
        for k, c in zip(self.exps, self.vals):
            yield tuple(int(e) for e in k), complex(c)

    def __getitem__(self, k) -> complex:
        k = np.asarray(k, dtype=np.int64)
        hit = np.nonzero((self.exps == k).all(axis=1))[0]
        return complex(self.vals[hit[0]]) if len(hit) else 0j

    def is_zero(self) -> bool:
        return len(self.vals) == 0

    def is_real(self, rtol: float = EQ_RTOL, atol: float = EQ_ATOL) -> bool:
        top = float(np.abs(self.vals).max(initial=0.0))
        return float(np.abs(self.vals.imag).max(initial=0.0)) <= atol + rtol * top

    def degree_part(self, d: int) -> "PowerSeries":
        keep = self.degrees == d
        return PowerSeries(self.n, self.cap, self.exps[keep], self.vals[keep])

    def degree_max_abs(self) -> np.ndarray:
        """Array ``a`` with a[d] = max_{|k|=d} |c_k| for d = 0..cap."""
        out = np.zeros(self.cap + 1)
        np.maximum.at(out, self.degrees, np.abs(self.vals))
        return out

    def __repr__(self) -> str:
        if self.is_zero():
            return f"PowerSeries(n={self.n}, cap={self.cap}, 0)"
        terms = []
        for k, c in list(self)[:8]:
            mono = "*".join(f"x{j + 1}^{e}" if e > 1 else f"x{j + 1}" for j, e in enumerate(k) if e)
            terms.append(f"({c:.6g})" + (f"*{mono}" if mono else ""))
        more = " + ..." if len(self) > 8 else ""
        return f"PowerSeries(n={self.n}, cap={self.cap}, {' + '.join(terms)}{more})"

    # -- conversions --------------------------------------------------------

    def to_dense(self, shape: tuple[int, ...] | None = None) -> np.ndarray:
        if shape is None:
            top = self.exps.max(axis=0) if len(self) else np.zeros(self.n, np.int64)
            shape = tuple(int(t) + 1 for t in top)
        out = np.zeros(shape, dtype=complex)
        out[tuple(self.exps.T)] = self.vals
        return out

    def to_records(self) -> list[dict]:
        """JSON-ready list of ``{"k": [...], "re": float, "im": float}`` in graded-lex order."""
        return [
            {"k": [int(e) for e in k], "re": float(c.real), "im": float(c.imag)}
            for k, c in zip(self.exps, self.vals)
        ]

    @classmethod
    def from_records(cls, records: list[dict], n: int | None = None, cap: int | None = None) -> "PowerSeries":
        if n is None:
            if not records:
                raise ValueError("cannot infer dimension from an empty record list")
            n = len(records[0]["k"])
        exps = np.array([r["k"] for r in records], dtype=np.int64).reshape(-1, n)
        vals = np.array([complex(r.get("re", 0.0), r.get("im", 0.0)) for r in records])
        if cap is None:
            cap = int(exps.sum(axis=1).max()) if len(records) else 0
        return cls(n, cap, exps, vals)

    @property
    def real(self) -> "PowerSeries":
        return PowerSeries(self.n, self.cap, self.exps, self.vals.real)

    @property
    def imag(self) -> "PowerSeries":
        return PowerSeries(self.n, self.cap, self.exps, self.vals.imag)

    def conj(self) -> "PowerSeries":
        return PowerSeries(self.n, self.cap, self.exps, self.vals.conj())

    def with_cap(self, cap: int) -> "PowerSeries":
        """Same coefficients under a new cap (terms above it are dropped)."""
        return truncate(self, cap) if cap < self.cap else PowerSeries(self.n, cap, self.exps, self.vals)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, PowerSeries):
            return add(self, other)
        return add(self, PowerSeries.constant(self.n, other, self.cap))

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PowerSeries):
            raise TypeError("series products need an explicit cap: use mul(p, q, cap)")
        return scale(self, other)

    __rmul__ = __mul__

    def __call__(self, x):
        return evaluate(self, x)

    def allclose(self, other: "PowerSeries", rtol: float = EQ_RTOL, atol: float = EQ_ATOL) -> bool:
        if not isinstance(other, PowerSeries) or other.n != self.n:
            return False
        a, b = _aligned(self, other)
        return bool(np.all(np.abs(a - b) <= atol + rtol * np.maximum(np.abs(a), np.abs(b))))

    def __eq__(self, other):
        if not isinstance(other, PowerSeries):
            return NotImplemented
        return self.cap == other.cap and self.allclose(other)

    __hash__ = None


def _canonical(exps: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(vals) == 0:
        return exps.copy(), vals.copy()
    order = graded_lex_order(exps)
    exps, vals = exps[order], vals[order]
    if len(vals) > 1:
        new = np.ones(len(vals), dtype=bool)
        new[1:] = np.any(exps[1:] != exps[:-1], axis=1)
        if not new.all():
            group = np.cumsum(new) - 1
            summed = np.zeros(group[-1] + 1, dtype=complex)
            np.add.at(summed, group, vals)
            exps, vals = exps[new], summed
    keep = vals != 0
    exps, vals = exps[keep], vals[keep]
    exps.setflags(write=False)
    vals.setflags(write=False)
    return exps, vals


def _check_dims(p: PowerSeries, q: PowerSeries) -> None:
    if p.n != q.n:
        raise DimensionError(f"dimension mismatch: {p.n} vs {q.n}")


def _aligned(p: PowerSeries, q: PowerSeries) -> tuple[np.ndarray, np.ndarray]:
    # coefficient vectors of p and q over the union of their supports
    exps = np.concatenate([p.exps, q.exps])
    if len(exps) == 0:
        return np.zeros(0, complex), np.zeros(0, complex)
    uniq, inv = np.unique(exps, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    a = np.zeros(len(uniq), complex)
    b = np.zeros(len(uniq), complex)
    a[inv[: len(p)]] = p.vals
    b[inv[len(p):]] = q.vals
    return a, b


def add(p: PowerSeries, q: PowerSeries) -> PowerSeries:
    _check_dims(p, q)
    return PowerSeries(p.n, max(p.cap, q.cap), np.concatenate([p.exps, q.exps]),
                       np.concatenate([p.vals, q.vals]))


def scale(p: PowerSeries, a: complex) -> PowerSeries:
    return PowerSeries(p.n, p.cap, p.exps, p.vals * a)


def truncate(p: PowerSeries, N: int) -> PowerSeries:
    """Truncation operator: keep terms of total degree <= N."""
    if N < 0:
        raise ValueError(f"truncation degree must be non-negative, got {N}")
    keep = p.degrees <= N
    return PowerSeries(p.n, N, p.exps[keep], p.vals[keep])


def mul(p: PowerSeries, q: PowerSeries, cap: int) -> PowerSeries:
    """Cauchy product of ``p`` and ``q`` with all terms above ``cap`` discarded."""
    _check_dims(p, q)
    if cap < 0:
        raise ValueError(f"cap must be non-negative, got {cap}")
    p, q = truncate(p, cap), truncate(q, cap)
    if p.is_zero() or q.is_zero():
        return PowerSeries(p.n, cap)
    if len(p) == 1 or len(q) == 1:
        one, other = (p, q) if len(p) == 1 else (q, p)
        exps = other.exps + one.exps[0]
        keep = exps.sum(axis=1) <= cap
        return PowerSeries(p.n, cap, exps[keep], other.vals[keep] * one.vals[0])
    return PowerSeries.from_dense(_dense_convolve(p.to_dense(), q.to_dense()), cap)


def _dense_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full n-D convolution via Kronecker substitution and one direct 1-D convolution."""
    shape = tuple(x + y - 1 for x, y in zip(a.shape, b.shape))
    # pad trailing axes to the output extent so packed exponents never carry
    packed = []
    for arr in (a, b):
        pad = np.zeros((arr.shape[0],) + shape[1:], dtype=complex)
        pad[tuple(slice(0, s) for s in arr.shape)] = arr
        packed.append(pad.ravel())
    size = math.prod(shape)
    return np.convolve(packed[0], packed[1])[:size].reshape(shape)


def diff(p: PowerSeries, i: int) -> PowerSeries:
    """Formal partial derivative along axis ``i`` (0-based); the cap drops by one."""
    if not 0 <= i < p.n:
        raise DimensionError(f"axis {i} out of range for n={p.n}")
    k = p.exps[:, i]
    keep = k > 0
    exps = p.exps[keep].copy()
    exps[:, i] -= 1
    return PowerSeries(p.n, max(p.cap - 1, 0), exps, p.vals[keep] * k[keep])


def monomial_matrix(exps: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix of monomial values x^k, shape (points, terms)."""
    x = np.atleast_2d(x)
    top = int(exps.max(initial=0))
    out = np.ones((x.shape[0], exps.shape[0]), dtype=np.result_type(x.dtype, float))
    for j in range(exps.shape[1]):
        powers = x[:, j:j + 1] ** np.arange(top + 1)
        out *= powers[:, exps[:, j]]
    return out


def evaluate(p: PowerSeries, x, chunk: int = 2048):
    """Value of ``p`` at a point (shape (n,)) or at many points (shape (P, n))."""
    x = np.asarray(x)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != p.n:
        raise DimensionError(f"point has {pts.shape[1]} coordinates, series has n={p.n}")
    out = np.zeros(pts.shape[0], dtype=complex)
    if not p.is_zero():
        top = p.exps.max(axis=0) + 1
        if math.prod(top.tolist()) <= DENSE_EVAL_RATIO * len(p):
            _evaluate_dense(p, pts, out, top)
        else:
            for s in range(0, pts.shape[0], chunk):
                out[s:s + chunk] = monomial_matrix(p.exps, pts[s:s + chunk]) @ p.vals
    return complex(out[0]) if single else out


def _evaluate_dense(p: PowerSeries, pts: np.ndarray, out: np.ndarray, top: np.ndarray) -> None:
    # contract the dense coefficient tensor one axis at a time against powers of x_j
    C = p.to_dense(tuple(int(t) for t in top))
    rest = C.size // top[0]
    chunk = max(1, min(4096, 4_000_000 // max(rest, 1)))
    for s in range(0, pts.shape[0], chunk):
        x = pts[s:s + chunk]
        T = (x[:, :1] ** np.arange(top[0])) @ C.reshape(top[0], -1)
        for j in range(1, p.n):
            T = T.reshape(len(x), top[j], -1)
            T = np.einsum("pi,pir->pr", x[:, j:j + 1] ** np.arange(top[j]), T)
        out[s:s + chunk] = T[:, 0]


def l1_bound(p: PowerSeries, R: float) -> float:
    """sum_k |c_k| R^{|k|}, an upper bound of |p| on the closed box of half-width R."""
    if R < 0:
        raise ValueError(f"radius must be non-negative, got {R}")
    if p.is_zero():
        return 0.0
    return math.fsum((np.abs(p.vals) * float(R) ** p.degrees).tolist())


def linear_substitute(p: PowerSeries, A, cap: int) -> PowerSeries:
    """Composition x -> p(A x), truncated at ``cap``."""
    A = np.asarray(A, dtype=complex)
    if A.shape != (p.n, p.n):
        raise DimensionError(f"matrix of shape {A.shape} does not act on n={p.n}")
    n = p.n
    rows = [PowerSeries(n, 1, np.eye(n, dtype=np.int64), A[j]) for j in range(n)]
    top = min(int(p.exps.max(initial=0)), cap)
    powers = [[PowerSeries.constant(n, 1.0, cap)] for _ in range(n)]
    for j in range(n):
        for _ in range(top):
            powers[j].append(mul(powers[j][-1], rows[j], cap))
    out = PowerSeries(n, cap)
    for k, c in p:
        if sum(k) > cap:
            continue
        term = PowerSeries.constant(n, c, cap)
        for j, e in enumerate(k):
            if e:
                term = mul(term, powers[j][e], cap)
        out = add(out, term)
    return out


def random_series(n: int, degree: int, rng: np.random.Generator, density: float = 1.0,
                  cap: int | None = None, complex_coeffs: bool = False) -> PowerSeries:
    """Random polynomial of total degree <= ``degree`` (test and property-check helper)."""
    idx = np.array(enumerate_indices(n, degree), dtype=np.int64)
    keep = rng.random(len(idx)) < density
    vals = rng.standard_normal(len(idx))
    if complex_coeffs:
        vals = vals + 1j * rng.standard_normal(len(idx))
    return PowerSeries(n, degree if cap is None else cap, idx[keep], vals[keep])

