"""Gowers uniformity norms on cyclic groups and intervals."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, SizeLimitError

DIRECT_BUDGET = 10**9
EXACT_AVERAGE_BUDGET = 10**7


@dataclass(frozen=True)
class CyclicFunction:
    """A function Z/NZ -> C stored as its value array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        v = v.astype(np.complex128 if np.iscomplexobj(v) else np.float64)
        if v.ndim != 1 or v.size == 0:
            raise PreconditionError("values must be a nonempty 1-d array")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def N(self):
        return self.values.size

    def __call__(self, x):
        return self.values[np.asarray(x) % self.N]

    @classmethod
    def constant(cls, N, c=1.0):
        return cls(np.full(N, c))

    def shifted(self, c):
        return CyclicFunction(np.roll(self.values, -c))


@dataclass(frozen=True)
class NormResult:
    value: float
    k: int
    method: str

    def __float__(self):
        return self.value


def _as_values(f):
    return f.values if isinstance(f, CyclicFunction) else CyclicFunction(f).values


def _shift_matrix(v):
    """M[h, x] = v[(x + h) mod N]."""
    N = v.size
    idx = (np.arange(N)[:, None] + np.arange(N)[None, :]) % N
    return v[idx]


def _root(total, k):
    # tiny negative totals are rounding noise of an average of nonnegative terms
    total = max(float(total), 0.0)
    return total ** (1.0 / 2**k)


def _power_recursive(v, k):
    """||v||_{U^k}^{2^k} via E_h ||Delta_h v||_{U^{k-1}}^{2^{k-1}}, returned as longdouble."""
    if k == 1:
        m = np.mean(v.astype(np.clongdouble))
        return np.longdouble(abs(m) ** 2)
    N = v.size
    shifts = _shift_matrix(v)
    deltas = shifts * np.conj(v)[None, :]
    if k == 2:
        means = np.mean(deltas.astype(np.clongdouble), axis=1)
        return np.mean(np.abs(means) ** 2)
    acc = np.longdouble(0)
    for h in range(N):
        acc += _power_recursive(deltas[h], k - 1)
    return acc / N


def _power_direct(v, k):
    """Literal cube average: loop over (h_1..h_{k-1}), vectorise over (h_k, x)."""
    N = v.size
    forms = (v, np.conj(v))
    mats = (_shift_matrix(v), np.conj(_shift_matrix(v)))
    acc = np.longdouble(0)
    for hs in np.ndindex(*([N] * (k - 1))):
        prod = np.ones((N, N), dtype=np.complex128)
        for omega in np.ndindex(*([2] * (k - 1))):
            base = sum(o * h for o, h in zip(omega, hs)) % N
            parity = sum(omega) % 2
            # omega_k = 0 gives C^parity f(x + base); omega_k = 1 conjugates once more and adds h_k
            prod *= np.roll(forms[parity], -base)[None, :]
            prod *= np.roll(mats[1 - parity], -base, axis=1)
        acc += np.sum(prod.astype(np.clongdouble)).real
    return acc / N ** (k + 1)


def gowers_norm_cyclic(f, k, method=None):
    """||f||_{U^k(Z/NZ)}.

    method: "direct" (literal cube average, O(N^{k+1})), "recursive"
    (via Delta_h differences) or "fft" (k = 2 only). Default: recursive for
    k >= 3, direct otherwise.
    """
    v = _as_values(f)
    k = int(k)
    if k < 1:
        raise PreconditionError("k must be at least 1")
    N = v.size
    if k == 1:
        return NormResult(float(abs(np.mean(v.astype(np.clongdouble)))), 1, "direct")
    method = method or ("recursive" if k >= 3 else "direct")
    if method == "fft":
        if k != 2:
            raise PreconditionError("the fft method computes U^2 only")
        return gowers_u2_fft(v)
    # the direct average costs N^(k+1) operations, the recursion N^k
    cost = float(N) ** (k + 1 if method == "direct" else k)
    if cost > DIRECT_BUDGET:
        raise SizeLimitError(f"{method} U^{k} at N = {N} costs {cost:.3g} > {DIRECT_BUDGET} operations")
    if method == "direct":
        total = _power_direct(v, k)
    elif method == "recursive":
        total = _power_recursive(v, k)
    else:
        raise PreconditionError(f"unknown method {method!r}")
    return NormResult(_root(total, k), k, method)


def gowers_u2_fft(f):
    """||f||_{U^2}^4 = sum_xi |f^(xi)|^4 with f^(xi) = E_x f(x) e(-x xi / N)."""
    v = _as_values(f)
    fh = np.fft.fft(v) / v.size
    a2 = (np.abs(fh) ** 2).astype(np.longdouble)
    return NormResult(_root(np.sum(a2 * a2), 2), 2, "fft")


def interval_embedding(f, modulus=None):
    """f on [N] (array position n - 1 holds f(n)) placed in Z/N'Z, N' = 2N + 1 by default."""
    v = np.asarray(f)
    N = v.size
    modulus = 2 * N + 1 if modulus is None else int(modulus)
    if modulus < 2 * N - 1:
        raise PreconditionError(f"modulus {modulus} too small for an interval of length {N}")
    out = np.zeros(modulus, dtype=np.complex128 if np.iscomplexobj(v) else np.float64)
    out[1 : N + 1] = v
    return out


def gowers_norm_interval(f, k, modulus=None, method=None):
    """||f||_{U^k[N]} = ||f 1_[N]||_{U^k(Z/N'Z)} / ||1_[N]||_{U^k(Z/N'Z)}."""
    v = np.asarray(f)
    if v.size == 0:
        raise PreconditionError("empty interval")
    num = gowers_norm_cyclic(interval_embedding(v, modulus), k, method)
    den = gowers_norm_cyclic(interval_embedding(np.ones(v.size), modulus), k, method)
    return NormResult(num.value / den.value, k, num.method)


def lp_norm(f, p):
    """(E_{x in [N]} |f(x)|^p)^(1/p)."""
    if p < 1:
        raise PreconditionError("p must be at least 1")
    a = np.abs(np.asarray(f)).astype(np.longdouble)
    if math.isinf(p):
        return float(a.max())
    return float(np.mean(a**p) ** (1 / np.longdouble(p)))


@dataclass(frozen=True)
class LinearFormsResult:
    deviation: float
    mean: float
    stderr: float
    exact: bool
    samples: int

    def to_dict(self):
        return dict(self.__dict__)


def linear_forms_deviation(nu, system, samples=10**5, seed=0, budget=EXACT_AVERAGE_BUDGET):
    """|E_{n in (Z/NZ)^d} prod_i nu(psi_i(n)) - 1|.

    Exhaustive when N^d <= budget (stderr 0), otherwise a fixed-seed Monte
    Carlo estimate with its standard error.
    """
    nu = nu if isinstance(nu, CyclicFunction) else CyclicFunction(nu)
    N, d = nu.N, system.d
    A = np.array(system.homogeneous_matrix(), dtype=np.int64) % N
    c = np.array([f.const for f in system.forms], dtype=np.int64) % N
    vals = nu.values

    def products(points):
        img = (points @ A.T + c) % N
        return np.prod(vals[img], axis=1)

    if float(N) ** d <= budget:
        parts = []
        chunk = max(1, 2**20 // max(N ** (d - 1), 1))
        for start in range(0, N, chunk):
            lead = np.arange(start, min(N, start + chunk))
            grids = np.meshgrid(lead, *([np.arange(N)] * (d - 1)), indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=1)
            parts.append(np.sum(products(pts).astype(np.clongdouble)))
        mean = complex(np.sum(parts) / N**d)
        mean = mean.real if abs(mean.imag) < 1e-12 * max(1.0, abs(mean)) else mean
        return LinearFormsResult(abs(mean - 1), mean, 0.0, True, N**d)
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, N, size=(int(samples), d))
    prods = products(pts)
    mean = complex(np.mean(prods))
    mean = mean.real if abs(mean.imag) < 1e-12 * max(1.0, abs(mean)) else mean
    stderr = float(np.std(prods, ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    return LinearFormsResult(abs(mean - 1), mean, stderr, False, int(samples))
