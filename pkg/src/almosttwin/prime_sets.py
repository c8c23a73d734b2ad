"""Smallest-prime-factor tables and the almost-twin-prime weight functions.

``FactorTable`` is the engine: a segmented sieve fills ``spf[n]`` for
``2 <= n <= N`` and every divisor or roughness condition below is read off
it. Scalar evaluators (``theta1`` ...) follow the definitions literally and
are cross-checked against the vectorised ``enumerate_weights``.
"""

import enum
import itertools
import math
import os
import struct
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, isqrt

import numpy as np

from .arith import primes_up_to
from .errors import OutOfRangeError, PreconditionError, SizeLimitError
from .linear_systems import ShiftTuple, admissible_tuple

MAX_TABLE = 2 * 10**8
SEGMENT = 1 << 20
CACHE_MAGIC = b"SPFTABLE"
CACHE_VERSION = 1
CACHE_ENV = "ALMOSTTWIN_CACHE"


class FactorTable:
    """spf[n] = smallest prime factor of n for 2 <= n <= limit (spf[0] = spf[1] = 0)."""

    def __init__(self, limit, spf):
        self.limit = int(limit)
        self.spf = spf
        self._omega = None

    def __repr__(self):
        return f"FactorTable(limit={self.limit})"

    def _check(self, n):
        if n < 0 or n > self.limit:
            raise OutOfRangeError(f"{n} outside factor table range [0, {self.limit}]")

    def is_prime(self, n):
        n = int(n)
        if n < 2:
            return False
        self._check(n)
        return int(self.spf[n]) == n

    def factorize(self, n):
        """[(p, e), ...] for 2 <= n <= limit, primes increasing."""
        n = int(n)
        self._check(n)
        out = []
        while n > 1:
            p = int(self.spf[n])
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        return out

    def distinct_primes(self, n):
        return [p for p, _ in self.factorize(n)]

    def big_omega(self, n):
        return sum(e for _, e in self.factorize(n))

    def prime_mask(self, lo, hi):
        """Boolean array over lo..hi (inclusive) marking primes."""
        self._check(hi)
        n = np.arange(lo, hi + 1, dtype=np.int64)
        return (n >= 2) & (self.spf[lo : hi + 1] == n)

    def omega_array(self):
        """Omega(n) (prime factors with multiplicity) for every n <= limit, cached."""
        if self._omega is None:
            omega = np.zeros(self.limit + 1, dtype=np.int8)
            m = np.arange(self.limit + 1, dtype=np.int64)
            active = np.flatnonzero(m >= 2)
            vals = m[active]
            while active.size:
                omega[active] += 1
                vals = vals // self.spf[vals]
                keep = vals > 1
                active, vals = active[keep], vals[keep]
            self._omega = omega
        return self._omega

    def values_spf(self, values):
        values = np.asarray(values, dtype=np.int64)
        if values.size and (values.min() < 0 or values.max() > self.limit):
            raise OutOfRangeError(f"values outside factor table range [0, {self.limit}]")
        return self.spf[values].astype(np.int64)

    # -- binary cache ----------------------------------------------------
    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<IQ", CACHE_VERSION, self.limit))
            fh.write(self.spf.astype("<u4", copy=False).tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(CACHE_MAGIC))
            if magic != CACHE_MAGIC:
                raise ValueError(f"{path} is not a factor table cache")
            version, limit = struct.unpack("<IQ", fh.read(12))
            if version != CACHE_VERSION:
                raise ValueError(f"unsupported factor table cache version {version}")
            spf = np.frombuffer(fh.read(), dtype="<u4").astype(np.uint32)
        if spf.size != limit + 1:
            raise ValueError(f"truncated factor table cache {path}")
        return cls(limit, spf)


def build_factor_table(N, max_limit=MAX_TABLE):
    """Segmented sieve for the smallest prime factor of every n <= N."""
    N = int(N)
    if N > max_limit:
        raise SizeLimitError(f"factor table limit {N} exceeds budget {max_limit}")
    N = max(N, 2)
    spf = np.zeros(N + 1, dtype=np.uint32)
    base = primes_up_to(isqrt(N))
    for lo in range(2, N + 1, SEGMENT):
        hi = min(N, lo + SEGMENT - 1)
        seg = spf[lo : hi + 1]
        for p in base:
            p = int(p)
            if p * p > hi:
                break
            start = max(p * p, -(-lo // p) * p)
            view = seg[start - lo :: p]
            view[view == 0] = p
        zero = seg == 0
        seg[zero] = np.arange(lo, hi + 1, dtype=np.uint32)[zero]
    return FactorTable(N, spf)


def cached_factor_table(N, cache_dir=None):
    """Load a cached table covering N from ``cache_dir`` (or $ALMOSTTWIN_CACHE), building if absent."""
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if not cache_dir:
        return build_factor_table(N)
    os.makedirs(cache_dir, exist_ok=True)
    best = None
    for name in os.listdir(cache_dir):
        if name.startswith("spf_") and name.endswith(".bin"):
            try:
                lim = int(name[4:-4])
            except ValueError:
                continue
            if lim >= N and (best is None or lim < best):
                best = lim
    if best is not None:
        return FactorTable.load(os.path.join(cache_dir, f"spf_{best}.bin"))
    table = build_factor_table(N)
    table.save(os.path.join(cache_dir, f"spf_{table.limit}.bin"))
    return table


# ---------------------------------------------------------------------------
# roughness comparisons

def _as_fraction(x):
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**6)


def rough_threshold_ok(p, n, rho):
    """Exact p >= n**rho for integers p, n >= 1 and rational rho."""
    rho = _as_fraction(rho)
    return p**rho.denominator >= n**rho.numerator


def rough_threshold_mask(p, n, rho):
    """Vectorised p >= n**rho, with ties near the boundary settled exactly."""
    rho = _as_fraction(rho)
    p = np.asarray(p, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    lhs = rho.denominator * np.log(np.maximum(p, 1).astype(np.float64))
    rhs = rho.numerator * np.log(np.maximum(n, 1).astype(np.float64))
    out = lhs >= rhs
    close = np.flatnonzero(np.abs(lhs - rhs) <= 1e-9 * np.maximum(1.0, np.abs(rhs)))
    for idx in close:
        out.flat[idx] = rough_threshold_ok(int(p.flat[idx]), int(n.flat[idx]), rho)
    return out


# ---------------------------------------------------------------------------
# weighted indicators

class Kind(enum.Enum):
    THETA1 = "theta1"
    THETA2 = "theta2"
    THETA3 = "theta3"
    LOG_PRIME = "log_prime"
    PRIME = "prime"


DEFAULT_TUPLE = ShiftTuple((0, 2, 6, 8, 12))


@dataclass(frozen=True)
class WeightedIndicator:
    """One of theta_1, theta_2(H, rho, k), theta_3, or a diagnostic prime weight.

    ``indicator=True`` replaces the log-power weight by 1 on the same support.
    The LOG_PRIME and PRIME kinds are diagnostics (log p * 1_P and 1_P).
    """

    kind: Kind
    shifts: ShiftTuple = DEFAULT_TUPLE
    rho: Fraction = Fraction(1, 20)
    k: int = 2
    n_min: int = 1
    indicator: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "rho", _as_fraction(self.rho))
        if not isinstance(self.shifts, ShiftTuple):
            object.__setattr__(self, "shifts", ShiftTuple(tuple(self.shifts)))
        if not 0 < self.rho < 1:
            raise PreconditionError(f"rho must lie in (0, 1), got {self.rho}")
        if self.kind is Kind.THETA2:
            if not admissible_tuple(self.shifts):
                raise PreconditionError(f"shift tuple {self.shifts.shifts} is not admissible")
            if self.k < 1:
                raise PreconditionError("threshold k must be positive")

    @classmethod
    def theta1(cls, **kw):
        return cls(Kind.THETA1, **kw)

    @classmethod
    def theta2(cls, shifts=DEFAULT_TUPLE, rho=Fraction(1, 20), k=2, **kw):
        return cls(Kind.THETA2, shifts=ShiftTuple(tuple(shifts)), rho=rho, k=k, **kw)

    @classmethod
    def theta3(cls, **kw):
        return cls(Kind.THETA3, **kw)

    @property
    def tuple_shifts(self):
        """The shifts H that the support condition of this weight refers to."""
        if self.kind is Kind.THETA1:
            return (0, 2)
        if self.kind is Kind.THETA2:
            return self.shifts.shifts
        return (0,)

    @property
    def r(self):
        """Exponent r with weight <= log^r(n + 2)."""
        return {Kind.THETA1: 2, Kind.THETA2: self.shifts.m, Kind.THETA3: 1.5}.get(self.kind, 1)

    @property
    def max_shift(self):
        return max(self.tuple_shifts)

    def weight(self, n):
        """The log-power weight attached to n on the support."""
        if self.indicator or self.kind is Kind.PRIME:
            return 1.0
        if self.kind is Kind.THETA3:
            return math.log(2 * n) ** 1.5
        return math.log(n) ** self.r

    def evaluate(self, n, table):
        return evaluate(self, n, table)


def is_p2_rough(n, z, table):
    """Omega(n) <= 2 and every prime factor >= z."""
    n = int(n)
    if n < 2:
        return False
    fac = table.factorize(n)
    return sum(e for _, e in fac) <= 2 and all(p >= z for p, _ in fac)


def is_sum_of_two_squares(n, table=None):
    """n >= 0 is x^2 + y^2: every prime = 3 mod 4 appears to an even power."""
    n = int(n)
    if n < 0:
        return False
    if n < 2:
        return True
    fac = table.factorize(n) if table is not None else _trial_factor(n)
    return all(e % 2 == 0 for p, e in fac if p % 4 == 3)


def _trial_factor(n):
    out, f = [], 2
    while f * f <= n:
        e = 0
        while n % f == 0:
            n //= f
            e += 1
        if e:
            out.append((f, e))
        f += 1
    if n > 1:
        out.append((n, 1))
    return out


def theta1(n, table, indicator=False):
    """(log n)^2 on primes n with n+2 in P_2 and all p | n(n+2) at least n^(1/10)."""
    n = int(n)
    if n < 2:
        return 0.0
    if n + 2 > table.limit:
        raise OutOfRangeError(f"theta1({n}) needs a table up to {n + 2}")
    if not table.is_prime(n) or table.big_omega(n + 2) > 2:
        return 0.0
    rho = Fraction(1, 10)
    if not all(rough_threshold_ok(p, n, rho) for p in (n, int(table.spf[n + 2]))):
        return 0.0
    return 1.0 if indicator else math.log(n) ** 2


def theta2(n, spec, table):
    """(log n)^m when at least k of n+h_j are prime and all their prime factors are >= n^rho."""
    n = int(n)
    if n < 2:
        return 0.0
    hs = spec.shifts.shifts
    if n + hs[-1] > table.limit:
        raise OutOfRangeError(f"theta2({n}) needs a table up to {n + hs[-1]}")
    if n + hs[0] < 2:
        return 0.0
    if sum(table.is_prime(n + h) for h in hs) < spec.k:
        return 0.0
    if not all(rough_threshold_ok(int(table.spf[n + h]), n, spec.rho) for h in hs):
        return 0.0
    return 1.0 if spec.indicator else math.log(n) ** spec.shifts.m


def theta3(n, table, indicator=False):
    """(log 2n)^(3/2) on primes n with n - 1 a sum of two squares."""
    n = int(n)
    if n < 2:
        return 0.0
    if n > table.limit:
        raise OutOfRangeError(f"theta3({n}) needs a table up to {n}")
    if not table.is_prime(n) or not is_sum_of_two_squares(n - 1, table):
        return 0.0
    return 1.0 if indicator else math.log(2 * n) ** 1.5


def evaluate(spec, n, table):
    """Scalar evaluation of any WeightedIndicator."""
    n = int(n)
    if n < max(spec.n_min, 2):
        return 0.0
    if spec.kind is Kind.THETA1:
        return theta1(n, table, spec.indicator)
    if spec.kind is Kind.THETA2:
        return theta2(n, spec, table)
    if spec.kind is Kind.THETA3:
        return theta3(n, table, spec.indicator)
    if not table.is_prime(n):
        return 0.0
    return spec.weight(n)


# ---------------------------------------------------------------------------
# vectorised enumeration

def _weights_segment(spec, lo, hi, table):
    """Weights for n in [lo, hi]; lo >= 1."""
    n = np.arange(lo, hi + 1, dtype=np.int64)
    out = np.zeros(n.size, dtype=np.float64)
    valid = n >= max(spec.n_min, 2)
    spf = table.spf
    kind = spec.kind
    if kind is Kind.THETA1:
        is_p = spf[lo : hi + 1] == n
        omega = table.omega_array()[lo + 2 : hi + 3]
        cand = valid & is_p & (omega <= 2)
        idx = np.flatnonzero(cand)
        sel = idx[rough_threshold_mask(spf[n[idx] + 2], n[idx], Fraction(1, 10))]
    elif kind is Kind.THETA2:
        hs = spec.shifts.shifts
        count = np.zeros(n.size, dtype=np.int64)
        for h in hs:
            m = n + h
            count += (m >= 2) & (spf[m] == m)
        cand = valid & (count >= spec.k) & (n + hs[0] >= 2)
        idx = np.flatnonzero(cand)
        ok = np.ones(idx.size, dtype=bool)
        for h in hs:
            ok &= rough_threshold_mask(spf[n[idx] + h], n[idx], spec.rho)
        sel = idx[ok]
    elif kind is Kind.THETA3:
        is_p = spf[lo : hi + 1] == n
        idx = np.flatnonzero(valid & is_p)
        ok = sum_of_two_squares_mask(n[idx] - 1, table)
        sel = idx[ok]
    else:
        sel = np.flatnonzero(valid & (spf[lo : hi + 1] == n))
    if spec.indicator or kind is Kind.PRIME:
        out[sel] = 1.0
    elif kind is Kind.THETA3:
        out[sel] = np.log(2.0 * n[sel]) ** 1.5
    elif kind is Kind.LOG_PRIME:
        out[sel] = np.log(n[sel].astype(np.float64))
    else:
        out[sel] = np.log(n[sel].astype(np.float64)) ** spec.r
    return out


def sum_of_two_squares_mask(values, table):
    """Vectorised two-squares test for values in [0, table.limit].

    Tracks the product of primes = 3 mod 4 occurring to an odd power so far;
    primes arrive in increasing order, so a repeated prime squares out at once.
    """
    vals = np.asarray(values, dtype=np.int64)
    odd_part = np.ones(vals.size, dtype=np.int64)
    active = np.flatnonzero(vals >= 2)
    cur = vals[active]
    while active.size:
        p = table.spf[cur].astype(np.int64)
        cur = cur // p
        hit = np.flatnonzero(p % 4 == 3)
        rows, ps = active[hit], p[hit]
        again = odd_part[rows] % ps == 0
        odd_part[rows[again]] //= ps[again]
        odd_part[rows[~again]] *= ps[~again]
        keep = cur > 1
        active, cur = active[keep], cur[keep]
    return (odd_part == 1) & (vals >= 0)


def enumerate_weights(spec, N, table, segment=SEGMENT):
    """Array a of length N + 1 with a[n] = theta(n) for 1 <= n <= N (a[0] = 0)."""
    N = int(N)
    need = N + spec.max_shift
    if need > table.limit:
        raise OutOfRangeError(f"enumerating up to {N} needs a factor table up to {need}")
    out = np.zeros(N + 1, dtype=np.float64)
    for lo in range(1, N + 1, segment):
        hi = min(N, lo + segment - 1)
        out[lo : hi + 1] = _weights_segment(spec, lo, hi, table)
    return out


def weight_bound(spec, n):
    """Pointwise upper bound on the weight at n: log^r(n + 2), or log^(3/2)(2n + 4) for theta_3."""
    if spec.indicator or spec.kind is Kind.PRIME:
        return 1.0
    if spec.kind is Kind.THETA3:
        # (log 2n)^(3/2) exceeds log^(3/2)(n + 2) once n >= 3
        return math.log(2 * n + 4) ** 1.5
    return math.log(n + 2) ** spec.r


# ---------------------------------------------------------------------------
# auxiliary sets

class BClass(enum.Enum):
    B1 = "B1"
    B2 = "B2"
    NEITHER = "neither"


def _ge_pow(p, x, e):
    """p >= x**e for rational e (exact)."""
    return p**e.denominator >= x**e.numerator


def _le_pow(p, x, e):
    return p**e.denominator <= x**e.numerator


def classify_B(n, x, eps, table):
    """Membership of n in B_1 or B_2 (products of three primes in the Chen-sieve ranges)."""
    x = int(x)
    eps = _as_fraction(eps)
    fac = table.factorize(n) if n >= 2 else []
    primes = [p for p, e in fac for _ in range(e)]
    if len(primes) != 3:
        return BClass.NEITHER
    tenth = Fraction(1, 10)
    third = Fraction(1, 3) - eps

    def in_b1(p1, p2, p3):
        return (
            _ge_pow(p1, x, tenth)
            and _le_pow(p1, x, third)
            and _ge_pow(p2, x, third)
            and p2 * p2 * p1 <= 2 * x
            and _ge_pow(p3, x, tenth)
        )

    def in_b2(p1, p2, p3):
        return _ge_pow(p1, x, third) and p1 <= p2 and p2 * p2 * p1 <= 2 * x and _ge_pow(p3, x, tenth)

    perms = set(itertools.permutations(primes))
    if any(in_b1(*q) for q in perms):
        return BClass.B1
    if any(in_b2(*q) for q in perms):
        return BClass.B2
    return BClass.NEITHER


def _s_part(K):
    """Product of the primes p | K with p = 3 mod 4, p != 3."""
    out = 1
    for p, _ in _trial_factor(K) if K > 1 else []:
        if p % 4 == 3 and p != 3:
            out *= p
    return out


def is_amenable(K, b):
    """Whether L(n) = Kn + b is amenable (the x^2 + y^2 + 1 sieve conditions)."""
    K, b = int(K), int(b)
    if K < 1:
        raise PreconditionError("K must be positive")
    if K % 216:
        return False
    if gcd(b, K) != 1 or gcd(b - 1, _s_part(K)) != 1:
        return False
    u = b - 1
    if u == 0:
        return False
    j = 0
    while u % 2 == 0:
        u //= 2
        j += 1
    e = 0
    while u % 3 == 0:
        u //= 3
        e += 1
    if e % 2 or u % 4 != 1:
        return False
    return K % (2 ** (j + 2) * 3 ** (e + 1)) == 0


def residue_set_B_H(W, shifts):
    """{b in [1, W] : (b + h_j, W) = 1 for all j}."""
    hs = shifts.shifts if isinstance(shifts, ShiftTuple) else tuple(shifts)
    return {b for b in range(1, W + 1) if all(gcd(b + h, W) == 1 for h in hs)}
