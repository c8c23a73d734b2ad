"""Polynomial phases on tori, Lipschitz test functions and equidistribution diagnostics.

Only the abelian case is covered: g(n) = (sum_i alpha[j][i] n^i mod 1)_j on
the D-dimensional torus, and xi(n) = F(g(n)).
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import PreconditionError

CHUNK = 1 << 20


def _reduce(c):
    if isinstance(c, Fraction):
        return c - math.floor(c)
    if isinstance(c, int):
        return Fraction(0)
    c = float(c)
    if not math.isfinite(c):
        raise PreconditionError("orbit coefficients must be finite")
    return c - math.floor(c)


def _frac_power_term(c, n, i):
    """frac(c * n^i) for an integer array n, exact for Fraction c, extended precision otherwise."""
    if isinstance(c, Fraction):
        p, q = c.numerator, c.denominator
        nn = n % q
        acc = np.full(n.shape, p % q, dtype=object)
        for _ in range(i):
            acc = (acc * nn.astype(object)) % q
        return (acc.astype(np.float64)) / q
    if c == 0.0:
        return np.zeros(n.shape)
    # c = a / 2^b exactly, so frac(c m) depends on m mod 2^b only
    a, b = c.as_integer_ratio()
    if b > 2**64:
        return np.array([(a * pow(int(x), i, b) % b) / b for x in n], dtype=np.float64)
    m = np.ones(n.shape, dtype=np.uint64)
    nu = n.astype(np.uint64)
    with np.errstate(over="ignore"):
        for _ in range(i):
            m = m * nu
    return _frac_mul(c, m)


def _frac_mul(c, m):
    """frac(c * m) for dyadic c in [0, 1) and uint64 m, in 20-bit chunks so each product is exact to 2^-33."""
    acc = np.zeros(m.shape)
    cc = c
    while cc and m.any():
        acc = (acc + cc * (m & np.uint64(CHUNK - 1)).astype(np.float64)) % 1.0
        m = m >> np.uint64(20)
        cc = (cc * CHUNK) % 1.0
    return acc


def _rational_row(row, n):
    """frac(sum_i c_i n^i) for rational c_i, by Horner's rule modulo the common denominator."""
    q = math.lcm(*(c.denominator for c in row))
    nums = [int(c * q) for c in row]
    nn = (n % q).astype(object)
    acc = np.zeros(n.shape, dtype=object)
    for c in reversed(nums):
        acc = (acc * nn + c) % q
    return acc.astype(np.float64) / q


@dataclass(frozen=True)
class PolynomialOrbit:
    """coeffs[j][i] is the coefficient of n^i in coordinate j, reduced mod 1."""

    coeffs: tuple

    def __post_init__(self):
        rows = tuple(tuple(_reduce(c) for c in row) for row in self.coeffs)
        if not rows or any(len(r) != len(rows[0]) for r in rows) or len(rows[0]) < 2:
            raise PreconditionError("need D >= 1 rows of s + 1 >= 2 coefficients")
        object.__setattr__(self, "coeffs", rows)

    @property
    def D(self):
        return len(self.coeffs)

    @property
    def s(self):
        return len(self.coeffs[0]) - 1

    @classmethod
    def linear(cls, alpha, offset=0.0):
        alpha = np.atleast_1d(alpha) if not isinstance(alpha, (list, tuple)) else alpha
        return cls(tuple((offset, a) for a in alpha))

    def phases(self, n):
        """Array of shape (len(n), D) with g(n) mod 1."""
        n = np.atleast_1d(np.asarray(n, dtype=np.int64))
        out = np.zeros((n.size, self.D))
        for j, row in enumerate(self.coeffs):
            if all(isinstance(c, Fraction) for c in row):
                out[:, j] = _rational_row(row, n)
                continue
            acc = np.zeros(n.size)
            for i, c in enumerate(row):
                acc += _frac_power_term(c, n, i)
            out[:, j] = acc % 1.0
        return out

    def to_dict(self):
        return {"coeffs": [[str(c) if isinstance(c, Fraction) else c for c in row] for row in self.coeffs]}

    @classmethod
    def from_dict(cls, data):
        def parse(c):
            return Fraction(c) if isinstance(c, str) else c

        return cls(tuple(tuple(parse(c) for c in row) for row in data["coeffs"]))


def torus_distance(x, y):
    """Sup-norm distance on R^D / Z^D."""
    d = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)) % 1.0
    return np.max(np.minimum(d, 1.0 - d), axis=-1)


@dataclass(frozen=True)
class FourierTorusFunction:
    """F(x) = Re sum_k c_k e(k . x); Lipschitz bound 2 pi sum |c_k| |k|_1 in the sup metric."""

    freqs: tuple
    amps: tuple

    def __post_init__(self):
        freqs = tuple(tuple(int(v) for v in k) for k in self.freqs)
        if len(freqs) != len(self.amps) or not freqs:
            raise PreconditionError("need matching nonempty frequency and amplitude lists")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "amps", tuple(complex(a) for a in self.amps))

    @property
    def lipschitz_bound(self):
        return 2 * math.pi * sum(abs(a) * sum(abs(v) for v in k) for k, a in zip(self.freqs, self.amps))

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        K = np.array(self.freqs, dtype=np.float64)
        A = np.array(self.amps)
        return (np.exp(2j * np.pi * (x @ K.T)) @ A).real

    def to_dict(self):
        return {"type": "fourier", "freqs": [list(k) for k in self.freqs], "amps": [[a.real, a.imag] for a in self.amps]}


@dataclass(frozen=True)
class TrapezoidTorusFunction:
    """Product over coordinates of a trapezoid in the torus distance to center[j].

    Value 1 within width/2, linear ramps of length margin, 0 beyond.
    """

    center: tuple
    width: float
    margin: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) % 1.0 for c in np.atleast_1d(self.center)))
        if not (self.width > 0 and self.margin > 0):
            raise PreconditionError("width and margin must be positive")
        if self.width < 1 and self.width + 2 * self.margin >= 1:
            raise PreconditionError("ramps overlap around the torus: need width + 2 * margin < 1 (or width >= 1)")

    @property
    def lipschitz_bound(self):
        return len(self.center) / self.margin

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.width >= 1:
            return np.ones(x.shape[0])
        d = np.abs(x - np.array(self.center)) % 1.0
        d = np.minimum(d, 1.0 - d)
        vals = np.clip((self.width / 2 + self.margin - d) / self.margin, 0.0, 1.0)
        return np.prod(vals, axis=1)

    def to_dict(self):
        return {"type": "trapezoid", "center": list(self.center), "width": self.width, "margin": self.margin}


def constant_function(c, D=1):
    return FourierTorusFunction(((0,) * D,), (c,))


def function_from_dict(data):
    if data["type"] == "fourier":
        return FourierTorusFunction(tuple(tuple(k) for k in data["freqs"]), tuple(complex(*a) for a in data["amps"]))
    if data["type"] == "trapezoid":
        return TrapezoidTorusFunction(tuple(data["center"]), data["width"], data["margin"])
    raise PreconditionError(f"unknown torus function type {data['type']!r}")


@dataclass(frozen=True)
class NilsequenceSpec:
    orbit: PolynomialOrbit
    function: object
    params: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"orbit": self.orbit.to_dict(), "function": self.function.to_dict(), "params": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(PolynomialOrbit.from_dict(data["orbit"]), function_from_dict(data["function"]), data.get("params", {}))


def evaluate(spec, n):
    """xi(n) = F(g(n) mod 1); scalar in, scalar out, array in, array out."""
    scalar = np.ndim(n) == 0
    vals = spec.function(spec.orbit.phases(n))
    return float(vals[0]) if scalar else vals


def trapezoid_bohr_function(alpha, center=0.0, width=0.2, margin=0.05):
    """xi(n) = trapezoid(alpha . n mod 1) as a degree-one orbit."""
    alpha = [float(a) for a in np.atleast_1d(alpha)]
    centers = np.broadcast_to(np.atleast_1d(center), (len(alpha),))
    fn = TrapezoidTorusFunction(tuple(centers), width, margin)
    orbit = PolynomialOrbit(tuple((0.0, a) for a in alpha))
    return NilsequenceSpec(orbit, fn, {"D": len(alpha), "K": fn.lipschitz_bound, "s": 1})


@dataclass
class EquidistributionReport:
    max_bias: float
    witness_freq: tuple
    witness_step: int
    witness_offset: int
    flagged: bool
    N: int
    eta: float
    freq_cutoff: int
    max_step: int

    def to_dict(self):
        out = dict(self.__dict__)
        out["witness_freq"] = list(self.witness_freq)
        return out


def equidistribution_diagnostic(orbit, N, eta, freq_cutoff, max_step=None, window=1):
    """Largest |E_{n in P} e(k . g(n))| over 0 < |k|_inf <= freq_cutoff and progressions P.

    The range is [1, window * N]. P runs over its residue classes a mod q for
    q <= max_step (default floor(1/eta), so every class has length about
    window * N / q >= eta * window * N); q = 1 is the full interval.
    Ties keep the lexicographically first witness.
    """
    N = int(N)
    if eta <= 0 or N < 1 / eta:
        raise PreconditionError("need eta > 0 and N >= 1/eta")
    M = N * int(window)
    max_step = int(math.floor(1 / eta + 1e-12)) if max_step is None else int(max_step)
    n = np.arange(1, M + 1, dtype=np.int64)
    phases = orbit.phases(n)
    best = (-1.0, None, 0, 0)
    for k in itertools.product(range(-freq_cutoff, freq_cutoff + 1), repeat=orbit.D):
        if not any(k):
            continue
        z = np.exp(2j * np.pi * np.mod(phases @ np.array(k, dtype=np.float64), 1.0))
        for q in range(1, max_step + 1):
            cls = n % q
            re = np.bincount(cls, weights=z.real, minlength=q)
            im = np.bincount(cls, weights=z.imag, minlength=q)
            counts = np.bincount(cls, minlength=q)
            for a in range(q):
                if counts[a] < eta * M:
                    continue
                bias = math.hypot(re[a], im[a]) / counts[a]
                if bias > best[0] + 1e-15:
                    best = (bias, k, q, a)
    bias, k, q, a = best
    return EquidistributionReport(
        float(bias), tuple(int(x) for x in k), int(q), int(a), bool(bias > eta), M, float(eta), int(freq_cutoff), max_step
    )
