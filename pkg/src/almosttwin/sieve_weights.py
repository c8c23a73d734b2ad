"""Smoothed Selberg-type majorants and their correlation checks.

Lambda(n) = log R * (sum_{l | n} mu(l) chi(log l / log R))^2 with chi supported
on [-2, 2], so only squarefree l < R^2 contribute. The W-tricked measure is
nu_b(n) = (phi(W)/W)^r * prod_{h in H} Lambda(W n~ + b + h).

Two independent routes are provided for every average: direct enumeration,
and an exact main term obtained by expanding the squares and summing the
local densities of the divisibility conditions prime by prime.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from .arith import euler_phi, primes_up_to
from .errors import OutOfRangeError, PreconditionError, SizeLimitError
from .linear_systems import AffineForm, AffineSystem, ShiftTuple, zero_set_density
from .prime_sets import Kind, WeightedIndicator, enumerate_weights

MAIN_TERM_BUDGET = 2 * 10**6


# ---------------------------------------------------------------------------
# cutoff functions

def _cos2(x):
    x = np.abs(np.asarray(x, dtype=np.float64))
    return np.where(x < 2, np.cos(np.pi * x / 4) ** 2, 0.0)


def _cos2_derivative(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 2, -(np.pi / 4) * np.sin(np.pi * x / 2), 0.0)


def _bump(x):
    x = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    inside = x < 2
    u = (x[inside] / 2) ** 2
    out[inside] = np.exp(1 - 1 / (1 - u))
    return out


def _bump_derivative(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 2
    xi = x[inside]
    u = (xi / 2) ** 2
    out[inside] = np.exp(1 - 1 / (1 - u)) * (-xi / 2) / (1 - u) ** 2
    return out


@dataclass(frozen=True)
class SmoothCutoff:
    """Even chi: R -> [0, 1] with chi(0) = 1, support [-2, 2] and energy c_chi = int_0^2 |chi'|^2."""

    name: str
    func: object = field(repr=False)
    derivative: object = field(repr=False)
    energy: float = 0.0

    def __call__(self, x):
        return self.func(x)

    @classmethod
    def from_functions(cls, name, func, derivative):
        energy, _ = integrate.quad(lambda x: float(derivative(x)) ** 2, 0, 2, epsabs=1e-14, epsrel=1e-13, limit=200)
        return cls(name, func, derivative, energy)


COS2 = SmoothCutoff.from_functions("cos2", _cos2, _cos2_derivative)
BUMP = SmoothCutoff.from_functions("bump", _bump, _bump_derivative)
CUTOFFS = {"cos2": COS2, "bump": BUMP}


def get_cutoff(name):
    try:
        return CUTOFFS[name]
    except KeyError:
        raise PreconditionError(f"unknown cutoff {name!r}; choose from {sorted(CUTOFFS)}") from None


# ---------------------------------------------------------------------------
# divisor-sum coefficients

def _mobius_squarefree_below(X):
    """(l, mu(l)) for squarefree 1 <= l < X."""
    X = int(math.ceil(X))
    if X <= 1:
        return [(1, 1)]
    mu = np.ones(X, dtype=np.int64)
    sqfree = np.ones(X, dtype=bool)
    for p in primes_up_to(X - 1):
        p = int(p)
        mu[p::p] *= -1
        sqfree[p * p :: p * p] = False
    return [(l, int(mu[l])) for l in range(1, X) if sqfree[l]]


def divisor_weights(R, cutoff):
    """[(l, mu(l) chi(log l / log R))] over squarefree l with nonzero chi value."""
    logR = math.log(R)
    out = []
    for l, mu in _mobius_squarefree_below(R * R):
        c = float(cutoff(math.log(l) / logR)) if l > 1 else 1.0
        if c != 0.0:
            out.append((l, mu * c))
    return out


@dataclass(frozen=True)
class MajorantSpec:
    gamma: Fraction
    N: int
    W: int = 1
    b: int = 0
    shifts: ShiftTuple = ShiftTuple((0,))
    cutoff: SmoothCutoff = COS2

    def __post_init__(self):
        g = self.gamma if isinstance(self.gamma, Fraction) else Fraction(self.gamma).limit_denominator(10**6)
        object.__setattr__(self, "gamma", g)
        if not isinstance(self.shifts, ShiftTuple):
            object.__setattr__(self, "shifts", ShiftTuple(tuple(self.shifts)))
        if not 0 < g < 1:
            raise PreconditionError(f"gamma must lie in (0, 1), got {g}")

    @property
    def R(self):
        return float(self.N) ** float(self.gamma)

    @property
    def r(self):
        return self.shifts.m

    def check_residue(self):
        return all(math.gcd(self.b + h, self.W) == 1 for h in self.shifts)


def lambda_chi(n, R, cutoff, table):
    """Lambda_{chi,gamma}(n) through the factor table's distinct primes."""
    n = int(n)
    if n < 1:
        raise PreconditionError("lambda_chi needs n >= 1")
    if n > table.limit:
        raise OutOfRangeError(f"{n} outside factor table range")
    logR = math.log(R)
    limit = R * R
    primes = table.distinct_primes(n) if n > 1 else []
    total = 0.0
    # squarefree divisors, pruned once l >= R^2
    stack = [(0, 1, 1)]
    while stack:
        i, l, mu = stack.pop()
        total += mu * (float(cutoff(math.log(l) / logR)) if l > 1 else 1.0)
        for j in range(i, len(primes)):
            nl = l * primes[j]
            if nl < limit:
                stack.append((j + 1, nl, -mu))
    return logR * total * total


def lambda_chi_naive(n, R, cutoff):
    """Same quantity by enumerating every divisor of n."""
    logR = math.log(R)
    total = 0.0
    for l in range(1, n + 1):
        if n % l:
            continue
        mu = _mobius(l)
        if mu:
            total += mu * (float(cutoff(math.log(l) / logR)) if l > 1 else 1.0)
    return logR * total * total


def _mobius(n):
    out, f = 1, 2
    while f * f <= n:
        if n % f == 0:
            n //= f
            if n % f == 0:
                return 0
            out = -out
        f += 1
    return -out if n > 1 else out


def lambda_chi_values(values, R, cutoff, weights=None):
    """Vectorised Lambda over an arbitrary integer array (one pass per divisor l < R^2)."""
    values = np.asarray(values, dtype=np.int64)
    weights = weights if weights is not None else divisor_weights(R, cutoff)
    acc = np.zeros(values.shape, dtype=np.float64)
    for l, c in weights:
        if l == 1:
            acc += c
        else:
            acc += c * (values % l == 0)
    return math.log(R) * acc * acc


def lambda_chi_progression(A, B, n_lo, n_hi, R, cutoff, weights=None):
    """Lambda(A n + B) for n_lo <= n <= n_hi, summing each divisor over its residue class."""
    A, B = int(A), int(B)
    size = n_hi - n_lo + 1
    weights = weights if weights is not None else divisor_weights(R, cutoff)
    acc = np.zeros(max(size, 0), dtype=np.float64)
    for l, c in weights:
        if l == 1:
            acc += c
            continue
        g = math.gcd(A, l)
        if B % g:
            continue
        step = l // g
        n0 = (-(B // g) * pow(A // g, -1, step)) % step if step > 1 else 0
        first = n_lo + ((n0 - n_lo) % step)
        acc[first - n_lo :: step] += c
    return math.log(R) * acc * acc


def lambda_chi_tuple(n, spec, table):
    """prod_{h in H} Lambda(n + h)."""
    return math.prod(lambda_chi(n + h, spec.R, spec.cutoff, table) for h in spec.shifts)


def _phi_ratio(W):
    return euler_phi(W) / W


def majorant_nu(n, spec, table):
    """nu_b(n) = (phi(W)/W)^r Lambda_H(W n~ + b), n~ the representative of n mod N in [1, N]."""
    nt = (int(n) - 1) % spec.N + 1
    return _phi_ratio(spec.W) ** spec.r * lambda_chi_tuple(spec.W * nt + spec.b, spec, table)


def nu_array(spec, N=None):
    """nu_b(n) for n = 1..N (index 0 unused), via residue-class divisor sums."""
    N = spec.N if N is None else N
    weights = divisor_weights(spec.R, spec.cutoff)
    out = np.full(N + 1, _phi_ratio(spec.W) ** spec.r)
    out[0] = 0.0
    for h in spec.shifts:
        out[1:] *= lambda_chi_progression(spec.W, spec.b + h, 1, N, spec.R, spec.cutoff, weights)
    return out


# ---------------------------------------------------------------------------
# exact main terms

def exact_mean_product(system, R, cutoff, budget=MAIN_TERM_BUDGET):
    """Exact average over Z^d (a full period) of prod_i Lambda(psi_i(n)).

    Expands each square as a double sum over (l, l'), so the average becomes
    sum of coefficient products times the density of {n : lcm(l_i, l_i') | psi_i(n)},
    which factors over primes into zero-set densities of subsystems mod p.
    """
    weights = divisor_weights(R, cutoff)
    pair_terms = [(l1 * l2 // math.gcd(l1, l2), c1 * c2) for (l1, c1), (l2, c2) in itertools.product(weights, weights)]
    merged = {}
    for m, c in pair_terms:
        merged[m] = merged.get(m, 0.0) + c
    pairs = [(m, c) for m, c in sorted(merged.items()) if c != 0.0]
    t = system.t
    if len(pairs) ** t > budget:
        raise SizeLimitError(f"{len(pairs)}^{t} main-term terms exceed budget {budget}")
    plist = [int(p) for p in primes_up_to(int(R * R) + 1)]
    pair_primes = [(m, c, frozenset(p for p in plist if m % p == 0)) for m, c in pairs]
    density_cache = {}

    def density(p, subset):
        key = (p, subset)
        if key not in density_cache:
            sub = AffineSystem(tuple(system.forms[i] for i in subset))
            density_cache[key] = float(zero_set_density(sub, p))
        return density_cache[key]

    terms = []
    for combo in itertools.product(pair_primes, repeat=t):
        coef = math.prod(c for _, c, _ in combo)
        involved = set().union(*(ps for _, _, ps in combo))
        dens = 1.0
        for p in involved:
            subset = tuple(i for i, (_, _, ps) in enumerate(combo) if p in ps)
            dens *= density(p, subset)
            if dens == 0.0:
                break
        if dens:
            terms.append(coef * dens)
    return math.log(R) ** t * math.fsum(terms)


def tricked_system(system, spec, residues=None):
    """L = (W psi_i + b_i + h_j) in (i, j) order."""
    residues = residues if residues is not None else [spec.b] * system.t
    forms = []
    for f, b in zip(system.forms, residues):
        for h in spec.shifts:
            forms.append(AffineForm(tuple(spec.W * c for c in f.coeffs), spec.W * f.const + b + h))
    return AffineSystem(tuple(forms))


def exact_nu_mean(spec):
    """Exact average of nu_b over a full period."""
    L = tricked_system(AffineSystem.from_rows([[1]]), spec)
    return _phi_ratio(spec.W) ** spec.r * exact_mean_product(L, spec.R, spec.cutoff)


# ---------------------------------------------------------------------------
# scans and correlation estimates

@dataclass
class MajorizationReport:
    max_ratio: float
    argmax: int
    n_lo: int
    n_hi: int
    support_size: int

    def to_dict(self):
        return dict(self.__dict__)


def majorization_scan(theta, spec, N, c, table=None, nu_values=None):
    """max over n in [N^c, N] of theta_{W,b}(n)/nu(n), with 0/0 read as 0.

    ``theta`` is either a WeightedIndicator (evaluated at W n + b through
    ``table``) or an array of already tricked values indexed by n. A positive
    theta where nu vanishes yields an infinite ratio.
    """
    N = int(N)
    if isinstance(theta, WeightedIndicator):
        rho = _roughness(theta)
        if rho is not None and not spec.gamma < rho / 2:
            raise PreconditionError(f"majorization needs gamma < rho/2, got gamma = {spec.gamma}, rho = {rho}")
        if table is None:
            raise PreconditionError("a factor table is needed to evaluate theta")
        theta_values = tricked_theta(theta, spec, N, table)
    else:
        theta_values = np.asarray(theta, dtype=np.float64)
    if nu_values is None:
        nu_values = nu_array(spec, N)
    lo = max(1, int(math.ceil(float(N) ** float(c))))
    th = theta_values[lo : N + 1]
    nu = np.asarray(nu_values[lo : N + 1], dtype=np.float64)
    support = th > 0
    if not support.any():
        return MajorizationReport(0.0, 0, lo, N, 0)
    ratio = np.zeros_like(th)
    pos = support & (nu > 0)
    ratio[pos] = th[pos] / nu[pos]
    ratio[support & (nu <= 0)] = np.inf
    k = int(np.argmax(ratio))
    return MajorizationReport(float(ratio[k]), lo + k, lo, N, int(support.sum()))


def _roughness(theta):
    """The roughness exponent built into theta's support, if any."""
    if theta.kind is Kind.THETA1:
        return Fraction(1, 10)
    if theta.kind is Kind.THETA2:
        return theta.rho
    return None


def tricked_theta(theta, spec, N, table):
    """theta_{W,b}(n) = (phi(W)/W)^r theta(W n + b) for n = 1..N (index 0 unused)."""
    top = spec.W * N + spec.b
    raw = enumerate_weights(theta, top, table)
    out = np.zeros(N + 1)
    out[1:] = _phi_ratio(spec.W) ** theta.r * raw[spec.W + spec.b :: spec.W][:N]
    return out


@dataclass
class CorrelationReport:
    sum: float
    prediction: float
    ratio: float
    main_term: float
    main_ratio: float
    volume: float
    params: dict

    def to_dict(self):
        return dict(self.__dict__)


def correlation_estimate(spec, system, region, residues=None, max_points=5 * 10**7):
    """Lattice sum of prod_i Lambda_H(W psi_i(n) + b_i) over region, against two predictions.

    ``prediction`` is the asymptotic Vol(K) (W/phi(W))^{rt} c_chi^{rt};
    ``main_term`` is Vol(K) times the exact period average (finite-R main term).
    """
    from .counting import lattice_points, volume

    residues = residues if residues is not None else [spec.b] * system.t
    L = tricked_system(system, spec, residues)
    vol = volume(region)
    weights = divisor_weights(spec.R, spec.cutoff)
    total = []
    for pts in lattice_points(region, max_points=max_points):
        vals = L.evaluate(pts)
        prod = np.ones(vals.shape[0])
        for j in range(vals.shape[1]):
            prod *= lambda_chi_values(vals[:, j], spec.R, spec.cutoff, weights)
        total.append(math.fsum(prod))
    s = math.fsum(total)
    rt = spec.r * system.t
    prediction = vol * (spec.W / euler_phi(spec.W)) ** rt * spec.cutoff.energy**rt
    main = vol * exact_mean_product(L, spec.R, spec.cutoff)
    params = {
        "gamma": str(spec.gamma),
        "N": spec.N,
        "R": spec.R,
        "W": spec.W,
        "residues": list(residues),
        "shifts": list(spec.shifts.shifts),
        "cutoff": spec.cutoff.name,
        "c_chi": spec.cutoff.energy,
        "system": system.to_dict(),
        "admissible_residues": all(math.gcd(b + h, spec.W) == 1 for b in residues for h in spec.shifts),
    }
    return CorrelationReport(
        s,
        prediction,
        s / prediction if prediction else float("nan"),
        main,
        s / main if main else float("nan"),
        vol,
        params,
    )
