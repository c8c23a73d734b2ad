"""Independent reference implementations used to freeze and cross-check expected values.

Nothing here imports the package's algorithms: every routine is a direct,
slow transcription of a definition.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
import sympy


def is_prime(n):
    if n < 2:
        return False
    f = 2
    while f * f <= n:
        if n % f == 0:
            return False
        f += 1
    return True


def factorize(n):
    out, f = [], 2
    while f * f <= n:
        while n % f == 0:
            out.append(f)
            n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def rough(p, n, rho):
    """p >= n^rho for rational rho, exactly."""
    rho = Fraction(rho)
    return p**rho.denominator >= n**rho.numerator


def theta1_positive(n):
    if not is_prime(n):
        return False
    f = factorize(n + 2)
    if len(f) > 2:
        return False
    return all(rough(p, n, Fraction(1, 10)) for p in [n] + f)


def theta2_positive(n, shifts, rho, k):
    if n < 2:
        return False
    if sum(is_prime(n + h) for h in shifts) < k:
        return False
    return all(rough(p, n, rho) for h in shifts for p in factorize(n + h))


def sum_of_two_squares_search(n):
    x = 0
    while x * x <= n:
        y2 = n - x * x
        y = math.isqrt(y2)
        if y * y == y2:
            return True
        x += 1
    return False


def theta3_positive(n):
    return is_prime(n) and sum_of_two_squares_search(n - 1)


def local_factor(rows, consts, p):
    """E_{a in (Z/p)^d} prod_i (p/(p-1)) 1[psi_i(a) != 0 mod p] by plain enumeration."""
    d, t = len(rows[0]), len(rows)
    good = 0
    for a in itertools.product(range(p), repeat=d):
        if all((sum(c * x for c, x in zip(r, a)) + k) % p for r, k in zip(rows, consts)):
            good += 1
    return Fraction(good * p**t, (p - 1) ** t * p**d)


def twin_constant(cutoff):
    """2 prod_{2 < p <= cutoff} (1 - 1/(p-1)^2), summed in logs."""
    sieve = np.ones(cutoff + 1, dtype=bool)
    sieve[:2] = False
    for q in range(2, math.isqrt(cutoff) + 1):
        if sieve[q]:
            sieve[q * q :: q] = False
    ps = np.flatnonzero(sieve)[1:].astype(np.float64)
    return 2.0 * math.exp(math.fsum(np.log1p(-1.0 / (ps - 1.0) ** 2)))


def mobius(n):
    f = factorize(n)
    if len(set(f)) != len(f):
        return 0
    return -1 if len(f) % 2 else 1


def lambda_naive(n, R, chi):
    logR = math.log(R)
    s = 0.0
    for l in range(1, n + 1):
        if n % l == 0:
            s += mobius(l) * (chi(math.log(l) / logR) if l > 1 else 1.0)
    return logR * s * s


def complexity(rows):
    """min s with, for every i, a partition of the other forms into s + 1 classes avoiding psi_i's span."""
    t = len(rows)
    if t == 1:
        return 0
    for i, j in itertools.combinations(range(t), 2):
        if sympy.Matrix([rows[i], rows[j]]).rank() < 2:
            return None
    worst = 0
    for i in range(t):
        others = [j for j in range(t) if j != i]
        best = None
        for part in sympy.utilities.iterables.multiset_partitions(others):
            ok = all(
                sympy.Matrix([rows[j] for j in cls]).rank() < sympy.Matrix([rows[j] for j in cls] + [rows[i]]).rank()
                for cls in part
            )
            if ok and (best is None or len(part) < best):
                best = len(part)
        if best is None:
            return None
        worst = max(worst, best - 1)
    return worst


def gowers_literal(f, k):
    """||f||_{U^k(Z/N)} straight from the cube average."""
    N = len(f)
    total = 0j
    for x in range(N):
        for h in itertools.product(range(N), repeat=k):
            prod = 1 + 0j
            for omega in itertools.product((0, 1), repeat=k):
                v = f[(x + sum(o * hh for o, hh in zip(omega, h))) % N]
                prod *= v.conjugate() if sum(omega) % 2 else v
            total += prod
    return max((total / N ** (k + 1)).real, 0.0) ** (1 / 2**k)


def kernel_oracle(mat):
    """Rational kernel basis from sympy, scaled to integer rows."""
    ns = sympy.Matrix(mat).nullspace()
    out = []
    for v in ns:
        den = sympy.ilcm(*[sympy.fraction(x)[1] for x in v])
        out.append([int(x * den) for x in v])
    return out


def maximal_minor_gcd(basis):
    M = sympy.Matrix(basis)
    k = M.rows
    g = 0
    for cols in itertools.combinations(range(M.cols), k):
        g = math.gcd(g, int(M.extract(list(range(k)), list(cols)).det()))
    return g


def classify_B(n, x, eps):
    """B1 / B2 / neither by trying every ordering of the three prime factors (float logs, well away from ties)."""
    f = factorize(n)
    if len(f) != 3:
        return "neither"
    lx = math.log(x)
    lo, mid = lx / 10, lx * (1 / 3 - eps)

    def b1(p1, p2, p3):
        return lo <= math.log(p1) <= mid and mid <= math.log(p2) and p2 * p2 * p1 <= 2 * x and math.log(p3) >= lo

    def b2(p1, p2, p3):
        return mid <= math.log(p1) and p1 <= p2 and p2 * p2 * p1 <= 2 * x and math.log(p3) >= lo

    orders = list(itertools.permutations(f))
    if any(b1(*o) for o in orders):
        return "B1"
    if any(b2(*o) for o in orders):
        return "B2"
    return "neither"


def amenable(K, b):
    """The three amenability conditions, each checked with sympy helpers."""
    if K % 216:
        return False
    s = 1
    for p in sympy.primefactors(K):
        if p % 4 == 3 and p != 3:
            s *= p
    if math.gcd(b, K) != 1 or math.gcd(b - 1, s) != 1 or b == 1:
        return False
    u = b - 1
    j = sympy.multiplicity(2, u)
    e = sympy.multiplicity(3, u)
    rest = u // (2**j * 3**e)
    return e % 2 == 0 and rest % 4 == 1 and K % (2 ** (j + 2) * 3 ** (e + 1)) == 0


def lambda_by_subsets(n, R, chi):
    """log R (sum over subsets S of the distinct primes of n of (-1)^|S| chi(log prod S / log R))^2."""
    ps = sorted(set(factorize(n))) if n > 1 else []
    logR = math.log(R)
    s = 0.0
    for k in range(len(ps) + 1):
        for sub in itertools.combinations(ps, k):
            l = math.prod(sub)
            s += (-1) ** k * (chi(math.log(l) / logR) if l > 1 else 1.0)
    return logR * s * s
