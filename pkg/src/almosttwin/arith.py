"""Small arithmetic helpers used across modules."""

from functools import lru_cache
from math import gcd, isqrt, prod

import numpy as np
from sympy import factorint


def primes_up_to(n):
    """Sorted numpy array of the primes <= n."""
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, isqrt(n) + 1):
        if sieve[p]:
            sieve[p * p :: p] = False
    return np.flatnonzero(sieve).astype(np.int64)


@lru_cache(maxsize=None)
def is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def prime_factors(n):
    """Distinct prime factors of |n| in increasing order (empty for 0 and +-1)."""
    n = abs(int(n))
    if n < 2:
        return []
    return sorted(factorint(n))


def primorial(w):
    """W(w) = product of the primes <= w."""
    return int(prod(int(p) for p in primes_up_to(w)))


def euler_phi(n):
    n = int(n)
    out = n
    for p in prime_factors(n):
        out = out // p * (p - 1)
    return out


def gcd_many(values):
    g = 0
    for v in values:
        g = gcd(g, int(v))
    return g


def frac_pow_ge(p, n, num, den):
    """Exact test of p >= n**(num/den) for positive integers p, n and num/den > 0."""
    return p**den >= n**num
