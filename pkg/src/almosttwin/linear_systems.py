"""Affine-linear systems: complexity, normal form, local factors, singular series.

A system Psi = (psi_1, ..., psi_t) of integer affine-linear forms on Z^d is
stored as a tuple of :class:`AffineForm`. Everything here is exact: local
factors are :class:`fractions.Fraction` values and all linear algebra is done
over Q or F_p with integer arithmetic.
"""

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .arith import gcd_many, is_prime, prime_factors, primes_up_to
from .errors import PreconditionError, SizeLimitError

MAX_COMPLEXITY_FORMS = 8
BRUTEFORCE_BUDGET = 10**8
LOCAL_SOLUTION_BUDGET = 10**7


@dataclass(frozen=True)
class AffineForm:
    coeffs: tuple
    const: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))
        object.__setattr__(self, "const", int(self.const))
        if len(self.coeffs) < 1:
            raise PreconditionError("an affine form needs at least one variable")

    @property
    def d(self):
        return len(self.coeffs)

    def __call__(self, x):
        return sum(c * int(xi) for c, xi in zip(self.coeffs, x)) + self.const

    def evaluate(self, points):
        """Evaluate on an (M, d) integer array of points."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        return pts @ np.asarray(self.coeffs, dtype=np.int64) + self.const

    def is_homogeneous_zero(self):
        return all(c == 0 for c in self.coeffs)

    def __str__(self):
        names = _var_names(self.d)
        terms = []
        for c, v in zip(self.coeffs, names):
            if c == 0:
                continue
            terms.append(v if c == 1 else f"-{v}" if c == -1 else f"{c}{v}")
        if self.const or not terms:
            terms.append(str(self.const))
        return "+".join(terms).replace("+-", "-")


def _var_names(d):
    if d <= 4:
        return ["n", "m", "k", "l"][:d]
    return [f"x{i + 1}" for i in range(d)]


@dataclass(frozen=True)
class AffineSystem:
    forms: tuple

    def __post_init__(self):
        forms = tuple(self.forms)
        if not forms:
            raise PreconditionError("a system needs at least one form")
        d = forms[0].d
        if any(f.d != d for f in forms):
            raise PreconditionError("all forms must share the same number of variables")
        object.__setattr__(self, "forms", forms)

    @property
    def d(self):
        return self.forms[0].d

    @property
    def t(self):
        return len(self.forms)

    @classmethod
    def from_rows(cls, coeffs, consts=None):
        consts = consts if consts is not None else [0] * len(coeffs)
        return cls(tuple(AffineForm(c, b) for c, b in zip(coeffs, consts)))

    def homogeneous_matrix(self):
        return [list(f.coeffs) for f in self.forms]

    def evaluate(self, points):
        """(M, t) array of form values on an (M, d) array of points."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        mat = np.asarray(self.homogeneous_matrix(), dtype=np.int64)
        consts = np.asarray([f.const for f in self.forms], dtype=np.int64)
        return pts @ mat.T + consts

    def to_dict(self):
        return {"d": self.d, "forms": [{"coeffs": list(f.coeffs), "const": f.const} for f in self.forms]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        d = int(data["d"])
        forms = []
        for item in data["forms"]:
            coeffs = item["coeffs"]
            if len(coeffs) != d:
                raise PreconditionError(f"form {item} does not have {d} coefficients")
            forms.append(AffineForm(coeffs, item.get("const", 0)))
        return cls(tuple(forms))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __str__(self):
        return "(" + ", ".join(str(f) for f in self.forms) + ")"


@dataclass(frozen=True)
class ShiftTuple:
    shifts: tuple

    def __post_init__(self):
        shifts = tuple(int(h) for h in self.shifts)
        if not shifts:
            raise PreconditionError("a shift tuple needs at least one shift")
        if any(a >= b for a, b in zip(shifts, shifts[1:])):
            raise PreconditionError("shifts must be strictly increasing")
        object.__setattr__(self, "shifts", shifts)

    @property
    def m(self):
        return len(self.shifts)

    @property
    def diameter(self):
        return self.shifts[-1] - self.shifts[0]

    def __iter__(self):
        return iter(self.shifts)

    def __len__(self):
        return len(self.shifts)


@dataclass(frozen=True)
class SingularSeriesResult:
    value: float
    error_bound: float
    cutoff_prime: int
    exceptional_primes: tuple

    def to_dict(self):
        return {
            "value": self.value,
            "error_bound": self.error_bound,
            "cutoff": self.cutoff_prime,
            "exceptional_primes": list(self.exceptional_primes),
        }


# ---------------------------------------------------------------------------
# exact linear algebra

def rank_q(rows):
    """Rank over Q of a list of integer vectors."""
    mat = [[Fraction(x) for x in r] for r in rows if any(r)]
    if not mat:
        return 0
    ncols = len(mat[0])
    rank = 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(mat)) if mat[r][col] != 0), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        for r in range(len(mat)):
            if r != rank and mat[r][col] != 0:
                f = mat[r][col] / mat[rank][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[rank])]
        rank += 1
        if rank == len(mat):
            break
    return rank


def _reduce_mod_p(row, basis, p):
    """Reduce ``row`` against an echelon ``basis`` {pivot: row with pivot 1} mod p."""
    row = list(row)
    for piv, brow in basis.items():
        c = row[piv] % p
        if c:
            row = [(a - c * b) % p for a, b in zip(row, brow)]
    return [a % p for a in row]


def _add_to_basis(row, basis, p):
    piv = next(i for i, a in enumerate(row) if a)
    inv = pow(row[piv], -1, p)
    row = [(a * inv) % p for a in row]
    new = {}
    for q, brow in basis.items():
        c = brow[piv]
        new[q] = [(a - c * b) % p for a, b in zip(brow, row)] if c else brow
    new[piv] = row
    return new


def nullspace_mod_p(mat, p):
    """Basis (list of vectors) of {x in F_p^d : mat x = 0}."""
    d = len(mat[0])
    basis = {}
    for r in mat:
        red = _reduce_mod_p([x % p for x in r], basis, p)
        if any(red):
            basis = _add_to_basis(red, basis, p)
    free = [j for j in range(d) if j not in basis]
    out = []
    for f in free:
        v = [0] * d
        v[f] = 1
        for piv, brow in basis.items():
            v[piv] = (-brow[f]) % p
        out.append(v)
    return out


def _signed_zero_count(system, p):
    """Sum over S subset [t] of (-1)^|S| * #{a in F_p^d : psi_i(a) = 0 for i in S}.

    Depth-first over subsets carrying an echelon basis of the augmented rows;
    an inconsistent subsystem prunes every superset containing it.
    """
    d = system.d
    rows = [[c % p for c in f.coeffs] + [f.const % p] for f in system.forms]
    t = len(rows)

    def rec(i, basis, rank):
        if i == t:
            return p ** (d - rank)
        total = rec(i + 1, basis, rank)
        red = _reduce_mod_p(rows[i], basis, p)
        if not any(red[:d]):
            if red[d]:
                return total  # inconsistent: every superset contributes 0
            return total - rec(i + 1, basis, rank)
        return total - rec(i + 1, _add_to_basis(red, basis, p), rank + 1)

    return rec(0, {}, 0)


def zero_set_density(system, p):
    """Density in F_p^d of the common zero set of all forms of ``system``."""
    d = system.d
    basis = {}
    rank = 0
    for f in system.forms:
        red = _reduce_mod_p([c % p for c in f.coeffs] + [f.const % p], basis, p)
        if not any(red[:d]):
            if red[d]:
                return Fraction(0)
            continue
        basis = _add_to_basis(red, basis, p)
        rank += 1
    return Fraction(1, p**rank)


# ---------------------------------------------------------------------------
# complexity and normal form

def complexity(system):
    """Cauchy-Schwarz complexity of ``system``; None when it is infinite."""
    t = system.t
    if t > MAX_COMPLEXITY_FORMS:
        raise SizeLimitError(f"complexity search limited to t <= {MAX_COMPLEXITY_FORMS} forms, got {t}")
    if t == 1:
        return 0
    hom = [tuple(f.coeffs) for f in system.forms]
    for i, j in itertools.combinations(range(t), 2):
        if rank_q([hom[i], hom[j]]) < 2:
            return None

    @lru_cache(maxsize=None)
    def rank_of(idx):
        return rank_q([hom[k] for k in idx])

    def avoids(i, part):
        key = tuple(sorted(part))
        return rank_of(tuple(sorted(key + (i,)))) > rank_of(key)

    def partition_exists(i, k):
        others = [j for j in range(t) if j != i]
        parts = []

        def place(pos):
            if pos == len(others):
                return True
            e = others[pos]
            for part in parts:
                part.append(e)
                if avoids(i, part) and place(pos + 1):
                    return True
                part.pop()
            if len(parts) < k:
                parts.append([e])
                if avoids(i, parts[-1]) and place(pos + 1):
                    return True
                parts.pop()
            return False

        return place(0)

    worst = 0
    for i in range(t):
        k = next(k for k in range(1, t) if partition_exists(i, k))
        worst = max(worst, k - 1)
    return worst


def is_normal_form(system, s):
    """Whether ``system`` is in s-normal form, with index sets J_i drawn from coordinates [d].

    J_i must be nonempty, so a form with zero homogeneous part is never isolated.
    """
    d = system.d
    hom = [f.coeffs for f in system.forms]
    max_size = min(s + 1, d)
    for i in range(system.t):
        support = [j for j in range(d) if hom[i][j] != 0]
        found = False
        for size in range(1, max_size + 1):
            for J in itertools.combinations(support, size):
                if all(any(hom[k][j] == 0 for j in J) for k in range(system.t) if k != i):
                    found = True
                    break
            if found:
                break
        if not found:
            return False
    return True


# ---------------------------------------------------------------------------
# local factors

def local_factor_bruteforce(system, p):
    """beta_p by enumerating all of (Z/pZ)^d."""
    d, t = system.d, system.t
    if p**d > BRUTEFORCE_BUDGET:
        raise SizeLimitError(f"p^d = {p}^{d} exceeds the enumeration budget {BRUTEFORCE_BUDGET}")
    mat = np.asarray(system.homogeneous_matrix(), dtype=np.int64) % p
    consts = np.asarray([f.const for f in system.forms], dtype=np.int64) % p
    total = p**d
    chunk = max(1, 2_000_000 // max(t, 1))
    good = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        pts = np.empty((idx.size, d), dtype=np.int64)
        rest = idx
        for j in range(d):
            pts[:, j] = rest % p
            rest = rest // p
        vals = (pts @ mat.T + consts) % p
        good += int(np.count_nonzero(np.all(vals != 0, axis=1)))
    return Fraction(good * p**t, (p - 1) ** t * p**d)


def local_factor_exact(system, p):
    """beta_p by inclusion-exclusion over subsystems; no enumeration of F_p^d."""
    if system.t > 20:
        raise SizeLimitError("local_factor_exact supports t <= 20")
    signed = _signed_zero_count(system, p)
    return Fraction(signed * p**system.t, (p - 1) ** system.t * p**system.d)


def local_factor_forbidden(system, p, forbidden):
    """Local factor with forbidden residue set A_p: E_a prod_i (1-|A_p|/p)^-1 1[psi_i(a) not in A_p].

    Computed by enumeration over (Z/pZ)^d. With forbidden = {0} this is beta_p.
    """
    forbidden = {r % p for r in forbidden}
    if len(forbidden) >= p:
        return Fraction(0)
    d, t = system.d, system.t
    if p**d > BRUTEFORCE_BUDGET:
        raise SizeLimitError(f"p^d = {p}^{d} exceeds the enumeration budget")
    bad = np.zeros(p, dtype=bool)
    bad[list(forbidden)] = True
    mat = np.asarray(system.homogeneous_matrix(), dtype=np.int64) % p
    consts = np.asarray([f.const for f in system.forms], dtype=np.int64) % p
    idx = np.arange(p**d, dtype=np.int64)
    pts = np.empty((idx.size, d), dtype=np.int64)
    for j in range(d):
        pts[:, j] = idx % p
        idx = idx // p
    vals = (pts @ mat.T + consts) % p
    good = int(np.count_nonzero(~np.any(bad[vals], axis=1)))
    a = len(forbidden)
    return Fraction(good * p**t, (p - a) ** t * p**d)


def shifted_system(system, shifts):
    """Psi_H = (psi_i + h_j) in (i, j) lexicographic order."""
    hs = shifts.shifts if isinstance(shifts, ShiftTuple) else tuple(shifts)
    return AffineSystem(tuple(AffineForm(f.coeffs, f.const + h) for f in system.forms for h in hs))


# ---------------------------------------------------------------------------
# singular series

def exceptional_primes(system):
    """Primes at which some form degenerates or two forms become dependent mod p.

    Raises PreconditionError if that happens at every prime (a form with zero
    homogeneous part, or two forms proportional over Q).
    """
    out = set()
    rows = [list(f.coeffs) + [f.const] for f in system.forms]
    for i, f in enumerate(system.forms):
        g = gcd_many(f.coeffs)
        if g == 0:
            raise PreconditionError(f"form {i} ({f}) has zero homogeneous part")
        out.update(prime_factors(g))
    for i, j in itertools.combinations(range(system.t), 2):
        a, b = rows[i], rows[j]
        minors = [a[k] * b[l] - a[l] * b[k] for k, l in itertools.combinations(range(len(a)), 2)]
        g = gcd_many(minors)
        if g == 0:
            raise PreconditionError(f"forms {i} and {j} are proportional over Q")
        out.update(prime_factors(g))
    return tuple(sorted(out))


def tail_constant(t, p_min):
    """c(t) with |beta_p - 1| <= c(t)/p^2 for every non-exceptional prime p >= p_min.

    For such p each zero set is a hyperplane and any two are either disjoint or
    meet in codimension 2, so every inclusion-exclusion term with |S| >= 2 lies
    in [0, p^-2]; the same holds for the binomial terms of (1 - 1/p)^t.
    """
    return (2**t - 1 - t) / (1 - 1 / p_min) ** t


def _inverse_square_prime_tail(P):
    """Upper bound for sum_{p > P} p^-2, using that primes > 3 are +-1 mod 6."""
    if P < 3:
        return 1.0 / max(P, 1)
    n0 = P + 1
    return 2.0 / n0**2 + 1.0 / (3 * n0)


def singular_series(system, cutoff):
    """Truncated product of beta_p over p <= cutoff with a rigorous tail bound."""
    exc = exceptional_primes(system)
    if exc and exc[-1] > cutoff:
        raise PreconditionError(
            f"cutoff {cutoff} is below the largest exceptional prime {exc[-1]}; use cutoff >= {exc[-1]}"
        )
    logs = []
    for p in primes_up_to(cutoff):
        beta = local_factor_exact(system, int(p))
        if beta == 0:
            return SingularSeriesResult(0.0, 0.0, int(cutoff), exc)
        logs.append(math.log(beta.numerator) - math.log(beta.denominator))
    value = math.exp(math.fsum(logs))
    c = tail_constant(system.t, cutoff + 1)
    if c == 0:
        return SingularSeriesResult(value, 0.0, int(cutoff), exc)
    delta_max = c / (cutoff + 1) ** 2
    if delta_max >= 0.5:
        raise PreconditionError(f"cutoff {cutoff} too small for a tail bound with t = {system.t}")
    tail_log = c * _inverse_square_prime_tail(cutoff) / (1 - delta_max)
    return SingularSeriesResult(value, value * math.expm1(tail_log), int(cutoff), exc)


def iwaniec_singular_series(K, b):
    """Singular series of L(n) = Kn + b for primes of the form x^2 + y^2 + 1.

    Every prime not dividing K contributes exactly 1, so the product is finite
    and returned as an exact rational.
    """
    value = Fraction(1)
    for p in prime_factors(K):
        if p % 4 == 3 and p != 3:
            roots = sum(1 for r in (0, 1) if (b - r) % p == 0)
            count = p * roots
            value *= (1 - Fraction(count, p)) / (1 - Fraction(2, p))
        else:
            count = p if b % p == 0 else 0
            value *= (1 - Fraction(count, p)) / (1 - Fraction(1, p))
    return value


# ---------------------------------------------------------------------------
# admissibility

def admissibility_primes(system):
    """Finite set of primes at which beta_p can vanish."""
    ps = {int(p) for p in primes_up_to(system.t)}
    for f in system.forms:
        g = gcd_many(f.coeffs)
        if g:
            ps.update(prime_factors(g))
        elif f.const:
            ps.update(prime_factors(f.const))
    try:
        ps.update(exceptional_primes(system))
    except PreconditionError:
        pass
    return sorted(ps)


def admissible_system(system):
    if any(f.is_homogeneous_zero() and f.const == 0 for f in system.forms):
        return False
    return all(local_factor_exact(system, p) != 0 for p in admissibility_primes(system))


def admissible_tuple(shifts):
    hs = shifts.shifts if isinstance(shifts, ShiftTuple) else tuple(shifts)
    m = len(hs)
    for p in primes_up_to(m):
        if len({h % int(p) for h in hs}) == p:
            return False
    return True


# ---------------------------------------------------------------------------
# kernel lattices

def hermite_normal_form(rows):
    """Row-style Hermite normal form of an integer matrix (zero rows dropped)."""
    mat = [list(map(int, r)) for r in rows]
    if not mat:
        return []
    ncols = len(mat[0])
    r = 0
    for col in range(ncols):
        if r == len(mat):
            break
        while True:
            nz = [i for i in range(r, len(mat)) if mat[i][col] != 0]
            if not nz:
                break
            piv = min(nz, key=lambda i: abs(mat[i][col]))
            mat[r], mat[piv] = mat[piv], mat[r]
            done = True
            for i in range(r + 1, len(mat)):
                q = mat[i][col] // mat[r][col]
                if q:
                    mat[i] = [a - q * b for a, b in zip(mat[i], mat[r])]
                if mat[i][col]:
                    done = False
            if done:
                break
        if mat[r][col] == 0:
            continue
        if mat[r][col] < 0:
            mat[r] = [-a for a in mat[r]]
        for i in range(r):
            q = mat[i][col] // mat[r][col]
            if q:
                mat[i] = [a - q * b for a, b in zip(mat[i], mat[r])]
        r += 1
    return [row for row in mat[:r] if any(row)]


def integer_kernel_basis(mat):
    """Basis of the lattice {x in Z^d : mat x = 0}, as a list of row vectors.

    Row-reduces [mat^T | I_d] with unimodular operations on the first block;
    the identity-block rows whose first block vanishes span the kernel lattice.
    """
    t, d = len(mat), len(mat[0])
    aug = [[mat[i][j] for i in range(t)] + [int(j == k) for k in range(d)] for j in range(d)]
    r = 0
    for col in range(t):
        while True:
            nz = [i for i in range(r, d) if aug[i][col] != 0]
            if not nz:
                break
            piv = min(nz, key=lambda i: abs(aug[i][col]))
            aug[r], aug[piv] = aug[piv], aug[r]
            clean = True
            for i in range(r + 1, d):
                q = aug[i][col] // aug[r][col]
                if q:
                    aug[i] = [a - q * b for a, b in zip(aug[i], aug[r])]
                if aug[i][col]:
                    clean = False
            if clean:
                break
        if any(aug[i][col] for i in range(r, d)):
            r += 1
    return [row[t:] for row in aug if not any(row[:t])]


def kernel_parametrization(mat):
    """Injective homogeneous Psi: Z^(d-t) -> Z^d whose image is the integer kernel of ``mat``.

    The kernel basis is put in Hermite normal form, so the output is canonical.
    """
    mat = [list(map(int, r)) for r in mat]
    t, d = len(mat), len(mat[0])
    if t >= d:
        raise PreconditionError(f"need fewer equations than variables (t={t}, d={d})")
    if rank_q(mat) < t:
        raise PreconditionError("equations are linearly dependent over Q")
    basis = hermite_normal_form(integer_kernel_basis(mat))
    k = len(basis)
    return AffineSystem(tuple(AffineForm([basis[c][i] for c in range(k)], 0) for i in range(d)))


# ---------------------------------------------------------------------------
# local solvability (A_p / B_p conditions)

def chen_forbidden(p):
    """Complement of A_p = {x : x(x+2) != 0 mod p}."""
    return {0, (-2) % p}


def tuple_forbidden(shifts):
    hs = shifts.shifts if isinstance(shifts, ShiftTuple) else tuple(shifts)

    def forbidden(p):
        return {(-h) % p for h in hs}

    return forbidden


def local_solution_exists(mat, p, forbidden):
    """Whether mat x = 0 has a solution mod p with every coordinate outside ``forbidden``.

    ``forbidden`` is a residue set or a callable p -> residue set.
    """
    if not is_prime(p):
        raise PreconditionError(f"{p} is not prime")
    if p > 10**4:
        raise SizeLimitError("local_solution_exists supports p <= 10^4")
    bad_set = forbidden(p) if callable(forbidden) else forbidden
    bad = np.zeros(p, dtype=bool)
    for r in bad_set:
        bad[r % p] = True
    if bad.all():
        return False
    basis = nullspace_mod_p(mat, p)
    k = len(basis)
    if k == 0:
        return not bad[0]
    if p**k > LOCAL_SOLUTION_BUDGET:
        raise SizeLimitError(f"kernel mod {p} has {p}^{k} points, over budget")
    B = np.asarray(basis, dtype=np.int64)
    total = p**k
    chunk = 1_000_000
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        coef = np.empty((idx.size, k), dtype=np.int64)
        for j in range(k):
            coef[:, j] = idx % p
            idx = idx // p
        vecs = (coef @ B) % p
        if np.any(~np.any(bad[vecs], axis=1)):
            return True
    return False


# ---------------------------------------------------------------------------
# named systems

def arithmetic_progression(k):
    """Psi(n, d) = (n, n+d, ..., n+(k-1)d)."""
    return AffineSystem.from_rows([[1, j] for j in range(k)])


def twin_system():
    return AffineSystem.from_rows([[1], [1]], [0, 2])


NAMED_SYSTEMS = {
    "twin": twin_system,
    "prime": lambda: AffineSystem.from_rows([[1]]),
    "ap3": lambda: arithmetic_progression(3),
    "ap4": lambda: arithmetic_progression(4),
    "ap5": lambda: arithmetic_progression(5),
}
