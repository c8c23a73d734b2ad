"""Lattice-point sums T_Psi(f, K), the W-trick decomposition and density experiments."""

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import qmc

from .arith import euler_phi, primes_up_to, primorial
from .errors import OutOfRangeError, PreconditionError, SizeLimitError
from .linear_systems import (
    AffineForm,
    AffineSystem,
    ShiftTuple,
    local_factor_exact,
    local_factor_forbidden,
    shifted_system,
    singular_series,
)
from .nilsequences import NilsequenceSpec
from .nilsequences import evaluate as evaluate_xi
from .prime_sets import Kind, WeightedIndicator, enumerate_weights

MAX_POINTS = 5 * 10**7
CHUNK_POINTS = 1 << 20
QMC_SAMPLES = 1 << 14
QMC_REPLICATES = 8


# ---------------------------------------------------------------------------
# regions

@dataclass(frozen=True)
class LatticeRegion:
    """Integer box prod [lo_j, hi_j] intersected with rational halfspaces a . x <= b."""

    box: tuple
    cuts: tuple = ()

    def __post_init__(self):
        box = tuple((int(lo), int(hi)) for lo, hi in self.box)
        if not box:
            raise PreconditionError("a region needs at least one coordinate")
        cuts = tuple((tuple(Fraction(c) for c in a), Fraction(b)) for a, b in self.cuts)
        if any(len(a) != len(box) for a, _ in cuts):
            raise PreconditionError("cut dimension does not match the box")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "cuts", cuts)

    @property
    def d(self):
        return len(self.box)

    @classmethod
    def interval(cls, lo, hi):
        return cls(((lo, hi),))

    @classmethod
    def cube(cls, lo, hi, d):
        return cls(((lo, hi),) * d)

    @property
    def box_empty(self):
        return any(hi < lo for lo, hi in self.box)

    @property
    def box_count(self):
        return 0 if self.box_empty else math.prod(hi - lo + 1 for lo, hi in self.box)

    def integer_cuts(self):
        """Cuts scaled to integer coefficients."""
        out = []
        for a, b in self.cuts:
            den = math.lcm(*(c.denominator for c in a), b.denominator)
            out.append((np.array([int(c * den) for c in a], dtype=np.int64), int(b * den)))
        return out

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        ok = np.ones(pts.shape[0], dtype=bool)
        for j, (lo, hi) in enumerate(self.box):
            ok &= (pts[:, j] >= lo) & (pts[:, j] <= hi)
        for a, b in self.integer_cuts():
            ok &= pts @ a <= b
        return ok

    def to_dict(self):
        return {"box": [list(b) for b in self.box], "cuts": [[[str(c) for c in a], str(b)] for a, b in self.cuts]}


def lattice_points(region, max_points=MAX_POINTS, chunk=CHUNK_POINTS):
    """Yield arrays of lattice points of the region, chunked over the leading coordinate in order."""
    if region.box_empty:
        return
    if region.box_count > max_points:
        raise SizeLimitError(f"region box has {region.box_count} points, budget {max_points}")
    (lo0, hi0), rest = region.box[0], region.box[1:]
    inner = math.prod(hi - lo + 1 for lo, hi in rest) if rest else 1
    step = max(1, chunk // inner)
    cuts = region.integer_cuts()
    tails = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in rest]
    for start in range(lo0, hi0 + 1, step):
        lead = np.arange(start, min(hi0, start + step - 1) + 1, dtype=np.int64)
        grids = np.meshgrid(lead, *tails, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        if cuts:
            keep = np.ones(pts.shape[0], dtype=bool)
            for a, b in cuts:
                keep &= pts @ a <= b
            pts = pts[keep]
        if pts.size:
            yield pts


@dataclass(frozen=True)
class VolumeResult:
    value: float
    stderr: float
    exact: bool

    def __float__(self):
        return self.value


def _clip_polygon(poly, a, b):
    """Sutherland-Hodgman clip of a convex polygon (Fraction vertices) to a . x <= b."""
    out = []
    n = len(poly)
    for k in range(n):
        P, Q = poly[k], poly[(k + 1) % n]
        fp = a[0] * P[0] + a[1] * P[1] - b
        fq = a[0] * Q[0] + a[1] * Q[1] - b
        if fp <= 0:
            out.append(P)
        if (fp < 0 < fq) or (fq < 0 < fp):
            s = fp / (fp - fq)
            out.append((P[0] + s * (Q[0] - P[0]), P[1] + s * (Q[1] - P[1])))
    return out


def _exact_cut_volume(region):
    if region.d == 1:
        lo, hi = Fraction(region.box[0][0]), Fraction(region.box[0][1])
        for (a,), b in region.cuts:
            if a > 0:
                hi = min(hi, b / a)
            elif a < 0:
                lo = max(lo, b / a)
            elif b < 0:
                return Fraction(0)
        return max(hi - lo, Fraction(0))
    (x0, x1), (y0, y1) = region.box
    poly = [(Fraction(x0), Fraction(y0)), (Fraction(x1), Fraction(y0)), (Fraction(x1), Fraction(y1)), (Fraction(x0), Fraction(y1))]
    for a, b in region.cuts:
        poly = _clip_polygon(poly, a, b)
        if len(poly) < 3:
            return Fraction(0)
    area = sum(poly[k][0] * poly[(k + 1) % len(poly)][1] - poly[(k + 1) % len(poly)][0] * poly[k][1] for k in range(len(poly)))
    return abs(area) / 2


def volume_report(region, samples=QMC_SAMPLES, replicates=QMC_REPLICATES, seed=0):
    """Continuous volume of the region: exact for boxes and for d <= 2, scrambled Sobol for d in {3, 4}."""
    if region.box_empty:
        return VolumeResult(0.0, 0.0, True)
    lengths = [hi - lo for lo, hi in region.box]
    if not region.cuts:
        return VolumeResult(float(math.prod(lengths)), 0.0, True)
    if region.d <= 2:
        return VolumeResult(float(_exact_cut_volume(region)), 0.0, True)
    if region.d > 4:
        raise SizeLimitError(f"volume of cut regions supports d <= 4, got d = {region.d}")
    box_vol = math.prod(lengths)
    if box_vol == 0:
        return VolumeResult(0.0, 0.0, True)
    lo = np.array([b[0] for b in region.box], dtype=np.float64)
    span = np.array(lengths, dtype=np.float64)
    A = np.array([[float(c) for c in a] for a, _ in region.cuts])
    B = np.array([float(b) for _, b in region.cuts])
    estimates = []
    for r in range(replicates):
        pts = lo + span * qmc.Sobol(region.d, scramble=True, seed=seed + r).random(samples)
        estimates.append(np.mean(np.all(pts @ A.T <= B, axis=1)) * box_vol)
    est = np.array(estimates)
    return VolumeResult(float(est.mean()), float(est.std(ddof=1) / math.sqrt(replicates)), False)


def volume(region, **kw):
    return volume_report(region, **kw).value


# ---------------------------------------------------------------------------
# T_Psi(f, K)

def _weight_list(weights, t):
    if isinstance(weights, np.ndarray) and weights.ndim == 1:
        return [weights] * t
    weights = list(weights)
    if len(weights) == 1:
        return weights * t
    if len(weights) != t:
        raise PreconditionError(f"expected {t} weight arrays, got {len(weights)}")
    return [np.asarray(w) for w in weights]


def _lookup(arr, vals, form_index, system, pts):
    bad = (vals < 0) | (vals >= arr.size)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise OutOfRangeError(
            f"form {form_index} ({system.forms[form_index]}) takes value {int(vals[k])} at n = "
            f"{tuple(int(x) for x in pts[k])}, outside the weight domain [0, {arr.size - 1}]"
        )
    return arr[vals]


def count_T(system, weights, region, max_points=MAX_POINTS):
    """sum_{n in K cap Z^d} prod_i f_i(psi_i(n)); f_i[v] is the weight at v.

    Integer weight arrays give an exact Python int; float weights are summed
    with compensated (fsum) addition in a fixed chunk order.
    """
    ws = _weight_list(weights, system.t)
    integral = all(np.issubdtype(w.dtype, np.integer) or w.dtype == bool for w in ws)
    total_int, parts = 0, []
    for pts in lattice_points(region, max_points):
        vals = system.evaluate(pts)
        prod = None
        for i in range(system.t):
            col = _lookup(ws[i], vals[:, i], i, system, pts)
            col = col.astype(np.int64 if integral else np.float64)
            prod = col if prod is None else prod * col
        if integral:
            total_int += int(np.sum(prod, dtype=np.int64))
        else:
            parts.append(math.fsum(prod))
    return total_int if integral else math.fsum(parts)


# ---------------------------------------------------------------------------
# W-trick

@dataclass(frozen=True)
class ResidueData:
    a: tuple
    system: AffineSystem
    constants: tuple
    region: LatticeRegion


@dataclass(frozen=True)
class WTrickDecomposition:
    W: int
    shifts: ShiftTuple
    original: AffineSystem
    pieces: tuple = field(repr=False)

    @property
    def residues(self):
        return [piece.a for piece in self.pieces]

    def verify(self, samples=16, seed=0):
        """psi_i(W n + a) = W psi'_i(n) + c_i(a) with c_i(a) in [1, W], on random n."""
        rng = np.random.default_rng(seed)
        for piece in self.pieces:
            if not all(1 <= c <= self.W for c in piece.constants):
                return False
            n = rng.integers(-1000, 1000, size=(samples, self.original.d))
            lhs = self.original.evaluate(self.W * n + np.array(piece.a))
            rhs = self.W * piece.system.evaluate(n) + np.array(piece.constants)
            if not np.array_equal(lhs, rhs):
                return False
        return True


def _residue_good(system, shifts, W, a):
    return all(math.gcd(f(a) + h, W) == 1 for f in system.forms for h in shifts)


def _sub_region(region, W, a):
    box = tuple((-((a_j - lo) // W), (hi - a_j) // W) for (lo, hi), a_j in zip(region.box, a))
    cuts = tuple((tuple(W * c for c in coef), b - sum(c * x for c, x in zip(coef, a))) for coef, b in region.cuts)
    return LatticeRegion(box, cuts)


def w_trick_decompose(system, shifts, w, region):
    """Residues a in [W]^d with (psi_i(a) + h_j, W) = 1, and the rescaled systems and regions."""
    if w < 2:
        raise PreconditionError("w must be at least 2")
    shifts = shifts if isinstance(shifts, ShiftTuple) else ShiftTuple(tuple(shifts))
    W = primorial(w)
    pieces = []
    for a in itertools.product(range(1, W + 1), repeat=system.d):
        if not _residue_good(system, shifts.shifts, W, a):
            continue
        consts = [(f(a) - 1) % W + 1 for f in system.forms]
        # psi_i(W n + a) = W L_i(n) + psi_i(a), so psi'_i = L_i + (psi_i(a) - c_i(a)) / W
        forms = [AffineForm(f.coeffs, (f(a) - c) // W) for f, c in zip(system.forms, consts)]
        pieces.append(ResidueData(tuple(a), AffineSystem(tuple(forms)), tuple(consts), _sub_region(region, W, a)))
    return WTrickDecomposition(W, shifts, system, tuple(pieces))


def residue_count_identity(system, shifts, w):
    """Both sides of (W/phi(W))^{rt} |A| = W^d prod_{p <= w} beta_p(Psi_H), as exact rationals."""
    shifts = shifts if isinstance(shifts, ShiftTuple) else ShiftTuple(tuple(shifts))
    W = primorial(w)
    count = sum(1 for a in itertools.product(range(W), repeat=system.d) if _residue_good(system, shifts.shifts, W, a))
    rt = shifts.m * system.t
    lhs = Fraction(W, euler_phi(W)) ** rt * count
    big = shifted_system(system, shifts)
    rhs = Fraction(W**system.d)
    for p in primes_up_to(w):
        rhs *= local_factor_exact(big, int(p))
    return lhs, rhs


def _w_rough_mask(top, W, shifts):
    v = np.arange(top + 1, dtype=np.int64)
    ok = np.ones(top + 1, dtype=bool)
    for h in shifts:
        ok &= np.gcd(v + h, W) == 1
    return ok


@dataclass
class IdentityCheck:
    exact: bool
    equal: bool
    lhs: object
    rhs: object
    residual: object
    residues: int

    def to_dict(self):
        def fmt(x):
            return str(x) if isinstance(x, Fraction) else x

        return {"exact": self.exact, "equal": self.equal, "lhs": fmt(self.lhs), "rhs": fmt(self.rhs), "residual": fmt(self.residual), "residues": self.residues}


def _lookup_zero(arr, vals):
    out = np.zeros(vals.shape, dtype=arr.dtype)
    ok = (vals >= 0) & (vals < arr.size)
    out[ok] = arr[vals[ok]]
    return out


def w_trick_identity_check(system, shifts, w, region, theta, table):
    """Compare sum_{n in K} prod_i theta(psi_i(n)) with the W-tricked right-hand side.

    theta is restricted to values v with (v + h_j, W) = 1 for every shift,
    which is the support condition the identity presumes; values v < 2 carry
    weight 0. In indicator mode both sides are exact rationals.
    """
    shifts = shifts if isinstance(shifts, ShiftTuple) else ShiftTuple(tuple(shifts))
    dec = w_trick_decompose(system, shifts, w, region)
    W, r, t = dec.W, shifts.m, system.t
    exact = theta.indicator or theta.kind is Kind.PRIME
    # largest value any form takes on the box
    corners = np.array(list(itertools.product(*region.box)), dtype=np.int64)
    top = max(2, int(system.evaluate(corners).max())) if not region.box_empty else 2
    raw = enumerate_weights(theta, top, table)
    raw = raw * _w_rough_mask(top, W, shifts.shifts)
    arr = raw.astype(np.int64) if exact else raw

    def side_sum(sys_, pts_iter, consts=None, scale=1):
        ints, parts = 0, []
        for pts in pts_iter:
            vals = sys_.evaluate(pts)
            if consts is not None:
                vals = scale * vals + np.array(consts)
            prod = np.ones(pts.shape[0], dtype=arr.dtype)
            for i in range(t):
                prod = prod * _lookup_zero(arr, vals[:, i])
            if exact:
                ints += int(prod.sum())
            else:
                parts.append(math.fsum(prod))
        return ints if exact else math.fsum(parts)

    lhs = side_sum(system, lattice_points(region))
    phi_ratio = Fraction(euler_phi(W), W)
    if exact:
        rhs = Fraction(0)
        for piece in dec.pieces:
            # theta_{W,c}(n) = (phi(W)/W)^r theta(W n + c)
            inner = phi_ratio ** (r * t) * side_sum(piece.system, lattice_points(piece.region), piece.constants, W)
            rhs += inner
        rhs *= (1 / phi_ratio) ** (r * t)
        lhs = Fraction(lhs)
        residual = abs(lhs - rhs)
        return IdentityCheck(True, residual == 0, lhs, rhs, residual, len(dec.pieces))
    pr = float(phi_ratio)
    inner = [pr ** (r * t) * side_sum(piece.system, lattice_points(piece.region), piece.constants, W) for piece in dec.pieces]
    rhs = (1 / pr) ** (r * t) * math.fsum(inner)
    residual = abs(lhs - rhs)
    return IdentityCheck(False, residual <= 1e-9 * max(1.0, abs(lhs)), lhs, rhs, residual, len(dec.pieces))


# ---------------------------------------------------------------------------
# density reports

@dataclass
class DensityRow:
    N: int
    T: float
    prediction: float
    ratio: float
    pred_error: float


def chen_type_constant(system, cutoff):
    """Truncated product of local factors with forbidden set {0, 1} at p = 3 mod 4 and {0} elsewhere."""
    logs = []
    for p in primes_up_to(cutoff):
        p = int(p)
        beta = local_factor_forbidden(system, p, {0, 1}) if p % 4 == 3 else local_factor_exact(system, p)
        if beta == 0:
            return 0.0
        logs.append(math.log(beta))
    return math.exp(math.fsum(logs))


def prediction_constant(system, spec, cutoff=10**4):
    """(C, error bound) for the density prediction C Vol(K)."""
    if spec.kind is Kind.THETA3:
        return chen_type_constant(system, min(cutoff, 2000)), float("nan")
    big = shifted_system(system, spec.tuple_shifts)
    res = singular_series(big, cutoff)
    return res.value, res.error_bound


def scaled_box(system, N):
    """K = [1, N]^d cut down to {n : psi_i(n) in [1, N] for all i} when d >= 2."""
    d = system.d
    if d == 1:
        return LatticeRegion.interval(1, N)
    cuts = []
    for f in system.forms:
        cuts.append((tuple(f.coeffs), N - f.const))
        cuts.append((tuple(-c for c in f.coeffs), f.const - 1))
    return LatticeRegion(((1, N),) * d, tuple(cuts))


def density_report(system, spec, scales, table, cutoff=10**4, regions=None):
    """One row (N, T, C Vol(K), ratio, pred_error) per scale."""
    C, C_err = prediction_constant(system, spec, cutoff)
    rows = []
    for idx, N in enumerate(scales):
        N = int(N)
        region = regions[idx] if regions is not None else scaled_box(system, N)
        corners = np.array(list(itertools.product(*region.box)), dtype=np.int64)
        top = max(2, int(system.evaluate(corners).max()))
        weights = enumerate_weights(spec, top, table)
        T = count_T(system, weights, region)
        vol = volume(region)
        pred = C * vol
        ratio = T / pred if pred else (0.0 if T == 0 else float("inf"))
        rows.append(DensityRow(N, float(T), pred, ratio, C_err * vol))
    return rows


def format_float(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.12g}"


def density_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "T", "prediction", "ratio", "pred_error"])
    for r in rows:
        writer.writerow([r.N, format_float(r.T), format_float(r.prediction), format_float(r.ratio), format_float(r.pred_error)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Bohr-set densities

@dataclass
class BohrReport:
    mean_theta_xi: float
    mean_xi: float
    delta: float
    mean_theta: float
    degenerate: bool
    N: int
    W: int
    b: int

    def to_dict(self):
        return dict(self.__dict__)


def bohr_density(spec, xi, N, W, b, table):
    """(E theta_{W,b} xi, E xi, their ratio) over n in [1, N]."""
    N = int(N)
    if math.gcd(b, W) != 1:
        raise PreconditionError(f"residue b = {b} is not coprime to W = {W}")
    raw = enumerate_weights(spec, W * N + b, table)
    n = np.arange(1, N + 1, dtype=np.int64)
    theta = (euler_phi(W) / W) ** spec.r * raw[W * n + b]
    xs = evaluate_xi(xi, n) if isinstance(xi, NilsequenceSpec) else xi(n)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.min() < -1e-12 or xs.max() > 1 + 1e-12:
        raise PreconditionError("xi must take values in [0, 1]")
    mean_xi = math.fsum(xs) / N
    mean_txi = math.fsum(theta * xs) / N
    mean_theta = math.fsum(theta) / N
    if mean_xi == 0:
        return BohrReport(mean_txi, 0.0, float("nan"), mean_theta, True, N, W, b)
    return BohrReport(mean_txi, mean_xi, mean_txi / mean_xi, mean_theta, False, N, W, b)
