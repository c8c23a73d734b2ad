import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from almosttwin.counting import (
    LatticeRegion,
    bohr_density,
    count_T,
    density_csv,
    density_report,
    lattice_points,
    residue_count_identity,
    scaled_box,
    volume,
    volume_report,
    w_trick_decompose,
    w_trick_identity_check,
)
from almosttwin.errors import OutOfRangeError, PreconditionError, SizeLimitError
from almosttwin.linear_systems import AffineSystem, ShiftTuple, twin_system
from almosttwin.nilsequences import trapezoid_bohr_function
from almosttwin.prime_sets import Kind, WeightedIndicator, enumerate_weights


def system(rows, consts=None):
    return AffineSystem.from_rows(rows, consts)


def prime_indicator(n):
    return np.array([oracles.is_prime(v) for v in range(n + 1)], dtype=np.int64)


# --- volumes and enumeration -------------------------------------------------------

def test_volume_examples():
    assert volume(LatticeRegion.cube(1, 10, 2)) == 81
    tri = LatticeRegion(((1, 10), (1, 10)), (((1, 1), 10),))
    assert volume_report(tri).exact and volume(tri) == 32
    assert volume(LatticeRegion.interval(5, 2)) == 0
    assert volume(LatticeRegion(((0, 4),), (((2,), 3),))) == 1.5


def test_volume_qmc_simplex():
    simplex = LatticeRegion(((0, 1),) * 3, (((1, 1, 1), 1),))
    rep = volume_report(simplex)
    assert not rep.exact
    assert abs(rep.value - 1 / 6) <= max(5 * rep.stderr, 1e-4)
    with pytest.raises(SizeLimitError):
        volume(LatticeRegion(((0, 1),) * 5, (((1, 1, 1, 1, 1), 1),)))


@settings(max_examples=40, deadline=None)
@given(
    st.integers(-5, 5), st.integers(0, 8), st.integers(-5, 5), st.integers(0, 8),
    st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(-10, 20)), max_size=3),
)
def test_lattice_points_match_brute_force(x0, dx, y0, dy, cuts):
    region = LatticeRegion(((x0, x0 + dx), (y0, y0 + dy)), tuple(((a, b), c) for a, b, c in cuts))
    got = sorted(map(tuple, np.concatenate(list(lattice_points(region, chunk=7)) or [np.zeros((0, 2), int)])))
    want = [
        (x, y)
        for x in range(x0, x0 + dx + 1)
        for y in range(y0, y0 + dy + 1)
        if all(a * x + b * y <= c for a, b, c in cuts)
    ]
    assert got == want


def test_lattice_budget():
    with pytest.raises(SizeLimitError):
        list(lattice_points(LatticeRegion.cube(1, 1000, 3), max_points=10**6))


# --- T_Psi ------------------------------------------------------------------------

def test_count_ones_is_lattice_count():
    s = system([[1, 0], [1, 1]])
    region = LatticeRegion(((1, 7), (2, 9)))
    assert count_T(s, np.ones(20, dtype=np.int64), region) == region.box_count == 56


def test_twin_pairs_to_100():
    ind = prime_indicator(110)
    pairs = [n for n in range(1, 101) if oracles.is_prime(n) and oracles.is_prime(n + 2)]
    assert pairs == [3, 5, 11, 17, 29, 41, 59, 71]
    assert count_T(twin_system(), ind, LatticeRegion.interval(1, 100)) == 8


def test_zero_weight_and_per_form_weights():
    s = system([[1], [1]], [0, 2])
    ind = prime_indicator(110)
    assert count_T(s, [ind, np.zeros(110, dtype=np.int64)], LatticeRegion.interval(1, 100)) == 0
    logs = np.log(np.maximum(np.arange(110), 1.0))
    got = count_T(s, [ind.astype(float), logs], LatticeRegion.interval(1, 100))
    assert got == pytest.approx(math.fsum(math.log(n + 2) for n in range(1, 101) if oracles.is_prime(n)))


def test_count_domain_error_names_form():
    with pytest.raises(OutOfRangeError, match=r"form 1 \(n\+2\) takes value 101 at n = \(99,\)"):
        count_T(twin_system(), np.ones(101), LatticeRegion.interval(1, 100))
    with pytest.raises(PreconditionError):
        count_T(twin_system(), [np.ones(5)] * 3, LatticeRegion.interval(1, 2))


# --- W-trick ----------------------------------------------------------------------

def test_decompose_single_form():
    dec = w_trick_decompose(system([[1]]), (0, 2), 3, LatticeRegion.interval(1, 1000))
    assert dec.W == 6 and dec.residues == [(5,)]
    assert dec.verify()


def brute_residues(rows, consts, shifts, W):
    d = len(rows[0])
    out = []
    for a in itertools.product(range(1, W + 1), repeat=d):
        vals = [sum(c * x for c, x in zip(r, a)) + k for r, k in zip(rows, consts)]
        if all(math.gcd(v + h, W) == 1 for v in vals for h in shifts):
            out.append(a)
    return out


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 2).flatmap(
        lambda d: st.tuples(
            st.lists(st.lists(st.integers(-3, 3), min_size=d, max_size=d), min_size=1, max_size=3),
            st.lists(st.integers(-5, 5), min_size=3, max_size=3),
        )
    ),
    st.sampled_from([(0,), (0, 2), (0, 2, 6)]),
    st.sampled_from([2, 3, 5]),
)
def test_decompose_matches_brute_force(data, shifts, w):
    rows, consts = data
    consts = consts[: len(rows)]
    if any(not any(r) for r in rows):
        return
    s = system(rows, consts)
    region = LatticeRegion(((1, 40),) * s.d)
    dec = w_trick_decompose(s, shifts, w, region)
    assert dec.residues == brute_residues(rows, consts, shifts, dec.W)
    assert dec.verify()
    for piece in dec.pieces:
        assert all((c - f(piece.a)) % dec.W == 0 for c, f in zip(piece.constants, s.forms))
        # K_a = {x : W x + a in K}
        pts = np.concatenate(list(lattice_points(piece.region)) or [np.zeros((0, s.d), int)])
        mapped = dec.W * pts + np.array(piece.a)
        assert region.contains(mapped).all()
        assert len(pts) == sum(
            1 for x in itertools.product(range(1, 41), repeat=s.d) if all((xi - ai) % dec.W == 0 for xi, ai in zip(x, piece.a))
        )


def test_homogeneous_zero_residue_constant():
    s = system([[1, 2], [3, 1]])
    dec = w_trick_decompose(s, (0,), 2, LatticeRegion.cube(1, 10, 2))
    for piece in dec.pieces:
        if piece.a == (2, 2):
            assert all(c % 2 == 0 for c in piece.constants)


@pytest.mark.parametrize(
    "rows,consts,shifts,w",
    [([[1]], [0], (0, 2), 3), ([[1]], [0], (0, 2, 6), 5), ([[1, 0], [1, 1]], [0, 0], (0,), 3), ([[1, 0], [1, 1], [1, 2]], [0, 0, 0], (0, 2), 5)],
)
def test_residue_count_identity(rows, consts, shifts, w):
    lhs, rhs = residue_count_identity(system(rows, consts), shifts, w)
    assert lhs == rhs


def test_identity_trivial_and_examples(small_table):
    theta = WeightedIndicator.theta2(shifts=(0, 2), indicator=True)
    empty = w_trick_identity_check(system([[1]]), (0, 2), 3, LatticeRegion.interval(1, 1), theta, small_table)
    assert empty.equal and empty.lhs == 0 and empty.rhs == 0
    res = w_trick_identity_check(system([[1]]), (0, 2), 3, LatticeRegion.interval(1, 1000), theta, small_table)
    assert res.exact and res.equal and res.residual == 0 and res.lhs > 0
    theta1 = WeightedIndicator.theta1(indicator=True)
    res = w_trick_identity_check(system([[1, 0], [1, 1]]), (0, 2), 2, LatticeRegion.cube(1, 60, 2), theta1, small_table)
    assert res.exact and res.equal and res.lhs > 0


def test_identity_weighted_mode(small_table):
    theta = WeightedIndicator.theta2(shifts=(0, 2))
    res = w_trick_identity_check(system([[1]]), (0, 2), 3, LatticeRegion.interval(1, 2000), theta, small_table)
    assert not res.exact and res.equal and res.residual <= 1e-9 * res.lhs


# --- density reports ---------------------------------------------------------------

def test_pnt_row(table):
    rows = density_report(system([[1]]), WeightedIndicator(Kind.LOG_PRIME), [10**6], table)
    assert abs(rows[0].ratio - 1) < 0.02
    assert rows[0].prediction == pytest.approx(10**6 - 1)


def test_theta2_rows_positive(table):
    rows = density_report(system([[1]]), WeightedIndicator.theta2(shifts=(0, 2)), [10**4, 10**6], table)
    assert all(r.T > 0 for r in rows)


def test_non_admissible_row(small_table):
    rows = density_report(system([[2]], [2]), WeightedIndicator(Kind.LOG_PRIME), [1000], small_table)
    assert rows[0].T == 0 and rows[0].prediction == 0 and rows[0].ratio == 0


def test_density_csv_format(small_table):
    rows = density_report(twin_system(), WeightedIndicator(Kind.LOG_PRIME), [100, 1000], small_table)
    text = density_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "N,T,prediction,ratio,pred_error"
    assert lines[1].startswith("100,") and len(lines) == 3


def test_scaled_box_keeps_forms_in_range():
    s = system([[1, 0], [1, 1]])
    region = scaled_box(s, 50)
    for pts in lattice_points(region):
        vals = s.evaluate(pts)
        assert ((vals >= 1) & (vals <= 50)).all()


# --- Bohr densities ---------------------------------------------------------------

def test_bohr_trivial_cases(small_table):
    theta = WeightedIndicator.theta2(shifts=(0, 2))
    one = bohr_density(theta, lambda n: np.ones(n.size), 10**4, 6, 5, small_table)
    assert one.delta == pytest.approx(one.mean_theta)
    zero = bohr_density(theta, lambda n: np.zeros(n.size), 10**4, 6, 5, small_table)
    assert zero.degenerate and math.isnan(zero.delta)
    with pytest.raises(PreconditionError):
        bohr_density(theta, lambda n: np.ones(n.size), 100, 6, 3, small_table)
    with pytest.raises(PreconditionError):
        bohr_density(theta, lambda n: 2 * np.ones(n.size), 100, 6, 5, small_table)


def test_bohr_trapezoid_same_order(small_table):
    theta = WeightedIndicator.theta2(shifts=(0, 2))
    rep = bohr_density(theta, trapezoid_bohr_function(math.sqrt(2)), 3 * 10**4, 6, 5, small_table)
    assert rep.delta > 0 and rep.mean_theta / 3 <= rep.delta <= 3 * rep.mean_theta


def test_identity_check_detects_a_missing_residue(small_table, monkeypatch):
    from almosttwin import counting

    real = counting.w_trick_decompose

    def drop_last(*args):
        dec = real(*args)
        return counting.WTrickDecomposition(dec.W, dec.shifts, dec.original, dec.pieces[:-1])

    monkeypatch.setattr(counting, "w_trick_decompose", drop_last)
    theta = WeightedIndicator.theta2(shifts=(0, 2), indicator=True)
    res = w_trick_identity_check(system([[1, 0], [1, 1]]), (0, 2), 3, LatticeRegion.cube(1, 200, 2), theta, small_table)
    assert not res.equal and res.residual > 0
