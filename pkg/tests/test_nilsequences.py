import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from almosttwin.errors import PreconditionError
from almosttwin.nilsequences import (
    FourierTorusFunction,
    NilsequenceSpec,
    PolynomialOrbit,
    TrapezoidTorusFunction,
    constant_function,
    equidistribution_diagnostic,
    evaluate,
    torus_distance,
    trapezoid_bohr_function,
)

SQRT2 = math.sqrt(2)
GOLDEN = (1 + math.sqrt(5)) / 2


def mp_phase(coeffs, n):
    """frac(sum c_i n^i) at 60 digits, treating each float coefficient as its exact binary value."""
    with mpmath.workdps(60):
        total = mpmath.mpf(0)
        for i, c in enumerate(coeffs):
            f = Fraction(c)
            total += mpmath.mpf(f.numerator) / f.denominator * mpmath.mpf(n) ** i
        return float(total - mpmath.floor(total))


def circ(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1 - d)


@pytest.mark.parametrize("coeffs", [(0.0, SQRT2), (0.1, GOLDEN, SQRT2), (0.0, 0.0, math.pi, math.e)])
def test_phases_match_high_precision(coeffs):
    orbit = PolynomialOrbit((coeffs,))
    ns = np.array([1, 2, 17, 999, 12345, 10**5, 654321, 10**6])
    ph = orbit.phases(ns)[:, 0]
    for n, v in zip(ns, ph):
        assert circ(v, mp_phase(coeffs, int(n))) < 1e-8


def test_rational_coefficients_are_exact():
    orbit = PolynomialOrbit(((Fraction(1, 3), Fraction(2, 7), Fraction(5, 11)),))
    ns = np.arange(1, 500)
    ph = orbit.phases(ns)[:, 0]
    exact = [float((Fraction(1, 3) + Fraction(2, 7) * n + Fraction(5, 11) * n * n) % 1) for n in ns]
    assert np.array_equal(ph, np.array(exact))


def test_constant_term_shift_is_periodic():
    a = PolynomialOrbit(((0.25, SQRT2),))
    b = PolynomialOrbit(((3.25, SQRT2 + 5),))
    ns = np.arange(1, 2000)
    assert np.allclose(a.phases(ns), b.phases(ns), atol=1e-9)


def test_orbit_shape_and_round_trip():
    orbit = PolynomialOrbit(((0.0, SQRT2), (Fraction(1, 2), GOLDEN)))
    assert orbit.D == 2 and orbit.s == 1
    assert orbit.phases(np.arange(5)).shape == (5, 2)
    assert PolynomialOrbit.from_dict(orbit.to_dict()) == orbit
    with pytest.raises(PreconditionError):
        PolynomialOrbit(((0.1,),))


def test_torus_distance():
    assert torus_distance([0.05], [0.95]) == pytest.approx(0.1)
    assert torus_distance([0.2, 0.5], [0.3, 0.0]) == pytest.approx(0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_fourier_lipschitz_bound(x, y, a, b):
    F = FourierTorusFunction(((1, 0), (2, -1)), (a, b * 1j))
    lhs = abs(F([x, y])[0] - F([y, x])[0])
    assert lhs <= F.lipschitz_bound * torus_distance([x, y], [y, x]) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_trapezoid_lipschitz_bound(v):
    T = TrapezoidTorusFunction((0.3, 0.8), 0.2, 0.1)
    x, y = v[:2], v[2:]
    assert abs(T(x)[0] - T(y)[0]) <= T.lipschitz_bound * torus_distance(x, y) + 1e-12
    assert 0.0 <= T(x)[0] <= 1.0


def test_trapezoid_shape():
    T = TrapezoidTorusFunction((0.0,), 0.2, 0.05)
    assert T([[0.0], [0.1], [0.95], [0.125], [0.15], [0.5]]).tolist() == pytest.approx([1, 1, 1, 0.5, 0, 0])
    # the trapezoid's integral is width + margin
    grid = (np.arange(200000) + 0.5) / 200000
    assert T(grid[:, None]).mean() == pytest.approx(0.25, abs=1e-9)


def test_trapezoid_geometry_errors():
    with pytest.raises(PreconditionError):
        TrapezoidTorusFunction((0.0,), 0.5, 0.3)
    with pytest.raises(PreconditionError):
        TrapezoidTorusFunction((0.0,), 0.2, 0.0)
    # width >= 1 covers the whole circle
    assert TrapezoidTorusFunction((0.0,), 1.0, 0.1)([[0.5]])[0] == 1.0


def test_bohr_function_mean_is_volume():
    spec = trapezoid_bohr_function(SQRT2, width=0.2, margin=0.05)
    vals = evaluate(spec, np.arange(1, 10**6 + 1))
    assert vals.mean() == pytest.approx(0.25, abs=1e-3)
    assert spec.params["K"] == pytest.approx(20.0)


def test_evaluate_scalar_and_json():
    spec = NilsequenceSpec(PolynomialOrbit(((0.0, 0.25),)), FourierTorusFunction(((1,),), (1.0,)))
    assert evaluate(spec, 1) == pytest.approx(0.0, abs=1e-15)
    assert evaluate(spec, 2) == pytest.approx(-1.0)
    assert NilsequenceSpec.from_json(spec.to_json()) == spec
    const = NilsequenceSpec(PolynomialOrbit(((0.0, SQRT2),)), constant_function(0.7))
    assert np.allclose(evaluate(const, np.arange(10)), 0.7)


def test_diagnostic_flags_rational():
    rep = equidistribution_diagnostic(PolynomialOrbit.linear([0.5]), 1000, 0.1, 3)
    assert rep.flagged and rep.max_bias == pytest.approx(1.0)
    assert isinstance(rep.max_bias, float) and isinstance(rep.flagged, bool)


def test_diagnostic_golden_passes():
    rep = equidistribution_diagnostic(PolynomialOrbit.linear([GOLDEN]), 10**5, 0.1, 3)
    assert not rep.flagged
    assert rep.max_bias < 0.01


def test_diagnostic_zero_orbit_flagged():
    rep = equidistribution_diagnostic(PolynomialOrbit.linear([0.0]), 100, 0.1, 1)
    assert rep.flagged and rep.max_bias == pytest.approx(1.0)
    assert any(rep.witness_freq)


def test_diagnostic_matches_direct_sum():
    orbit = PolynomialOrbit(((0.0, SQRT2, GOLDEN),))
    rep = equidistribution_diagnostic(orbit, 3000, 0.2, 2)
    k, q, a = rep.witness_freq[0], rep.witness_step, rep.witness_offset
    ns = [n for n in range(1, 3001) if n % q == a]
    direct = abs(sum(mpmath.expjpi(2 * k * mp_phase((0.0, SQRT2, GOLDEN), n)) for n in ns)) / len(ns)
    assert rep.max_bias == pytest.approx(float(direct), abs=1e-9)


def test_diagnostic_decreases_with_N():
    orbit = PolynomialOrbit.linear([SQRT2])
    biases = [equidistribution_diagnostic(orbit, N, 0.1, 2).max_bias for N in (10**3, 10**4, 10**5)]
    assert biases[2] < biases[0]


def test_diagnostic_window():
    orbit = PolynomialOrbit.linear([SQRT2])
    rep = equidistribution_diagnostic(orbit, 1000, 0.1, 1, window=10)
    assert rep.N == 10000


def test_diagnostic_precondition():
    with pytest.raises(PreconditionError):
        equidistribution_diagnostic(PolynomialOrbit.linear([SQRT2]), 5, 0.1, 1)
