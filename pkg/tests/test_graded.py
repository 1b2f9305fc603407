import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmk import graded
from nmk.errors import InvalidOperandsError, InvalidParameterError, NearSingularInverseError
from nmk.graded import GradedElement

coef = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@st.composite
def elements(draw, half=None, max_bw=12):
    if half is None:
        half = draw(st.booleans())
    n = draw(st.integers(1, max_bw))
    length = 2 * n if half else 2 * n + 1
    return GradedElement(np.array(draw(st.lists(coef, min_size=length, max_size=length))))


def test_norm_examples():
    assert graded.norm(GradedElement.constant(1), 5.3) == 1
    assert graded.norm(GradedElement.from_modes({3: 2}), 2) == 32
    assert graded.norm(GradedElement.zero(), 7) == 0


def test_norm_negative_index_rejected():
    with pytest.raises(InvalidParameterError):
        graded.norm(GradedElement.constant(1), -1)


def test_smooth_examples():
    v = GradedElement.from_modes({0: 1, 2: 5})
    assert graded.smooth(v, 1.5) == GradedElement.from_modes({0: 1})
    w = GradedElement.from_modes({3: 1, -1: 2})
    assert graded.smooth(w, 10) == w
    with pytest.raises(InvalidParameterError):
        graded.smooth(w, 1.0)


@settings(max_examples=200, deadline=None)
@given(elements(), st.floats(0, 8), st.floats(0, 8), st.floats(1.01, 20))
def test_smoothing_inequalities(v, a, b, theta):
    s, t = max(a, b), min(a, b)
    sv = graded.smooth(v, theta)
    rel = 1 + 1e-12
    assert graded.norm(sv, s) <= theta ** (s - t) * graded.norm(v, t) * rel
    assert graded.norm(v - sv, t) <= theta ** (t - s) * graded.norm(v, s) * rel


@settings(max_examples=100, deadline=None)
@given(elements(), st.floats(1.01, 20))
def test_smoothing_idempotent_and_identity_limit(v, theta):
    once = graded.smooth(v, theta)
    assert graded.smooth(once, theta) == once
    assert graded.smooth(v, v.bandwidth + 1.5) == v


@settings(max_examples=100, deadline=None)
@given(elements(), st.floats(0, 6), st.floats(0, 6))
def test_norm_monotone(v, a, b):
    lo, hi = sorted((a, b))
    assert graded.norm(v, lo) <= graded.norm(v, hi) * (1 + 1e-15)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_algebra_and_triangle(data):
    half = data.draw(st.booleans())
    u = data.draw(elements(half=half))
    v = data.draw(elements(half=half))
    w = data.draw(elements())
    s = data.draw(st.floats(0, 5))
    assert graded.norm(u + v, s) <= (graded.norm(u, s) + graded.norm(v, s)) * (1 + 1e-12)
    assert graded.norm(u * w, s) <= graded.norm(u, s) * graded.norm(w, s) * (1 + 1e-12)
    assert math.isclose(graded.norm(2 * u, s), 2 * graded.norm(u, s), rel_tol=1e-13)


def test_lattice_rules():
    one = GradedElement.constant(1)
    h = GradedElement.from_modes({0.5: 1})
    e1, e2 = GradedElement.from_modes({1: 1}), GradedElement.from_modes({2: 1})
    assert (e1 * e2) == GradedElement.from_modes({3: 1})
    assert (h * h).half is False and (h * h) == GradedElement.from_modes({1: 1})
    assert (h * e1).half and (h * e1) == GradedElement.from_modes({1.5: 1})
    assert e1 * one == e1
    with pytest.raises(InvalidOperandsError):
        h + e1
    with pytest.raises(InvalidOperandsError):
        GradedElement.from_modes({0.5: 1, 1: 1})


def test_identity_and_scale():
    u = GradedElement.from_modes({-2: 1 + 1j, 1: 3})
    assert u + GradedElement.zero() == u
    assert graded.scale(u, 0).is_zero()


def test_real_valued_conjugate_symmetry():
    u = GradedElement.from_function(lambda t: np.cos(t) + 0.3 * np.sin(2 * t), 4)
    assert u.is_real(1e-14)
    assert abs(u.coefficient(-1) - np.conj(u.coefficient(1))) < 1e-15


def test_reciprocal_examples():
    inv, res = graded.reciprocal(GradedElement.constant(2), 8, 0.5)
    assert abs(inv.coefficient(0) - 0.5) < 1e-15 and graded.norm(inv - GradedElement.constant(0.5), 0) < 1e-15
    u = GradedElement.from_modes({0: 2, 1: 0.5, -1: 0.5})
    inv, res = graded.reciprocal(u, 64, 0.5)
    assert res < 1e-10
    for s in (0.5, 0.1, 0.01):
        inv, _ = graded.reciprocal(GradedElement.constant(s), 16, s / 2)
        assert math.isclose(graded.sup_norm(inv), 1 / s, rel_tol=1e-13)


def test_reciprocal_floor():
    u = GradedElement.from_modes({0: 1, 1: 0.5, -1: 0.5})  # 1 + cos t vanishes at pi
    with pytest.raises(NearSingularInverseError):
        graded.reciprocal(u, 16, 0.1)


def test_half_lattice_reciprocal():
    u = GradedElement.from_modes({0: 3, 1: 1})
    h = GradedElement.from_modes({0.5: 1})
    inv, res = graded.reciprocal(u * h * h, 32, 1.0)
    assert res < 1e-12


@settings(max_examples=50, deadline=None)
@given(elements())
def test_serialization_round_trip(v):
    back = graded.loads(graded.dumps(v))
    assert back == v and back.half == v.half


def test_mp_serialization_bit_exact():
    with mpmath.workdps(200):
        v = GradedElement.from_modes({0: mpmath.mpf(1) / 3, 2: mpmath.mpc(mpmath.pi, -mpmath.e)})
        back = graded.loads(graded.dumps(v))
    assert back.is_mp and back == v


def test_mp_backend_matches_double():
    u = GradedElement.from_modes({0: 2, 1: 0.25, -1: 0.25j})
    with mpmath.workdps(50):
        um = u.to_mp()
        prod = um * um
        assert prod.is_mp
        assert graded.norm(prod.to_float() - u * u, 0) < 1e-14
        inv, res = graded.reciprocal(um, 64, 1.0)
        assert res < mpmath.mpf(10) ** -30


def test_immutable():
    v = GradedElement.constant(1)
    with pytest.raises(AttributeError):
        v.coef = None
    with pytest.raises(ValueError):
        v.coef[0] = 3
