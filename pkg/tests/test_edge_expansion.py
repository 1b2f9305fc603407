import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmk import edge_expansion as ee
from nmk.edge_expansion import PhgSeries, PolarForm, TrigPoly
from nmk.errors import (
    DivergentPrimitiveError,
    InvalidDegreeError,
    PreconditionError,
    UnsupportedResonanceError,
)

half_ints = st.integers(-9, 9).map(lambda n: F(n, 2))


def test_L0_apply_examples():
    assert ee.L0_apply(PhgSeries.monomial(F(3, 2), F(3, 2))).is_zero()
    assert ee.L0_apply(PhgSeries.monomial(2, 1)) == PhgSeries.monomial(2, 1, coeff=3)
    assert ee.L0_apply(PhgSeries.monomial(1, 1, q=1)) == PhgSeries.monomial(1, 1, coeff=2)


def test_L0_solve_examples():
    assert ee.L0_solve(ee.ZERO).is_zero()
    h = PhgSeries.monomial(2, 1)
    f = ee.L0_solve(h)
    assert f == PhgSeries.monomial(2, 1, coeff=F(1, 3))
    assert ee.L0_apply(f) == h
    h = PhgSeries.monomial(1, 1)
    f = ee.L0_solve(h)
    assert f == PhgSeries.monomial(1, 1, q=1, coeff=F(1, 2))
    assert ee.L0_apply(f) == h


def test_resonant_k1_zero_rejected():
    with pytest.raises(UnsupportedResonanceError):
        ee.L0_solve(PhgSeries.monomial(0, 0))


@settings(max_examples=200, deadline=None)
@given(st.integers(-21, 21).filter(lambda n: n != 0).map(lambda n: F(n, 2)) | st.integers(-10, 10).filter(bool).map(F),
       half_ints | st.integers(-5, 5).map(F), st.integers(0, 3))
def test_round_trip_property(k1, k2, q):
    h = PhgSeries.monomial(k1, k2, q=q, coeff=TrigPoly({0: 1, 2: ee.QQi(F(1, 3), -1)}))
    f = ee.L0_solve(h)
    assert ee.L0_apply(f) == h
    if ee.is_resonant(k1, k2):
        assert max(k[1] for k, _ in f.items()) == q + 1
        assert all(k[1] >= 1 for k, _ in f.items())  # Q(0) = 0


def test_R_apply_examples():
    assert ee.R_apply(PhgSeries.monomial(F(3, 2), F(3, 2), coeff=5)).is_zero()
    u = PhgSeries.monomial(F(3, 2), F(3, 2), coeff=TrigPoly.cos(1))
    assert ee.R_apply(u) == PhgSeries.monomial(F(7, 2), F(3, 2), coeff=-TrigPoly.cos(1))
    u = PhgSeries.monomial(1, 1, coeff=TrigPoly.exp(2))
    assert ee.R_apply(u) == PhgSeries.monomial(3, 1, coeff=TrigPoly.exp(2, -4))


def test_schwartz_examples():
    assert ee.schwartz_approximation(TrigPoly.constant(2), 3) == \
        PhgSeries.monomial(F(3, 2), F(3, 2), coeff=2)
    assert ee.schwartz_residual(TrigPoly.constant(2), 3).is_zero()
    u = ee.schwartz_approximation(TrigPoly.cos(1), 1)
    expect = PhgSeries([(F(3, 2), 0, F(3, 2), TrigPoly.cos(1)),
                        (F(7, 2), 0, F(3, 2), TrigPoly.cos(1, F(1, 10)))])
    assert u == expect
    assert ee.pretty(u) == "cos t·r^{3/2}·e^{3iθ/2} + (1/10)·cos t·r^{7/2}·e^{3iθ/2}"
    assert ee.schwartz_residual(TrigPoly.cos(1), 3).order == F(19, 2)


@pytest.mark.parametrize("b", [TrigPoly.constant(1), TrigPoly.cos(1), TrigPoly.exp(2),
                               TrigPoly.cos(1) + TrigPoly.sin(3, F(1, 3))])
@pytest.mark.parametrize("K", range(6))
def test_residual_order_guarantee(b, K):
    res = ee.schwartz_residual(b, K)
    assert res.is_zero() or res.order >= F(3, 2) + 2 * (K + 1)


def test_canonical_form():
    s = PhgSeries([(1, 0, 1, 2), (F(1, 2), 1, 0, 1), (1, 0, 1, -2), (F(1, 2), 0, 0, 3)])
    assert [(t.k1, t.q, t.k2) for t in s.terms] == [(F(1, 2), 0, 0), (F(1, 2), 1, 0)]
    assert s.order == F(1, 2)
    with pytest.raises(PreconditionError):
        PhgSeries([(1, -1, 0, 1)])


def test_exterior_derivative_examples():
    assert ee.exterior_derivative(PolarForm.function(PhgSeries.monomial(0, 0, coeff=7))).is_zero()
    u = PolarForm.function(PhgSeries.monomial(F(3, 2), F(3, 2)))
    du = ee.exterior_derivative(u)
    assert du.component((0,)) == PhgSeries.monomial(F(1, 2), F(3, 2), coeff=F(3, 2))
    assert du.component((1,)) == PhgSeries.monomial(F(3, 2), F(3, 2), coeff=ee.QQi(0, F(3, 2)))
    assert du.component((2,)).is_zero()
    with pytest.raises(InvalidDegreeError):
        ee.exterior_derivative(PolarForm(3, {(0, 1, 2): PhgSeries.monomial(1, 0)}))


@pytest.mark.parametrize("degree", [0, 1])
def test_d_squared_zero(degree):
    rng = random.Random(degree)
    for _ in range(50):
        form = ee.random_form(rng, degree)
        assert ee.exterior_derivative(ee.exterior_derivative(form)).is_zero()


def test_radial_primitive_examples():
    eta = PolarForm(1, {(0,): PhgSeries.monomial(2, 0)})
    assert ee.radial_primitive(eta).component(()) == PhgSeries.monomial(3, 0, coeff=F(1, 3))
    u = PolarForm.function(PhgSeries.monomial(F(3, 2), F(3, 2)))
    eta = ee.exterior_derivative(u)
    assert (eta - ee.exterior_derivative(ee.radial_primitive(eta))).is_zero()


def test_radial_antiderivative_logs():
    # d/dr of the primitive gives back the integrand
    for a in (F(1, 2), F(-1, 2), F(3)):
        for q in range(4):
            f = PhgSeries.monomial(a, 1, q=q)
            prim = ee.radial_antiderivative(f)
            assert ee.partial(prim, 0) == f


def test_radial_primitive_errors():
    with pytest.raises(DivergentPrimitiveError):
        ee.radial_antiderivative(PhgSeries.monomial(-1, 0))
    with pytest.raises(DivergentPrimitiveError):
        ee.radial_primitive(PolarForm(1, {(0,): PhgSeries.monomial(F(-3, 2), 0)}))
    with pytest.raises(PreconditionError):
        ee.radial_primitive(PolarForm(1, {(1,): PhgSeries.monomial(0, F(1, 2))}))
    with pytest.raises(InvalidDegreeError):
        ee.radial_primitive(PolarForm.function(PhgSeries.monomial(1, 0)))


@pytest.mark.parametrize("degree", [1, 2])
def test_cartan_identity(degree):
    rng = random.Random(10 + degree)
    for _ in range(25):
        eta = ee.random_form(rng, degree)
        assert ee.cartan_defect(eta).is_zero()
        rem = ee.cartan_remainder(eta)
        d_eta = ee.exterior_derivative(eta)
        if not rem.is_zero():
            assert rem.order >= d_eta.order + 1


def test_serialization_and_pretty():
    s = ee.schwartz_approximation(ee.parse_trigpoly("cos t + 1/3 sin 3t"), 3)
    assert ee.loads(ee.dumps(s)) == s
    assert ee.pretty(PhgSeries.monomial(1, 1, q=1, coeff=F(1, 2))) == "(1/2)·r·(log r)·e^{iθ}"
    assert ee.pretty(PhgSeries.monomial(F(1, 2), F(-1, 2), q=2, coeff=-1)) == "-r^{1/2}·(log r)^2·e^{-iθ/2}"
    assert ee.pretty(ee.ZERO) == "0"


def test_parse_trigpoly():
    assert ee.parse_trigpoly("cos t") == TrigPoly.cos(1)
    assert ee.parse_trigpoly("2 - 1/3 sin 2t") == TrigPoly.constant(2) + TrigPoly.sin(2, F(-1, 3))
    assert ee.parse_trigpoly("e^{2it}") == TrigPoly.exp(2)
    with pytest.raises(PreconditionError):
        ee.parse_trigpoly("tan t")


def test_numeric_consistency_with_exact_operator():
    u = ee.schwartz_approximation(TrigPoly.cos(1), 2)
    exact = ee.model_operator(u)
    for r in (0.3, 0.1):
        num = ee.fd_scaled_laplacian(u, r)
        assert abs(complex(num) - ee.evaluate(exact, r, 0.7, 0.3)) < 1e-12


def test_fd_residual_slope():
    u = ee.schwartz_approximation(TrigPoly.cos(1), 3)
    slope = ee.fd_residual_slope(u, [2.0 ** -j for j in range(3, 9)])
    assert slope >= 19 / 2 - 0.1


def test_remainder_gain_is_relative_to_d_eta():
    # eta = r^{3/2} dtheta has no radial part, so zeta = 0 and the remainder is eta
    eta = PolarForm(1, {(1,): PhgSeries.monomial(F(3, 2), 0)})
    assert ee.radial_primitive(eta).is_zero()
    assert ee.cartan_remainder(eta) == eta
    assert ee.cartan_remainder(eta).order == ee.exterior_derivative(eta).order + 1
