import numpy as np
import pytest

from nmk import coefficients as co
from nmk.coefficients import AnnulusSamples, PointFrame, sample_annulus, z_power
from nmk.errors import (
    DegenerateDirectionError,
    DimensionExcludedError,
    InsufficientRadialSpanError,
    MonodromyError,
    PreconditionError,
)

RADII = [0.01, 0.02, 0.04, 0.08, 0.1]
TS = np.linspace(0, 2 * np.pi, 9)


def test_hat_T_examples():
    e1 = np.array([1.0, 0, 0])
    t = co.hat_T_from_alpha(PointFrame(np.eye(3), e1, e1))
    assert np.allclose(t, 2 * np.outer(e1, e1) - np.eye(3), atol=1e-15)
    assert np.allclose(t @ e1, e1)
    assert not co.hat_T_from_alpha(PointFrame(np.eye(3), e1, np.zeros(3))).any()


def test_hat_T_degenerate_direction():
    with pytest.raises(DegenerateDirectionError):
        co.hat_T_from_alpha(PointFrame(np.eye(3), np.zeros(3), np.ones(3)))


def test_hat_T_identity_random_frames():
    rng = np.random.default_rng(0)
    for i in range(100):
        f = co.random_frame(rng, 3 + i % 3)
        t = co.hat_T_from_alpha(f)
        assert np.allclose(t, t.T, atol=0)
        assert np.abs(t @ co.raise_index(f.omega, f.g) - f.alpha).max() < 1e-12


def test_g_variation_examples():
    g = np.eye(3)
    assert not co.g_variation_from_hat_T(np.zeros((3, 3)), g).any()
    h = co.g_variation_from_hat_T(np.eye(3), g, 3)
    assert np.allclose(h, -2 * np.eye(3))
    assert np.allclose(co.hat_T_from_g_variation(h, g), np.eye(3))
    with pytest.raises(DimensionExcludedError):
        co.g_variation_from_hat_T(np.eye(2), np.eye(2))


def test_round_trip_and_trace_identity():
    rng = np.random.default_rng(1)
    for i in range(100):
        n = 3 + i % 3
        g = co.random_frame(rng, n).g
        m = rng.normal(size=(n, n))
        t = m + m.T
        h = co.g_variation_from_hat_T(t, g, n)
        assert np.abs(co.hat_T_from_g_variation(h, g) - t).max() < 1e-12
        assert abs(co.trace_g(t, g) - (1 - n / 2) * co.trace_g(h, g)) < 1e-10


def test_extract_oracles():
    s = sample_annulus(lambda r, th, t: z_power(r, th, 0.5), RADII, 32, TS)
    lc = co.extract_AB(s)
    assert np.abs(lc.A - 1).max() < 1e-8 and np.abs(lc.B).max() < 1e-8
    s = sample_annulus(lambda r, th, t: t * z_power(r, th, 1.5), RADII, 32, TS)
    lc = co.extract_AB(s)
    assert np.abs(lc.A).max() < 1e-8 and np.abs(lc.B - TS).max() < 1e-8
    s = sample_annulus(lambda r, th, t: (2 + np.cos(t)) * z_power(r, th, 1.5) + z_power(r, th, 3.5),
                       RADII, 32, TS)
    lc = co.extract_AB(s)
    assert np.abs(lc.A).max() < 1e-6 and np.abs(lc.B - 2 - np.cos(TS)).max() < 1e-6
    assert (lc.fit_residual >= 0).all()


def test_extract_complex_coefficients():
    a, b = 0.3 - 0.7j, -1.1 + 0.2j
    s = sample_annulus(lambda r, th, t: a * z_power(r, th, 0.5) + b * z_power(r, th, 1.5),
                       RADII, 16, [0.0])
    lc = co.extract_AB(s)
    assert abs(lc.A[0] - a) < 1e-12 and abs(lc.B[0] - b) < 1e-12


def test_extraction_linear():
    rng = np.random.default_rng(2)
    f = lambda c: (lambda r, th, t: c[0] * z_power(r, th, 0.5) + c[1] * t * z_power(r, th, 1.5))
    c1, c2 = rng.normal(size=2) + 1j * rng.normal(size=2), rng.normal(size=2)
    s1, s2 = (sample_annulus(f(c), RADII, 16, TS) for c in (c1, c2))
    s12 = AnnulusSamples(s1.radii, s1.angles, s1.t_slices, s1.values + s2.values)
    l1, l2, l12 = (co.extract_AB(x) for x in (s1, s2, s12))
    assert np.abs(l12.A - l1.A - l2.A).max() < 1e-12
    assert np.abs(l12.B - l1.B - l2.B).max() < 1e-12


def test_monodromy_and_integer_contamination():
    base = lambda r, th, t: (2 + np.cos(t)) * z_power(r, th, 1.5) + z_power(r, th, 0.5)
    clean = co.extract_AB(sample_annulus(base, RADII, 32, TS))
    dirty = sample_annulus(lambda r, th, t: base(r, th, t) + z_power(r, th, 1), RADII, 32, TS)
    with pytest.raises(MonodromyError):
        co.extract_AB(dirty)
    lc = co.extract_AB(dirty, check_monodromy=False)
    assert np.abs(lc.A - clean.A).max() < 1e-8 and np.abs(lc.B - clean.B).max() < 1e-8


def test_extract_preconditions():
    f = lambda r, th, t: z_power(r, th, 0.5)
    with pytest.raises(InsufficientRadialSpanError):
        co.extract_AB(sample_annulus(f, [0.05, 0.06, 0.07, 0.08], 16, [0.0]))
    with pytest.raises(PreconditionError):
        co.extract_AB(sample_annulus(f, [0.01, 0.1, 0.05], 16, [0.0]))
    with pytest.raises(PreconditionError):
        co.extract_AB(sample_annulus(f, RADII, 6, [0.0]))
    with pytest.raises(PreconditionError):
        AnnulusSamples([1.0], [0.0], [0.0], np.zeros((2, 1, 1)))


def test_samples_csv_round_trip():
    s = sample_annulus(lambda r, th, t: t * z_power(r, th, 1.5), RADII, 16, TS[:3])
    back = AnnulusSamples.from_csv(s.to_csv())
    assert np.array_equal(back.values, s.values) and np.array_equal(back.radii, s.radii)
    with pytest.raises(PreconditionError):
        AnnulusSamples.from_csv("a,b,c,d\n1,2,3,4\n")
    with pytest.raises(PreconditionError):
        AnnulusSamples.from_csv("r,theta,t,value\n1,0,0,1\n1,1,0,1\n2,0,0,1\n")
    lc = co.extract_AB(s)
    assert lc.to_csv().splitlines()[0] == "t,re_A,im_A,re_B,im_B,residual"


def test_k_nondegeneracy_verdicts():
    assert co.k_nondegeneracy_check(np.ones(50)) == (True, 1.0)
    t = np.linspace(-1, 1, 201)
    ok, low = co.k_nondegeneracy_check(t, lipschitz=1.0, spacing=0.01)
    assert not ok and low < 1e-12
    t = np.linspace(0, 2 * np.pi, 401)
    ok, low = co.k_nondegeneracy_check(2 + np.cos(t), lipschitz=1.0, spacing=t[1])
    assert ok and abs(low - 1) < 1e-12


def test_fd_gradient_matches_analytic():
    u = lambda r, th, t: np.real(t * z_power(r, th, 1.5))
    r, th, t = 0.3, 0.4, 1.2
    g = co.fd_gradient(u, r, th, t)
    exact = [1.5 * t * r ** 0.5 * np.cos(1.5 * th), -1.5 * t * r ** 1.5 * np.sin(1.5 * th),
             r ** 1.5 * np.cos(1.5 * th)]
    assert np.allclose(g, exact, atol=1e-8)
