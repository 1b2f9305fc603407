import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmk import graded, models, nash_moser
from nmk.errors import InvalidParameterError, NearSingularInverseError, OracleUnavailableError
from nmk.graded import GradedElement

small = st.floats(-1, 1)


def _element(rng, bw, scale):
    c = (rng.normal(size=2 * bw + 1) + 1j * rng.normal(size=2 * bw + 1)) * scale
    return GradedElement(c / (1 + np.abs(np.arange(-bw, bw + 1))) ** 3)


def _model(**kw):
    base = dict(s=0.5, m=2, kappa=0.1, c=models.default_coupling(), auto_precision=False,
                a=GradedElement.from_modes({0: 1e-3, 1: 2e-4, -1: 2e-4}), bandwidth=32)
    base.update(kw)
    return models.fully_degenerate(**base)


def test_exact_inverse_case():
    model = _model(kappa=0.0, c=GradedElement.zero())
    v = GradedElement.from_modes({-2: 0.3, 0: 1.0, 3: -0.5j})
    u = GradedElement.zero()
    assert graded.norm(model.dphi(u, model.psi(u, v)) - v, 2) < 1e-15


def test_constant_inverse_scaling():
    for s in (0.5, 0.1, 0.01):
        model = _model(s=s, c=GradedElement.zero())
        assert math.isclose(model.b_inverse_sup(), 1 / s, rel_tol=1e-12)


@pytest.mark.parametrize("preset", ["fully-degenerate", "partially-degenerate"])
def test_defining_identity_random_pairs(preset):
    rng = np.random.default_rng(7)
    model = models.PRESETS[preset](s=0.5, m=2, kappa=0.1, c=models.default_coupling(),
                                   bandwidth=48, auto_precision=False)
    worst = 0.0
    for _ in range(100):
        u = _element(rng, 4, 0.02)
        v = _element(rng, 4, 1.0)
        assert graded.norm(u, 3) < model.ball_radius
        lhs = model.dphi(u, model.psi(u, v))
        rhs = v + model.quad_error(u, model.phi(u), v)
        worst = max(worst, graded.norm(lhs - rhs, 2))
    assert worst < 1e-10


@settings(max_examples=50, deadline=None)
@given(small, small, st.integers(0, 3))
def test_quadratic_error_bilinear(x, y, seed):
    rng = np.random.default_rng(seed)
    model = _model()
    u, w, v1, v2 = (_element(rng, 3, 0.1) for _ in range(4))
    e = lambda w_, v_: model.quad_error(u, w_, v_)
    tol = 1e-14
    assert graded.norm(e(w, v1 + v2) - e(w, v1) - e(w, v2), 0) < tol
    assert graded.norm(e(graded.scale(w, x), v1) - graded.scale(e(w, v1), x), 0) < tol
    assert graded.norm(e(w, graded.scale(v1, y)) - graded.scale(e(w, v1), y), 0) < tol


@pytest.mark.parametrize("preset", ["fully-degenerate", "partially-degenerate"])
def test_nondegeneracy_floor(preset):
    for k in range(1, 9):
        s = 2.0 ** -k
        model = models.PRESETS[preset](s=s, auto_precision=False, bandwidth=16)
        assert model.b_min() >= 0.5 * model.C * s
        assert model.b_min() >= model.C * s * (1 - 1e-12)


def test_near_singular_inverse():
    model = _model(c=GradedElement.constant(1.0))
    u = GradedElement.constant(-0.45)  # b_s + c u = 0.05 < floor 0.25
    with pytest.raises(NearSingularInverseError):
        model.psi(u, GradedElement.constant(1.0))


def test_oracle_examples():
    assert models.exact_solution_oracle(_model(a=GradedElement.zero())).is_zero()
    # c = 0, b_s = 1 (s = 1 is the closed end of the family), s^m a = 0.3
    model = replace(_model(c=GradedElement.zero(), a=GradedElement.constant(0.3), m=0), s=1.0)
    u = models.exact_solution_oracle(model)
    assert graded.norm(u - GradedElement.constant(-0.2), 0) < 1e-14
    full = _model()
    u = models.exact_solution_oracle(full)
    assert graded.norm(full.phi(u), 2) < 1e-10


def test_oracle_branch_failure():
    model = _model(a=GradedElement.constant(1.0), m=0, c=GradedElement.constant(1.0))
    with pytest.raises(OracleUnavailableError):
        models.exact_solution_oracle(model)


def test_solver_matches_oracle_in_double_precision():
    model = _model()
    u, tr = nash_moser.iterate(model, GradedElement.zero(), model.ledger(), k_max=8,
                               residual_tol=1e-14)
    assert tr.termination_reason == "converged"
    assert tr.hypothesis_violated  # m = 2 is far below the required order
    assert graded.norm(u - models.exact_solution_oracle(model), 2) < 1e-8


def test_strengthened_ball_discipline():
    model = _model()
    u0 = GradedElement.zero()
    _, tr = nash_moser.iterate(model, u0, model.ledger(), k_max=8, residual_tol=1e-14)
    assert all(r.dist_3d < model.ball_radius for r in tr.records)


def test_required_m():
    assert nash_moser.required_m(1) == 664
    assert nash_moser.required_m(2) == 8 * (64 + 82 + 26)


def test_sweep_slopes_and_threshold():
    tmpl = models.fully_degenerate(auto_precision=False)
    grid = [2.0 ** -k for k in range(1, 9)]
    table = models.degenerate_sweep(tmpl, grid)
    assert abs(table.slope_B_inv + 1) < 0.05
    assert abs(table.slope_theta0 / table.expected_theta0_slope - 1) < 0.02
    assert all(r.hypothesis_ok for r in table.rows)
    s1 = models.hypothesis_threshold(tmpl)
    assert 0 < s1 < 1
    above = replace(tmpl, s=min(0.999, s1 * 1.01))
    assert models.hypothesis_margin(above) > 0


def test_sweep_grid_validation():
    tmpl = models.fully_degenerate(auto_precision=False)
    with pytest.raises(InvalidParameterError):
        models.degenerate_sweep(tmpl, [0.25, 0.5])
    with pytest.raises(InvalidParameterError):
        models.degenerate_sweep(tmpl, [1.5, 0.5])


def test_sweep_with_runs_and_csv():
    tmpl = models.fully_degenerate(auto_precision=False, bandwidth=8)
    table = models.degenerate_sweep(tmpl, [0.9, 0.7], run_iterations=True, max_workers=1)
    assert all(r.converged for r in table.rows)
    text = table.to_csv()
    assert text.splitlines()[0] == ",".join(models.SWEEP_FIELDS)
    assert len(text.splitlines()) == 3


def test_auto_precision_budget():
    small_phi = models.fully_degenerate(s=0.5)
    big_phi = models.fully_degenerate(s=0.5, m=2)
    assert small_phi.dps > big_phi.dps > 150  # the weight budget alone is ~150 digits at bw 64
    assert models.fully_degenerate(s=0.5, auto_precision=False).dps is None
    with mpmath.workdps(15):
        phi0 = small_phi.phi(GradedElement.zero())
    assert phi0.is_mp and graded.norm(phi0, 2) > 0


def test_unit_constants_are_flagged_near_threshold():
    # s**m |a|_{T+d} >> 1 just below s1: the run converges, but the declared
    # C_k = 1 no longer bounds the high norms and the growth check says so
    tmpl = _model(m=nash_moser.required_m(1), a=models.default_error_profile())
    s1 = models.hypothesis_threshold(tmpl)
    model = replace(tmpl, s=0.99 * s1).with_auto_precision()
    with mpmath.workdps(model.dps):
        assert model.s_pow_m() * graded.norm(model.a, nash_moser.grading_parameters(1)[1] + 1) > 1
    led = model.ledger()
    _, tr = nash_moser.iterate(model, GradedElement.zero(), led, k_max=4,
                               residual_tol=mpmath.mpf(10) ** (2 * model.log10_phi0_norm()))
    assert not tr.hypothesis_violated and tr.termination_reason == "converged"
    rep = nash_moser.verify_lemma_bounds(tr, led)
    assert rep.failures() == {"growth": [0]}
