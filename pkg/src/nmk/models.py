"""Degenerate multiplication model and the s-sweep experiment.

The model map on the circle is

    phi_s(u) = s**m * a + (3/2) * b_s * u + (3/4) * c * u**2,   b_s = b0 + s * b_tilde,

so ``dphi_s(u) w = (3/2) (b_s + c u) w``.  The approximate inverse

    psi_s(u) v = (2/3) * (b_s + c u)**-1 * (v + kappa * phi_s(u) * v)

makes the quadratic error exactly ``E(u)(w, v) = kappa * w * v``.

Declared tame constants (one-line justifications):

* ``C_k = C1 = C2 = 1``: the map is a quadratic polynomial with unit-size
  coefficients and the norm is an algebra norm.  This is a declaration, not
  a certificate, at high k: ``|a|_k`` and ``|c|_k`` grow like ``2**k``, so
  once ``s**m |a|_{T+d}`` exceeds 1 (s close to the threshold) the growth
  check of a verified run can fail even though the iteration converges.
* ``C_tilde_k = s**(-k-2)``, ``C_tilde3 = s**(-3d)``: the inverse of
  ``b_s`` is of size ``s**-1`` and each derivative of it costs one more
  power of ``s**-1`` in the worst case; the extra factors are kept as
  declared rather than measured.
* ``C_hat = 1``: sharp spectral cutoff.

These give ``theta0(s) ~ 9 s**(-2(T+2))`` as ``s -> 0``.
"""

from __future__ import annotations

import contextlib
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import mpmath
import numpy as np

from . import graded
from .errors import (
    BallExitError,
    DivergenceError,
    InvalidParameterError,
    NearSingularInverseError,
    OracleUnavailableError,
    RuntimeFailure,
)
from .graded import GradedElement
from .nash_moser import TameConstants, compute_ledger, grading_parameters, iterate, required_m


def declared_constants(s: float, d: int, delta: float = 1.0, prefactor: float = 1.0) -> TameConstants:
    """The s-dependent constant family of the model (see module docstring)."""
    if not 0 < s <= 1:
        raise InvalidParameterError(f"degeneration parameter must lie in (0, 1], got {s}")
    ls = math.log(s)
    lp = math.log(prefactor)
    return TameConstants(
        d=d, delta=delta,
        log_C=lambda k: 0.0,
        log_C1=0.0, log_C2=0.0,
        log_C_tilde=lambda k: lp - (k + 2) * ls,
        log_C_tilde3=lp - 3 * d * ls,
    )


@dataclass(frozen=True)
class MultiplicationModel:
    a: GradedElement
    b0: GradedElement
    b_tilde: GradedElement
    c: GradedElement
    kappa: float = 0.0
    s: float = 0.5
    m: int = 1
    d: int = 1
    delta: float = 1.0
    C: float = 1.0
    bandwidth: int = 64
    dps: int | None = None
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.s < 1 + 1e-15:
            raise InvalidParameterError(f"s must lie in (0, 1), got {self.s}")
        if self.m < 0 or self.d < 1:
            raise InvalidParameterError("need m >= 0 and d >= 1")

    # -- precision ----------------------------------------------------
    def _prec(self):
        return mpmath.workdps(self.dps) if self.dps else contextlib.nullcontext()

    def _lift(self, v: GradedElement) -> GradedElement:
        return v.to_mp() if self.dps and not v.is_mp else v

    def with_auto_precision(self, margin: int = 30) -> "MultiplicationModel":
        """Pick a working precision for runs whose traces get verified.

        Two things need digits: the Newton steps push ``phi`` far below
        ``||phi(0)||`` (quadratically, so 2.5 times its exponent covers two
        steps), and the growth checks weigh the top mode by
        ``(1 + bandwidth)^(T + 2d)``, which turns double-precision round-off
        in empty modes into huge norms.  Both are budgeted here.
        """
        digits = max(0.0, -self.log10_phi0_norm())
        _, t_big, _ = grading_parameters(self.d)
        weight = (t_big + 2 * self.d) * math.log10(1 + self.bandwidth)
        return replace(self, dps=int(2.5 * digits + weight) + margin)

    # -- derived data -------------------------------------------------
    @property
    def ball_radius(self) -> float:
        return self.s * self.delta

    @property
    def floor(self) -> float:
        return 0.5 * self.C * self.s

    @property
    def constants(self) -> TameConstants:
        return declared_constants(self.s, self.d, self.delta)

    def ledger(self, tracked_t=None):
        return compute_ledger(self.constants, tracked_t)

    def s_pow_m(self):
        if self.dps:
            return mpmath.mpf(self.s) ** self.m
        return self.s ** self.m

    def log10_phi0_norm(self) -> float:
        """log10 of ``||phi_s(0)||_{2d} = s**m * ||a||_{2d}``, exact in logs."""
        na = graded.norm(self.a, 2 * self.d)
        if na == 0:
            return float("-inf")
        return self.m * math.log10(self.s) + float(mpmath.log10(na))

    @cached_property
    def b_s(self) -> GradedElement:
        with self._prec():
            return self._lift(self.b0) + graded.scale(self._lift(self.b_tilde), self.s)

    @cached_property
    def _b_inverse(self):
        """Reciprocal of ``b_s`` and the grid minimum of ``|b_s|``."""
        with self._prec():
            inv, _ = graded.reciprocal(self.b_s, self.bandwidth, self.floor)
            b_min = min(abs(x) for x in self.b_s.samples(graded._grid_size(len(inv.coef))))
            return inv, b_min

    def b_inverse_sup(self) -> float:
        """C0 norm of ``B_s(0)**-1`` on the oversampled grid."""
        inv, _ = self._b_inverse
        return float(graded.sup_norm(inv))

    def b_min(self) -> float:
        return float(self._b_inverse[1])

    def _truncate(self, v: GradedElement) -> GradedElement:
        return graded.smooth(v, self.bandwidth + 1)

    # -- TameProblem --------------------------------------------------
    def phi(self, u: GradedElement) -> GradedElement:
        with self._prec():
            u = self._lift(u)
            a = graded.scale(self._lift(self.a), self.s_pow_m())
            cu = self._lift(self.c) * u
            return a + graded.scale(self.b_s * u, 1.5) + graded.scale(cu * u, 0.75)

    def dphi(self, u: GradedElement, w: GradedElement) -> GradedElement:
        with self._prec():
            u, w = self._lift(u), self._lift(w)
            return graded.scale((self.b_s + self._lift(self.c) * u) * w, 1.5)

    def quad_error(self, u: GradedElement, w: GradedElement, v: GradedElement) -> GradedElement:
        with self._prec():
            return graded.scale(self._lift(w) * self._lift(v), self.kappa)

    def inverse_B(self, u: GradedElement) -> GradedElement:
        """``(b_s + c u)**-1`` truncated to the model bandwidth.

        Uses the cached reciprocal of ``b_s`` and a Neumann series in
        ``c u / b_s`` when that ratio is small in the (algebra) 0-norm;
        otherwise falls back to the grid reciprocal.
        """
        with self._prec():
            u = self._lift(u)
            base, b_min = self._b_inverse
            w = self._lift(self.c) * u
            if w.is_zero():
                return base
            w_sup = graded.norm(w, 0)
            if b_min - w_sup < self.floor:
                inv, _ = graded.reciprocal(self.b_s + w, self.bandwidth, self.floor)
                return inv
            p = self._truncate(w * base)
            ratio = graded.norm(p, 0)
            if ratio >= 0.5:
                inv, _ = graded.reciprocal(self.b_s + w, self.bandwidth, self.floor)
                return inv
            eps = mpmath.mpf(10) ** (-mpmath.mp.dps - 5) if self.dps else 1e-18
            total, term = base, base
            for _ in range(10_000):
                term = -self._truncate(term * p)
                total = total + term
                if graded.norm(term, 0) <= eps * graded.norm(total, 0):
                    break
            return total

    def psi(self, u: GradedElement, v: GradedElement) -> GradedElement:
        with self._prec():
            u, v = self._lift(u), self._lift(v)
            rhs = v + graded.scale(self.phi(u) * v, self.kappa) if self.kappa else v
            return graded.scale(self._truncate(self.inverse_B(u) * rhs), mpmath.mpf(2) / 3
                                if self.dps else 2.0 / 3.0)


# module-level aliases for the conformance interface
def model_phi(model, u):
    return model.phi(u)


def model_dphi(model, u, w):
    return model.dphi(u, w)


def model_psi(model, u, v):
    return model.psi(u, v)


def model_quad_error(model, u, w, v):
    return model.quad_error(u, w, v)


# -- presets -----------------------------------------------------------

def default_error_profile() -> GradedElement:
    """``a = 1e-5 (2 + cos t)``; ``||a||_2 = 6e-5``."""
    return GradedElement.from_modes({0: 2e-5, 1: 0.5e-5, -1: 0.5e-5})


def default_coupling() -> GradedElement:
    """``c = 1 + sin(t) / 2``."""
    return GradedElement.from_modes({0: 1.0, 1: -0.25j, -1: 0.25j})


def fully_degenerate(s=0.5, m=None, d=1, kappa=0.0, a=None, c=None,
                     bandwidth=64, delta=1.0, auto_precision=True) -> MultiplicationModel:
    """``b0 = 0``, ``b_tilde = 1``: ``|b_s| = s`` everywhere (C = 1)."""
    model = MultiplicationModel(
        a=a if a is not None else default_error_profile(),
        b0=GradedElement.zero(), b_tilde=GradedElement.constant(1.0),
        c=c if c is not None else GradedElement.zero(),
        kappa=kappa, s=s, m=required_m(d) if m is None else m, d=d, delta=delta,
        C=1.0, bandwidth=bandwidth, name="fully-degenerate")
    return model.with_auto_precision() if auto_precision else model


def partially_degenerate(s=0.5, m=None, d=1, kappa=0.0, a=None, c=None,
                         bandwidth=64, delta=1.0, auto_precision=True) -> MultiplicationModel:
    """``b0 = 1 - cos t``, ``b_tilde = i``: ``|b_s| >= s`` with equality at t = 0."""
    model = MultiplicationModel(
        a=a if a is not None else default_error_profile(),
        b0=GradedElement.from_modes({0: 1.0, 1: -0.5, -1: -0.5}),
        b_tilde=GradedElement.constant(1j),
        c=c if c is not None else GradedElement.zero(),
        kappa=kappa, s=s, m=required_m(d) if m is None else m, d=d, delta=delta,
        C=1.0, bandwidth=bandwidth, name="partially-degenerate")
    return model.with_auto_precision() if auto_precision else model


PRESETS = {"fully-degenerate": fully_degenerate, "partially-degenerate": partially_degenerate}


# -- oracle ------------------------------------------------------------

def exact_solution_oracle(model: MultiplicationModel, check_tol: float = 1e-10) -> GradedElement:
    """Pointwise near-zero root of ``(3/4) c u^2 + (3/2) b_s u + s^m a = 0``.

    Written as ``u = -(4 s^m a) / (3 b_s (1 + sqrt(1 - x)))`` with
    ``x = 4 c s^m a / (3 b_s^2)``, which is the usual root formula after
    rationalizing and stays accurate as ``c -> 0``.
    """
    with model._prec():
        length = graded._length_for(model.bandwidth, False)
        grid_m = graded._grid_size(length)
        lift = model._lift
        sm = model.s_pow_m()
        av = lift(model.a).samples(grid_m)
        bv = model.b_s.samples(grid_m)
        cv = lift(model.c).samples(grid_m)
        if model.dps:
            sqrt, one = mpmath.sqrt, mpmath.mpf(1)
        else:
            sqrt, one = np.emath.sqrt, 1.0
        roots = []
        for a_j, b_j, c_j in zip(av, bv, cv):
            if b_j == 0:
                raise OracleUnavailableError("b_s vanishes on the grid")
            x = 4 * c_j * sm * a_j / (3 * b_j * b_j)
            disc = one - x
            if not complex(disc).real > 0:
                raise OracleUnavailableError("discriminant leaves the principal branch")
            roots.append(-(4 * sm * a_j) / (3 * b_j * (one + sqrt(disc))))
        values = np.array(roots, dtype=object if model.dps else complex)
        u_star = graded._project(values, length, grid_m)
        res = graded.norm(model.phi(u_star), 2 * model.d)
        if not res < check_tol:
            raise OracleUnavailableError(
                f"oracle residual {mpmath.nstr(res, 5)} exceeds {check_tol}")
        return u_star


# -- sweep -------------------------------------------------------------

SWEEP_FIELDS = ("s", "m", "d", "B_inv_norm", "theta0_log", "phi0_norm_log",
                "hypothesis_ok", "converged", "iterations", "final_residual_log")


@dataclass
class SweepRow:
    s: float
    m: int
    d: int
    B_inv_norm: float
    theta0_log: float          # log10 theta0(s)
    phi0_norm_log: float       # log10 ||phi_s(0)||_{2d}
    hypothesis_ok: bool
    converged: bool | None = None
    iterations: int | None = None
    final_residual_log: float | None = None
    outcome: str = ""


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)
    slope_B_inv: float = float("nan")
    slope_theta0: float = float("nan")
    expected_theta0_slope: float = float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for r in self.rows:
            w.writerow([
                repr(float(r.s)), r.m, r.d, _fmt(r.B_inv_norm), _fmt(r.theta0_log),
                _fmt(r.phi0_norm_log), str(r.hypothesis_ok).lower(),
                "" if r.converged is None else str(r.converged).lower(),
                "" if r.iterations is None else r.iterations,
                _fmt(r.final_residual_log),
            ])
        return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _log_slope(xs, ys) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(xs, float)), np.asarray(ys, float), 1)
    return float(slope)


def hypothesis_margin(model: MultiplicationModel) -> float:
    """``log(s^m ||a||_{2d}) + 4 log theta0(s)`` (natural logs).

    Nonpositive exactly when the starting hypothesis holds at ``u0 = 0``.
    """
    na = graded.norm(model.a, 2 * model.d)
    if na == 0:
        return float("-inf")
    lt = model.ledger().log_theta0
    return model.m * math.log(model.s) + float(mpmath.log(na)) + 4 * lt


def hypothesis_threshold(template: MultiplicationModel, lo: float = 1e-6, hi: float = 1.0,
                         tol: float = 1e-12) -> float:
    """Largest ``s1`` in ``(lo, hi)`` with the hypothesis holding on ``(lo, s1]``,
    found by bisection on ``log s``.  Raises if there is no sign change."""
    def margin(s):
        return hypothesis_margin(replace(template, s=s, dps=None))
    if margin(lo) > 0:
        raise RuntimeFailure(f"hypothesis fails already at s = {lo}")
    if margin(hi) <= 0:
        return hi
    llo, lhi = math.log(lo), math.log(hi)
    while lhi - llo > tol:
        mid = 0.5 * (llo + lhi)
        if margin(math.exp(mid)) <= 0:
            llo = mid
        else:
            lhi = mid
    return math.exp(llo)


def _sweep_row(args) -> SweepRow:
    template, s, run, k_max = args
    model = replace(template, s=s, dps=None)
    if run:
        model = model.with_auto_precision()
    ledger = model.ledger()
    lp = model.log10_phi0_norm()
    row = SweepRow(
        s=s, m=model.m, d=model.d, B_inv_norm=model.b_inverse_sup(),
        theta0_log=ledger.log_theta0 / math.log(10), phi0_norm_log=lp,
        hypothesis_ok=lp * math.log(10) <= -4 * ledger.log_theta0)
    if not run:
        return row
    try:
        tol = min(1e-10, 10.0 ** (2 * lp)) if lp > -150 else mpmath.mpf(10) ** (2 * lp)
        _, trace = iterate(model, GradedElement.zero(), ledger, k_max=k_max, residual_tol=tol)
        row.outcome = trace.termination_reason
    except (BallExitError, DivergenceError) as exc:
        trace = exc.trace
        row.outcome = trace.termination_reason
    except NearSingularInverseError:
        row.converged, row.outcome = False, "near-singular-inverse"
        return row
    row.converged = trace.termination_reason == "converged"
    row.iterations = trace.steps
    res = trace.final_residual
    row.final_residual_log = float(mpmath.log10(res)) if res > 0 else float("-inf")
    return row


def degenerate_sweep(template: MultiplicationModel, s_grid: Sequence[float], m: int | None = None,
                     run_iterations: bool = False, k_max: int = 4,
                     max_workers: int | None = None) -> SweepTable:
    """Ledger and inverse scaling over a decreasing grid of s values.

    With ``run_iterations`` each s also runs the iteration from ``u0 = 0``
    (in worker processes when ``max_workers`` is not 1; extended precision
    is process-global state in mpmath, so threads are not used).
    """
    s_grid = [float(s) for s in s_grid]
    if any(not 0 < s < 1 for s in s_grid):
        raise InvalidParameterError("s grid must lie in (0, 1)")
    if any(b >= a for a, b in zip(s_grid, s_grid[1:])):
        raise InvalidParameterError("s grid must be strictly decreasing")
    if m is not None:
        template = replace(template, m=m)
    jobs = [(template, s, run_iterations, k_max) for s in s_grid]
    if run_iterations and max_workers != 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    table = SweepTable(rows=rows)
    if len(rows) >= 2:
        table.slope_B_inv = _log_slope([r.s for r in rows], np.log([r.B_inv_norm for r in rows]))
        table.slope_theta0 = _log_slope([r.s for r in rows],
                                        [r.theta0_log * math.log(10) for r in rows])
    _, t_big, _ = grading_parameters(template.d)
    table.expected_theta0_slope = -2.0 * (t_big + 2)
    return table
