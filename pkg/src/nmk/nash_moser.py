"""Constants ledger and the smoothed Newton scheme with quadratic error.

Given tame constants for a map ``phi`` with approximate right inverse
``psi`` (``phi'(u) psi(u) v = v + E(u)(phi(u), v)``), this module evaluates
the auxiliary constants ``N, T, tau, V_t, V0, V1, V, U_t, C0, theta0``,
runs

    v_k = -psi(u_k) phi(u_k),    u_{k+1} = u_k + S_{theta_k} v_k,
    theta_{k+1} = theta_k ** (5/4),

and checks the three per-step inequalities that drive convergence on the
recorded trace.

All constants are carried as natural logarithms; for d = 1 the grading
parameter T is already 81, so ``theta0`` and ``V**2`` overflow doubles for
modest inputs.
"""

from __future__ import annotations

import contextlib
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import mpmath

from . import graded
from .errors import (
    BallExitError,
    BelowMinimumScaleError,
    DivergenceError,
    HypothesisViolatedError,
    IncompleteConstantsError,
)
from .graded import GradedElement

LOG2 = math.log(2.0)
NEG_INF = float("-inf")


# -- log-space helpers -------------------------------------------------

def _ln(x) -> float:
    """Natural log of a nonnegative float or mpf, returned as float."""
    if isinstance(x, (mpmath.mpf, mpmath.mpc)):
        x = abs(x)
        return NEG_INF if x == 0 else float(mpmath.log(x))
    return NEG_INF if x == 0 else math.log(x)


def _lse(*logs: float) -> float:
    finite = [x for x in logs if x != NEG_INF]
    if not finite:
        return NEG_INF
    top = max(finite)
    return top + math.log(sum(math.exp(x - top) for x in finite))


def _log1p_of_log(lx: float) -> float:
    """log(1 + x) given log(x)."""
    return _lse(0.0, lx)


def _exp(lx: float):
    """exp of a log value; falls back to mpf when a double would overflow."""
    if lx < 700:
        return math.exp(lx)
    return mpmath.exp(lx)


def _as_log_map(value, name: str) -> Callable:
    if callable(value):
        return lambda *k: _checked_log(value(*k), name, k)
    if isinstance(value, Mapping):
        def lookup(*k):
            key = k[0] if len(k) == 1 else k
            if key not in value:
                raise IncompleteConstantsError(f"no value for {name}{list(k)}")
            return _checked_log(value[key], name, k)
        return lookup
    v = _checked_log(value, name, ())
    return lambda *k: v


def _checked_log(x, name, k) -> float:
    if not x > 0:
        raise IncompleteConstantsError(f"{name}{list(k)} must be positive, got {x}")
    return _ln(x)


# -- constants ---------------------------------------------------------

@dataclass(frozen=True)
class TameConstants:
    """Declared tame constants, stored as natural logs.

    ``log_C(s)``, ``log_C_tilde(s)`` and ``log_C_hat(s, t)`` are callables;
    ``base_norm(s)`` returns the plain value ``|u0|_s``.
    Use :meth:`from_values` to build from ordinary numbers or maps.
    """

    d: int
    delta: float
    log_C: Callable[[float], float]
    log_C1: float
    log_C2: float
    log_C_tilde: Callable[[float], float]
    log_C_tilde3: float
    log_C_hat: Callable[[float, float], float] = lambda s, t: 0.0
    base_norm: Callable[[float], float] = lambda s: 0.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise IncompleteConstantsError("loss of derivatives d must be a positive integer")
        if not self.delta > 0:
            raise IncompleteConstantsError("tame-ball radius delta must be positive")

    @classmethod
    def from_values(cls, d, delta, C, C1, C2, C_tilde, C_tilde3, C_hat=1.0,
                    base_norms=None) -> "TameConstants":
        """Each of ``C``, ``C_tilde``, ``C_hat`` may be a scalar, a mapping or a
        callable; ``base_norms`` is a mapping ``s -> |u0|_s``, a callable, or
        a :class:`GradedElement` ``u0``."""
        if base_norms is None:
            base = lambda s: 0.0
        elif isinstance(base_norms, GradedElement):
            u0 = base_norms
            base = lambda s: float(graded.norm(u0, s))
        elif isinstance(base_norms, Mapping):
            def base(s):
                if s not in base_norms:
                    raise IncompleteConstantsError(f"no base norm |u0|_{s}")
                return float(base_norms[s])
        else:
            base = base_norms
        return cls(
            d=int(d), delta=float(delta),
            log_C=_as_log_map(C, "C"),
            log_C1=_checked_log(C1, "C1", ()),
            log_C2=_checked_log(C2, "C2", ()),
            log_C_tilde=_as_log_map(C_tilde, "C_tilde"),
            log_C_tilde3=_checked_log(C_tilde3, "C_tilde3", ()),
            log_C_hat=_as_log_map(C_hat, "C_hat"),
            base_norm=base,
        )

    @classmethod
    def unit(cls, d: int, delta: float = 1.0) -> "TameConstants":
        return cls.from_values(d, delta, 1.0, 1.0, 1.0, 1.0, 1.0)


def grading_parameters(d: int) -> tuple[int, int, int]:
    """``(N, T, tau)`` from the loss of derivatives."""
    n = 4 * (2 * d + 1)
    t = 3 * d + 3 + (2 * d + 3) * (n + 3)
    tau = 3 * d + d * (n + 3)
    return n, t, tau


def closed_form_T(d: int) -> int:
    return 16 * d * d + 41 * d + 24


def closed_form_tau(d: int) -> int:
    return 8 * d * d + 10 * d


def required_m(d: int) -> int:
    """Vanishing order of the initial error that beats ``theta0**-4``."""
    return 8 * (16 * d * d + 41 * d + 26)


@dataclass(frozen=True)
class ConstantsLedger:
    d: int
    delta: float
    N: int
    T: int
    tau: int
    log_Vcal: dict
    log_V0: float
    log_V1: float
    log_V: float
    log_U: dict
    log_C0: float
    log_theta0: float
    theta0_terms: dict
    tracked_t: tuple

    @property
    def theta0(self):
        return _exp(self.log_theta0)

    @property
    def V(self):
        return _exp(self.log_V)

    @property
    def C0(self):
        return _exp(self.log_C0)

    def U(self, t):
        return _exp(self.log_U[t])

    def log_theta(self, k: int) -> float:
        return self.log_theta0 * 1.25 ** k

    def summary(self) -> str:
        lines = [
            f"d = {self.d}, delta = {self.delta}",
            f"N = {self.N}, T = {self.T}, tau = {self.tau}",
            f"T closed form 16d^2+41d+24 = {closed_form_T(self.d)}, "
            f"tau closed form 8d^2+10d = {closed_form_tau(self.d)}",
            f"log V0 = {self.log_V0:.6g}, log V1 = {self.log_V1:.6g}, log V = {self.log_V:.6g}",
            f"log C0 = {self.log_C0:.6g}",
            "theta0 = max of:",
        ]
        for name, lv in self.theta0_terms.items():
            lines.append(f"  {name:<18} log = {lv:.6g}  value = {mpmath.nstr(mpmath.exp(lv), 8)}")
        lines.append(f"log theta0 = {self.log_theta0:.6g}  "
                     f"(theta0 = {mpmath.nstr(mpmath.exp(self.log_theta0), 8)})")
        return "\n".join(lines)


def compute_ledger(tc: TameConstants, tracked_t: Sequence[int] | None = None) -> ConstantsLedger:
    d = tc.d
    n, t_big, tau = grading_parameters(d)
    tracked = tuple(tracked_t) if tracked_t is not None else (d, t_big, tau - d)
    log_delta = math.log(tc.delta)

    def base(s):
        return tc.base_norm(s)

    # 1 + delta + |u0|_s
    def shifted(s):
        return math.log1p(tc.delta + base(s))

    def vcal(t):
        inner = _lse(tc.log_C(t + d), tc.log_C(2 * d) + shifted(3 * d))
        return tc.log_C_tilde(t) + inner

    needed = set(tracked) | {t_big, tau - d}
    log_vcal = {t: vcal(t) for t in sorted(needed)}
    log_u = {t: _log1p_of_log(tc.log_C_hat(t + 2 * d, t) + log_vcal[t]) for t in sorted(needed)}

    log_v0 = tc.log_C_tilde(d) + shifted(2 * d)
    log_v1 = log_vcal[t_big] + math.log1p(base(t_big + 2 * d))
    log_v = _lse(tc.log_C_hat(3 * d + 3, d) + log_v0,
                 tc.log_C_hat(3 * d + 3, t_big) + log_v1)
    bracket = _lse(tc.log_C_hat(3 * d, 2 * d),
                   tc.log_C_hat(3 * d, tau) + tc.log_C(tau) + math.log1p(base(tau + d)))
    log_c0 = _lse(
        tc.log_C1 + tc.log_C_hat(3 * d, 3 * d + 3) + log_v,
        2 * tc.log_C_hat(3 * d, 3 * d) + 2 * log_v,
        tc.log_C_tilde3 + 2 * bracket,
    )
    terms = {
        "2": LOG2,
        "U_T": log_u[t_big],
        "U_(tau-d)": log_u[tau - d],
        "C_hat*V/delta": tc.log_C_hat(3 * d, 3 * d) + log_v - log_delta,
        "C0": log_c0,
    }
    return ConstantsLedger(
        d=d, delta=tc.delta, N=n, T=t_big, tau=tau,
        log_Vcal=log_vcal, log_V0=log_v0, log_V1=log_v1, log_V=log_v,
        log_U=log_u, log_C0=log_c0, log_theta0=max(terms.values()),
        theta0_terms=terms, tracked_t=tracked,
    )


@dataclass(frozen=True)
class ThetaSequence:
    log_thetas: list
    partial_sum: float
    bound: float
    theta0: float | None = None

    @property
    def thetas(self) -> list:
        out = [_exp(x) for x in self.log_thetas]
        if self.theta0 is not None:
            out[0] = self.theta0
        return out

    @property
    def summable(self) -> bool:
        return self.partial_sum < self.bound


def theta_sequence(theta0: float, k_max: int, log: bool = False) -> ThetaSequence:
    """``theta_k = theta0 ** ((5/4) ** k)`` for ``k <= k_max`` and the partial
    sum of ``theta_j ** -3`` compared against ``1 / theta0``.

    Pass ``log=True`` to give ``log(theta0)`` instead of ``theta0``.
    """
    l0 = float(theta0) if log else math.log(theta0)
    if l0 < LOG2 - 1e-15:
        raise BelowMinimumScaleError(f"theta0 must be at least 2 (got exp({l0}))")
    logs = [l0 * 1.25 ** k for k in range(k_max + 1)]
    total = math.fsum(math.exp(-3 * x) for x in logs)
    return ThetaSequence(logs, total, math.exp(-l0), None if log else theta0)


# -- the iteration -----------------------------------------------------

class TameProblem(Protocol):
    constants: TameConstants

    def phi(self, u: GradedElement) -> GradedElement: ...
    def dphi(self, u: GradedElement, w: GradedElement) -> GradedElement: ...
    def psi(self, u: GradedElement, v: GradedElement) -> GradedElement: ...
    def quad_error(self, u: GradedElement, w: GradedElement, v: GradedElement) -> GradedElement: ...


@dataclass
class StepRecord:
    k: int
    log_theta: float
    res_2d: object
    dist_3d: object
    growth: dict
    v_norm_3d3: object = None
    v_norm_3d: object = None
    step_norm_3d: object = None


@dataclass
class IterationTrace:
    d: int
    log_theta0: float
    tracked_t: tuple
    hypothesis_violated: bool = False
    termination_reason: str = ""
    records: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return sum(1 for r in self.records if r.v_norm_3d3 is not None)

    @property
    def final_residual(self):
        return self.records[-1].res_2d if self.records else None


def _precision(problem):
    dps = getattr(problem, "dps", None)
    return mpmath.workdps(dps) if dps else contextlib.nullcontext()


def _state_record(problem, u, u0, phi_u, k, log_theta, d, tracked):
    growth = {t: 1 + graded.norm(u, t + 2 * d) for t in tracked}
    return StepRecord(k=k, log_theta=log_theta, res_2d=graded.norm(phi_u, 2 * d),
                      dist_3d=graded.norm(u - u0, 3 * d), growth=growth)


def iterate(problem: TameProblem, u0: GradedElement, ledger: ConstantsLedger,
            k_max: int = 20, residual_tol: float = 1e-10, strict: bool = False,
            divergence_window: int = 3):
    """Run the smoothed Newton scheme from ``u0``.

    Stops when ``||phi(u_k)||_{2d} < residual_tol`` or after ``k_max`` steps.
    Returns ``(u, trace)``.  Leaving the tame ball or ``divergence_window``
    consecutive residual increases raise with the partial trace attached as
    ``err.trace``.
    """
    d = ledger.d
    tracked = ledger.tracked_t
    radius = getattr(problem, "ball_radius", ledger.delta)
    trace = IterationTrace(d=d, log_theta0=ledger.log_theta0, tracked_t=tracked)
    with _precision(problem):
        if problem_uses_mp(problem) and not u0.is_mp:
            u0 = u0.to_mp()
        u = u0
        phi_u = problem.phi(u)
        rec = _state_record(problem, u, u0, phi_u, 0, ledger.log_theta0, d, tracked)
        trace.records.append(rec)
        if _ln(rec.res_2d) > -4 * ledger.log_theta0:
            trace.hypothesis_violated = True
            if strict:
                raise HypothesisViolatedError(
                    f"||phi(u0)||_2d = {mpmath.nstr(rec.res_2d, 6)} exceeds theta0^-4 "
                    f"= exp({-4 * ledger.log_theta0:.6g})")
        increases = 0
        for k in range(k_max + 1):
            rec = trace.records[-1]
            if rec.res_2d < residual_tol:
                trace.termination_reason = "converged"
                return u, trace
            if k == k_max:
                trace.termination_reason = "max-steps"
                return u, trace
            v = -problem.psi(u, phi_u)
            log_theta = rec.log_theta
            theta = math.exp(log_theta) if log_theta < 700 else math.inf
            step = graded.smooth(v, theta)
            rec.v_norm_3d3 = graded.norm(v, 3 * d + 3)
            rec.v_norm_3d = graded.norm(v, 3 * d)
            rec.step_norm_3d = graded.norm(step, 3 * d)
            u = u + step
            phi_u = problem.phi(u)
            nxt = _state_record(problem, u, u0, phi_u, k + 1, log_theta * 1.25, d, tracked)
            trace.records.append(nxt)
            if not nxt.dist_3d < radius:
                trace.termination_reason = "ball-exit"
                raise BallExitError(
                    f"|u_{k + 1} - u_0|_3d = {mpmath.nstr(nxt.dist_3d, 6)} left the ball "
                    f"of radius {radius}", trace)
            increases = increases + 1 if nxt.res_2d > rec.res_2d else 0
            if increases >= divergence_window:
                trace.termination_reason = "divergence"
                raise DivergenceError(
                    f"residual increased {increases} consecutive steps", trace)
    return u, trace


def problem_uses_mp(problem) -> bool:
    return bool(getattr(problem, "dps", None))


# -- verification ------------------------------------------------------

@dataclass
class LemmaReport:
    growth: list
    correction: list
    residual: list
    cauchy: list

    @property
    def all_passed(self) -> bool:
        return all(self.growth) and all(self.correction) and all(self.residual) and all(self.cauchy)

    def failures(self) -> dict:
        return {name: [k for k, ok in enumerate(vals) if not ok]
                for name, vals in (("growth", self.growth), ("correction", self.correction),
                                   ("residual", self.residual), ("cauchy", self.cauchy))
                if not all(vals)}


def verify_lemma_bounds(trace: IterationTrace, ledger: ConstantsLedger,
                        log_C_hat: Callable[[float, float], float] | None = None) -> LemmaReport:
    """Evaluate the per-step inequalities on a recorded trace.

    For each step k taken (``v_k`` computed):

    * growth: ``1 + |u_{k+1}|_{t+2d} <= U_t theta_k^{2d} (1 + |u_k|_{t+2d})``
      for every tracked ``t``;
    * correction decay: ``|v_k|_{3d+3} <= V theta_k^{-3}``;
    * residual decay: ``|u_j - u_0|_{3d} < delta`` and
      ``||phi(u_j)||_{2d} <= theta_j^{-4}`` for ``j = k, k + 1``;
    * Cauchy: ``|u_{k+1} - u_k|_{3d} <= C_hat_{3d,3d} |v_k|_{3d}``.

    Comparisons are made between logarithms with a relative slack of 1e-12
    so that exact equality does not fail on rounding.
    """
    d = ledger.d
    log_hat = log_C_hat or (lambda s, t: 0.0)
    slack = 1e-12
    growth, correction, residual, cauchy = [], [], [], []
    recs = trace.records
    for k, rec in enumerate(recs[:-1]):
        if rec.v_norm_3d3 is None:
            break
        nxt = recs[k + 1]
        lt = rec.log_theta
        ok_growth = all(
            _ln(nxt.growth[t]) <= ledger.log_U[t] + 2 * d * lt + _ln(rec.growth[t]) + slack
            for t in trace.tracked_t)
        ok_corr = _ln(rec.v_norm_3d3) <= ledger.log_V - 3 * lt + slack * abs(ledger.log_V - 3 * lt)
        ok_res = all(
            r.dist_3d < ledger.delta
            and _ln(r.res_2d) <= -4 * r.log_theta + slack * 4 * abs(r.log_theta)
            for r in (rec, nxt))
        okc = _ln(rec.step_norm_3d) <= log_hat(3 * d, 3 * d) + _ln(rec.v_norm_3d) + slack
        growth.append(ok_growth)
        correction.append(ok_corr)
        residual.append(ok_res)
        cauchy.append(okc)
    return LemmaReport(growth, correction, residual, cauchy)


# -- export ------------------------------------------------------------

TRACE_FIELDS = ("k", "theta_k", "res_2d", "v_norm_3d3", "dist_3d",
                "check_growth", "check_correction", "check_residual")


def _num(x) -> str:
    if x is None:
        return ""
    return mpmath.nstr(mpmath.mpf(x), 17, min_fixed=-4, max_fixed=8)


def trace_to_csv(trace: IterationTrace, report: LemmaReport | None = None) -> str:
    """One comma-separated record per iterate, fixed column order.

    Lemma verdicts refer to the step starting at ``k``; the last row (no
    step taken) leaves them empty.  Numbers are written in decimal
    scientific notation at full double precision even when they lie far
    outside the double range.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for rec in trace.records:
        k = rec.k
        verdicts = ["", "", ""]
        if report is not None and k < len(report.growth):
            verdicts = [str(report.growth[k]).lower(), str(report.correction[k]).lower(),
                        str(report.residual[k]).lower()]
        w.writerow([k, _num(mpmath.exp(rec.log_theta)), _num(rec.res_2d),
                    _num(rec.v_norm_3d3), _num(rec.dist_3d), *verdicts])
    return buf.getvalue()


def read_trace_csv(text: str) -> list[dict]:
    """Parse :func:`trace_to_csv` output; numeric columns become log10 floats."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {"k": int(row["k"])}
        for key in ("theta_k", "res_2d", "v_norm_3d3", "dist_3d"):
            val = row[key]
            parsed["log10_" + key] = (None if val == "" else
                                      (float(mpmath.log10(mpmath.mpf(val)))
                                       if mpmath.mpf(val) > 0 else NEG_INF))
        for key in ("check_growth", "check_correction", "check_residual"):
            parsed[key] = None if row[key] == "" else row[key] == "true"
        rows.append(parsed)
    return rows
