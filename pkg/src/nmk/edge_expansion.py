"""Exact polyhomogeneous calculus near a codimension-two edge.

Terms are ``c(t) * r**k1 * (log r)**q * exp(i k2 theta)`` with rational
``k1, k2``, integer ``q >= 0`` and ``c`` a trigonometric polynomial in ``t``
whose coefficients are Gaussian rationals.  Everything here is exact; the
only floating point is in :func:`evaluate` and :func:`fd_residual_slope`.

The model operator is ``L0 = (r d_r)^2 + d_theta^2``; on the flat chart
``r^2 Laplacian = L0 + R`` with ``R = r^2 d_t^2``.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import mpmath

from .errors import (
    DivergentPrimitiveError,
    InvalidDegreeError,
    PreconditionError,
    UnsupportedResonanceError,
)

FORMAT_NAME = "nmk.phg-series"
FORMAT_VERSION = 1


# -- Gaussian rationals -------------------------------------------------

class QQi:
    """Exact complex rational ``re + i im``."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if type(re) is Fraction else Fraction(re)
        self.im = im if type(im) is Fraction else Fraction(im)

    @classmethod
    def of(cls, x) -> "QQi":
        if isinstance(x, QQi):
            return x
        if isinstance(x, complex):
            return cls(Fraction(x.real), Fraction(x.imag))
        return cls(Fraction(x))

    def __add__(self, o):
        o = QQi.of(o)
        return QQi(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return QQi(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-QQi.of(o))

    def __rsub__(self, o):
        return QQi.of(o) - self

    def __mul__(self, o):
        o = QQi.of(o)
        return QQi(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = QQi.of(o)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return QQi((self.re * o.re + self.im * o.im) / den, (self.im * o.re - self.re * o.im) / den)

    def conjugate(self):
        return QQi(self.re, -self.im)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __eq__(self, o):
        try:
            o = QQi.of(o)
        except (TypeError, ValueError):
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def to_mp(self):
        return mpmath.mpc(mpmath.mpf(self.re.numerator) / self.re.denominator,
                          mpmath.mpf(self.im.numerator) / self.im.denominator)

    def __repr__(self):
        return f"QQi({self.re}, {self.im})"

    def __str__(self):
        if not self.im:
            return _frac_str(self.re)
        if not self.re:
            return _imag_str(self.im)
        sign = "-" if self.im < 0 else "+"
        return f"({_frac_str(self.re)} {sign} {_imag_str(abs(self.im))})"


I = QQi(0, 1)


def _frac_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def _imag_str(f: Fraction) -> str:
    if f == 1:
        return "i"
    if f == -1:
        return "-i"
    if f.denominator == 1:
        return f"{f.numerator}i"
    return f"{f.numerator}i/{f.denominator}"


# -- trigonometric polynomials in t --------------------------------------

class TrigPoly:
    """``sum_n c_n exp(i n t)`` with exact coefficients; immutable."""

    __slots__ = ("_c",)

    def __init__(self, coeffs: Mapping | None = None):
        c = {}
        for n, v in (coeffs or {}).items():
            v = QQi.of(v)
            if v:
                n = n if type(n) is Fraction else Fraction(n)
                c[n] = c[n] + v if n in c else v
        object.__setattr__(self, "_c", {n: v for n, v in sorted(c.items()) if v})

    def __setattr__(self, name, value):
        raise AttributeError("TrigPoly is immutable")

    @classmethod
    def _clean(cls, c: dict) -> "TrigPoly":
        # keys already Fractions in sorted order, values QQi (zeros dropped here)
        out = object.__new__(cls)
        object.__setattr__(out, "_c", {n: v for n, v in c.items() if v})
        return out

    @classmethod
    def constant(cls, v=1) -> "TrigPoly":
        return cls({0: v})

    @classmethod
    def cos(cls, k=1, amp=1) -> "TrigPoly":
        h = Fraction(amp) / 2
        return cls({k: h, -k: h}) if k else cls({0: amp})

    @classmethod
    def sin(cls, k=1, amp=1) -> "TrigPoly":
        h = Fraction(amp) / 2
        return cls({k: QQi(0, -h), -k: QQi(0, h)})

    @classmethod
    def exp(cls, k=1, amp=1) -> "TrigPoly":
        return cls({k: amp})

    @property
    def coeffs(self) -> dict:
        return dict(self._c)

    def is_zero(self) -> bool:
        return not self._c

    def __add__(self, o):
        o = _as_trig(o)
        out = dict(self._c)
        for n, v in o._c.items():
            out[n] = out.get(n, QQi()) + v
        return TrigPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly._clean({n: -v for n, v in self._c.items()})

    def __sub__(self, o):
        return self + (-_as_trig(o))

    def __mul__(self, o):
        if not isinstance(o, TrigPoly):
            if isinstance(o, (int, Fraction)):
                o = Fraction(o)
                return TrigPoly._clean({n: QQi(v.re * o, v.im * o) for n, v in self._c.items()})
            o = QQi.of(o)
            return TrigPoly._clean({n: v * o for n, v in self._c.items()})
        out: dict = {}
        for n, v in self._c.items():
            for k, w in o._c.items():
                out[n + k] = out.get(n + k, QQi()) + v * w
        return TrigPoly(out)

    __rmul__ = __mul__

    def dt(self, order: int = 1) -> "TrigPoly":
        """Exact ``order``-th derivative in t."""
        return TrigPoly._clean({n: v * _ipow(n, order) for n, v in self._c.items()})

    def __eq__(self, o):
        if not isinstance(o, TrigPoly):
            try:
                o = _as_trig(o)
            except (TypeError, ValueError):
                return NotImplemented
        return self._c == o._c

    def __hash__(self):
        return hash(tuple(self._c.items()))

    def __call__(self, t):
        if isinstance(t, (mpmath.mpf, mpmath.mpc)):
            return mpmath.fsum(v.to_mp() * mpmath.expj(mpmath.mpf(n.numerator) / n.denominator * t)
                               for n, v in self._c.items())
        import cmath
        return sum((complex(v) * cmath.exp(1j * float(n) * t) for n, v in self._c.items()), 0j)

    def real_form(self):
        """``(a0, [(n, a_n, b_n), ...])`` with ``sum a_n cos nt + b_n sin nt``,
        or ``None`` when some pair is not of that real-coefficient shape."""
        freqs = sorted({abs(n) for n in self._c})
        a0 = self._c.get(Fraction(0), QQi())
        out = []
        for n in freqs:
            if n == 0:
                continue
            cp = self._c.get(n, QQi())
            cm = self._c.get(-n, QQi())
            a = cp + cm
            b = I * (cp - cm)
            if a.im or b.im:
                return None
            out.append((n, a.re, b.re))
        return a0, out

    def __str__(self):
        return _trig_str(self)

    def __repr__(self):
        return f"TrigPoly({self._c!r})"


def _ipow(n, k):
    """``(i n)**k`` as a Gaussian rational."""
    out = QQi(1)
    for _ in range(k):
        out = out * QQi(0, n)
    return out


def _as_trig(x) -> TrigPoly:
    return x if isinstance(x, TrigPoly) else TrigPoly.constant(QQi.of(x))


def _scalar_str(v: QQi) -> str:
    s = str(v)
    if (v.im == 0 and v.re.denominator != 1) or (v.re == 0 and v.im.denominator != 1):
        return f"({s})"
    return s


def _with_factor(scalar, body: str) -> str:
    """``scalar·body`` with the conventions 1·x = x and -1·x = -x."""
    if scalar == 1:
        return body
    if scalar == -1:
        return "-" + body
    return f"{_scalar_str(QQi.of(scalar))}·{body}"


def _freq_t(n: Fraction) -> str:
    return "t" if n == 1 else f"{_frac_str(n)}t"


def _trig_parts(p: TrigPoly) -> list:
    rf = p.real_form()
    parts = []
    if rf is not None:
        a0, pairs = rf
        if a0:
            parts.append(str(a0) if a0.im == 0 and a0.re.denominator == 1 else _scalar_str(a0))
        for n, a, b in pairs:
            if a:
                parts.append(_with_factor(a, f"cos {_freq_t(n)}"))
            if b:
                parts.append(_with_factor(b, f"sin {_freq_t(n)}"))
        return parts
    for n, v in p._c.items():
        if n == 0:
            parts.append(_scalar_str(v))
        else:
            parts.append(_with_factor(v, f"e^{{{'' if n == 1 else _frac_str(n)}it}}"))
    return parts


def _trig_str(p: TrigPoly) -> str:
    parts = _trig_parts(p)
    if not parts:
        return "0"
    return " + ".join(parts).replace("+ -", "- ")


# -- polyhomogeneous series ----------------------------------------------

@dataclass(frozen=True)
class PhgTerm:
    k1: Fraction
    q: int
    k2: Fraction
    coeff: TrigPoly

    def __post_init__(self):
        if self.q < 0:
            raise PreconditionError("log power must be nonnegative")


class PhgSeries:
    """Canonical finite sum of :class:`PhgTerm`; immutable.

    Terms are merged on ``(k1, q, k2)`` and sorted by k1, then q, then k2.
    """

    __slots__ = ("_t",)

    def __init__(self, terms: Iterable = ()):
        acc: dict = {}
        for term in terms:
            if isinstance(term, PhgTerm):
                key, c = (Fraction(term.k1), int(term.q), Fraction(term.k2)), term.coeff
            else:
                k1, q, k2, c = term
                key, c = (Fraction(k1), int(q), Fraction(k2)), _as_trig(c)
            if key[1] < 0:
                raise PreconditionError("log power must be nonnegative")
            acc[key] = acc[key] + c if key in acc else c
        object.__setattr__(self, "_t", {k: v for k, v in sorted(acc.items()) if not v.is_zero()})

    def __setattr__(self, name, value):
        raise AttributeError("PhgSeries is immutable")

    @classmethod
    def monomial(cls, k1, k2=0, q=0, coeff=1) -> "PhgSeries":
        return cls([(k1, q, k2, coeff)])

    @property
    def terms(self) -> list:
        return [PhgTerm(k1, q, k2, c) for (k1, q, k2), c in self._t.items()]

    def items(self):
        return self._t.items()

    def is_zero(self) -> bool:
        return not self._t

    @property
    def order(self):
        """Minimal r-exponent present (``None`` for the zero series)."""
        return min((k[0] for k in self._t), default=None)

    def __add__(self, o):
        return PhgSeries([(*k, c) for k, c in self._t.items()] + [(*k, c) for k, c in o._t.items()])

    def __neg__(self):
        return PhgSeries([(*k, -c) for k, c in self._t.items()])

    def __sub__(self, o):
        return self + (-o)

    def scale(self, v) -> "PhgSeries":
        return PhgSeries([(*k, c * v) for k, c in self._t.items()])

    def __eq__(self, o):
        if not isinstance(o, PhgSeries):
            return NotImplemented
        return self._t == o._t

    def __hash__(self):
        return hash(tuple(self._t.items()))

    def __repr__(self):
        return f"PhgSeries({pretty(self)})"

    def __str__(self):
        return pretty(self)


ZERO = PhgSeries()


def L0_apply(series: PhgSeries) -> PhgSeries:
    """``((r d_r)^2 + d_theta^2)`` termwise."""
    out = []
    for (k1, q, k2), c in series.items():
        out.append((k1, q, k2, c * (k1 * k1 - k2 * k2)))
        if q >= 1:
            out.append((k1, q - 1, k2, c * (2 * k1 * q)))
        if q >= 2:
            out.append((k1, q - 2, k2, c * (q * (q - 1))))
    return PhgSeries(out)


def is_resonant(k1, k2) -> bool:
    return Fraction(k1) ** 2 == Fraction(k2) ** 2


def L0_solve(h: PhgSeries) -> PhgSeries:
    """Exact ``f`` with ``L0_apply(f) == h``.

    Terms sharing ``(k1, k2)`` form a polynomial ``P`` in ``L = log r`` and
    the ansatz ``Q(L) r^k1 e^{i k2 theta}`` reduces to
    ``lam Q + 2 k1 Q' + Q'' = P`` with ``lam = k1^2 - k2^2``.  For
    ``lam != 0`` the solution has ``deg Q = deg P``; when ``lam = 0``
    ``Q`` has one more degree and is normalized by ``Q(0) = 0``.
    """
    groups: dict = {}
    for (k1, q, k2), c in h.items():
        groups.setdefault((k1, k2), {})[q] = c
    out = []
    for (k1, k2), p in groups.items():
        deg = max(p)
        lam = k1 * k1 - k2 * k2
        zero = TrigPoly()
        if lam != 0:
            qc = {}
            for n in range(deg, -1, -1):
                acc = p.get(n, zero) - qc.get(n + 1, zero) * (2 * k1 * (n + 1)) \
                    - qc.get(n + 2, zero) * ((n + 2) * (n + 1))
                qc[n] = acc * (Fraction(1) / lam)
        else:
            if k1 == 0:
                raise UnsupportedResonanceError(
                    "resonant term with k1 = 0 has no log-polynomial preimage of this form")
            # R = Q' solves 2 k1 R + R' = P; then Q = integral of R with Q(0) = 0
            rc = {}
            for n in range(deg, -1, -1):
                rc[n] = (p.get(n, zero) - rc.get(n + 1, zero) * (n + 1)) * (Fraction(1) / (2 * k1))
            qc = {n + 1: v * Fraction(1, n + 1) for n, v in rc.items()}
        out.extend((k1, n, k2, v) for n, v in qc.items())
    return PhgSeries(out)


def R_apply(series: PhgSeries) -> PhgSeries:
    """Flat remainder ``r^2 d_t^2``: shift k1 by 2, differentiate twice in t."""
    return PhgSeries([(k1 + 2, q, k2, c.dt(2)) for (k1, q, k2), c in series.items()])


def model_operator(series: PhgSeries) -> PhgSeries:
    """``r^2`` times the flat Laplacian: ``L0 + R``."""
    return L0_apply(series) + R_apply(series)


def schwartz_approximation(b_tilde: TrigPoly, K: int) -> PhgSeries:
    """``u_0 + ... + u_K`` with ``u_0 = b_tilde r^{3/2} e^{3i theta/2}`` and
    ``u_{j+1} = -L0^{-1} R u_j``."""
    if K < 0:
        raise PreconditionError("K must be nonnegative")
    u = PhgSeries.monomial(Fraction(3, 2), Fraction(3, 2), coeff=_as_trig(b_tilde))
    total = u
    for _ in range(K):
        u = -L0_solve(R_apply(u))
        total = total + u
    return total


def schwartz_residual(b_tilde: TrigPoly, K: int) -> PhgSeries:
    return model_operator(schwartz_approximation(b_tilde, K))


# -- differential forms on the (r, theta, t) chart -----------------------

COORDS = ("r", "θ", "t")
_DIFF = ("dr", "dθ", "dt")


def partial(series: PhgSeries, axis: int) -> PhgSeries:
    """Exact partial derivative along coordinate ``axis`` (0=r, 1=theta, 2=t)."""
    out = []
    for (k1, q, k2), c in series.items():
        if axis == 0:
            out.append((k1 - 1, q, k2, c * k1))
            if q:
                out.append((k1 - 1, q - 1, k2, c * q))
        elif axis == 1:
            out.append((k1, q, k2, c * QQi(0, k2)))
        elif axis == 2:
            out.append((k1, q, k2, c.dt(1)))
        else:
            raise PreconditionError(f"no coordinate axis {axis}")
    return PhgSeries(out)


class PolarForm:
    """Differential form ``sum_I f_I dx_I`` with increasing index tuples ``I``."""

    __slots__ = ("degree", "_c")

    def __init__(self, degree: int, components: Mapping | None = None):
        if degree not in (0, 1, 2, 3):
            raise InvalidDegreeError(f"degree must be 0..3, got {degree}")
        comps = {}
        for idx, f in (components or {}).items():
            idx = tuple(idx)
            if len(idx) != degree or list(idx) != sorted(set(idx)) or any(i not in (0, 1, 2) for i in idx):
                raise PreconditionError(f"bad basis index {idx} for a {degree}-form")
            if not f.is_zero():
                comps[idx] = f
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "_c", dict(sorted(comps.items())))

    def __setattr__(self, name, value):
        raise AttributeError("PolarForm is immutable")

    @classmethod
    def function(cls, f: PhgSeries) -> "PolarForm":
        return cls(0, {(): f})

    def component(self, idx) -> PhgSeries:
        return self._c.get(tuple(idx), ZERO)

    @property
    def components(self) -> dict:
        return dict(self._c)

    def is_zero(self) -> bool:
        return not self._c

    @property
    def order(self):
        return min((f.order for f in self._c.values()), default=None)

    def __add__(self, o):
        if o.degree != self.degree:
            raise InvalidDegreeError("cannot add forms of different degree")
        keys = set(self._c) | set(o._c)
        return PolarForm(self.degree, {k: self.component(k) + o.component(k) for k in keys})

    def __neg__(self):
        return PolarForm(self.degree, {k: -f for k, f in self._c.items()})

    def __sub__(self, o):
        return self + (-o)

    def __eq__(self, o):
        if not isinstance(o, PolarForm):
            return NotImplemented
        return self.degree == o.degree and self._c == o._c

    def __hash__(self):
        return hash((self.degree, tuple(self._c.items())))

    def __str__(self):
        if not self._c:
            return "0"
        parts = []
        for idx, f in self._c.items():
            basis = "∧".join(_DIFF[i] for i in idx)
            parts.append(f"[{pretty(f)}]" + (f"·{basis}" if basis else ""))
        return " + ".join(parts)

    __repr__ = __str__


def exterior_derivative(form: PolarForm) -> PolarForm:
    if form.degree >= 3:
        raise InvalidDegreeError("exterior derivative of a top-degree form on the chart")
    acc: dict = {}
    for idx, f in form.components.items():
        for j in range(3):
            if j in idx:
                continue
            sign = (-1) ** sum(1 for i in idx if i < j)
            key = tuple(sorted(idx + (j,)))
            df = partial(f, j)
            term = df if sign > 0 else -df
            acc[key] = acc[key] + term if key in acc else term
    return PolarForm(form.degree + 1, acc)


def contract_radial(form: PolarForm) -> PolarForm:
    """Interior product with ``d_r``; ``dr`` is first in every sorted basis."""
    if form.degree == 0:
        raise InvalidDegreeError("cannot contract a function")
    return PolarForm(form.degree - 1, {idx[1:]: f for idx, f in form.components.items()
                                       if idx and idx[0] == 0})


def radial_antiderivative(series: PhgSeries) -> PhgSeries:
    """``int_0^r`` termwise, exact in the log powers.

    ``int_0^r s^a (log s)^q ds
      = r^{a+1} sum_j (-1)^j q!/((q-j)! (a+1)^{j+1}) (log r)^{q-j}``, ``a > -1``.
    """
    out = []
    for (a, q, k2), c in series.items():
        if a <= -1:
            raise DivergentPrimitiveError(f"r^{a} is not integrable at r = 0")
        for j in range(q + 1):
            factor = Fraction((-1) ** j * math.factorial(q), math.factorial(q - j)) / (a + 1) ** (j + 1)
            out.append((a + 1, q - j, k2, c * factor))
    return PhgSeries(out)


def _radial_integral(form: PolarForm) -> PolarForm:
    inner = contract_radial(form)
    return PolarForm(inner.degree, {k: radial_antiderivative(f) for k, f in inner.components.items()})


def radial_primitive(eta: PolarForm) -> PolarForm:
    """``zeta = int_0^r iota_{d_r} eta``.

    Requires every exponent of ``eta`` to be positive so that ``eta``
    vanishes on the edge; then ``eta - d zeta = int_0^r iota_{d_r} d eta``.
    """
    if eta.degree < 1:
        raise InvalidDegreeError("radial primitive needs a form of degree >= 1")
    for idx, f in eta.components.items():
        if idx[0] == 0:
            if any(k1 <= -1 for (k1, _, _), _ in f.items()):
                raise DivergentPrimitiveError(f"component {idx} is not integrable at r = 0")
    if eta.order is not None and eta.order <= 0:
        raise PreconditionError("form does not vanish on the edge (some exponent <= 0)")
    return _radial_integral(eta)


def cartan_remainder(eta: PolarForm) -> PolarForm:
    """``int_0^r iota_{d_r} d eta``; equals ``eta - d(radial_primitive(eta))``."""
    return _radial_integral(exterior_derivative(eta))


def cartan_defect(eta: PolarForm) -> PolarForm:
    """``eta - d zeta - int_0^r iota_{d_r} d eta``; zero exactly when the homotopy
    identity holds."""
    zeta = radial_primitive(eta)
    return eta - exterior_derivative(zeta) - cartan_remainder(eta)


# -- random generation (for property checks) -----------------------------

def random_trigpoly(rng: random.Random, max_freq: int = 2, max_num: int = 5) -> TrigPoly:
    coeffs = {}
    for n in range(-max_freq, max_freq + 1):
        if rng.random() < 0.5:
            coeffs[n] = QQi(Fraction(rng.randint(-max_num, max_num), rng.randint(1, 4)),
                            Fraction(rng.randint(-max_num, max_num), rng.randint(1, 4)))
    return TrigPoly(coeffs) if coeffs else TrigPoly.constant(1)


def random_series(rng: random.Random, n_terms: int = 3, min_k1=Fraction(3, 2),
                  max_k1=Fraction(11, 2), max_q: int = 2) -> PhgSeries:
    lo, hi = int(2 * min_k1), int(2 * max_k1)
    terms = []
    for _ in range(n_terms):
        k1 = Fraction(rng.randint(lo, hi), 2)
        k2 = Fraction(rng.randint(-5, 5), 2)
        terms.append((k1, rng.randint(0, max_q), k2, random_trigpoly(rng)))
    return PhgSeries(terms)


def random_form(rng: random.Random, degree: int, **kw) -> PolarForm:
    import itertools
    idxs = list(itertools.combinations(range(3), degree))
    return PolarForm(degree, {idx: random_series(rng, **kw) for idx in idxs if rng.random() < 0.8})


# -- printing & serialization --------------------------------------------

def _exp_str(k: Fraction) -> str:
    return _frac_str(k)


def _theta_str(k2: Fraction) -> str:
    num, den = k2.numerator, k2.denominator
    lead = "" if num == 1 else "-" if num == -1 else str(num)
    return f"e^{{{lead}iθ" + (f"/{den}" if den != 1 else "") + "}"


def pretty_term(k1: Fraction, q: int, k2: Fraction, c: TrigPoly) -> str:
    factors = []
    parts = _trig_parts(c)
    scalar_only = False
    if len(parts) == 1:
        head = parts[0]
        rf = c.real_form()
        # pull a rational amplitude out of a single cos/sin: "(1/10)·cos t"
        if rf is not None and not rf[0] and len(rf[1]) == 1:
            n, a, b = rf[1][0]
            if bool(a) != bool(b):
                amp = a or b
                fn = "cos" if a else "sin"
                body = f"{fn} {_freq_t(n)}"
                if amp == -1:
                    factors.append("-" + body)
                elif amp == 1:
                    factors.append(body)
                else:
                    factors.append(_scalar_str(QQi(amp)))
                    factors.append(body)
                head = None
        if head is not None:
            scalar_only = c.coeffs.keys() == {Fraction(0)}
            factors.append(head)
    else:
        factors.append("(" + " + ".join(parts).replace("+ -", "- ") + ")")
    if k1 == 1:
        factors.append("r")
    elif k1 != 0:
        factors.append(f"r^{{{_exp_str(k1)}}}")
    if q:
        factors.append("(log r)" + (f"^{q}" if q > 1 else ""))
    if k2 != 0:
        factors.append(_theta_str(k2))
    if scalar_only and len(factors) > 1 and factors[0] in ("1", "-1"):
        lead = factors.pop(0)
        if lead == "-1":
            factors[0] = "-" + factors[0]
    return "·".join(factors)


def pretty(series: PhgSeries) -> str:
    if series.is_zero():
        return "0"
    out = " + ".join(pretty_term(k1, q, k2, c) for (k1, q, k2), c in series.items())
    return out.replace("+ -", "- ")


def _qqi_record(v: QQi) -> list:
    return [v.re.numerator, v.re.denominator, v.im.numerator, v.im.denominator]


def to_records(series: PhgSeries) -> list:
    recs = []
    for (k1, q, k2), c in series.items():
        coeffs = [[n.numerator, n.denominator, *_qqi_record(v)] for n, v in c.coeffs.items()]
        recs.append([k1.numerator, k1.denominator, q, k2.numerator, k2.denominator, coeffs])
    return recs


def from_records(records) -> PhgSeries:
    terms = []
    for k1n, k1d, q, k2n, k2d, coeffs in records:
        tp = TrigPoly({Fraction(nn, nd): QQi(Fraction(rn, rd), Fraction(im_n, im_d))
                       for nn, nd, rn, rd, im_n, im_d in coeffs})
        terms.append((Fraction(k1n, k1d), q, Fraction(k2n, k2d), tp))
    return PhgSeries(terms)


def dumps(series: PhgSeries) -> str:
    return json.dumps({"format": FORMAT_NAME, "version": FORMAT_VERSION,
                       "terms": to_records(series)})


def loads(text: str) -> PhgSeries:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise PreconditionError("not a version-1 phg series document")
    return from_records(doc["terms"])


def parse_trigpoly(spec: str) -> TrigPoly:
    """Parse sums like ``"cos t + 1/3 sin 3t"``, ``"e^{2it}"``, ``"2"``.

    Grammar: terms separated by ``+``/``-``; each term is an optional
    rational factor followed by ``cos kt``, ``sin kt``, ``exp kt`` (for
    ``e^{ikt}``) or nothing.
    """
    import re
    s = spec.replace(" ", "").replace("·", "*").replace("e^{it}", "exp1t")
    s = re.sub(r"e\^\{(-?\d*)it\}", lambda m_: f"exp{m_.group(1) or '1'}t", s)
    if not s:
        raise PreconditionError("empty trigonometric polynomial")
    tokens = re.findall(r"[+-]?[^+-]+", s)
    total = TrigPoly()
    pat = re.compile(r"^([+-]?)(\d+(?:/\d+)?)?\*?(?:(cos|sin|exp)(-?\d*)t)?$")
    for tok in tokens:
        m_ = pat.match(tok)
        if not m_ or (m_.group(2) is None and m_.group(3) is None):
            raise PreconditionError(f"cannot parse trig term {tok!r}")
        sign = -1 if m_.group(1) == "-" else 1
        amp = sign * Fraction(m_.group(2) or 1)
        fn, k = m_.group(3), m_.group(4)
        k = int(k) if k not in (None, "", "-") else (-1 if k == "-" else 1)
        if fn is None:
            total = total + TrigPoly.constant(amp)
        elif fn == "cos":
            total = total + TrigPoly.cos(k, amp)
        elif fn == "sin":
            total = total + TrigPoly.sin(k, amp)
        else:
            total = total + TrigPoly.exp(k, amp)
    return total


# -- numerics ------------------------------------------------------------

def evaluate(series: PhgSeries, r, theta, t):
    """Value at a point; uses mpmath when ``r`` is an mpf."""
    if isinstance(r, mpmath.mpf):
        lr = mpmath.log(r)
        return mpmath.fsum(
            c(mpmath.mpf(t)) * mpmath.power(r, mpmath.mpf(k1.numerator) / k1.denominator) * lr ** q
            * mpmath.expj(mpmath.mpf(k2.numerator) / k2.denominator * theta)
            for (k1, q, k2), c in series.items())
    import cmath
    lr = math.log(r)
    return sum((c(t) * r ** float(k1) * lr ** q * cmath.exp(1j * float(k2) * theta)
                for (k1, q, k2), c in series.items()), 0j)


def fd_scaled_laplacian(series: PhgSeries, r, theta=0.7, t=0.3, dps: int = 80):
    """``r^2`` times the flat cylindrical Laplacian, by numerical differentiation
    at extended precision (independent of the exact calculus)."""
    with mpmath.workdps(dps):
        r, theta, t = mpmath.mpf(r), mpmath.mpf(theta), mpmath.mpf(t)
        f = lambda rr, th, tt: evaluate(series, rr, th, tt)
        d_rr = mpmath.diff(lambda x: f(x, theta, t), r, 2)
        d_r = mpmath.diff(lambda x: f(x, theta, t), r, 1)
        d_th = mpmath.diff(lambda x: f(r, x, t), theta, 2)
        d_tt = mpmath.diff(lambda x: f(r, theta, x), t, 2)
        return r * r * d_rr + r * d_r + d_th + r * r * d_tt


def fd_residual_slope(series: PhgSeries, radii, theta=0.7, t=0.3, dps: int = 80) -> float:
    """log2-slope of ``|r^2 Laplacian u|`` against r over the given radii."""
    import numpy as np
    xs, ys = [], []
    for r in radii:
        val = abs(fd_scaled_laplacian(series, r, theta, t, dps))
        xs.append(math.log2(r))
        ys.append(float(mpmath.log(val, 2)))
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)
