"""Truncated Fourier series on the circle with graded weighted-l1 norms.

An element is a finite sum ``sum_n c_n exp(i n t)`` where the frequencies
``n`` lie either on the integer lattice or on the half-integer lattice.  The
half-integer lattice models sections with monodromy -1: such a function is
anti-periodic in ``t`` with period ``2 pi`` and is sampled on the lift
``t in [0, 4 pi)``.

Coefficients are stored densely on the symmetric index range
``n_j = j - (L - 1) / 2`` so the parity of the array length fixes the lattice
(odd length: integers, even length: half-integers).  Arrays are either
``complex128`` or ``object`` arrays of :class:`mpmath.mpc`; the latter is the
extended-precision backend used when residuals fall far below 1e-300.

The graded norm is ``|v|_s = sum_n |c_n| (1 + |n|)^s``.  It is an algebra
norm, and the sharp spectral cutoff ``S_theta`` satisfies both smoothing
inequalities with constant 1.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from functools import lru_cache
from numbers import Number
from typing import Callable, Mapping

import mpmath
import numpy as np

from .errors import (
    InvalidOperandsError,
    InvalidParameterError,
    NearSingularInverseError,
    PreconditionError,
)

FORMAT_NAME = "nmk.graded-element"
FORMAT_VERSION = 1


def _is_mp(arr: np.ndarray) -> bool:
    return arr.dtype == object


def _to_mp_array(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if _is_mp(arr):
        return np.array([_as_mpc(x) for x in arr], dtype=object)
    return np.array([mpmath.mpc(complex(x)) for x in arr], dtype=object)


def _trim(coef: np.ndarray) -> np.ndarray:
    lo, hi = 0, len(coef)
    while hi - lo > 2 and coef[lo] == 0 and coef[hi - 1] == 0:
        lo += 1
        hi -= 1
    return coef[lo:hi]


def _pad(coef: np.ndarray, length: int) -> np.ndarray:
    extra = (length - len(coef)) // 2
    if extra == 0:
        return coef
    zero = mpmath.mpc(0) if _is_mp(coef) else 0j
    pad = np.array([zero] * extra, dtype=coef.dtype)
    return np.concatenate([pad, coef, pad])


class GradedElement:
    """Immutable truncated Fourier series; see the module docstring."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        arr = np.asarray(coef)
        if not _is_mp(arr):
            arr = arr.astype(complex)
        if arr.ndim != 1 or len(arr) == 0:
            raise InvalidOperandsError("coefficient array must be 1-d and non-empty")
        arr = _trim(arr.copy())
        arr.setflags(write=False)
        object.__setattr__(self, "coef", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GradedElement is immutable")

    def __reduce__(self):
        return (GradedElement, (np.array(self.coef),))

    # -- construction -------------------------------------------------
    @classmethod
    def zero(cls, half: bool = False) -> "GradedElement":
        return cls(np.zeros(2 if half else 1, dtype=complex))

    @classmethod
    def constant(cls, value) -> "GradedElement":
        if isinstance(value, (mpmath.mpf, mpmath.mpc)):
            return cls(np.array([mpmath.mpc(value)], dtype=object))
        return cls(np.array([complex(value)]))

    @classmethod
    def from_modes(cls, modes: Mapping, half: bool | None = None) -> "GradedElement":
        """Build from ``{frequency: coefficient}``; frequencies may be ints,
        Fractions or floats on a common lattice."""
        freqs = {Fraction(n).limit_denominator(2): c for n, c in modes.items()}
        parities = {(2 * f).numerator % 2 for f in freqs}
        if len(parities) > 1:
            raise InvalidOperandsError("frequencies mix integer and half-integer lattices")
        if any((2 * f).denominator != 1 for f in freqs):
            raise InvalidOperandsError("frequencies must be integers or half-integers")
        is_half = bool(parities.pop()) if parities else bool(half)
        if half is not None and half != is_half:
            raise InvalidOperandsError("frequencies do not lie on the requested lattice")
        bw = max((abs(f) for f in freqs), default=Fraction(1, 2) if is_half else 0)
        length = int(2 * bw) + 1
        use_mp = any(isinstance(c, (mpmath.mpf, mpmath.mpc)) for c in freqs.values())
        if use_mp:
            coef = np.array([mpmath.mpc(0)] * length, dtype=object)
        else:
            coef = np.zeros(length, dtype=complex)
        for f, c in freqs.items():
            coef[int(f + Fraction(length - 1, 2))] = _as_mpc(c) if use_mp else complex(c)
        return cls(coef)

    @classmethod
    def from_function(cls, func: Callable, bandwidth, half: bool = False,
                      oversample: int = 4) -> "GradedElement":
        """Project a callable onto the modes with ``|n| <= bandwidth``."""
        length = _length_for(bandwidth, half)
        m = _grid_size(length, oversample)
        values = np.asarray(func(grid_points(m, half)))
        return _project(values, length, m)

    # -- structure ----------------------------------------------------
    @property
    def half(self) -> bool:
        return len(self.coef) % 2 == 0

    @property
    def is_mp(self) -> bool:
        return _is_mp(self.coef)

    def frequencies(self) -> np.ndarray:
        n = len(self.coef)
        return np.arange(n) - (n - 1) / 2.0

    @property
    def bandwidth(self) -> float:
        nz = [abs(f) for f, c in zip(self.frequencies(), self.coef) if c != 0]
        return max(nz, default=0.0)

    def modes(self) -> dict:
        """Nonzero modes as ``{Fraction: coefficient}``."""
        return {Fraction(f).limit_denominator(2): c
                for f, c in zip(self.frequencies(), self.coef) if c != 0}

    def coefficient(self, n):
        idx = Fraction(n) + Fraction(len(self.coef) - 1, 2)
        if idx.denominator != 1 or not 0 <= idx < len(self.coef):
            return 0
        return self.coef[int(idx)]

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coef)

    def is_real(self, tol: float = 0.0) -> bool:
        flipped = self.coef[::-1]
        diff = [abs(a - (b.conjugate() if hasattr(b, "conjugate") else b))
                for a, b in zip(self.coef, flipped)]
        return max(diff) <= tol

    def to_mp(self) -> "GradedElement":
        return GradedElement(_to_mp_array(self.coef))

    def to_float(self) -> "GradedElement":
        if not self.is_mp:
            return self
        return GradedElement(np.array([complex(c) for c in self.coef]))

    # -- arithmetic ---------------------------------------------------
    def _aligned(self, other: "GradedElement"):
        if self.half != other.half:
            raise InvalidOperandsError("lattice mismatch: integer vs half-integer modes")
        a, b = self.coef, other.coef
        if _is_mp(a) != _is_mp(b):
            a, b = (a, _to_mp_array(b)) if _is_mp(a) else (_to_mp_array(a), b)
        n = max(len(a), len(b))
        return _pad(a, n), _pad(b, n)

    def __add__(self, other):
        if isinstance(other, Number) or isinstance(other, (mpmath.mpf, mpmath.mpc)):
            other = GradedElement.constant(other)
        a, b = self._aligned(other)
        return GradedElement(a + b)

    __radd__ = __add__

    def __neg__(self):
        return GradedElement(-self.coef)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, GradedElement):
            return pointwise_mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, GradedElement):
            return NotImplemented
        return len(self.coef) == len(other.coef) and all(
            a == b for a, b in zip(self.coef, other.coef))

    __hash__ = None

    def __repr__(self):
        terms = ", ".join(f"{_fmt_freq(f)}: {c}" for f, c in self.modes().items())
        return f"GradedElement({{{terms}}}, half={self.half})"

    # -- evaluation ---------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        f = self.frequencies()
        vals = np.exp(1j * np.multiply.outer(t, f)) @ np.array([complex(c) for c in self.coef])
        return vals

    def samples(self, m: int) -> np.ndarray:
        """Values on the uniform grid of :func:`grid_points`."""
        return _grid_matrix(len(self.coef), m, self.is_mp) @ self.coef


def _fmt_freq(f: Fraction) -> str:
    return str(f) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def _length_for(bandwidth, half: bool) -> int:
    bw = Fraction(bandwidth).limit_denominator(2)
    if half:
        if bw.denominator == 1:
            bw -= Fraction(1, 2)
        bw = max(bw, Fraction(1, 2))
    else:
        bw = Fraction(math.floor(bw))
    return int(2 * bw) + 1


def _qmax(length: int) -> int:
    """Largest effective integer frequency on the sampling grid."""
    return length - 1 if length % 2 == 0 else (length - 1) // 2


def _grid_size(length: int, oversample: int = 4) -> int:
    return max(16, oversample * (2 * _qmax(length) + 1))


def grid_points(m: int, half: bool) -> np.ndarray:
    period = 4 * math.pi if half else 2 * math.pi
    return period * np.arange(m) / m


def _effective_q(length: int) -> np.ndarray:
    # integer lattice: q = n on [0, 2pi); half lattice: q = 2n on [0, 4pi)
    n2 = 2 * np.arange(length) - (length - 1)
    return n2 if length % 2 == 0 else n2 // 2


@lru_cache(maxsize=16)
def _grid_matrix_cached(length: int, m: int, mp_dps: int | None):
    q = _effective_q(length)
    # entries are m-th roots of unity; index a single table of them
    idx = np.mod(np.multiply.outer(np.arange(m), q), m)
    if mp_dps is None:
        roots = np.exp(2j * np.pi * np.arange(m) / m)
    else:
        roots = np.array([mpmath.expjpi(mpmath.mpf(2 * j) / m) for j in range(m)], dtype=object)
    return roots[idx]


def _grid_matrix(length: int, m: int, use_mp: bool) -> np.ndarray:
    return _grid_matrix_cached(length, m, mpmath.mp.dps if use_mp else None)


def _project(values: np.ndarray, length: int, m: int) -> GradedElement:
    use_mp = _is_mp(np.asarray(values))
    mat = _grid_matrix(length, m, use_mp)
    if use_mp:
        coef = mat.T.conjugate() @ values
        coef = np.array([c / m for c in coef], dtype=object)
    else:
        coef = mat.conj().T @ values / m
    return GradedElement(coef)


# -- module-level operations ------------------------------------------

def norm(v: GradedElement, s: float):
    """Weighted-l1 graded norm ``sum |c_n| (1 + |n|)^s``."""
    if s < 0:
        raise InvalidParameterError("graded norms are indexed by s >= 0")
    f = np.abs(v.frequencies())
    if v.is_mp:
        s_mp = mpmath.mpf(s)
        return mpmath.fsum(abs(c) * (1 + mpmath.mpf(x)) ** s_mp
                           for c, x in zip(v.coef, f) if c != 0)
    with np.errstate(over="ignore"):
        return float(np.sum(np.abs(v.coef) * (1.0 + f) ** s))


def smooth(v: GradedElement, theta: float) -> GradedElement:
    """Sharp spectral cutoff: keep the modes with ``1 + |n| <= theta``."""
    if not theta > 1:
        raise InvalidParameterError(f"smoothing parameter must exceed 1, got {theta}")
    keep = (1.0 + np.abs(v.frequencies())) <= theta
    if keep.all():
        return v
    coef = v.coef.copy()
    zero = mpmath.mpc(0) if v.is_mp else 0j
    coef[~keep] = zero
    return GradedElement(coef)


def add(u: GradedElement, v: GradedElement) -> GradedElement:
    return u + v


def scale(u: GradedElement, c) -> GradedElement:
    if u.is_mp or isinstance(c, (mpmath.mpf, mpmath.mpc)):
        c = mpmath.mpc(c)
        coef = u.coef if u.is_mp else _to_mp_array(u.coef)
        return GradedElement(np.array([c * x for x in coef], dtype=object))
    return GradedElement(u.coef * complex(c))


def pointwise_mul(u: GradedElement, v: GradedElement) -> GradedElement:
    """Product of two series (coefficient convolution).

    Lattices combine as integer*integer -> integer, half*half -> integer and
    integer*half -> half; the centered layout makes this automatic.
    """
    a, b = u.coef, v.coef
    if _is_mp(a) != _is_mp(b):
        a = a if _is_mp(a) else _to_mp_array(a)
        b = b if _is_mp(b) else _to_mp_array(b)
    return GradedElement(np.convolve(a, b))


def sup_norm(v: GradedElement, m: int | None = None):
    """C^0 norm estimated on an oversampled grid."""
    m = m or _grid_size(len(v.coef))
    vals = v.samples(m)
    return max(abs(x) for x in vals)


def reciprocal(u: GradedElement, bandwidth_out, floor: float):
    """Pointwise inverse projected to ``|n| <= bandwidth_out``.

    ``u`` is sampled on a grid with at least four points per retained mode,
    inverted pointwise and projected back.  Returns ``(inverse, residual)``
    where ``residual = max_j |u(t_j) * inverse(t_j) - 1|``.
    """
    if not floor > 0:
        raise InvalidParameterError("floor must be positive")
    if len(u.coef) == 1:
        # constants invert exactly; no grid round-off in the other modes
        c = u.coef[0]
        if abs(c) < floor:
            raise NearSingularInverseError(f"|u| = {mpmath.nstr(abs(c), 6)} is below the floor {floor}")
        inv = GradedElement(np.array([1 / c], dtype=u.coef.dtype))
        return inv, abs(c * inv.coef[0] - 1)
    length = _length_for(bandwidth_out, u.half)
    m = max(_grid_size(length), _grid_size(len(u.coef)))
    vals = u.samples(m)
    low = min(abs(x) for x in vals)
    if low < floor:
        raise NearSingularInverseError(
            f"min |u| on the grid is {mpmath.nstr(low, 6)}, below the floor {floor}")
    if u.is_mp:
        inv_vals = np.array([1 / x for x in vals], dtype=object)
    else:
        inv_vals = 1.0 / vals
    inv = _project(inv_vals, length, m)
    back = _grid_matrix(len(inv.coef), m, inv.is_mp) @ inv.coef
    residual = max(abs(x * y - 1) for x, y in zip(vals, back))
    return inv, residual


# -- serialization ----------------------------------------------------

def _as_mpc(x):
    return x if isinstance(x, mpmath.mpc) else mpmath.mpc(x)


def _mp_record(x):
    man, exp = x.man_exp
    if x < 0:
        man = -man
    return [str(man), int(exp)]


def _mp_from_record(rec):
    man = int(rec[0])
    with mpmath.workprec(max(53, abs(man).bit_length() + 1)):
        return mpmath.mpf((man, int(rec[1])))


def _bits(x) -> int:
    return max(53, int(x.man_exp[0]).bit_length() + 1) if x else 53


def to_records(v: GradedElement) -> list:
    """``(n_numerator, n_denominator, re, im)`` for each stored mode."""
    out = []
    for f, c in zip(v.frequencies(), v.coef):
        fr = Fraction(f).limit_denominator(2)
        if v.is_mp:
            c = _as_mpc(c)
            out.append([fr.numerator, fr.denominator, _mp_record(c.real), _mp_record(c.imag)])
        else:
            out.append([fr.numerator, fr.denominator, float(c.real), float(c.imag)])
    return out


def dumps(v: GradedElement) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "lattice": "half-integer" if v.half else "integer",
        "precision": "mp" if v.is_mp else "float64",
        "modes": to_records(v),
    }
    return json.dumps(doc)


def loads(text: str) -> GradedElement:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise PreconditionError("not a version-1 graded element document")
    mp = doc["precision"] == "mp"
    half = doc["lattice"] == "half-integer"
    modes = {}
    for num, den, re, im in doc["modes"]:
        if den not in (1, 2):
            raise PreconditionError("mode denominators must be 1 or 2")
        if mp:
            re_, im_ = _mp_from_record(re), _mp_from_record(im)
            with mpmath.workprec(max(re_.context.prec, _bits(re_), _bits(im_))):
                modes[Fraction(num, den)] = mpmath.mpc(re_, im_)
        else:
            modes[Fraction(num, den)] = complex(re, im)
    if not modes:
        return GradedElement.zero(half)
    el = GradedElement.from_modes(modes, half=half)
    if mp and not el.is_mp:
        el = el.to_mp()
    return el
