"""Pointwise tensor algebra for metric variations, and extraction of the
leading A/B coefficients from sampled potentials near the edge.

Tensors are numpy arrays in a coordinate frame where the metric is ``g``.
Covectors are index-down; ``omega_sharp = g^{-1} omega``.

The potential is sampled on the double-cover lift ``theta in [0, 4 pi)``
where the half-integer modes ``exp(i k theta)``, ``k in 1/2 + Z``, are
honest Fourier modes.  Near the edge

    u = Re(A z^{1/2} + B z^{3/2}) + higher order,   z = r exp(i theta).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateDirectionError,
    DimensionExcludedError,
    InsufficientRadialSpanError,
    InvalidParameterError,
    MonodromyError,
    PreconditionError,
)

MONODROMY_TOL = 1e-12


# -- tensors -------------------------------------------------------------

@dataclass(frozen=True)
class PointFrame:
    g: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        n = g.shape[0]
        if g.shape != (n, n) or not np.allclose(g, g.T, rtol=0, atol=1e-14 * max(1.0, np.abs(g).max())):
            raise InvalidParameterError("metric must be a symmetric square matrix")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise InvalidParameterError("metric must be positive definite") from None
        for name in ("omega", "alpha"):
            if np.asarray(getattr(self, name)).shape != (n,):
                raise InvalidParameterError(f"{name} must have length {n}")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))

    @property
    def n(self) -> int:
        return self.g.shape[0]


def trace_g(tensor: np.ndarray, g: np.ndarray) -> float:
    """``g^{ij} T_ij``."""
    return float(np.trace(np.linalg.solve(g, tensor)))


def raise_index(covector: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.linalg.solve(g, covector)


def hat_T_from_alpha(frame: PointFrame) -> np.ndarray:
    """Trace-adjusted symmetric tensor with ``hat_T(omega_sharp, .) = alpha``."""
    g, w, a = frame.g, frame.omega, frame.alpha
    w_sharp = raise_index(w, g)
    w2 = float(w @ w_sharp)
    if not np.any(w) or not w2 > 0:
        raise DegenerateDirectionError("omega vanishes at this point")
    t = (np.outer(w, a) + np.outer(a, w)) / w2
    return t - 0.5 * trace_g(t, g) * g


def g_variation_from_hat_T(hat_t: np.ndarray, g: np.ndarray, n: int | None = None) -> np.ndarray:
    """Metric variation ``h = hat_T + Tr_g(hat_T) g / (2 - n)``."""
    n = g.shape[0] if n is None else n
    if n != g.shape[0]:
        raise InvalidParameterError(f"dimension {n} does not match the metric")
    if n == 2:
        raise DimensionExcludedError("the metric variation is not determined in dimension 2")
    return hat_t + trace_g(hat_t, g) / (2 - n) * g


def hat_T_from_g_variation(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``hat_T = h - (1/2) Tr_g(h) g``."""
    return h - 0.5 * trace_g(h, g) * g


def random_frame(rng: np.random.Generator, n: int) -> PointFrame:
    m = rng.normal(size=(n, n))
    g = m @ m.T + n * np.eye(n)
    omega = rng.normal(size=n)
    while not np.any(omega):
        omega = rng.normal(size=n)
    return PointFrame(g, omega, rng.normal(size=n))


# -- sampled potentials --------------------------------------------------

@dataclass(frozen=True)
class AnnulusSamples:
    """``values[k, i, j] = u(radii[i], angles[j], t_slices[k])`` on the lift."""

    radii: np.ndarray
    angles: np.ndarray
    t_slices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("radii", "angles", "t_slices", "values"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        shape = (len(self.t_slices), len(self.radii), len(self.angles))
        if self.values.shape != shape:
            raise PreconditionError(f"values have shape {self.values.shape}, expected {shape}")

    def monodromy_defect(self) -> float:
        """``max |u(theta + 2 pi) + u(theta)|`` over the grid."""
        m = len(self.angles)
        if m % 2:
            return math.inf
        half = m // 2
        if not np.allclose(self.angles[half:] - self.angles[:half], 2 * np.pi, atol=1e-12):
            return math.inf
        return float(np.max(np.abs(self.values[..., half:] + self.values[..., :half]), initial=0.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("r", "theta", "t", "value"))
        for k, t in enumerate(self.t_slices):
            for i, r in enumerate(self.radii):
                for j, th in enumerate(self.angles):
                    w.writerow((repr(float(r)), repr(float(th)), repr(float(t)),
                                repr(float(self.values[k, i, j]))))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AnnulusSamples":
        reader = csv.reader(io.StringIO(text))
        header = [h.strip() for h in next(reader)]
        if header != ["r", "theta", "t", "value"]:
            raise PreconditionError(f"expected header r,theta,t,value; got {header}")
        rows = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
        if rows.size == 0:
            raise PreconditionError("no samples")
        radii, ri = np.unique(rows[:, 0], return_inverse=True)
        angles, ai = np.unique(rows[:, 1], return_inverse=True)
        ts, ti = np.unique(rows[:, 2], return_inverse=True)
        if len(rows) != len(radii) * len(angles) * len(ts):
            raise PreconditionError("samples do not form a full (r, theta, t) grid")
        values = np.full((len(ts), len(radii), len(angles)), np.nan)
        values[ti, ri, ai] = rows[:, 3]
        if np.isnan(values).any():
            raise PreconditionError("samples do not form a full (r, theta, t) grid")
        return cls(radii, angles, ts, values)


def lift_angles(n_theta: int) -> np.ndarray:
    return 4 * np.pi * np.arange(n_theta) / n_theta


def sample_annulus(func: Callable, radii: Sequence[float], n_theta: int,
                   t_slices: Sequence[float]) -> AnnulusSamples:
    """Evaluate ``func(r, theta, t)`` (broadcasting) on the lifted grid."""
    radii = np.asarray(radii, dtype=float)
    angles = lift_angles(n_theta)
    ts = np.asarray(t_slices, dtype=float)
    t, r, th = np.meshgrid(ts, radii, angles, indexing="ij")
    values = np.real(np.asarray(func(r, th, t), dtype=complex)) * np.ones_like(r)
    return AnnulusSamples(radii, angles, ts, values)


def z_power(r, theta, k):
    """``z^k = r^k exp(i k theta)`` on the lift (the branch is fixed by theta)."""
    return np.power(r, k) * np.exp(1j * k * np.asarray(theta))


@dataclass(frozen=True)
class LeadingCoefficients:
    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    fit_residual: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "re_A", "im_A", "re_B", "im_B", "residual"))
        for t, a, b, res in zip(self.t, self.A, self.B, self.fit_residual):
            w.writerow(tuple(repr(float(x)) for x in (t, a.real, a.imag, b.real, b.imag, res)))
        return buf.getvalue()


def mode_amplitudes(samples: AnnulusSamples, k: float) -> np.ndarray:
    """``(2/M) sum_j u(r, theta_j) exp(-i k theta_j)`` per slice and radius,
    i.e. the coefficient ``c`` of ``Re(c exp(i k theta))``."""
    m = len(samples.angles)
    phase = np.exp(-1j * k * samples.angles)
    return 2.0 / m * samples.values @ phase


def _power_fit(amps: np.ndarray, radii: np.ndarray, power: float):
    w = radii ** power
    coef = amps @ w / (w @ w)
    misfit = amps - np.outer(coef, w)
    return coef, misfit


def extract_AB(samples: AnnulusSamples, check_monodromy: bool = True,
               min_span: float = 2.0) -> LeadingCoefficients:
    """Least-squares A, B per t-slice from the ``e^{i theta/2}`` and
    ``e^{3 i theta/2}`` amplitudes fitted against ``r^{1/2}``, ``r^{3/2}``."""
    radii = samples.radii
    if len(radii) < 4:
        raise PreconditionError("need at least four radii")
    if radii.min() <= 0:
        raise PreconditionError("radii must be positive")
    if radii.max() / radii.min() < min_span:
        raise InsufficientRadialSpanError(
            f"radii span a factor {radii.max() / radii.min():.3g} < {min_span}")
    m = len(samples.angles)
    if m < 8 or m % 2:
        raise PreconditionError("angular grid must be even with at least 8 points on [0, 4 pi)")
    if check_monodromy:
        defect = samples.monodromy_defect()
        scale = max(1.0, float(np.abs(samples.values).max(initial=0.0)))
        if not defect <= MONODROMY_TOL * scale:
            raise MonodromyError(f"samples are not anti-periodic under theta -> theta + 2 pi "
                                 f"(defect {defect:.3g})")
    a_amp = mode_amplitudes(samples, 0.5)
    b_amp = mode_amplitudes(samples, 1.5)
    A, a_mis = _power_fit(a_amp, radii, 0.5)
    B, b_mis = _power_fit(b_amp, radii, 1.5)
    num = np.sqrt(np.sum(np.abs(a_mis) ** 2, axis=1) + np.sum(np.abs(b_mis) ** 2, axis=1))
    den = np.sqrt(np.sum(np.abs(a_amp) ** 2, axis=1) + np.sum(np.abs(b_amp) ** 2, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        resid = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return LeadingCoefficients(samples.t_slices.copy(), A, B, resid)


def k_nondegeneracy_check(B_samples: Sequence[complex], k: int = 1, lipschitz: float = 0.0,
                          spacing: float = 0.0) -> tuple[bool, float]:
    """Is the sampled leading coefficient nowhere zero?

    Between grid points ``|B|`` can dip by at most ``lipschitz * spacing / 2``,
    so the verdict is ``min |B| > lipschitz * spacing / 2``.
    """
    if k < 1:
        raise InvalidParameterError("k must be a positive integer")
    vals = np.abs(np.asarray(B_samples, dtype=complex))
    if vals.size == 0:
        raise PreconditionError("no samples")
    low = float(vals.min())
    return bool(low > 0.5 * lipschitz * spacing), low


def fd_gradient(func: Callable, r: float, theta: float, t: float, h: float = 1e-6) -> np.ndarray:
    """Central-difference ``(u_r, u_theta, u_t)``, the components of ``du``."""
    pt = np.array([r, theta, t], dtype=float)
    out = np.empty(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out[i] = (np.real(func(*(pt + e))) - np.real(func(*(pt - e)))) / (2 * h)
    return out
