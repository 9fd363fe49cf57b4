"""Eigenfunction candidates for ``-div(A grad u) = kappa u`` outside the unit ball.

* closed-form radial Helmholtz solutions ``r^{-nu} J_nu(sqrt(kappa) r)``,
  ``nu = (n - 2) / 2``,
* the plane-wave superposition over the unit sphere, which reproduces the
  same function up to a constant fixed by matching at one radius,
* radial solutions for radially structured coefficients obtained with an
  adaptive Dormand-Prince 5(4) integrator.

Radial data live in :class:`RadialProfile` (grid values and derivatives
with cubic Hermite interpolation); anything that can be evaluated at points
is a :class:`ScalarField`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from ._numerics import loglog_fit, pairwise_sum
from .bessel import bessel_j
from .coefficient_fields import CoefficientField
from .quadrature import SphereRule


class EvaluationError(ValueError):
    """A field was evaluated outside its radial domain."""


class IntegrationError(RuntimeError):
    """The adaptive integrator could not continue."""

    def __init__(self, message: str, last_radius: float):
        super().__init__(f"{message} (last accepted radius {last_radius:.12g})")
        self.last_radius = last_radius


# ---------------------------------------------------------------------------
# radial profiles


@dataclass(frozen=True)
class RadialProfile:
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    provenance: str
    meta: dict = field(default_factory=dict)
    _spline: CubicHermiteSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) <= 0):
            raise ValueError("profile grid must be strictly increasing with >= 2 nodes")
        if r[0] < 0:
            raise ValueError("profile grid must start at r >= 0")
        for name in ("r", "u", "du"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.r, self.u, self.du))

    @property
    def r_min(self) -> float:
        return float(self.r[0])

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, r):
        """Interpolated ``(phi(r), phi'(r))``."""
        r = np.asarray(r, dtype=float)
        slack = 1e-12 * self.r_max  # unit-sphere nodes carry norm 1 +- ulp
        if np.any(r < self.r_min - slack) or np.any(r > self.r_max + slack):
            raise EvaluationError(
                f"radius outside profile domain [{self.r_min:.6g}, {self.r_max:.6g}]"
            )
        r = np.clip(r, self.r_min, self.r_max)
        return self._spline(r), self._spline(r, 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps({"provenance": self.provenance, **self.meta}, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "u", "du_dr"])
        for row in zip(self.r, self.u, self.du):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RadialProfile":
        lines = text.splitlines()
        header = json.loads(lines[0][1:].strip())
        rows = list(csv.reader(lines[2:]))
        data = np.array([[float(v) for v in row] for row in rows])
        provenance = header.pop("provenance")
        return cls(data[:, 0], data[:, 1], data[:, 2], provenance, header)


# ---------------------------------------------------------------------------
# scalar fields


@dataclass(frozen=True)
class ScalarField:
    """A function on a shell ``r_min <= |x| <= r_max`` with its derivatives.

    ``value``, ``gradient`` and ``hessian`` take points of shape ``(..., n)``.
    ``radial`` is set for spherically symmetric fields and maps ``r`` to
    ``(phi, phi')``.
    """

    n: int
    value: Callable
    gradient: Callable
    hessian: Optional[Callable] = None
    r_min: float = 1.0
    r_max: float = math.inf
    radial: Optional[Callable] = None
    profile: Optional[RadialProfile] = None
    name: str = ""

    def scaled(self, c: float) -> "ScalarField":
        hess = None if self.hessian is None else (lambda x: c * self.hessian(x))
        rad = None
        if self.radial is not None:
            def rad(r):
                p, dp = self.radial(r)
                return c * p, c * dp
        return replace(
            self,
            value=lambda x: c * self.value(x),
            gradient=lambda x: c * self.gradient(x),
            hessian=hess,
            radial=rad,
            name=f"{c:g}*{self.name}",
        )

    def hessian_or_fd(self, x) -> np.ndarray:
        """Hessian from the analytic hook, else central differences of the
        gradient with step ``1e-5 * max(1, |x|)``."""
        x = np.asarray(x, dtype=float)
        if self.hessian is not None:
            return self.hessian(x)
        n = x.shape[-1]
        h = 1e-5 * np.maximum(1.0, np.linalg.norm(x, axis=-1))
        H = np.empty(x.shape + (n,))
        for k in range(n):
            step = np.zeros(x.shape)
            step[..., k] = h
            H[..., :, k] = (self.gradient(x + step) - self.gradient(x - step)) / (2.0 * h[..., None])
        return 0.5 * (H + np.swapaxes(H, -1, -2))


def eval_field(f: ScalarField, x):
    """``(u(x), grad u(x))`` with a domain check."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < f.r_min * (1 - 1e-12)) or np.any(r > f.r_max * (1 + 1e-12)):
        raise EvaluationError(
            f"|x| outside the field's domain [{f.r_min:.6g}, {f.r_max:.6g}]"
        )
    return f.value(x), f.gradient(x)


def radial_field(
    n: int,
    phi: Callable,
    *,
    d2phi: Optional[Callable] = None,
    r_min: float = 1.0,
    r_max: float = math.inf,
    profile: Optional[RadialProfile] = None,
    name: str = "",
) -> ScalarField:
    """Field ``u(x) = phi(|x|)`` from ``phi: r -> (phi, phi')``.

    With ``d2phi`` the Hessian is ``phi'' xh xh^T + (phi'/r)(I - xh xh^T)``.
    """

    def value(x):
        return phi(np.linalg.norm(x, axis=-1))[0]

    def gradient(x):
        r = np.linalg.norm(x, axis=-1)
        return (phi(r)[1] / r)[..., None] * x

    hessian = None
    if d2phi is not None:
        def hessian(x):
            r = np.linalg.norm(x, axis=-1)
            _, dp = phi(r)
            d2 = d2phi(r)
            xh = x / r[..., None]
            P = xh[..., :, None] * xh[..., None, :]
            return d2[..., None, None] * P + (dp / r)[..., None, None] * (np.eye(x.shape[-1]) - P)

    return ScalarField(n, value, gradient, hessian, r_min, r_max, phi, profile, name)


def profile_field(n: int, profile: RadialProfile, d2phi: Optional[Callable] = None) -> ScalarField:
    return radial_field(
        n,
        profile,
        d2phi=d2phi,
        r_min=profile.r_min,
        r_max=profile.r_max,
        profile=profile,
        name=profile.provenance,
    )


# ---------------------------------------------------------------------------
# constant-coefficient Helmholtz solutions


def helmholtz_phi(n: int, kappa: float, r, scale: float = 1.0):
    """``phi(r) = scale * r^{-nu} J_nu(k r)`` and ``phi'(r) = -k scale r^{-nu} J_{nu+1}(k r)``,
    ``nu = (n-2)/2``, ``k = sqrt(kappa)``; ``r = 0`` uses the series limit."""
    nu = 0.5 * (n - 2)
    k = math.sqrt(kappa)
    r = np.asarray(r, dtype=float)
    safe = np.where(r > 0, r, 1.0)
    jn = np.asarray(bessel_j(nu, k * r))
    jn1 = np.asarray(bessel_j(nu + 1.0, k * r))
    phi = np.where(r > 0, safe ** (-nu) * jn, (0.5 * k) ** nu / math.gamma(nu + 1.0))
    dphi = np.where(r > 0, -k * safe ** (-nu) * jn1, 0.0)
    return scale * phi, scale * dphi


def helmholtz_radial(
    n: int,
    kappa: float,
    *,
    r_min: float = 1.0,
    r_max: float = 1000.0,
    spacing: Optional[float] = None,
) -> RadialProfile:
    """Closed-form profile of ``r^{-(n-2)/2} J_{(n-2)/2}(sqrt(kappa) r)`` (c = 1).

    The default node spacing ``0.02 / sqrt(kappa)`` keeps the cubic Hermite
    interpolation error below 1e-9 relative to the amplitude.
    """
    if n < 2 or kappa <= 0:
        raise ValueError("need n >= 2 and kappa > 0")
    h = spacing if spacing is not None else 0.02 / math.sqrt(kappa)
    m = max(2, math.ceil((r_max - r_min) / h) + 1)
    r = np.linspace(r_min, r_max, m)
    phi, dphi = helmholtz_phi(n, kappa, r)
    return RadialProfile(r, phi, dphi, "closed-form", {"n": n, "kappa": kappa})


def helmholtz_field(n: int, kappa: float = 1.0, scale: float = 1.0, r_min: float = 1.0) -> ScalarField:
    """Closed-form radial Helmholtz solution as a field (exact derivatives)."""

    def phi(r):
        return helmholtz_phi(n, kappa, r, scale)

    def d2(r):
        p, dp = phi(r)
        return -(n - 1) / r * dp - kappa * p

    return radial_field(n, phi, d2phi=d2, r_min=r_min, name=f"bessel(n={n},kappa={kappa:g})")


def radial_residual(n: int, kappa: float, phi: Callable, r, h: float = 1e-3):
    """``phi'' + (n-1)/r phi' + kappa phi`` with ``phi''`` from a five-point
    difference of the supplied derivative, so the check is not circular."""
    r = np.asarray(r, dtype=float)
    d = lambda s: phi(s)[1]  # noqa: E731
    d2 = (-d(r + 2 * h) + 8 * d(r + h) - 8 * d(r - h) + d(r - 2 * h)) / (12 * h)
    p, dp = phi(r)
    return d2 + (n - 1) / r * dp + kappa * p


def plane_wave_superposition(n: int, kappa: float, x, rule: SphereRule) -> complex:
    """Quadrature value of ``int_{S^{n-1}} exp(i sqrt(kappa) <x, omega>) dsigma``."""
    if rule.n != n:
        raise ValueError("rule dimension does not match n")
    if rule.exactness_degree < 20:
        raise ValueError("plane-wave superposition needs a rule of degree >= 20")
    phase = math.sqrt(kappa) * (rule.nodes @ np.asarray(x, dtype=float))
    return complex(pairwise_sum(rule.weights * np.exp(1j * phase)))


def plane_wave_constant(n: int, kappa: float, rule: SphereRule, r_match: float = 1.0, direction=None) -> float:
    """``c(n, kappa)`` from matching the superposition to ``r^{-nu} J_nu`` at one radius."""
    e = np.zeros(n)
    e[-1] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    pw = plane_wave_superposition(n, kappa, r_match * e, rule)
    return pw.real / float(helmholtz_phi(n, kappa, r_match)[0])


# ---------------------------------------------------------------------------
# ODE integration for radial coefficients

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


def dopri45(f, t0: float, y0, t1: float, tol: float, max_step: float, h0: Optional[float] = None):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1``.

    ``f`` maps a float and a tuple of floats to a tuple of floats.  The local
    error estimate of each accepted step satisfies
    ``|y5 - y4|_i <= tol * (1 + |y_i|)``.  Returns accepted ``(t, y, f)``
    as arrays.
    """
    y = tuple(float(v) for v in y0)
    dim = len(y)
    t = float(t0)
    k1 = tuple(f(t, y))
    h = min(max_step, h0 if h0 is not None else 1e-3)
    ts, ys, fs = [t], [y], [k1]
    while t < t1:
        h = min(h, t1 - t)
        if h < 1e-12 * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", t)
        k = [k1]
        for s in range(1, 7):
            a = _A[s]
            stage = tuple(
                y[i] + h * sum(a[j] * k[j][i] for j in range(s)) for i in range(dim)
            )
            k.append(tuple(f(t + _C[s] * h, stage)))
        # the 7th stage is evaluated at the 5th-order solution (FSAL)
        y_new = stage
        err = 0.0
        for i in range(dim):
            e_i = h * sum(_E[j] * k[j][i] for j in range(7))
            sc = tol * (1.0 + max(abs(y[i]), abs(y_new[i])))
            err = max(err, abs(e_i) / sc)
        if err <= 1.0:
            t = t + h
            y = y_new
            k1 = k[6]
            ts.append(t)
            ys.append(y)
            fs.append(k1)
        factor = 0.9 * err ** (-0.2) if err > 0 else 5.0
        h = min(max_step, h * min(5.0, max(0.2, factor)))
    return np.array(ts), np.array(ys), np.array(fs)


def solve_radial_eigen(
    fld: CoefficientField,
    n: int,
    r_span=(1.0, 1000.0),
    init=(1.0, 0.0),
    tol: float = 1e-10,
    *,
    kappa: float = 1.0,
    max_step: Optional[float] = None,
) -> RadialProfile:
    """Radial solution of ``-div(a(r) grad u) = kappa u``.

    For ``A = a(r) I`` (and for ``A = I + b(r) x x^T/|x|^2``, which acts on
    radial functions as ``a = 1 + b``) the equation reduces to
    ``a (phi'' + (n-1)/r phi') + a' phi' = -kappa phi``.
    The step is capped at ``max_step`` (default ``0.05 / sqrt(kappa)``) so that
    cubic Hermite interpolation between accepted steps stays accurate.
    """
    if fld.radial_coefficient is None:
        raise ValueError(f"field kind {fld.kind!r} has no radial reduction")
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError(f"tol must lie in [1e-12, 1e-6], got {tol}")
    r_a, r_b = map(float, r_span)
    if not 1.0 <= r_a < r_b:
        raise ValueError(f"need 1 <= r_a < r_b, got {r_span}")
    coef = fld.radial_coefficient

    def rhs(r, y):
        a, da = coef(r)
        phi, dphi = y
        return dphi, -(kappa * phi + da * dphi) / a - (n - 1) / r * dphi

    step = max_step if max_step is not None else 0.05 / math.sqrt(kappa)
    rs, ys, fs = dopri45(rhs, r_a, init, r_b, tol, step)
    meta = {"n": n, "kappa": kappa, "field": fld.spec.to_record() if fld.spec else fld.kind,
            "tol": tol, "init": list(map(float, init))}
    return RadialProfile(rs, ys[:, 0], ys[:, 1], "ode-integrated", meta)


def ode_field(fld: CoefficientField, n: int, profile: RadialProfile, kappa: float = 1.0) -> ScalarField:
    """Field for an ODE profile; the second derivative comes from the ODE."""
    coef = fld.radial_coefficient

    def d2(r):
        a, da = coef(r)
        p, dp = profile(r)
        return -(kappa * p + da * dp) / a - (n - 1) / r * dp

    return profile_field(n, profile, d2)


def envelope_slope(profile: RadialProfile, r_lo: float, r_hi: float, spacing: float = 0.01):
    """Log-log slope of the local maxima of ``|phi|`` on ``[r_lo, r_hi]``."""
    r = np.arange(r_lo, r_hi, spacing)
    a = np.abs(profile(r)[0])
    peak = (a[1:-1] >= a[:-2]) & (a[1:-1] > a[2:])
    return loglog_fit(r[1:-1][peak], a[1:-1][peak])
