"""Weighted sphere functionals and their monotonicity scans.

``F(ell, rho)`` is built from ``v = h(r) u`` with the weight
``h(r) = r^ell exp(ell r^-eps)``; ``G(rho)`` from ``w = r^{(n-1)/2} u``.
On the sphere ``|x| = rho`` the factor ``h(rho)^2 exp(rho^{-2 eps})`` is
constant, so ``F`` is evaluated on the normalised representative
``v / h = u`` and the factor is carried separately in log form (it reaches
``rho^100`` for ``ell = 50``).

Scans record ``log|F| - (n-1) log rho`` (resp. ``log G - (n-1-delta) log rho``)
over a radius grid and flag every consecutive decrease larger than the
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._numerics import ordered_map, pairwise_sum
from .coefficient_fields import CoefficientField, mu, z_vector
from .quadrature import SphereRule, sphere_measure, sphere_rule
from .special_solutions import ScalarField

DEFAULT_LADDER = (10.0, 20.0, 50.0)


@dataclass(frozen=True)
class WeightParams:
    ell: float
    eps: float
    delta: float = 0.5
    kappa: float = 1.0

    def __post_init__(self):
        if self.ell < 0 or self.eps <= 0:
            raise ValueError(f"need ell >= 0 and eps > 0, got ell={self.ell}, eps={self.eps}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    @staticmethod
    def s(n: int) -> float:
        return 2.0 - n

    def check_decay(self, alpha: float) -> None:
        if not self.eps < alpha / 2:
            raise ValueError(f"need eps < alpha/2 (eps={self.eps}, alpha={alpha})")

    def to_record(self) -> dict:
        return {"ell": self.ell, "eps": self.eps, "delta": self.delta, "kappa": self.kappa}


def default_eps(alpha: float) -> float:
    return min(0.25, alpha / 4)


class LogValue(NamedTuple):
    log: float
    sign: int

    @property
    def value(self) -> float:
        if self.log >= 700:
            raise OverflowError(f"value exp({self.log:.6g}) is not representable; use the log form")
        return self.sign * math.exp(self.log)


def weight_h(params: WeightParams, r) -> LogValue:
    """``h(r) = r^ell exp(ell r^-eps)`` as (log-magnitude, sign)."""
    r = float(r)
    if r < 1:
        raise ValueError(f"weight is defined for r >= 1, got {r}")
    return LogValue(params.ell * math.log(r) + params.ell * r ** (-params.eps), 1)


# ---------------------------------------------------------------------------
# transforms


@dataclass(frozen=True)
class VTransform:
    """``v = h u`` exposed through its normalised representative ``v / h``."""

    u: ScalarField
    params: WeightParams

    def log_h(self, r):
        p = self.params
        return p.ell * np.log(r) + p.ell * np.asarray(r, dtype=float) ** (-p.eps)

    def z_log_h(self, r):
        """``Zh / h = ell (1 - eps r^-eps)``."""
        p = self.params
        return p.ell * (1.0 - p.eps * np.asarray(r, dtype=float) ** (-p.eps))

    def normalized(self, x):
        return self.u.value(x)

    def gradient(self, x):
        """``grad v / h``."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return (self.z_log_h(r) / r**2 * self.u.value(x))[..., None] * x + self.u.gradient(x)

    def z_derivative(self, fld: CoefficientField, x):
        """``Zv / h = (Zh/h) u + Zu``."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        zu = np.einsum("...i,...i->...", z_vector(fld, x), self.u.gradient(x))
        return self.z_log_h(r) * self.u.value(x) + zu


def transform_v(u: ScalarField, params: WeightParams) -> VTransform:
    return VTransform(u, params)


def transform_w(u: ScalarField, n: int) -> ScalarField:
    """``w = r^{(n-1)/2} u`` with ``grad w = ((n-1)/2) r^{(n-3)/2} u xh + r^{(n-1)/2} grad u``."""
    g = 0.5 * (n - 1)

    def value(x):
        return np.linalg.norm(x, axis=-1) ** g * u.value(x)

    def gradient(x):
        r = np.linalg.norm(x, axis=-1)
        return (g * r ** (g - 2) * u.value(x))[..., None] * x + (r**g)[..., None] * u.gradient(x)

    radial = None
    if u.radial is not None:
        def radial(r):
            p, dp = u.radial(r)
            return r**g * p, g * r ** (g - 1) * p + r**g * dp

    return ScalarField(u.n, value, gradient, None, u.r_min, u.r_max, radial, None, f"w[{u.name}]")


# ---------------------------------------------------------------------------
# F and G on a single sphere

F_TERMS = (
    "2(Zv/r)^2 mu",
    "-<A grad v, grad v>",
    "v^2",
    "l(l-n+2) r^-2 v^2 mu",
    "-(2l^2 eps - l eps(n-2-eps)) r^(-2-eps) v^2 mu",
    "l^2 eps^2 r^(-2-2eps) v^2 mu",
    "-r^-1 v^2 mu",
)

G_TERMS = ("2(Zw/r)^2 mu", "-<A grad w, grad w>", "w^2", "-(n-1)(n-3)/4 w^2 mu / r^2")


@dataclass(frozen=True)
class FunctionalValue:
    """``F = sign * exp(log_magnitude)``.  ``terms`` are the seven surface
    integrals with the constant factor ``h(rho)^2 exp(rho^{-2 eps})`` removed."""

    sign: int
    log_magnitude: float
    terms: dict = field(default_factory=dict)
    log_factor: float = 0.0


def _f_coefficients(params: WeightParams, n: int):
    l, e = params.ell, params.eps
    return (
        l * (l - n + 2),
        -(2 * l * l * e - l * e * (n - 2 - e)),
        l * l * e * e,
    )


def _pack(terms: dict, log_factor: float) -> FunctionalValue:
    total = math.fsum(terms.values())
    if total == 0.0:
        return FunctionalValue(0, -math.inf, terms, log_factor)
    return FunctionalValue(int(math.copysign(1, total)), math.log(abs(total)) + log_factor, terms, log_factor)


def f_functional(
    fld: CoefficientField,
    u: ScalarField,
    params: WeightParams,
    rho: float,
    rule: SphereRule,
) -> FunctionalValue:
    if rho <= 1:
        raise ValueError(f"rho must exceed 1, got {rho}")
    params.check_decay(fld.alpha)
    n = fld.n
    x = rho * rule.nodes
    vt = transform_v(u, params)
    v = vt.normalized(x)
    zv = vt.z_derivative(fld, x)
    gv = vt.gradient(x)
    m = mu(fld, x)
    Agv = np.einsum("...ij,...j->...i", fld.A(x), gv)
    area = rho ** (n - 1)

    def integrate(vals):
        return float(area * pairwise_sum(rule.weights * vals))

    c1, c2, c3 = _f_coefficients(params, n)
    e = params.eps
    v2mu = integrate(v * v * m)
    terms = {
        F_TERMS[0]: 2.0 * integrate((zv / rho) ** 2 * m),
        F_TERMS[1]: -integrate(np.einsum("...i,...i->...", Agv, gv)),
        F_TERMS[2]: integrate(v * v),
        F_TERMS[3]: c1 * rho**-2 * v2mu,
        F_TERMS[4]: c2 * rho ** (-2 - e) * v2mu,
        F_TERMS[5]: c3 * rho ** (-2 - 2 * e) * v2mu,
        F_TERMS[6]: -(rho**-1) * v2mu,
    }
    log_factor = 2.0 * weight_h(params, rho).log + rho ** (-2 * e)
    return _pack(terms, log_factor)


def f_functional_radial(
    fld: CoefficientField, u: ScalarField, params: WeightParams, rho: float, n: Optional[int] = None
) -> FunctionalValue:
    """F for radial ``u`` and a radially structured field, in any dimension.

    On radial functions such fields act as ``a(r) I``: ``mu = a``, ``Z = x``.
    """
    if fld.radial_coefficient is None or u.radial is None:
        raise ValueError("radial reduction needs a radial field and a radial u")
    n = fld.n if n is None else n
    a, _ = fld.radial_coefficient(rho)
    phi, dphi = u.radial(rho)
    vt = transform_v(u, params)
    hv = vt.z_log_h(rho) / rho * phi + dphi  # d/dr (v/h) in the radial direction
    area = sphere_measure(n) * rho ** (n - 1)
    c1, c2, c3 = _f_coefficients(params, n)
    e = params.eps
    terms = {
        F_TERMS[0]: area * 2.0 * hv**2 * a,
        F_TERMS[1]: -area * a * hv**2,
        F_TERMS[2]: area * phi**2,
        F_TERMS[3]: area * c1 * rho**-2 * phi**2 * a,
        F_TERMS[4]: area * c2 * rho ** (-2 - e) * phi**2 * a,
        F_TERMS[5]: area * c3 * rho ** (-2 - 2 * e) * phi**2 * a,
        F_TERMS[6]: -area * rho**-1 * phi**2 * a,
    }
    terms = {k: float(v) for k, v in terms.items()}
    return _pack(terms, 2.0 * weight_h(params, rho).log + rho ** (-2 * e))


def g_terms(fld: CoefficientField, u: ScalarField, n: int, rho: float, rule: SphereRule) -> dict:
    if rho <= 1:
        raise ValueError(f"rho must exceed 1, got {rho}")
    x = rho * rule.nodes
    w = transform_w(u, n)
    wv = w.value(x)
    gw = w.gradient(x)
    zw = np.einsum("...i,...i->...", z_vector(fld, x), gw)
    m = mu(fld, x)
    Agw = np.einsum("...ij,...j->...i", fld.A(x), gw)
    area = rho ** (rule.n - 1)

    def integrate(vals):
        return float(area * pairwise_sum(rule.weights * vals))

    return {
        G_TERMS[0]: 2.0 * integrate((zw / rho) ** 2 * m),
        G_TERMS[1]: -integrate(np.einsum("...i,...i->...", Agw, gw)),
        G_TERMS[2]: integrate(wv * wv),
        G_TERMS[3]: -(n - 1) * (n - 3) / 4.0 * integrate(wv * wv * m) / rho**2,
    }


def g_functional(fld: CoefficientField, u: ScalarField, n: int, rho: float, rule: SphereRule) -> float:
    return math.fsum(g_terms(fld, u, n, rho, rule).values())


def g_functional_radial(fld: CoefficientField, u: ScalarField, n: int, rho: float) -> float:
    if fld.radial_coefficient is None or u.radial is None:
        raise ValueError("radial reduction needs a radial field and a radial u")
    a, _ = fld.radial_coefficient(rho)
    wphi, dw = transform_w(u, n).radial(rho)
    area = sphere_measure(n) * rho ** (n - 1)
    return float(area * (2 * dw**2 * a - a * dw**2 + wphi**2 - (n - 1) * (n - 3) / 4 * wphi**2 * a / rho**2))


# ---------------------------------------------------------------------------
# scans


def log_grid(a: float, b: float, k: int) -> np.ndarray:
    return np.geomspace(a, b, k)


def overlay_linear(grid, spacing: float = math.pi / 4, span: Optional[tuple] = None) -> np.ndarray:
    """Merge a linear grid of the given spacing over ``span`` (default: the
    first 2 pi of the grid) into ``grid``."""
    grid = np.asarray(grid, dtype=float)
    lo, hi = span if span is not None else (grid[0], min(grid[-1], grid[0] + 2 * math.pi))
    extra = np.arange(lo, hi, spacing)
    return np.unique(np.concatenate([grid, extra]))


@dataclass(frozen=True)
class MonotonicityReport:
    functional: str
    params: dict
    rho_grid: np.ndarray
    signs: np.ndarray
    log_values: np.ndarray
    tol_mono: float
    terms: tuple = ()

    @property
    def diffs(self) -> np.ndarray:
        pos = (self.signs[1:] > 0) & (self.signs[:-1] > 0)
        with np.errstate(invalid="ignore"):
            d = self.log_values[1:] - self.log_values[:-1]
        return np.where(pos, d, np.nan)

    @property
    def violation_mask(self) -> np.ndarray:
        d = self.diffs
        return np.where(np.isnan(d), False, d < -self.tol_mono)

    @property
    def violations(self) -> list:
        d = self.diffs
        return [(float(self.rho_grid[i]), float(-d[i])) for i in np.flatnonzero(self.violation_mask)]

    @property
    def empirical_r0(self) -> float:
        """Smallest grid radius beyond which no violation occurs."""
        idx = np.flatnonzero(self.violation_mask)
        return float(self.rho_grid[0] if idx.size == 0 else self.rho_grid[idx[-1] + 1])

    @property
    def positivity_tail(self) -> bool:
        """Whether the functional is positive at every grid radius >= empirical r0."""
        tail = self.rho_grid >= self.empirical_r0
        return bool(np.all(self.signs[tail] > 0))

    @property
    def positivity_start(self) -> Optional[float]:
        """Smallest grid radius from which the sign stays positive (None if never)."""
        bad = np.flatnonzero(self.signs <= 0)
        if bad.size == 0:
            return float(self.rho_grid[0])
        if bad[-1] == self.rho_grid.size - 1:
            return None
        return float(self.rho_grid[bad[-1] + 1])

    @property
    def n_violations(self) -> int:
        return int(np.count_nonzero(self.violation_mask))

    def tail_ok(self, r0_max: Optional[float] = None) -> bool:
        """Zero violations beyond an empirical r0 <= ``r0_max`` (default: the
        geometric midpoint of the grid) and positivity on that tail."""
        if r0_max is None:
            r0_max = math.sqrt(self.rho_grid[0] * self.rho_grid[-1])
        return self.empirical_r0 <= r0_max and self.positivity_tail and np.any(self.signs > 0)

    def rows(self):
        d = np.concatenate([[np.nan], self.diffs])
        flag = np.concatenate([[False], self.violation_mask])
        for rho, s, lv, di, fl in zip(self.rho_grid, self.signs, self.log_values, d, flag):
            yield {
                "rho": float(rho),
                "sign": int(s),
                "log_norm_value": float(lv),
                "diff": float(di),
                "violation_flag": int(fl),
            }

    def summary(self) -> dict:
        key = "empirical_r0" if self.functional == "F" else "empirical_R1"
        return {
            "functional": self.functional,
            "params": self.params,
            key: self.empirical_r0,
            "n_violations": self.n_violations,
            "positivity_tail": self.positivity_tail,
            "positivity_start": self.positivity_start,
            "tol_mono": self.tol_mono,
        }


def _check_grid(rho_grid) -> np.ndarray:
    grid = np.asarray(rho_grid, dtype=float)
    if grid.size < 16 or np.any(np.diff(grid) <= 0) or grid[0] <= 1:
        raise ValueError("rho grid must be increasing, > 1, with at least 16 points")
    return grid


def scan_f(
    fld: CoefficientField,
    u: ScalarField,
    params: WeightParams,
    rho_grid,
    tol_mono: float = 1e-9,
    rule: Optional[SphereRule] = None,
) -> MonotonicityReport:
    grid = _check_grid(rho_grid)
    rule = rule if rule is not None else sphere_rule(fld.n, 24)
    vals = ordered_map(lambda rho: f_functional(fld, u, params, float(rho), rule), grid)
    signs = np.array([v.sign for v in vals], dtype=int)
    logs = np.array([v.log_magnitude for v in vals]) - (fld.n - 1) * np.log(grid)
    rec = {**params.to_record(), "n": fld.n, "normalization": f"rho^{fld.n - 1}"}
    return MonotonicityReport("F", rec, grid, signs, logs, tol_mono, tuple(v.terms for v in vals))


def scan_g(
    fld: CoefficientField,
    u: ScalarField,
    n: int,
    delta: float,
    rho_grid,
    tol_mono: float = 1e-9,
    rule: Optional[SphereRule] = None,
) -> MonotonicityReport:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    grid = _check_grid(rho_grid)
    rule = rule if rule is not None else sphere_rule(fld.n, 24)
    vals = ordered_map(lambda rho: g_functional(fld, u, n, float(rho), rule), grid)
    vals = np.array(vals)
    signs = np.sign(vals).astype(int)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(vals)) - (n - 1 - delta) * np.log(grid)
    rec = {"n": n, "delta": delta, "normalization": f"rho^{n - 1 - delta}"}
    return MonotonicityReport("G", rec, grid, signs, logs, tol_mono)


@dataclass(frozen=True)
class LadderResult:
    reports: dict
    r0_max: Optional[float]

    @property
    def smallest_positive_ell(self) -> Optional[float]:
        """Smallest tested ell whose scan is clean and positive on its tail."""
        for ell in sorted(self.reports):
            if self.reports[ell].tail_ok(self.r0_max):
                return ell
        return None


def search_f_thresholds(
    fld: CoefficientField,
    u: ScalarField,
    rho_grid,
    ladder=DEFAULT_LADDER,
    eps: Optional[float] = None,
    tol_mono: float = 1e-9,
    r0_max: Optional[float] = None,
    rule: Optional[SphereRule] = None,
) -> LadderResult:
    eps = default_eps(fld.alpha) if eps is None else eps
    reports = {
        float(ell): scan_f(fld, u, WeightParams(float(ell), eps), rho_grid, tol_mono, rule)
        for ell in ladder
    }
    return LadderResult(reports, r0_max)
