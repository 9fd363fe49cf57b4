"""Annulus growth and L^p tail behaviour of exterior eigenfunctions.

``M(R) = int_{R < |x| < 2R} u^2`` grows like ``R`` for the solutions in this
package; :func:`growth_scan` fits the exponent and checks domination of
``R^{1-delta}``.  :func:`lp_tail` accumulates ``I_p(R) = int_{1 < |x| < R} |u|^p``
and classifies it as convergent or divergent from the decay of its
increments.  The critical exponent is ``2n / (n - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._numerics import SlopeFit, loglog_fit, ordered_map, pairwise_sum
from .quadrature import annulus_integral, radial_annulus_integral, sphere_rule
from .special_solutions import EvaluationError, ScalarField

DEFAULT_DELTAS = (0.1, 0.5, 0.9)
M_RADIAL = 16
# classification cutoffs on the fitted slope of log-density increments
CONVERGENT_SLOPE = -0.1
DIVERGENT_SLOPE = -0.05
# tail-domination verdict: normalised mass may not decay faster than this
DOMINATION_SLOPE = -0.05
WINDOW = math.pi


def _check_domain(u: ScalarField, a: float, b: float) -> None:
    if a < u.r_min * (1 - 1e-12) or b > u.r_max * (1 + 1e-12):
        raise EvaluationError(
            f"shell [{a:.6g}, {b:.6g}] leaves the domain [{u.r_min:.6g}, {u.r_max:.6g}] of {u.name or 'u'}"
        )


def shell_power_integral(u: ScalarField, n: int, a: float, b: float, p: float = 2.0, degree: int = 24) -> float:
    """``int_{a < |x| < b} |u|^p``; radial ``u`` uses the factorised path (any n)."""
    _check_domain(u, a, b)
    if u.radial is not None:
        return radial_annulus_integral(n, a, b, M_RADIAL, lambda r: np.abs(u.radial(np.clip(r, u.r_min, u.r_max))[0]) ** p)
    rule = sphere_rule(n, degree)
    return float(annulus_integral(rule, a, b, M_RADIAL, lambda x: np.abs(u.value(x)) ** p))


def annulus_mass(u: ScalarField, n: int, R: float, degree: int = 24) -> float:
    if R <= 1:
        raise ValueError(f"R must exceed 1, got {R}")
    return shell_power_integral(u, n, R, 2 * R, 2.0, degree)


def windowed_mass(u: ScalarField, n: int, R: float, window: float = WINDOW, nodes: int = 8) -> float:
    """Mean of ``M(s)`` over ``s`` in ``[R, R + window]`` (Gauss-Legendre in ``s``)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = R + 0.5 * window * (x + 1.0)
    vals = np.array([annulus_mass(u, n, float(si)) for si in s])
    return 0.5 * float(pairwise_sum(w * vals))


def _check_grid(R_grid, min_points: int = 12) -> np.ndarray:
    R = np.asarray(R_grid, dtype=float)
    if R.size < min_points or np.any(np.diff(R) <= 0) or R[0] <= 1:
        raise ValueError(f"R grid must be increasing, > 1, with at least {min_points} points")
    return R


@dataclass(frozen=True)
class GrowthScan:
    n: int
    R_grid: np.ndarray
    masses: np.ndarray
    windowed: np.ndarray
    deltas: tuple
    meta: dict = field(default_factory=dict)

    @property
    def fit(self) -> SlopeFit:
        return loglog_fit(self.R_grid, self.masses)

    @property
    def windowed_fit(self) -> SlopeFit:
        ok = np.isfinite(self.windowed)
        return loglog_fit(self.R_grid[ok], self.windowed[ok])

    @property
    def slope(self) -> float:
        return self.fit.slope

    def _tail(self):
        k = self.R_grid.size // 2
        return self.R_grid[k:], self.masses[k:]

    def domination_constant(self, delta: float) -> float:
        """``c = min over the last half of the grid of M(R) / R^{1-delta}``."""
        R, M = self._tail()
        return float(np.min(M / R ** (1 - delta)))

    def domination_slope(self, delta: float) -> float:
        R, M = self._tail()
        return loglog_fit(R, M / R ** (1 - delta)).slope

    def verdict(self, delta: float) -> bool:
        """``M(R) >= c R^{1-delta}`` with ``c > 0`` and a normalised tail that
        does not decay (slope of ``log(M / R^{1-delta})`` >= ``DOMINATION_SLOPE``)."""
        s = self.domination_slope(delta)
        return self.domination_constant(delta) > 0 and math.isfinite(s) and s >= DOMINATION_SLOPE

    @property
    def verdicts(self) -> dict:
        return {float(d): self.verdict(d) for d in self.deltas}

    def rows(self):
        for R, M, W in zip(self.R_grid, self.masses, self.windowed):
            yield {"R": float(R), "mass": float(M), "windowed_mass": float(W)}

    def summary(self) -> dict:
        fit, wfit = self.fit, self.windowed_fit
        return {
            "n": self.n,
            "slope": fit.slope,
            "slope_half_width": fit.half_width,
            "windowed_slope": wfit.slope,
            "windowed_slope_half_width": wfit.half_width,
            "verdicts": {
                str(d): {
                    "holds": self.verdict(d),
                    "c": self.domination_constant(d),
                    "tail_slope": self.domination_slope(d),
                }
                for d in self.deltas
            },
            "domination_slope_cutoff": DOMINATION_SLOPE,
            **self.meta,
        }


def growth_scan(u: ScalarField, n: int, R_grid, deltas=DEFAULT_DELTAS, degree: int = 24) -> GrowthScan:
    R = _check_grid(R_grid)
    if 2 * R[-1] > u.r_max * (1 + 1e-12):
        raise EvaluationError(f"2 R_max = {2 * R[-1]:.6g} exceeds the domain of {u.name or 'u'}")
    for d in deltas:
        if not 0 < d < 1:
            raise ValueError(f"delta must lie in (0, 1), got {d}")
    masses = np.array(ordered_map(lambda r: annulus_mass(u, n, float(r), degree), R))

    def windowed(r):
        if 2 * (r + WINDOW) > u.r_max:
            return math.nan
        return windowed_mass(u, n, float(r))

    wm = np.array(ordered_map(windowed, R)) if u.radial is not None else np.full(R.size, math.nan)
    return GrowthScan(n, R, masses, wm, tuple(float(d) for d in deltas), {"u": u.name})


# ---------------------------------------------------------------------------
# L^p tails


def critical_exponent(n: int) -> float:
    return 2.0 * n / (n - 1)


def delta_p(n: int, p: float) -> Optional[float]:
    """``1 - n (1 - 2/p)``, reported for ``p >= 2`` only."""
    return 1.0 - n * (1.0 - 2.0 / p) if p >= 2 else None


@dataclass(frozen=True)
class TailScan:
    n: int
    p: float
    R_grid: np.ndarray
    partial: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.partial)

    @property
    def increment_density(self) -> np.ndarray:
        """Increments per unit ``log R``, at the geometric interval midpoints."""
        return self.increments / np.diff(np.log(self.R_grid))

    @property
    def midpoints(self) -> np.ndarray:
        return np.sqrt(self.R_grid[1:] * self.R_grid[:-1])

    def _last_decade(self):
        mid = self.midpoints
        keep = mid >= self.R_grid[-1] / 10
        if np.count_nonzero(keep) < 3:
            keep = np.arange(mid.size) >= mid.size // 2
        return keep

    @property
    def fit(self) -> SlopeFit:
        keep = self._last_decade()
        return loglog_fit(self.midpoints[keep], self.increment_density[keep])

    @property
    def last_decade_ratio(self) -> float:
        """``(I_p(R_max) - I_p(R_max / 10)) / I_p(R_max)`` (diagnostic)."""
        R10 = self.R_grid[-1] / 10
        I10 = np.interp(np.log(R10), np.log(self.R_grid), self.partial)
        return float((self.partial[-1] - I10) / self.partial[-1]) if self.partial[-1] > 0 else math.nan

    @property
    def classification(self) -> str:
        s = self.fit.slope
        if not math.isfinite(s):
            return "inconclusive"
        if s < CONVERGENT_SLOPE:
            return "convergent"
        if s > DIVERGENT_SLOPE:
            return "divergent"
        return "inconclusive"

    def rows(self):
        inc = np.concatenate([[math.nan], self.increments])
        for R, I, d in zip(self.R_grid, self.partial, inc):
            yield {"R": float(R), "partial_integral": float(I), "increment": float(d)}

    def summary(self) -> dict:
        fit = self.fit
        return {
            "n": self.n,
            "p": self.p,
            "classification": self.classification,
            "increment_slope": fit.slope,
            "increment_slope_half_width": fit.half_width,
            "last_decade_ratio": self.last_decade_ratio,
            "critical_exponent": critical_exponent(self.n),
            "delta_p": delta_p(self.n, self.p),
            "cutoffs": {"convergent_below": CONVERGENT_SLOPE, "divergent_above": DIVERGENT_SLOPE},
            **self.meta,
        }


def lp_tail(u: ScalarField, n: int, p: float, R_grid, degree: int = 24) -> TailScan:
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    R = _check_grid(R_grid)
    edges = np.concatenate([[u.r_min], R]) if R[0] > u.r_min else R
    pieces = ordered_map(
        lambda ab: shell_power_integral(u, n, float(ab[0]), float(ab[1]), p, degree),
        list(zip(edges[:-1], edges[1:])),
    )
    partial = np.cumsum(pieces)
    if edges.size == R.size:  # grid starts at the inner boundary
        partial = np.concatenate([[0.0], partial])
    return TailScan(n, float(p), R, partial, {"u": u.name, "r_start": float(edges[0])})
