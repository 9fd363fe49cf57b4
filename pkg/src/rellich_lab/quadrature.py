"""Quadrature on spheres and spherical shells.

Sphere rules are product rules: equispaced points on the circle (n = 2) and
Gauss-Legendre in ``cos(theta)`` times the trapezoid rule in the azimuth
(n = 3).  Shell integrals use Gauss-Legendre in the radius on panels no
wider than ``pi/2``, so that solutions oscillating with period ``2 pi`` are
resolved uniformly in the radius.  For radial integrands the angular
integral factorises and any dimension is supported.

All reductions go through :func:`~rellich_lab._numerics.pairwise_sum` in a
fixed index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._numerics import pairwise_sum

SUPPORTED_DIMENSIONS = (2, 3)
MAX_DEGREE = 128
MAX_PANEL = math.pi / 2


class QuadratureError(RuntimeError):
    """Integrand evaluation failed at a quadrature node."""


@dataclass(frozen=True)
class SphereRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self) -> int:
        return self.weights.size


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def sphere_rule(n: int, degree: int) -> SphereRule:
    """Product rule on the unit sphere exact for polynomials of degree <= ``degree``."""
    if n not in SUPPORTED_DIMENSIONS:
        raise ValueError(
            f"sphere rules are available for n in {SUPPORTED_DIMENSIONS}, got n={n}; "
            "use the radial routines for radial integrands in other dimensions"
        )
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must lie in [0, {MAX_DEGREE}], got {degree}")
    m_phi = degree + 1
    phi = 2.0 * math.pi * np.arange(m_phi) / m_phi
    if n == 2:
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        weights = np.full(m_phi, 2.0 * math.pi / m_phi)
        return SphereRule(2, nodes, weights, degree)
    m_theta = degree // 2 + 1
    z, wz = np.polynomial.legendre.leggauss(m_theta)
    s = np.sqrt(1.0 - z * z)
    nodes = np.stack(
        [
            (s[:, None] * np.cos(phi)[None, :]).ravel(),
            (s[:, None] * np.sin(phi)[None, :]).ravel(),
            np.repeat(z, m_phi),
        ],
        axis=-1,
    )
    weights = np.repeat(wz, m_phi) * (2.0 * math.pi / m_phi)
    return SphereRule(3, nodes, weights, degree)


def _evaluate(integrand, pts: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(integrand(pts))
    except Exception as exc:  # noqa: BLE001 - re-raised with the failing node
        for i in range(pts.shape[0]):
            try:
                integrand(pts[i : i + 1])
            except Exception:  # noqa: BLE001
                raise QuadratureError(f"integrand failed at node {i}, x={pts[i].tolist()}: {exc}") from exc
        raise QuadratureError(f"integrand failed: {exc}") from exc
    if vals.shape != pts.shape[:-1]:
        vals = np.broadcast_to(vals, pts.shape[:-1])
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise QuadratureError(f"integrand is not finite at node {i}, x={pts[i].tolist()}")
    return vals


def surface_integral(rule: SphereRule, rho: float, integrand):
    """``int_{|x| = rho} integrand dsigma`` for ``integrand: (m, n) -> (m,)``."""
    if rho <= 1:
        raise ValueError(f"rho must exceed 1, got {rho}")
    vals = _evaluate(integrand, rho * rule.nodes)
    return rho ** (rule.n - 1) * pairwise_sum(rule.weights * vals)


def radial_surface_integral(n: int, rho: float, g) -> float:
    """Surface integral of a radial integrand ``g(|x|)``, any dimension."""
    return sphere_measure(n) * rho ** (n - 1) * float(g(rho))


def radial_nodes(t: float, tau: float, m_radial: int, max_panel: float = MAX_PANEL):
    """Composite Gauss-Legendre nodes and weights on ``[t, tau]``."""
    if not tau > t:
        raise ValueError(f"need t < tau, got t={t}, tau={tau}")
    if m_radial < 8:
        raise ValueError(f"m_radial must be >= 8, got {m_radial}")
    n_panels = max(1, math.ceil((tau - t) / max_panel))
    edges = np.linspace(t, tau, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(m_radial)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel()
    return r, wr


@dataclass(frozen=True)
class ShellGrid:
    """Tensor grid for a shell: ``points[p, j] = r_p * omega_j``."""

    n: int
    radii: np.ndarray
    radial_weights: np.ndarray
    rule: SphereRule

    @property
    def points(self) -> np.ndarray:
        return self.radii[:, None, None] * self.rule.nodes[None, :, :]

    def integrate(self, values) -> float:
        """Volume integral of nodal ``values`` with shape ``(len(radii), len(rule))``."""
        per_sphere = pairwise_sum(np.asarray(values) * self.rule.weights, axis=-1)
        return pairwise_sum(self.radial_weights * self.radii ** (self.n - 1) * per_sphere)


def shell_grid(rule: SphereRule, t: float, tau: float, m_radial: int) -> ShellGrid:
    if not 1 <= t < tau:
        raise ValueError(f"need 1 <= t < tau, got t={t}, tau={tau}")
    r, wr = radial_nodes(t, tau, m_radial)
    return ShellGrid(rule.n, r, wr, rule)


def annulus_integral(rule: SphereRule, t: float, tau: float, m_radial: int, integrand):
    """``int_{t < |x| < tau} integrand dx`` with the sphere rule in the angles."""
    grid = shell_grid(rule, t, tau, m_radial)
    pts = grid.points
    vals = _evaluate(integrand, pts.reshape(-1, rule.n)).reshape(pts.shape[:-1])
    return grid.integrate(vals)


def radial_annulus_integral(n: int, t: float, tau: float, m_radial: int, g) -> float:
    """Shell integral of a radial integrand ``g(r)`` in any dimension ``n >= 2``."""
    r, wr = radial_nodes(t, tau, m_radial)
    vals = np.asarray(g(r), dtype=float)
    return sphere_measure(n) * float(pairwise_sum(wr * r ** (n - 1) * vals))
