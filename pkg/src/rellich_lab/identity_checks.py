"""Numerical verification of integration-by-parts and pointwise identities.

* :func:`rpw_residual` checks, on the shell ``U = {t < |x| < tau}``,

      2 int_U Xf div(A grad f)
        = 2 int_dU Xf <A grad f, nu> - int_dU <A grad f, grad f> <X, nu>
          + int_U div X <A grad f, grad f> - 2 int_U a_ij [D_i, X]f D_j f
          + int_U (X a_ij) D_i f D_j f

  with ``[D_i, X]f = D_i(Xf) - X(D_i f)``.
* :func:`rellich_residual` is the constant-coefficient case with ``X = x``.
* :func:`lrad_residual` checks the pointwise factorisation for ``v = h(r) u``

      (Zv/r)^2 mu - <A grad v, grad v> = h^2 ((Zu/r)^2 mu - <A grad u, grad u>),

  evaluated after division by ``h^2`` so that large weights do not swamp the
  relative residual.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import ordered_map, pairwise_sum
from .coefficient_fields import (
    CoefficientField,
    div_z,
    make_field,
    mu,
    z_jacobian,
    z_vector,
)
from .functionals import WeightParams
from .quadrature import SphereRule, shell_grid, sphere_rule
from .special_solutions import ScalarField, radial_field

BATTERY_ANNULI = ((2.0, 5.0), (2.0, 10.0))
BUILTIN_KINDS = ("identity", "radial-scalar", "rank-one-radial", "rank-one-fixed")


class MissingDerivativeError(ValueError):
    """The identity needs second derivatives the function does not provide."""


@dataclass(frozen=True)
class IdentityResidual:
    """Both sides of an identity with their named terms.

    ``residual = |lhs - rhs| / max(|lhs|, |rhs|, scale)``; ``scale`` is 1 except
    for pointwise checks, where it is ``max(1, largest |term|)`` so that the
    residual measures rounding relative to the operands.
    """

    name: str
    lhs_terms: dict
    rhs_terms: dict
    meta: dict = field(default_factory=dict)
    scale: float = 1.0

    @property
    def lhs(self) -> float:
        return math.fsum(self.lhs_terms.values())

    @property
    def rhs(self) -> float:
        return math.fsum(self.rhs_terms.values())

    @property
    def residual(self) -> float:
        lhs, rhs = self.lhs, self.rhs
        return abs(lhs - rhs) / max(abs(lhs), abs(rhs), self.scale)

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "scale": self.scale,
            "lhs_terms": self.lhs_terms,
            "rhs_terms": self.rhs_terms,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


# ---------------------------------------------------------------------------
# vector fields X


@dataclass(frozen=True)
class XSpec:
    """A vector field with optional analytic Jacobian ``DX[..., k, i] = d_i X_k``
    and divergence."""

    name: str
    value: Callable
    jacobian: Optional[Callable] = None
    divergence: Optional[Callable] = None

    def jac(self, x) -> np.ndarray:
        if self.jacobian is not None:
            return self.jacobian(x)
        return _fd_jacobian(self.value, x)

    def div(self, x) -> np.ndarray:
        if self.divergence is not None:
            return self.divergence(x)
        return np.trace(self.jac(x), axis1=-2, axis2=-1)


def _fd_step(x):
    return 1e-5 * np.maximum(1.0, np.linalg.norm(x, axis=-1))


def _fd_jacobian(fn, x):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = _fd_step(x)
    J = np.empty(x.shape + (n,))
    for i in range(n):
        step = np.zeros(x.shape)
        step[..., i] = h
        J[..., :, i] = (fn(x + step) - fn(x - step)) / (2.0 * h[..., None])
    return J


def euler_x(n: int) -> XSpec:
    eye = np.eye(n)
    return XSpec(
        "euler",
        lambda x: np.asarray(x, dtype=float),
        lambda x: np.broadcast_to(eye, np.shape(x) + (n,)),
        lambda x: np.full(np.shape(x)[:-1], float(n)),
    )


def weighted_z(fld: CoefficientField, eps: float = 0.25, s: Optional[float] = None) -> XSpec:
    """``X = sigma(r) Z`` with ``sigma = r^s exp(r^{-2 eps})`` (default ``s = 2 - n``)."""
    n = fld.n
    s = 2.0 - n if s is None else s

    def sigma(r):
        sg = r**s * np.exp(r ** (-2 * eps))
        return sg, sg * (s / r - 2 * eps * r ** (-2 * eps - 1))

    def value(x):
        x = np.asarray(x, dtype=float)
        sg, _ = sigma(np.linalg.norm(x, axis=-1))
        return sg[..., None] * z_vector(fld, x)

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        sg, dsg = sigma(r)
        Z = z_vector(fld, x)
        xh = x / r[..., None]
        return dsg[..., None, None] * Z[..., :, None] * xh[..., None, :] + sg[..., None, None] * z_jacobian(fld, x)

    def divergence(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        sg, dsg = sigma(r)
        # <xh, Z> = r because <x, A x> = r^2 mu
        return dsg * r + sg * div_z(fld, x, method="analytic")

    return XSpec(f"weighted-Z(eps={eps:g},s={s:g})", value, jacobian, divergence)


def affine_x(M, b) -> XSpec:
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    n = M.shape[0]
    return XSpec(
        "affine",
        lambda x: np.einsum("ij,...j->...i", M, x) + b,
        lambda x: np.broadcast_to(M, np.shape(x) + (n,)),
        lambda x: np.full(np.shape(x)[:-1], float(np.trace(M))),
    )


def default_affine_x(n: int) -> XSpec:
    M = np.array([[1.0, 0.3, 0.0], [-0.2, 0.5, 0.1], [0.0, 0.4, -0.7]])[:n, :n]
    b = np.array([0.3, -0.1, 0.2])[:n]
    return affine_x(M, b)


def x_specs(fld: CoefficientField) -> dict:
    return {"euler": euler_x(fld.n), "weighted-Z": weighted_z(fld), "affine": default_affine_x(fld.n)}


# ---------------------------------------------------------------------------
# RPW identity


def _hessian(f: ScalarField, x, second_derivatives: str):
    if second_derivatives == "analytic":
        if f.hessian is None:
            raise MissingDerivativeError(f"{f.name or 'function'} has no analytic Hessian")
        return f.hessian(x)
    if second_derivatives == "auto":
        return f.hessian_or_fd(x)
    raise ValueError(f"unknown second_derivatives mode {second_derivatives!r}")


def commutator_fd(X: XSpec, f: ScalarField, x, H=None) -> np.ndarray:
    """``[D_i, X]f = D_i(X . grad f) - (H X)_i`` by central differences of the composition."""
    x = np.asarray(x, dtype=float)
    H = f.hessian_or_fd(x) if H is None else H

    def xf(y):
        return np.einsum("...i,...i->...", X.value(y), f.gradient(y))[..., None]

    d_xf = _fd_jacobian(xf, x)[..., 0, :]
    return d_xf - np.einsum("...ij,...j->...i", H, X.value(x))


def commutator(X: XSpec, f: ScalarField, x, H=None, method: str = "auto") -> np.ndarray:
    """``[D_i, X]f = sum_k d_i X_k d_k f``; analytic when ``X`` has a Jacobian."""
    if method == "auto":
        method = "analytic" if X.jacobian is not None else "fd"
    if method == "analytic":
        return np.einsum("...ki,...k->...i", X.jac(x), f.gradient(x))
    if method == "fd":
        return commutator_fd(X, f, x, H)
    raise ValueError(f"unknown method {method!r}")


RPW_LHS = "2 int Xf div(A grad f)"
RPW_TERMS = (
    "2 int_dU Xf <A grad f, nu>",
    "-int_dU <A grad f, grad f> <X, nu>",
    "int_U div X <A grad f, grad f>",
    "-2 int_U a_ij [D_i,X]f D_j f",
    "int_U (X a_ij) D_i f D_j f",
)


def rpw_residual(
    fld: CoefficientField,
    X: XSpec,
    f: ScalarField,
    t: float,
    tau: float,
    degree: int = 24,
    m_radial: int = 32,
    *,
    second_derivatives: str = "auto",
    commutator_method: str = "auto",
) -> IdentityResidual:
    n = fld.n
    rule = sphere_rule(n, degree)
    grid = shell_grid(rule, t, tau, m_radial)
    x = grid.points
    A = fld.A(x)
    G = fld.gradA(x)
    g = f.gradient(x)
    H = _hessian(f, x, second_derivatives)
    Xv = X.value(x)
    Ag = np.einsum("...ij,...j->...i", A, g)
    gAg = np.einsum("...i,...i->...", Ag, g)
    xf = np.einsum("...i,...i->...", Xv, g)
    divA = np.einsum("...iji->...j", G)
    div_flux = np.einsum("...j,...j->...", divA, g) + np.einsum("...ij,...ji->...", A, H)
    comm = commutator(X, f, x, H, commutator_method)
    XdA = np.einsum("...ijk,...k->...ij", G, Xv)

    vol = {
        "lhs": 2.0 * grid.integrate(xf * div_flux),
        "t3": grid.integrate(X.div(x) * gAg),
        "t4": -2.0 * grid.integrate(np.einsum("...i,...i->...", Ag, comm)),
        "t5": grid.integrate(np.einsum("...j,...j->...", np.einsum("...ij,...i->...j", XdA, g), g)),
    }

    def boundary(rho, orient):
        y = rho * rule.nodes
        nu = orient * rule.nodes
        Ay = fld.A(y)
        gy = f.gradient(y)
        Agy = np.einsum("...ij,...j->...i", Ay, gy)
        Xy = X.value(y)
        xfy = np.einsum("...i,...i->...", Xy, gy)
        w = rho ** (n - 1) * rule.weights
        b1 = 2.0 * pairwise_sum(w * xfy * np.einsum("...i,...i->...", Agy, nu))
        b2 = -pairwise_sum(w * np.einsum("...i,...i->...", Agy, gy) * np.einsum("...i,...i->...", Xy, nu))
        return float(b1), float(b2)

    o1, o2 = boundary(tau, 1.0)
    i1, i2 = boundary(t, -1.0)
    rhs = {
        RPW_TERMS[0]: o1 + i1,
        RPW_TERMS[1]: o2 + i2,
        RPW_TERMS[2]: float(vol["t3"]),
        RPW_TERMS[3]: float(vol["t4"]),
        RPW_TERMS[4]: float(vol["t5"]),
    }
    meta = {
        "field": fld.kind,
        "n": n,
        "X": X.name,
        "f": f.name,
        "t": t,
        "tau": tau,
        "degree": degree,
        "m_radial": m_radial,
    }
    return IdentityResidual("rpw", {RPW_LHS: float(vol["lhs"])}, rhs, meta)


RELLICH_LHS = "int_dU |grad f|^2 <x, nu>"
RELLICH_TERMS = (
    "(n-2) int_U |grad f|^2",
    "2 int_dU <grad f, x> df/dnu",
    "-2 int_U <grad f, x> lap f",
)


def rellich_residual(
    f: ScalarField,
    t: float,
    tau: float,
    degree: int = 24,
    m_radial: int = 32,
    *,
    second_derivatives: str = "auto",
) -> IdentityResidual:
    n = f.n
    rule = sphere_rule(n, degree)
    grid = shell_grid(rule, t, tau, m_radial)
    x = grid.points
    g = f.gradient(x)
    lap = np.trace(_hessian(f, x, second_derivatives), axis1=-2, axis2=-1)
    g2 = np.einsum("...i,...i->...", g, g)
    xg = np.einsum("...i,...i->...", x, g)

    lhs = 0.0
    bnd = 0.0
    for rho, orient in ((tau, 1.0), (t, -1.0)):
        y = rho * rule.nodes
        gy = f.gradient(y)
        w = rho ** (n - 1) * rule.weights
        # <x, nu> = orient * rho, df/dnu = orient * <grad f, xh>
        xgy = np.einsum("...i,...i->...", y, gy)
        lhs += float(pairwise_sum(w * np.einsum("...i,...i->...", gy, gy) * orient * rho))
        bnd += float(pairwise_sum(w * 2.0 * xgy * orient * xgy / rho))
    rhs = {
        RELLICH_TERMS[0]: (n - 2) * float(grid.integrate(g2)),
        RELLICH_TERMS[1]: bnd,
        RELLICH_TERMS[2]: -2.0 * float(grid.integrate(xg * lap)),
    }
    meta = {"n": n, "f": f.name, "t": t, "tau": tau, "degree": degree, "m_radial": m_radial}
    return IdentityResidual("rellich", {RELLICH_LHS: lhs}, rhs, meta)


def rellich_terms_from_rpw(res: IdentityResidual) -> dict:
    """Map an RPW report for ``A = I``, ``X = x`` onto the Rellich terms."""
    t = res.rhs_terms
    return {
        RELLICH_LHS: -t[RPW_TERMS[1]],
        RELLICH_TERMS[0]: t[RPW_TERMS[2]] + t[RPW_TERMS[3]],
        RELLICH_TERMS[1]: t[RPW_TERMS[0]],
        RELLICH_TERMS[2]: -res.lhs_terms[RPW_LHS],
    }


# ---------------------------------------------------------------------------
# pointwise weight factorisation


@dataclass(frozen=True)
class RadialWeight:
    """Positive radial weight given through ``log h`` and ``h'/h``."""

    log_h: Callable
    dlog_h: Callable
    name: str = "h"

    @classmethod
    def from_params(cls, params: WeightParams) -> "RadialWeight":
        l, e = params.ell, params.eps
        return cls(
            lambda r: l * np.log(r) + l * r ** (-e),
            lambda r: l * (1.0 - e * r ** (-e)) / r,
            f"weight(ell={l:g},eps={e:g})",
        )

    @classmethod
    def from_functions(cls, h: Callable, dh: Callable, name: str = "h") -> "RadialWeight":
        return cls(lambda r: np.log(h(r)), lambda r: dh(r) / h(r), name)


def _as_weight(h_spec) -> RadialWeight:
    if isinstance(h_spec, RadialWeight):
        return h_spec
    if isinstance(h_spec, WeightParams):
        return RadialWeight.from_params(h_spec)
    raise TypeError(f"h_spec must be WeightParams or RadialWeight, got {type(h_spec).__name__}")


LRAD_LHS = ("(Zv/r)^2 mu / h^2", "-<A grad v, grad v> / h^2")
LRAD_RHS = ("(Zu/r)^2 mu", "-<A grad u, grad u>")


def lrad_terms(fld: CoefficientField, h_spec, u: ScalarField, x):
    """Both sides of the factorisation divided by ``h(r)^2 > 0``.

    The left side is assembled from ``grad v / h = (h'/h) u xh + grad u``,
    the right side from ``u`` alone.  Returns ``(lhs_terms, rhs_terms)``.
    """
    w = _as_weight(h_spec)
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= 1):
        raise ValueError("lrad probes need |x| > 1")
    A = fld.A(x)
    m = mu(fld, x)
    Z = z_vector(fld, x)
    uv = u.value(x)
    gu = u.gradient(x)
    gv = (w.dlog_h(r) * uv / r)[..., None] * x + gu
    zv = np.einsum("...i,...i->...", Z, gv)
    zu = np.einsum("...i,...i->...", Z, gu)
    lhs = ((zv / r) ** 2 * m, -np.einsum("...i,...ij,...j->...", gv, A, gv))
    rhs = ((zu / r) ** 2 * m, -np.einsum("...i,...ij,...j->...", gu, A, gu))
    return lhs, rhs


def lrad_residual(fld: CoefficientField, h_spec, u: ScalarField, x) -> IdentityResidual:
    x = np.asarray(x, dtype=float)
    lhs, rhs = lrad_terms(fld, h_spec, u, x)
    w = _as_weight(h_spec)
    meta = {
        "field": fld.kind,
        "h": w.name,
        "log_h": float(w.log_h(np.linalg.norm(x))),
        "u": u.name,
        "x": x.tolist(),
    }
    scale = max(1.0, *(abs(float(v)) for v in lhs + rhs))
    return IdentityResidual(
        "lrad",
        {k: float(v) for k, v in zip(LRAD_LHS, lhs)},
        {k: float(v) for k, v in zip(LRAD_RHS, rhs)},
        meta,
        scale,
    )


def lrad_residual_array(
    fld: CoefficientField, h_spec, u: ScalarField, x, unit_floor: bool = False
) -> np.ndarray:
    """Residuals at many points at once (same formula as :func:`lrad_residual`).

    ``unit_floor=True`` uses the plain ``max(|lhs|, |rhs|, 1)`` denominator.
    """
    (l1, l2), (r1, r2) = lrad_terms(fld, h_spec, u, x)
    lhs, rhs = l1 + l2, r1 + r2
    scale = 1.0 if unit_floor else np.maximum.reduce([np.ones_like(l1), *map(np.abs, (l1, l2, r1, r2))])
    return np.abs(lhs - rhs) / np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), scale)


# ---------------------------------------------------------------------------
# test functions


def constant_fn(n: int, c: float = 1.0) -> ScalarField:
    return ScalarField(
        n,
        lambda x: np.full(np.shape(x)[:-1], c),
        lambda x: np.zeros(np.shape(x)),
        lambda x: np.zeros(np.shape(x) + (n,)),
        name="constant",
    )


def coordinate_fn(n: int, k: int = 0) -> ScalarField:
    e = np.eye(n)[k]
    return ScalarField(
        n,
        lambda x: np.asarray(x, dtype=float)[..., k],
        lambda x: np.broadcast_to(e, np.shape(x)).copy(),
        lambda x: np.zeros(np.shape(x) + (n,)),
        name=f"x{k + 1}",
    )


def square_norm_fn(n: int) -> ScalarField:
    eye = np.eye(n)
    return ScalarField(
        n,
        lambda x: np.einsum("...i,...i->...", x, x),
        lambda x: 2.0 * np.asarray(x, dtype=float),
        lambda x: np.broadcast_to(2.0 * eye, np.shape(x) + (n,)).copy(),
        name="|x|^2",
    )


def damped_sine_fn(n: int, decay: float = 5.0) -> ScalarField:
    """``sin(x1) exp(-r / decay)``."""
    a = 1.0 / decay
    eye = np.eye(n)
    e1 = eye[0]

    def parts(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return x, r, np.sin(x[..., 0]), np.cos(x[..., 0]), np.exp(-a * r)

    def value(x):
        _, _, s, _, E = parts(x)
        return s * E

    def gradient(x):
        x, r, s, c, E = parts(x)
        return (c * E)[..., None] * e1 - (a * s * E / r)[..., None] * x

    def hessian(x):
        x, r, s, c, E = parts(x)
        xh = x / r[..., None]
        P = xh[..., :, None] * xh[..., None, :]
        E1 = e1[:, None] * e1[None, :]
        cross = e1[:, None] * xh[..., None, :] + xh[..., :, None] * e1[None, :]
        return (
            -(s * E)[..., None, None] * E1
            - (a * c * E)[..., None, None] * cross
            + (a * a * s * E)[..., None, None] * P
            - (a * s * E / r)[..., None, None] * (eye - P)
        )

    return ScalarField(n, value, gradient, hessian, name="sin(x1)exp(-r/5)")


def sinc_fn(n: int) -> ScalarField:
    """``sin(r) / r`` in any dimension (an eigenfunction only for n = 3)."""

    def phi(r):
        r = np.asarray(r, dtype=float)
        s, c = np.sin(r), np.cos(r)
        return s / r, c / r - s / r**2

    def d2(r):
        s, c = np.sin(r), np.cos(r)
        return -s / r - 2 * c / r**2 + 2 * s / r**3

    return radial_field(n, phi, d2phi=d2, name="sin(r)/r")


def smooth_battery(n: int) -> list:
    return [constant_fn(n), coordinate_fn(n), square_norm_fn(n), damped_sine_fn(n), sinc_fn(n)]


def builtin_fields(n: int) -> list:
    out = []
    for kind in BUILTIN_KINDS:
        c = 0.0 if kind == "identity" else 0.5
        out.append(make_field(kind, n=n, c=c, alpha=1.0))
    return out


def run_battery(
    n: int = 3,
    degree: int = 24,
    m_radial: int = 32,
    fields: Optional[list] = None,
    annuli=BATTERY_ANNULI,
) -> list:
    """RPW residuals for every (field, X, f, annulus) combination, in a fixed order."""
    fields = builtin_fields(n) if fields is None else fields
    jobs = []
    for fld in fields:
        for X in x_specs(fld).values():
            for f in smooth_battery(n):
                for t, tau in annuli:
                    jobs.append((fld, X, f, t, tau))
    return ordered_map(lambda j: rpw_residual(*j, degree=degree, m_radial=m_radial), jobs)


# ---------------------------------------------------------------------------
# randomized pointwise probes


@dataclass(frozen=True)
class ProbeSummary:
    count: int
    max_residual: float
    worst: dict
    max_unit_floor_residual: float

    def to_record(self) -> dict:
        return {
            "count": self.count,
            "max_residual": self.max_residual,
            "max_unit_floor_residual": self.max_unit_floor_residual,
            "worst": self.worst,
        }


def lrad_probes(count: int = 10_000, seed: int = 2024, batch: int = 250) -> ProbeSummary:
    """Randomised ``(field, h, u, x)`` probes of the factorisation identity.

    Each batch draws a field (kind, dimension, strength, direction), a weight
    with ``ell`` in ``[0.5, 10]`` and ``eps`` in ``(0.05, 0.45)``, a test
    function, and ``batch`` points with ``|x|`` log-uniform in ``[1.1, 50]``.
    """
    rng = np.random.default_rng(seed)
    worst = (-1.0, {})
    worst_unit = 0.0
    done = 0
    while done < count:
        m = min(batch, count - done)
        n = int(rng.choice([2, 3]))
        kind = str(rng.choice(BUILTIN_KINDS))
        c = 0.0 if kind == "identity" else float(rng.uniform(-0.4, 0.4))
        alpha = float(rng.uniform(0.5, 2.0))
        direction = rng.standard_normal(n) if kind == "rank-one-fixed" else None
        fld = make_field(kind, n=n, c=c, alpha=alpha, direction=direction)
        params = WeightParams(float(rng.uniform(0.5, 10.0)), float(rng.uniform(0.05, 0.45)))
        u = smooth_battery(n)[int(rng.integers(5))]
        d = rng.standard_normal((m, n))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        r = np.exp(rng.uniform(math.log(1.1), math.log(50.0), m))
        x = r[:, None] * d
        res = lrad_residual_array(fld, params, u, x)
        worst_unit = max(worst_unit, float(np.max(lrad_residual_array(fld, params, u, x, unit_floor=True))))
        i = int(np.argmax(res))
        if res[i] > worst[0]:
            worst = (
                float(res[i]),
                {"field": kind, "n": n, "c": c, "alpha": alpha, "ell": params.ell, "eps": params.eps,
                 "u": u.name, "x": x[i].tolist()},
            )
        done += m
    return ProbeSummary(count, worst[0], worst[1], worst_unit)
