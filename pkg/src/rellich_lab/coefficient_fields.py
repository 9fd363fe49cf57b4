"""Asymptotically flat coefficient matrices and the adapted vector field.

A field ``A(x)`` is symmetric, uniformly elliptic and approaches the
identity at infinity.  From it we build

* the conformal factor ``mu = <A x, x> / |x|^2``,
* the adapted field ``Z = r A grad(r) / mu = A x / mu``,

together with ``div Z``, the Jacobian of ``Z`` and the decay diagnostics
collected by :func:`dc1_report`.

All evaluators accept points of shape ``(..., n)`` and broadcast over the
leading axes.  The gradient of ``A`` is stored as ``G[..., i, j, k] =
d a_ij / d x_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import SlopeFit, fd_step, loglog_fit, quasi_uniform_directions

KINDS = ("identity", "radial-scalar", "rank-one-radial", "rank-one-fixed", "custom")


class FieldConstructionError(ValueError):
    """Raised when a requested coefficient field fails validation."""


class DomainError(ValueError):
    """Raised when a point lies outside the exterior domain ``|x| > 1``."""


def _radii(x: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(x, axis=-1)
    if np.any(r <= 1.0):
        raise DomainError(f"points must satisfy |x| > 1 (min |x| = {r.min():.6g})")
    return r


@dataclass(frozen=True)
class FieldSpec:
    """Flat, serialisable description of a built-in field."""

    kind: str
    n: int = 3
    c: float = 0.0
    alpha: float = 1.0
    direction: Optional[tuple] = None
    lam: Optional[float] = None

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "c": self.c,
            "alpha": self.alpha,
            "direction": list(self.direction) if self.direction is not None else None,
            "lambda": self.lam,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FieldSpec":
        direction = rec.get("direction")
        return cls(
            kind=rec["kind"],
            n=int(rec.get("n", 3)),
            c=float(rec.get("c", 0.0)),
            alpha=float(rec.get("alpha", 1.0)),
            direction=tuple(float(v) for v in direction) if direction is not None else None,
            lam=None if rec.get("lambda") is None else float(rec["lambda"]),
        )


@dataclass(eq=False)
class CoefficientField:
    n: int
    A_eval: Callable[[np.ndarray], np.ndarray]
    gradA_eval: Optional[Callable[[np.ndarray], np.ndarray]]
    lam: float
    alpha: float
    c_decay: float
    kind: str
    spec: Optional[FieldSpec] = None
    # r -> (a(r), a'(r)) when radial functions solve a scalar radial ODE
    radial_coefficient: Optional[Callable] = field(default=None, repr=False)

    def A(self, x) -> np.ndarray:
        return self.A_eval(np.asarray(x, dtype=float))

    @property
    def has_analytic_gradient(self) -> bool:
        return self.gradA_eval is not None

    def gradA(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradA_eval is not None:
            return self.gradA_eval(x)
        return _fd_gradient(self.A_eval, x)


def _fd_gradient(A_eval, x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    h = 1e-6 * np.maximum(1.0, r)
    out = np.empty(x.shape[:-1] + (n, n, n))
    for k in range(n):
        step = np.zeros(x.shape)
        step[..., k] = h
        out[..., k] = (A_eval(x + step) - A_eval(x - step)) / (2.0 * h[..., None, None])
    return out


# ---------------------------------------------------------------------------
# built-in families


def _family(kind: str, n: int, c: float, alpha: float, e: Optional[np.ndarray]):
    eye = np.eye(n)

    def b_of(r):
        return c * r ** (-alpha), -alpha * c * r ** (-alpha - 1.0)

    if kind == "identity":
        def A_eval(x):
            return np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy()

        def gradA_eval(x):
            return np.zeros(x.shape[:-1] + (n, n, n))

        return A_eval, gradA_eval, 0.0, lambda r: (1.0 + 0.0 * r, 0.0 * r)

    if kind == "radial-scalar":
        def A_eval(x):
            b, _ = b_of(np.linalg.norm(x, axis=-1))
            return (1.0 + b)[..., None, None] * eye

        def gradA_eval(x):
            r = np.linalg.norm(x, axis=-1)
            _, db = b_of(r)
            xh = x / r[..., None]
            return eye[:, :, None] * (db[..., None] * xh)[..., None, None, :]

        def radial(r):
            b, db = b_of(r)
            return 1.0 + b, db

        return A_eval, gradA_eval, math.sqrt(n) * (1.0 + alpha) * abs(c), radial

    if kind == "rank-one-fixed":
        ee = np.outer(e, e)

        def A_eval(x):
            b, _ = b_of(np.linalg.norm(x, axis=-1))
            return eye + b[..., None, None] * ee

        def gradA_eval(x):
            r = np.linalg.norm(x, axis=-1)
            _, db = b_of(r)
            xh = x / r[..., None]
            return ee[:, :, None] * (db[..., None] * xh)[..., None, None, :]

        return A_eval, gradA_eval, (1.0 + alpha) * abs(c), None

    if kind == "rank-one-radial":
        def A_eval(x):
            r = np.linalg.norm(x, axis=-1)
            b, _ = b_of(r)
            xh = x / r[..., None]
            return eye + b[..., None, None] * (xh[..., :, None] * xh[..., None, :])

        def gradA_eval(x):
            r = np.linalg.norm(x, axis=-1)
            b, db = b_of(r)
            xh = x / r[..., None]
            P = xh[..., :, None] * xh[..., None, :]
            outer3 = P[..., None] * xh[..., None, None, :]
            dP = (
                eye[:, None, :] * xh[..., None, :, None]
                + xh[..., :, None, None] * eye[None, :, :]
                - 2.0 * outer3
            ) / r[..., None, None, None]
            return db[..., None, None, None] * outer3 + b[..., None, None, None] * dP

        def radial(r):
            b, db = b_of(r)
            return 1.0 + b, db

        return (
            A_eval,
            gradA_eval,
            abs(c) * (1.0 + math.sqrt(alpha**2 + 2 * n - 2)),
            radial,
        )

    raise FieldConstructionError(
        f"unknown field kind {kind!r}; expected one of {KINDS[:-1]} (use custom_field for custom)"
    )


def probe_points(n: int, n_radii: int = 10, n_dirs: int = 100) -> np.ndarray:
    """Deterministic validation set: log-spaced radii in [1.5, 1e3] x directions."""
    radii = np.geomspace(1.5, 1e3, n_radii)
    dirs = quasi_uniform_directions(n, n_dirs)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, n)


def _validate(fld: CoefficientField, lam_requested: Optional[float]) -> float:
    pts = probe_points(fld.n)
    A = fld.A(pts)
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2)))
    # built-ins are symmetric by construction; custom evaluators get rounding slack
    if asym > (1e-13 * np.max(np.abs(A)) if fld.kind == "custom" else 0.0):
        raise FieldConstructionError(f"A is not symmetric (max |a_ij - a_ji| = {asym:.3g})")
    eig = np.linalg.eigvalsh(A)
    lo, hi = eig[:, 0], eig[:, -1]
    if lam_requested is not None:
        if not 0 < lam_requested <= 1:
            raise FieldConstructionError(f"lambda must lie in (0, 1], got {lam_requested}")
        bad = (lo < lam_requested * (1 - 1e-12)) | (hi > (1 + 1e-12) / lam_requested)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise FieldConstructionError(
                f"ellipticity with lambda={lam_requested} fails at x={pts[i].tolist()} "
                f"(|x|={np.linalg.norm(pts[i]):.4g}, eigenvalues in [{lo[i]:.6g}, {hi[i]:.6g}])"
            )
        lam = lam_requested
    else:
        if np.any(lo <= 0):
            i = int(np.argmax(lo <= 0))
            raise FieldConstructionError(
                f"A is not positive definite at x={pts[i].tolist()} (min eigenvalue {lo[i]:.6g})"
            )
        lam = float(min(1.0, lo.min(), 1.0 / hi.max()))

    r = np.linalg.norm(pts, axis=-1)
    B = A - np.eye(fld.n)
    dB = fld.gradA(pts)
    decay = r * np.sqrt(np.sum(dB**2, axis=(-3, -2, -1))) + np.sqrt(np.sum(B**2, axis=(-2, -1)))
    bound = fld.c_decay * r ** (-fld.alpha)
    bad = decay > bound * (1 + 1e-9) + 1e-15
    if np.any(bad):
        i = int(np.argmax(bad))
        raise FieldConstructionError(
            f"decay bound |x||grad B| + |B| <= {fld.c_decay:.4g}|x|^-{fld.alpha} "
            f"fails at x={pts[i].tolist()}"
        )
    return lam


def make_field(
    kind: str,
    *,
    n: int = 3,
    c: float = 0.0,
    alpha: float = 1.0,
    direction=None,
    lam: Optional[float] = None,
) -> CoefficientField:
    """Instantiate a built-in family with ``b(r) = c r^-alpha``.

    ``radial-scalar``: ``A = (1 + b) I``; ``rank-one-radial``:
    ``A = I + b x x^T / |x|^2``; ``rank-one-fixed``: ``A = I + b e e^T``.
    When ``lam`` is omitted the tightest admissible ellipticity constant on
    the probe set is recorded.
    """
    if n < 2:
        raise FieldConstructionError(f"dimension must be >= 2, got {n}")
    if alpha <= 0:
        raise FieldConstructionError(f"decay exponent must be positive, got {alpha}")
    e = None
    if kind == "rank-one-fixed":
        e = np.zeros(n)
        if direction is None:
            e[0] = 1.0
        else:
            e = np.asarray(direction, dtype=float)
            if e.shape != (n,) or not np.linalg.norm(e) > 0:
                raise FieldConstructionError(f"direction must be a nonzero {n}-vector")
            e = e / np.linalg.norm(e)
    A_eval, gradA_eval, c_decay, radial = _family(kind, n, c, alpha, e)
    spec = FieldSpec(kind, n, float(c), float(alpha), tuple(e.tolist()) if e is not None else None, lam)
    fld = CoefficientField(n, A_eval, gradA_eval, 1.0, float(alpha), c_decay, kind, spec, radial)
    fld.lam = _validate(fld, lam)
    return fld


def make_field_from_spec(spec: FieldSpec) -> CoefficientField:
    return make_field(
        spec.kind, n=spec.n, c=spec.c, alpha=spec.alpha, direction=spec.direction, lam=spec.lam
    )


def custom_field(
    n: int,
    A_eval,
    *,
    alpha: float,
    gradA_eval=None,
    c_decay: Optional[float] = None,
    lam: Optional[float] = None,
) -> CoefficientField:
    """Wrap user-supplied evaluators.  Without ``gradA_eval`` derivatives of
    ``A`` come from central differences.  Without ``c_decay`` the decay
    constant is measured on the probe set."""
    fld = CoefficientField(n, A_eval, gradA_eval, 1.0, float(alpha), math.inf, "custom")
    if c_decay is None:
        pts = probe_points(n)
        r = np.linalg.norm(pts, axis=-1)
        A = fld.A(pts)
        B = A - np.eye(n)
        dB = fld.gradA(pts)
        decay = r * np.sqrt(np.sum(dB**2, axis=(-3, -2, -1))) + np.sqrt(np.sum(B**2, axis=(-2, -1)))
        c_decay = float(np.max(decay * r**alpha)) * (1 + 1e-6)
    fld.c_decay = c_decay
    fld.lam = _validate(fld, lam)
    return fld


# ---------------------------------------------------------------------------
# mu, Z and friends


def mu(fld: CoefficientField, x) -> np.ndarray:
    """Conformal factor ``<A x, x> / |x|^2``."""
    x = np.asarray(x, dtype=float)
    r = _radii(x)
    Ax = np.einsum("...ij,...j->...i", fld.A(x), x)
    return np.einsum("...i,...i->...", Ax, x) / r**2


def z_vector(fld: CoefficientField, x) -> np.ndarray:
    """Adapted vector field ``Z = r A grad(r) / mu``, i.e. ``A x / mu``."""
    x = np.asarray(x, dtype=float)
    r = _radii(x)
    Ax = np.einsum("...ij,...j->...i", fld.A(x), x)
    m = np.einsum("...i,...i->...", Ax, x) / r**2
    return Ax / m[..., None]


def directional_z(fld: CoefficientField, grad_f, x) -> np.ndarray:
    """``Zf = <Z, grad f>`` at ``x``."""
    return np.einsum("...i,...i->...", z_vector(fld, x), np.asarray(grad_f, dtype=float))


def _pieces(fld: CoefficientField, x: np.ndarray):
    r = _radii(x)
    A = fld.A(x)
    G = fld.gradA(x)
    Ax = np.einsum("...ij,...j->...i", A, x)
    m = np.einsum("...i,...i->...", Ax, x) / r**2
    xGx = np.einsum("...jk,...j->...k", np.einsum("...ijk,...i->...jk", G, x), x)
    grad_m = (xGx + 2.0 * Ax) / r[..., None] ** 2 - 2.0 * m[..., None] * x / r[..., None] ** 2
    return r, A, G, Ax, m, grad_m


def grad_mu(fld: CoefficientField, x) -> np.ndarray:
    return _pieces(fld, np.asarray(x, dtype=float))[5]


def z_jacobian(fld: CoefficientField, x) -> np.ndarray:
    """``J[..., k, i] = d Z_k / d x_i`` from the (analytic or differenced) gradient of A."""
    x = np.asarray(x, dtype=float)
    r, A, G, Ax, m, grad_m = _pieces(fld, x)
    dAx = np.einsum("...kji,...j->...ki", G, x) + A
    return dAx / m[..., None, None] - Ax[..., :, None] * grad_m[..., None, :] / m[..., None, None] ** 2


def z_jacobian_fd(fld: CoefficientField, x) -> np.ndarray:
    """Central-difference Jacobian of :func:`z_vector`, step ``max(1e-5, 1e-6 |x|)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = fd_step(np.linalg.norm(x, axis=-1))
    J = np.empty(x.shape + (n,))
    for i in range(n):
        step = np.zeros(x.shape)
        step[..., i] = h
        J[..., :, i] = (z_vector(fld, x + step) - z_vector(fld, x - step)) / (2.0 * h[..., None])
    return J


def div_z(fld: CoefficientField, x, method: str = "auto") -> np.ndarray:
    """Divergence of ``Z``.

    ``method='analytic'`` uses the gradient of ``A`` (central differences of
    ``A`` when the field has no analytic gradient); ``'fd'`` differences
    ``Z`` itself.  ``'auto'`` picks analytic when available, else ``fd``.
    """
    if method == "auto":
        method = "analytic" if fld.has_analytic_gradient else "fd"
    if method == "analytic":
        return np.trace(z_jacobian(fld, x), axis1=-2, axis2=-1)
    if method == "fd":
        return np.trace(z_jacobian_fd(fld, x), axis1=-2, axis2=-1)
    raise ValueError(f"unknown method {method!r}")


def cauchy_schwarz_gap(fld: CoefficientField, grad_f, x) -> np.ndarray:
    """``<A g, g> - (Zg / r)^2 mu``; nonnegative up to rounding."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad_f, dtype=float)
    r = _radii(x)
    zf = directional_z(fld, g, x)
    Ag = np.einsum("...ij,...j->...i", fld.A(x), g)
    return np.einsum("...i,...i->...", Ag, g) - (zf / r) ** 2 * mu(fld, x)


# ---------------------------------------------------------------------------
# decay diagnostics


PROPERTIES = {
    "i": "|Zr - r| / r",
    "ii": "|mu - 1|",
    "iii": "|grad mu| r",
    "iv": "|Z mu|",
    "v": "|div Z - n|",
    "vi": "max_i |[D_i, Z]f - D_i f| / |grad f|",
}


@dataclass(frozen=True)
class DecayRecord:
    prop: str
    description: str
    radii: np.ndarray
    defects: np.ndarray
    fit: SlopeFit

    @property
    def slope(self) -> float:
        return self.fit.slope


@dataclass(frozen=True)
class DecayReport:
    field: Optional[FieldSpec]
    alpha: float
    records: dict

    def __getitem__(self, prop: str) -> DecayRecord:
        return self.records[prop]

    def rows(self):
        for key, rec in self.records.items():
            for r, d in zip(rec.radii, rec.defects):
                yield {"property": key, "r": float(r), "defect": float(d)}

    def summary(self) -> dict:
        return {
            "field": self.field.to_record() if self.field else None,
            "alpha": self.alpha,
            "properties": {
                k: {
                    "description": rec.description,
                    "slope": rec.fit.slope,
                    "half_width": rec.fit.half_width,
                    "points_fitted": rec.fit.n_points,
                    "max_defect": float(np.max(rec.defects)),
                }
                for k, rec in self.records.items()
            },
        }


def _test_gradient(x: np.ndarray) -> np.ndarray:
    # grad of f = sin(x1) exp(-r/10), divided by exp(-r/10) (ratios are scale-free)
    r = np.linalg.norm(x, axis=-1)
    g = -np.sin(x[..., 0])[..., None] * x / (10.0 * r[..., None])
    g[..., 0] += np.cos(x[..., 0])
    return g


def dc1_report(fld: CoefficientField, radii, sphere_samples: int = 64) -> DecayReport:
    """Measure the decay of the defects of Z as r grows.

    Defects are maxima over ``sphere_samples`` quasi-uniform directions at
    each radius; slopes are least-squares fits of log(defect) on log(r).
    The commutator in (vi) uses the analytic Jacobian of Z when the field
    has an analytic gradient, central differences of Z otherwise.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3:
        raise ValueError("slope regression needs at least 3 radii")
    if np.any(np.diff(radii) <= 0) or radii[0] <= 2:
        raise ValueError("radii must be strictly increasing and > 2")
    if sphere_samples < 32:
        raise ValueError("need at least 32 directions per radius")
    n = fld.n
    dirs = quasi_uniform_directions(n, sphere_samples)
    x = radii[:, None, None] * dirs[None, :, :]
    r = radii[:, None]

    Z = z_vector(fld, x)
    m = mu(fld, x)
    gm = grad_mu(fld, x)
    dz = div_z(fld, x)
    J = z_jacobian(fld, x) if fld.has_analytic_gradient else z_jacobian_fd(fld, x)
    g = _test_gradient(x)
    comm = np.einsum("...ki,...k->...i", J - np.eye(n), g)

    defects = {
        "i": np.abs(np.einsum("...i,...i->...", Z, x) / r - r) / r,
        "ii": np.abs(m - 1.0),
        "iii": np.linalg.norm(gm, axis=-1) * r,
        "iv": np.abs(np.einsum("...i,...i->...", Z, gm)),
        "v": np.abs(dz - n),
        "vi": np.max(np.abs(comm), axis=-1) / np.linalg.norm(g, axis=-1),
    }
    records = {}
    for key, d in defects.items():
        agg = np.max(d, axis=1)
        records[key] = DecayRecord(key, PROPERTIES[key], radii, agg, loglog_fit(radii, agg))
    return DecayReport(fld.spec, fld.alpha, records)
