"""Bessel functions of the first kind for real order nu >= 0.

Two regimes are used:

* the ascending power series for ``t <= max(SERIES_SWITCH, 1.2 nu)``,
* the Hankel large-argument expansion beyond that point.  For orders
  ``nu >= 1`` the expansion is applied to the fractional orders
  ``nu0 = nu - floor(nu)`` and ``nu0 + 1`` only, and the result is
  carried up by the three-term recurrence, which is stable in the
  forward direction while the order stays below the argument.

Everything is vectorised over the argument; the order is a scalar.
"""

from __future__ import annotations

import math

import numpy as np

# Crossover between the two regimes.  At t ~ 13 the cancellation error of the
# series (~ eps * I_nu(t)) and the smallest term of the asymptotic expansion
# (~ exp(-2t)) are both around 1e-12.
SERIES_SWITCH = 13.0

_MAX_TERMS = 400


def _series(nu: float, t: np.ndarray) -> np.ndarray:
    half = 0.5 * t
    with np.errstate(divide="ignore", invalid="ignore"):
        log_lead = nu * np.log(half) - math.lgamma(nu + 1.0)
    term = np.exp(log_lead) if nu > 0 else np.ones_like(t)
    if nu > 0:
        term = np.where(t == 0.0, 0.0, term)
    total = term.copy()
    q = half * half
    k_peak = float(np.max(half, initial=0.0))
    for k in range(1, _MAX_TERMS):
        term = -term * q / (k * (k + nu))
        total = total + term
        if k > k_peak and np.all(np.abs(term) <= 1e-17 * np.abs(total) + 1e-300):
            break
    return total


def _hankel(nu: float, t: np.ndarray) -> np.ndarray:
    """Large-argument expansion, truncated at the smallest term."""
    mu = 4.0 * nu * nu
    p = np.ones_like(t)
    q = np.zeros_like(t)
    term = np.ones_like(t)
    last = np.full_like(t, np.inf)
    active = np.ones(t.shape, dtype=bool)
    for k in range(1, 200):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * t)
        mag = np.abs(term)
        # asymptotic series: stop each point at its smallest term
        active &= mag < last
        if not np.any(active):
            break
        contrib = np.where(active, term, 0.0)
        if k % 2 == 1:
            sign = -1.0 if (k // 2) % 2 else 1.0
            q = q + sign * contrib
        else:
            sign = -1.0 if (k // 2) % 2 else 1.0
            p = p + sign * contrib
        last = np.where(active, mag, last)
        active &= mag > 1e-17
        if not np.any(active):
            break
    chi = t - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * t)) * (p * np.cos(chi) - q * np.sin(chi))


def _large_argument(nu: float, t: np.ndarray) -> np.ndarray:
    if nu < 1.0:
        return _hankel(nu, t)
    steps = int(math.floor(nu))
    nu0 = nu - steps
    j_prev = _hankel(nu0, t)
    j_cur = _hankel(nu0 + 1.0, t)
    order = nu0 + 1.0
    for _ in range(steps - 1):
        j_prev, j_cur = j_cur, (2.0 * order / t) * j_cur - j_prev
        order += 1.0
    return j_cur


def bessel_j(nu: float, t):
    """Bessel function of the first kind ``J_nu(t)``.

    Parameters
    ----------
    nu : float
        Order, ``nu >= 0``.
    t : float or array_like
        Argument(s), ``t >= 0``.

    Returns
    -------
    float or ndarray
        Same shape as ``t``.
    """
    if nu < 0:
        raise ValueError(f"order must be nonnegative, got {nu}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(~np.isfinite(t_arr)):
        raise ValueError("argument must be finite and nonnegative")
    flat = np.atleast_1d(t_arr).ravel()
    out = np.empty_like(flat)
    switch = max(SERIES_SWITCH, 1.2 * nu)
    small = flat <= switch
    if np.any(small):
        out[small] = _series(nu, flat[small])
    if np.any(~small):
        out[~small] = _large_argument(nu, flat[~small])
    out = out.reshape(t_arr.shape)
    return float(out) if out.ndim == 0 else out
