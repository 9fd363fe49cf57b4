"""Small numerical utilities shared by the modules."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

# Defects below this are treated as exact zeros when fitting slopes.
ZERO_FLOOR = 1e-14


def pairwise_sum(values, axis=-1):
    """Sum along ``axis`` in fixed index order using pairwise reduction.

    ``np.add.reduce`` on a contiguous float64 axis is numpy's pairwise
    algorithm; the result depends only on the values and their order.
    """
    arr = np.asarray(values)
    arr = arr.astype(np.result_type(arr.dtype, np.float64), copy=False)
    arr = np.ascontiguousarray(np.moveaxis(arr, axis, -1))
    return np.add.reduce(arr, axis=-1)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    half_width: float
    n_points: int

    @property
    def defined(self) -> bool:
        return self.n_points >= 2 and np.isfinite(self.slope)


def loglog_fit(x, y, *, floor: float = ZERO_FLOOR, confidence: float = 0.95) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x``.

    Points with ``|y| <= floor`` are dropped.  With fewer than two usable
    points the slope is NaN ("undefined-flat").  ``half_width`` is the
    two-sided Student-t confidence half-width of the slope (NaN for two
    points).
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = (y > floor) & np.isfinite(y)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    m = lx.size
    if m < 2:
        return SlopeFit(float("nan"), float("nan"), float("nan"), m)
    res = stats.linregress(lx, ly)
    if m > 2:
        half = float(stats.t.ppf(0.5 + confidence / 2, m - 2) * res.stderr)
    else:
        half = float("nan")
    return SlopeFit(float(res.slope), float(res.intercept), half, m)


def thread_count() -> int:
    env = os.environ.get("RELLICH_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def ordered_map(fn, items):
    """``list(map(fn, items))``, possibly threaded; output order is input order."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def fd_step(r, rel: float = 1e-6, floor: float = 1e-5):
    """Central-difference step ``max(floor, rel * r)``."""
    return np.maximum(floor, rel * np.asarray(r, dtype=float))


def quasi_uniform_directions(n: int, m: int) -> np.ndarray:
    """``m`` deterministic, roughly uniform unit vectors in R^n.

    Equispaced angles for n = 2, a Fibonacci lattice for n = 3, and
    normalised Gaussian samples from a fixed seed otherwise.
    """
    if n == 2:
        th = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    if n == 3:
        k = np.arange(m) + 0.5
        z = 1.0 - 2.0 * k / m
        phi = np.pi * (1.0 + 5.0**0.5) * k
        s = np.sqrt(1.0 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    g = np.random.default_rng(12345).standard_normal((m, n))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)
