"""Acceptance criteria 1-11, one verdict line each (see the terminal summary)."""

import math
import os
import time

import numpy as np
import pytest

from rellich_lab.asymptotics import growth_scan, lp_tail
from rellich_lab.cli import csv_body, run
from rellich_lab.coefficient_fields import dc1_report, make_field
from rellich_lab.functionals import WeightParams, g_functional, log_grid, scan_f, scan_g
from rellich_lab.identity_checks import lrad_probes, run_battery
from rellich_lab.quadrature import sphere_rule
from rellich_lab.special_solutions import (
    helmholtz_field,
    helmholtz_phi,
    helmholtz_radial,
    ode_field,
    plane_wave_constant,
    plane_wave_superposition,
    solve_radial_eigen,
)

RHO = log_grid(20.0, 1000.0, 64)
VAR = make_field("radial-scalar", n=3, c=0.5, alpha=1.0)  # a(r) = 1 + 0.5/r
IDENT = make_field("identity", n=3)


@pytest.fixture(scope="module")
def bessel():
    return helmholtz_field(3, 1.0)


@pytest.fixture(scope="module")
def ode_solution():
    return ode_field(VAR, 3, solve_radial_eigen(VAR, 3, (1.0, 1000.0)))


@pytest.fixture(scope="module")
def f_scans(bessel, ode_solution):
    p = WeightParams(50.0, 0.25)
    t0 = time.perf_counter()
    reps = {
        "bessel": scan_f(IDENT, bessel, p, RHO, 1e-9),
        "ode a=1+0.5/r": scan_f(VAR, ode_solution, p, RHO, 1e-9),
    }
    return reps, time.perf_counter() - t0


def test_c01_pointwise_identity(acceptance_report):
    t0 = time.perf_counter()
    s = lrad_probes(10_000)
    dt = time.perf_counter() - t0
    ok = s.max_residual < 1e-12 and dt < 5.0
    acceptance_report(
        1, ok,
        f"lrad max residual {s.max_residual:.2e} over {s.count} probes in {dt:.2f} s "
        f"(unit-floor residual {s.max_unit_floor_residual:.2e})",
    )
    assert ok


def _at_rounding_floor(res, floor=1e-12):
    """Absolute defect below ``floor`` times the largest single term: the two
    sides agree to rounding, so a finer grid cannot be expected to improve."""
    terms = [abs(v) for v in (*res.lhs_terms.values(), *res.rhs_terms.values())]
    return abs(res.lhs - res.rhs) <= floor * max(1.0, *terms)


def test_c02_rpw_battery(acceptance_report):
    worst, fails, refine_bad = 0.0, [], []
    for n in (3, 2):
        coarse = run_battery(n, 24, 32)
        fine = run_battery(n, 48, 64)
        for a, b in zip(coarse, fine):
            worst = max(worst, a.residual)
            if a.residual >= 1e-7:
                fails.append(f"{a.meta['field']}/n={n}/{a.meta['X']}/{a.meta['f']}/[{a.meta['t']:g},{a.meta['tau']:g}]")
            if not (b.residual <= a.residual or b.residual < 1e-12 or _at_rounding_floor(b)):
                refine_bad.append(a.meta)
    ok = not fails and not refine_bad
    detail = f"max residual {worst:.2e} at degree 24/m_radial 32, {len(fails)} of {2 * len(coarse)} cases >= 1e-7"
    if fails:
        detail += f" (e.g. {fails[0]})"
    detail += f"; refinement non-monotone in {len(refine_bad)} cases"
    acceptance_report(2, ok, detail)
    assert ok, fails


def test_c03_decay_suite(acceptance_report):
    radii = np.geomspace(10, 1000, 12)
    fixed = dc1_report(make_field("rank-one-fixed", n=3, c=0.5, alpha=1.0), radii)
    slopes = {k: fixed[k].slope for k in ("ii", "iii", "iv", "v", "vi")}
    radial = dc1_report(make_field("radial-scalar", n=3, c=0.5, alpha=1.0), radii)
    exact = max(radial["i"].defects.max(), radial["v"].defects.max())
    ok = all(s <= -1.0 + 0.15 for s in slopes.values()) and exact < 1e-10
    acceptance_report(
        3, ok,
        "slopes " + ", ".join(f"{k}={v:.3f}" for k, v in slopes.items()) + f"; radial (i),(v) max defect {exact:.1e}",
    )
    assert ok


def test_c04_bessel_fidelity(acceptance_report):
    prof = helmholtz_radial(3, 1.0, r_min=1.0, r_max=100.0)
    r = np.linspace(1.0, 100.0, 20001)
    sup = float(np.max(np.abs(prof(r)[0] / math.sqrt(2 / math.pi) - np.sin(r) / r)))
    rule = sphere_rule(3, 100)
    c = plane_wave_constant(3, 1.0, rule)
    d = np.array([0.3, -0.5, 0.81]) / np.linalg.norm([0.3, -0.5, 0.81])
    rel = 0.0
    for rho in np.linspace(1.0, 50.0, 20):
        ref = c * float(helmholtz_phi(3, 1.0, rho)[0])
        pw = plane_wave_superposition(3, 1.0, rho * d, rule).real
        rel = max(rel, abs(pw - ref) / abs(ref))
    ok = sup < 1e-8 and rel < 1e-7
    acceptance_report(4, ok, f"sup |u - sin r/r| = {sup:.2e} on [1,100]; plane-wave max rel err {rel:.2e} at 20 radii")
    assert ok


def test_c05_f_monotonicity(f_scans, acceptance_report):
    reps, dt = f_scans
    ok = dt < 60 and all(r.empirical_r0 <= 100 for r in reps.values())
    detail = "; ".join(f"{k}: r0={r.empirical_r0:.1f}, {r.n_violations} violations before r0" for k, r in reps.items())
    acceptance_report(5, ok, f"{detail}; {dt:.2f} s")
    assert ok


def test_c06_f_positivity(f_scans, acceptance_report):
    reps, _ = f_scans
    ok = all(r.positivity_tail for r in reps.values())
    acceptance_report(6, ok, "; ".join(f"{k}: positive from rho={r.positivity_start}" for k, r in reps.items()))
    assert ok


def test_c07_g_exact_case(acceptance_report):
    u = helmholtz_field(3, 1.0, scale=math.sqrt(math.pi / 2))
    rule = sphere_rule(3, 24)
    rel = max(abs(g_functional(IDENT, u, 3, float(r), rule) / (4 * math.pi * r * r) - 1) for r in RHO)
    incr = all(np.all(scan_g(IDENT, u, 3, d, RHO).diffs > 0) for d in (0.1, 0.5, 0.9))
    ok = rel < 1e-9 and incr
    acceptance_report(7, ok, f"max rel |G/(4 pi rho^2) - 1| = {rel:.1e}; strictly increasing for all delta: {incr}")
    assert ok


def test_c08_g_variable(ode_solution, acceptance_report):
    rep = scan_g(VAR, ode_solution, 3, 0.5, RHO)
    tail_clean = rep.empirical_r0 < RHO[-1]
    ok = tail_clean and rep.positivity_tail
    acceptance_report(8, ok, f"empirical R1 = {rep.empirical_r0:.1f}, {rep.n_violations} violations in total")
    assert ok


def test_c09_growth(bessel, ode_solution, acceptance_report):
    grid = np.geomspace(10, 500, 24)
    out, ok = [], True
    for name, u in (("bessel", bessel), ("ode", ode_solution)):
        g = growth_scan(u, 3, grid, (0.1, 0.5, 0.9))
        good = abs(g.slope - 1) <= 0.05 and all(g.verdicts.values())
        ok &= good
        out.append(f"{name}: slope {g.slope:.4f} +- {g.fit.half_width:.4f}, verdicts {list(g.verdicts.values())}")
    acceptance_report(9, ok, "; ".join(out))
    assert ok


def test_c10_lp_threshold(bessel, acceptance_report):
    grid = np.geomspace(2, 1000, 48)
    t0 = time.perf_counter()
    got = {p: lp_tail(bessel, 3, p, grid) for p in (2.0, 2.8, 3.2)}
    dt = time.perf_counter() - t0
    want = {2.0: "divergent", 2.8: "divergent", 3.2: "convergent"}
    ok = dt < 30 and all(got[p].classification == want[p] for p in want)
    detail = ", ".join(f"p={p}: {t.classification} (slope {t.fit.slope:.3f})" for p, t in got.items())
    acceptance_report(10, ok, f"{detail}; {dt:.2f} s")
    assert ok


def test_c11_determinism(tmp_path, acceptance_report):
    out = str(tmp_path / "run")
    args = ["all", "--field", "radial-scalar", "--c", "0.5", "--solution", "ode", "--out", out]
    bodies = []
    for _ in range(2):
        run(args)
        files = sorted(f for f in os.listdir(out) if f.endswith(".csv"))
        bodies.append({f: csv_body(open(os.path.join(out, f)).read()) for f in files})
    ok = bodies[0] == bodies[1] and len(bodies[0]) == 7
    acceptance_report(11, ok, f"{len(bodies[0])} CSV reports, bodies identical across runs: {bodies[0] == bodies[1]}")
    assert ok
