"""``rellich-lab`` command line entry point.

Every subcommand writes ``<outdir>/<subcommand>.csv`` and ``.json``.  The CSV
starts with ``# config: {...}`` (the full run configuration, enough to
reproduce the file via ``--config``) and ``# generated: <timestamp>``; the
remaining lines are deterministic for a fixed configuration.

Exit codes: 0 all checks pass, 1 some check fails, 2 usage or configuration
error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from .asymptotics import critical_exponent, growth_scan, lp_tail
from .coefficient_fields import FieldConstructionError, dc1_report, make_field
from .functionals import (
    DEFAULT_LADDER,
    WeightParams,
    default_eps,
    log_grid,
    scan_f,
    scan_g,
)
from .identity_checks import builtin_fields, lrad_probes, run_battery
from .quadrature import sphere_rule
from .special_solutions import helmholtz_field, ode_field, solve_radial_eigen

SUBCOMMANDS = ("check-identities", "dc1", "scan-f", "scan-g", "growth", "lp-threshold")
RPW_TOL = 1e-7
LRAD_TOL = 1e-12
DC1_SLACK = 0.15
DC1_EXACT = 1e-10
GROWTH_SLOPE_TOL = 0.05


class ConfigError(ValueError):
    """Invalid run configuration (exit code 2)."""


@dataclass
class RunConfig:
    subcommand: str
    n: int = 3
    field: dict = dataclasses.field(
        default_factory=lambda: {"kind": "identity", "c": 0.0, "alpha": 1.0, "direction": None}
    )
    solution: dict = dataclasses.field(
        default_factory=lambda: {"kind": "bessel", "kappa": 1.0, "scale": 1.0, "span": [1.0, 1000.0], "init": [1.0, 0.0], "tol": 1e-10}
    )
    ell: list = dataclasses.field(default_factory=lambda: list(DEFAULT_LADDER))
    eps: Optional[float] = None
    deltas: list = dataclasses.field(default_factory=lambda: [0.1, 0.5, 0.9])
    p: list = dataclasses.field(default_factory=lambda: [2.0, 2.8, 3.2])
    rho: list = dataclasses.field(default_factory=lambda: [20.0, 1000.0, 64])
    R: list = dataclasses.field(default_factory=lambda: [10.0, 500.0, 24])
    R_lp: list = dataclasses.field(default_factory=lambda: [2.0, 1000.0, 48])
    dc1_radii: list = dataclasses.field(default_factory=lambda: [10.0, 1000.0, 12])
    tol_mono: float = 1e-9
    r0_max: Optional[float] = 100.0
    degree: int = 24
    m_radial: int = 32
    probes: int = 10_000
    battery: str = "smooth"
    outdir: str = "rellich-out"

    def to_record(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(rec) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**rec)

    def header(self) -> str:
        return "# config: " + json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_header(cls, text: str) -> "RunConfig":
        for line in text.splitlines():
            if line.startswith("# config: "):
                return cls.from_record(json.loads(line[len("# config: "):]))
        raise ConfigError("no '# config:' header line found")


# ---------------------------------------------------------------------------
# argument parsing


def parse_range(text: str) -> list:
    """``a:b:k`` -> ``[a, b, k]`` (k log-spaced points from a to b)."""
    try:
        a, b, k = text.split(":")
        a, b, k = float(a), float(b), int(k)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:k, got {text!r}") from None
    if not (0 < a < b) or k < 2:
        raise argparse.ArgumentTypeError(f"need 0 < a < b and k >= 2 in {text!r}")
    return [a, b, k]


def parse_floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def grid(spec) -> np.ndarray:
    a, b, k = spec
    return log_grid(float(a), float(b), int(k))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file or a previous CSV report to rerun")
    common.add_argument("--out", dest="outdir", help="output directory (default rellich-out)")
    common.add_argument("--n", type=int, help="dimension")
    common.add_argument("--field", dest="field_kind", help="identity | radial-scalar | rank-one-radial | rank-one-fixed")
    common.add_argument("--c", type=float, help="field strength")
    common.add_argument("--alpha", type=float, help="field decay rate")
    common.add_argument("--direction", type=parse_floats, help="rank-one-fixed direction, comma separated")
    common.add_argument("--solution", dest="solution_kind", choices=["bessel", "ode"])
    common.add_argument("--kappa", type=float)
    common.add_argument("--scale", type=float, help="amplitude of the Bessel solution")
    common.add_argument("--span", type=parse_floats, help="ODE interval r0,r1")
    common.add_argument("--init", type=parse_floats, help="ODE initial data phi,phi'")
    common.add_argument("--ode-tol", type=float)
    common.add_argument("--ell", type=parse_floats, help="ell ladder")
    common.add_argument("--eps", type=float)
    common.add_argument("--delta", dest="deltas", type=parse_floats)
    common.add_argument("--p", type=parse_floats, help="exponents for lp-threshold")
    common.add_argument("--rho", type=parse_range, help="sphere radii a:b:k")
    common.add_argument("--R", type=parse_range, help="growth radii a:b:k")
    common.add_argument("--R-lp", dest="R_lp", type=parse_range, help="L^p radii a:b:k")
    common.add_argument("--radii", dest="dc1_radii", type=parse_range, help="dc1 radii a:b:k")
    common.add_argument("--tol-mono", type=float)
    common.add_argument("--r0-max", type=float, help="largest acceptable empirical threshold radius")
    common.add_argument("--degree", type=int)
    common.add_argument("--m-radial", type=int)
    common.add_argument("--probes", type=int)
    common.add_argument("--battery", choices=["smooth"])

    parser = argparse.ArgumentParser(prog="rellich-lab", description="Numerical checks for exterior eigenfunctions.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS + ("all",):
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    if ns.config:
        with open(ns.config) as fh:
            text = fh.read()
        if text.lstrip().startswith("{"):
            cfg = RunConfig.from_record(json.loads(text))
        else:
            cfg = RunConfig.from_header(text)
        cfg.subcommand = ns.subcommand
    else:
        cfg = RunConfig(ns.subcommand)
    for key in ("outdir", "n", "ell", "eps", "deltas", "p", "rho", "R", "R_lp", "dc1_radii",
                "tol_mono", "r0_max", "degree", "m_radial", "probes", "battery"):
        val = getattr(ns, key)
        if val is not None:
            setattr(cfg, key, val)
    fmap = {"field_kind": "kind", "c": "c", "alpha": "alpha", "direction": "direction"}
    for arg, key in fmap.items():
        val = getattr(ns, arg)
        if val is not None:
            cfg.field[key] = val
    smap = {"solution_kind": "kind", "kappa": "kappa", "scale": "scale", "span": "span", "init": "init", "ode_tol": "tol"}
    for arg, key in smap.items():
        val = getattr(ns, arg)
        if val is not None:
            cfg.solution[key] = val
    return cfg


# ---------------------------------------------------------------------------
# model construction


def build_field(cfg: RunConfig):
    f = cfg.field
    return make_field(
        f["kind"], n=cfg.n, c=float(f.get("c", 0.0)), alpha=float(f.get("alpha", 1.0)),
        direction=f.get("direction"),
    )


def build_solution(cfg: RunConfig, fld):
    s = cfg.solution
    kappa = float(s.get("kappa", 1.0))
    if s["kind"] == "bessel":
        return helmholtz_field(cfg.n, kappa, scale=float(s.get("scale", 1.0)))
    if s["kind"] == "ode":
        prof = solve_radial_eigen(
            fld, cfg.n, tuple(s.get("span", (1.0, 1000.0))), tuple(s.get("init", (1.0, 0.0))),
            float(s.get("tol", 1e-10)), kappa=kappa,
        )
        return ode_field(fld, cfg.n, prof, kappa)
    raise ConfigError(f"unknown solution kind {s['kind']!r}")


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(cfg: RunConfig, rows: list, stamp: Optional[str] = None) -> str:
    stamp = stamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    buf = io.StringIO()
    buf.write(cfg.header() + "\n")
    buf.write(f"# generated: {stamp}\n")
    if rows:
        cols = list(rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def csv_body(text: str) -> str:
    """The deterministic part of a report: everything except the timestamp line."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("# generated:"))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON is standard."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Outcome:
    name: str
    passed: bool
    rows: list
    summary: dict
    seconds: float = 0.0
    checks: dict = field(default_factory=dict)


def write_outcome(cfg: RunConfig, out: Outcome) -> None:
    atomic_write(os.path.join(cfg.outdir, f"{out.name}.csv"), csv_text(cfg, out.rows))
    doc = {"config": cfg.to_record(), "passed": out.passed, "checks": out.checks, "summary": out.summary}
    atomic_write(
        os.path.join(cfg.outdir, f"{out.name}.json"),
        json.dumps(_clean(doc), indent=2, sort_keys=True, default=_json_default) + "\n",
    )


# ---------------------------------------------------------------------------
# subcommands


def run_check_identities(cfg: RunConfig) -> Outcome:
    fields = builtin_fields(cfg.n)
    results = run_battery(cfg.n, cfg.degree, cfg.m_radial, fields)
    rows = []
    for r in results:
        m = r.meta
        rows.append({
            "identity": "rpw", "field": m["field"], "X": m["X"], "f": m["f"], "t": m["t"], "tau": m["tau"],
            "lhs": r.lhs, "rhs": r.rhs, "residual": r.residual, "pass": r.residual < RPW_TOL,
        })
    probes = lrad_probes(cfg.probes)
    rows.append({
        "identity": "lrad", "field": "random", "X": "", "f": "random", "t": math.nan, "tau": math.nan,
        "lhs": math.nan, "rhs": math.nan, "residual": probes.max_residual, "pass": probes.max_residual < LRAD_TOL,
    })
    failed = [r for r in rows if not r["pass"]]
    checks = {
        "rpw_max_residual": max(r.residual for r in results),
        "rpw_failures": sum(r.residual >= RPW_TOL for r in results),
        "lrad": probes.to_record(),
    }
    summary = {"failures": [{k: v for k, v in r.items() if k != "pass"} for r in failed]}
    return Outcome("check-identities", not failed, rows, summary, checks=checks)


def run_dc1(cfg: RunConfig) -> Outcome:
    fld = build_field(cfg)
    rep = dc1_report(fld, grid(cfg.dc1_radii))
    rows = list(rep.rows())
    checks = {}
    ok = True
    for key, rec in rep.records.items():
        exact = float(np.max(rec.defects)) < DC1_EXACT
        slope_ok = rec.fit.defined and rec.slope <= -fld.alpha + DC1_SLACK
        checks[key] = {"exact": exact, "slope_ok": bool(slope_ok)}
        ok &= exact or bool(slope_ok)
    return Outcome("dc1", ok, rows, rep.summary(), checks=checks)


def run_scan_f(cfg: RunConfig) -> Outcome:
    fld = build_field(cfg)
    u = build_solution(cfg, fld)
    eps = cfg.eps if cfg.eps is not None else default_eps(fld.alpha)
    rule = sphere_rule(cfg.n, cfg.degree)
    rows, per_ell, ok = [], {}, True
    smallest = None
    for ell in cfg.ell:
        rep = scan_f(fld, u, WeightParams(float(ell), eps), grid(cfg.rho), cfg.tol_mono, rule)
        good = rep.tail_ok(cfg.r0_max)
        if good and smallest is None:
            smallest = float(ell)
        ok &= good
        per_ell[str(float(ell))] = {**rep.summary(), "tail_ok": good}
        rows += [{"ell": float(ell), **row} for row in rep.rows()]
    summary = {"eps": eps, "r0_max": cfg.r0_max, "scans": per_ell, "smallest_positive_ell": smallest}
    return Outcome("scan-f", ok, rows, summary)


def run_scan_g(cfg: RunConfig) -> Outcome:
    fld = build_field(cfg)
    u = build_solution(cfg, fld)
    rule = sphere_rule(cfg.n, cfg.degree)
    rows, per, ok = [], {}, True
    for d in cfg.deltas:
        rep = scan_g(fld, u, cfg.n, float(d), grid(cfg.rho), cfg.tol_mono, rule)
        good = rep.tail_ok(cfg.r0_max)
        ok &= good
        per[str(float(d))] = {**rep.summary(), "tail_ok": good}
        rows += [{"delta": float(d), **row} for row in rep.rows()]
    return Outcome("scan-g", ok, rows, {"r0_max": cfg.r0_max, "scans": per})


def run_growth(cfg: RunConfig) -> Outcome:
    fld = build_field(cfg)
    u = build_solution(cfg, fld)
    gs = growth_scan(u, cfg.n, grid(cfg.R), cfg.deltas)
    slope_ok = abs(gs.slope - 1.0) <= GROWTH_SLOPE_TOL
    verdicts = gs.verdicts
    checks = {"slope_within_tolerance": slope_ok, "verdicts": {str(k): v for k, v in verdicts.items()}}
    return Outcome("growth", slope_ok and all(verdicts.values()), list(gs.rows()), gs.summary(), checks=checks)


def run_lp_threshold(cfg: RunConfig) -> Outcome:
    fld = build_field(cfg)
    u = build_solution(cfg, fld)
    crit = critical_exponent(cfg.n)
    rows, per, ok = [], {}, True
    for p in cfg.p:
        ts = lp_tail(u, cfg.n, float(p), grid(cfg.R_lp))
        expected = "divergent" if p < crit else "convergent" if p > crit else None
        good = expected is None or ts.classification == expected
        ok &= good
        per[str(float(p))] = {**ts.summary(), "expected": expected, "as_expected": good}
        rows += [{"p": float(p), **row} for row in ts.rows()]
    return Outcome("lp-threshold", ok, rows, {"critical_exponent": crit, "tails": per})


RUNNERS = {
    "check-identities": run_check_identities,
    "dc1": run_dc1,
    "scan-f": run_scan_f,
    "scan-g": run_scan_g,
    "growth": run_growth,
    "lp-threshold": run_lp_threshold,
}


def execute(cfg: RunConfig) -> list:
    names = SUBCOMMANDS if cfg.subcommand == "all" else (cfg.subcommand,)
    outcomes = []
    for name in names:
        sub_cfg = dataclasses.replace(cfg, subcommand=name, field=dict(cfg.field), solution=dict(cfg.solution))
        t0 = time.perf_counter()
        out = RUNNERS[name](sub_cfg)
        out.seconds = time.perf_counter() - t0
        write_outcome(sub_cfg, out)
        outcomes.append(out)
    if cfg.subcommand == "all":
        rows = [{"subcommand": o.name, "passed": o.passed} for o in outcomes]
        summary = {o.name: {"passed": o.passed, "seconds": round(o.seconds, 3)} for o in outcomes}
        write_outcome(cfg, Outcome("all", all(o.passed for o in outcomes), rows, summary))
    return outcomes


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        cfg = config_from_args(ns)
        outcomes = execute(cfg)
    except (ConfigError, FieldConstructionError, FileNotFoundError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"rellich-lab: error: {exc}", file=sys.stderr)
        return 2
    for o in outcomes:
        print(f"{o.name:18s} {'PASS' if o.passed else 'FAIL'}  ({o.seconds:.2f} s)")
    return 0 if all(o.passed for o in outcomes) else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
