"""Command-line scenario runner.

``gforms --scenario disk_stokes`` runs a bundled scenario (or a JSON file),
prints a table of check results, optionally writes a JSON report, and exits
with 0 when every check passes, 1 when a check fails, 2 for an invalid
scenario and 3 for an internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from . import __version__
from .chart_atlas import AtlasError
from .checks import CHECKS, DEFAULT_TOLERANCES, CheckOutcome, RunContext
from .exprs import EvalError
from .integrate import DEFAULT_PANELS
from .scenario import Scenario, ScenarioError, catalog_listing, decode, parse_scenario, read_scenario_text
from .tensor_fields import FieldError
from .value_space import SpaceMismatchError

SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SCHEMA = 2
EXIT_INTERNAL = 3

# Report keys whose values change between identical runs.
VOLATILE_KEYS = ("timestamp", "timing")


@dataclass
class CheckRecord:
    index: int
    kind: str
    name: str
    status: str
    residual: float
    tolerance: float
    details: dict = field(default_factory=dict)
    timing: float = 0.0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "name": self.name,
            "status": self.status,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "details": self.details,
            "timing": self.timing,
        }


@dataclass
class Report:
    scenario: str
    description: str
    environment: dict
    checks: list[CheckRecord]

    @property
    def passed(self) -> bool:
        return all(c.status == "pass" for c in self.checks)

    def summary(self) -> dict:
        n_pass = sum(c.status == "pass" for c in self.checks)
        return {"total": len(self.checks), "passed": n_pass, "failed": len(self.checks) - n_pass}

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "description": self.description,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "environment": self.environment,
            "checks": [c.to_dict() for c in self.checks],
            "summary": self.summary(),
        }


def _clean(obj):
    """Make a details tree JSON-safe: numpy scalars to floats, non-finite to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def run_scenario(
    sc: Scenario,
    order: int | None = None,
    seed: int | None = None,
    fd_step: float = 1e-5,
    tolerance_scale: float = 1.0,
    mc_samples: int | None = None,
) -> Report:
    """Run every check of ``sc`` in declaration order."""
    if tolerance_scale <= 0:
        raise ValueError("tolerance scale must be positive")
    ctx = RunContext(order=order or sc.order, seed=sc.seed if seed is None else seed, fd_step=fd_step)
    if mc_samples is not None:
        ctx.mc_samples = mc_samples
    records = []
    for i, chk in enumerate(sc.checks):
        kind = chk["kind"]
        tol = float(chk.get("tolerance", DEFAULT_TOLERANCES[kind])) * tolerance_scale
        start = time.perf_counter()
        try:
            outcome = CHECKS[kind](sc, chk, ctx)
        except ScenarioError as exc:
            raise ScenarioError(f"checks[{i}]" + (f".{exc.location}" if exc.location else ""), exc.message) from None
        except SpaceMismatchError as exc:
            raise ScenarioError(f"checks[{i}]", f"value spaces do not fit: {exc}") from None
        except (AtlasError, FieldError, EvalError) as exc:
            # a check that cannot be carried out fails with an infinite residual
            outcome = CheckOutcome(float("inf"), {"error": f"{type(exc).__name__}: {exc}"})
        elapsed = time.perf_counter() - start
        residual = float(outcome.residual)
        status = "pass" if residual <= tol else "fail"
        records.append(CheckRecord(i, kind, chk.get("name", kind), status, residual, tol,
                                   _clean(outcome.details), round(elapsed, 3)))
    env = {
        "version": __version__,
        "seed": ctx.seed,
        "order": ctx.order,
        "panels": dict(DEFAULT_PANELS),
        "fd_step": ctx.fd_step,
        "tolerance_scale": tolerance_scale,
        "samples": sc.samples,
        "mc_samples": ctx.mc_samples,
    }
    return Report(sc.id, sc.description, env, records)


def format_table(report: Report) -> str:
    rows = [("#", "check", "kind", "status", "residual", "tolerance")]
    for c in report.checks:
        rows.append((str(c.index), c.name, c.kind, c.status.upper(), f"{c.residual:.3e}", f"{c.tolerance:.1e}"))
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    lines = [f"scenario {report.scenario}: {report.description}".rstrip(": ")]
    for j, r in enumerate(rows):
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    s = report.summary()
    lines.append(f"{s['passed']}/{s['total']} checks passed")
    return "\n".join(lines)


def report_json(report: Report) -> str:
    return json.dumps(_clean(report.to_dict()), indent=2, sort_keys=False) + "\n"


def strip_volatile(doc):
    """A report tree with the timestamp and timing entries removed, for comparisons."""
    if isinstance(doc, dict):
        return {k: strip_volatile(v) for k, v in doc.items() if k not in VOLATILE_KEYS}
    if isinstance(doc, list):
        return [strip_volatile(v) for v in doc]
    return doc


def list_catalog() -> str:
    rows = catalog_listing()
    width = max(len(n) for n, _ in rows)
    return "\n".join(f"{n.ljust(width)}  {d}" for n, d in rows)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gforms", description="Run vector-valued differential form scenarios.")
    p.add_argument("--scenario", metavar="PATH", help="scenario JSON file or bundled scenario name")
    p.add_argument("--report", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    p.add_argument("--quad-order", type=int, metavar="Q", help="Gauss-Legendre points per axis and panel")
    p.add_argument("--fd-step", type=float, default=1e-5, metavar="H", help="finite-difference step (default 1e-5)")
    p.add_argument("--seed", type=int, metavar="S", help="override the scenario seed")
    p.add_argument("--tolerance-scale", type=float, default=1.0, metavar="T", help="multiply every tolerance")
    p.add_argument("--list", action="store_true", help="list catalog manifolds and bundled scenarios")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print(list_catalog())
        return EXIT_OK
    if not args.scenario:
        print("error: --scenario or --list is required", file=sys.stderr)
        return EXIT_SCHEMA
    if args.quad_order is not None and args.quad_order < 1:
        print("error: --quad-order must be positive", file=sys.stderr)
        return EXIT_SCHEMA
    if args.tolerance_scale <= 0 or args.fd_step <= 0:
        print("error: --tolerance-scale and --fd-step must be positive", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        sc = parse_scenario(decode(read_scenario_text(args.scenario)))
        report = run_scenario(sc, args.quad_order, args.seed, args.fd_step, args.tolerance_scale)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ScenarioError as exc:
        print(f"schema error at {exc.location}: {exc.message}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception:  # noqa: BLE001 - any other failure is an internal error by contract
        traceback.print_exc()
        return EXIT_INTERNAL
    print(format_table(report), file=sys.stderr if args.report == "-" else sys.stdout)
    if args.report:
        text = report_json(report)
        if args.report == "-":
            sys.stdout.write(text)
        else:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(text)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
