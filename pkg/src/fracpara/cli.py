"""Command-line front end: one run directory per invocation.

Every subcommand writes ``results.json`` (stable key order, one timestamp
field), CSV tables, optional figures and binary archives, prints one
PASS/FAIL line per check and exits 0 when every enabled check passes,
1 when one fails and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import RunResult, run_command
from .scenario import PRESETS, ConfigError, Scenario, load_scenario

COMMANDS = ("op-check", "extension-check", "duality-check", "reduction", "dn-local", "dn-nonlocal",
            "transfer", "pushforward", "decay", "kernel-check")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("fracpara")


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got '{text}'")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return sorted(obj) if isinstance(obj, set) else list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(value):
    """JSON has no infinities; encode them as strings."""
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


def dump_json(path: Path, payload: dict):
    text = json.dumps(_finite(json.loads(json.dumps(payload, default=_jsonable))), sort_keys=True, indent=2,
                      ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def _enabled(sc: Scenario, name: str) -> bool:
    return sc.enabled(name) and sc.enabled(name.split("[", 1)[0])


def write_run(out: Path, result: RunResult, sc: Scenario, args, emit_plots: bool) -> dict:
    """Write all artifacts of ``result`` into ``out``; return the results payload."""
    out.mkdir(parents=True, exist_ok=True)
    checks = []
    for c in result.checks:
        entry = c.as_dict()
        entry["enabled"] = _enabled(sc, c.name)
        checks.append(entry)
    files = []
    for name, (header, rows) in sorted(result.tables.items()):
        path = out / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        files.append(path.name)
    for name, item in sorted(result.archives.items()):
        if isinstance(item, tuple):  # Cauchy pair with its grid and masks
            pair, grid, masks = item
            path = out / f"{name}.csv"
            pair.to_csv(path, grid, masks)
        else:
            path = out / f"{name}.npz"
            item.save(path)
        files.append(path.name)
    if emit_plots:
        from .plots import render

        for spec in result.plots:
            files.append(render(spec, out).name)
    payload = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "command": result.command,
        "scenario": sc.name,
        "config": sc.as_dict(),
        "disabled": sorted(sc.disabled),
        "seed": args.seed,
        "refine": args.refine,
        "checks": checks,
        "values": result.values,
        "passed": all(c["passed"] for c in checks if c["enabled"]),
        "files": sorted(files),
    }
    dump_json(out / "results.json", payload)
    return payload


def _print_checks(checks: list, stream=None):
    stream = sys.stdout if stream is None else stream
    for c in checks:
        if not c.get("enabled", True):
            status = "SKIP"
        else:
            status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {c['name']}: {c['value']:.4g} {c['relation']} {c['tolerance']:.4g}", file=stream)


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.config, preset=args.scenario, s_override=args.s)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.refine < 1:
        print("config error: --refine must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path("runs") / f"{args.command}-{sc.name}"
    result = run_command(args.command, sc, refine=args.refine, seed=args.seed)
    payload = write_run(out, result, sc, args, args.emit_plots)
    _print_checks(payload["checks"])
    failed = [c["name"] for c in payload["checks"] if c["enabled"] and not c["passed"]]
    print(f"{'PASS' if not failed else 'FAIL'} {args.command} ({len(payload['checks'])} checks) -> {out}")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _tolerance_ratio(value: float, relation: str, tol: float) -> float:
    """Distance to the tolerance as a ratio; above 1 means the check fails."""
    if relation == "<=":
        if tol > 0:
            return value / tol
        return 0.0 if value <= 0 else math.inf
    return tol / value if value > 0 else math.inf


def cmd_report(args) -> int:
    """Aggregate ``results.json`` files of earlier runs into one summary table."""
    rows = []
    for run in args.runs:
        path = Path(run)
        path = path / "results.json" if path.is_dir() else path
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: cannot read run results '{path}': {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for c in data.get("checks", []):
            rows.append([data["command"], data["scenario"], c["name"], c["value"], c["relation"],
                         c["tolerance"], c["passed"], c.get("enabled", True)])
    out = Path(args.out) if args.out else Path("runs") / "report"
    out.mkdir(parents=True, exist_ok=True)
    header = ["command", "scenario", "check", "value", "relation", "tolerance", "passed", "enabled"]
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for r in rows:
        cells = [f"{v:.4g}" if isinstance(v, float) else str(v) for v in r]
        lines.append("| " + " | ".join(cells) + " |")
    (out / "summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.emit_plots and rows:
        from .plots import render

        ratios = [_tolerance_ratio(float(r[3]), r[4], float(r[5])) for r in rows]
        render({"kind": "summary", "name": "summary", "names": [f"{r[0]}:{r[2]}" for r in rows],
                "ratios": ratios, "passed": [r[6] for r in rows]}, out)
    failed = [f"{r[0]}:{r[2]}" for r in rows if r[7] and not r[6]]
    for r in rows:
        status = "SKIP" if not r[7] else ("PASS" if r[6] else "FAIL")
        print(f"{status} {r[0]}:{r[2]}")
    print(f"{len(rows)} checks from {len(args.runs)} runs, {len(failed)} failed -> {out}")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracpara",
                                     description="Fractional parabolic operators, extensions and DN maps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="run directory (default runs/<command>-<scenario>)")
    common.add_argument("--emit-plots", type=_bool, default=True, metavar="BOOL", help="write figures (default true)")

    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=f"run the {name} diagnostics")
        p.add_argument("--config", metavar="PATH", help="TOML scenario file")
        p.add_argument("--scenario", choices=sorted(PRESETS), help="preset the config is layered on")
        p.add_argument("--s", type=float, metavar="FLOAT", help="restrict to one fractional order")
        p.add_argument("--refine", type=int, default=1, metavar="K", help="number of nested grids")
        p.add_argument("--seed", type=int, default=0, metavar="INT", help="seed for randomized probes")
        p.set_defaults(handler=cmd_run)

    p = sub.add_parser("report", parents=[common], help="aggregate earlier runs into one summary table")
    p.add_argument("runs", nargs="+", metavar="RUN", help="run directories or results.json files")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors are configuration errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
