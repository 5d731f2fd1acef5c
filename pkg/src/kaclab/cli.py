"""Command line: kaclab run|validate|report|replay.

Exit codes: 0 ok, 1 configuration/validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, parse_config, validate_config

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _cmd_validate(args):
    cfg, errors = validate_config(args.config)
    if errors:
        for e in errors:
            print(e, file=sys.stderr)
        print(f"{len(errors)} error(s)", file=sys.stderr)
        return EXIT_INVALID
    print(f"OK: {cfg.kind} '{cfg.name}', N={cfg.N}, R={cfg.R}, {len(cfg.t_grid)} grid times, "
          f"config hash {cfg.config_hash()[:12]}")
    return EXIT_OK


def _cmd_run(args):
    from .experiments import run_experiment
    cfg, errors = validate_config(args.config)
    if errors:
        for e in errors:
            print(e, file=sys.stderr)
        return EXIT_INVALID
    if args.output:
        cfg.output = args.output
    files = run_experiment(cfg, log=None if args.quiet else print)
    print(json.dumps(files, indent=2))
    return EXIT_OK


def _fmt(v):
    if v is None or v == "":
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _cmd_report(args):
    from .chaos_metrics import ChaosReport
    run = Path(args.run_dir)
    path = run / "report.json"
    if not path.exists():
        print(f"{run}: no report.json (run incomplete?)", file=sys.stderr)
        return EXIT_RUNTIME
    rep = ChaosReport.read_json(path)
    print(f"{rep.meta.get('kind')} {rep.meta.get('name', '')}  "
          f"(config {str(rep.meta.get('config_hash', ''))[:12]})")
    cols = [c for c in ("N", "t", "omega_1", "omega_2", "omega_inf", "omega_1_exact",
                        "entropy_rel", "fisher_rel", "m4", "reference_m4")
            if any(r.get(c) is not None for r in rep.rows)]
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rep.rows:
        print("  ".join(f"{_fmt(r.get(c)):>12}" for c in cols))
    for name, fit in sorted(rep.fits.items()):
        print(f"fit {name}: " + ", ".join(f"{k}={_fmt(v)}" for k, v in fit.items()))
    fails = rep.meta.get("failures", {})
    nfail = sum(v.get("count", 0) for v in fails.values())
    if nfail:
        print(f"{nfail} replica(s) failed and were excluded")
    return EXIT_OK


def _cmd_replay(args):
    from .experiments import file_digest, run_experiment
    mpath = Path(args.manifest)
    man = json.loads(mpath.read_text())
    cfg = parse_config(dict(man["config"]), source=str(mpath))
    src = mpath.parent
    cfg.output = args.output or str(src / "replay")
    run_experiment(cfg, log=None)
    same = True
    for name in man.get("results", ["report.json", "timeseries.csv"]):
        a, b = src / name, Path(cfg.output) / name
        if not a.exists():
            print(f"{name}: missing in original run")
            same = False
            continue
        ok = file_digest(a) == file_digest(b)
        same &= ok
        print(f"{name}: {'identical' if ok else 'DIFFERENT'}")
    return EXIT_OK if same else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="kaclab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("run", help="run an experiment from a YAML config")
    a.add_argument("config")
    a.add_argument("--output", help="override the output directory")
    a.add_argument("--quiet", action="store_true")
    a.set_defaults(fn=_cmd_run)
    a = sub.add_parser("validate", help="check a config and list every problem")
    a.add_argument("config")
    a.set_defaults(fn=_cmd_validate)
    a = sub.add_parser("report", help="summarize a finished run directory")
    a.add_argument("run_dir")
    a.set_defaults(fn=_cmd_report)
    a = sub.add_parser("replay", help="rerun a manifest and compare result bytes")
    a.add_argument("manifest")
    a.add_argument("--output", help="directory for the replayed run (default <run>/replay)")
    a.set_defaults(fn=_cmd_replay)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as e:
        for msg in e.errors:
            print(msg, file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - the CLI maps every failure to an exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
