"""Run every YAML config in configs/ (or the ones given) and print a summary line each.

    python3 scripts/run_all_configs.py [--out runs] [--max-R 50] [configs/*.yaml]

--max-R caps the replica count for a quick pass; outputs then go to a
separate directory so full runs are never mixed with capped ones.
"""
import argparse
import sys
import time
from pathlib import Path

from kaclab.config import validate_config
from kaclab.experiments import run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("configs", nargs="*")
    ap.add_argument("--out", default=str(ROOT / "runs"))
    ap.add_argument("--max-R", type=int, default=None)
    args = ap.parse_args()
    paths = [Path(p) for p in args.configs] or sorted((ROOT / "configs").glob("*.yaml"))
    status = 0
    for path in paths:
        cfg, errors = validate_config(path)
        if errors:
            print(f"{path.name}: INVALID", *errors, sep="\n  ")
            status = 1
            continue
        tag = path.stem
        if args.max_R and cfg.R > args.max_R:
            cfg.R = args.max_R
            tag += f"_R{args.max_R}"
        cfg.output = str(Path(args.out) / tag)
        t0 = time.perf_counter()
        files = run_experiment(cfg)
        print(f"{path.name}: {time.perf_counter() - t0:.1f}s -> {files['report']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
