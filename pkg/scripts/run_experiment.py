"""Run one or more TOML configs and print a one-line summary per config.

    python scripts/run_experiment.py configs/*.toml --output-root runs/
"""
import argparse
import sys
from pathlib import Path

from dpexperts.harness import load_config, run_batch


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("configs", nargs="+", type=Path)
    p.add_argument("--output-root", type=Path, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trials", type=int, default=None, help="override the trial count")
    args = p.parse_args(argv)

    for path in args.configs:
        cfg = load_config(path)
        cfg.workers = args.workers
        if args.trials is not None:
            cfg.trials = args.trials
        if args.output_root is not None:
            cfg.output_dir = str(args.output_root / path.stem)
        report = run_batch(cfg)
        print(f"{path.stem:<28} T={cfg.T:<7} mean regret {report.mean_regret:10.2f} "
              f"+- {report.stderr:8.2f}  restarts {sum(report.restart_counts):4d}  "
              f"audit {'ok' if report.audit_passed else 'FAIL'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
