"""Mean regret per round across horizons for one config, to check sublinear growth.

    python scripts/regret_vs_horizon.py configs/shifting_bernoulli_svt.toml --horizons 2500 5000 10000
"""
import argparse
import sys
from pathlib import Path

from dpexperts.harness import load_config, run_batch


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", type=Path)
    p.add_argument("--horizons", type=int, nargs="+", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    base = load_config(args.config)
    print(f"{'T':>8} {'mean regret':>12} {'regret/T':>9} {'bound':>10} {'restarts':>9}")
    for T in args.horizons:
        d = base.to_dict()
        d.update(T=T, output_dir=None, workers=args.workers)
        if args.trials is not None:
            d["trials"] = args.trials
        cfg = type(base).from_dict(d)
        rep = run_batch(cfg)
        bound = rep.bounds.get("adaptive")
        print(f"{T:>8} {rep.mean_regret:>12.1f} {rep.mean_regret / T:>9.4f} {bound:>10.0f} "
              f"{sum(rep.restart_counts):>9}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
