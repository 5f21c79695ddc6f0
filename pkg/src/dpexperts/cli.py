"""Command line: ``run``, ``replay`` and ``audit``.

Exit codes: 0 success, 1 audit failure, 2 config error, 3 resource-cap error.
Relative output directories resolve under ``$DPEXPERTS_OUTPUT_ROOT`` when set.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experts import load_loss_csv
from .harness import (
    ConfigError,
    RunConfig,
    audit_budget,
    load_config,
    run_batch,
)
from .learners import LEARNERS, ResourceCapError
from .mechanisms import BudgetLedger

EXIT_OK, EXIT_AUDIT_FAILED, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


def _parse_option(text: str):
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigError(f"--option expects key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _summary(report) -> dict:
    return {
        "learner": report.config["learner"],
        "trials": len(report.regrets),
        "mean_regret": report.mean_regret,
        "stderr": report.stderr,
        "mean_restarts": sum(report.restart_counts) / len(report.restart_counts),
        "audit_passed": report.audit_passed,
    }


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.output is not None:
        config.output_dir = args.output
    if args.workers is not None:
        config.workers = args.workers
    report = run_batch(config)
    print(json.dumps(_summary(report)))
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        losses = load_loss_csv(args.losses)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load losses from {args.losses}: {exc}") from None
    T, N = losses.shape
    config = RunConfig(
        T=T, N=N, S=args.S, epsilon=args.epsilon, delta=args.delta, beta=args.beta,
        learner=args.learner, learner_options=dict(args.option or []),
        adversary={"kind": "replay", "path": str(Path(args.losses).resolve())},
        trials=args.trials, base_seed=args.seed, output_dir=args.output,
        per_round_oracle=args.per_round_oracle, workers=args.workers or 1,
        noiseless=args.noiseless,
    )
    report = run_batch(config)
    print(json.dumps(_summary(report)))
    return EXIT_OK


def _cmd_audit(args) -> int:
    trace_dir = Path(args.trace)
    try:
        report = json.loads((trace_dir / "report.json").read_text())
        config = RunConfig.from_dict(report["config"])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{trace_dir} does not hold a readable report.json: {exc}") from None
    ledgers = sorted(trace_dir.glob("trial_*_ledger.json"))
    if not ledgers:
        raise ConfigError(f"no trial ledgers under {trace_dir}")
    results = []
    for path in ledgers:
        res = audit_budget(BudgetLedger.from_json(path.read_text()), config)
        res["trace"] = path.name
        results.append(res)
    passed = all(r["passed"] for r in results)
    out = {"passed": passed, "trials": results}
    (trace_dir / "audit.json").write_text(json.dumps(out, indent=2))
    print(json.dumps({"passed": passed, "trials": len(results),
                      "failed": [r["trace"] for r in results if not r["passed"]]}))
    return EXIT_OK if passed else EXIT_AUDIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpexperts", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a batch of trials from a TOML config")
    run.add_argument("--config", required=True)
    run.add_argument("--output", help="override output_dir")
    run.add_argument("--workers", type=int)
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("replay", help="run a learner against a fixed loss matrix (CSV)")
    rep.add_argument("--losses", required=True)
    rep.add_argument("--learner", required=True, choices=LEARNERS)
    rep.add_argument("--S", type=int, default=1)
    rep.add_argument("--epsilon", type=float, default=1.0)
    rep.add_argument("--delta", type=float, default=0.0)
    rep.add_argument("--beta", type=float)
    rep.add_argument("--trials", type=int, default=1)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--output")
    rep.add_argument("--workers", type=int)
    rep.add_argument("--per-round-oracle", action="store_true")
    rep.add_argument("--noiseless", action="store_true",
                     help="test hook: drop all mechanism noise (output is not private)")
    rep.add_argument("--option", action="append", type=_parse_option, metavar="KEY=VALUE",
                     help="learner override such as eta=0.1, probe_mode=geometric, base=ftl")
    rep.set_defaults(func=_cmd_replay)

    aud = sub.add_parser("audit", help="re-check privacy-charge patterns of a finished run")
    aud.add_argument("--trace", required=True, help="run output directory")
    aud.set_defaults(func=_cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the config-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
