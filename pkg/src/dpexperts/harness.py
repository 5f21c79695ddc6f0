"""Seeded batch runner: config -> (learner, adversary) trials -> traces, aggregate report, budget audit."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .adversaries import (
    AdaptiveSpec,
    Adversary,
    ObliviousSpec,
    ShiftingStochasticSpec,
    shifting_bernoulli_spec,
)
from .experts import RegretTrace, load_loss_csv, regret_finalize
from .learners import LEARNERS, META_BASES, make_learner
from .mechanisms import BudgetLedger

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "DPEXPERTS_OUTPUT_ROOT"
ADVERSARY_KINDS = ("shifting_bernoulli", "stochastic", "rotation", "replay", "matrix", "window_punisher")
EPS_TOL = 1e-12


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    T: int
    N: int
    S: int
    epsilon: float = 1.0
    delta: float = 0.0
    beta: Optional[float] = None
    learner: str = "svt_restart"
    learner_options: dict = field(default_factory=dict)
    adversary: dict = field(default_factory=lambda: {"kind": "shifting_bernoulli", "gap": 0.3})
    trials: int = 1
    base_seed: int = 0
    output_dir: Optional[str] = None
    per_round_oracle: bool = False
    workers: int = 1
    # zero-noise test hook: mechanisms skip their noise, so runs are NOT private
    noiseless: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def effective_beta(self) -> float:
        # 1/T, except that a one-round game would give beta = 1
        return 1.0 / max(self.T, 2) if self.beta is None else float(self.beta)

    def validate(self) -> None:
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T!r}")
        if not isinstance(self.N, int) or self.N < 1:
            raise ConfigError(f"N must be a positive integer, got {self.N!r}")
        if not isinstance(self.S, int) or self.S < 0:
            raise ConfigError(f"S must be a non-negative integer, got {self.S!r}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon!r}")
        if not 0 <= self.delta < 1:
            raise ConfigError(f"delta must lie in [0, 1), got {self.delta!r}")
        if not 0 < self.effective_beta < 1:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials!r}")
        if self.learner not in LEARNERS:
            raise ConfigError(f"unknown learner {self.learner!r}; choose from {LEARNERS}")
        if self.learner == "meta" and self.learner_options.get("base", "noisy_mwa") not in META_BASES:
            raise ConfigError(f"unknown meta base {self.learner_options.get('base')!r}")
        if self.learner == "noisy_mwa" and self.S > self.T:
            raise ConfigError("noisy_mwa needs S <= T for a non-empty clipped simplex")
        kind = self.adversary.get("kind")
        if kind not in ADVERSARY_KINDS:
            raise ConfigError(f"unknown adversary kind {kind!r}; choose from {ADVERSARY_KINDS}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"T", "N", "S"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    """Read a TOML run config: flat keys plus ``[adversary]`` / ``[learner_options]`` tables."""
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        data = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return RunConfig.from_dict(data)


def build_adversary(config: RunConfig, rng: np.random.Generator) -> Adversary:
    a = dict(config.adversary)
    kind = a.pop("kind")
    T, N, S = config.T, config.N, config.S
    try:
        if kind == "shifting_bernoulli":
            spec = shifting_bernoulli_spec(T, N, int(a.get("segments", min(S + 1, T))), float(a.get("gap", 0.3)),
                                           float(a.get("base", 0.5)))
        elif kind == "stochastic":
            spec = ShiftingStochasticSpec(T, np.asarray(a["means"], dtype=float),
                                          tuple(a.get("change_points", ())), a.get("marginal", "bernoulli"),
                                          a.get("beta_a"), a.get("beta_b"))
        elif kind == "rotation":
            spec = ObliviousSpec.rotation(T, N, int(a.get("phases", max(S, 1))), float(a.get("gap", 0.3)))
        elif kind == "replay":
            spec = ObliviousSpec(load_loss_csv(a["path"]))
        elif kind == "matrix":
            spec = ObliviousSpec(np.asarray(a["losses"], dtype=float))
        else:
            spec = AdaptiveSpec(T, N, int(a.get("window", 10)))
    except KeyError as exc:
        raise ConfigError(f"adversary {kind!r} is missing key {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad adversary spec: {exc}") from None
    if (spec.T, spec.N) != (T, N):
        raise ConfigError(f"adversary is {spec.T} x {spec.N} but config has T={T}, N={N}")
    return Adversary(spec, rng)


@dataclass
class TrialResult:
    seed: int
    trace: RegretTrace
    ledger: BudgetLedger
    losses: np.ndarray

    @property
    def regret(self) -> float:
        return float(self.trace.dynamic_regret)


def run_trial(config: RunConfig, seed: int) -> TrialResult:
    """Play ``T`` rounds of (learner, adversary) from ``seed`` and finalise regret."""
    adv_seed, learner_seed = np.random.SeedSequence(seed).spawn(2)
    adversary = build_adversary(config, np.random.default_rng(adv_seed))
    ledger = BudgetLedger()
    learner = make_learner(
        config.learner, N=config.N, T=config.T, S=config.S, epsilon=config.epsilon,
        seed=learner_seed, ledger=ledger, beta=config.effective_beta,
        options=config.learner_options, noiseless=config.noiseless,
    )
    T = config.T
    trace = RegretTrace.empty(T)
    losses = np.empty((T, config.N))
    history: list[int] = []
    shifts = set(adversary.change_points)
    for t in range(1, T + 1):
        j = learner.play(t)
        loss = adversary.loss(t, history)
        learner.update(loss)
        losses[t - 1] = loss
        trace.plays[t - 1] = j
        trace.played_loss[t - 1] = loss[j]
        trace.restarts[t - 1] = bool(getattr(learner, "restarted", False))
        trace.shifts[t - 1] = t in shifts
        history.append(j)
    trace.meta = {"seed": seed, "learner": config.learner, "noiseless": config.noiseless}
    trace = regret_finalize(trace, losses, config.S, per_round=config.per_round_oracle)
    return TrialResult(seed, trace, ledger, losses)


def regret_bounds(T: int, N: int, S: int, epsilon: float, delta: float = 0.0) -> dict:
    """Reference values of the three upper-bound expressions, constants dropped."""
    lg = math.log(N * T)
    out = {
        "stochastic": math.sqrt(S * T * lg) + S * lg / epsilon,
        "adaptive": math.sqrt(S * T) * lg ** 1.5 / epsilon + S * lg / epsilon,
        "oblivious": None,
    }
    if delta > 0:
        out["oblivious"] = (math.sqrt(S * T * lg)
                            + S * T ** (1 / 3) * math.log(T / delta) * lg / epsilon ** (2 / 3))
    return out


def code_version() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.rglob("*.py")):
        h.update(p.relative_to(Path(__file__).parent).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


@dataclass
class AggregateReport:
    config: dict
    seeds: list
    regrets: list
    half_regrets: list
    restart_counts: list
    bounds: dict
    audits: list
    code_version: str

    @property
    def mean_regret(self) -> float:
        return float(np.mean(self.regrets))

    @property
    def stderr(self) -> float:
        n = len(self.regrets)
        return float(np.std(self.regrets, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    @property
    def mean_half_regret(self) -> float:
        return float(np.mean(self.half_regrets))

    @property
    def audit_passed(self) -> bool:
        return all(a["passed"] for a in self.audits)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.update(mean_regret=self.mean_regret, stderr=self.stderr,
                 mean_half_regret=self.mean_half_regret, audit_passed=self.audit_passed)
        return d


def resolve_output_dir(config: RunConfig) -> Optional[Path]:
    if config.output_dir is None:
        return None
    out = Path(config.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _run_one(args):
    config, seed = args
    return run_trial(config, seed)


def run_batch(config: RunConfig, *, keep_results: bool = False):
    """Run ``config.trials`` trials with seeds ``base_seed + k`` and aggregate.

    Returns the report, or ``(report, results)`` with ``keep_results``.
    """
    seeds = [config.base_seed + k for k in range(config.trials)]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.trials)) as pool:
            results = list(pool.map(_run_one, [(config, s) for s in seeds]))
    else:
        results = [run_trial(config, s) for s in seeds]
    report = AggregateReport(
        config=config.to_dict(),
        seeds=seeds,
        regrets=[r.regret for r in results],
        half_regrets=[r.trace.meta.get("half_regret") for r in results],
        restart_counts=[r.trace.restart_count for r in results],
        bounds=regret_bounds(config.T, config.N, config.S, config.epsilon, config.delta),
        audits=[audit_budget(r.ledger, config) for r in results],
        code_version=code_version(),
    )
    out = resolve_output_dir(config)
    if out is not None:
        write_outputs(out, report, results)
    return (report, results) if keep_results else report


def write_outputs(out: Path, report: AggregateReport, results: list) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for k, r in enumerate(results):
        r.trace.to_csv(out / f"trial_{k:03d}.csv")
        (out / f"trial_{k:03d}_ledger.json").write_text(r.ledger.to_json())
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    log.info("wrote %d traces and report to %s", len(results), out)


def _learner_pattern(config: RunConfig) -> str:
    if config.learner == "meta":
        return config.learner_options.get("base", "noisy_mwa")
    return config.learner


def audit_budget(ledger: BudgetLedger, config: RunConfig) -> dict:
    """Structurally check per-round privacy charges against the learner's pattern.

    Every learner: each round's total charge is at most epsilon.  On top:
    lazy_rnm charges a round at most once; svt_restart at most once by an
    internal selection and once by an SVT instance, each at epsilon/2;
    noisy_mwa charges every round exactly once at epsilon; non-private
    baselines charge nothing.
    """
    eps, T = config.epsilon, config.T
    pattern = _learner_pattern(config)
    by_round = ledger.by_round()
    violations = []

    def bad(r, msg):
        if len(violations) < 50:
            violations.append({"round": r, "problem": msg})

    for r, charges in by_round.items():
        if not 1 <= r <= T:
            bad(r, "charge outside the horizon")
        total = sum(e for _, e in charges)
        if total > eps + EPS_TOL:
            bad(r, f"total charge {total} exceeds epsilon {eps}")
        if pattern == "lazy_rnm":
            if len(charges) > 1 or any("rnm" not in m or abs(e - eps) > EPS_TOL for m, e in charges):
                bad(r, f"expected at most one rnm charge at {eps}, got {charges}")
        elif pattern == "svt_restart":
            rnm = [e for m, e in charges if m.endswith("/rnm")]
            svt = [e for m, e in charges if m.endswith("/svt")]
            if len(rnm) + len(svt) != len(charges):
                bad(r, f"unexpected mechanism in {charges}")
            if len(rnm) > 1 or len(svt) > 1:
                bad(r, f"round used by more than one instance of a mechanism: {charges}")
            if any(abs(e - eps / 2) > EPS_TOL for e in rnm + svt):
                bad(r, f"expected epsilon/2 = {eps / 2} charges, got {charges}")
        elif pattern == "noisy_mwa":
            if len(charges) != 1 or "laplace_vector" not in charges[0][0] or abs(charges[0][1] - eps) > EPS_TOL:
                bad(r, f"expected exactly one laplace-vector charge at {eps}, got {charges}")
        elif pattern in ("mwa", "ftl"):
            bad(r, "non-private learner should not touch a privacy mechanism")
    if pattern == "noisy_mwa":
        for r in range(1, T + 1):
            if r not in by_round:
                bad(r, "round never released through the Laplace mechanism")
    return {
        "learner": config.learner,
        "pattern": pattern,
        "epsilon": eps,
        "rounds_charged": len(by_round),
        "max_round_charge": max((sum(e for _, e in c) for c in by_round.values()), default=0.0),
        "passed": not violations,
        "violations": violations,
    }
