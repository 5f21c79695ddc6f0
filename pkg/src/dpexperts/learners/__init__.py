"""Online learners sharing one interface: ``play(t) -> expert`` then ``update(loss)``."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..mechanisms import BudgetLedger
from .lazy import LazyRnm, is_update_round
from .meta import (
    DEFAULT_META_CAP,
    MetaExpert,
    MetaExpertReduction,
    ResourceCapError,
    enumerate_meta_experts,
    meta_expert_count,
    meta_play_matrix,
)
from .mwa import MWA, FollowTheLeader, NoisyMWA, default_eta, kl_project_clipped, mirror_step, mwa_eta
from .svt_restart import SvtRestart, probe_windows, restart_alpha, window_regret_allowance

LEARNERS = ("lazy_rnm", "svt_restart", "noisy_mwa", "mwa", "ftl", "meta")
META_BASES = ("noisy_mwa", "mwa", "ftl", "lazy_rnm")

__all__ = [
    "LEARNERS", "LazyRnm", "SvtRestart", "NoisyMWA", "MWA", "FollowTheLeader",
    "MetaExpert", "MetaExpertReduction", "ResourceCapError", "enumerate_meta_experts",
    "meta_expert_count", "meta_play_matrix", "kl_project_clipped", "mirror_step",
    "default_eta", "mwa_eta", "is_update_round", "probe_windows", "restart_alpha",
    "window_regret_allowance", "make_learner",
]


def _static_learner(name, n, T, epsilon, seed, ledger, options, noiseless, floor=None):
    a, b = seed.spawn(2)
    if name == "noisy_mwa":
        return NoisyMWA(n, T, 0, epsilon, np.random.default_rng(a), np.random.default_rng(b),
                        eta=options.get("eta"), floor=floor, noiseless=noiseless, ledger=ledger)
    if name == "mwa":
        return MWA(n, options.get("eta") or mwa_eta(n, T), np.random.default_rng(a))
    if name == "ftl":
        return FollowTheLeader(n)
    if name == "lazy_rnm":
        return LazyRnm(n, epsilon, np.random.default_rng(a), noiseless=noiseless, ledger=ledger)
    raise ValueError(f"unknown static learner {name!r}; choose from {META_BASES}")


def make_learner(
    name: str,
    *,
    N: int,
    T: int,
    S: int,
    epsilon: float,
    seed: np.random.SeedSequence,
    ledger: Optional[BudgetLedger] = None,
    beta: Optional[float] = None,
    options: Optional[dict] = None,
    noiseless: bool = False,
):
    """Build a learner by id.

    ``options`` carries per-learner overrides: ``eta``, ``probe_mode``,
    ``reg_half_epsilon``, ``base`` and ``meta_cap`` (meta reduction).
    """
    options = dict(options or {})
    if name == "lazy_rnm":
        return LazyRnm(N, epsilon, np.random.default_rng(seed), noiseless=noiseless, ledger=ledger)
    if name == "svt_restart":
        return SvtRestart(N, T, epsilon, seed, beta=beta,
                          probe_mode=options.get("probe_mode", "auto"),
                          reg_half_epsilon=bool(options.get("reg_half_epsilon", False)),
                          noiseless=noiseless, ledger=ledger)
    if name == "noisy_mwa":
        a, b = seed.spawn(2)
        return NoisyMWA(N, T, S, epsilon, np.random.default_rng(a), np.random.default_rng(b),
                        eta=options.get("eta"), noiseless=noiseless, ledger=ledger)
    if name == "mwa":
        # same child stream NoisyMWA samples from, so the two are comparable per seed
        a, _ = seed.spawn(2)
        return MWA(N, options.get("eta") or mwa_eta(N, T), np.random.default_rng(a))
    if name == "ftl":
        return FollowTheLeader(N)
    if name == "meta":
        plays = meta_play_matrix(T, N, S, cap=int(options.get("meta_cap", DEFAULT_META_CAP)))
        n_meta = plays.shape[0]
        base = _static_learner(options.get("base", "noisy_mwa"), n_meta, T, epsilon, seed, ledger,
                               options, noiseless, floor=1.0 / (n_meta * T))
        return MetaExpertReduction(base, plays)
    raise ValueError(f"unknown learner {name!r}; choose from {LEARNERS}")
