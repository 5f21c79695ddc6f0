"""Restarting wrapper around the lazy learner, driven by a sparse-vector test.

Each segment runs a fresh :class:`LazyRnm` at ``epsilon/2`` and a fresh
AboveThreshold instance at ``(epsilon/2, beta/T)``.  After every round the
empirical regret of the segment's plays on each trailing window ``[t-w, t]``
is compared with its stationary-regime allowance; a window that exceeds it
signals a distribution shift and the segment restarts.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..experts import as_loss_vector
from ..mechanisms import AboveThreshold, BudgetLedger, MechanismStateError
from .lazy import LazyRnm

PROBE_MODES = ("exact", "geometric", "auto")
EXACT_PROBE_MAX_T = 10_000


def window_regret_allowance(w, N: int, T: int, beta: float, epsilon: float):
    """``16 log(NT/beta)/epsilon + 9 sqrt(w log(TN/beta))``, vectorised over ``w``."""
    w = np.asarray(w, dtype=float)
    lg = math.log(N * T / beta)
    return 16.0 * lg / epsilon + 9.0 * np.sqrt(w * lg)


def restart_alpha(T: int, beta: float, epsilon: float) -> float:
    return 16.0 * (2.0 * math.log(T) + math.log(2.0 / beta)) / epsilon


def probe_windows(span: int, mode: str) -> np.ndarray:
    """Window lengths probed when ``span = t - t_i`` rounds precede ``t`` in the segment."""
    if mode == "exact":
        return np.arange(span + 1)
    if mode == "geometric":
        if span < 1:
            return np.arange(0)
        return 1 << np.arange(int(math.log2(span)) + 1)
    raise ValueError(f"unknown probe mode {mode!r}")


class SvtRestart:
    name = "svt_restart"
    private = True

    def __init__(
        self,
        N: int,
        T: int,
        epsilon: float,
        seed: np.random.SeedSequence,
        *,
        beta: Optional[float] = None,
        probe_mode: str = "auto",
        reg_half_epsilon: bool = False,
        noiseless: bool = False,
        ledger: Optional[BudgetLedger] = None,
    ):
        if probe_mode not in PROBE_MODES:
            raise ValueError(f"probe_mode must be one of {PROBE_MODES}, got {probe_mode!r}")
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.N, self.T = int(N), int(T)
        self.epsilon = float(epsilon)
        self.beta = 1.0 / max(T, 2) if beta is None else float(beta)
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if probe_mode == "auto":
            probe_mode = "exact" if T <= EXACT_PROBE_MAX_T else "geometric"
        self.probe_mode = probe_mode
        self.reg_epsilon = self.epsilon / 2 if reg_half_epsilon else self.epsilon
        self.alpha = restart_alpha(self.T, self.beta, self.epsilon)
        self.noiseless = noiseless
        self.ledger = ledger
        self._seed = seed

        # expert loss prefix sums, expert-major so the min over experts is a row-wise reduce
        self._P = np.zeros((self.N, self.T + 1))
        self._p = np.zeros(self.T + 1)              # played loss prefix sums
        self._reg = window_regret_allowance(np.arange(self.T + 1), self.N, self.T, self.beta, self.reg_epsilon)
        self.segment_start = 1
        self.segment = 0
        self.restart_times: list[int] = []
        self.restarted = False
        self.t = 0
        self._current: Optional[int] = None
        self._start_segment(1)

    def _start_segment(self, start: int) -> None:
        self.segment_start = start
        self.segment += 1
        lazy_seed, svt_seed = self._seed.spawn(2)
        self.lazy = LazyRnm(
            self.N, self.epsilon / 2, np.random.default_rng(lazy_seed),
            noiseless=self.noiseless, ledger=self.ledger, round_offset=start - 1,
            mechanism=f"svt_restart/seg{self.segment}/rnm",
        )
        self.svt = AboveThreshold(
            self.epsilon / 2, self.beta / self.T, self.T,
            np.random.default_rng(svt_seed), noiseless=self.noiseless,
        )
        self._svt_charged_from: Optional[int] = None

    def play(self, t: int) -> int:
        if t != self.t + 1 or self._current is not None:
            raise MechanismStateError(f"expected play for round {self.t + 1}, got {t}")
        if t > self.T:
            raise MechanismStateError(f"round {t} beyond horizon {self.T}")
        self.t = t
        self._current = self.lazy.play(t - self.segment_start + 1)
        return self._current

    def update(self, loss) -> None:
        if self._current is None:
            raise MechanismStateError("update called without a preceding play")
        loss = as_loss_vector(loss)
        t, j = self.t, self._current
        self._current = None
        self.lazy.update(loss)
        self._P[:, t] = self._P[:, t - 1] + loss
        self._p[t] = self._p[t - 1] + loss[j]
        self.restarted = self._probe(t)
        if self.restarted:
            self.restart_times.append(t)
            # the next segment starts after round t so segments stay disjoint
            if t < self.T:
                self._start_segment(t + 1)

    def step(self, t: int, loss) -> tuple[int, bool]:
        """Play round ``t`` then observe ``loss``; returns ``(expert, restarted)``."""
        j = self.play(t)
        self.update(loss)
        return j, self.restarted

    def queries(self, t: int, ws: np.ndarray) -> np.ndarray:
        """Query values ``q_w^t`` for window lengths ``ws`` (all within the segment)."""
        ws = np.asarray(ws, dtype=np.int64)
        starts = t - 1 - ws
        if ws.size and ws[0] == 0 and ws[-1] == ws.size - 1:
            # exact mode: windows 0..span are one reversed slice
            lo = t - 1 - int(ws[-1])
            sums = self._P[:, t:t + 1] - self._P[:, lo:t]
            best = sums.min(axis=0)[::-1]
        else:
            best = (self._P[:, t:t + 1] - self._P[:, starts]).min(axis=0)
        played = self._p[t] - self._p[starts]
        return played - best - self._reg[ws] - self.alpha - 1.0

    def _probe(self, t: int) -> bool:
        ws = probe_windows(t - self.segment_start, self.probe_mode)
        if ws.size == 0:
            return False
        self._charge_svt(t - int(ws.max()), t)
        return self.svt.test_many(self.queries(t, ws)) is not None

    def _charge_svt(self, lo: int, t: int) -> None:
        if self.ledger is None:
            return
        mech = f"svt_restart/seg{self.segment}/svt"
        eps = self.epsilon / 2
        if self._svt_charged_from is None:
            self.ledger.charge_many(range(lo, t + 1), mech, eps)
            self._svt_charged_from = lo
            return
        if lo < self._svt_charged_from:
            self.ledger.charge_many(range(lo, self._svt_charged_from), mech, eps)
            self._svt_charged_from = lo
        self.ledger.charge(t, mech, eps)
