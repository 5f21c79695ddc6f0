"""Lazy learner that re-selects its expert only at rounds 2, 4, 8, ..."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..experts import as_loss_vector
from ..mechanisms import BudgetLedger, MechanismStateError, report_noisy_argmin


def is_update_round(t: int) -> bool:
    return t >= 2 and (t & (t - 1)) == 0


class LazyRnm:
    """Play a fixed expert on each ``[2^l, 2^(l+1))`` and re-select at ``t = 2^l``.

    The new expert is the report-noisy-argmin of the experts' summed losses over
    rounds ``t/2 .. t-1``, i.e. the rounds observed since the previous update,
    so every loss vector enters exactly one selection.

    ``round_offset`` maps local rounds to global ones when the learner is
    restarted mid-game (local round 1 is global round ``round_offset + 1``).
    """

    name = "lazy_rnm"
    private = True

    def __init__(
        self,
        N: int,
        epsilon: float,
        rng: np.random.Generator,
        *,
        noiseless: bool = False,
        ledger: Optional[BudgetLedger] = None,
        round_offset: int = 0,
        mechanism: str = "lazy_rnm/rnm",
    ):
        if N < 1:
            raise ValueError("N must be positive")
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.N = N
        self.epsilon = float(epsilon)
        self.rng = rng
        self.noiseless = noiseless
        self.ledger = ledger
        self.round_offset = round_offset
        self.mechanism = mechanism
        # initial expert drawn uniformly so tests do not favour index 0
        self.expert = int(rng.integers(N))
        self.window = np.zeros(N)
        self.window_start = 1
        self.t = 0
        self.rnm_calls = 0
        self._awaiting_loss = False

    def play(self, t: int) -> int:
        if t != self.t + 1 or self._awaiting_loss:
            raise MechanismStateError(f"expected play for round {self.t + 1}, got {t}")
        self.t = t
        if is_update_round(t):
            self.expert = report_noisy_argmin(self.window, self.epsilon, self.rng, noiseless=self.noiseless)
            self.rnm_calls += 1
            if self.ledger is not None:
                self.ledger.charge_many(
                    range(self.round_offset + self.window_start, self.round_offset + t),
                    self.mechanism, self.epsilon,
                )
            self.window = np.zeros(self.N)
            self.window_start = t
        self._awaiting_loss = True
        return self.expert

    def update(self, loss) -> None:
        if not self._awaiting_loss:
            raise MechanismStateError("update called without a preceding play")
        loss = as_loss_vector(loss)
        if loss.size != self.N:
            raise ValueError(f"expected {self.N} losses, got {loss.size}")
        self.window += loss
        self._awaiting_loss = False
