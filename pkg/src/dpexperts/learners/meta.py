"""Reduction from dynamic regret to static regret over meta-experts.

A meta-expert is a piecewise-constant expert sequence with ``c <= S`` switch
times.  A static learner run over all meta-experts, fed the meta-loss
``l~_t(e) = l_t(e(t))``, tracks the best switching sequence.
"""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..experts import as_loss_vector
from ..mechanisms import MechanismStateError

DEFAULT_META_CAP = 10**6


class ResourceCapError(RuntimeError):
    """A configured size cap would be exceeded."""


@dataclass(frozen=True)
class MetaExpert:
    """Plays ``experts[i]`` on ``[switch_times[i-1], switch_times[i])``.

    With ``t_0 = 1`` the first expert covers ``[1, t_1)`` and the last one covers
    ``[t_c, T]``; the intervals partition the horizon.
    """

    switch_times: tuple[int, ...]
    experts: tuple[int, ...]

    def __post_init__(self):
        if len(self.experts) != len(self.switch_times) + 1:
            raise ValueError("need exactly one more expert than switch times")
        if any(b <= a for a, b in zip(self.switch_times, self.switch_times[1:])):
            raise ValueError("switch times must be strictly increasing")

    def __call__(self, t: int) -> int:
        return self.experts[bisect.bisect_right(self.switch_times, t)]

    def sequence(self, T: int) -> np.ndarray:
        return np.array([self(t) for t in range(1, T + 1)], dtype=np.int64)


def meta_expert_count(T: int, N: int, S: int) -> int:
    """``sum_{c=0}^{S} C(T, c) N^(c+1)``."""
    return sum(math.comb(T, c) * N ** (c + 1) for c in range(S + 1))


def _check_cap(T: int, N: int, S: int, cap: int) -> int:
    if T < 1 or N < 1 or S < 0:
        raise ValueError(f"invalid (T, N, S) = {(T, N, S)}")
    count = meta_expert_count(T, N, S)
    if count > cap:
        raise ResourceCapError(f"{count} meta-experts for T={T}, N={N}, S={S} exceeds cap {cap}")
    return count


def enumerate_meta_experts(T: int, N: int, S: int, cap: int = DEFAULT_META_CAP) -> list[MetaExpert]:
    """All meta-experts, ordered by switch count, then switch times, then experts."""
    _check_cap(T, N, S, cap)
    out = []
    for c in range(S + 1):
        for times in itertools.combinations(range(1, T + 1), c):
            for js in itertools.product(range(N), repeat=c + 1):
                out.append(MetaExpert(times, js))
    return out


def meta_play_matrix(T: int, N: int, S: int, cap: int = DEFAULT_META_CAP) -> np.ndarray:
    """``plays[e, t-1] = e(t)`` for every meta-expert, in :func:`enumerate_meta_experts` order."""
    _check_cap(T, N, S, cap)
    rounds = np.arange(1, T + 1)
    blocks = []
    for c in range(S + 1):
        js = np.array(list(itertools.product(range(N), repeat=c + 1)), dtype=np.int64)
        if c == 0:
            seg = np.zeros((1, T), dtype=np.int64)
        else:
            times = np.array(list(itertools.combinations(range(1, T + 1), c)), dtype=np.int64).reshape(-1, c)
            if times.shape[0] == 0:
                continue
            seg = (times[:, :, None] <= rounds[None, None, :]).sum(axis=1)
        # (combos, expert tuples, T)
        block = js[:, seg].transpose(1, 0, 2).reshape(-1, T)
        blocks.append(block)
    return np.concatenate(blocks, axis=0)


class MetaExpertReduction:
    """Drive a static learner over meta-experts and play the chosen meta-expert's expert."""

    name = "meta"

    def __init__(self, base, plays: np.ndarray):
        self.base = base
        self.plays = np.asarray(plays)
        self.n_meta, self.T = self.plays.shape
        self.private = getattr(base, "private", False)
        self.t = 0
        self.meta_choice = None

    def play(self, t: int) -> int:
        if t > self.T:
            raise MechanismStateError(f"round {t} beyond horizon {self.T}")
        self.t = t
        self.meta_choice = self.base.play(t)
        return int(self.plays[self.meta_choice, t - 1])

    def meta_loss(self, loss) -> np.ndarray:
        return as_loss_vector(loss)[self.plays[:, self.t - 1]]

    def update(self, loss) -> None:
        self.base.update(self.meta_loss(loss))
