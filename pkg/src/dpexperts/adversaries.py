"""Loss generators for shifting-stochastic, oblivious and adaptive adversaries.

All adversaries share ``loss(t, history) -> loss vector``.  ``history`` holds
the learner's realised plays ``J_1..J_{t-1}`` and nothing else; the stochastic
and oblivious adversaries ignore it.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .experts import as_loss_matrix


def _segment_index(change_points: Sequence[int], t: int) -> int:
    return int(np.searchsorted(np.asarray(change_points, dtype=np.int64), t, side="right"))


@dataclass(frozen=True)
class ShiftingStochasticSpec:
    """Product distributions that switch at ``change_points``.

    Segment ``s`` (0-based) governs rounds ``[t_s, t_{s+1})`` with ``t_0 = 1``.
    ``kind="bernoulli"`` uses ``means`` (one row per segment); ``kind="beta"``
    uses ``beta_a`` / ``beta_b`` rows instead.
    """

    T: int
    means: np.ndarray
    change_points: tuple[int, ...] = ()
    kind: str = "bernoulli"
    beta_a: Optional[np.ndarray] = None
    beta_b: Optional[np.ndarray] = None

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        object.__setattr__(self, "means", means)
        cps = tuple(int(c) for c in self.change_points)
        object.__setattr__(self, "change_points", cps)
        if len(cps) != means.shape[0] - 1:
            raise ValueError(f"{means.shape[0]} segments need {means.shape[0] - 1} change points, got {len(cps)}")
        if any(b <= a for a, b in zip(cps, cps[1:])) or any(not 2 <= c <= self.T for c in cps):
            raise ValueError(f"change points must be strictly increasing in [2, T], got {cps}")
        if self.kind == "bernoulli":
            as_loss_matrix(means)
        elif self.kind == "beta":
            a = np.atleast_2d(np.asarray(self.beta_a, dtype=float))
            b = np.atleast_2d(np.asarray(self.beta_b, dtype=float))
            if a.shape != means.shape or b.shape != means.shape or a.min() <= 0 or b.min() <= 0:
                raise ValueError("beta parameters must be positive and shaped like means")
            object.__setattr__(self, "beta_a", a)
            object.__setattr__(self, "beta_b", b)
            object.__setattr__(self, "means", a / (a + b))
        else:
            raise ValueError(f"unknown marginal kind {self.kind!r}")

    @property
    def N(self) -> int:
        return self.means.shape[1]

    def segment(self, t: int) -> int:
        return _segment_index(self.change_points, t)


def next_loss_stochastic(spec: ShiftingStochasticSpec, t: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``l_t`` coordinate-wise from the segment active at round ``t``."""
    if not 1 <= t <= spec.T:
        raise ValueError(f"round {t} outside horizon [1, {spec.T}]")
    s = spec.segment(t)
    if spec.kind == "bernoulli":
        return (rng.random(spec.N) < spec.means[s]).astype(float)
    return rng.beta(spec.beta_a[s], spec.beta_b[s])


def shifting_bernoulli_spec(T: int, N: int, segments: int, gap: float, base: float = 0.5) -> ShiftingStochasticSpec:
    """Equal-length segments; in segment ``s`` expert ``s mod N`` has mean ``base - gap``, the rest ``base``."""
    if segments < 1 or segments > T:
        raise ValueError("need 1 <= segments <= T")
    if not (0 <= base - gap and base <= 1):
        raise ValueError("means must stay in [0, 1]")
    means = np.full((segments, N), float(base))
    for s in range(segments):
        means[s, s % N] = base - gap
    cps = tuple(1 + (s * T) // segments for s in range(1, segments))
    return ShiftingStochasticSpec(T, means, cps)


def rotation_losses(T: int, N: int, phases: int, gap: float) -> np.ndarray:
    """Deterministic phases of equal length; in phase ``s`` expert ``s mod N`` has loss
    ``0.5 - gap/2`` and every other expert ``0.5 + gap/2``."""
    if phases < 1 or phases > T:
        raise ValueError("need 1 <= phases <= T")
    if not 0 <= gap <= 1:
        raise ValueError("gap must lie in [0, 1]")
    m = np.full((T, N), 0.5 + gap / 2)
    for s in range(phases):
        m[(s * T) // phases:((s + 1) * T) // phases, s % N] = 0.5 - gap / 2
    return m


def rotation_change_points(T: int, phases: int) -> tuple[int, ...]:
    return tuple(1 + (s * T) // phases for s in range(1, phases))


@dataclass(frozen=True)
class ObliviousSpec:
    """A fixed loss matrix, either given or produced by a named generator."""

    losses: np.ndarray
    change_points: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "losses", as_loss_matrix(self.losses))

    @classmethod
    def rotation(cls, T: int, N: int, phases: int, gap: float) -> "ObliviousSpec":
        return cls(rotation_losses(T, N, phases, gap), rotation_change_points(T, phases))

    @property
    def T(self) -> int:
        return self.losses.shape[0]

    @property
    def N(self) -> int:
        return self.losses.shape[1]


def next_loss_oblivious(spec: ObliviousSpec, t: int) -> np.ndarray:
    if not 1 <= t <= spec.T:
        raise ValueError(f"round {t} outside horizon [1, {spec.T}]")
    return spec.losses[t - 1]


@dataclass(frozen=True)
class AdaptiveSpec:
    """Window punisher: loss 1 on the expert played most often in the last ``window``
    plays (ties to the lowest index), 0 elsewhere."""

    T: int
    N: int
    window: int = 10
    policy: str = "window_punisher"

    def __post_init__(self):
        if self.policy != "window_punisher":
            raise ValueError(f"unknown adaptive policy {self.policy!r}")
        if self.window < 1:
            raise ValueError("window must be positive")


def next_loss_adaptive(spec: AdaptiveSpec, t: int, history: Sequence[int]) -> np.ndarray:
    if not 1 <= t <= spec.T:
        raise ValueError(f"round {t} outside horizon [1, {spec.T}]")
    if len(history) != t - 1:
        raise ValueError(f"round {t} needs {t - 1} past plays, got {len(history)}")
    counts = np.zeros(spec.N, dtype=np.int64)
    for j, c in Counter(history[-spec.window:]).items():
        counts[j] = c
    loss = np.zeros(spec.N)
    loss[int(np.argmax(counts))] = 1.0
    return loss


class Adversary:
    """Uniform ``loss(t, history)`` front end over the three spec kinds.

    Stochastic losses are pre-sampled from the adversary's own stream, so the
    revealed sequence never depends on the learner.
    """

    def __init__(self, spec, rng: Optional[np.random.Generator] = None):
        self.spec = spec
        self.kind = {ShiftingStochasticSpec: "stochastic", ObliviousSpec: "oblivious",
                     AdaptiveSpec: "adaptive"}[type(spec)]
        self._matrix = None
        if self.kind == "stochastic":
            if rng is None:
                raise ValueError("a stochastic adversary needs an rng")
            if spec.kind == "bernoulli":
                seg = np.searchsorted(np.asarray(spec.change_points, dtype=np.int64),
                                      np.arange(1, spec.T + 1), side="right")
                self._matrix = (rng.random((spec.T, spec.N)) < spec.means[seg]).astype(float)
            else:
                self._matrix = np.stack([next_loss_stochastic(spec, t, rng) for t in range(1, spec.T + 1)])
        elif self.kind == "oblivious":
            self._matrix = spec.losses

    @property
    def T(self) -> int:
        return self.spec.T

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def change_points(self) -> tuple[int, ...]:
        return getattr(self.spec, "change_points", ())

    @property
    def matrix(self) -> Optional[np.ndarray]:
        """The full loss matrix when it is fixed in advance (None for adaptive)."""
        return self._matrix

    def loss(self, t: int, history: Sequence[int]) -> np.ndarray:
        if self.kind == "adaptive":
            return next_loss_adaptive(self.spec, t, history)
        if not 1 <= t <= self.T:
            raise ValueError(f"round {t} outside horizon [1, {self.T}]")
        return self._matrix[t - 1]
