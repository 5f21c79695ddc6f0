"""Multiplicative-weights learners: the private noisy-loss variant on the
clipped simplex, the plain non-private baseline, and follow-the-leader."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..experts import ClippedDistribution, as_loss_vector, switching_floor
from ..mechanisms import BudgetLedger, MechanismStateError


def kl_project_clipped(v, floor: float) -> np.ndarray:
    """KL projection of a nonnegative weight vector onto ``{w in simplex : w >= floor}``.

    Solves ``min sum_j w_j log(w_j / v_j)``.  The minimiser has the form
    ``w_j = max(floor, theta * v_j)``; the clipped coordinates are the ``k``
    smallest entries of ``v`` for the first ``k`` at which
    ``theta = (1 - k floor) / sum(unclipped v)`` is consistent.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if v.ndim != 1 or n == 0:
        raise ValueError("v must be a non-empty 1-d vector")
    if v.min() < 0 or not np.all(np.isfinite(v)):
        raise ValueError("v must be finite and nonnegative")
    if not v.max() > 0:
        raise ValueError("v must have at least one positive entry")
    if not floor >= 0:
        raise ValueError("floor must be nonnegative")
    if n * floor > 1.0 + 1e-12:
        raise ValueError(f"infeasible floor: N * c = {n * floor} > 1")
    if n * floor >= 1.0:
        return np.full(n, 1.0 / n)

    order = np.argsort(v, kind="stable")
    vs = v[order]
    # tail[k] = sum of vs[k:], accumulated from the largest entries down
    tail = np.cumsum(vs[::-1])[::-1]
    for k in range(n):
        if tail[k] <= 0:
            break
        theta = (1.0 - k * floor) / tail[k]
        if theta * vs[k] >= floor and (k == 0 or theta * vs[k - 1] < floor):
            return np.maximum(floor, v * theta)
    raise AssertionError("water-filling found no consistent clip set")  # pragma: no cover


def _tilt(w: np.ndarray, eta: float, loss: np.ndarray) -> np.ndarray:
    # shift by the minimum so the largest factor is exp(0) = 1
    return w * np.exp(-eta * (loss - loss.min()))


def _sample(w: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(w)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), w.size - 1))


def default_eta(epsilon: float, N: int, T: int, S: int) -> float:
    """``epsilon * sqrt(S / (T log(NT)))``; ``S = 0`` is treated as ``S = 1``."""
    return epsilon * math.sqrt(max(S, 1) / (T * math.log(max(N * T, 2))))


def mwa_eta(N: int, T: int) -> float:
    """Standard static-regret rate ``sqrt(8 log N / T)``."""
    return math.sqrt(8.0 * math.log(max(N, 2)) / T)


class MWA:
    """Non-private exponential weights: ``w_{t+1}(j) ∝ w_t(j) exp(-eta l_t(j))``."""

    name = "mwa"
    private = False

    def __init__(self, N: int, eta: float, rng: np.random.Generator):
        if not eta > 0:
            raise ValueError("eta must be positive")
        self.N = N
        self.eta = float(eta)
        self.rng = rng
        self.w = np.full(N, 1.0 / N)
        self.t = 0
        self._played: Optional[int] = None

    def play(self, t: int) -> int:
        if t != self.t + 1 or self._played is not None:
            raise MechanismStateError(f"expected play for round {self.t + 1}, got {t}")
        self.t = t
        self._played = _sample(self.w, self.rng)
        return self._played

    def update(self, loss) -> None:
        if self._played is None:
            raise MechanismStateError("update called without a preceding play")
        # a zero floor makes the projection a plain normalisation; sharing it
        # keeps trajectories bit-identical to NoisyMWA in its noiseless limit
        self.w = mirror_step(self.w, as_loss_vector(loss), self.eta, 0.0)
        self._played = None


class NoisyMWA:
    """Exponential weights on Laplace-perturbed losses, projected onto the clipped simplex.

    Each round the full loss vector is released once through the Laplace
    mechanism (scale ``1/epsilon`` per coordinate); the weights are a
    post-processing of those noisy losses.
    """

    name = "noisy_mwa"
    private = True

    def __init__(
        self,
        N: int,
        T: int,
        S: int,
        epsilon: float,
        sample_rng: np.random.Generator,
        noise_rng: np.random.Generator,
        *,
        eta: Optional[float] = None,
        floor: Optional[float] = None,
        noiseless: bool = False,
        ledger: Optional[BudgetLedger] = None,
        mechanism: str = "noisy_mwa/laplace_vector",
    ):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.N, self.T, self.S = int(N), int(T), int(S)
        self.epsilon = float(epsilon)
        self.eta = default_eta(epsilon, N, T, S) if eta is None else float(eta)
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if floor is None:
            floor = switching_floor(N, T, S) if S > 0 else 1.0 / (N * T * T)
        self.floor = float(floor)
        self.sample_rng = sample_rng
        self.noise_rng = noise_rng
        self.noiseless = noiseless
        self.ledger = ledger
        self.mechanism = mechanism
        self.w = ClippedDistribution.uniform(self.N, self.floor).weights
        self.t = 0
        self._played: Optional[int] = None

    @property
    def distribution(self) -> ClippedDistribution:
        return ClippedDistribution(self.w, self.floor)

    def play(self, t: int) -> int:
        if t != self.t + 1 or self._played is not None:
            raise MechanismStateError(f"expected play for round {self.t + 1}, got {t}")
        self.t = t
        self._played = _sample(self.w, self.sample_rng)
        return self._played

    def noisy_loss(self, loss: np.ndarray) -> np.ndarray:
        if self.noiseless:
            return loss
        return loss + self.noise_rng.laplace(0.0, 1.0 / self.epsilon, size=loss.size)

    def update(self, loss) -> None:
        if self._played is None:
            raise MechanismStateError("update called without a preceding play")
        loss = as_loss_vector(loss)
        if loss.size != self.N:
            raise ValueError(f"expected {self.N} losses, got {loss.size}")
        noisy = self.noisy_loss(loss)
        if self.ledger is not None:
            self.ledger.charge(self.t, self.mechanism, self.epsilon)
        self.w = mirror_step(self.w, noisy, self.eta, self.floor)
        self._played = None

    def step(self, t: int, loss) -> int:
        j = self.play(t)
        self.update(loss)
        return j


def mirror_step(w: np.ndarray, loss: np.ndarray, eta: float, floor: float) -> np.ndarray:
    """``argmin_{w' in clipped simplex} <w', eta loss> + KL(w' || w)``."""
    return kl_project_clipped(_tilt(w, eta, loss), floor)


class FollowTheLeader:
    """Deterministic greedy learner: the lowest-index expert with least cumulative loss."""

    name = "ftl"
    private = False

    def __init__(self, N: int):
        self.N = N
        self.cum = np.zeros(N)
        self.t = 0
        self._played: Optional[int] = None

    def play(self, t: int) -> int:
        if t != self.t + 1 or self._played is not None:
            raise MechanismStateError(f"expected play for round {self.t + 1}, got {t}")
        self.t = t
        self._played = int(np.argmin(self.cum))
        return self._played

    def update(self, loss) -> None:
        if self._played is None:
            raise MechanismStateError("update called without a preceding play")
        loss = np.asarray(loss, dtype=float)
        if loss.size != self.N:
            raise ValueError(f"expected {self.N} losses, got {loss.size}")
        self.cum += loss
        self._played = None
