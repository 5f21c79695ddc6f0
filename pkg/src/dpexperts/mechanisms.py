"""Differentially private building blocks.

Laplace noise, the Laplace mechanism, report-noisy-argmin, AboveThreshold
(sparse vector technique) and the binary-tree running-sum counter.

Every mechanism takes a ``numpy.random.Generator`` it owns exclusively and a
``noiseless`` flag that replaces each noise draw by 0.  The flag exists for
deterministic unit tests; the experiment harness never sets it.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


class MechanismStateError(RuntimeError):
    """A stateful mechanism was used outside its contract (halted, overflowed, out of order)."""


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def pure(self) -> bool:
        return self.delta == 0.0


class BudgetLedger:
    """Append-only record of which rounds' data each mechanism touched.

    A charge ``(round, mechanism, epsilon)`` means the loss revealed at
    ``round`` entered ``mechanism`` whose privacy parameter is ``epsilon``.
    """

    def __init__(self):
        self._entries: list[tuple[int, str, float]] = []

    def charge(self, round_: int, mechanism: str, epsilon: float) -> None:
        self._entries.append((int(round_), str(mechanism), float(epsilon)))

    def charge_many(self, rounds: Iterable[int], mechanism: str, epsilon: float) -> None:
        mechanism = str(mechanism)
        epsilon = float(epsilon)
        self._entries.extend((int(r), mechanism, epsilon) for r in rounds)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def by_round(self) -> dict[int, list[tuple[str, float]]]:
        out: dict[int, list[tuple[str, float]]] = defaultdict(list)
        for r, mech, eps in self._entries:
            out[r].append((mech, eps))
        return dict(out)

    def charges_at(self, round_: int) -> list[tuple[str, float]]:
        return [(m, e) for r, m, e in self._entries if r == round_]

    def total_at(self, round_: int) -> float:
        return sum(e for r, _, e in self._entries if r == round_)

    def to_records(self) -> list[dict]:
        return [{"round": r, "mechanism": m, "epsilon": e} for r, m, e in self._entries]

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "BudgetLedger":
        ledger = cls()
        for rec in records:
            ledger.charge(rec["round"], rec["mechanism"], rec["epsilon"])
        return ledger

    @classmethod
    def from_json(cls, text: str) -> "BudgetLedger":
        return cls.from_records(json.loads(text))


def _check_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float, np.floating, np.integer)) and value > 0):
        raise ValueError(f"{name} must be a positive real, got {value!r}")


def laplace_sample(scale: float, rng: np.random.Generator, size=None):
    """Draw from the zero-mean Laplace density ``exp(-|x|/scale) / (2 scale)``."""
    _check_positive("scale", scale)
    return rng.laplace(0.0, scale, size=size)


def laplace_mechanism(
    value: float,
    sensitivity: float,
    epsilon: float,
    rng: np.random.Generator,
    *,
    noiseless: bool = False,
    ledger: Optional[BudgetLedger] = None,
    round_: Optional[int] = None,
    mechanism: str = "laplace",
) -> float:
    """Release ``value`` with Laplace noise of scale ``sensitivity / epsilon``.

    When a ledger is given, the release is charged ``epsilon`` at ``round_``.
    """
    _check_positive("sensitivity", sensitivity)
    _check_positive("epsilon", epsilon)
    noise = 0.0 if noiseless else float(laplace_sample(sensitivity / epsilon, rng))
    if ledger is not None:
        if round_ is None:
            raise ValueError("round_ is required when charging a ledger")
        ledger.charge(round_, mechanism, epsilon)
    return float(value) + noise


def report_noisy_argmin(
    counts,
    epsilon: float,
    rng: np.random.Generator,
    *,
    noiseless: bool = False,
    size: Optional[int] = None,
):
    """Report-noisy-max applied to negated counts.

    Returns ``argmin_i counts[i] + Z_i`` with ``Z_i ~ Laplace(2/epsilon)``;
    ties go to the lowest index.  With ``size`` given, returns an int array of
    ``size`` independent selections.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a non-empty 1-d vector")
    _check_positive("epsilon", epsilon)
    if noiseless:
        j = int(np.argmin(counts))
        return j if size is None else np.full(size, j, dtype=np.int64)
    if size is None:
        noisy = counts + rng.laplace(0.0, 2.0 / epsilon, size=counts.size)
        return int(np.argmin(noisy))
    noisy = counts[None, :] + rng.laplace(0.0, 2.0 / epsilon, size=(size, counts.size))
    return np.argmin(noisy, axis=1)


def svt_alpha(epsilon: float, beta: float, horizon: int) -> float:
    """Accuracy radius of AboveThreshold: ``8 (log T + log(2/beta)) / epsilon``."""
    return 8.0 * (math.log(horizon) + math.log(2.0 / beta)) / epsilon


def _laplace_log_cdf(x: np.ndarray, scale: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = np.log1p(-0.5 * np.exp(-x[pos] / scale))
    out[~pos] = math.log(0.5) + x[~pos] / scale
    return out


class AboveThreshold:
    """Halting sparse vector technique against threshold 0.

    The threshold is perturbed once with ``Laplace(2/epsilon)`` noise and each
    query with fresh ``Laplace(4/epsilon)`` noise.  The first query whose noisy
    value reaches the noisy threshold returns True and halts the instance.
    """

    def __init__(
        self,
        epsilon: float,
        beta: float,
        horizon: int,
        rng: np.random.Generator,
        *,
        noiseless: bool = False,
    ):
        _check_positive("epsilon", epsilon)
        if not 0.0 < beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {beta}")
        if int(horizon) != horizon or horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {horizon}")
        self.epsilon = float(epsilon)
        self.beta = float(beta)
        self.horizon = int(horizon)
        self.noiseless = noiseless
        self._rng = rng
        self.alpha = svt_alpha(self.epsilon, self.beta, self.horizon)
        self.noisy_threshold = 0.0 if noiseless else float(rng.laplace(0.0, 2.0 / self.epsilon))
        self.halted = False
        self.queries_answered = 0

    @property
    def query_scale(self) -> float:
        return 4.0 / self.epsilon

    def _ensure_open(self):
        if self.halted:
            raise MechanismStateError("AboveThreshold instance has halted; start a new one")

    def test(self, query_value: float) -> bool:
        """Answer a single query; halts on True."""
        self._ensure_open()
        noise = 0.0 if self.noiseless else float(self._rng.laplace(0.0, self.query_scale))
        self.queries_answered += 1
        above = float(query_value) + noise >= self.noisy_threshold
        if above:
            self.halted = True
        return above

    def test_many(self, query_values) -> Optional[int]:
        """Answer queries in order until the first True.

        Returns the index of the first above-threshold query (the instance is
        then halted) or None if all were below.  Instead of one noise draw per
        query, the index of the first success is sampled from its exact law:
        with per-query success probabilities ``p_w`` the first success is the
        first ``k`` whose cumulative hazard ``sum_{w<=k} -log(1-p_w)`` reaches an
        Exp(1) draw.
        """
        self._ensure_open()
        q = np.asarray(query_values, dtype=float).ravel()
        if q.size == 0:
            return None
        if self.noiseless:
            hits = np.flatnonzero(q >= self.noisy_threshold)
        else:
            # P(q + nu >= rho) = 1 - F(rho - q); hazard = -log F(rho - q)
            e = self._rng.exponential()
            # hazard is increasing in q, so size * hazard(max q) bounds the total
            top = -_laplace_log_cdf(np.array([self.noisy_threshold - q.max()]), self.query_scale)[0]
            if q.size * top < e:
                hits = np.arange(0)
            else:
                hazard = -_laplace_log_cdf(self.noisy_threshold - q, self.query_scale)
                hits = np.flatnonzero(np.cumsum(hazard) >= e)
        if hits.size == 0:
            self.queries_answered += q.size
            return None
        k = int(hits[0])
        self.queries_answered += k + 1
        self.halted = True
        return k


def tree_levels(horizon: int) -> int:
    """Number of levels of the dyadic tree over ``[1..horizon]``."""
    return math.ceil(math.log2(horizon)) + 1


class TreeCounter:
    """Binary-tree mechanism for private running sums of a stream in [0, 1].

    Node ``(k, i)`` covers rounds ``i*2^k + 1 .. (i+1)*2^k``.  Its noise is drawn
    once at construction with scale ``levels / epsilon``, so an element, which
    sits in exactly one node per level, costs ``epsilon`` in total.
    """

    def __init__(
        self,
        horizon: int,
        epsilon: float,
        rng: np.random.Generator,
        *,
        noiseless: bool = False,
        ledger: Optional[BudgetLedger] = None,
        mechanism: str = "tree_counter",
    ):
        if int(horizon) != horizon or horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {horizon}")
        _check_positive("epsilon", epsilon)
        self.horizon = int(horizon)
        self.epsilon = float(epsilon)
        self.levels = tree_levels(self.horizon)
        self.node_scale = self.levels / self.epsilon
        self._node_noise = []
        for k in range(self.levels):
            n_nodes = -(-self.horizon // (1 << k))
            if noiseless:
                self._node_noise.append(np.zeros(n_nodes))
            else:
                self._node_noise.append(rng.laplace(0.0, self.node_scale, size=n_nodes))
        self._sums = [0.0]
        self.ledger = ledger
        self.mechanism = mechanism

    @property
    def t(self) -> int:
        return len(self._sums) - 1

    def nodes_for_prefix(self, t: int) -> list[tuple[int, int]]:
        """Dyadic decomposition of ``[1..t]`` as (level, index) pairs."""
        nodes = []
        start = 0
        for k in reversed(range(self.levels)):
            width = 1 << k
            if start + width <= t:
                nodes.append((k, start // width))
                start += width
        return nodes

    def noise_for_prefix(self, t: int) -> float:
        return float(sum(self._node_noise[k][i] for k, i in self.nodes_for_prefix(t)))

    def add(self, value: float) -> float:
        """Append one stream element and return the private prefix sum."""
        if self.t >= self.horizon:
            raise MechanismStateError(f"stream overflow: horizon {self.horizon} already reached")
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"stream elements must lie in [0, 1], got {value}")
        self._sums.append(self._sums[-1] + value)
        if self.ledger is not None:
            self.ledger.charge(self.t, self.mechanism, self.epsilon)
        return self.prefix(self.t)

    def prefix(self, t: int) -> float:
        """Private prefix sum ``c_t`` for an already observed ``t`` (replayable)."""
        if not 1 <= t <= self.t:
            raise MechanismStateError(f"prefix {t} not observed yet (stream at {self.t})")
        return self._sums[t] + self.noise_for_prefix(t)

    def true_prefix(self, t: int) -> float:
        return self._sums[t]
