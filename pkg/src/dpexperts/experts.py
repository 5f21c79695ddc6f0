"""Problem-domain types, the exact dynamic-regret comparator and regret accounting.

Experts are 0-indexed throughout; rounds are 1-indexed (round ``t`` is row
``t - 1`` of a loss matrix).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SIMPLEX_TOL = 1e-12


def as_loss_vector(values) -> np.ndarray:
    """Validate one round of losses; out-of-range values are rejected, never clamped."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("a loss vector must be a non-empty 1-d array")
    if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
        raise ValueError(f"losses must lie in [0, 1], got range [{v.min()}, {v.max()}]")
    return v


def as_loss_matrix(losses) -> np.ndarray:
    m = np.asarray(losses, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"loss matrix must be T x N with T, N >= 1, got shape {m.shape}")
    if not np.all(np.isfinite(m)) or m.min() < 0.0 or m.max() > 1.0:
        raise ValueError(f"losses must lie in [0, 1], got range [{m.min()}, {m.max()}]")
    return m


def count_switches(experts: Sequence[int]) -> int:
    e = np.asarray(experts)
    return int(np.count_nonzero(e[1:] != e[:-1])) if e.size > 1 else 0


@dataclass(frozen=True)
class ComparatorPath:
    experts: tuple[int, ...]

    @property
    def switch_count(self) -> int:
        return count_switches(self.experts)

    def within_budget(self, S: int) -> bool:
        return self.switch_count <= S

    def loss(self, losses) -> float:
        m = np.asarray(losses, dtype=float)
        total = 0.0
        for t, j in enumerate(self.experts):
            total += m[t, j]
        return total

    def __len__(self):
        return len(self.experts)


def check_distribution(weights, tol: float = SIMPLEX_TOL) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("a distribution must be a non-empty 1-d array")
    if w.min() < 0.0:
        raise ValueError("distribution has negative weights")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"distribution sums to {w.sum()!r}, not 1")
    return w


@dataclass(frozen=True)
class ClippedDistribution:
    """A distribution whose every coordinate is at least ``floor``."""

    weights: np.ndarray
    floor: float

    def __post_init__(self):
        w = check_distribution(self.weights)
        if not self.floor > 0:
            raise ValueError(f"floor must be positive, got {self.floor}")
        if w.size * self.floor > 1.0 + SIMPLEX_TOL:
            raise ValueError(f"infeasible floor: N * c = {w.size * self.floor} > 1")
        if w.min() < self.floor * (1 - 1e-12):
            raise ValueError(f"weight {w.min()} below floor {self.floor}")

    @classmethod
    def uniform(cls, n: int, floor: float) -> "ClippedDistribution":
        return cls(np.full(n, 1.0 / n), floor)


def switching_floor(N: int, T: int, S: int) -> float:
    """Floor ``S / (N T)`` of the clipped simplex; ``S > T`` is rejected."""
    if S > T:
        raise ValueError(f"S = {S} > T = {T} makes the clipped simplex empty")
    if S < 0:
        raise ValueError("S must be non-negative")
    return S / (N * T)


def _comparator_dp(m: np.ndarray, S: int):
    """Forward DP over (switches used, expert) with backpointers.

    ``cost[s, j]`` is the least loss of a prefix ending at expert ``j`` having
    used exactly ``s`` switches.  The cheapest switch into ``j`` comes from the
    best other expert, read off the row's smallest and second-smallest entries.
    """
    T, N = m.shape
    S = min(S, T - 1)
    K = S + 1
    cols = np.arange(N)
    cost = np.full((K, N), np.inf)
    cost[0] = m[0]
    switched = np.zeros((T, K, N), dtype=bool)
    source = np.zeros((T, K, N), dtype=np.int32)
    prefix_best = np.empty(T)
    prefix_best[0] = cost.min()
    for t in range(1, T):
        new = cost.copy()
        if K > 1 and N > 1:
            prev = cost[:-1]
            i1 = np.argmin(prev, axis=1)
            m1 = prev[np.arange(K - 1), i1]
            masked = prev.copy()
            masked[np.arange(K - 1), i1] = np.inf
            i2 = np.argmin(masked, axis=1)
            m2 = masked[np.arange(K - 1), i2]
            is_best = cols[None, :] == i1[:, None]
            sw_val = np.where(is_best, m2[:, None], m1[:, None])
            sw_src = np.where(is_best, i2[:, None], i1[:, None])
            take = sw_val < cost[1:]
            new[1:] = np.where(take, sw_val, cost[1:])
            switched[t, 1:] = take
            source[t, 1:] = sw_src
        cost = new + m[t][None, :]
        prefix_best[t] = cost.min()
    # fewer switches first, then lower expert index
    best = cost.min()
    s_end, j_end = next((s, int(np.argmin(cost[s]))) for s in range(K) if cost[s].min() == best)
    path = np.empty(T, dtype=np.int64)
    s, j = s_end, j_end
    for t in range(T - 1, -1, -1):
        path[t] = j
        if t > 0 and switched[t, s, j]:
            j = int(source[t, s, j])
            s -= 1
    return float(best), ComparatorPath(tuple(int(x) for x in path)), prefix_best


def dynamic_comparator(losses, S: int) -> tuple[float, ComparatorPath]:
    """Least total loss over expert sequences with at most ``S`` switches, and a minimiser.

    Runs in O(T N S) time.  Among optimal paths the one with the fewest
    switches (then lowest final expert) is returned.
    """
    if S < 0:
        raise ValueError(f"switch budget must be non-negative, got {S}")
    m = as_loss_matrix(losses)
    best, path, _ = _comparator_dp(m, int(S))
    return best, path


def prefix_comparator_curve(losses, S: int) -> np.ndarray:
    """Comparator value on every prefix ``1..t`` with budget ``S`` (one DP pass)."""
    if S < 0:
        raise ValueError(f"switch budget must be non-negative, got {S}")
    return _comparator_dp(as_loss_matrix(losses), int(S))[2]


def static_comparator(losses) -> tuple[float, int]:
    m = as_loss_matrix(losses)
    totals = m.sum(axis=0)
    j = int(np.argmin(totals))
    return float(totals[j]), j


@dataclass
class RegretTrace:
    """Per-round record of one run and its regret once finalised."""

    plays: np.ndarray
    played_loss: np.ndarray
    restarts: np.ndarray
    shifts: np.ndarray
    comparator_loss: Optional[float] = None
    dynamic_regret: Optional[float] = None
    comparator_curve: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, T: int) -> "RegretTrace":
        return cls(
            plays=np.full(T, -1, dtype=np.int64),
            played_loss=np.zeros(T),
            restarts=np.zeros(T, dtype=bool),
            shifts=np.zeros(T, dtype=bool),
        )

    @property
    def T(self) -> int:
        return len(self.plays)

    @property
    def cum_loss(self) -> np.ndarray:
        return np.cumsum(self.played_loss)

    @property
    def algorithm_loss(self) -> float:
        return float(self.played_loss.sum())

    @property
    def regret_curve(self) -> Optional[np.ndarray]:
        if self.comparator_curve is None:
            return None
        return self.cum_loss - self.comparator_curve

    def regret_at(self, t: int) -> float:
        """Dynamic regret of the first ``t`` rounds (needs the prefix curve)."""
        if self.comparator_curve is None:
            raise ValueError("trace was finalised without the per-round comparator curve")
        return float(self.cum_loss[t - 1] - self.comparator_curve[t - 1])

    @property
    def restart_count(self) -> int:
        return int(self.restarts.sum())

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", "J_t", "loss", "cum_loss", "restart", "shift"]
        curve = self.comparator_curve
        if curve is not None:
            header += ["comparator", "regret"]
        w.writerow(header)
        cum = self.cum_loss
        for i in range(self.T):
            row = [i + 1, int(self.plays[i]), repr(float(self.played_loss[i])), repr(float(cum[i])),
                   int(self.restarts[i]), int(self.shifts[i])]
            if curve is not None:
                row += [repr(float(curve[i])), repr(float(cum[i] - curve[i]))]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "RegretTrace":
        rows = list(csv.DictReader(Path(path).read_text().splitlines()))
        tr = cls(
            plays=np.array([int(r["J_t"]) for r in rows], dtype=np.int64),
            played_loss=np.array([float(r["loss"]) for r in rows]),
            restarts=np.array([r["restart"] == "1" for r in rows]),
            shifts=np.array([r["shift"] == "1" for r in rows]),
        )
        if rows and "comparator" in rows[0]:
            tr.comparator_curve = np.array([float(r["comparator"]) for r in rows])
            tr.comparator_loss = float(tr.comparator_curve[-1])
            tr.dynamic_regret = tr.algorithm_loss - tr.comparator_loss
        return tr


def regret_finalize(trace: RegretTrace, losses, S: int, per_round: bool = False) -> RegretTrace:
    """Fill in comparator loss and dynamic regret.

    The prefix comparator values fall out of the same forward DP, so the
    per-round curve costs nothing extra; ``per_round`` only decides whether it
    is kept on the trace (and written to CSV).
    """
    m = as_loss_matrix(losses)
    if m.shape[0] != trace.T:
        raise ValueError(f"trace has {trace.T} rounds but the loss matrix has {m.shape[0]}")
    best, path, curve = _comparator_dp(m, int(S))
    out = replace(trace, comparator_loss=best, dynamic_regret=trace.algorithm_loss - best,
                  comparator_curve=curve if per_round else None)
    out.meta = dict(trace.meta, comparator_switches=path.switch_count,
                    half_regret=float(trace.cum_loss[trace.T // 2 - 1] - curve[trace.T // 2 - 1])
                    if trace.T >= 2 else None)
    return out


def load_loss_csv(path) -> np.ndarray:
    """Read a T x N loss matrix; a non-numeric first row is treated as a header."""
    rows = [r for r in csv.reader(Path(path).read_text().splitlines()) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty loss file")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        m = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric loss entry ({exc})") from None
    return as_loss_matrix(m)


def save_loss_csv(path, losses, header: bool = True) -> None:
    m = as_loss_matrix(losses)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"expert_{j}" for j in range(m.shape[1])])
        for row in m:
            w.writerow([repr(float(x)) for x in row])
