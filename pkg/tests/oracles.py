"""Independent reference implementations used to derive expected values.

None of these share code with the package: they are slow, direct
translations of the definitions (numerical integration, exhaustive
enumeration, a generic constrained optimiser).
"""
import itertools
import math
import warnings

import numpy as np
from scipy import integrate, optimize, stats


def rnm_argmin_probabilities(counts, epsilon):
    """P(argmin_j counts_j + Z_j = i) for iid Laplace(2/epsilon) noise, by quadrature."""
    counts = np.asarray(counts, dtype=float)
    dist = stats.laplace(scale=2.0 / epsilon)
    probs = []
    for i, ci in enumerate(counts):
        others = np.delete(counts, i)

        def integrand(x):
            # every other noisy count lies strictly above ci + x
            return dist.pdf(x) * np.prod(dist.sf(ci + x - others))

        breaks = sorted({0.0, *(others - ci).tolist()})
        lo, hi = -60.0 / epsilon, 60.0 / epsilon
        pts = [lo, *[b for b in breaks if lo < b < hi], hi]
        probs.append(sum(integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12)[0]
                         for a, b in zip(pts, pts[1:])))
    return np.array(probs)


def brute_force_comparator(losses, S):
    """Minimum over every expert sequence with at most S switches, summed in time order."""
    losses = np.asarray(losses, dtype=float)
    T, N = losses.shape
    best = math.inf
    for seq in itertools.product(range(N), repeat=T):
        if sum(a != b for a, b in zip(seq, seq[1:])) > S:
            continue
        acc = 0.0
        for t, j in enumerate(seq):
            acc = acc + losses[t, j]
        best = min(best, acc)
    return best


def brute_force_comparator_vec(losses, S):
    """Vectorised form of :func:`brute_force_comparator` (same summation order)."""
    losses = np.asarray(losses, dtype=float)
    T, N = losses.shape
    seqs = np.array(list(itertools.product(range(N), repeat=T)), dtype=np.int64).reshape(-1, T)
    switches = (seqs[:, 1:] != seqs[:, :-1]).sum(axis=1)
    seqs = seqs[switches <= S]
    acc = np.zeros(len(seqs))
    for t in range(T):
        acc = acc + losses[t, seqs[:, t]]
    return float(acc.min())


def kl_projection_slsqp(v, floor):
    """min sum w log(w/v) s.t. sum w = 1, w >= floor, via SLSQP."""
    v = np.asarray(v, dtype=float)
    n = v.size

    def f(w):
        return float(np.sum(w * (np.log(w) - np.log(v))))

    def g(w):
        return np.log(w) - np.log(v) + 1.0

    x0 = np.full(n, 1.0 / n)
    with warnings.catch_warnings():
        # SLSQP steps slightly outside the box before clipping; harmless here
        warnings.simplefilter("ignore", RuntimeWarning)
        res = _slsqp(f, g, x0, floor, n)
    assert res.success, res.message
    return res.x


def _slsqp(f, g, x0, floor, n):
    return optimize.minimize(
        f, x0, jac=g, method="SLSQP",
        bounds=[(floor, 1.0)] * n,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones(n)}],
        options={"ftol": 1e-13, "maxiter": 1000},
    )


def first_restart_noiseless(losses, plays, N, T, beta, epsilon):
    """First round ``t`` at which some trailing window ``[t-w, t]`` has excess regret
    (played minus best single expert) at or above allowance + radius + 1."""
    losses = np.asarray(losses, dtype=float)
    lg = math.log(N * T / beta)
    alpha = 16.0 * (2.0 * math.log(T) + math.log(2.0 / beta)) / epsilon
    played_seq = losses[np.arange(len(plays)), plays]
    for t in range(1, len(plays) + 1):
        w = np.arange(t)
        # window [t-w, t] in 1-indexed rounds is rows t-1-w .. t-1
        rev_played = np.cumsum(played_seq[:t][::-1])
        rev_expert = np.cumsum(losses[:t][::-1], axis=0)
        excess = rev_played - rev_expert.min(axis=1)
        allowance = 16.0 * lg / epsilon + 9.0 * np.sqrt(w * lg)
        if np.any(excess - allowance - alpha - 1.0 >= 0):
            return t
    return None
