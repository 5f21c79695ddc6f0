import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpexperts.experts import ClippedDistribution
from dpexperts.learners import (
    LEARNERS,
    MWA,
    FollowTheLeader,
    LazyRnm,
    MetaExpert,
    MetaExpertReduction,
    NoisyMWA,
    ResourceCapError,
    SvtRestart,
    default_eta,
    enumerate_meta_experts,
    is_update_round,
    kl_project_clipped,
    make_learner,
    meta_expert_count,
    meta_play_matrix,
    mirror_step,
    probe_windows,
    restart_alpha,
    window_regret_allowance,
)
from dpexperts.mechanisms import BudgetLedger, MechanismStateError, svt_alpha
from oracles import first_restart_noiseless, kl_projection_slsqp

# first restart round of the noiseless SVT learner on the two-phase instance below,
# from tests/oracles.py::first_restart_noiseless
NOISELESS_RESTART_ROUND = 3454


def _run(learner, L):
    plays = []
    for t, row in enumerate(L, 1):
        plays.append(learner.play(t))
        learner.update(row)
    return plays


# ---------------------------------------------------------------- projection

def test_projection_one_coordinate_clips():
    assert np.allclose(kl_project_clipped([0.99, 0.01], 0.1), [0.9, 0.1], atol=1e-15)


def test_projection_matches_optimiser_on_tilted_uniform():
    w = mirror_step(np.full(3, 1 / 3), np.array([10.0, 0.0, 0.0]), 1.0, 1 / 30)
    # SLSQP oracle value (tests/oracles.py::kl_projection_slsqp)
    assert np.allclose(w, [1 / 30, 29 / 60, 29 / 60], atol=1e-6)
    ClippedDistribution(w, 1 / 30)


def test_unclipped_entropic_step():
    w = mirror_step(np.array([0.5, 0.5]), np.array([1.0, 0.0]), 0.01, 1e-6)
    expected = np.array([math.exp(-0.01), 1.0]) / (1 + math.exp(-0.01))
    assert np.allclose(w, expected, rtol=0, atol=1e-15)


@st.composite
def projection_inputs(draw):
    n = draw(st.integers(1, 50))
    v = draw(arrays(np.float64, n, elements=st.floats(1e-9, 1e3)))
    floor = draw(st.floats(0, 1.0 / n))
    return v, floor


@settings(max_examples=300)
@given(projection_inputs())
def test_projection_kkt(args):
    v, c = args
    w = kl_project_clipped(v, c)
    assert abs(w.sum() - 1) <= 1e-12
    assert np.all(w >= c)
    free = w > c
    if free.any():
        theta = np.median(w[free] / v[free])
        assert np.allclose(w, np.maximum(c, theta * v), rtol=1e-9, atol=1e-12)
        # clipped coordinates must not want more mass
        assert np.all(theta * v[~free] <= c * (1 + 1e-9))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.data())
def test_projection_matches_slsqp(n, data):
    # moderate dynamic range: SLSQP itself stalls on weights spanning many decades
    log_v = data.draw(arrays(np.float64, n, elements=st.floats(-3, 3)))
    c = data.draw(st.floats(1e-3, 0.999)) / n
    v = np.exp(log_v)
    w = kl_project_clipped(v, c)
    ref = kl_projection_slsqp(v / v.sum(), c)
    assert np.allclose(w, ref, atol=1e-6)


def test_projection_errors_and_uniform():
    assert np.allclose(kl_project_clipped([1.0, 2.0], 0.5), [0.5, 0.5])
    for v, c in [([1.0, 2.0], 0.6), ([0.0, 0.0], 0.1), ([-1.0, 2.0], 0.1), ([1.0], -0.1)]:
        with pytest.raises(ValueError):
            kl_project_clipped(v, c)


@given(st.integers(1, 50), st.integers(2, 10**5), st.integers(0, 10), st.floats(0.1, 10))
def test_default_eta(N, T, S, eps):
    assert default_eta(eps, N, T, S) == pytest.approx(eps * math.sqrt(max(S, 1) / (T * math.log(N * T))))


# ---------------------------------------------------------------- MWA family

def test_mwa_weights_are_exponential_in_cumulative_loss():
    rng = np.random.default_rng(0)
    L = rng.random((40, 4))
    m = MWA(4, 0.3, np.random.default_rng(1))
    _run(m, L)
    ref = np.exp(-0.3 * L.sum(axis=0))
    assert np.allclose(m.w, ref / ref.sum(), rtol=1e-12)


def test_noisy_mwa_stays_on_clipped_simplex_and_charges_every_round():
    ledger = BudgetLedger()
    T, N, S = 200, 5, 2
    m = NoisyMWA(N, T, S, 0.5, np.random.default_rng(0), np.random.default_rng(1), ledger=ledger)
    assert m.floor == pytest.approx(S / (N * T))
    rng = np.random.default_rng(2)
    for t in range(1, T + 1):
        m.step(t, rng.random(N))
        assert m.w.min() >= m.floor * (1 - 1e-12)
        assert abs(m.w.sum() - 1) < 1e-12
    assert m.distribution.floor == m.floor
    assert {r: len(c) for r, c in ledger.by_round().items()} == {r: 1 for r in range(1, T + 1)}
    assert all(e == 0.5 for _, _, e in ledger)


def test_noisy_mwa_zero_budget_floor():
    m = NoisyMWA(4, 10, 0, 1.0, np.random.default_rng(0), np.random.default_rng(1))
    assert m.floor == pytest.approx(1 / (4 * 100))


def test_noisy_mwa_noiseless_is_the_projected_update():
    m = NoisyMWA(3, 10, 1, 1.0, np.random.default_rng(0), None, eta=1.0, noiseless=True)
    m.play(1)
    m.update([1.0, 0.0, 0.0])
    expected = kl_project_clipped(np.array([math.exp(-1), 1, 1]), 1 / 30)
    assert np.allclose(m.w, expected, atol=1e-15)


def test_learner_protocol_errors():
    m = NoisyMWA(2, 5, 1, 1.0, np.random.default_rng(0), np.random.default_rng(1))
    with pytest.raises(MechanismStateError):
        m.update([0, 0])
    m.play(1)
    with pytest.raises(MechanismStateError):
        m.play(2)
    with pytest.raises(ValueError):
        m.update([0.0, 0.0, 0.0])
    f = FollowTheLeader(2)
    with pytest.raises(MechanismStateError):
        f.play(2)


def test_ftl_plays_lowest_index_leader():
    f = FollowTheLeader(3)
    plays = _run(f, [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]])
    assert plays == [0, 1, 2, 0]


# ---------------------------------------------------------------- lazy

@pytest.mark.parametrize("t,flag", [(1, False), (2, True), (3, False), (4, True), (6, False), (1024, True)])
def test_update_rounds(t, flag):
    assert is_update_round(t) == flag


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 40), st.integers(1, 4)), elements=st.floats(0, 1)))
def test_lazy_noiseless_follows_doubling_windows(L):
    ledger = BudgetLedger()
    lr = LazyRnm(L.shape[1], 1.0, np.random.default_rng(0), noiseless=True, ledger=ledger)
    plays = _run(lr, L)
    current = plays[0]
    for t in range(2, len(L) + 1):
        if is_update_round(t):
            current = int(np.argmin(L[t // 2 - 1:t - 1].sum(axis=0)))
        assert plays[t - 1] == current
    # every observed round before the last update is charged exactly once
    last = max([t for t in range(2, len(L) + 1) if is_update_round(t)], default=1)
    assert sorted(r for r, _, _ in ledger) == list(range(1, last))
    assert lr.rnm_calls == int(math.log2(last)) if last > 1 else lr.rnm_calls == 0


def test_lazy_round_offset_shifts_charges():
    ledger = BudgetLedger()
    lr = LazyRnm(2, 1.0, np.random.default_rng(0), ledger=ledger, round_offset=100)
    _run(lr, np.zeros((4, 2)))
    assert [r for r, _, _ in ledger] == [101, 102, 103]


def test_lazy_initial_expert_is_uniform():
    firsts = [LazyRnm(4, 1.0, np.random.default_rng(s)).play(1) for s in range(4000)]
    assert np.allclose(np.bincount(firsts, minlength=4) / 4000, 0.25, atol=0.03)


# ---------------------------------------------------------------- SVT restart

def test_restart_constants():
    T, beta, eps = 1000, 1e-3, 1.0
    # the restart radius is the SVT radius at (eps/2, beta/T, T)
    assert restart_alpha(T, beta, eps) == pytest.approx(svt_alpha(eps / 2, beta / T, T))
    assert window_regret_allowance(0, 10, T, beta, eps) == pytest.approx(16 * math.log(10 * T / beta))
    assert window_regret_allowance(4, 10, T, beta, eps) == pytest.approx(
        16 * math.log(1e7) + 9 * math.sqrt(4 * math.log(1e7)))


def test_probe_windows():
    assert probe_windows(5, "exact").tolist() == [0, 1, 2, 3, 4, 5]
    assert probe_windows(9, "geometric").tolist() == [1, 2, 4, 8]
    assert probe_windows(0, "geometric").size == 0
    with pytest.raises(ValueError):
        probe_windows(3, "bogus")


def _two_phase(T=4096, switch=2048):
    L = np.zeros((T, 2))
    L[:switch, 1] = 1.0
    L[switch:, 0] = 1.0
    return L


def test_svt_noiseless_restart_matches_oracle():
    L = _two_phase()
    T = len(L)
    lr = SvtRestart(2, T, 1000.0, np.random.SeedSequence(0), noiseless=True, probe_mode="exact")
    plays = _run(lr, L)
    assert lr.restart_times[0] == NOISELESS_RESTART_ROUND
    k = NOISELESS_RESTART_ROUND
    assert first_restart_noiseless(L[:k], plays[:k], 2, T, 1 / T, 1000.0) == k
    # the fresh segment's lazy learner has moved to the new best expert by the end
    assert plays[-1] == 1


def test_svt_queries_are_window_excess_regret():
    L = _two_phase(64, 32)
    lr = SvtRestart(2, 64, 1.0, np.random.SeedSequence(0), noiseless=True, probe_mode="exact")
    plays = _run(lr, L)
    t = 64
    ws = np.arange(10)
    q = lr.queries(t, ws)
    played = np.array([sum(L[r - 1, plays[r - 1]] for r in range(t - w, t + 1)) for w in ws])
    best = np.array([min(L[t - w - 1:t, j].sum() for j in range(2)) for w in ws])
    ref = played - best - window_regret_allowance(ws, 2, 64, 1 / 64, 1.0) - lr.alpha - 1
    assert np.allclose(q, ref, atol=1e-9)
    # geometric windows go through the non-contiguous path
    assert np.allclose(lr.queries(t, np.array([1, 2, 4])), ref[[1, 2, 4]], atol=1e-9)


def test_svt_charges_each_round_once_per_mechanism():
    ledger = BudgetLedger()
    L = _two_phase()
    lr = SvtRestart(2, len(L), 1000.0, np.random.SeedSequence(0), noiseless=True,
                    probe_mode="exact", ledger=ledger)
    _run(lr, L)
    for r, charges in ledger.by_round().items():
        kinds = [m.rsplit("/", 1)[1] for m, _ in charges]
        assert kinds.count("rnm") <= 1 and kinds.count("svt") <= 1
        assert all(e == 500.0 for _, e in charges)


def test_svt_auto_probe_mode():
    assert SvtRestart(2, 100, 1.0, np.random.SeedSequence(0)).probe_mode == "exact"
    assert SvtRestart(2, 20_000, 1.0, np.random.SeedSequence(0)).probe_mode == "geometric"
    with pytest.raises(ValueError):
        SvtRestart(2, 10, 1.0, np.random.SeedSequence(0), probe_mode="x")


def test_svt_step_reports_restart():
    L = _two_phase()
    lr = SvtRestart(2, len(L), 1000.0, np.random.SeedSequence(0), noiseless=True)
    flags = [lr.step(t, L[t - 1])[1] for t in range(1, len(L) + 1)]
    assert [t for t, f in enumerate(flags, 1) if f] == lr.restart_times


# ---------------------------------------------------------------- meta-experts

def test_meta_expert_semantics():
    e = MetaExpert((3, 5), (0, 1, 2))
    assert e.sequence(6).tolist() == [0, 0, 1, 1, 2, 2]
    with pytest.raises(ValueError):
        MetaExpert((3,), (0,))
    with pytest.raises(ValueError):
        MetaExpert((3, 3), (0, 1, 2))


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2))
def test_meta_enumeration_matches_play_matrix(T, N, S):
    experts = enumerate_meta_experts(T, N, S)
    plays = meta_play_matrix(T, N, S)
    assert len(experts) == plays.shape[0] == meta_expert_count(T, N, S)
    assert np.array_equal(np.stack([e.sequence(T) for e in experts]), plays)


@given(st.integers(2, 12), st.integers(1, 5), st.integers(1, 4))
def test_meta_count_bound(T, N, S):
    assert meta_expert_count(T, N, S) <= (N * T) ** (2 * S)


def test_meta_count_bound_fails_for_single_round():
    # with T = 1 the c = 1 term already exceeds (N T)^(2S)
    assert meta_expert_count(1, 2, 1) == 6 > (2 * 1) ** 2


def test_meta_count_closed_form():
    assert meta_expert_count(6, 2, 1) == 2 + 6 * 4 == 26


def test_meta_cap():
    with pytest.raises(ResourceCapError):
        meta_play_matrix(50, 3, 3, cap=1000)


def test_meta_reduction_feeds_meta_losses():
    plays = meta_play_matrix(4, 2, 1)
    red = MetaExpertReduction(FollowTheLeader(plays.shape[0]), plays)
    red.play(1)
    ml = red.meta_loss([0.0, 1.0])
    assert np.array_equal(ml, np.where(plays[:, 0] == 0, 0.0, 1.0))
    red.update([0.0, 1.0])
    with pytest.raises(MechanismStateError):
        MetaExpertReduction(FollowTheLeader(2), np.zeros((2, 1), dtype=int)).play(2)


# ---------------------------------------------------------------- factory

@pytest.mark.parametrize("name", LEARNERS)
def test_make_learner_runs(name):
    T, N, S = 8, 2, 1
    ledger = BudgetLedger()
    lr = make_learner(name, N=N, T=T, S=S, epsilon=1.0, seed=np.random.SeedSequence(3), ledger=ledger)
    plays = _run(lr, np.random.default_rng(0).random((T, N)))
    assert all(0 <= j < N for j in plays)


def test_make_learner_unknown():
    with pytest.raises(ValueError):
        make_learner("nope", N=2, T=2, S=0, epsilon=1.0, seed=np.random.SeedSequence(0))
    with pytest.raises(ValueError):
        make_learner("meta", N=2, T=2, S=0, epsilon=1.0, seed=np.random.SeedSequence(0),
                     options={"base": "nope"})


def test_make_learner_is_seed_deterministic():
    L = np.random.default_rng(0).random((50, 3))
    runs = [_run(make_learner("noisy_mwa", N=3, T=50, S=2, epsilon=1.0,
                              seed=np.random.SeedSequence(9)), L) for _ in range(2)]
    assert runs[0] == runs[1]
