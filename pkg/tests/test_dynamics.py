from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import random_state
from lozenge import _kernels as K
from lozenge import dynamics as D
from lozenge.tiling import ParticleRef, TilingState, all_ranges, new_box, new_torus, particle_range_bruteforce, validate


def box_component(state):
    """All configurations of the mobile particles reachable by legal single-particle moves.

    Ranges come from the brute-force oracle, so the support is independent of the engine.
    """
    key = lambda x: tuple(x.pos[x.mobile].tolist())
    seen = {key(state)}
    todo = [state]
    while todo:
        x = todo.pop()
        for c, j in np.argwhere(x.mobile):
            lo, hi = particle_range_bruteforce(x, ParticleRef(int(c), int(j)))
            for k in range(int(2 * lo), int(2 * hi) + 1, 2):
                t = x.copy()
                t.pos[c, j] = k
                if key(t) not in seen:
                    seen.add(key(t))
                    todo.append(t)
    return seen


def test_kind_parsing():
    assert D.DynamicsKind.parse("ii") == D.DYN_II
    assert D.DynamicsKind("DynI", 0.1).tag == "TiltedDynI"
    assert D.DynamicsKind("DynI", 0.1).base == "DynI"
    with pytest.raises(ValueError):
        D.DynamicsKind("Glauber")
    with pytest.raises(ValueError):
        D.DynamicsKind("DynI", float("inf"))


def test_rate_tables():
    s = random_state(8, seed=2)
    for ref in s.particles():
        lo, hi = all_ranges(s)
        a = (s.pos[ref.column, ref.rank] - lo[ref.column, ref.rank]) // 2
        c = (hi[ref.column, ref.rank] - s.pos[ref.column, ref.rank]) // 2
        n = s.pos[ref.column, ref.rank] / 2
        t1 = dict(D.rate_table(s, ref, D.DYN_I))
        t2 = dict(D.rate_table(s, ref, D.DYN_II))
        assert len(t1) == len(t2) == a + c
        for k, r in t1.items():
            assert r == pytest.approx(1 / (2 * abs(k - n)))
            assert t2[k] == pytest.approx(1 / (a + c + 1))
        single = dict(D.rate_table(s, ref, D.SINGLE_FLIP))
        assert set(single) == {k for k in t1 if abs(k - n) == 1}
        asym = dict(D.rate_table(s, ref, D.ASYMMETRIC))
        assert all(k > n for k in asym) and len(asym) == c


@pytest.mark.parametrize("kind", [D.DYN_I, D.DYN_II, D.DynamicsKind("DynI", 0.3), D.DynamicsKind("DynII", -0.2)])
def test_detailed_balance(kind):
    s = random_state(8, seed=4)
    for ref in s.particles()[::3]:
        n0 = s.pos[ref.column, ref.rank]
        for k, rate in D.rate_table(s, ref, kind):
            t = s.copy()
            t.pos[ref.column, ref.rank] = int(2 * k)
            back = dict(D.rate_table(t, ref, kind))[n0 / 2]
            y = k - n0 / 2
            assert rate / back == pytest.approx(np.exp(kind.B * y))


@pytest.fixture(scope="module")
def small_box():
    box = new_box(8, (1 / 3, 1 / 3), (2, 5, 0, 12))
    return box, box_component(box)


@pytest.mark.parametrize("kind", [D.DYN_I, D.DYN_II])
def test_uniform_stationary_measure_small_box(kind, small_box):
    box, support = small_box
    assert len(support) == 136
    eng = D.Engine(box.copy(), kind, seed=11)
    eng.run_until(20.0)
    counts = dict.fromkeys(support, 0)
    # snapshots about 30 events apart, so they are close to independent
    for _ in range(30_000):
        eng.run_until(eng.t + 10.0)
        counts[tuple(eng.state.pos[box.mobile].tolist())] += 1
    assert len(counts) == len(support)
    assert stats.chisquare(list(counts.values())).pvalue > 1e-3


def single_mobile_box():
    s = new_torus(8, (1 / 3, 1 / 3))
    lo, hi = all_ranges(s)
    size = (hi - lo) // 2 + 1
    c, j = np.argwhere(size >= 2)[0]
    # freeze everything else; spread the neighbours by hand if needed
    mobile = np.zeros_like(s.mobile)
    mobile[c, j] = True
    return TilingState.from_columns(8, s.pos, mobile=mobile, anchor=s.anchor), ParticleRef(int(c), int(j)), int(size[c, j])


@pytest.mark.parametrize("kind", [D.DYN_I, D.DYN_II])
def test_holding_times_exponential(kind):
    state, ref, size = single_mobile_box()
    eng = D.Engine(state, kind, seed=3)
    log = D.EventLog()
    eng.run_events(4000, log)
    t = np.concatenate([[0.0], log.t])
    waits = np.diff(t)
    lo, _ = all_ranges(state)
    pos = lo[ref.column, ref.rank] + 2 * np.arange(size)
    # position before each event, reconstructed from the log
    before = np.concatenate([[state.pos[ref.column, ref.rank]], state.pos[ref.column, ref.rank] + 2 * np.cumsum(log.y)])[:-1]
    for m in pos:
        rate = sum(r for _, r in D.rate_table(_at(state, ref, m), ref, kind))
        w = waits[before == m]
        assert len(w) > 100
        assert stats.kstest(w * rate, "expon").pvalue > 1e-3


def _at(state, ref, m):
    t = state.copy()
    t.pos[ref.column, ref.rank] = m
    return t


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([(1 / 3, 1 / 3), (0.25, 0.5), (0.5, 0.125)]))
def test_drift_sum_vanishes(seed, rho):
    s = random_state(8, rho, seed=seed, moves=5, kind=D.DYN_I)
    assert D.drift_sum(s, D.DYN_I) == Fraction(0)
    assert D.drift_sum(s, D.DYN_II) == Fraction(0)


def test_drift_sum_rejects_tilted():
    with pytest.raises(ValueError):
        D.drift_sum(new_torus(8, (1 / 3, 1 / 3)), D.DynamicsKind("DynI", 0.1))


def push_down(state, rng, sweeps=3):
    """Monotone increase of every height: move particles toward larger positions."""
    s = state.copy()
    for _ in range(sweeps):
        for c, j in rng.permutation([(c, j) for c in range(s.L) for j in range(s.N)]):
            lo, hi = all_ranges(s)
            s.pos[c, j] = rng.choice(np.arange(s.pos[c, j], hi[c, j] + 1, 2))
    return s


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_coupling_preserves_order(seed):
    rng = np.random.default_rng(seed)
    lower = random_state(8, seed=seed, moves=5)
    upper = push_down(lower, rng)
    assert validate(upper) and D.height_ordered(upper, lower)
    a, b = D.coupled_heat_bath(upper, lower, 5000, seed=seed)
    assert validate(a) and validate(b)
    assert D.height_ordered(a, b)


def test_coupling_coalesces_in_box():
    # on the torus a global vertical shift is never undone; a frozen boundary removes it
    rng = np.random.default_rng(0)
    box = new_box(8, (1 / 3, 1 / 3), (2, 6, 0, 14))
    lower = D.run(box, D.DYN_II, 5.0, rng=1)[0]
    upper = lower.copy()
    for _ in range(3):
        for c, j in np.argwhere(upper.mobile):
            _, hi = all_ranges(upper)
            upper.pos[c, j] = hi[c, j]
    assert validate(upper) and D.height_ordered(upper, lower)
    a, b = D.coupled_heat_bath(upper, lower, 20_000, seed=2)
    assert np.array_equal(a.pos, b.pos)


def test_backends_identical():
    s = random_state(8, seed=9)
    fast = D.Engine(s.copy(), D.DYN_I, seed=5)
    slow = D.Engine(s.copy(), D.DYN_I, seed=5, backend="python")
    fast.run_events(3000)
    slow.run_events(3000)
    assert np.array_equal(fast.state.pos, slow.state.pos)
    assert fast.t == slow.t


def test_zero_time_is_identity():
    s = random_state(8, seed=1)
    out, log = D.run(s, D.DYN_II, 0.0)
    assert out == s and len(log) == 0
    with pytest.raises(ValueError):
        D.run(s, D.DYN_II, -1.0)


def test_time_cuts_do_not_stall():
    # many short windows must give the same event rate as one long run
    box = new_box(8, (1 / 3, 1 / 3), (2, 5, 0, 12))
    eng = D.Engine(box.copy(), D.DYN_II, seed=11)
    for _ in range(2000):
        eng.run_until(eng.t + 0.05)
    assert eng.events > 0.8 * 2.5 * eng.t


def test_same_seed_same_trajectory():
    s = random_state(8, seed=1)
    a, la = D.run(s, D.DYN_I, 3.0, rng=7)
    b, lb = D.run(s, D.DYN_I, 3.0, rng=7)
    assert a == b and np.array_equal(la.t, lb.t)
    c, _ = D.run(s, D.DYN_I, 3.0, rng=8)
    assert not np.array_equal(a.pos, c.pos)


def test_audit_mode_runs_clean():
    eng = D.Engine(random_state(8, seed=1), D.DYN_II, seed=1, audit_every=50)
    eng.run_events(5000)
    assert eng.audit() < 1e-12


def test_audit_detects_corruption():
    eng = D.Engine(random_state(8, seed=1), D.DYN_II, seed=1, audit_every=1)
    p = 17
    K.tree_update(eng.tree, eng.size, p, eng.tree[eng.size + p] + 1.0)
    with pytest.raises(D.AuditFailure):
        eng.run_events(10)


def test_rate_overflow():
    with pytest.raises(D.RateOverflow):
        D.Engine(new_torus(8, (1 / 3, 1 / 3)), D.DynamicsKind("DynI", 5000.0))


def test_asymmetric_moves_only_down():
    _, log = D.run(random_state(8, seed=1), D.ASYMMETRIC, 2.0)
    assert len(log) > 0 and np.all(log.y > 0)


def test_asymmetric_current_nonnegative():
    s = random_state(8, seed=1)
    j = D.asymmetric_current(s, 2.0, [(0, 0), (3, 2)])
    assert np.all(j >= 0)


def test_event_log_csv(tmp_path):
    _, log = D.run(random_state(8, seed=1), D.DYN_II, 0.5)
    path = tmp_path / "events.csv"
    log.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,column,rank,y" and len(lines) == len(log) + 1


def test_replica_seeds_distinct():
    seeds = D.replica_seeds(0, 50)
    assert len(set(seeds)) == 50 and seeds == D.replica_seeds(0, 50)
