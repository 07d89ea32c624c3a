import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from lozenge import tiling as T
from lozenge.geometry import level_from_slope
from lozenge.tiling import ParticleRef

SLOPES = [(1 / 3, 1 / 3), (0.25, 0.5), (0.5, 0.125), (0.125, 0.25)]


@pytest.fixture(scope="module")
def states():
    out = []
    for i in range(24):
        L = (4, 6, 8)[i % 3]
        out.append(random_state(L, SLOPES[i % 4], seed=i, moves=10))
    return out


def test_new_torus_valid_and_counts():
    s = T.new_torus(12, (1 / 3, 1 / 3))
    assert T.validate(s)
    assert s.N == 4 and s.winding == 4
    np.testing.assert_allclose(s.slope(), [1 / 3, 1 / 3])
    assert int(T.height_at(s, 0, 0)) == 0


def test_torus_size_checks():
    with pytest.raises(ValueError):
        T.new_torus(5, (1 / 3, 1 / 3))
    with pytest.raises(ValueError):
        T.new_torus(4, (0.45, 0.5))


def test_ranges_match_bruteforce(states):
    for s in states:
        for ref in s.particles()[:: max(1, len(s.particles()) // 12)]:
            assert T.particle_range(s, ref) == T.particle_range_bruteforce(s, ref)


def test_range_contains_particle(states):
    for s in states:
        lo, hi = T.all_ranges(s)
        assert np.all(lo <= s.pos) and np.all(s.pos <= hi)
        assert np.all((lo - s.pos) % 2 == 0)


def test_validate_rejects_broken_states():
    s = T.new_torus(8, (1 / 3, 1 / 3))
    bad = s.copy()
    bad.pos[0, 0] += 1
    assert T.validate(bad).kind == "parity"
    lo, hi = T.particle_range_doubled(s, ParticleRef(2, 1))
    bad = s.copy()
    bad.pos[2, 1] = hi + 2
    assert not T.validate(bad)
    with pytest.raises(T.InvalidTiling):
        T.TilingState.from_columns(8, bad.pos)


def test_height_increments(states):
    for s in states:
        u1, u2 = np.meshgrid(np.arange(-s.L, 2 * s.L), np.arange(-s.L, 2 * s.L), indexing="ij")
        h = T.height_at(s, u1, u2)
        assert set(np.unique(np.diff(h, axis=0))) <= {0, 1}
        assert set(np.unique(np.diff(h, axis=1))) <= {0, 1}
        # quasi-periodicity
        assert np.all(T.height_at(s, u1 + s.L, u2) - h == s.winding)
        assert np.all(T.height_at(s, u1, u2 + s.L) - h == s.L - s.N - s.winding)


def test_height_roundtrip(states):
    for s in states:
        f = T.height_field(s)
        cols = T.particles_from_height(f)
        rebuilt = T.TilingState.from_columns(s.L, [np.sort(c) for c in cols], anchor_height=int(f.values[0, 0]))
        for c in range(s.L):
            assert set(((s.pos[c] - c) % (2 * s.L)).tolist()) == set(((rebuilt.pos[c] - c) % (2 * s.L)).tolist())
        u1, u2 = np.meshgrid(np.arange(s.L), np.arange(s.L), indexing="ij")
        assert np.array_equal(T.height_at(rebuilt, u1, u2), f.values)


def test_levelset_roundtrip(states):
    for s in states:
        f = T.levelset_field(s)
        cols = T.particles_from_levelset(f)
        for c in range(s.L):
            assert set((np.asarray(cols[c]) % (2 * s.L)).tolist()) == set((s.pos[c] % (2 * s.L)).tolist())


def test_levelset_periodicity(states):
    for s in states:
        f = T.levelset_field(s)
        P = s.L - s.N
        v1, lam = np.meshgrid(-np.arange(s.L), np.arange(-P, 2 * P), indexing="ij")
        assert np.array_equal(f.value(v1, lam + P), f.value(v1, lam) + 2 * s.N)
        shifted = f.value(v1 - s.L, lam)
        assert np.array_equal(shifted, f.value(v1, lam + s.winding) + 2 * s.winding - s.L)


def test_level_lines_are_paths(states):
    for s in states:
        f = T.levelset_field(s)
        v1, lam = np.meshgrid(-np.arange(2 * s.L + 1), np.arange(s.L - s.N), indexing="ij")
        g = f.value(v1, lam)
        assert np.all(np.abs(np.diff(g, axis=0)) == 1)
        assert np.all(np.diff(g, axis=1) >= 0)  # level lines touch but never cross


def test_lozenge_counts(states):
    for s in states:
        n1, n2, n3 = T.lozenge_counts(s)
        assert n1 == s.winding * s.L
        assert n1 + n2 + n3 == s.L * s.L
        assert T.slope_asymmetry_estimate(s) == pytest.approx((n1 - n2) / (2 * s.L**2))


def test_event_x_agrees_with_edge_characterization(states):
    for s in states:
        for u1 in range(s.L):
            for u2 in range(s.L):
                assert T.event_X(s, (u1, u2)) == T.event_X_edge_type(s, (u1, u2))


def test_event_x_site_count(states):
    # the sites in the range of b other than b's own form the event X for b
    for s in states:
        lo, hi = T.all_ranges(s)
        expected = int(np.sum((hi - lo) // 2))
        hits = sum(T.event_X(s, (u1, u2)) is not None for u1 in range(s.L) for u2 in range(s.L))
        assert hits - s.L * s.N == expected


def test_move_changes_height_sums():
    s = random_state(8, seed=3)
    lo, hi = T.particle_range_doubled(s, ParticleRef(3, 1))
    u1, u2 = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    for target in range(lo, hi + 1, 2):
        t = s.copy()
        t.pos[3, 1] = target
        assert T.validate(t)
        up = (s.pos[3, 1] - target) // 2  # smaller doubled position is higher
        assert int(np.sum(T.height_at(t, u1, u2)) - np.sum(T.height_at(s, u1, u2))) == -up


def test_snapshot_roundtrip(tmp_path):
    s = random_state(8, seed=5)
    path = tmp_path / "state.json"
    s.save(path)
    assert T.TilingState.load(path) == s
    assert T.TilingState.from_json(s.to_json()) == s
    box = T.new_box(8, (1 / 3, 1 / 3), (2, 6, 0, 12))
    assert T.TilingState.from_dict(box.to_dict()) == box
    with pytest.raises(ValueError):
        T.TilingState.from_dict({**s.to_dict(), "version": 99})


def test_box_freezes_outside_window():
    box = T.new_box(8, (1 / 3, 1 / 3), (2, 6, 0, 12))
    assert box.mobile.any() and not box.mobile.all()
    assert box.domain.kind == "box"


def test_levelset_constructor_roundtrip():
    L, N, w = 16, 6, 5
    sbar = level_from_slope([w / L, (L - N - w) / L])
    state = T.from_levelset_function(L, N, w, lambda v1, v2: sbar[0] * v1 + sbar[1] * v2)
    assert T.validate(state) and state.winding == w and state.N == N


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(SLOPES), st.sampled_from([4, 6, 8]))
def test_random_moves_stay_valid(seed, rho, L):
    s = random_state(L, rho, seed=seed, moves=3)
    assert T.validate(s)
    u1, u2 = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    h = T.height_at(s, u1, u2)
    assert np.all(np.diff(h, axis=0) >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_extremum_stats_consistent(seed):
    s = random_state(6, seed=seed, moves=5)
    f = T.levelset_field(s)
    for v1 in range(0, -s.L, -1):
        for lam in range(s.L - s.N):
            r, eps, k = T.extremum_stats(f, v1, lam)
            assert r in (0, 1) and eps in (-1, 0, 1)
            assert (k == 0) == (r == 0)


def test_levelset_constructor_follows_surface():
    L, N, w = 16, 6, 5
    sbar = level_from_slope([w / L, (L - N - w) / L])
    surf = lambda v1, v2: sbar[0] * v1 + sbar[1] * v2 + 1.5 * np.sin(2 * np.pi * v1 / L)
    state = T.from_levelset_function(L, N, w, surf)
    f = T.levelset_field(state)
    v1, lam = np.meshgrid(-np.arange(L), np.arange(L - N), indexing="ij")
    assert np.max(np.abs(f.value(v1, lam) - surf(v1, lam + 0.5))) <= 1.0 + 1e-12
