import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from siwalk import clock
from siwalk.clock import GAP_CAP, INF, ColumnGaps, column_increment_moments
from siwalk.walk3d import Rule, run_walk

from oracles import oracle_moments


@pytest.mark.parametrize("gaps,expected", [
    (ColumnGaps(INF, INF), (0.0, 3.0)),
    (ColumnGaps(1, 1), (0.0, 1.0)),
    (ColumnGaps(1, INF), (0.0, 2.0)),
    (ColumnGaps(INF, 1), (0.0, 2.0)),
])
def test_reference_moments(gaps, expected):
    mean, m2 = column_increment_moments(gaps)
    assert mean == pytest.approx(expected[0], abs=1e-12)
    assert m2 == pytest.approx(expected[1], abs=1e-12)


gap = st.one_of(st.just(INF), st.integers(1, 12))


@given(gap, gap)
def test_moments_match_enumeration(gp, gm):
    got = column_increment_moments(ColumnGaps(gp, gm))
    want = oracle_moments(gp, gm)
    assert got[0] == pytest.approx(want[0], abs=1e-12)
    assert got[1] == pytest.approx(want[1], abs=1e-12)


def test_closed_form_one_sided_gap():
    # gap g above, nothing below: E D^2 = 3/2 + (1/2)[sum_{j<g}(j-1)^2 2^-j + g^2 2^-(g-1)]
    for g in range(1, 20):
        up = sum(Fraction((j - 1) ** 2, 2**j) for j in range(1, g)) + Fraction(g * g, 2 ** (g - 1))
        assert column_increment_moments(ColumnGaps(g, INF))[1] == pytest.approx(float(Fraction(3, 2) + up / 2),
                                                                                  abs=1e-12)


@given(gap, gap)
def test_fresh_column_bound_and_positivity(gp, gm):
    m2 = column_increment_moments(ColumnGaps(gp, gm))[1]
    assert m2 >= 1.0 - 1e-12
    if gp == INF and gm == INF:
        assert m2 >= 2.0


def test_entry_visited_is_zero_increment():
    assert column_increment_moments(ColumnGaps(3, 5, entry_visited=True)) == (0.0, 0.0)


def test_gaps_beyond_cap_are_infinite():
    a = column_increment_moments(ColumnGaps(GAP_CAP + 5, INF))
    b = column_increment_moments(ColumnGaps(INF, INF))
    assert a == b


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_invalid_gap(bad):
    with pytest.raises(ValueError):
        ColumnGaps(bad, INF)


def _gaps_from_path(points, tau):
    """Column geometry at clock time tau, recomputed from the raw path."""
    x, y, z = points[tau]
    before = points[:tau]
    col = before[(before[:, 0] == x) & (before[:, 1] == y), 2]
    entry = bool(np.any(col == z))
    above = col[col > z] - z
    below = z - col[col < z]
    gp = int(above.min()) if len(above) else 0
    gm = int(below.min()) if len(below) else 0
    gp = 0 if gp > GAP_CAP else gp
    gm = 0 if gm > GAP_CAP else gm
    return entry, gp, gm


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_embed_matches_path_geometry(seed):
    path = run_walk(Rule.Z_FIRST, 4000, seed)
    mp = clock.embed(path)
    pts = path.points
    for ell in range(mp.T):
        tau = mp.clock_times[ell]
        assert mp.values[ell] == pts[tau, 2]
        entry, gp, gm = _gaps_from_path(pts, tau)
        assert mp.entry_visited[ell] == entry
        if not entry:
            assert (mp.g_plus[ell], mp.g_minus[ell]) == (gp, gm)
        g = mp.gaps(ell)
        assert mp.cond_m2[ell] == pytest.approx(column_increment_moments(g)[1], abs=1e-12)


@pytest.mark.parametrize("trial", range(5))
def test_simulation_equals_embedding(trial):
    mp = clock.simulate_martingale(3000, 21, trial)
    path = run_walk(Rule.Z_FIRST, int(mp.clock_times[-1]), 21, trial)
    emb = clock.embed(path)
    assert np.array_equal(mp.values, emb.values[: mp.T + 1])
    assert np.array_equal(mp.cond_m2, emb.cond_m2[: mp.T])


def test_fresh_columns_carry_variance_at_least_two():
    for trial in range(4):
        mp = clock.simulate_martingale(20_000, 5, trial)
        fresh = mp.fresh2d[: mp.T]
        assert fresh.any()
        assert np.all(mp.cond_m2[fresh] >= 2.0)


def test_quadratic_variation_and_mean():
    mp = clock.simulate_martingale(5000, 3)
    v = clock.quadratic_variation(mp)
    assert v[0] == 0 and np.all(np.diff(v) >= 0)
    assert v[-1] == pytest.approx(mp.cond_m2.sum())
    assert not mp.cond_mean.any()


def test_increments_zero_on_visited_entry():
    mp = clock.simulate_martingale(20_000, 8)
    assert not mp.increments[mp.entry_visited[: mp.T]].any()


def test_bridge_mode_closes_planar_loop():
    from siwalk import srw2d

    for trial in range(3):
        mp = clock.simulate_martingale(2000, 4, trial, bridge=True)
        planar = srw2d.sample_bridge(2000, 4, trial)
        assert mp.T == 2000
        assert np.array_equal(planar.points[-1], [0, 0])


def test_increment_tail_rows():
    rows = clock.increment_tail(np.array([0, 1, -2, 3, 0]), m_max=3)
    assert [r.count for r in rows] == [5, 3, 2, 1]
    for r in rows:
        lo, hi = r.interval
        assert lo <= r.estimate <= hi
    with pytest.raises(ValueError):
        clock.increment_tail(np.array([], dtype=np.int64))


def test_xy_first_has_no_embedding():
    with pytest.raises(ValueError):
        clock.embed(run_walk(Rule.XY_FIRST, 50, 0))


def test_memory_cap(small_cap):
    from siwalk._hashset import ResourceLimitError

    with pytest.raises(ResourceLimitError):
        clock.simulate_martingale(10_000, 0)
