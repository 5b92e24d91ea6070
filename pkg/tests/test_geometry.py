import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntn_handover import geometry as geo
from ntn_handover.geometry import GroundPoint, HandoffLoadQuery, SatelliteTrack


def track(x0, y0=0.0, v=(7.56, 0.0), r=25.0, id="S"):
    return SatelliteTrack(id, GroundPoint(x0, y0), v, r)


def mc_overlap(r, d, n=400_000, seed=0):
    """Monte-Carlo area of disc(0, r) ∩ disc((d, 0), r)."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-r, r, size=(n, 2))
    in_a = (pts**2).sum(axis=1) <= r * r
    in_b = ((pts[:, 0] - d) ** 2 + pts[:, 1] ** 2) <= r * r
    return (in_a & in_b).mean() * 4 * r * r


# -- positions and footprint -------------------------------------------------


def test_position_moves_linearly():
    t = track(-10.0)
    assert geo.position_at(t, 0.0) == GroundPoint(-10.0, 0.0)
    p = geo.position_at(t, 2.0)
    assert p.x == pytest.approx(5.12) and p.y == 0.0


def test_position_rejects_negative_time():
    with pytest.raises(ValueError):
        geo.position_at(track(0.0), -1.0)


def test_ground_point_rejects_nan():
    with pytest.raises(ValueError):
        GroundPoint(float("nan"), 0.0)


def test_footprint_boundary_is_inside():
    t = track(0.0, r=5.0)
    assert geo.in_footprint(GroundPoint(5.0, 0.0), t, 0.0)
    assert not geo.in_footprint(GroundPoint(5.0 + 1e-9, 0.0), t, 0.0)


def test_needs_handover_strictly_nearer():
    s1, s2 = track(0.0, id="A"), track(-30.0, id="B")
    assert geo.needs_handover(GroundPoint(-10.0, 0.0), s1, [s2], 0.0) is None
    # tie keeps the serving satellite
    assert geo.needs_handover(GroundPoint(-15.0, 0.0), s1, [s2], 0.0) is None
    assert geo.needs_handover(GroundPoint(-15.01, 3.0), s1, [s2], 0.0) == "B"


def test_needs_handover_picks_nearest_other():
    s1, s2, s3 = track(0.0, id="A"), track(-30.0, id="B"), track(-60.0, id="C")
    assert geo.needs_handover(GroundPoint(-55.0, 0.0), s1, [s1, s2, s3], 0.0) == "C"


# -- area formulas ------------------------------------------------------------


def test_intersect_area_unit_circle_derived():
    # 2 acos(1/2) - sqrt(3)/2, evaluated independently
    assert geo.intersect_area(1.0, 1.0) == pytest.approx(1.2283696986087567, rel=1e-12)
    assert geo.handoff_area(1.0, 1.0) == pytest.approx(1.9132229549810367, rel=1e-12)


def test_intersect_area_endpoints():
    assert geo.intersect_area(1.0, 0.0) == pytest.approx(math.pi)
    assert geo.intersect_area(3.0, 6.0) == pytest.approx(0.0, abs=1e-12)
    assert geo.handoff_area(2.0, 0.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("r,d", [(1.0, -0.1), (1.0, 2.0001), (0.0, 0.0), (-1.0, 0.5)])
def test_intersect_area_domain(r, d):
    with pytest.raises(ValueError):
        geo.intersect_area(r, d)


@given(st.floats(0.1, 100.0), st.floats(0.0, 1.0))
def test_areas_partition_the_disc(r, frac):
    d = 2 * r * frac
    total = geo.intersect_area(r, d) + geo.handoff_area(r, d)
    assert total == pytest.approx(math.pi * r * r, rel=1e-9)


@given(st.floats(0.1, 50.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_intersect_area_decreasing_in_displacement(r, f1, f2):
    lo, hi = sorted((f1, f2))
    assert geo.intersect_area(r, 2 * r * lo) >= geo.intersect_area(r, 2 * r * hi) - 1e-9


@pytest.mark.parametrize("r,d", [(1.0, 0.3), (12.07, 7.56), (25.0, 30.0), (2.0, 3.9)])
def test_intersect_area_matches_monte_carlo(r, d):
    assert geo.intersect_area(r, d) == pytest.approx(mc_overlap(r, d), rel=0.01)


def test_expected_handoffs_starlink_cell():
    q = HandoffLoadQuery(ue_count=65_519, cell_radius=12.07, satellite_speed=7.56, window=1.0)
    assert geo.expected_handoffs(q) == pytest.approx(2.6e4, rel=0.03)


def test_expected_handoffs_clamps():
    q = HandoffLoadQuery(ue_count=100, cell_radius=1.0, satellite_speed=10.0, window=1.0)
    assert geo.expected_handoffs(q) == 100.0


def test_handoff_query_rejects_zero():
    with pytest.raises(ValueError):
        HandoffLoadQuery(ue_count=10, cell_radius=1.0, satellite_speed=1.0, window=0.0)


# -- analytic event times -------------------------------------------------------


def _brute_crossing(ue, a, b, t_max=20.0, dt=1e-4):
    for t in np.arange(0.0, t_max, dt):
        if geo.needs_handover(ue, a, [b], float(t)) == b.id:
            return float(t)
    return None


@pytest.mark.parametrize("x,y", [(0.0, 0.0), (10.0, 15.0), (-20.0, -5.0)])
def test_midline_crossing_matches_polling(x, y):
    a, b = track(-50.0, id="A"), track(-80.0, id="B")
    ue = GroundPoint(x, y)
    t = geo.midline_crossing_time(ue, a, b)
    assert t == pytest.approx(_brute_crossing(ue, a, b), abs=2e-4)


def test_midline_crossing_never_when_moving_away():
    a, b = track(0.0, id="A", v=(-7.56, 0.0)), track(-30.0, id="B", v=(-7.56, 0.0))
    assert geo.midline_crossing_time(GroundPoint(0.0, 0.0), a, b) is None


def test_midline_crossing_requires_rigid_constellation():
    with pytest.raises(ValueError):
        geo.midline_crossing_time(GroundPoint(0, 0), track(0.0), track(-30.0, v=(7.0, 0.0)))


def test_footprint_exit_time():
    t = track(0.0, r=25.0, v=(5.0, 0.0))
    assert geo.footprint_exit_time(GroundPoint(0.0, 0.0), t) == pytest.approx(5.0)
    # y=20 -> chord half-width 15
    assert geo.footprint_exit_time(GroundPoint(10.0, 20.0), t) == pytest.approx(5.0)
    assert geo.footprint_exit_time(GroundPoint(0.0, 30.0), t) is None
    assert geo.footprint_exit_time(GroundPoint(-100.0, 0.0), t) is None


@given(
    st.lists(st.tuples(st.floats(-60, 60), st.floats(-24, 24)), min_size=1, max_size=20),
    st.floats(-100, 0),
)
def test_vectorised_times_match_scalar(pts, x0):
    a, b = track(x0, id="A"), track(x0 - 30.0, id="B")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    ct = geo.crossing_times(xs, ys, a, b)
    et = geo.exit_times(xs, ys, a)
    for i, (x, y) in enumerate(pts):
        c = geo.midline_crossing_time(GroundPoint(x, y), a, b)
        e = geo.footprint_exit_time(GroundPoint(x, y), a)
        assert (c is None and math.isnan(ct[i])) or ct[i] == pytest.approx(c, abs=1e-9)
        assert (e is None and math.isnan(et[i])) or et[i] == pytest.approx(e, abs=1e-9)
