import numpy as np
import pytest

from qdtune import chargemap as cm
from qdtune.characterize import initial_quality_assessment
from qdtune.datasets import solve_transmission
from qdtune.device import Device, Regime, new_random_device
from qdtune.ml.models import Classifier

from helpers import boundary_fixture, double_dot_voltages

CFG = cm.ChargeMapConfig()
SAFE = {"LP": (-3.0, 0.0), "RP": (-3.0, 0.0)}


@pytest.mark.parametrize("span,n", [(0.5, 101), (0.2, 50), (0.245, 50)])
def test_setpoint_count(span, n):
    pts = cm.plan_setpoints(-1.0, -1.0 + span)
    assert len(pts) == n
    assert np.max(np.diff(pts)) <= CFG.delta_v_max + 1e-12


def test_empty_setpoint_range():
    with pytest.raises(ValueError):
        cm.plan_setpoints(-1.0, -1.0)


def test_boundary_averages():
    assert cm.boundary_averages(np.full((5, 6), 0.05)) == pytest.approx((0.05,) * 4)
    m = np.full((5, 6), 0.01)
    m[:, 0] = 0.2
    left, right, bottom, top = cm.boundary_averages(m)
    assert left == pytest.approx(0.2) and right == pytest.approx(0.01)
    # corners belong to both a column and a row
    assert bottom == pytest.approx((0.2 + 5 * 0.01) / 6)


def test_boundary_averages_match_plain_sums():
    m = np.random.default_rng(0).random((17, 23))
    ny, nx = m.shape
    left = sum(m[j][0] for j in range(ny)) / ny
    right = sum(m[j][nx - 1] for j in range(ny)) / ny
    bottom = sum(m[0][i] for i in range(nx)) / nx
    top = sum(m[ny - 1][i] for i in range(nx)) / nx
    assert cm.boundary_averages(m) == pytest.approx((left, right, bottom, top), abs=1e-12)


def test_high_left_edge_moves_left_plunger_down():
    r = {"LP": (-1.0, -0.5), "RP": (-1.0, -0.5)}
    u = cm.adjust_ranges((0.15, 0.05, 0.05, 0.05), r, CFG, SAFE)
    assert u.actions == {"LP": "decrease", "RP": "keep"}
    assert u.ranges["LP"] == pytest.approx((-1.05, -0.55))
    assert u.terminated_reason is None


def test_low_top_edge_moves_right_plunger_up():
    r = {"LP": (-1.0, -0.5), "RP": (-1.0, -0.5)}
    u = cm.adjust_ranges((0.05, 0.05, 0.05, 0.002), r, CFG, SAFE)
    assert u.actions["RP"] == "increase"
    assert u.ranges["RP"] == pytest.approx((-0.95, -0.45))


def test_in_window_keeps_ranges():
    r = {"LP": (-1.0, -0.5), "RP": (-1.0, -0.5)}
    u = cm.adjust_ranges((0.05, 0.05, 0.05, 0.05), r, CFG, SAFE)
    assert u.terminated_reason == cm.IN_WINDOW
    assert u.ranges == r


def test_shift_clamped_at_safety_limit():
    r = {"LP": (-0.3, -0.02), "RP": (-1.0, -0.5)}
    u = cm.adjust_ranges((0.001, 0.001, 0.05, 0.05), r, CFG, SAFE)
    assert u.terminated_reason == cm.SAFETY_LIMIT
    assert u.limited == {"LP": "upper"}
    assert u.ranges["LP"] == pytest.approx((-0.28, 0.0))


def test_contradicting_votes_keep():
    r = {"LP": (-1.0, -0.5), "RP": (-1.0, -0.5)}
    u = cm.adjust_ranges((0.5, 0.001, 0.05, 0.05), r, CFG, SAFE)
    assert u.actions["LP"] == "keep"
    assert u.terminated_reason == cm.CONFLICT


def _tuned_fixture():
    phys = new_random_device(21)
    v = double_dot_voltages(phys, 0.3, (0.5, 0.5), tb=-2.7)
    dev = Device(phys, session_seed=1)
    initial_quality_assessment(dev)
    dev.set_voltages({g: v[g] for g in ("TB", "LB", "CB", "RB")})
    ranges = {}
    for g in ("LP", "RP"):
        lo = solve_transmission(phys, v, g, 0.5)
        ranges[g] = (lo, lo + 0.3)
    return dev, ranges


def test_tuned_fixture_reaches_window_quickly():
    dev, ranges = _tuned_fixture()
    cmap, hist = cm.acquire_diagram(dev, ranges, CFG, 10)
    assert hist[-1].terminated_reason == cm.IN_WINDOW
    assert len(hist) <= 3
    lo, hi = CFG.current_window
    assert all(lo <= m <= hi for m in hist[-1].means)


def test_dead_plungers_at_limit_stop_on_safety():
    dev = Device(new_random_device(2))
    initial_quality_assessment(dev)
    dev.set_voltages({"TB": -3.0, "LB": -3.0})  # no current anywhere
    cmap, hist = cm.acquire_diagram(dev, {"LP": (-0.3, 0.0), "RP": (-0.3, 0.0)}, CFG, 10)
    assert len(hist) == 1
    assert hist[0].terminated_reason == cm.SAFETY_LIMIT


def test_zero_iterations_returns_first_map():
    dev, ranges = boundary_fixture(0)
    cmap, hist = cm.acquire_diagram(dev, ranges, CFG, 0)
    assert hist == [] and dev.n_2d == 1
    assert cmap.x[0] == pytest.approx(ranges["LP"][0])


def test_acquired_map_is_resampled_to_pixel_pitch():
    dev, ranges = boundary_fixture(1)
    cmap, _ = cm.acquire_diagram(dev, ranges, CFG, 10)
    np.testing.assert_allclose(np.diff(cmap.x)[:-1], CFG.pixel_pitch, rtol=1e-9)


def flat_map(sx, sy, value=0.01):
    nx = int(round(sx / CFG.pixel_pitch)) + 1
    ny = int(round(sy / CFG.pixel_pitch)) + 1
    x = -1.0 + CFG.pixel_pitch * np.arange(nx)
    y = -1.0 + CFG.pixel_pitch * np.arange(ny)
    return cm.CurrentMap("LP", "RP", x, y, np.full((ny, nx), value))


@pytest.mark.parametrize("sx,sy,n", [(0.15, 0.10, 6), (0.17, 0.10, 6), (0.04, 0.04, 0)])
def test_segment_count(sx, sy, n):
    segs = cm.segment(flat_map(sx, sy))
    assert len(segs) == n
    assert all(s.pixels.shape == (28, 28) for s in segs)


def test_segment_pixels_follow_map():
    m = flat_map(0.1, 0.1)
    m.currents = m.x[None, :] + 0 * m.y[:, None]
    seg = cm.segment(m)[1]
    np.testing.assert_allclose(seg.pixels[0], seg.origin[0] + CFG.pixel_pitch * np.arange(28), atol=1e-12)


@pytest.mark.parametrize("sd,dd,rg,out", [
    (0, 0, 1, Regime.NO_DOT), (0, 0, 0, Regime.NO_DOT),
    (1, 0, 1, Regime.SINGLE_DOT), (0, 1, 0, Regime.DOUBLE_DOT),
    (1, 1, 1, Regime.DOUBLE_DOT), (1, 1, 0, Regime.SINGLE_DOT),
])
def test_combine_rules(sd, dd, rg, out):
    assert cm.combine(sd, dd, rg) == out


def test_assess_checks_segment_width():
    X = np.random.default_rng(0).random((10, 16))
    model = Classifier("KNN", {"n_neighbors": 1}).fit(X, [0, 1] * 5)
    seg = cm.Segment((0.0, 0.0), np.zeros((28, 28)))
    with pytest.raises(ValueError):
        cm.assess_segments([seg], model, model, model)
    assert cm.assess_segments([], model, model, model) == []


def test_map_csv_round_trip(tmp_path):
    dev, ranges = boundary_fixture(2)
    cmap, _ = cm.acquire_diagram(dev, ranges, CFG, 0, map_id="m0")
    cmap.save(tmp_path / "m0")
    back = cm.CurrentMap.load(tmp_path / "m0")
    np.testing.assert_array_equal(back.currents, cmap.currents)
    np.testing.assert_array_equal(back.x, cmap.x)
    assert back.map_id == "m0"
