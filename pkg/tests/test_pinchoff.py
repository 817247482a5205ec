import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import least_squares

from qdtune import pinchoff as po


def tanh_trace(a, b, c, n=151, noise=0.0, rng=None, v=(0.0, 1.0)):
    x = np.linspace(0.0, 1.0, n)
    y = a * (1 + np.tanh(b * x + c))
    if noise:
        y = y + noise * rng.standard_normal(n)
    return po.Trace("G", np.linspace(*v, n), y)


def test_normalize_divides_by_a_max():
    t = po.normalize_and_canonicalize(np.linspace(0, 1, 8), [2e-9, 4e-9] * 4, 4e-9)
    assert t.currents[:2].tolist() == [0.5, 1.0]


def test_normalize_sorts_descending_sweep():
    v = np.linspace(0.0, -1.0, 10)
    i = np.arange(10.0)
    t = po.normalize_and_canonicalize(v, i, 1.0)
    assert np.all(np.diff(t.setpoints) > 0)
    assert t.currents.tolist() == list(range(9, -1, -1))


def test_normalize_rejects_bad_input():
    with pytest.raises(po.InvalidNormalization):
        po.normalize_and_canonicalize(np.arange(10.0), np.ones(10), 0.0)
    with pytest.raises(po.ShapeError):
        po.normalize_and_canonicalize(np.arange(10.0), np.ones(9), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 0, allow_nan=False), min_size=8, max_size=40, unique=True),
       st.floats(0.1, 10))
def test_canonical_trace_is_order_independent(volts, a_max):
    v = np.array(volts)
    i = np.cos(3 * v)
    perm = np.random.default_rng(0).permutation(len(v))
    t1 = po.normalize_and_canonicalize(v, i, a_max)
    t2 = po.normalize_and_canonicalize(v[perm], i[perm], a_max)
    np.testing.assert_array_equal(t1.setpoints, t2.setpoints)
    np.testing.assert_array_equal(t1.currents, t2.currents)


def test_smooth_constant_is_unchanged():
    t = po.Trace("G", np.arange(20.0), np.full(20, 0.3))
    np.testing.assert_allclose(po.smooth(t, 2.0).currents, 0.3, atol=1e-15)


def test_smooth_impulse_is_gaussian_and_sums_to_one():
    c = np.zeros(41)
    c[20] = 1.0
    out = po.smooth(po.Trace("G", np.arange(41.0), c), 1.0).currents
    assert out.sum() == pytest.approx(1.0, abs=1e-12)
    k = np.arange(-4, 5)
    g = np.exp(-0.5 * k ** 2)
    np.testing.assert_allclose(out[16:25], g / g.sum(), rtol=1e-12)


def test_smoothing_reduces_white_noise_variance():
    for seed in range(10):
        y = np.random.default_rng(seed).standard_normal(200)
        t = po.Trace("G", np.arange(200.0), y)
        assert po.smooth(t, 2.0).currents.var() < y.var()


def test_fit_recovers_exact_parameters():
    f = po.fit_tanh(tanh_trace(0.45, 12.0, -6.0))
    assert f.a == pytest.approx(0.45, rel=1e-6)
    assert f.b == pytest.approx(12.0, rel=1e-6)
    assert f.c == pytest.approx(-6.0, rel=1e-6)
    assert not f.degraded


def test_fit_all_zero_trace():
    f = po.fit_tanh(po.Trace("G", np.linspace(0, 1, 50), np.zeros(50)))
    assert f.a <= 1e-6
    assert f.residual_norm <= 1e-9


def test_noisy_fit_matches_grid_search_oracle():
    """Oracle: coarse grid over (a, b, c) then scipy's trust-region refinement."""
    rng = np.random.default_rng(5)
    x = np.linspace(0, 1, 151)
    for _ in range(10):
        a, b, x0 = rng.uniform(0.3, 0.5), rng.uniform(6, 30), rng.uniform(0.3, 0.7)
        t = tanh_trace(a, b, -b * x0, noise=0.01, rng=rng)
        model = lambda p: p[0] * (1 + np.tanh(p[1] * x + p[2])) - t.currents  # noqa: E731
        grid = [(ga, gb, -gb * gx) for ga in np.linspace(0.2, 0.6, 9)
                for gb in np.linspace(4, 40, 10) for gx in np.linspace(0.1, 0.9, 17)]
        p0 = min(grid, key=lambda p: np.sum(model(p) ** 2))
        ref = least_squares(model, p0, xtol=1e-14, ftol=1e-14).x
        f = po.fit_tanh(t)
        assert f.a == pytest.approx(ref[0], rel=1e-3)
        assert f.a == pytest.approx(a, rel=0.05)


def test_extract_voltages_analytic_curve():
    n = 100_001
    x = np.linspace(0, 1, n)
    t = po.Trace("G", x, 0.5 * (1 + np.tanh(10 * (x - 0.5))))
    v_l, v_t, v_h = po.extract_voltages(t)
    step = 1 / (n - 1)
    assert v_t == pytest.approx(0.5, abs=3 * step)
    assert v_l == pytest.approx(0.4, abs=3 * step)
    assert v_h == pytest.approx(0.5 + np.arctanh(1 / np.sqrt(3)) / 10, abs=3 * step)


def test_extract_voltages_translation():
    x = np.linspace(0, 1, 301)
    f = lambda u: 0.5 * (1 + np.tanh(10 * (u - 0.5)))  # noqa: E731
    a = po.extract_voltages(po.Trace("G", x, f(x)))
    b = po.extract_voltages(po.Trace("G", x + 0.2, f(x)))
    np.testing.assert_allclose(np.array(b) - np.array(a), 0.2, atol=1e-12)


def test_extract_window_longer_than_trace():
    with pytest.raises(po.ShapeError):
        po.extract_voltages(po.Trace("G", np.arange(8.0), np.arange(8.0)), window=9)


def test_features_projection():
    fit = po.PinchoffFit(0.5, 10.0, -5.0, 1e-6, 0.4, 0.5, 0.56, 0.0, 1.0)
    assert po.features(fit).tolist() == [0.5, 10.0, 1e-6, 0.0]


def test_flat_saturated_trace_has_high_low_current():
    t = po.Trace("G", np.linspace(-3, 0, 100), np.ones(100) + 1e-3 * np.sin(np.arange(100)))
    assert po.analyze(t).low_current == pytest.approx(1.0, abs=0.01)


def test_level_crossing_closed_form():
    fit = po.TanhFit(0.5, 8.0, -4.0, 0.0)
    assert po.level_crossing(fit, 0.75) == pytest.approx((np.arctanh(0.5) + 4) / 8)
    assert po.level_crossing(fit, 1.0) is None


def test_trace_csv():
    t = po.Trace("G", np.arange(8.0), np.zeros(8))
    lines = t.to_csv().splitlines()
    assert lines[0] == "setpoint,current" and len(lines) == 9
