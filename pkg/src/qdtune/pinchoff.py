"""1D gate characterization: normalize, smooth, fit and extract pinch-off voltages."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter1d

MIN_POINTS = 8
FEATURE_NAMES = ("amplitude", "slope", "residual_norm", "low_current")


class InvalidNormalization(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Trace:
    """Current (normalized by A_max) against ascending gate setpoints."""

    gate: str
    setpoints: np.ndarray
    currents: np.ndarray

    def __post_init__(self):
        if len(self.setpoints) != len(self.currents):
            raise ShapeError("setpoints and currents differ in length")
        if len(self.setpoints) < MIN_POINTS:
            raise ShapeError(f"traces need at least {MIN_POINTS} points")
        if np.any(np.diff(self.setpoints) <= 0):
            raise ShapeError("setpoints must be strictly increasing")
        if not np.all(np.isfinite(self.currents)):
            raise ValueError("currents must be finite")

    @property
    def v_min(self) -> float:
        return float(self.setpoints[0])

    @property
    def v_max(self) -> float:
        return float(self.setpoints[-1])

    @property
    def x(self) -> np.ndarray:
        """Setpoints mapped onto [0, 1]."""
        return (self.setpoints - self.v_min) / (self.v_max - self.v_min)

    def to_csv(self) -> str:
        rows = ["setpoint,current"]
        rows += [f"{v!r},{i!r}" for v, i in zip(self.setpoints.tolist(), self.currents.tolist())]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class TanhFit:
    a: float
    b: float
    c: float
    residual_norm: float
    degraded: bool = False

    def __call__(self, x):
        return tanh_model(np.asarray(x, dtype=float), self.a, self.b, self.c)


@dataclass(frozen=True)
class PinchoffFit:
    """Fit parameters plus the transition voltages of one trace."""

    a: float
    b: float
    c: float
    residual_norm: float
    v_l: float
    v_t: float
    v_h: float
    low_current: float
    high_current: float
    degraded: bool = False

    @property
    def ordered(self) -> bool:
        return self.v_l < self.v_t < self.v_h


def normalize_and_canonicalize(raw_setpoints, raw_currents, a_max: float, gate: str = "") -> Trace:
    """Divide by ``a_max`` and sort the sweep into ascending voltage order."""
    if not a_max > 0:
        raise InvalidNormalization(f"a_max must be positive, got {a_max}")
    v = np.asarray(raw_setpoints, dtype=float)
    i = np.asarray(raw_currents, dtype=float)
    if v.shape != i.shape or v.ndim != 1:
        raise ShapeError("setpoints and currents must be 1D arrays of equal length")
    order = np.argsort(v, kind="stable")
    return Trace(gate, v[order], i[order] / a_max)


def smooth(trace: Trace, sigma_samples: float = 2.0) -> Trace:
    """Gaussian kernel convolution truncated at 4 sigma with reflect padding."""
    if not sigma_samples > 0:
        raise ValueError("sigma_samples must be positive")
    sm = gaussian_filter1d(trace.currents, sigma_samples, mode="reflect", truncate=4.0)
    return replace(trace, currents=sm)


def tanh_model(x, a, b, c):
    return a * (1.0 + np.tanh(b * x + c))


def _levenberg_marquardt(x, y, p0, max_iter=300):
    """Damped Gauss-Newton on the tanh model. Returns (params, cost, converged)."""
    p = np.array(p0, dtype=float)
    lam = 1e-3

    def residual(p):
        return y - tanh_model(x, *p)

    r = residual(p)
    cost = r @ r
    for _ in range(max_iter):
        t = np.tanh(p[1] * x + p[2])
        sech2 = 1.0 - t * t
        jac = np.column_stack((1.0 + t, p[0] * sech2 * x, p[0] * sech2))
        g = jac.T @ r
        if np.max(np.abs(g)) <= 1e-14 * max(1.0, np.max(np.abs(y))):
            return p, cost, True
        jtj = jac.T @ jac
        diag = np.maximum(np.diag(jtj), 1e-12)
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                step = np.zeros(3)
            trial = p + step
            trial[0] = max(trial[0], 0.0)
            r_new = residual(trial)
            cost_new = r_new @ r_new
            if np.isfinite(cost_new) and cost_new <= cost:
                break
            lam *= 10.0
            if lam > 1e16:
                return p, cost, cost <= 1e-30
        small_step = np.linalg.norm(trial - p) <= 1e-12 * (np.linalg.norm(p) + 1e-12)
        small_gain = cost - cost_new <= 1e-15 * max(cost, 1e-300)
        p, r, cost = trial, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if small_step or (small_gain and cost_new > 0) or cost == 0.0:
            return p, cost, True
    return p, cost, False


def fit_tanh(trace: Trace, slope_starts=(4.0, 10.0, 25.0, 60.0)) -> TanhFit:
    """Least-squares fit of ``a (1 + tanh(b x + c))`` on the normalized voltage axis.

    Multi-start: ``a`` from half the current range, ``c`` placing the
    half-maximum crossing at the observed one, one start per slope. A fit that
    fails to converge from every start comes back with ``degraded=True``
    holding the best parameters seen.
    """
    x = trace.x
    y = trace.currents
    a0 = 0.5 * (np.max(y) - np.min(y))
    half = np.min(y) + a0
    above = np.nonzero(y >= half)[0]
    x_half = x[above[0]] if above.size else 0.5
    best = None
    for b0 in slope_starts:
        p, cost, ok = _levenberg_marquardt(x, y, (a0, b0, -b0 * x_half))
        ok = ok and bool(np.all(np.isfinite(p)))
        key = (not ok, cost)
        if best is None or key < best[0]:
            best = (key, p, ok)
    (_, cost), p, ok = best
    rms = float(np.sqrt(cost / len(y))) if np.isfinite(cost) else float("inf")
    return TanhFit(float(p[0]), float(p[1]), float(p[2]), rms, degraded=not ok)


def extract_voltages(trace: Trace, window: int = 5) -> tuple[float, float, float]:
    """Cut-off, transition and saturation voltages (v_L, v_T, v_H) of a smoothed trace.

    v_T is the centre of the 5-sample window with the largest current variance,
    v_L the zero-current intercept of the tangent there, v_H the minimum of the
    second finite difference at or above v_T. All are clamped to the sweep.
    """
    v = trace.setpoints
    i = trace.currents
    if window > len(v):
        raise ShapeError("variance window longer than the trace")
    half = window // 2
    var = np.lib.stride_tricks.sliding_window_view(i, window).var(axis=1)
    k = int(np.argmax(var)) + half
    v_t = float(v[k])
    lo, hi = max(k - 1, 0), min(k + 1, len(v) - 1)
    slope = (i[hi] - i[lo]) / (v[hi] - v[lo])
    if slope > 0:
        v_l = v_t - i[k] / slope
    else:
        v_l = v[0]
    d2 = i[2:] - 2.0 * i[1:-1] + i[:-2]
    idx = np.arange(1, len(v) - 1)
    cand = idx >= k
    if not np.any(cand):
        cand = np.ones_like(idx, dtype=bool)
    j = idx[cand][int(np.argmin(d2[cand]))]
    v_h = float(v[j])
    clamp = lambda u: float(min(max(u, v[0]), v[-1]))  # noqa: E731
    return clamp(v_l), clamp(v_t), clamp(v_h)


def analyze(trace: Trace, sigma_samples: float = 2.0) -> PinchoffFit:
    """Smooth, fit and extract everything the classifier and tuner need."""
    sm = smooth(trace, sigma_samples)
    fit = fit_tanh(sm)
    v_l, v_t, v_h = extract_voltages(sm)
    low = sm.setpoints < v_l
    high = sm.setpoints > v_h
    a_low = float(sm.currents[low].mean()) if low.any() else float(sm.currents[0])
    a_high = float(sm.currents[high].mean()) if high.any() else float(sm.currents[-1])
    return PinchoffFit(
        fit.a, fit.b, fit.c, fit.residual_norm, v_l, v_t, v_h, a_low, a_high, fit.degraded
    )


def features(fit: PinchoffFit) -> np.ndarray:
    """Classifier input: (amplitude, slope, residual_norm, low_current)."""
    return np.array([fit.a, fit.b, fit.residual_norm, fit.low_current], dtype=float)


def x_to_volts(trace: Trace, x: float) -> float:
    return trace.v_min + x * (trace.v_max - trace.v_min)


def level_crossing(fit: TanhFit | PinchoffFit, level: float) -> float | None:
    """x where the fitted curve equals ``level``, or None if it never does."""
    if fit.a <= 0 or fit.b == 0:
        return None
    u = level / fit.a - 1.0
    if not -1.0 < u < 1.0:
        return None
    return (np.arctanh(u) - fit.c) / fit.b
