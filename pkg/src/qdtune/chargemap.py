"""Charge stability diagrams: acquisition with boundary control, tiling, assessment."""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .device import PLUNGERS, Device, Regime

IN_WINDOW = "in_window"
SAFETY_LIMIT = "safety_limit"
CONFLICT = "conflict"


@dataclass(frozen=True)
class ChargeMapConfig:
    """Sampling and boundary-control constants for 2D maps.

    Attributes:
        base_points: Minimum setpoints per axis.
        delta_v_max: Largest allowed setpoint spacing (V); more points are
            taken when ``base_points`` would exceed it.
        current_window: Acceptable boundary mean currents, in units of A_max.
        segment_size: Physical tile edge (V) handed to the classifiers.
        pixels: Pixels per tile edge after resampling.
        shift_step: Plunger window shift per boundary-loop iteration (V).
    """

    base_points: int = 50
    delta_v_max: float = 0.005
    current_window: tuple[float, float] = (0.004, 0.1)
    segment_size: float = 0.05
    pixels: int = 28
    shift_step: float = 0.05

    def __post_init__(self):
        if self.delta_v_max <= 0:
            raise ValueError("delta_v_max must be positive")
        lo, hi = self.current_window
        if not 0 <= lo < hi:
            raise ValueError("current window must satisfy 0 <= lower < upper")
        if self.base_points < 2 or self.pixels < 2:
            raise ValueError("need at least 2 points per axis")
        if self.segment_size <= 0 or self.shift_step <= 0:
            raise ValueError("segment_size and shift_step must be positive")

    @property
    def pixel_pitch(self) -> float:
        return self.segment_size / self.pixels


@dataclass
class CurrentMap:
    """Normalized current on a rectilinear plunger grid; ``currents[iy, ix]``."""

    gate_x: str
    gate_y: str
    x: np.ndarray
    y: np.ndarray
    currents: np.ndarray
    a_max: float = 1.0
    map_id: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.currents = np.asarray(self.currents, dtype=float)
        if self.currents.shape != (self.y.size, self.x.size):
            raise ValueError("current matrix shape does not match setpoints")
        if not np.all(np.isfinite(self.currents)):
            raise ValueError("current map contains non-finite values")
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.y) <= 0):
            raise ValueError("setpoints must be strictly ascending")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.x[-1] - self.x[0]), float(self.y[-1] - self.y[0])

    def mean(self) -> float:
        return float(self.currents.mean())

    def to_csv(self) -> str:
        """Grid CSV: first row holds x setpoints, first column y setpoints."""
        buf = io.StringIO()
        buf.write(self.gate_y + "\\" + self.gate_x + "," + ",".join(repr(float(v)) for v in self.x) + "\n")
        for yv, row in zip(self.y, self.currents):
            buf.write(repr(float(yv)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "map_id": self.map_id,
            "gate_x": self.gate_x,
            "gate_y": self.gate_y,
            "x_range": [float(self.x[0]), float(self.x[-1])],
            "y_range": [float(self.y[0]), float(self.y[-1])],
            "shape": list(self.currents.shape),
            "a_max": self.a_max,
        }

    def save(self, stem) -> None:
        with open(f"{stem}.csv", "w") as fh:
            fh.write(self.to_csv())
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, stem) -> "CurrentMap":
        with open(f"{stem}.json") as fh:
            meta = json.load(fh)
        raw = np.loadtxt(f"{stem}.csv", delimiter=",", dtype=str)
        x = raw[0, 1:].astype(float)
        y = raw[1:, 0].astype(float)
        return cls(meta["gate_x"], meta["gate_y"], x, y, raw[1:, 1:].astype(float), meta["a_max"], meta["map_id"])


@dataclass
class Segment:
    origin: tuple[float, float]
    pixels: np.ndarray
    source: str = ""

    def row(self) -> np.ndarray:
        return self.pixels.ravel()


@dataclass
class RangeUpdate:
    """Outcome of one boundary check.

    ``actions`` maps each plunger to decrease/increase/keep. ``limited`` names
    the plungers whose requested shift ran into a safety limit, with the side
    (``"lower"`` or ``"upper"``) that was hit.
    """

    actions: dict[str, str]
    ranges: dict[str, tuple[float, float]]
    terminated_reason: str | None
    means: tuple[float, float, float, float]
    limited: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "actions": dict(self.actions),
            "ranges": {g: list(r) for g, r in self.ranges.items()},
            "terminated_reason": self.terminated_reason,
            "means": dict(zip(("left", "right", "bottom", "top"), self.means)),
            "limited": dict(self.limited),
        }


def plan_setpoints(v_lo: float, v_hi: float, cfg: ChargeMapConfig = ChargeMapConfig()) -> np.ndarray:
    """Equidistant setpoints; more than ``base_points`` when spacing would exceed ``delta_v_max``."""
    if not v_hi > v_lo:
        raise ValueError(f"empty setpoint range [{v_lo}, {v_hi}]")
    # tolerance keeps exact multiples (0.245 / 0.005) from rounding up
    needed = math.ceil((v_hi - v_lo) / cfg.delta_v_max - 1e-9) + 1
    return np.linspace(v_lo, v_hi, max(cfg.base_points, needed))


def boundary_averages(currents) -> tuple[float, float, float, float]:
    """Means of the outermost (left, right, bottom, top) pixel lines."""
    c = np.asarray(currents, dtype=float)
    if c.ndim != 2 or min(c.shape) < 2:
        raise ValueError("boundary averages need a map of at least 2x2")
    return float(c[:, 0].mean()), float(c[:, -1].mean()), float(c[0, :].mean()), float(c[-1, :].mean())


def _votes(low_side: float, high_side: float, lo: float, hi: float) -> set[str]:
    votes = set()
    if low_side > hi or high_side > hi:
        votes.add("decrease")
    if high_side < lo or low_side < lo:
        votes.add("increase")
    return votes


def adjust_ranges(
    stats: Sequence[float],
    ranges: Mapping[str, tuple[float, float]],
    cfg: ChargeMapConfig,
    safety: Mapping[str, tuple[float, float]],
    a_max: float = 1.0,
) -> RangeUpdate:
    """Apply the boundary rules to both plunger windows.

    Too much current on a window's low edge (or anywhere on its high edge)
    shifts that plunger down; too little on its high edge (or on its low
    edge) shifts it up. Contradicting votes leave the plunger alone. A shift
    that would cross a safety limit is clamped and ends the loop.
    """
    left, right, bottom, top = (float(s) for s in stats)
    lo, hi = (w * a_max for w in cfg.current_window)
    ranges = {g: tuple(map(float, ranges[g])) for g in PLUNGERS}
    for g, (a, b) in ranges.items():
        s_lo, s_hi = safety[g]
        if a < s_lo - 1e-12 or b > s_hi + 1e-12:
            raise ValueError(f"{g} window [{a}, {b}] outside safety range")
    if all(lo <= m <= hi for m in (left, right, bottom, top)):
        return RangeUpdate({g: "keep" for g in PLUNGERS}, ranges, IN_WINDOW, (left, right, bottom, top))

    actions, new, limited = {}, {}, {}
    for g, (low_side, high_side) in (("LP", (left, right)), ("RP", (bottom, top))):
        votes = _votes(low_side, high_side, lo, hi)
        a, b = ranges[g]
        s_lo, s_hi = safety[g]
        action = votes.pop() if len(votes) == 1 else "keep"
        actions[g] = action
        if action == "increase":
            shift = min(cfg.shift_step, s_hi - b)
            if shift < cfg.shift_step - 1e-12:
                limited[g] = "upper"
        elif action == "decrease":
            shift = -min(cfg.shift_step, a - s_lo)
            if -shift < cfg.shift_step - 1e-12:
                limited[g] = "lower"
        else:
            shift = 0.0
        new[g] = (a + shift, b + shift)
    if limited:
        reason = SAFETY_LIMIT
    elif all(a == "keep" for a in actions.values()):
        reason = CONFLICT
    else:
        reason = None
    return RangeUpdate(actions, new, reason, (left, right, bottom, top), limited)


def resample(cmap: CurrentMap, cfg: ChargeMapConfig = ChargeMapConfig()) -> CurrentMap:
    """Bilinear resampling onto a grid of ``segment_size / pixels`` pitch from the map origin."""
    pitch = cfg.pixel_pitch
    sx, sy = cmap.span
    nx = int(math.floor(sx / pitch + 1e-9)) + 1
    ny = int(math.floor(sy / pitch + 1e-9)) + 1
    x = cmap.x[0] + pitch * np.arange(nx)
    y = cmap.y[0] + pitch * np.arange(ny)
    x = np.minimum(x, cmap.x[-1])
    y = np.minimum(y, cmap.y[-1])
    interp = RegularGridInterpolator((cmap.y, cmap.x), cmap.currents, method="linear")
    yy, xx = np.meshgrid(y, x, indexing="ij")
    vals = interp(np.stack([yy.ravel(), xx.ravel()], axis=1)).reshape(ny, nx)
    if nx > 1 and x[-1] <= x[-2]:
        # a final point collapsing onto the previous one breaks monotonicity
        x, vals = x[:-1], vals[:, :-1]
    if ny > 1 and y[-1] <= y[-2]:
        y, vals = y[:-1], vals[:-1, :]
    return CurrentMap(cmap.gate_x, cmap.gate_y, x, y, vals, cmap.a_max, cmap.map_id)


def acquire_diagram(
    device: Device,
    ranges: Mapping[str, tuple[float, float]],
    cfg: ChargeMapConfig = ChargeMapConfig(),
    max_adjust_iters: int = 10,
    map_id: str = "",
):
    """Measure LP (x) against RP (y), moving the windows until the boundaries behave.

    Returns ``(resampled_map, history)``; ``history`` holds one
    :class:`RangeUpdate` per boundary check. With ``max_adjust_iters=0`` the
    first map is returned without any check.
    """
    a_max = device.a_max or 1.0
    ranges = {g: tuple(map(float, ranges[g])) for g in PLUNGERS}
    history: list[RangeUpdate] = []
    it = 0
    while True:
        xs = plan_setpoints(*ranges["LP"], cfg)
        ys = plan_setpoints(*ranges["RP"], cfg)
        sweep = device.sweep_2d("LP", "RP", ranges["LP"], ranges["RP"], xs.size, ys.size)
        raw = CurrentMap("LP", "RP", sweep.x, sweep.y, sweep.currents / a_max, a_max, map_id)
        if it >= max_adjust_iters:
            break
        upd = adjust_ranges(boundary_averages(raw.currents), ranges, cfg, device.safety, 1.0)
        history.append(upd)
        it += 1
        if upd.terminated_reason is not None:
            break
        ranges = upd.ranges
    return resample(raw, cfg), history


def segment(cmap: CurrentMap, cfg: ChargeMapConfig = ChargeMapConfig()) -> list[Segment]:
    """Cut the map into full ``segment_size`` tiles of ``pixels x pixels`` from its origin."""
    sx, sy = cmap.span
    nx = int(math.floor(sx / cfg.segment_size + 1e-9))
    ny = int(math.floor(sy / cfg.segment_size + 1e-9))
    if nx == 0 or ny == 0:
        return []
    interp = RegularGridInterpolator((cmap.y, cmap.x), cmap.currents, method="linear")
    p = cfg.pixels
    offs = cfg.pixel_pitch * np.arange(p)
    out = []
    for j in range(ny):
        for i in range(nx):
            x0 = cmap.x[0] + i * cfg.segment_size
            y0 = cmap.y[0] + j * cfg.segment_size
            xs = np.minimum(x0 + offs, cmap.x[-1])
            ys = np.minimum(y0 + offs, cmap.y[-1])
            yy, xx = np.meshgrid(ys, xs, indexing="ij")
            pix = interp(np.stack([yy.ravel(), xx.ravel()], axis=1)).reshape(p, p)
            out.append(Segment((float(x0), float(y0)), pix, cmap.map_id))
    return out


def combine(sd_good: int, dd_good: int, regime: int) -> Regime:
    """Redundant decision from the two quality labels and the regime label (1 = double)."""
    if sd_good and dd_good:
        return Regime.DOUBLE_DOT if regime else Regime.SINGLE_DOT
    if sd_good:
        return Regime.SINGLE_DOT
    if dd_good:
        return Regime.DOUBLE_DOT
    return Regime.NO_DOT


def assess_segments(segments: Sequence[Segment], sd_model, dd_model, regime_model) -> list[Regime]:
    """Label every segment NoDot, SingleDot or DoubleDot from three binary classifiers."""
    if not segments:
        return []
    X = np.stack([s.row() for s in segments])
    for m in (sd_model, dd_model, regime_model):
        if m.n_inputs is not None and m.n_inputs != X.shape[1]:
            raise ValueError(f"model expects {m.n_inputs} inputs, segments have {X.shape[1]}")
    sd = sd_model.predict(X)
    dd = dd_model.predict(X)
    rg = regime_model.predict(X)
    return [combine(a, b, c) for a, b, c in zip(sd, dd, rg)]
