"""Closed-loop double/single dot tuning on a characterized device."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from . import pinchoff as po
from .characterize import CharacterizationReport, CharacterizeConfig, sweep_gate
from .chargemap import SAFETY_LIMIT, ChargeMapConfig, acquire_diagram, assess_segments, segment
from .device import GATES, PLUNGERS, Device, Regime

TOO_LOW = "too_low"
TOO_HIGH = "too_high"


class Stage(str, Enum):
    INIT = "Init"
    SET_TB = "SetTB"
    CHAR_CB = "CharCB"
    CHAR_OUTER = "CharOuter"
    CHAR_PLUNGERS = "CharPlungers"
    CHARGE_DIAGRAM = "ChargeDiagram"
    CLASSIFY = "Classify"
    DONE = "Done"
    FAILED = "Failed"


S = Stage
TRANSITIONS: dict[Stage, frozenset] = {
    S.INIT: frozenset({S.SET_TB, S.FAILED}),
    S.SET_TB: frozenset({S.CHAR_CB, S.CHAR_OUTER}),
    S.CHAR_CB: frozenset({S.CHAR_OUTER, S.SET_TB, S.FAILED}),
    S.CHAR_OUTER: frozenset({S.CHAR_PLUNGERS, S.SET_TB, S.FAILED}),
    S.CHAR_PLUNGERS: frozenset({S.CHARGE_DIAGRAM, S.SET_TB, S.FAILED}),
    S.CHARGE_DIAGRAM: frozenset({S.CLASSIFY, S.CHAR_PLUNGERS, S.SET_TB, S.FAILED}),
    S.CLASSIFY: frozenset({S.DONE, S.CHAR_PLUNGERS, S.SET_TB, S.FAILED}),
    S.DONE: frozenset(),
    S.FAILED: frozenset(),
}


class IllegalTransition(RuntimeError):
    pass


class StepFailure(RuntimeError):
    """A tuning step could not produce a usable voltage; carries the TB direction to try."""

    def __init__(self, message, direction=TOO_HIGH):
        super().__init__(message)
        self.direction = direction


@dataclass(frozen=True)
class TunerConfig:
    """Constants of the tuning loop (voltages in volts, currents in units of A_max).

    Attributes:
        target: Regime to reach, ``DoubleDot`` or ``SingleDot``.
        tb_init_fraction: Initial top barrier sits this far below the top of
            its valid range, as a fraction of the range.
        cb_level: Central barrier is set where its fitted trace reaches this
            fraction of A_max.
        outer_fraction: Outer barriers sit this far above their cut-off, as a
            fraction of their valid range.
        delta_clamp: Bounds on a single voltage update.
        outer_safety_margin: An outer barrier closer than this to its safety
            limit triggers a new top barrier voltage.
        cb_safety_margin: Same for the central barrier.
        low_signal: Diagram mean below which a new top barrier goes up.
        max_2d: Budget of 2D sweeps per run.
        extra_iterations: Diagrams taken after the first success.
        max_adjust_iters: Boundary-loop iterations per diagram.
        min_plunger_window: Plunger windows narrower than this are widened
            symmetrically before a diagram.
        sweeps_per_diagram: Budget of 1D sweeps per allowed diagram.
    """

    target: str = "DoubleDot"
    tb_init_fraction: float = 0.25
    cb_level: float = 0.75
    outer_fraction: float = 1.0 / 3.0
    delta_clamp: tuple[float, float] = (0.05, 0.1)
    outer_safety_margin: float = 0.1
    cb_safety_margin: float = 0.05
    low_signal: float = 0.15
    max_2d: int = 20
    extra_iterations: int = 2
    max_adjust_iters: int = 10
    min_plunger_window: float = 0.1
    sweeps_per_diagram: int = 6

    def __post_init__(self):
        if self.target not in (Regime.DOUBLE_DOT.value, Regime.SINGLE_DOT.value):
            raise ValueError(f"target must be DoubleDot or SingleDot, got {self.target!r}")
        if self.max_2d < 1:
            raise ValueError("max_2d must be >= 1")
        lo, hi = self.delta_clamp
        if not 0 < lo <= hi:
            raise ValueError("delta_clamp must satisfy 0 < low <= high")
        if not 0 < self.cb_level < 1:
            raise ValueError("cb_level must lie in (0, 1)")
        if self.extra_iterations < 0:
            raise ValueError("extra_iterations must be >= 0")


def voltage_delta(v: float, valid_range, direction: str, cfg: TunerConfig = TunerConfig()) -> float:
    """One bounded step of a gate voltage towards more (too_low) or less (too_high) current.

    The tentative step is half the distance to the relevant end of the valid
    range, clamped to ``cfg.delta_clamp``; the result is kept inside the range.
    """
    v_min, v_max = valid_range
    if direction == TOO_LOW:
        tilde = 0.5 * (v_max - v)
    elif direction == TOO_HIGH:
        tilde = 0.5 * (v - v_min)
    else:
        raise ValueError(f"direction must be {TOO_LOW!r} or {TOO_HIGH!r}")
    lo, hi = cfg.delta_clamp
    delta = min(hi, max(tilde, lo))
    new = v + delta if direction == TOO_LOW else v - delta
    return float(min(max(new, v_min), v_max))


def choose_top_barrier(tb_valid_range, cfg: TunerConfig = TunerConfig()) -> float:
    v_min, v_max = tb_valid_range
    return v_max - cfg.tb_init_fraction * (v_max - v_min)


def outer_barrier_voltage(valid_range, cfg: TunerConfig = TunerConfig()) -> float:
    v_min, v_max = valid_range
    return v_min + cfg.outer_fraction * (v_max - v_min)


def _nearest_crossing(trace: po.Trace, level: float) -> float | None:
    sm = po.smooth(trace)
    above = sm.currents >= level
    idx = np.nonzero(above[1:] != above[:-1])[0]
    if idx.size == 0:
        return None
    i = idx[-1]
    return float(sm.setpoints[i] if abs(sm.currents[i] - level) <= abs(sm.currents[i + 1] - level)
                 else sm.setpoints[i + 1])


def set_central_barrier(device: Device, cfg: TunerConfig = TunerConfig(),
                        char_cfg: CharacterizeConfig = CharacterizeConfig()):
    """Sweep CB and set it where the fitted curve reaches ``cb_level`` of A_max.

    Returns ``(voltage, fit)``. Raises :class:`StepFailure` when the level is
    never reached.
    """
    a_max = device.a_max or 1.0
    trace, fit = sweep_gate(device, "CB", a_max, char_cfg)
    v = None
    if not fit.degraded:
        x = po.level_crossing(fit, cfg.cb_level)
        if x is not None and 0.0 <= x <= 1.0:
            v = po.x_to_volts(trace, x)
    if v is None:
        v = _nearest_crossing(trace, cfg.cb_level)
    if v is None:
        direction = TOO_LOW if trace.currents.max() < cfg.cb_level else TOO_HIGH
        raise StepFailure("central barrier never crosses the target current", direction)
    v = device.clip("CB", v)
    device.set_voltage("CB", v)
    return v, fit


def set_outer_barriers(device: Device, cfg: TunerConfig = TunerConfig(),
                       char_cfg: CharacterizeConfig = CharacterizeConfig()):
    """Characterize LB and RB (the other one fully open) and set both.

    Returns ``(v_lb, v_rb, ranges)`` where ``ranges`` maps each barrier to its
    ``(v_L, v_H)``.
    """
    a_max = device.a_max or 1.0
    ranges, volts = {}, {}
    for g, other in (("LB", "RB"), ("RB", "LB")):
        device.set_voltage(other, device.safety[other][1])
        device.set_voltage(g, device.safety[g][1])
        _, fit = sweep_gate(device, g, a_max, char_cfg)
        if fit.degraded or not fit.v_l < fit.v_h:
            raise StepFailure(f"{g} characterization unusable", TOO_HIGH)
        ranges[g] = (fit.v_l, fit.v_h)
        volts[g] = device.clip(g, outer_barrier_voltage(ranges[g], cfg))
    device.set_voltages(volts)
    return volts["LB"], volts["RB"], ranges


def characterize_plungers(device: Device, cfg: TunerConfig = TunerConfig(),
                          char_cfg: CharacterizeConfig = CharacterizeConfig()):
    """[v_L, v_H] window of each plunger with the other plunger fully open."""
    a_max = device.a_max or 1.0
    windows = {}
    for g, other in (("LP", "RP"), ("RP", "LP")):
        device.set_voltage(other, device.safety[other][1])
        device.set_voltage(g, device.safety[g][1])
        _, fit = sweep_gate(device, g, a_max, char_cfg)
        if fit.degraded or not fit.v_l < fit.v_h:
            raise StepFailure(f"{g} characterization unusable", TOO_LOW)
        lo, hi = fit.v_l, fit.v_h
        if hi - lo < cfg.min_plunger_window:
            mid = 0.5 * (lo + hi)
            lo, hi = mid - 0.5 * cfg.min_plunger_window, mid + 0.5 * cfg.min_plunger_window
            s_lo, s_hi = device.safety[g]
            if lo < s_lo:
                lo, hi = s_lo, s_lo + cfg.min_plunger_window
            if hi > s_hi:
                lo, hi = s_hi - cfg.min_plunger_window, s_hi
        windows[g] = (float(lo), float(hi))
    return windows


@dataclass
class TunerState:
    """Current stage, applied voltages and valid ranges, with an audited action log."""

    stage: Stage = Stage.INIT
    voltages: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    def advance(self, nxt: Stage, **detail) -> None:
        if nxt not in TRANSITIONS[self.stage]:
            raise IllegalTransition(f"{self.stage.value} -> {nxt.value}")
        self.log.append({"step": len(self.log), "from": self.stage.value, "to": nxt.value, **detail})
        self.stage = nxt


def audit(log) -> bool:
    """True when every logged transition is an edge of the tuning graph."""
    return all(Stage(e["to"]) in TRANSITIONS[Stage(e["from"])] for e in log)


@dataclass
class TuningResult:
    device_id: str
    target: str
    success: bool
    regime_classifier: str
    regime_oracle: str | None
    n_1d: int
    n_2d: int
    voltages: dict
    reason: str
    diagrams: list
    log: list

    @property
    def oracle_confirmed(self) -> bool:
        return self.success and self.regime_oracle == self.target

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "target": self.target,
            "success": self.success,
            "regime_classifier": self.regime_classifier,
            "regime_oracle": self.regime_oracle,
            "oracle_confirmed": self.oracle_confirmed,
            "n_1d": self.n_1d,
            "n_2d": self.n_2d,
            "voltages": self.voltages,
            "reason": self.reason,
            "diagrams": self.diagrams,
            "log": self.log,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _snapshot(device: Device) -> dict:
    return {g: round(float(device.voltages[g]), 9) for g in GATES}


def _near_limit(device: Device, gate: str, v: float, margin: float) -> str | None:
    lo, hi = device.safety[gate]
    if v - lo < margin:
        return "lower"
    if hi - v < margin:
        return "upper"
    return None


def run_tuning(
    device: Device,
    report: CharacterizationReport,
    cfg: TunerConfig = TunerConfig(),
    models: Mapping | None = None,
    map_cfg: ChargeMapConfig = ChargeMapConfig(),
    char_cfg: CharacterizeConfig = CharacterizeConfig(),
) -> TuningResult:
    """Drive a working device to the target regime.

    ``models`` needs ``single_dot``, ``double_dot`` and ``regime`` classifiers.
    Every step is logged; the run ends in Done after the first target
    diagram plus ``extra_iterations`` more (budget permitting) or in Failed
    once the 2D or 1D budget is spent. The returned voltages are those of the
    diagram with the most target segments, with the plungers at the centre of
    its brightest target segment.
    """
    target = Regime(cfg.target)
    other = Regime.SINGLE_DOT if target == Regime.DOUBLE_DOT else Regime.DOUBLE_DOT
    st = TunerState()
    start_1d, start_2d = device.n_1d, device.n_2d
    diagrams: list[dict] = []

    def finish(success, reason, best=None):
        if best is not None:
            device.set_voltages(best["voltages"])
        clf = best["regime"] if best is not None else Regime.NO_DOT.value
        oracle = device.oracle().value if best is not None else None
        return TuningResult(report.device_id, target.value, success, clf, oracle,
                            device.n_1d - start_1d, device.n_2d - start_2d,
                            _snapshot(device), reason, diagrams, st.log)

    if not report.working:
        st.advance(Stage.FAILED, reason=f"device verdict {report.verdict}")
        return finish(False, f"device verdict {report.verdict}")
    if models is None or not {"single_dot", "double_dot", "regime"} <= set(models):
        raise ValueError("single_dot, double_dot and regime models are required")

    device.set_all_to_max()
    device.a_max = device.measure()
    tb_range = tuple(report.tb_valid_range)
    st.ranges["TB"] = tb_range
    tb = choose_top_barrier(tb_range, cfg)
    after_tb = Stage.CHAR_CB
    st.advance(Stage.SET_TB, tb=tb, a_max=device.a_max)
    windows = None
    successes = 0
    first_hit = 0
    best = None
    budget_1d = cfg.sweeps_per_diagram * (cfg.max_2d + cfg.extra_iterations + 1)

    def change_tb(direction, why, resume):
        nonlocal tb, after_tb
        new = voltage_delta(tb, tb_range, direction, cfg)
        st.advance(Stage.SET_TB, reason=why, direction=direction, tb_old=tb, tb=new)
        tb = new
        after_tb = resume

    while True:
        if device.n_1d - start_1d > budget_1d:
            st.advance(Stage.FAILED, reason="1D sweep budget exhausted")
            return finish(successes > 0, "1D sweep budget exhausted", best)
        stage = st.stage
        if stage == Stage.SET_TB:
            device.set_voltage("TB", device.clip("TB", tb))
            st.advance(after_tb, voltages=_snapshot(device))
        elif stage == Stage.CHAR_CB:
            device.set_voltages({g: device.safety[g][1] for g in ("LB", "RB", "LP", "RP")})
            try:
                v_cb, fit = set_central_barrier(device, cfg, char_cfg)
            except StepFailure as exc:
                change_tb(exc.direction, str(exc), Stage.CHAR_CB)
                continue
            st.ranges["CB"] = (fit.v_l, fit.v_h)
            st.advance(Stage.CHAR_OUTER, cb=v_cb, cb_range=list(st.ranges["CB"]))
        elif stage == Stage.CHAR_OUTER:
            device.set_voltages({g: device.safety[g][1] for g in PLUNGERS})
            try:
                v_lb, v_rb, rng = set_outer_barriers(device, cfg, char_cfg)
            except StepFailure as exc:
                change_tb(exc.direction, str(exc), Stage.CHAR_CB)
                continue
            st.ranges.update(rng)
            near = [_near_limit(device, g, v, cfg.outer_safety_margin) for g, v in (("LB", v_lb), ("RB", v_rb))]
            if any(near):
                direction = TOO_HIGH if "lower" in near else TOO_LOW
                change_tb(direction, "outer barrier near its safety limit", Stage.CHAR_OUTER)
                continue
            st.advance(Stage.CHAR_PLUNGERS, lb=v_lb, rb=v_rb)
        elif stage == Stage.CHAR_PLUNGERS:
            try:
                windows = characterize_plungers(device, cfg, char_cfg)
            except StepFailure as exc:
                change_tb(exc.direction, str(exc), Stage.CHAR_CB)
                continue
            st.advance(Stage.CHARGE_DIAGRAM, windows={g: list(w) for g, w in windows.items()})
        elif stage == Stage.CHARGE_DIAGRAM:
            used = device.n_2d - start_2d
            if used >= cfg.max_2d:
                st.advance(Stage.FAILED, reason="2D budget exhausted")
                return finish(successes > 0, "2D budget exhausted", best)
            iters = min(cfg.max_adjust_iters, cfg.max_2d - used - 1)
            cmap, history = acquire_diagram(device, windows, map_cfg, iters, map_id=f"d{len(diagrams)}")
            last = history[-1] if history else None
            if last is not None and last.terminated_reason == SAFETY_LIMIT:
                moved, tb_dir = {}, None
                for p, side in last.limited.items():
                    b = "LB" if p == "LP" else "RB"
                    direction = TOO_LOW if side == "upper" else TOO_HIGH
                    new = voltage_delta(device.voltages[b], st.ranges[b], direction, cfg)
                    near = _near_limit(device, b, new, cfg.outer_safety_margin)
                    if near:
                        tb_dir = TOO_HIGH if near == "lower" else TOO_LOW
                    moved[b] = new
                if tb_dir is not None:
                    change_tb(tb_dir, "outer barrier update near its safety limit", Stage.CHAR_OUTER)
                    continue
                device.set_voltages(moved)
                st.advance(Stage.CHAR_PLUNGERS, reason="plunger window hit safety limit",
                           barriers=moved, boundary=[h.to_dict() for h in history])
                continue
            windows = {g: tuple(map(float, (cmap.x[[0, -1]] if g == "LP" else cmap.y[[0, -1]]))) for g in PLUNGERS}
            st.advance(Stage.CLASSIFY, map_id=cmap.map_id, boundary=[h.to_dict() for h in history])
        elif stage == Stage.CLASSIFY:
            segs = segment(cmap, map_cfg)
            labels = assess_segments(segs, models["single_dot"], models["double_dot"], models["regime"])
            counts = {r.value: sum(1 for lab in labels if lab == r) for r in Regime}
            mean = cmap.mean()
            n_target = counts[target.value]
            entry = {"map_id": cmap.map_id, "mean": mean, "counts": counts, "n_segments": len(segs),
                     "windows": {g: list(w) for g, w in windows.items()},
                     "oracle_center": device.oracle({g: 0.5 * sum(windows[g]) for g in PLUNGERS}).value}
            if n_target:
                tgt = [s for s, lab in zip(segs, labels) if lab == target]
                brightest = max(tgt, key=lambda s: float(s.pixels.mean()))
                half = 0.5 * map_cfg.segment_size
                volts = dict(device.voltages)
                volts["LP"] = device.clip("LP", brightest.origin[0] + half)
                volts["RP"] = device.clip("RP", brightest.origin[1] + half)
                entry["voltages"] = {g: float(v) for g, v in volts.items()}
                entry["regime"] = target.value
                if best is None or n_target > best["counts"][target.value]:
                    best = entry
            diagrams.append(entry)
            if n_target and not successes:
                first_hit = len(diagrams)
            if n_target:
                successes += 1
            if successes:
                if len(diagrams) - first_hit >= cfg.extra_iterations or device.n_2d - start_2d >= cfg.max_2d:
                    st.advance(Stage.DONE, counts=counts)
                    return finish(True, "target regime found", best)
                st.advance(Stage.CHAR_PLUNGERS, reason="extra iteration after success", counts=counts)
                continue
            if device.n_2d - start_2d >= cfg.max_2d:
                st.advance(Stage.FAILED, reason="2D budget exhausted", counts=counts)
                return finish(False, "2D budget exhausted")
            if counts[other.value]:
                direction = TOO_HIGH if target == Regime.DOUBLE_DOT else TOO_LOW
                cb = device.voltages["CB"]
                new = voltage_delta(cb, st.ranges["CB"], direction, cfg)
                near = _near_limit(device, "CB", new, cfg.cb_safety_margin)
                if near or abs(new - cb) < 1e-12:
                    side = near or ("lower" if direction == TOO_HIGH else "upper")
                    change_tb(TOO_HIGH if side == "lower" else TOO_LOW,
                              "central barrier cannot move further", Stage.CHAR_OUTER)
                    continue
                device.set_voltage("CB", new)
                st.advance(Stage.CHAR_PLUNGERS, reason=f"{other.value} seen, moving CB", cb_old=cb, cb=new,
                           counts=counts)
                continue
            direction = TOO_LOW if mean < cfg.low_signal else TOO_HIGH
            change_tb(direction, "no good regime in diagram", Stage.CHAR_CB)
        else:  # pragma: no cover - terminal stages return above
            raise IllegalTransition(f"stuck in {stage}")
