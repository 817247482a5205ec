"""Device triage: initial quality assessment, gate characterization, top-barrier range."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import pinchoff as po
from .device import BARRIERS, GATES, LOWER_GATES, Device

WORKING = "working"
FAILED_IQA = "failed_iqa"
BROKEN = "broken"


@dataclass(frozen=True)
class CharacterizeConfig:
    """Constants of the triage stage.

    ``signal_threshold`` is a fraction of A_max; voltages are in volts.
    ``sweep_points`` sets the resolution of every 1D characterization sweep.
    """

    iqa_mode: str = "all_safe_max"
    signal_threshold: float = 0.8
    tb_step: float = 0.2
    safety_shift: float = 0.5
    tb_scan_step: float = 0.2
    sweep_points: int = 151
    smoothing: float = 2.0

    def __post_init__(self):
        if self.iqa_mode not in ("all_zero", "all_safe_max"):
            raise ValueError(f"unknown iqa_mode {self.iqa_mode!r}")
        if not 0 < self.signal_threshold < 1:
            raise ValueError("signal_threshold must lie in (0, 1)")
        if self.tb_step <= 0 or self.tb_scan_step <= 0:
            raise ValueError("top-barrier steps must be positive")
        if self.sweep_points < po.MIN_POINTS:
            raise ValueError(f"sweep_points must be >= {po.MIN_POINTS}")


@dataclass
class IQAResult:
    passed: bool
    current: float
    a_max: float | None


@dataclass
class GateResult:
    trace: po.Trace
    fit: po.PinchoffFit
    good: bool

    def to_dict(self, with_trace=True) -> dict:
        d = {
            "fit": {k: getattr(self.fit, k) for k in ("a", "b", "c", "residual_norm", "v_l", "v_t", "v_h",
                                                      "low_current", "high_current", "degraded")},
            "features": po.features(self.fit).tolist(),
            "quality": "good" if self.good else "bad",
        }
        if with_trace:
            d["setpoints"] = self.trace.setpoints.tolist()
            d["currents"] = self.trace.currents.tolist()
        return d


@dataclass
class CharacterizationReport:
    """Outcome of triage for one device.

    ``verdict`` is ``working`` only when all five lower gates were labeled
    good. ``tb_valid_range`` is filled for working devices once the top
    barrier scan succeeded. ``n_1d`` counts every 1D sweep taken.
    """

    device_id: str
    iqa_passed: bool
    iqa_current: float
    a_max: float | None = None
    gates: dict[str, GateResult] = field(default_factory=dict)
    verdict: str = FAILED_IQA
    broken_gates: list[str] = field(default_factory=list)
    reason: str = ""
    tb_valid_range: tuple[float, float] | None = None
    tb_raise_steps: int = 0
    tb_scan: list[dict] = field(default_factory=list)
    n_1d: int = 0
    safety: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def working(self) -> bool:
        return self.verdict == WORKING and self.tb_valid_range is not None

    def to_dict(self, with_traces=False) -> dict:
        return {
            "device_id": self.device_id,
            "iqa": {"passed": self.iqa_passed, "current": self.iqa_current},
            "a_max": self.a_max,
            "gates": {g: r.to_dict(with_traces) for g, r in self.gates.items()},
            "verdict": self.verdict,
            "broken_gates": list(self.broken_gates),
            "reason": self.reason,
            "tb_valid_range": list(self.tb_valid_range) if self.tb_valid_range else None,
            "tb_raise_steps": self.tb_raise_steps,
            "tb_scan": self.tb_scan,
            "n_1d": self.n_1d,
            "safety": {g: list(r) for g, r in self.safety.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), sort_keys=True, indent=2)


def initial_quality_assessment(device: Device, cfg: CharacterizeConfig = CharacterizeConfig()) -> IQAResult:
    """Pass when the open-device current clears the setup noise floor.

    ``all_zero`` applies 0 V to every gate (which must lie inside the safety
    ranges); ``all_safe_max`` uses each gate's upper safety limit.
    """
    if cfg.iqa_mode == "all_zero":
        device.set_voltages({g: 0.0 for g in GATES})
    else:
        device.set_all_to_max()
    current = device.measure()
    passed = current > device.noise_floor
    if passed:
        device.a_max = current
    return IQAResult(bool(passed), float(current), current if passed else None)


def sweep_gate(device: Device, gate: str, a_max: float, cfg: CharacterizeConfig,
               v_hi: float | None = None, v_lo: float | None = None):
    """Sweep ``gate`` high to low over its safety range and analyze the trace."""
    lo, hi = device.safety[gate]
    s = device.sweep_1d(gate, hi if v_hi is None else v_hi, lo if v_lo is None else v_lo, cfg.sweep_points)
    trace = po.normalize_and_canonicalize(s.setpoints, s.currents, a_max, gate)
    return trace, po.analyze(trace, cfg.smoothing)


def classify_fit(model, fit: po.PinchoffFit) -> bool:
    return bool(model.predict(po.features(fit)[None, :])[0])


def _park_others(device: Device, keep: tuple[str, ...]) -> None:
    device.set_voltages({g: device.safety[g][1] for g in LOWER_GATES if g not in keep})


def characterize_device(
    device: Device,
    cfg: CharacterizeConfig = CharacterizeConfig(),
    pinch_model=None,
    device_id: str = "",
    run_iqa: bool = True,
    tb_range: bool = True,
) -> CharacterizationReport:
    """Full triage: i.q.a., top-barrier protocol, five gate sweeps, optional TB range.

    Args:
        device: Session to act on; its safety ranges may be shifted.
        cfg: Stage constants.
        pinch_model: Binary classifier over pinch-off feature vectors
            (1 = good). Required.
        device_id: Label copied into the report.
        run_iqa: Skip the assessment when the caller already did it and set
            ``device.a_max``.
        tb_range: Also establish the top barrier's valid range on working devices.
    """
    if pinch_model is None:
        raise ValueError("a trained pinch-off model is required")
    start = device.n_1d
    if run_iqa:
        iqa = initial_quality_assessment(device, cfg)
    else:
        iqa = IQAResult(device.a_max is not None, float(device.a_max or 0.0), device.a_max)
    rep = CharacterizationReport(device_id, iqa.passed, iqa.current, iqa.a_max)
    if not iqa.passed:
        rep.reason = "no current above the noise floor"
        rep.safety = dict(device.safety)
        return rep
    a_max = iqa.a_max

    device.set_all_to_max()
    device.set_voltage("TB", device.safety["TB"][0])
    threshold = cfg.signal_threshold * a_max
    steps = 0
    while device.measure() < threshold:
        nxt = device.voltages["TB"] + cfg.tb_step
        if nxt > device.safety["TB"][1] + 1e-12:
            rep.verdict = BROKEN
            rep.broken_gates = ["TB"]
            rep.reason = "top barrier cannot restore the signal inside its safety range"
            rep.n_1d = device.n_1d - start
            rep.safety = dict(device.safety)
            return rep
        device.set_voltage("TB", nxt)
        steps += 1
    rep.tb_raise_steps = steps
    if steps:
        device.shift_safety(cfg.safety_shift)

    for g in LOWER_GATES:
        _park_others(device, ())
        trace, fit = sweep_gate(device, g, a_max, cfg)
        rep.gates[g] = GateResult(trace, fit, classify_fit(pinch_model, fit))
    _park_others(device, ())
    rep.broken_gates = [g for g in LOWER_GATES if not rep.gates[g].good]
    rep.verdict = WORKING if not rep.broken_gates else BROKEN
    if rep.broken_gates:
        rep.reason = "gates without a good pinch-off: " + ", ".join(rep.broken_gates)
    if rep.verdict == WORKING and tb_range:
        try:
            rep.tb_valid_range = establish_tb_valid_range(device, cfg, pinch_model, a_max, rep.tb_scan)
        except RangeNotFound as exc:
            rep.verdict = BROKEN
            rep.broken_gates = ["TB"]
            rep.reason = str(exc)
    rep.n_1d = device.n_1d - start
    rep.safety = dict(device.safety)
    return rep


class RangeNotFound(RuntimeError):
    pass


def responds_well(device: Device, model, fit: po.PinchoffFit, a_max: float) -> bool:
    """Good label and a cut-off current below the noise floor."""
    return classify_fit(model, fit) and fit.low_current * a_max < device.noise_floor


def establish_tb_valid_range(
    device: Device,
    cfg: CharacterizeConfig = CharacterizeConfig(),
    pinch_model=None,
    a_max: float | None = None,
    log: list | None = None,
) -> tuple[float, float]:
    """Scan the top barrier downward from 0 V until every barrier can deplete.

    The lower end is the first TB voltage at which the last remaining barrier
    pinches off. With that barrier closed at its safety minimum, the top
    barrier's own cut-off voltage gives the upper end.
    """
    a_max = a_max or device.a_max or 1.0
    log = log if log is not None else []
    s_lo, s_hi = device.safety["TB"]
    tb = min(0.0, s_hi)
    remaining = list(BARRIERS)
    last = None
    v_min = None
    while tb >= s_lo - 1e-9:
        tb = max(tb, s_lo)
        _park_others(device, ())
        device.set_voltage("TB", tb)
        pinched = []
        for g in list(remaining):
            _, fit = sweep_gate(device, g, a_max, cfg)
            if responds_well(device, pinch_model, fit, a_max):
                pinched.append(g)
        log.append({"tb": tb, "pinched": pinched, "remaining": list(remaining)})
        for g in pinched:
            remaining.remove(g)
            last = g
        if not remaining:
            v_min = tb
            break
        if tb <= s_lo + 1e-12:
            break
        tb = round(tb - cfg.tb_scan_step, 10)
    if v_min is None:
        _park_others(device, ())
        raise RangeNotFound("barriers " + ", ".join(remaining) + " never pinch inside the top-barrier safety range")

    _park_others(device, ())
    device.set_voltage(last, device.safety[last][0])
    _, fit = sweep_gate(device, "TB", a_max, cfg)
    device.set_voltage(last, device.safety[last][1])
    device.set_voltage("TB", v_min)
    v_max = max(float(fit.v_l), v_min)
    log.append({"tb_trace_gate_closed": last, "v_l": float(fit.v_l), "degraded": fit.degraded})
    return (float(v_min), v_max)
