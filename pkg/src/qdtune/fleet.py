"""Fleet construction and the per-device triage + tuning pipeline."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .characterize import CharacterizeConfig, characterize_device
from .chargemap import ChargeMapConfig
from .device import DeviceLayout, Device, DevicePhysics, Faults, new_random_device
from .tuner import TunerConfig, run_tuning

CSV_COLUMNS = (
    "device", "cooldown", "faults", "iqa", "a_max", "char_n_1d", "verdict", "broken_gates",
    "tune_n_1d", "n_2d", "success", "regime_classifier", "regime_oracle", "oracle_confirmed",
)


@dataclass(frozen=True)
class FleetMember:
    device_id: str
    physics: DevicePhysics


def _fault_from_spec(spec: dict) -> Faults:
    return Faults(
        dead_channel=bool(spec.get("dead_channel", False)),
        unresponsive=tuple(spec.get("unresponsive", ())),
        offset_charge=float(spec.get("offset_charge", 0.0)),
    )


def make_fleet(count: int, seed: int, faults: list[dict] | None = None) -> list[FleetMember]:
    """``count`` devices with seeded physics; the first ``len(faults)`` slots of a
    seeded permutation receive the listed fault profiles."""
    faults = list(faults or [])
    if len(faults) > count:
        raise ValueError("more faulted devices than fleet members")
    ss = np.random.SeedSequence([int(seed), 0xF1EE7])
    dev_seeds = [int(c.generate_state(1)[0]) for c in ss.spawn(count)]
    order = np.random.default_rng([int(seed), 1]).permutation(count)
    profile = {int(order[i]): _fault_from_spec(f) for i, f in enumerate(faults)}
    return [
        FleetMember(f"dev{i:02d}", new_random_device(dev_seeds[i], profile.get(i)))
        for i in range(count)
    ]


def fault_label(f: Faults) -> str:
    parts = []
    if f.dead_channel:
        parts.append("dead_channel")
    if f.unresponsive:
        parts.append("unresponsive:" + "+".join(f.unresponsive))
    if f.offset_charge:
        parts.append(f"offset_charge:{f.offset_charge:g}")
    return ",".join(parts) or "none"


def session_seed(physics: DevicePhysics, cooldown: int) -> int:
    return int(np.random.SeedSequence([physics.seed, int(cooldown), 0xC001]).generate_state(1)[0])


def process_device(member: FleetMember, cooldown: int, models: dict, layout: DeviceLayout | None = None,
                   char_cfg: CharacterizeConfig = CharacterizeConfig(), tuner_cfg: TunerConfig = TunerConfig(),
                   map_cfg: ChargeMapConfig = ChargeMapConfig(), tune: bool = True):
    """Triage and (for working devices) tune one device; never raises for device-level failures."""
    dev = Device(member.physics, layout, session_seed=session_seed(member.physics, cooldown))
    rep = characterize_device(dev, char_cfg, models["pinchoff"], device_id=member.device_id)
    result = None
    error = ""
    if tune and rep.working:
        try:
            result = run_tuning(dev, rep, tuner_cfg, models, map_cfg, char_cfg)
        except Exception as exc:  # recorded per device, the fleet carries on
            error = f"{type(exc).__name__}: {exc}"
    row = {
        "device": member.device_id,
        "cooldown": cooldown,
        "faults": fault_label(member.physics.faults),
        "iqa": "pass" if rep.iqa_passed else "fail",
        "a_max": rep.a_max,
        "char_n_1d": rep.n_1d,
        "verdict": rep.verdict,
        "broken_gates": "+".join(rep.broken_gates),
        "tune_n_1d": result.n_1d if result else None,
        "n_2d": result.n_2d if result else None,
        "success": result.success if result else None,
        "regime_classifier": result.regime_classifier if result else None,
        "regime_oracle": result.regime_oracle if result else None,
        "oracle_confirmed": result.oracle_confirmed if result else None,
    }
    if error:
        row["error"] = error
    return row, rep, result


def _job(args):
    member, cooldown, models, layout, char_cfg, tuner_cfg, map_cfg, tune = args
    row, rep, res = process_device(member, cooldown, models, layout, char_cfg, tuner_cfg, map_cfg, tune)
    return row, rep.to_dict(), (res.to_dict() if res is not None else None)


def run_fleet(members: list[FleetMember], models: dict, cooldowns: int = 1, workers: int = 1,
              layout: DeviceLayout | None = None, char_cfg: CharacterizeConfig = CharacterizeConfig(),
              tuner_cfg: TunerConfig = TunerConfig(), map_cfg: ChargeMapConfig = ChargeMapConfig(),
              tune: bool = True) -> dict:
    """Run every device through every cooldown. Output does not depend on ``workers``."""
    jobs = [(m, c, models, layout, char_cfg, tuner_cfg, map_cfg, tune)
            for c in range(cooldowns) for m in members]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_job, jobs))
    else:
        out = [_job(j) for j in jobs]
    sections = []
    for c in range(cooldowns):
        part = out[c * len(members):(c + 1) * len(members)]
        sections.append({
            "cooldown": c,
            "rows": [r for r, _, _ in part],
            "characterization": [rep for _, rep, _ in part],
            "tuning": [res for _, _, res in part],
        })
    return {"sections": sections, "summary": summarize([r for s in sections for r in s["rows"]])}


def summarize(rows) -> dict:
    tuned = [r for r in rows if r["success"] is not None]
    unfaulted = [r for r in rows if r["faults"] == "none"]
    confirmed = [r for r in unfaulted if r["oracle_confirmed"]]
    return {
        "devices": len(rows),
        "failed_iqa": sum(r["verdict"] == "failed_iqa" for r in rows),
        "broken": sum(r["verdict"] == "broken" for r in rows),
        "working": sum(r["verdict"] == "working" for r in rows),
        "tuned": len(tuned),
        "success": sum(bool(r["success"]) for r in tuned),
        "oracle_confirmed": sum(bool(r["oracle_confirmed"]) for r in tuned),
        "unfaulted": len(unfaulted),
        "unfaulted_confirmed_fraction": (len(confirmed) / len(unfaulted)) if unfaulted else None,
    }


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in CSV_COLUMNS})
    return buf.getvalue()
