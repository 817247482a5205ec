"""Synthetic labeled corpora drawn from the simulator.

Pinch-off records hold the 4-feature vector and the normalized trace
resampled to a fixed length. Segment records hold 28x28 normalized-current
tiles. Every record keeps the seed it was generated from, so any example can
be rebuilt on its own.
"""
from __future__ import annotations

import json
import math
from dataclasses import replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import pinchoff as po
from .chargemap import ChargeMapConfig
from .device import (BARRIERS, GATE_INDEX, GATES, LOWER_GATES, PLUNGERS, Device, Faults, Regime,
                     conductance, new_random_device, oracle_regime, transmissions)
from .ml.models import Dataset

KINDS = ("pinchoff", "single_dot", "double_dot", "regime")
TRACE_LENGTH = 128
DATASET_VERSION = 1
# share of the bad class made of good tiles of the other regime
OTHER_REGIME_SHARE = 0.2
# noiseless peak current (units of A_max) a good tile must reach / an empty one stay under
GOOD_PEAK = 0.005
EMPTY_PEAK = 0.003


def example_seeds(master: int, count: int, stream: int) -> list[int]:
    children = np.random.SeedSequence([int(master), int(stream)]).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def resample_trace(trace: po.Trace, n: int = TRACE_LENGTH) -> np.ndarray:
    return np.interp(np.linspace(0.0, 1.0, n), trace.x, trace.currents)


# ---------------------------------------------------------------- pinch-off

PINCH_BAD_VARIANTS = ("unresponsive", "dead", "leaky", "beyond_range", "noisy")


def _pinch_sweep(physics, gate, rng, tb, n_points, noise=None):
    if noise is not None:
        physics = replace(physics, noise_sigma=noise)
    dev = Device(physics, session_seed=int(rng.integers(2**31)))
    dev.set_all_to_max()
    dev.set_voltage("TB", tb)
    lo, hi = dev.safety[gate]
    s = dev.sweep_1d(gate, hi, lo, n_points)
    return po.normalize_and_canonicalize(s.setpoints, s.currents, 1.0, gate)


def pinchoff_example(seed: int, good: bool):
    """One labeled pinch-off trace: (features, resampled trace, variant)."""
    rng = np.random.default_rng(seed)
    gate = LOWER_GATES[int(rng.integers(len(LOWER_GATES)))]
    n_points = int(rng.integers(101, 202))
    tb = float(rng.uniform(-3.0, -2.4))
    if good:
        phys = new_random_device(int(rng.integers(2**31)))
        trace = _pinch_sweep(phys, gate, rng, tb, n_points, noise=float(rng.uniform(0.001, 0.02)))
        variant = "good"
    else:
        variant = PINCH_BAD_VARIANTS[int(rng.integers(len(PINCH_BAD_VARIANTS)))]
        if variant == "leaky" and gate not in BARRIERS:
            variant = "beyond_range"
        dseed = int(rng.integers(2**31))
        if variant == "unresponsive":
            phys = new_random_device(dseed, Faults(unresponsive=(gate,)))
            trace = _pinch_sweep(phys, gate, rng, tb, n_points)
        elif variant == "dead":
            phys = new_random_device(dseed, Faults(dead_channel=True))
            trace = _pinch_sweep(phys, gate, rng, tb, n_points)
        elif variant == "leaky":
            phys = new_random_device(dseed)
            leak = float(rng.uniform(0.08, 0.7))
            tb = phys.leak_centers[gate] + phys.leak_widths[gate] * math.log(leak / (1 - leak))
            trace = _pinch_sweep(phys, gate, rng, float(np.clip(tb, -3.0, 0.0)), n_points)
        elif variant == "beyond_range":
            phys = new_random_device(dseed)
            centers = dict(phys.centers)
            centers[gate] = float(rng.uniform(-3.6, -2.85))
            phys = replace(phys, centers=centers)
            trace = _pinch_sweep(phys, gate, rng, tb, n_points)
        else:
            phys = new_random_device(dseed)
            trace = _pinch_sweep(phys, gate, rng, tb, n_points, noise=float(rng.uniform(0.08, 0.25)))
    fit = po.analyze(trace)
    return po.features(fit), resample_trace(trace), variant


# ---------------------------------------------------------------- segments

def solve_transmissions(physics, voltages: dict, targets: dict, lo=-3.0, hi=0.0) -> dict | None:
    """Gate voltages giving the ``targets`` transmissions, other gates held at ``voltages``.

    Inverts each logistic and solves the linear cross-coupling system in one
    go. Returns None when a target is unreachable or leaves [lo, hi].
    """
    gates = list(targets)
    idx = [GATE_INDEX[g] for g in gates]
    cross = np.asarray(physics.cross)
    v = np.array([voltages[g] for g in GATES], dtype=float)
    tb = v[GATE_INDEX["TB"]]
    v_eff = np.empty(len(gates))
    for k, g in enumerate(gates):
        if g == "TB":
            raise ValueError("solve for lower gates only")
        leak = 1.0 / (1.0 + math.exp(-(tb - physics.leak_centers[g]) / physics.leak_widths[g]))
        own = (targets[g] - leak) / (1.0 - leak)
        if not 0.0 < own < 1.0:
            return None
        v_eff[k] = physics.centers[g] + physics.widths[g] * math.log(own / (1.0 - own))
    rest = [i for i in range(len(GATES)) if i not in idx]
    rhs = v_eff - cross[np.ix_(idx, rest)] @ v[rest]
    sol = np.linalg.solve(np.eye(len(idx)) + cross[np.ix_(idx, idx)], rhs)
    if np.any(sol < lo) or np.any(sol > hi):
        return None
    return dict(zip(gates, (float(x) for x in sol)))


def solve_transmission(physics, voltages: dict, gate: str, target: float, lo=-3.0, hi=0.0) -> float | None:
    """Voltage of ``gate`` giving transmission ``target`` with the other gates fixed."""
    out = solve_transmissions(physics, voltages, {gate: target}, lo, hi)
    return None if out is None else out[gate]


def _configure(physics, rng, t_cb: float, t_outer: tuple[float, float], tb: float):
    """Barrier voltages realizing the requested transmissions (plungers open)."""
    v = {g: 0.0 for g in GATES}
    v["TB"] = tb
    sol = solve_transmissions(physics, v, {"CB": t_cb, "LB": t_outer[0], "RB": t_outer[1]})
    if sol is None:
        return None
    v.update(sol)
    return v


def _plunger_window(physics, v, gate, t_low=0.1):
    """[v at transmission t_low, safety max] for a plunger."""
    lo = solve_transmission(physics, v, gate, t_low)
    return (lo, 0.0) if lo is not None else None


def render_tile(physics, voltages, origin, rng, step, cfg: ChargeMapConfig = ChargeMapConfig()):
    """Measure a tile on a grid of ``step`` spacing and resample it to pixels x pixels.

    Returns the pixels and the noiseless peak current inside the tile.
    """
    x0, y0 = origin
    size = cfg.segment_size
    px = rng.uniform(0.0, step)
    py = rng.uniform(0.0, step)
    xs = np.arange(x0 - px, x0 + size + step, step)
    ys = np.arange(y0 - py, y0 + size + step, step)
    vv = np.tile(np.array([voltages[g] for g in GATES]), (ys.size, xs.size, 1))
    vv[..., GATE_INDEX["LP"]] = xs[None, :]
    vv[..., GATE_INDEX["RP"]] = ys[:, None]
    clean = conductance(physics, vv, noiseless=True)
    noisy = physics.noise_sigma * physics.a_sat * rng.standard_normal(clean.shape)
    cur = np.clip(clean + noisy, 0.0, None)
    interp = RegularGridInterpolator((ys, xs), cur, method="linear")
    offs = cfg.pixel_pitch * np.arange(cfg.pixels)
    yy, xx = np.meshgrid(y0 + offs, x0 + offs, indexing="ij")
    pix = interp(np.stack([yy.ravel(), xx.ravel()], axis=1)).reshape(cfg.pixels, cfg.pixels)
    return pix, float(clean.max())


SEGMENT_BAD_VARIANTS = ("intermediate", "open", "closed", "noisy", "smeared", "dim")


def _segment_setup(rng, variant: str):
    """Device, voltages and tile origin for one segment variant, or None to retry."""
    phys = new_random_device(int(rng.integers(2**31)))
    tb = float(rng.uniform(-3.0, -2.4))
    t_outer = tuple(float(x) for x in rng.uniform(0.12, 0.5, 2))
    if variant == "single":
        t_cb = float(rng.uniform(0.72, 0.97))
    elif variant == "double":
        t_cb = float(rng.uniform(0.1, 0.52))
    elif variant == "intermediate":
        # coupling 0.35-0.65: both patterns superposed
        t_cb = float(rng.uniform(0.575, 0.625))
    else:
        t_cb = float(rng.choice([rng.uniform(0.72, 0.97), rng.uniform(0.1, 0.52)]))
    if variant == "open":
        t_outer = (float(rng.uniform(0.7, 0.99)), t_outer[1]) if rng.random() < 0.5 else (
            float(rng.uniform(0.7, 0.99)), float(rng.uniform(0.7, 0.99)))
        if rng.random() < 0.5:
            t_outer = t_outer[::-1]
    elif variant == "closed":
        t_outer = (float(rng.uniform(0.001, 0.015)), t_outer[1])
        if rng.random() < 0.5:
            t_outer = t_outer[::-1]
    if variant == "noisy":
        phys = replace(phys, noise_sigma=float(rng.uniform(0.008, 0.03)))
    elif variant == "smeared":
        phys = replace(phys, broadening=float(rng.uniform(0.012, 0.03)))
    targets = {"CB": t_cb, "LB": t_outer[0], "RB": t_outer[1]}
    v = _configure(phys, rng, t_cb, t_outer, tb)
    if v is None:
        return None
    origin = []
    for g in PLUNGERS:
        if variant == "dim":
            t_lo, t_hi = 0.003, 0.03
            lo = solve_transmission(phys, v, g, t_lo)
            hi = solve_transmission(phys, v, g, t_hi)
            if lo is None or hi is None:
                return None
            c = float(rng.uniform(lo, hi))
        else:
            win = _plunger_window(phys, v, g)
            if win is None:
                return None
            c = float(rng.uniform(win[0], min(win[0] + 0.4, win[1] - 0.03)))
        origin.append(c - 0.025)
    v = dict(v)
    v["LP"], v["RP"] = origin[0] + 0.025, origin[1] + 0.025
    if v["LP"] > 0 or v["RP"] > 0 or origin[0] < -3 or origin[1] < -3:
        return None
    # plungers couple back onto the barriers: re-solve at the tile centre
    sol = solve_transmissions(phys, v, targets)
    if sol is None:
        return None
    v.update(sol)
    return phys, v, tuple(origin)


def segment_example(seed: int, variant: str, cfg: ChargeMapConfig = ChargeMapConfig()):
    """One tile of the requested variant whose oracle regime agrees with it.

    ``single``/``double`` must be confirmed by the oracle at the tile centre;
    the other variants must not be. Retries with derived seeds otherwise.
    """
    rng = np.random.default_rng(seed)
    for _ in range(50):
        setup = _segment_setup(rng, variant)
        if setup is None:
            continue
        phys, v, origin = setup
        regime = oracle_regime(phys, v)
        if variant == "single" and regime != Regime.SINGLE_DOT:
            continue
        if variant == "double" and regime != Regime.DOUBLE_DOT:
            continue
        if variant in ("intermediate", "open", "closed", "dim") and regime != Regime.NO_DOT:
            continue
        step = float(rng.uniform(0.0033, 0.005))
        pix, peak = render_tile(phys, v, origin, rng, step, cfg)
        if variant in ("single", "double") and peak < GOOD_PEAK:
            continue
        if variant in ("closed", "dim") and peak > EMPTY_PEAK:
            continue
        return pix, regime
    raise RuntimeError(f"could not realize a {variant} tile from seed {seed}")


def _segment_variant(kind: str, positive: bool, rng) -> str:
    if kind == "regime":
        return "double" if positive else "single"
    target = "single" if kind == "single_dot" else "double"
    other = "double" if kind == "single_dot" else "single"
    if positive:
        return target
    if rng.random() < OTHER_REGIME_SHARE:
        return other
    return SEGMENT_BAD_VARIANTS[int(rng.integers(len(SEGMENT_BAD_VARIANTS)))]


# ---------------------------------------------------------------- corpora

def gen_records(kind: str, count: int, seed: int):
    """``count`` records per class for ``kind``, label 0 first then label 1."""
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if count < 10:
        raise ValueError("need at least 10 examples per class")
    records = []
    for label in (0, 1):
        for s in example_seeds(seed, count, label):
            if kind == "pinchoff":
                feats, trace, variant = pinchoff_example(s, bool(label))
                records.append({"kind": kind, "label": label, "seed": s, "variant": variant,
                                "features": feats.tolist(), "trace": trace.tolist()})
            else:
                rng = np.random.default_rng([s, 7])
                variant = _segment_variant(kind, bool(label), rng)
                pix, regime = segment_example(s, variant)
                records.append({"kind": kind, "label": label, "seed": s, "variant": variant,
                                "oracle": regime.value, "pixels": pix.ravel().tolist()})
    return records


def _round(x):
    return [float(f"{v:.6g}") for v in x]


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            r = dict(r)
            for k in ("features", "trace", "pixels"):
                if k in r:
                    r[k] = _round(r[k])
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def gen_dataset(kind: str, count: int, seed: int, path=None) -> list[dict]:
    records = gen_records(kind, count, seed)
    if path is not None:
        write_jsonl(records, path)
    return records


def to_dataset(records, representation: str = "features") -> Dataset:
    """Classifier rows from records; pinch-off rows use features or the trace."""
    if not records:
        raise ValueError("no records")
    kind = records[0]["kind"]
    y = np.array([r["label"] for r in records])
    seeds = np.array([r["seed"] for r in records], dtype=np.int64)
    if kind == "pinchoff":
        if representation == "features":
            return Dataset(np.array([r["features"] for r in records]), y, kind=kind, seeds=seeds)
        X = np.array([r["trace"] for r in records])
        return Dataset(X, y, kind=kind, block_shape=(X.shape[1],), seeds=seeds)
    names = ("single", "double") if kind == "regime" else ("bad", "good")
    X = np.array([r["pixels"] for r in records])
    side = int(round(math.sqrt(X.shape[1])))
    return Dataset(X, y, class_names=names, kind=kind, block_shape=(side, side), seeds=seeds)
