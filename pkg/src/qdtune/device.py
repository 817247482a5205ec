"""Constant-interaction proxy of a six-gate double quantum dot device.

The simulator stands in for a measurement setup: a :class:`Device` session holds
gate voltages, enforces safety ranges and counts 1D/2D measurements, while
:func:`conductance` evaluates the hidden physics for arbitrary (broadcast)
voltage arrays.

Current model (normalized so a fully open device reads ``a_sat = 1``)::

    I = a_sat * prod_g T_g * [(1 - vis) + vis * (r_bg + (1 - r_bg) * R)]

``T_g`` are logistic gate transmissions. Lower gates (LB, CB, RB, LP, RP) can
only close the channel once the top barrier depletes the leakage path above
them. ``vis`` measures how strongly the outer barriers confine charge and ``R``
is the Coulomb resonance pattern: diagonal stripes for a merged single dot and a
honeycomb from the two-dot constant-interaction energy for separated dots,
blended by the interdot coupling ``kappa`` set by the central barrier.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

GATES: tuple[str, ...] = ("TB", "LB", "CB", "RB", "LP", "RP")
LOWER_GATES: tuple[str, ...] = ("LB", "CB", "RB", "LP", "RP")
BARRIERS: tuple[str, ...] = ("LB", "CB", "RB")
PLUNGERS: tuple[str, ...] = ("LP", "RP")
GATE_INDEX = {g: i for i, g in enumerate(GATES)}

SCHEMA_VERSION = 1

# Regime oracle thresholds.
KAPPA_SPLIT = 0.2
KAPPA_MERGE = 0.8
TUNNEL_WINDOW = (0.02, 0.6)
PLUNGER_MIN_TRANSMISSION = 0.05


class Regime(str, Enum):
    NO_DOT = "NoDot"
    SINGLE_DOT = "SingleDot"
    DOUBLE_DOT = "DoubleDot"


class SafetyViolation(ValueError):
    """Raised when a voltage outside the gate's safety range is requested."""


@dataclass(frozen=True)
class DeviceLayout:
    """Gate names, safety ranges (volts) and the setup noise floor."""

    safety: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {g: (-3.0, 0.0) for g in GATES}
    )
    noise_floor: float = 0.02

    def __post_init__(self):
        if set(self.safety) != set(GATES):
            raise ValueError(f"layout must define exactly the gates {GATES}")
        for g, (lo, hi) in self.safety.items():
            if not lo < hi:
                raise ValueError(f"empty safety range for {g}: [{lo}, {hi}]")
        if self.noise_floor <= 0:
            raise ValueError("noise_floor must be positive")


@dataclass(frozen=True)
class Faults:
    dead_channel: bool = False
    unresponsive: tuple[str, ...] = ()
    offset_charge: float = 0.0

    def __post_init__(self):
        bad = set(self.unresponsive) - set(GATES)
        if bad:
            raise ValueError(f"unknown gates in fault profile: {sorted(bad)}")


@dataclass(frozen=True)
class DevicePhysics:
    """Hidden simulator parameters of one device.

    Per-gate dictionaries are keyed by gate name. ``centers`` and ``widths``
    describe each lower gate's own logistic pinch-off (volts) once the top
    barrier has closed the leakage path; ``leak_centers``/``leak_widths`` give
    the top-barrier voltage at which that leakage path closes. ``cross`` is a
    6x6 lever-arm matrix shifting every gate's effective voltage by the others.
    """

    centers: Mapping[str, float]
    widths: Mapping[str, float]
    leak_centers: Mapping[str, float]
    leak_widths: Mapping[str, float]
    tb_center: float
    tb_width: float
    cross: tuple[tuple[float, ...], ...]
    lever: tuple[tuple[float, float], tuple[float, float]]
    charge_offset: tuple[float, float]
    e_c1: float = 1.0
    e_c2: float = 1.0
    e_cm: float = 0.3
    kappa_center: float = 0.6
    kappa_width: float = 0.04
    vis_threshold: float = 0.6
    vis_width: float = 0.05
    background: float = 0.1
    broadening: float = 0.004
    a_sat: float = 1.0
    noise_sigma: float = 0.001
    drift_sigma: float = 0.0
    faults: Faults = Faults()
    seed: int = 0

    def __post_init__(self):
        if any(self.widths[g] <= 0 for g in LOWER_GATES) or self.tb_width <= 0:
            raise ValueError("widths must be positive")
        if not self.e_cm < min(self.e_c1, self.e_c2):
            raise ValueError("mutual charging energy must be below both E_C")
        if self.kappa_width <= 0:
            raise ValueError("kappa_width must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["faults"]["unresponsive"] = list(self.faults.unresponsive)
        d["cross"] = [list(r) for r in self.cross]
        d["lever"] = [list(r) for r in self.lever]
        d["charge_offset"] = list(self.charge_offset)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "DevicePhysics":
        d = dict(d)
        f = dict(d.pop("faults", {}))
        f["unresponsive"] = tuple(f.get("unresponsive", ()))
        return cls(
            faults=Faults(**f),
            cross=tuple(tuple(float(x) for x in r) for r in d.pop("cross")),
            lever=tuple(tuple(float(x) for x in r) for r in d.pop("lever")),
            charge_offset=tuple(d.pop("charge_offset")),
            **d,
        )


def _uniform(rng, lo, hi):
    return float(rng.uniform(lo, hi))


def new_random_device(seed: int, faults: Faults | None = None, **overrides) -> DevicePhysics:
    """Draw a device from the documented parameter ranges.

    Un-faulted devices are tunable with the default layout: with the top
    barrier at -3 V every lower gate pinches the channel inside [-3, 0] V and
    every leakage path closes above -2.3 V.

    Args:
        seed: Seed for the parameter draw (and the default noise stream).
        faults: Optional fault profile. ``offset_charge`` moves every pinch-off
            center up by that many volts and brings the top barrier's own
            pinch-off into the safety range.
        **overrides: Replace any :class:`DevicePhysics` field after drawing.
    """
    rng = np.random.default_rng(seed)
    faults = faults or Faults()
    centers, widths, leak_c, leak_w = {}, {}, {}, {}
    for g in ("LB", "RB"):
        centers[g] = _uniform(rng, -1.5, -0.7)
        widths[g] = _uniform(rng, 0.04, 0.07)
    centers["CB"] = _uniform(rng, -1.3, -0.7)
    widths["CB"] = _uniform(rng, 0.04, 0.06)
    for g in PLUNGERS:
        centers[g] = _uniform(rng, -1.1, -0.5)
        widths[g] = _uniform(rng, 0.04, 0.07)
    for g in BARRIERS:
        leak_c[g] = _uniform(rng, -1.5, -0.6)
        leak_w[g] = _uniform(rng, 0.06, 0.12)

    cross = np.zeros((6, 6))
    tb = GATE_INDEX["TB"]
    for g in LOWER_GATES:
        cross[GATE_INDEX[g], tb] = _uniform(rng, 0.04, 0.1)
    for p, b in (("LP", "LB"), ("RP", "RB"), ("LP", "CB"), ("RP", "CB")):
        cross[GATE_INDEX[b], GATE_INDEX[p]] = _uniform(rng, 0.01, 0.04)
        cross[GATE_INDEX[p], GATE_INDEX[b]] = _uniform(rng, 0.01, 0.04)

    tb_center = -4.5
    tb_width = 0.1
    if faults.offset_charge:
        centers = {g: c + faults.offset_charge for g, c in centers.items()}
        leak_c = {g: c + faults.offset_charge if g in BARRIERS else c for g, c in leak_c.items()}
        tb_center = -3.0 + 2.0 * faults.offset_charge
    # plungers sit between the barriers, so their leakage path closes before any barrier's
    for g in PLUNGERS:
        leak_c[g] = max(leak_c[b] for b in BARRIERS) + 0.15
        leak_w[g] = 0.08

    lever = (
        (_uniform(rng, 35.0, 45.0), _uniform(rng, 5.0, 11.0)),
        (_uniform(rng, 5.0, 11.0), _uniform(rng, 35.0, 45.0)),
    )
    params = dict(
        centers=centers,
        widths=widths,
        leak_centers=leak_c,
        leak_widths=leak_w,
        tb_center=tb_center,
        tb_width=tb_width,
        cross=tuple(tuple(float(x) for x in r) for r in cross),
        lever=lever,
        charge_offset=(_uniform(rng, 0, 1), _uniform(rng, 0, 1)),
        e_c1=_uniform(rng, 0.9, 1.1),
        e_c2=_uniform(rng, 0.9, 1.1),
        e_cm=_uniform(rng, 0.2, 0.4),
        faults=faults,
        seed=int(seed),
    )
    params.update(overrides)
    return DevicePhysics(**params)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _as_array(physics: DevicePhysics, voltages) -> np.ndarray:
    """Coerce a gate->voltage mapping or (..., 6) array into a float array."""
    if isinstance(voltages, Mapping):
        parts = np.broadcast_arrays(*[np.asarray(voltages[g], dtype=float) for g in GATES])
        return np.stack(parts, axis=-1)
    v = np.asarray(voltages, dtype=float)
    if v.shape[-1] != 6:
        raise ValueError("voltage array must have a trailing axis of length 6")
    return v


def transmissions(physics: DevicePhysics, v: np.ndarray) -> np.ndarray:
    """Per-gate transmissions, shape (..., 6), ordered like :data:`GATES`."""
    v = np.array(v, dtype=float, copy=True)
    dead = [GATE_INDEX[g] for g in physics.faults.unresponsive]
    # an unresponsive gate behaves as if parked at a fully open voltage
    v[..., dead] = 0.0
    cross = np.asarray(physics.cross)
    v_eff = v + v @ cross.T
    out = np.empty_like(v)
    tb = GATE_INDEX["TB"]
    out[..., tb] = _sigmoid((v_eff[..., tb] - physics.tb_center) / physics.tb_width)
    for g in LOWER_GATES:
        i = GATE_INDEX[g]
        own = _sigmoid((v_eff[..., i] - physics.centers[g]) / physics.widths[g])
        leak = _sigmoid((v[..., tb] - physics.leak_centers[g]) / physics.leak_widths[g])
        out[..., i] = leak + (1.0 - leak) * own
    if dead:
        out[..., dead] = 1.0
    return out


def interdot_coupling(physics: DevicePhysics, t_cb) -> np.ndarray:
    """kappa in [0, 1]; rises monotonically as the central barrier opens."""
    return _sigmoid((np.asarray(t_cb) - physics.kappa_center) / physics.kappa_width)


def _dot_charges(physics: DevicePhysics, v_lp, v_rp):
    (l11, l12), (l21, l22) = physics.lever
    n1 = l11 * v_lp + l12 * v_rp + physics.charge_offset[0]
    n2 = l21 * v_lp + l22 * v_rp + physics.charge_offset[1]
    return n1, n2


def ground_state(physics: DevicePhysics, v_lp, v_rp):
    """Occupation (N1, N2) minimizing the two-dot electrostatic energy."""
    n1, n2 = _dot_charges(physics, np.asarray(v_lp, float), np.asarray(v_rp, float))
    return _ground_state(physics, n1, n2)[:2]


def _energy(physics, N1, N2, n1, n2):
    x1 = N1 - n1
    x2 = N2 - n2
    return physics.e_c1 * x1 * x1 + physics.e_c2 * x2 * x2 + physics.e_cm * x1 * x2


def _ground_state(physics, n1, n2):
    base1 = np.floor(n1)
    base2 = np.floor(n2)
    best = np.full(np.shape(n1), np.inf)
    N1 = np.zeros(np.shape(n1))
    N2 = np.zeros(np.shape(n1))
    for d1 in (-1, 0, 1, 2):
        for d2 in (-1, 0, 1, 2):
            c1 = base1 + d1
            c2 = base2 + d2
            u = _energy(physics, c1, c2, n1, n2)
            take = u < best
            best = np.where(take, u, best)
            N1 = np.where(take, c1, N1)
            N2 = np.where(take, c2, N2)
    return N1, N2, best


def resonance(physics: DevicePhysics, v_lp, v_rp, kappa) -> np.ndarray:
    """Coulomb resonance factor in [0, 1] for plunger voltages (volts)."""
    v_lp = np.asarray(v_lp, float)
    v_rp = np.asarray(v_rp, float)
    (l11, l12), (l21, l22) = physics.lever
    n1, n2 = _dot_charges(physics, v_lp, v_rp)
    b = physics.broadening

    # merged dot: total charge, degeneracy at half-integer filling
    n = n1 + n2
    grad = np.hypot(l11 + l21, l12 + l22)
    dist = np.abs(n - np.floor(n) - 0.5) / grad
    r_single = np.exp(-0.5 * (dist / b) ** 2)

    N1, N2, u0 = _ground_state(physics, n1, n2)
    ec1, ec2, ecm = physics.e_c1, physics.e_c2, physics.e_cm
    # |grad_V| of the addition energies converts energy gaps into volts
    g1 = np.hypot(2 * ec1 * l11 + ecm * l21, 2 * ec1 * l12 + ecm * l22)
    g2 = np.hypot(2 * ec2 * l21 + ecm * l11, 2 * ec2 * l22 + ecm * l12)
    gm = np.hypot(g1, g2)
    lines = []
    for (d1, d2), g in (((1, 0), g1), ((-1, 0), g1), ((0, 1), g2), ((0, -1), g2)):
        gap = _energy(physics, N1 + d1, N2 + d2, n1, n2) - u0
        lines.append(np.exp(-0.5 * (gap / g / b) ** 2))
    for d1, d2 in ((1, -1), (-1, 1)):
        gap = _energy(physics, N1 + d1, N2 + d2, n1, n2) - u0
        lines.append(0.5 * np.exp(-0.5 * (gap / gm / b) ** 2))
    r_double = np.max(np.stack(lines), axis=0)
    kappa = np.asarray(kappa)
    return kappa * r_single + (1.0 - kappa) * r_double


def conductance(physics: DevicePhysics, voltages, noiseless: bool = True, rng=None) -> np.ndarray:
    """Normalized current for a voltage mapping or a (..., 6) array.

    Safety ranges are enforced by :class:`Device`, not here. With
    ``noiseless=False`` Gaussian noise of ``noise_sigma * a_sat`` is added from
    ``rng`` and the result is clamped to ``[0, a_sat * (1 + 5 * noise_sigma)]``.
    """
    v = _as_array(physics, voltages)
    if physics.faults.dead_channel:
        current = np.zeros(v.shape[:-1])
    else:
        t = transmissions(physics, v)
        t_lb = t[..., GATE_INDEX["LB"]]
        t_rb = t[..., GATE_INDEX["RB"]]
        vis = _sigmoid((physics.vis_threshold - t_lb) / physics.vis_width) * _sigmoid(
            (physics.vis_threshold - t_rb) / physics.vis_width
        )
        kappa = interdot_coupling(physics, t[..., GATE_INDEX["CB"]])
        r = resonance(physics, v[..., GATE_INDEX["LP"]], v[..., GATE_INDEX["RP"]], kappa)
        bg = physics.background
        current = physics.a_sat * np.prod(t, axis=-1) * ((1.0 - vis) + vis * (bg + (1.0 - bg) * r))
    if noiseless:
        return current
    if rng is None:
        raise ValueError("a noise rng is required when noiseless=False")
    noisy = current + physics.noise_sigma * physics.a_sat * rng.standard_normal(current.shape)
    return np.clip(noisy, 0.0, physics.a_sat * (1.0 + 5.0 * physics.noise_sigma))


def oracle_regime(physics: DevicePhysics, voltages: Mapping[str, float]) -> Regime:
    """Ground-truth regime from the hidden parameters (bypasses classifiers)."""
    if physics.faults.dead_channel:
        return Regime.NO_DOT
    t = transmissions(physics, _as_array(physics, voltages))
    lo, hi = TUNNEL_WINDOW
    tunneling = all(lo <= t[GATE_INDEX[g]] <= hi for g in ("LB", "RB"))
    plungers_on = all(t[GATE_INDEX[g]] >= PLUNGER_MIN_TRANSMISSION for g in PLUNGERS)
    if not (tunneling and plungers_on) or t[GATE_INDEX["TB"]] < 0.5:
        return Regime.NO_DOT
    kappa = float(interdot_coupling(physics, t[GATE_INDEX["CB"]]))
    if kappa < KAPPA_SPLIT:
        return Regime.DOUBLE_DOT
    if kappa >= KAPPA_MERGE:
        return Regime.SINGLE_DOT
    return Regime.NO_DOT


class Sweep1D(NamedTuple):
    gate: str
    setpoints: np.ndarray
    currents: np.ndarray


class Sweep2D(NamedTuple):
    gate_x: str
    gate_y: str
    x: np.ndarray
    y: np.ndarray
    currents: np.ndarray  # shape (len(y), len(x))


class Device:
    """One measurement session on a simulated device.

    Holds the applied voltages, the (possibly shifted) safety ranges and the
    measurement counters. All voltage changes go through the safety check.
    """

    def __init__(
        self,
        physics: DevicePhysics,
        layout: DeviceLayout | None = None,
        noiseless: bool = False,
        session_seed: int | None = None,
    ):
        self.physics = physics
        self.layout = layout or DeviceLayout()
        self.safety = {g: tuple(r) for g, r in self.layout.safety.items()}
        self.noiseless = noiseless
        seed = physics.seed if session_seed is None else session_seed
        self.rng = np.random.default_rng([int(seed), 0x51D])
        self.voltages = {g: self.safety[g][1] for g in GATES}
        self.a_max: float | None = None
        self.n_1d = 0
        self.n_2d = 0
        self._drift = 0.0

    @property
    def noise_floor(self) -> float:
        return self.layout.noise_floor

    def check(self, gate: str, v) -> None:
        lo, hi = self.safety[gate]
        v = np.asarray(v, dtype=float)
        if np.any(v < lo - 1e-12) or np.any(v > hi + 1e-12):
            raise SafetyViolation(f"{gate}: voltage outside safety range [{lo}, {hi}]")

    def set_voltage(self, gate: str, v: float) -> None:
        self.check(gate, v)
        self.voltages[gate] = float(v)

    def set_voltages(self, mapping: Mapping[str, float]) -> None:
        for g, v in mapping.items():
            self.check(g, v)
        for g, v in mapping.items():
            self.voltages[g] = float(v)

    def set_all_to_max(self) -> None:
        self.set_voltages({g: self.safety[g][1] for g in GATES})

    def clip(self, gate: str, v: float) -> float:
        lo, hi = self.safety[gate]
        return float(min(max(v, lo), hi))

    def shift_safety(self, dv: float) -> None:
        """Shift every safety range by ``dv`` volts, dragging voltages along if needed."""
        self.safety = {g: (lo + dv, hi + dv) for g, (lo, hi) in self.safety.items()}
        for g in GATES:
            self.voltages[g] = self.clip(g, self.voltages[g])

    def _measure(self, v: np.ndarray) -> np.ndarray:
        if self.noiseless:
            return conductance(self.physics, v, noiseless=True)
        out = conductance(self.physics, v, noiseless=False, rng=self.rng)
        if self.physics.drift_sigma > 0:
            steps = self.physics.drift_sigma * self.rng.standard_normal(out.size)
            drift = self._drift + np.cumsum(steps).reshape(out.shape)
            self._drift = float(drift.flat[-1])
            out = np.clip(out + drift, 0.0, None)
        return out

    def _vector(self) -> np.ndarray:
        return np.array([self.voltages[g] for g in GATES])

    def measure(self) -> float:
        """Single current reading at the present voltages."""
        return float(self._measure(self._vector()))

    def sweep_1d(self, gate: str, v_from: float, v_to: float, n_points: int) -> Sweep1D:
        """Step ``gate`` from ``v_from`` to ``v_to``; other gates stay put."""
        if n_points < 2:
            raise ValueError("n_points must be >= 2")
        self.check(gate, [v_from, v_to])
        setpoints = np.linspace(v_from, v_to, int(n_points))
        v = np.tile(self._vector(), (setpoints.size, 1))
        v[:, GATE_INDEX[gate]] = setpoints
        currents = self._measure(v)
        self.n_1d += 1
        return Sweep1D(gate, setpoints, currents)

    def sweep_2d(
        self,
        gate_x: str,
        gate_y: str,
        range_x: Sequence[float],
        range_y: Sequence[float],
        n_x: int,
        n_y: int,
    ) -> Sweep2D:
        """Raster ``gate_x`` (fast axis) against ``gate_y``."""
        if n_x < 2 or n_y < 2:
            raise ValueError("2D sweeps need at least 2 points per axis")
        if gate_x == gate_y:
            raise ValueError("2D sweep needs two distinct gates")
        self.check(gate_x, range_x)
        self.check(gate_y, range_y)
        x = np.linspace(range_x[0], range_x[1], int(n_x))
        y = np.linspace(range_y[0], range_y[1], int(n_y))
        v = np.tile(self._vector(), (y.size, x.size, 1))
        v[..., GATE_INDEX[gate_x]] = x[None, :]
        v[..., GATE_INDEX[gate_y]] = y[:, None]
        currents = self._measure(v)
        self.n_2d += 1
        return Sweep2D(gate_x, gate_y, x, y, currents)

    def conductance_at(self, mapping: Mapping[str, float] | None = None) -> float:
        """Noiseless current at the present voltages updated with ``mapping``."""
        v = dict(self.voltages)
        v.update(mapping or {})
        return float(conductance(self.physics, v, noiseless=True))

    def oracle(self, mapping: Mapping[str, float] | None = None) -> Regime:
        v = dict(self.voltages)
        v.update(mapping or {})
        return oracle_regime(self.physics, v)


def save_fixture(path, physics: DevicePhysics, layout: DeviceLayout | None = None) -> None:
    layout = layout or DeviceLayout()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "layout": {
            "gates": list(GATES),
            "safety": {g: list(layout.safety[g]) for g in GATES},
            "noise_floor": layout.noise_floor,
        },
        "physics": physics.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def load_fixture(path) -> tuple[DevicePhysics, DeviceLayout]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported fixture schema version {doc.get('schema_version')!r}")
    lay = doc["layout"]
    layout = DeviceLayout(
        safety={g: tuple(r) for g, r in lay["safety"].items()},
        noise_floor=lay["noise_floor"],
    )
    return DevicePhysics.from_dict(doc["physics"]), layout
