"""Fixture builders shared by several test modules."""
import numpy as np

from qdtune.characterize import initial_quality_assessment
from qdtune.datasets import solve_transmission, solve_transmissions
from qdtune.device import GATES, Device, new_random_device


def double_dot_voltages(physics, t_cb=0.3, t_outer=(0.3, 0.3), tb=-3.0):
    """Barrier voltages (plungers open) placing the device in the double-dot regime."""
    v = {g: 0.0 for g in GATES}
    v["TB"] = tb
    sol = solve_transmissions(physics, v, {"CB": t_cb, "LB": t_outer[0], "RB": t_outer[1]})
    assert sol is not None
    v.update(sol)
    return v


def boundary_fixture(seed):
    """Device in a double-dot configuration plus plunger windows at a random offset.

    Windows are 0.15-0.4 V wide and start within 0.3 V of the plunger's
    10% transmission point, so most fixtures need the boundary loop to move.
    """
    rng = np.random.default_rng([seed, 8])
    while True:
        phys = new_random_device(int(rng.integers(2**31)))
        v = {g: 0.0 for g in GATES}
        v["TB"] = float(rng.uniform(-3.0, -2.4))
        t_out = rng.uniform(0.12, 0.5, 2)
        sol = solve_transmissions(phys, v, {"CB": float(rng.uniform(0.1, 0.52)),
                                            "LB": float(t_out[0]), "RB": float(t_out[1])})
        if sol is None:
            continue
        v.update(sol)
        ranges = {}
        for g in ("LP", "RP"):
            lo = solve_transmission(phys, v, g, 0.1)
            if lo is None:
                break
            width = float(rng.uniform(0.15, 0.4))
            a = float(np.clip(lo + rng.uniform(-0.3, 0.3), -3.0, -width))
            ranges[g] = (a, a + width)
        else:
            dev = Device(phys, session_seed=seed)
            initial_quality_assessment(dev)
            dev.set_voltages({g: v[g] for g in ("TB", "LB", "CB", "RB")})
            return dev, ranges
