import numpy as np
import pytest

from qdtune import pinchoff as po
from qdtune import tuner as tu
from qdtune.characterize import CharacterizationReport, characterize_device, initial_quality_assessment
from qdtune.datasets import solve_transmission
from qdtune.device import GATE_INDEX, GATES, Device, Regime, new_random_device


@pytest.mark.parametrize("v,rng,direction,out", [
    (-1.0, (-2.0, 0.0), tu.TOO_LOW, -0.9),
    (-0.1, (-2.0, 0.0), tu.TOO_HIGH, -0.2),
    (-0.04, (-2.0, 0.0), tu.TOO_LOW, 0.0),
])
def test_voltage_delta_table(v, rng, direction, out):
    assert tu.voltage_delta(v, rng, direction) == pytest.approx(out, abs=1e-12)


def test_voltage_delta_step_bounds():
    for v in np.linspace(-1.9, -0.1, 37):
        for d in (tu.TOO_LOW, tu.TOO_HIGH):
            step = abs(tu.voltage_delta(v, (-3.0, 1.0), d) - v)
            assert 0.05 - 1e-12 <= step <= 0.1 + 1e-12


def test_voltage_delta_bad_direction():
    with pytest.raises(ValueError):
        tu.voltage_delta(-1.0, (-2.0, 0.0), "sideways")


@pytest.mark.parametrize("rng,out", [((-2.0, -1.0), -1.25), ((-1.0, -1.0), -1.0), ((-3.0, -1.0), -1.5)])
def test_choose_top_barrier(rng, out):
    assert tu.choose_top_barrier(rng) == pytest.approx(out)


@pytest.mark.parametrize("rng,out", [((-1.5, -0.3), -1.1), ((-1.0, -1.0), -1.0)])
def test_outer_barrier_voltage(rng, out):
    assert tu.outer_barrier_voltage(rng) == pytest.approx(out)


def test_central_barrier_level_closed_form():
    assert po.level_crossing(po.TanhFit(0.5, 8.0, -4.0, 0.0), 0.75) == pytest.approx(0.5687, abs=1e-4)
    assert po.level_crossing(po.TanhFit(0.5, 8.0, -4.0, 0.0), 1.0) is None


def _ready(seed, noiseless=False, tb_offset=0.0):
    dev = Device(new_random_device(seed), session_seed=seed, noiseless=noiseless)
    initial_quality_assessment(dev)
    dev.set_all_to_max()
    dev.set_voltage("TB", -2.8 + tb_offset)
    return dev


def test_central_barrier_hits_target_current():
    for seed in range(5):
        dev = _ready(seed)
        v, _ = tu.set_central_barrier(dev)
        assert dev.voltages["CB"] == v
        assert dev.measure() == pytest.approx(0.75 * dev.a_max, abs=0.05)


def test_central_barrier_unreachable_level():
    dev = _ready(0)
    # left barrier nearly closed: the whole CB trace stays far below 0.75 A_max
    dev.set_voltage("LB", solve_transmission(dev.physics, dev.voltages, "LB", 0.3))
    with pytest.raises(tu.StepFailure) as err:
        tu.set_central_barrier(dev)
    assert err.value.direction == tu.TOO_LOW


def _mirror(phys):
    """Make the right half of the device a copy of the left half."""
    swap = {"LB": "RB", "RB": "LB", "LP": "RP", "RP": "LP"}
    idx = [GATE_INDEX[swap.get(g, g)] for g in GATES]
    c = np.asarray(phys.cross)
    c = 0.5 * (c + c[np.ix_(idx, idx)])
    sym = lambda d: {**d, "RB": d["LB"], "RP": d["LP"]}  # noqa: E731
    return new_random_device(
        phys.seed, centers=sym(phys.centers), widths=sym(phys.widths),
        leak_centers=sym(phys.leak_centers), leak_widths=sym(phys.leak_widths),
        cross=tuple(map(tuple, c)),
    )


def test_symmetric_device_gets_symmetric_outer_barriers():
    for seed in range(3):
        dev = Device(_mirror(new_random_device(seed)), noiseless=True)
        initial_quality_assessment(dev)
        dev.set_all_to_max()
        dev.set_voltage("TB", -2.8)
        lb, rb, ranges = tu.set_outer_barriers(dev)
        assert abs(lb - rb) < 0.05
        assert lb == pytest.approx(tu.outer_barrier_voltage(ranges["LB"]))


def test_plunger_windows_have_minimum_width():
    dev = _ready(1)
    w = tu.characterize_plungers(dev)
    for lo, hi in w.values():
        assert hi - lo >= tu.TunerConfig().min_plunger_window - 1e-12


def test_illegal_transition_rejected():
    st = tu.TunerState()
    with pytest.raises(tu.IllegalTransition):
        st.advance(tu.Stage.CLASSIFY)
    st.advance(tu.Stage.SET_TB)
    assert tu.audit(st.log)
    assert not tu.audit([{"from": "Init", "to": "Done"}])


@pytest.fixture(scope="module")
def tuned_pair(quick_models):
    out = {}
    for target in ("DoubleDot", "SingleDot"):
        dev = Device(new_random_device(0), session_seed=0)
        rep = characterize_device(dev, pinch_model=quick_models["pinchoff"], device_id="dev0")
        assert rep.working
        out[target] = tu.run_tuning(dev, rep, tu.TunerConfig(target=target, max_2d=10), quick_models)
    return out


def test_double_dot_run_succeeds(tuned_pair):
    r = tuned_pair["DoubleDot"]
    assert r.success and r.n_2d <= 10
    assert r.regime_oracle == Regime.DOUBLE_DOT.value
    assert r.oracle_confirmed
    assert tu.audit(r.log)
    assert r.log[-1]["to"] == tu.Stage.DONE.value


def test_single_dot_run_opens_central_barrier(tuned_pair):
    d, s = tuned_pair["DoubleDot"], tuned_pair["SingleDot"]
    assert s.success
    assert s.voltages["CB"] > d.voltages["CB"]


def test_broken_report_fails_without_measuring(quick_models):
    dev = Device(new_random_device(0))
    rep = CharacterizationReport("x", True, 1.0, 1.0, verdict="broken")
    r = tu.run_tuning(dev, rep, models=quick_models)
    assert not r.success and dev.n_1d == 0 and dev.n_2d == 0
    assert [e["to"] for e in r.log] == ["Failed"]


def test_models_required():
    dev = Device(new_random_device(0))
    rep = CharacterizationReport("x", True, 1.0, 1.0, verdict="working", tb_valid_range=(-2.0, -1.0))
    with pytest.raises(ValueError):
        tu.run_tuning(dev, rep, models={})


def test_result_json_round_trip(tuned_pair):
    import json
    d = json.loads(tuned_pair["DoubleDot"].to_json())
    assert d["success"] is True and d["n_2d"] == tuned_pair["DoubleDot"].n_2d
