import pytest

from qdtune import characterize as ch
from qdtune.device import BARRIERS, GATES, Device, DeviceLayout, Faults, conductance, new_random_device


@pytest.fixture(scope="module")
def pinch(quick_models):
    return quick_models["pinchoff"]


def test_iqa_passes_on_functional_device():
    r = ch.initial_quality_assessment(Device(new_random_device(0)))
    assert r.passed and r.a_max == pytest.approx(1.0, abs=0.03)


def test_iqa_fails_on_dead_channel():
    r = ch.initial_quality_assessment(Device(new_random_device(0, Faults(dead_channel=True))))
    assert not r.passed and r.a_max is None


def test_iqa_fails_when_noise_floor_exceeds_saturation():
    dev = Device(new_random_device(0), DeviceLayout(noise_floor=2.0))
    assert not ch.initial_quality_assessment(dev).passed


def test_iqa_all_zero_mode():
    r = ch.initial_quality_assessment(Device(new_random_device(0)), ch.CharacterizeConfig(iqa_mode="all_zero"))
    assert r.passed


def test_config_validation():
    with pytest.raises(ValueError):
        ch.CharacterizeConfig(signal_threshold=1.0)
    with pytest.raises(ValueError):
        ch.CharacterizeConfig(iqa_mode="bogus")


def test_clean_device_is_working(pinch):
    dev = Device(new_random_device(1), session_seed=0)
    rep = ch.characterize_device(dev, pinch_model=pinch, device_id="d1")
    assert rep.verdict == ch.WORKING
    assert set(rep.gates) == {"LB", "CB", "RB", "LP", "RP"}
    assert all(g.good for g in rep.gates.values())
    assert rep.tb_raise_steps == 0
    # every lower gate sweep really reaches the noise floor
    assert all(g.fit.low_current * rep.a_max < dev.noise_floor * 3 for g in rep.gates.values())


def test_sweep_accounting(pinch):
    dev = Device(new_random_device(2), session_seed=0)
    rep = ch.characterize_device(dev, pinch_model=pinch)
    scan_sweeps = sum(len(e["remaining"]) for e in rep.tb_scan if "remaining" in e) + 1
    assert rep.n_1d == 5 + scan_sweeps == dev.n_1d


def test_unresponsive_top_barrier_is_broken(pinch):
    dev = Device(new_random_device(3, Faults(unresponsive=("TB",))), session_seed=0)
    rep = ch.characterize_device(dev, pinch_model=pinch)
    assert rep.verdict == ch.BROKEN
    assert rep.tb_valid_range is None
    assert set(rep.broken_gates) == {"LB", "CB", "RB", "LP", "RP"}


def test_offset_charge_raises_top_barrier(pinch):
    dev = Device(new_random_device(4, Faults(offset_charge=0.3)), session_seed=0)
    rep = ch.characterize_device(dev, pinch_model=pinch)
    assert rep.tb_raise_steps >= 1
    assert rep.verdict == ch.WORKING
    assert rep.safety["LB"] == (-2.5, 0.5)


def test_dead_device_report(pinch):
    rep = ch.characterize_device(Device(new_random_device(0, Faults(dead_channel=True))), pinch_model=pinch)
    assert rep.verdict == ch.FAILED_IQA and rep.gates == {}


def test_model_required():
    with pytest.raises(ValueError):
        ch.characterize_device(Device(new_random_device(0)))


def test_tb_valid_range_lets_every_barrier_pinch(pinch):
    phys = new_random_device(5)
    dev = Device(phys, session_seed=0)
    rep = ch.characterize_device(dev, pinch_model=pinch)
    lo, hi = rep.tb_valid_range
    s_lo, s_hi = dev.safety["TB"]
    assert s_lo <= lo < hi <= s_hi
    # oracle recheck, noiseless: at v_valid_min each barrier alone closes the channel
    for b in BARRIERS:
        v = {g: 0.0 for g in GATES}
        v.update(TB=lo)
        v[b] = -3.0
        assert conductance(phys, v) < dev.noise_floor


def test_tb_range_zero_when_barriers_pinch_immediately(pinch):
    # leakage paths closed far above 0 V: the first scan step already pinches all barriers
    base = new_random_device(6)
    phys = new_random_device(6, leak_centers={**base.leak_centers, "LB": 1.0, "CB": 1.0, "RB": 1.0})
    dev = Device(phys, session_seed=0)
    ch.initial_quality_assessment(dev)
    lo, _ = ch.establish_tb_valid_range(dev, pinch_model=pinch)
    assert lo == 0.0


def test_tb_range_not_found_when_leak_needs_lower_voltage(pinch):
    base = new_random_device(6)
    phys = new_random_device(6, leak_centers={**base.leak_centers, "CB": -5.0})
    dev = Device(phys, session_seed=0)
    ch.initial_quality_assessment(dev)
    with pytest.raises(ch.RangeNotFound):
        ch.establish_tb_valid_range(dev, pinch_model=pinch)


def test_characterization_is_idempotent_without_noise(pinch):
    phys = new_random_device(7)
    reps = [ch.characterize_device(Device(phys, noiseless=True), pinch_model=pinch) for _ in range(2)]
    assert reps[0].to_dict() == reps[1].to_dict()
