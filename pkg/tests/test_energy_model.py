import numpy as np
import pytest
from pydantic import ValidationError

from app.energy_model import (
    EnergyBreakdown,
    EnergyModelError,
    action_energy_table,
    app_time_s,
    comm_energy,
    frame_energy,
    host_energy,
    isp_energy,
    isp_time_s,
    load_preset,
    policy_overhead,
    sensor_energy,
    sensing_time_s,
)
from app.models import ACTIONS, Action, CommParams, ConfigError, FrameSpec, HardwarePreset, HostParams, SensorParams
from energy_oracle import IMX219_PI3, oracle_frame_energy

HD = FrameSpec(width_px=1280, height_px=720)


def test_imx219_key_frame_golden_values(preset):
    e = frame_energy(preset, HD, is_key=True)
    assert e.sensor_mj == pytest.approx(17.98337754, rel=1e-6)
    assert e.isp_mj == pytest.approx(175.312, rel=1e-6)
    assert e.host_mj == pytest.approx(1447.3056, rel=1e-6)
    assert e.comm_mj == pytest.approx(9.216, rel=1e-6)
    assert e.total_mj == pytest.approx(1649.81697754, rel=1e-6)


def test_imx219_isp_and_app_times(preset):
    assert isp_time_s(preset.isp, HD) == pytest.approx(0.119552, rel=1e-9)
    assert app_time_s(preset.host, HD, is_key=True) == pytest.approx(0.4608, rel=1e-9)
    assert app_time_s(preset.host, HD, is_key=False) == pytest.approx(0.110592, rel=1e-9)


def test_smallest_action_golden_value(preset):
    table = action_energy_table(preset, HD)
    assert table[Action.A4].total_mj == pytest.approx(60.43187777, rel=1e-6)


def test_sensor_active_power_from_resolution(preset):
    assert preset.sensor.active_power_mw == pytest.approx(197.2314784, rel=1e-12)


def test_energy_strictly_decreases_with_downsampling(preset):
    table = action_energy_table(preset, HD)
    totals = [table[a].total_mj for a in ACTIONS]
    assert all(a > b for a, b in zip(totals, totals[1:]))


def test_total_is_sum_of_components(preset):
    for a, e in action_energy_table(preset, HD).items():
        assert e.total_mj == e.sensor_mj + e.isp_mj + e.host_mj + e.comm_mj


def random_params(rng):
    return dict(
        sensor_mp=rng.uniform(2.5, 20.0), clock_hz=rng.uniform(6e6, 48e6), t_exp=rng.uniform(0.001, 0.05),
        p_sensor_idle=rng.uniform(10, 300), sensor_slope=rng.uniform(1, 20), sensor_offset=rng.uniform(10, 300),
        p_isp_active=rng.uniform(200, 3000), p_isp_idle=rng.uniform(10, 300),
        isp_slope=rng.uniform(0.01, 0.2), isp_offset=rng.uniform(0.001, 0.05),
        p_host_active=rng.uniform(500, 6000), p_host_idle=rng.uniform(50, 600),
        app_key_per_mp=rng.uniform(0.3, 1.0), app_flow_per_mp=rng.uniform(0.01, 0.29),
        k_comm=rng.uniform(0.5, 30),
    )


def preset_from(p):
    return HardwarePreset(
        sensor=dict(
            sensor_resolution_mp=p["sensor_mp"], clock_hz=p["clock_hz"], exposure_s=p["t_exp"],
            idle_power_mw=p["p_sensor_idle"], active_power_slope_mw_per_mp=p["sensor_slope"],
            active_power_offset_mw=p["sensor_offset"],
        ),
        isp=dict(
            active_power_mw=p["p_isp_active"], idle_power_mw=p["p_isp_idle"],
            isp_time_slope_s_per_mp=p["isp_slope"], isp_time_offset_s=p["isp_offset"],
        ),
        host=dict(
            active_power_mw=p["p_host_active"], idle_power_mw=p["p_host_idle"],
            app_time_key_s_per_mp=p["app_key_per_mp"], app_time_flow_s_per_mp=p["app_flow_per_mp"],
        ),
        comm=dict(mj_per_mp=p["k_comm"]),
    )


def random_frame(rng):
    return FrameSpec(width_px=int(rng.integers(16, 1920)), height_px=int(rng.integers(16, 1080)))


def components(e):
    return (e.sensor_mj, e.isp_mj, e.host_mj, e.comm_mj)


def test_matches_oracle_on_random_cases():
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(1000):
        p = random_params(rng)
        frame = random_frame(rng)
        is_key = bool(rng.integers(2))
        got = frame_energy(preset_from(p), frame, is_key)
        expected = oracle_frame_energy(frame.width_px, frame.height_px, is_key, **p)
        for g, x in zip((*components(got), got.total_mj), expected):
            worst = max(worst, abs(g - x) / abs(x))
    assert worst < 1e-9


def test_energy_strictly_increases_with_pixel_count():
    rng = np.random.default_rng(7)
    for _ in range(500):
        preset = preset_from(random_params(rng))
        small, large = random_frame(rng), random_frame(rng)
        if small.pixels == large.pixels:
            continue
        if small.pixels > large.pixels:
            small, large = large, small
        is_key = bool(rng.integers(2))
        assert frame_energy(preset, small, is_key).total_mj < frame_energy(preset, large, is_key).total_mj


def test_full_frame_costs_more_than_half_frame_for_any_parameters():
    rng = np.random.default_rng(8)
    for _ in range(500):
        preset = preset_from(random_params(rng))
        table = action_energy_table(preset, HD)
        assert table[Action.A1].total_mj > table[Action.A2].total_mj


def test_comm_energy_is_linear_in_pixels():
    rng = np.random.default_rng(9)
    for _ in range(500):
        comm = CommParams(mj_per_mp=rng.uniform(0.5, 30))
        w, h = int(rng.integers(8, 960)), int(rng.integers(8, 540))
        single = comm_energy(comm, FrameSpec(width_px=w, height_px=h))
        assert comm_energy(comm, FrameSpec(width_px=w, height_px=2 * h)) == 2 * single
        full = comm_energy(comm, FrameSpec(width_px=2 * w, height_px=2 * h))
        assert full / 4 == single


def test_scaling_power_parameters_scales_every_term():
    rng = np.random.default_rng(10)
    power_keys = (
        "p_sensor_idle", "sensor_slope", "sensor_offset", "p_isp_active", "p_isp_idle",
        "p_host_active", "p_host_idle", "k_comm",
    )
    for _ in range(200):
        p = random_params(rng)
        c = rng.uniform(0.1, 10.0)
        scaled = {k: (v * c if k in power_keys else v) for k, v in p.items()}
        frame, is_key = random_frame(rng), bool(rng.integers(2))
        base = frame_energy(preset_from(p), frame, is_key)
        got = frame_energy(preset_from(scaled), frame, is_key)
        for g, b in zip(components(got), components(base)):
            assert g == pytest.approx(c * b, rel=1e-12)


def test_doubling_clock_halves_sensor_active_term():
    rng = np.random.default_rng(11)
    for _ in range(200):
        p = random_params(rng)
        fast = dict(p, clock_hz=2 * p["clock_hz"])
        frame = random_frame(rng)
        slow_sensor, fast_sensor = preset_from(p).sensor, preset_from(fast).sensor
        idle = slow_sensor.idle_power_mw * slow_sensor.exposure_s
        slow_active = sensor_energy(slow_sensor, frame) - idle
        fast_active = sensor_energy(fast_sensor, frame) - fast_sensor.idle_power_mw * fast_sensor.exposure_s
        assert fast_active == pytest.approx(slow_active / 2, rel=1e-9)
        assert fast_sensor.idle_power_mw * fast_sensor.exposure_s == idle


def test_host_key_frame_active_term(preset):
    host, sensor, isp = preset.host, preset.sensor, preset.isp
    idle = host.idle_power_mw * (sensor.exposure_s + sensing_time_s(sensor, HD) + isp_time_s(isp, HD))
    active = host_energy(host, HD, sensor, isp, is_key=True) - idle
    assert active == pytest.approx(1382.4, rel=1e-12)
    flow_active = host_energy(host, HD, sensor, isp, is_key=False) - idle
    assert flow_active == pytest.approx(3000.0 * 0.12 * 0.9216, rel=1e-12)


def test_shipped_preset_matches_oracle_constants(preset):
    expected = oracle_frame_energy(1280, 720, True, **IMX219_PI3)
    assert frame_energy(preset, HD, True).total_mj == pytest.approx(expected[-1], rel=1e-12)


def test_frame_larger_than_sensor_is_rejected(preset):
    too_big = FrameSpec(width_px=4000, height_px=3000)
    with pytest.raises(EnergyModelError, match="exceeds sensor resolution"):
        sensor_energy(preset.sensor, too_big)
    with pytest.raises(EnergyModelError):
        frame_energy(preset, too_big, is_key=True)


def test_negative_app_time_is_rejected(preset):
    with pytest.raises(EnergyModelError):
        isp_energy(preset.isp, HD, preset.sensor, t_app_s=-0.1)


def test_non_positive_parameters_fail_validation():
    with pytest.raises(ValidationError):
        SensorParams(
            sensor_resolution_mp=8.0, clock_hz=0.0, exposure_s=0.02, idle_power_mw=141.8,
            active_power_slope_mw_per_mp=8.27, active_power_offset_mw=130.394,
        )


def test_flow_app_time_must_be_cheaper_than_key():
    with pytest.raises(ValidationError, match="app_time_flow_s_per_mp"):
        HostParams(app_time_key_s_per_mp=0.1, app_time_flow_s_per_mp=0.2)


def test_parameter_models_are_immutable(preset):
    with pytest.raises(ValidationError):
        preset.sensor.clock_hz = 1.0


def test_breakdown_addition_and_zero():
    a = EnergyBreakdown(1.0, 2.0, 3.0, 4.0)
    b = EnergyBreakdown(0.5, 0.5, 0.5, 0.5)
    assert (a + b).total_mj == pytest.approx(12.0)
    assert a + EnergyBreakdown.zero() == a


def test_policy_overhead_is_host_active_time(preset):
    e = policy_overhead(preset, 0.0009)
    assert e.host_mj == pytest.approx(2.7)
    assert e.total_mj == pytest.approx(2.7)
    with pytest.raises(EnergyModelError):
        policy_overhead(preset, -1.0)


def test_load_preset_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_preset(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_preset(bad)
    invalid = tmp_path / "invalid.json"
    invalid.write_text('{"name": "x", "sensor": {}, "isp": {}, "comm": {}}')
    with pytest.raises(ConfigError):
        load_preset(invalid)
