import json
import os

import numpy as np
import pytest

from artifacts import read_schema_header
from artifacts import read_versioned_csv
from exceptions import StepFailure
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS
from plant_oracle import ActuationProfile
from plant_oracle import ActuationSample
from plant_oracle import PlantOracle
from plant_oracle import air_side
from plant_oracle import column_statistics
from plant_oracle import compressor_law
from plant_oracle import generate_dataset
from plant_oracle import make_profile
from plant_oracle import mix_enthalpy
from plant_oracle import property_eval
from plant_oracle import valve_law
from topology import build_topology


def _sample(topology, speed=45.0, opening=0.5):
    n_hx = topology.n_hx
    air_temp = np.array([297.0] * topology.n_c + [303.0] * topology.n_v)
    air_flow = np.array([0.3] * topology.n_c + [0.5] * topology.n_v)
    return ActuationSample(
        speeds=np.full(topology.n_c, speed),
        openings=np.full(topology.n_v, opening),
        air_temp=air_temp,
        air_flow=air_flow,
        humidity=np.full(n_hx, 0.5),
        ambient_pressure=101325.0,
    )


def test_property_eval_clamps_outside_envelope():
    inside = property_eval(1.5e6, 3.0e5)
    assert not inside.clamped
    assert float(inside.T) == pytest.approx(300.0)
    assert float(inside.rho) == pytest.approx(200.0)
    assert property_eval(1e4, 3.0e5).clamped


def test_compressor_at_zero_speed_moves_nothing():
    flow, _ = compressor_law(7e5, 2.2e6, 3.6e5, 0.0)
    assert float(flow) == 0.0


def test_compressor_flow_rises_with_speed():
    slow, _ = compressor_law(7e5, 2.2e6, 3.6e5, 30.0)
    fast, h_out = compressor_law(7e5, 2.2e6, 3.6e5, 60.0)
    assert float(fast) == pytest.approx(2.0 * float(slow))
    assert float(h_out) > 3.6e5


def test_valve_blocks_reverse_and_closed_flow():
    reverse, _ = valve_law(7e5, 2.2e6, 2.8e5, 0.5)
    closed, _ = valve_law(2.2e6, 7e5, 2.8e5, 0.0)
    forward, h_out = valve_law(2.2e6, 7e5, 2.8e5, 0.5)
    assert float(reverse) == 0.0
    assert float(closed) == 0.0
    assert float(forward) > 0.0
    assert float(h_out) == pytest.approx(2.8e5)


def test_air_side_without_air_flow():
    q_a, t_out = air_side(np.array([310.0]), np.array([300.0]), np.array([0.0]), 400.0, 1006.0)
    assert q_a[0] == 0.0
    assert t_out[0] == 300.0


def test_air_side_sign_convention():
    q_a, t_out = air_side(np.array([310.0]), np.array([300.0]), np.array([0.3]), 400.0, 1006.0)
    assert q_a[0] > 0.0
    assert 300.0 < t_out[0] < 310.0


def test_mix_enthalpy_ignores_reverse_flows():
    assert mix_enthalpy(np.array([1.0, 3.0]), np.array([2.0, 6.0])) == pytest.approx(5.0)
    assert mix_enthalpy(np.array([-1.0, 2.0]), np.array([9.0, 4.0])) == pytest.approx(4.0)
    assert mix_enthalpy(np.zeros(2), np.array([1.0, 3.0])) == pytest.approx(2.0)


@pytest.mark.parametrize("n_c,n_v", [(1, 1), (2, 1), (3, 2)])
def test_mass_rates_telescope_to_zero(n_c, n_v):
    topology = build_topology(n_c, n_v)
    oracle = PlantOracle(topology)
    snapshot = oracle.evaluate(oracle.initial_state(), _sample(topology))
    scale = np.max(np.abs(snapshot.m_in))
    assert abs(np.sum(snapshot.mass_rate)) <= 1e-9 * max(scale, 1.0)
    assert np.all(snapshot.compressor_flow > 0)


def test_actuators_off_hold_mass():
    topology = build_topology(1, 1)
    oracle = PlantOracle(topology)
    snapshot = oracle.evaluate(oracle.initial_state(), _sample(topology, 0.0, 0.0))
    np.testing.assert_allclose(snapshot.mass_rate, 0.0, atol=1e-12)
    np.testing.assert_array_equal(snapshot.compressor_flow, [0.0])
    np.testing.assert_array_equal(snapshot.valve_flow, [0.0])


def test_evaluate_rejects_non_positive_mass():
    topology = build_topology(1, 1)
    oracle = PlantOracle(topology)
    y = oracle.initial_state()
    y[0] = -1.0
    with pytest.raises(StepFailure):
        oracle.evaluate(y, _sample(topology))


def test_make_profile_shapes_and_ranges():
    topology = build_topology(2, 3)
    profile = make_profile(topology, 1200, np.random.default_rng(0))
    assert profile.speeds.shape == (1200, 2)
    assert profile.openings.shape == (1200, 3)
    assert profile.air_temp.shape == (1200, 5)
    assert np.all((profile.speeds >= 30.0) & (profile.speeds <= 60.0))
    assert np.all((profile.openings >= 0.35) & (profile.openings <= 0.65))
    assert len(np.unique(profile.speeds[:, 0])) > 1


def test_constant_profile_never_jumps():
    profile = make_profile(build_topology(1, 1), 800, np.random.default_rng(1), constant=True)
    assert len(np.unique(profile.speeds)) == 1
    assert len(np.unique(profile.openings)) == 1


def test_profile_zero_order_hold_lookup():
    profile = make_profile(build_topology(1, 1), 10, np.random.default_rng(2))
    assert profile.index_at(0.0) == 0
    assert profile.index_at(2.999) == 2
    assert profile.index_at(3.0) == 3
    assert profile.index_at(1e6) == 9
    assert profile.control_signals().shape == (10, 2)


def test_profile_frame_keeps_columns():
    profile = make_profile(build_topology(2, 1), 20, np.random.default_rng(3))
    restored = ActuationProfile.from_frame(profile.to_frame())
    np.testing.assert_allclose(restored.speeds, profile.speeds)
    np.testing.assert_allclose(restored.humidity, profile.humidity)
    assert restored.dt == profile.dt


def test_profile_validation():
    good = make_profile(build_topology(1, 1), 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        ActuationProfile(
            good.speeds,
            good.openings + 1.0,
            good.air_temp,
            good.air_flow,
            good.humidity,
            good.ambient_pressure,
        )


def test_column_statistics_widens_constant_columns():
    topology = build_topology(1, 1)
    profile = make_profile(topology, 40, np.random.default_rng(4))
    frames = generate_dataset(topology, profile, 30)
    stats = column_statistics(list(frames.values()))
    assert stats["P_amb"]["max"] - stats["P_amb"]["min"] == pytest.approx(1.0)


def test_generate_dataset_rejects_short_horizon():
    topology = build_topology(1, 1)
    profile = make_profile(topology, 40, np.random.default_rng(0))
    with pytest.raises(ValueError):
        generate_dataset(topology, profile, 10, required_window=30)


def test_generate_dataset_writes_tables_and_sidecars(tmp_path):
    topology = build_topology(2, 1)
    profile = make_profile(topology, 60, np.random.default_rng(5))
    out_dir = str(tmp_path / "data")
    frames = generate_dataset(topology, profile, 40, out_dir=out_dir)

    assert sorted(frames) == ["Hc1", "Hc2", "He1"]
    frame = frames["Hc1"]
    assert list(frame.columns[:17]) == INPUT_COLUMNS + OUTPUT_COLUMNS
    assert len(frame) == 41

    path = os.path.join(out_dir, "Hc1.csv")
    assert read_schema_header(path)["schema"] == "hx_dataset"
    np.testing.assert_allclose(
        read_versioned_csv(path)["M_r"].to_numpy(), frame["M_r"].to_numpy(), rtol=1e-9
    )
    with open(os.path.join(out_dir, "condenser.json")) as fh:
        sidecar = json.load(fh)
    assert sidecar["sample_period"] == 1.0
    assert set(sidecar["rate_scale"]) == {"Mdot", "Edot"}
    assert os.path.exists(os.path.join(out_dir, "evaporator.json"))


def test_energy_change_matches_boundary_flux_integral():
    topology = build_topology(1, 1)
    profile = make_profile(topology, 40, np.random.default_rng(6), constant=True)
    oracle = PlantOracle(topology)
    y0 = oracle.initial_state()
    run = oracle.integrate(y0, profile, 20)
    n_hx = topology.n_hx

    rates = np.array([s.m_in * s.h_in - s.m_out * s.h_out - s.q_a for s in run.snapshots])
    integral = profile.dt * (np.sum(rates, axis=0) - 0.5 * (rates[0] + rates[-1]))
    change = run.states[-1, n_hx:] - y0[n_hx:]
    # trapezoid error is -(1/12) sum of second differences of the sampled rates
    curvature = np.sum(np.abs(np.diff(rates, n=2, axis=0)), axis=0)
    bound = 0.5 * curvature + 1e-9 * np.abs(y0[n_hx:])
    assert np.all(np.abs(change - integral) <= bound)
    np.testing.assert_allclose(run.energy_flux[-1], integral, rtol=1e-9, atol=1e-9)


def test_compressor_density_uses_mixed_suction_enthalpy():
    topology = build_topology(1, 2)
    oracle = PlantOracle(topology)
    y = oracle.initial_state()
    y[topology.n_hx + 2] *= 1.03
    act = _sample(topology)
    snap = oracle.evaluate(y, act)

    h_suct = mix_enthalpy(snap.m_out[1:], snap.h_out[1:])
    assert h_suct != pytest.approx(float(np.mean(snap.h_out[1:])), rel=1e-6)
    flow, h_out = compressor_law(snap.p_suct, snap.p_dis, h_suct, act.speeds)
    np.testing.assert_allclose(snap.compressor_flow, flow, rtol=1e-6)
    np.testing.assert_allclose(snap.compressor_h_out, h_out, rtol=1e-6)
    h_liq = mix_enthalpy(snap.m_out[:1], snap.h_out[:1])
    np.testing.assert_allclose(snap.h_in[1:], h_liq, rtol=1e-9)


@pytest.mark.slow
def test_closed_cycle_conserves_total_mass_over_long_run():
    topology = build_topology(2, 2)
    profile = make_profile(topology, 5000, np.random.default_rng(8))
    oracle = PlantOracle(topology)
    y0 = oracle.initial_state()
    run = oracle.integrate(y0, profile, 5000, record=False)
    total = np.sum(run.states[:, : topology.n_hx], axis=1)
    assert np.max(np.abs(total - total[0])) / total[0] < 1e-8
