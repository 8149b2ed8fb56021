import numpy as np
import pytest

from artifacts import read_schema_header
from artifacts import read_versioned_csv
from components.oracle import OracleComponents
from exceptions import ShapeError
from nonlinear import LEAST_SQUARES
from nonlinear import POWELL
from nonlinear import SolveReport
from plant_oracle import DEFAULT_PARAMETERS
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS
from plant_oracle import PlantOracle
from plant_oracle import compressor_law
from plant_oracle import make_profile
from plant_oracle import mix_enthalpy
from plant_oracle import valve_law
from system import DIAGNOSTIC_COLUMNS
from system import HighResConfig
from system import JunctionState
from system import SolveStats
from system import SystemConfig
from system import Trajectory
from system import actuation_segments
from system import adapt_dt_rk45
from system import detect_jumps
from system import dt_from_error
from system import highres_mask
from system import initial_pressures
from system import junction_flows
from system import pressure_residuals
from system import write_trajectory
from topology import build_topology


def _constant_profile(topology, n=40, seed=0):
    return make_profile(topology, n, np.random.default_rng(seed), constant=True)


def test_dt_from_error_reference_point():
    eps, dt0 = 1e-3, 1.0
    assert dt_from_error(0.6 * eps * dt0, dt0, eps, 0.1, 7.5) == pytest.approx(2.5)
    assert dt_from_error(0.6 * eps * dt0 / 16, dt0, eps, 0.1, 7.5) == pytest.approx(5.0)


def test_dt_from_error_clamps():
    assert dt_from_error(1e-12, 1.0, 1e-3, 0.1, 7.5) == 7.5
    assert dt_from_error(1e3, 1.0, 1e-3, 0.1, 7.5) == 0.1
    assert dt_from_error(0.0, 1.0, 1e-3, 0.1, 7.5) == 7.5
    assert dt_from_error(float("nan"), 1.0, 1e-3, 0.1, 7.5) == 0.1


def test_dt_from_error_validation():
    with pytest.raises(ValueError):
        dt_from_error(1e-3, 0.0, 1e-3, 0.1, 7.5)
    with pytest.raises(ValueError):
        dt_from_error(1e-3, 1.0, 1e-3, 8.0, 7.5)


def test_adapt_dt_rk45_calls_estimate_with_dt0():
    seen = []

    def estimate(dt):
        seen.append(dt)
        return 0.6 * 1.1e-3 * dt

    assert adapt_dt_rk45(estimate, 2.0, 1.1e-3) == pytest.approx(2.5)
    assert seen == [2.0]
    assert adapt_dt_rk45(0.0, 2.0, 1.1e-3) == 7.5


def test_detect_jumps():
    signal = np.array([0.0, 0.0, 10.0, 10.0, 3.0, 4.0])
    assert list(detect_jumps(signal, 5.0)) == [2, 4]
    two_columns = np.column_stack([signal, np.zeros_like(signal)])
    two_columns[5, 1] = 6.0
    assert list(detect_jumps(two_columns, 5.0)) == [2, 4, 5]
    with pytest.raises(ValueError):
        detect_jumps([1.0], 5.0)


def test_highres_mask_window_around_jump():
    signal = np.zeros(300)
    signal[100:] = 10.0
    mask = highres_mask(signal, HighResConfig())
    assert list(mask.jumps) == [100]
    assert list(np.flatnonzero(mask.mask)) == list(range(95, 151))
    assert mask.target_at(100) == 2.5
    assert mask.target_at(10) == 7.5
    assert mask.target_at(-4) == 7.5
    assert mask.next_change(0) == 95
    assert mask.next_change(95) == 151
    assert mask.next_change(151) is None


def test_highres_mask_clips_at_profile_edges():
    signal = np.zeros(20)
    signal[2:] = 10.0
    mask = highres_mask(signal, HighResConfig(n_pre=5, n_post=5))
    assert list(np.flatnonzero(mask.mask)) == list(range(0, 8))


def test_highres_config_validation():
    with pytest.raises(ValueError):
        HighResConfig(tau=0.0)
    with pytest.raises(ValueError):
        HighResConfig(n_pre=-1)
    with pytest.raises(ValueError):
        HighResConfig(dt_high=0.0)


def test_system_config_validation():
    with pytest.raises(ValueError, match="Unsupported"):
        SystemConfig(mode="rk4")
    with pytest.raises(ValueError):
        SystemConfig(eps_dt=0.0)
    with pytest.raises(ValueError):
        SystemConfig(h_min=1.0, h_max=0.5)
    with pytest.raises(ValueError):
        SystemConfig(p_liquid0=4e5, p_suction0=5e5)


def test_dae_config_carries_mode_and_tolerances():
    dae = SystemConfig(mode="ida", eps_soln=1e-5).dae_config()
    assert dae.mode == "ida"
    assert dae.rtol == dae.atol == 1e-5


def test_initial_pressures_layout():
    topology = build_topology(2, 1)
    p = initial_pressures(topology, SystemConfig())
    assert list(p) == [2.5e6, 2.5e6, 2.5e6, 5e5]


def _idle_junction(topology):
    oracle = PlantOracle(topology)
    values, _ = oracle.exchanger_outputs(
        oracle.initial_state(),
        np.full(topology.n_hx, 300.0),
        np.full(topology.n_hx, 0.4),
        np.full(topology.n_hx, 3e5),
    )
    junction = JunctionState(
        p_first=values[:, OUTPUT_COLUMNS.index("p_1")],
        p_last=values[:, OUTPUT_COLUMNS.index("p_N")],
        h_out=values[:, OUTPUT_COLUMNS.index("h_N")],
        speeds=np.zeros(topology.n_c),
        openings=np.zeros(topology.n_v),
    )
    p = np.concatenate(
        [junction.p_first[: topology.n_c], [junction.p_last[0]], [junction.p_last[-1]]]
    )
    return junction, p


def test_pressure_residuals_vanish_with_idle_actuators():
    topology = build_topology(1, 1)
    components = OracleComponents(topology)
    junction, p = _idle_junction(topology)
    residual = pressure_residuals(p, junction, topology, components)
    assert residual.shape == (topology.n_p,)
    np.testing.assert_allclose(residual, 0.0, atol=1e-12)


def test_junction_densities_use_mixed_enthalpies():
    topology = build_topology(2, 2)
    p_first = np.array([2.2e6, 2.1e6, 7.0e5, 7.5e5])
    junction = JunctionState(
        p_first=p_first,
        p_last=0.99 * p_first,
        h_out=np.array([2.7e5, 2.9e5, 3.6e5, 3.9e5]),
        speeds=np.array([45.0, 50.0]),
        openings=np.array([0.5, 0.4]),
    )
    p = np.array([2.3e6, 2.25e6, 1.9e6, 5.0e5])
    flows = junction_flows(p, junction, topology, OracleComponents(topology))

    k = DEFAULT_PARAMETERS.k_outlet
    h_liq = mix_enthalpy(k * (junction.p_last[:2] - p[2]), junction.h_out[:2])
    h_suct = mix_enthalpy(k * (junction.p_last[2:] - p[3]), junction.h_out[2:])
    assert h_liq != pytest.approx(2.8e5, rel=1e-6)
    assert h_suct != pytest.approx(3.75e5, rel=1e-6)
    comp_flow, comp_h_out = compressor_law(p[3], p[:2], h_suct, junction.speeds)
    valve_flow, _ = valve_law(p[2], p_first[2:], h_liq, junction.openings)
    np.testing.assert_allclose(flows.compressor_flow, comp_flow, rtol=1e-12)
    np.testing.assert_allclose(flows.compressor_h_out, comp_h_out, rtol=1e-12)
    np.testing.assert_allclose(flows.valve_flow, valve_flow, rtol=1e-12)
    assert flows.h_liq == pytest.approx(h_liq)
    assert flows.h_suct == pytest.approx(h_suct)


def test_pressure_residuals_are_scaled_flow_errors():
    topology = build_topology(1, 1)
    components = OracleComponents(topology)
    junction, p = _idle_junction(topology)
    p[0] += 1e5
    residual = pressure_residuals(p, junction, topology, components, m_scale=0.01)
    expected = -DEFAULT_PARAMETERS.k_inlet * 1e5 / 0.01
    assert residual[0] == pytest.approx(expected)
    np.testing.assert_allclose(residual[1:], 0.0, atol=1e-12)


def test_pressure_residuals_shape_check():
    topology = build_topology(1, 1)
    junction, p = _idle_junction(topology)
    with pytest.raises(ShapeError):
        pressure_residuals(p[:2], junction, topology, OracleComponents(topology))


def test_solve_stats():
    stats = SolveStats()
    assert stats.fraction_within(10) == 1.0
    x = np.zeros(2)
    stats.record(SolveReport(x, 0.0, 4, True, POWELL))
    stats.record(SolveReport(x, 0.0, 30, True, LEAST_SQUARES))
    assert stats.n_solves == 2
    assert stats.n_powell == 1 and stats.n_lsq == 1
    assert stats.fraction_within(10) == 0.5
    summary = stats.as_dict()
    assert summary["evals_max"] == 30
    assert summary["pressure_solves"] == 2


def test_actuation_segments_split_on_jumps():
    topology = build_topology(1, 1)
    profile = _constant_profile(topology, n=20)
    mask = highres_mask(profile, HighResConfig(n_pre=5, n_post=50))
    assert actuation_segments(profile, mask, 10.0) == [(0.0, 10.0, 0)]

    profile.speeds[5:] += 10.0
    mask = highres_mask(profile, HighResConfig(n_pre=5, n_post=50))
    assert actuation_segments(profile, mask, 10.0) == [(0.0, 5.0, 0), (5.0, 10.0, 5)]


def _trajectory(topology, rows=3):
    trajectory = Trajectory(topology, "algebraic")
    rng = np.random.default_rng(4)
    for k in range(rows):
        outputs = rng.uniform(1.0, 2.0, size=(topology.n_hx, len(OUTPUT_COLUMNS)))
        y = np.concatenate(
            [
                outputs[:, OUTPUT_COLUMNS.index("M_r")],
                outputs[:, OUTPUT_COLUMNS.index("E_hx")],
            ]
        )
        trajectory.record(
            float(k),
            1.0,
            y,
            outputs,
            rng.uniform(size=(topology.n_hx, len(INPUT_COLUMNS))),
            rng.uniform(5e5, 2e6, size=topology.n_p),
            h_used=1.0,
        )
    return trajectory


def test_trajectory_rejects_non_increasing_time():
    topology = build_topology(1, 1)
    trajectory = _trajectory(topology, rows=2)
    row = trajectory.outputs[-1]
    with pytest.raises(ValueError):
        trajectory.record(
            1.0, 1.0, trajectory.states[-1], row, trajectory.inputs[-1], trajectory.pressures[-1]
        )


def test_trajectory_frame_columns_and_reload():
    topology = build_topology(2, 1)
    trajectory = _trajectory(topology)
    frame = trajectory.to_frame()
    assert list(frame.columns[:2]) == ["t", "dt"]
    assert {"Hc1.M_r", "Hc2.E_hx", "He1.Q_a", "He1.in.m_r_in"} <= set(frame.columns)
    for node in topology.pressure_nodes:
        assert node in frame.columns
    for name in DIAGNOSTIC_COLUMNS:
        assert name in frame.columns
    assert frame["h_used"].tolist() == [1.0, 1.0, 1.0]
    assert np.isnan(frame["order"]).all()

    reloaded = Trajectory.from_frame(frame, topology, "algebraic")
    assert reloaded.t == trajectory.t
    np.testing.assert_allclose(reloaded.state_array(), trajectory.state_array())
    np.testing.assert_allclose(reloaded.pressures, trajectory.pressures)


def test_trajectory_failure_marks_step():
    topology = build_topology(1, 1)
    trajectory = _trajectory(topology, rows=2)
    trajectory.fail("diverged", t=1.5)
    assert trajectory.failed
    assert trajectory.failure_step == 2
    assert trajectory.failure_t == 1.5


def test_hx_frames_resample():
    topology = build_topology(1, 1)
    trajectory = _trajectory(topology)
    frames = trajectory.hx_frames(times=np.array([0.5, 1.5]))
    assert set(frames) == {hx.name for hx in topology.heat_exchangers}
    frame = next(iter(frames.values()))
    assert list(frame.columns) == INPUT_COLUMNS + OUTPUT_COLUMNS + ["t"]
    expected = 0.5 * (trajectory.outputs[0][0, 0] + trajectory.outputs[1][0, 0])
    assert frame["p_1"].iloc[0] == pytest.approx(expected)


def test_write_trajectory(tmp_path):
    topology = build_topology(1, 1)
    path = write_trajectory(str(tmp_path / "run.csv"), _trajectory(topology))
    assert read_schema_header(path)["schema"] == "trajectory"
    frame = read_versioned_csv(path, "trajectory")
    assert len(frame) == 3
