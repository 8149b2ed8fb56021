import numpy as np
import pytest

from components.oracle import OracleComponents
from exceptions import ConfigError
from exceptions import ShapeError
from metrics import mape
from plant_oracle import PlantOracle
from plant_oracle import make_profile
from scenario_reader import ScenarioReader
from solvers.algebraic import AlgebraicSolver
from solvers.dassl import DasslSolver
from solvers.ida import IdaSolver
from system import SystemConfig
from system import simulate
from topology import build_topology


@pytest.fixture
def topology():
    return build_topology(1, 1)


@pytest.fixture
def profile(topology):
    return make_profile(topology, 40, np.random.default_rng(3), constant=True)


@pytest.mark.parametrize(
    "mode, cls",
    [("algebraic", AlgebraicSolver), ("ida", IdaSolver), ("dassl", DasslSolver)],
)
def test_get_solver(mode, cls):
    solver = ScenarioReader.get_solver(mode)
    assert isinstance(solver, cls)
    assert solver.mode == mode


def test_get_solver_unsupported():
    with pytest.raises(ValueError, match="Unsupported"):
        ScenarioReader.get_solver("rk4")


def test_get_components(topology, tmp_path):
    assert isinstance(ScenarioReader.get_components("oracle", topology), OracleComponents)
    with pytest.raises(ValueError, match="Unsupported"):
        ScenarioReader.get_components("lookup", topology)
    with pytest.raises(ConfigError):
        ScenarioReader.get_components("surrogate", topology, str(tmp_path))


def test_negative_horizon_is_rejected(topology, profile):
    with pytest.raises(ValueError):
        simulate(topology, OracleComponents(topology), profile, SystemConfig(), -1)


def test_profile_must_match_topology(profile):
    bigger = build_topology(2, 1)
    with pytest.raises(ShapeError):
        simulate(bigger, OracleComponents(bigger), profile, SystemConfig(), 1)


@pytest.mark.parametrize("mode", ["algebraic", "ida", "dassl"])
def test_zero_horizon_records_initial_point(topology, profile, mode):
    trajectory = simulate(
        topology, OracleComponents(topology), profile, SystemConfig(mode=mode), 0
    )
    assert not trajectory.failed
    assert trajectory.mode == mode
    assert trajectory.t == [0.0]
    y0 = PlantOracle(topology).initial_state()
    np.testing.assert_allclose(trajectory.states[0], y0)
    assert trajectory.solve_stats.n_solves >= 1


def test_non_physical_start_ends_run_as_failure(topology, profile):
    y0 = PlantOracle(topology).initial_state()
    y0[0] = -1.0
    trajectory = simulate(topology, OracleComponents(topology), profile, SystemConfig(), 5, y0=y0)
    assert trajectory.failed
    assert len(trajectory) == 0
    assert trajectory.failure_reason


def test_lsq_is_used_in_dae_modes(topology, profile):
    trajectory = simulate(
        topology, OracleComponents(topology), profile, SystemConfig(mode="ida"), 0
    )
    assert trajectory.diagnostics[0]["lsq"] == 1.0
    trajectory = simulate(topology, OracleComponents(topology), profile, SystemConfig(), 0)
    assert trajectory.diagnostics[0]["lsq"] == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["algebraic", "ida", "dassl"])
def test_short_run_reaches_horizon(topology, profile, mode):
    trajectory = simulate(
        topology, OracleComponents(topology), profile, SystemConfig(mode=mode), 20
    )
    assert not trajectory.failed, trajectory.failure_reason
    assert trajectory.t[-1] == pytest.approx(20.0)
    assert np.all(np.diff(trajectory.t) > 0)
    assert np.all(trajectory.state_array()[:, : topology.n_hx] > 0)


@pytest.mark.slow
def test_algebraic_steps_respect_target_spacing(topology, profile):
    config = SystemConfig()
    trajectory = simulate(topology, OracleComponents(topology), profile, config, 30)
    steps = np.diff(trajectory.t)
    assert np.all(steps <= config.highres.dt_low + 1e-9)
    assert np.all(steps[:-1] >= min(config.dt_min, config.highres.dt_low) - 1e-9)


@pytest.mark.slow
def test_algebraic_and_ida_masses_agree(topology, profile):
    runs = {
        mode: simulate(
            topology, OracleComponents(topology), profile, SystemConfig(mode=mode), 20
        )
        for mode in ("algebraic", "ida")
    }
    assert not any(run.failed for run in runs.values())
    alg, ida = runs["algebraic"], runs["ida"]
    n_hx = topology.n_hx
    ida_mass = np.column_stack(
        [np.interp(alg.t, ida.t, ida.state_array()[:, k]) for k in range(n_hx)]
    )
    assert mape(alg.state_array()[:, :n_hx], ida_mass) < 5.0


@pytest.mark.parametrize("n_c, uses_lsq", [(8, False), (9, True)])
def test_least_squares_takes_over_above_ten_pressures(n_c, uses_lsq):
    topology = build_topology(n_c, 1)
    profile = make_profile(topology, 10, np.random.default_rng(4), constant=True)
    trajectory = simulate(topology, OracleComponents(topology), profile, SystemConfig(), 0)
    stats = trajectory.solve_stats
    assert topology.n_p == n_c + 2
    assert trajectory.diagnostics[0]["lsq"] == float(uses_lsq)
    if uses_lsq:
        assert stats.n_lsq == stats.n_solves > 0
        assert stats.n_powell == 0
    else:
        assert stats.n_powell > 0
        assert stats.n_lsq == stats.n_fallback
