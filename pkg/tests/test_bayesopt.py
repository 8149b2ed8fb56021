import numpy as np
import pandas as pd
import pytest

from bayesopt import Dimension
from bayesopt import Evaluation
from bayesopt import Normalization
from bayesopt import ParamSpace
from bayesopt import TuneConfig
from bayesopt import apply_parameters
from bayesopt import best_from_log
from bayesopt import design_space_grid
from bayesopt import expected_improvement
from bayesopt import normalization_from
from bayesopt import pareto_front
from bayesopt import pareto_mask
from bayesopt import propose
from bayesopt import sobol_points
from bayesopt import timed
from bayesopt import tune
from bayesopt import write_tune_artifacts
from dae import DASSL
from dae import IDA
from gaussian_process import GaussianProcess
from gaussian_process import RbfKernel
from system import ALGEBRAIC
from system import SystemConfig

QUICK = dict(n_candidates=256, n_restarts=2)


def _bowl(theta):
    """Smallest MAPE near eps_dt = 1e-2, cheaper at loose eps_soln"""
    mape = (np.log10(theta["eps_dt"]) + 2.0) ** 2 + 0.1
    seconds = 1.0 + 0.1 * -np.log10(theta["eps_soln"])
    return Evaluation(mape, seconds)


def test_expected_improvement_at_the_incumbent():
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.398942, abs=1e-6)


def test_expected_improvement_without_spread():
    assert expected_improvement(1.0, 0.0, 3.0) == pytest.approx(2.0)
    assert expected_improvement(4.0, 0.0, 3.0) == 0.0
    values = expected_improvement(np.array([0.0, 10.0]), np.array([1.0, 1e-3]), 0.0)
    assert values.shape == (2,)
    assert values[1] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, 0.0)


def test_pareto_mask():
    points = [(1.0, 10.0), (2.0, 5.0), (3.0, 1.0), (2.0, 20.0)]
    np.testing.assert_array_equal(pareto_mask(points), [True, True, True, False])
    front = pareto_front(np.array(points))
    assert front.shape == (3, 2)
    with pytest.raises(ValueError):
        pareto_mask(np.empty((0, 2)))


def test_pareto_front_skips_failed_rows():
    log = pd.DataFrame(
        {
            "MAPE_all": [1.0, 0.1, 2.0],
            "t_simulation": [1.0, 0.1, 0.5],
            "failed": [0, 1, 0],
        }
    )
    front = pareto_front(log)
    assert sorted(front["MAPE_all"]) == [1.0, 2.0]


def test_dimension_maps_log_uniformly():
    dim = Dimension("eps_soln", 1e-8, 1e-3)
    assert dim.to_unit(1e-8) == pytest.approx(0.0)
    assert dim.to_unit(1e-3) == pytest.approx(1.0)
    assert dim.from_unit(0.4) == pytest.approx(1e-6)
    assert dim.from_unit(2.0) == pytest.approx(1e-3)
    steps = Dimension("dassl_max_steps", 100.0, 10000.0, integer=True)
    assert steps.from_unit(0.5) == 1000.0
    with pytest.raises(ValueError):
        Dimension("x", 0.0, 1.0)


def test_space_per_mode():
    assert ParamSpace.for_mode(ALGEBRAIC).names == ["eps_dt", "eps_soln"]
    assert ParamSpace.for_mode(IDA).d == 5
    assert ParamSpace.for_mode(DASSL).d == 6
    with pytest.raises(ValueError):
        ParamSpace.for_mode("euler")


def test_tune_config_validation():
    with pytest.raises(ValueError):
        TuneConfig(budget=5, n_initial=10)
    with pytest.raises(ValueError):
        TuneConfig(n_initial=1, budget=1)
    with pytest.raises(ValueError):
        TuneConfig(w_mape=-1.0)


def test_normalization_over_initial_samples():
    config = TuneConfig()
    evaluations = [Evaluation(1.0, 10.0), Evaluation(3.0, 20.0), Evaluation(0.0, 0.0, True)]
    norm = normalization_from(evaluations, config)
    assert (norm.mape_lo, norm.mape_span) == (1.0, 2.0)
    assert (norm.time_lo, norm.time_span) == (10.0, 10.0)
    assert norm.objective(Evaluation(3.0, 20.0), config) == pytest.approx(1.0)
    assert norm.penalty == pytest.approx(2.0)
    assert norm.objective(evaluations[2], config) == norm.penalty


def test_normalization_with_identical_samples():
    norm = normalization_from([Evaluation(2.0, 5.0), Evaluation(2.0, 5.0)], TuneConfig())
    assert norm.mape_span == 1.0 and norm.time_span == 1.0
    assert norm.penalty == pytest.approx(2.0)
    assert isinstance(normalization_from([], TuneConfig()), Normalization)


def test_sobol_points_fill_the_cube():
    points = sobol_points(3, 64, np.random.default_rng(0))
    assert points.shape == (64, 3)
    assert np.all((points >= 0.0) & (points < 1.0))


def test_propose_skips_observed_points():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(6, 2))
    y = np.sum((X - 0.5) ** 2, axis=1)
    model = GaussianProcess(RbfKernel(1.0, 0.3, 1e-6)).fit(X, y)
    u = propose(model, ParamSpace.for_mode(ALGEBRAIC), float(np.min(y)), rng, X, 128)
    assert u.shape == (2,)
    assert np.all((u >= 0.0) & (u <= 1.0))
    assert np.min(np.linalg.norm(X - u, axis=1)) >= 1e-6


def test_budget_equal_to_initial_design_returns_best_sample():
    config = TuneConfig(budget=6, n_initial=6, **QUICK)
    result = tune(_bowl, ParamSpace.for_mode(ALGEBRAIC), config, np.random.default_rng(0))
    assert len(result.log) == 6
    best_row = result.log.iloc[int(np.argmin(result.log["objective"]))]
    assert result.best["eps_dt"] == pytest.approx(best_row["eps_dt"])
    assert result.best_objective == pytest.approx(best_row["objective"])


def test_tune_spends_the_budget():
    config = TuneConfig(budget=12, n_initial=5, refit_every=4, **QUICK)
    result = tune(_bowl, ParamSpace.for_mode(ALGEBRAIC), config, np.random.default_rng(1))
    log = result.log
    assert len(log) == 12
    assert list(log["iteration"]) == list(range(1, 13))
    assert list(log.columns[:3]) == ["iteration", "eps_dt", "eps_soln"]
    assert np.all(np.diff(log["best_objective"]) <= 0.0)
    assert result.best_objective == pytest.approx(log["objective"].min())
    assert len(result.pareto) >= 1


def test_failed_evaluations_get_the_penalty():
    def flaky(theta):
        if theta["eps_dt"] > 0.1:
            return Evaluation(float("nan"), 0.5, True, "step size collapsed")
        return _bowl(theta)

    config = TuneConfig(budget=10, n_initial=8, **QUICK)
    result = tune(flaky, ParamSpace.for_mode(ALGEBRAIC), config, np.random.default_rng(2))
    failed = result.log[result.log["failed"] == 1]
    assert len(failed) > 0
    assert np.all(failed["objective"] == result.normalization.penalty)
    assert result.log.loc[int(np.argmin(result.log["objective"])), "failed"] == 0


def test_timed_wraps_scalar_functions():
    evaluation = timed(lambda theta: theta["eps_dt"] * 2.0)({"eps_dt": 0.25})
    assert evaluation.mape == 0.5
    assert evaluation.time >= 0.0
    assert not evaluation.failed


def test_apply_parameters_casts_step_cap():
    config = apply_parameters(
        SystemConfig(mode=DASSL), {"eps_dt": 0.01, "dassl_max_steps": 250.0}
    )
    assert config.eps_dt == 0.01
    assert config.dassl_max_steps == 250
    assert isinstance(config.dassl_max_steps, int)


def test_design_space_grid_marks_best_point():
    config = TuneConfig(budget=8, n_initial=8, **QUICK)
    space = ParamSpace.for_mode(ALGEBRAIC)
    result = tune(_bowl, space, config, np.random.default_rng(3))
    best = best_from_log(result.log, space)
    grid = design_space_grid(result.log, space, best, n=5)
    assert len(grid) == 26
    assert list(grid["is_best"]).count(1) == 1
    assert grid["is_best"].iloc[-1] == 1
    assert grid["eps_dt"].iloc[-1] == pytest.approx(best["eps_dt"])
    assert grid["eps_dt"].min() == pytest.approx(1e-4)


def test_write_tune_artifacts(tmp_path):
    config = TuneConfig(budget=6, n_initial=6, **QUICK)
    result = tune(_bowl, ParamSpace.for_mode(ALGEBRAIC), config, np.random.default_rng(4))
    paths = write_tune_artifacts(str(tmp_path), ALGEBRAIC, result)
    names = sorted(p.rsplit("/", 1)[1] for p in paths)
    assert names == ["contour_algebraic.csv", "pareto_algebraic.csv", "tune_log_algebraic.csv"]
