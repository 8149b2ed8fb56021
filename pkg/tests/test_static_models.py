import numpy as np
import pytest

from static_models import COMPRESSOR_KIND
from static_models import VALVE_KIND
from static_models import StaticTrainConfig
from static_models import coefficient_targets
from static_models import compressor_eval
from static_models import fit_static
from static_models import load_static
from static_models import sample_compressor_data
from static_models import sample_valve_data
from static_models import save_static
from static_models import valve_eval

QUICK = StaticTrainConfig(hidden=8, layers=1, epochs=40, n_samples=128, lr=1e-2)


@pytest.fixture(scope="module")
def compressor():
    frame = sample_compressor_data(np.random.default_rng(0), QUICK.n_samples)
    model, history = fit_static(COMPRESSOR_KIND, frame, QUICK, np.random.default_rng(1))
    return model, history


@pytest.fixture(scope="module")
def valve():
    frame = sample_valve_data(np.random.default_rng(2), QUICK.n_samples)
    model, _ = fit_static(VALVE_KIND, frame, QUICK, np.random.default_rng(3))
    return model


def test_training_lowers_the_loss(compressor):
    _, history = compressor
    assert len(history) == QUICK.epochs
    assert history[-1]["loss"] < history[0]["loss"]


def test_zero_speed_gives_zero_flow(compressor):
    model, _ = compressor
    flow, h_out = compressor_eval(model, 7e5, 2.2e6, 3.6e5, 0.0)
    assert float(flow) == 0.0
    assert float(h_out) >= 3.6e5


def test_compressor_flow_is_linear_in_speed(compressor):
    model, _ = compressor
    speeds = np.array([10.0, 20.0, 40.0])
    flow, _ = compressor_eval(model, 7e5, 2.2e6, 3.6e5, speeds)
    assert flow.shape == (3,)
    np.testing.assert_allclose(flow / speeds, flow[0] / speeds[0])
    assert np.all(np.diff(flow) >= 0.0)


def test_compressor_rejects_negative_speed(compressor):
    model, _ = compressor
    with pytest.raises(ValueError):
        compressor_eval(model, 7e5, 2.2e6, 3.6e5, -1.0)


def test_valve_closed_or_reversed_gives_zero_flow(valve):
    closed, _ = valve_eval(valve, 2.2e6, 7e5, 2.8e5, 0.0)
    reverse, _ = valve_eval(valve, 7e5, 2.2e6, 2.8e5, 0.5)
    assert float(closed) == 0.0
    assert float(reverse) == 0.0


def test_valve_is_isenthalpic(valve):
    _, h_out = valve_eval(valve, np.array([2.0e6, 2.5e6]), 7e5, np.array([2.5e5, 2.9e5]), 0.4)
    np.testing.assert_array_equal(h_out, [2.5e5, 2.9e5])


def test_valve_rejects_opening_outside_unit_interval(valve):
    with pytest.raises(ValueError):
        valve_eval(valve, 2.2e6, 7e5, 2.8e5, 1.5)


def test_eval_checks_model_kind(compressor, valve):
    model, _ = compressor
    with pytest.raises(ValueError):
        valve_eval(model, 2.2e6, 7e5, 2.8e5, 0.5)
    with pytest.raises(ValueError):
        compressor_eval(valve, 7e5, 2.2e6, 3.6e5, 30.0)


def test_coefficient_targets_drop_idle_samples():
    frame = sample_compressor_data(np.random.default_rng(4), 50)
    frame.loc[:9, "speed"] = 0.0
    frame.loc[:9, "m"] = 0.0
    targets = coefficient_targets(COMPRESSOR_KIND, frame)
    assert len(targets) == 40
    assert np.all(targets["flow_per_rev"] > 0.0)
    with pytest.raises(ValueError):
        coefficient_targets("pump", frame)


def test_envelope_violations_are_counted(compressor):
    model, _ = compressor
    before = model.envelope_violations
    compressor_eval(model, 1e5, 9e6, 3.6e5, 30.0)
    assert model.envelope_violations == before + 1


def test_checkpoint_round_trip(tmp_path, valve):
    path = str(tmp_path / "valve.json")
    save_static(path, valve)
    restored = load_static(path)
    args = (np.array([2.0e6, 3.0e6]), 6e5, 2.6e5, np.array([0.3, 0.9]))
    np.testing.assert_allclose(valve_eval(restored, *args)[0], valve_eval(valve, *args)[0])


def test_config_validation():
    with pytest.raises(ValueError):
        StaticTrainConfig(hidden=0)
    with pytest.raises(ValueError):
        StaticTrainConfig(n_samples=1)
