import numpy as np
import pandas as pd
import pytest

from exceptions import ShapeError
from metrics import MAPE_CHANNELS
from metrics import channel_mape
from metrics import channel_scale
from metrics import mape
from metrics import mape_all
from metrics import parity_frame
from metrics import trajectory_mape
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS
from system import Trajectory
from topology import build_topology


def _frames(seed=0, rows=6):
    rng = np.random.default_rng(seed)
    return {
        name: pd.DataFrame(
            rng.uniform(1.0, 2.0, size=(rows, len(MAPE_CHANNELS))), columns=MAPE_CHANNELS
        )
        for name in ("Hc1", "He1")
    }


def test_mape_of_exact_prediction_is_zero():
    ref = np.array([1.0, -2.0, 4.0])
    assert mape(ref, ref) == 0.0


def test_mape_of_ten_percent_bias():
    ref = np.array([1.0, -2.0, 4.0])
    assert mape(1.1 * ref, ref) == pytest.approx(10.0)


def test_mape_floor_caps_near_zero_reference():
    assert mape([1e-3], [0.0]) == pytest.approx(100.0)
    assert mape([1e-3], [0.0], floor=1e-2) == pytest.approx(10.0)


def test_mape_validation():
    with pytest.raises(ShapeError):
        mape([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        mape([], [])


def test_channel_scale_keeps_zero_columns_finite():
    scale = channel_scale(np.array([[0.0, -3.0], [0.0, 2.0]]))
    assert list(scale) == [1.0, 3.0]


def test_mape_all_is_scale_invariant():
    ref = _frames()
    pred = {name: 1.1 * frame for name, frame in ref.items()}
    assert mape_all(pred, ref) == pytest.approx(10.0)
    ref_scaled = {name: 1e3 * frame for name, frame in ref.items()}
    pred_scaled = {name: 1e3 * frame for name, frame in pred.items()}
    assert mape_all(pred_scaled, ref_scaled) == pytest.approx(10.0)


def test_mape_all_checks_alignment():
    ref = _frames()
    with pytest.raises(ShapeError):
        mape_all({"Hc1": ref["Hc1"]}, ref)
    short = {name: frame.iloc[:3] for name, frame in ref.items()}
    with pytest.raises(ShapeError):
        mape_all(short, ref)


def test_channel_mape_names_every_channel():
    ref = _frames()
    out = channel_mape(ref, ref, channels=["M_r", "Q_a"])
    assert set(out) == {"Hc1.M_r", "Hc1.Q_a", "He1.M_r", "He1.Q_a"}
    assert all(value == 0.0 for value in out.values())


def test_parity_frame_layout():
    ref = _frames(rows=4)
    frame = parity_frame(ref, ref, "ida", channels=["M_r", "E_hx"])
    assert list(frame.columns) == ["solver", "channel", "step", "predicted", "reference"]
    assert len(frame) == 2 * 2 * 4
    assert set(frame["solver"]) == {"ida"}
    assert parity_frame({}, {}, "ida").empty


def _trajectory(topology, times):
    trajectory = Trajectory(topology, "algebraic")
    for t in times:
        outputs = np.full((topology.n_hx, len(OUTPUT_COLUMNS)), 1.0 + t)
        y = np.full(topology.state_dim, 1.0 + t)
        trajectory.record(
            t,
            1.0,
            y,
            outputs,
            np.zeros((topology.n_hx, len(INPUT_COLUMNS))),
            np.full(topology.n_p, 1e6),
        )
    return trajectory


def test_trajectory_mape_resamples_onto_reference_times():
    topology = build_topology(1, 1)
    trajectory = _trajectory(topology, [0.0, 2.0, 4.0])
    reference = {}
    for hx in topology.heat_exchangers:
        t = np.arange(8, dtype=float)
        frame = pd.DataFrame({col: 1.0 + t for col in OUTPUT_COLUMNS})
        frame["t"] = t
        reference[hx.name] = frame
    # outputs are linear in t, so interpolation matches the reference where covered
    assert trajectory_mape(trajectory, reference) == pytest.approx(0.0, abs=1e-12)


def test_trajectory_mape_needs_overlap():
    topology = build_topology(1, 1)
    trajectory = _trajectory(topology, [0.0, 1.0])
    reference = {
        hx.name: pd.DataFrame({"t": [5.0, 6.0], **{c: [1.0, 1.0] for c in OUTPUT_COLUMNS}})
        for hx in topology.heat_exchangers
    }
    with pytest.raises(ValueError):
        trajectory_mape(trajectory, reference)
