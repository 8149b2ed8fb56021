import numpy as np
import pandas as pd
import pytest

from corrector import CorrectorConfig
from corrector import CorrectorNet
from corrector import CorrectorPipeline
from corrector import CorrectorScaling
from corrector import apply_correction
from corrector import channel_names
from corrector import collect_training_pairs
from corrector import correction_frame
from corrector import corrector_forward
from corrector import ema
from corrector import gp_smooth
from corrector import load_corrector
from corrector import save_corrector
from corrector import train_corrector
from exceptions import ShapeError
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS

CONDENSERS = ["Hc1", "Hc2"]


def _frames(n=40, seed=0, shift=0.0):
    rng = np.random.default_rng(seed)
    frames = {}
    for name in CONDENSERS:
        data = {c: rng.uniform(0.0, 1.0, size=n) + i for i, c in enumerate(INPUT_COLUMNS)}
        data.update(
            {c: rng.uniform(0.0, 1.0, size=n) + 20.0 + i for i, c in enumerate(OUTPUT_COLUMNS)}
        )
        data["t"] = np.arange(n, dtype=float)
        frames[name] = pd.DataFrame(data)
    if shift:
        for frame in frames.values():
            frame["E_hx"] += shift
            frame["M_r"] += shift
    return frames


def _scaling(frames):
    return CorrectorScaling.from_frames(list(frames.values()), CONDENSERS)


def test_channel_order():
    assert channel_names(CONDENSERS) == ["Hc1.E_hx", "Hc2.E_hx", "Hc1.M_r", "Hc2.M_r"]


def test_net_output_is_bounded():
    net = CorrectorNet(6, 4, 8, 0.2, np.random.default_rng(0))
    phi = corrector_forward(np.random.default_rng(1).normal(size=(50, 6)) * 100.0, net)
    assert phi.shape == (50, 4)
    assert np.all(np.abs(phi) < 0.2)
    with pytest.raises(ShapeError):
        corrector_forward(np.zeros((1, 5)), net)


def test_ema_recursion():
    np.testing.assert_allclose(ema([0.0, 1.0, 1.0], alpha=0.5), [0.0, 0.5, 0.75])
    np.testing.assert_allclose(ema(np.full((5, 2), 3.0)), np.full((5, 2), 3.0))
    with pytest.raises(ValueError):
        ema([1.0], alpha=1.0)


def test_range_gate():
    corrected, skipped = apply_correction([0.5, -0.2], [0.1, 0.1])
    np.testing.assert_allclose(corrected, [0.6, -0.1])
    assert not skipped
    kept, skipped = apply_correction([0.9, 0.0], [0.2, 0.0])
    np.testing.assert_allclose(kept, [0.9, 0.0])
    assert skipped
    with pytest.raises(ShapeError):
        apply_correction([0.0], [0.0, 0.0])


def test_gp_smooth_keeps_constant_series():
    times = np.arange(10.0)
    series = np.full((10, 2), 0.07)
    np.testing.assert_allclose(gp_smooth(times, series), series, atol=1e-12)


def test_gp_smooth_validation():
    with pytest.raises(ValueError):
        gp_smooth([0.0], np.zeros((1, 2)))
    with pytest.raises(ValueError):
        gp_smooth([0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        gp_smooth([0.0, 1.0], np.zeros((3, 2)))


def test_gp_smooth_damps_noise():
    rng = np.random.default_rng(0)
    times = np.arange(200.0)
    series = 0.05 + 0.02 * rng.normal(size=(200, 1))
    config = CorrectorConfig(gp_length=50.0)
    smooth = gp_smooth(times, series, config)
    assert np.std(smooth) < 0.5 * np.std(series)


def test_scaling_channels_invert():
    frames = _frames()
    scaling = _scaling(frames)
    outputs = np.stack([frames[n][OUTPUT_COLUMNS].to_numpy()[:5] for n in CONDENSERS], axis=-2)
    channels = scaling.channels(outputs)
    assert channels.shape == (5, 4)
    energy, mass = scaling.physical(channels)
    np.testing.assert_allclose(energy, outputs[..., OUTPUT_COLUMNS.index("E_hx")])
    np.testing.assert_allclose(mass, outputs[..., OUTPUT_COLUMNS.index("M_r")])
    assert scaling.d_in == 34


def test_collect_training_pairs_shapes():
    predicted, bench = _frames(seed=1), _frames(seed=2)
    scaling = _scaling(predicted)
    pairs = collect_training_pairs(predicted, bench, scaling, start=5, length=20)
    assert len(pairs) == 20
    assert pairs.z_in.shape == (20, 34)
    assert pairs.m_bench.shape == (20, 4)
    np.testing.assert_allclose(pairs.t, np.arange(5.0, 25.0))
    empty = collect_training_pairs(predicted, bench, scaling, start=5, length=0)
    assert len(empty) == 0


def test_collect_training_pairs_needs_full_segment():
    predicted, bench = _frames(n=20), _frames(n=40)
    with pytest.raises(ValueError):
        collect_training_pairs(predicted, bench, _scaling(bench), start=10, length=20)


def test_training_removes_a_constant_bias():
    predicted = _frames(seed=3)
    bench = _frames(seed=3, shift=0.05)
    scaling = _scaling(bench)
    pairs = collect_training_pairs(predicted, bench, scaling, start=0, length=40)
    config = CorrectorConfig(hidden=8, lr=1e-2)
    result = train_corrector(pairs, config, np.random.default_rng(0), epochs=200)
    assert not result.diverged
    assert len(result.history) == 200
    assert result.final_loss < result.initial_loss


def test_perfect_prediction_learns_a_vanishing_correction():
    frames = _frames(seed=4)
    scaling = _scaling(frames)
    pairs = collect_training_pairs(frames, frames, scaling, start=0, length=40)
    config = CorrectorConfig(hidden=8, lr=3e-3)
    result = train_corrector(pairs, config, np.random.default_rng(1), epochs=3000)
    phi = corrector_forward(pairs.z_in, result.net)
    assert np.max(np.abs(phi)) < 1e-3


def test_trained_correction_lowers_channel_error():
    predicted = _frames(seed=5)
    bench = _frames(seed=5, shift=0.05)
    scaling = _scaling(bench)
    pairs = collect_training_pairs(predicted, bench, scaling, start=0, length=40)
    config = CorrectorConfig(hidden=8, lr=1e-2)
    result = train_corrector(pairs, config, np.random.default_rng(2), epochs=500)
    corrected = pairs.m_pred + corrector_forward(pairs.z_in, result.net)
    raw_mse = np.mean(np.sum((pairs.m_pred - pairs.m_bench) ** 2, axis=-1))
    corrected_mse = np.mean(np.sum((corrected - pairs.m_bench) ** 2, axis=-1))
    assert corrected_mse <= raw_mse
    assert corrected_mse == pytest.approx(result.final_loss, rel=1e-9)


def test_training_needs_records():
    predicted = _frames()
    scaling = _scaling(predicted)
    pairs = collect_training_pairs(predicted, predicted, scaling, 0, 0)
    with pytest.raises(ValueError):
        train_corrector(pairs, CorrectorConfig(), np.random.default_rng(0))


def test_pipeline_smooths_and_records():
    frames = _frames()
    scaling = _scaling(frames)
    net = CorrectorNet(scaling.d_in, scaling.n_channels, 8, 0.2, np.random.default_rng(0))
    pipeline = CorrectorPipeline(net, scaling, CorrectorConfig(gp_window=8))
    for k in range(12):
        inputs = np.stack([frames[n][INPUT_COLUMNS].to_numpy()[k] for n in CONDENSERS])
        outputs = np.stack([frames[n][OUTPUT_COLUMNS].to_numpy()[k] for n in CONDENSERS])
        record = pipeline.step(float(k), inputs, outputs)
        assert record.phi_smooth.shape == (4,)
        if not record.skipped:
            np.testing.assert_allclose(record.m_corr, record.m_pred + record.phi_smooth)
    assert len(pipeline.records) == 12
    assert len(pipeline.times) == 12
    assert pipeline.skipped == sum(r.skipped for r in pipeline.records)

    pipeline.step(11.0, inputs, outputs)
    assert len(pipeline.times) == 12

    frame = correction_frame(pipeline.records, CONDENSERS)
    assert len(frame) == 13 * 4
    assert frame["bench"].isna().all()


def test_checkpoint_round_trip(tmp_path):
    frames = _frames()
    scaling = _scaling(frames)
    net = CorrectorNet(scaling.d_in, scaling.n_channels, 8, 0.2, np.random.default_rng(0))
    path = str(tmp_path / "corrector.json")
    save_corrector(path, net, scaling)
    restored, restored_scaling = load_corrector(path)
    z = np.random.default_rng(1).normal(size=(3, scaling.d_in))
    np.testing.assert_allclose(corrector_forward(z, restored), corrector_forward(z, net))
    assert restored_scaling.condensers == CONDENSERS


def test_config_validation():
    with pytest.raises(ValueError):
        CorrectorConfig(ema_alpha=1.0)
    with pytest.raises(ValueError):
        CorrectorConfig(gp_window=1)
    assert CorrectorConfig(full_epochs=True).training_epochs == 500_000
