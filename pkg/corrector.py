"""
System-level bias corrector for the condenser mass and energy channels.

A small sigmoid MLP maps the concatenated normalized condenser inputs and
outputs to bounded corrections. Training pairs a prediction run with the plant
benchmark over a fixed segment; at deployment the raw corrections are smoothed
by GP regression (sliding window) and then an exponential moving average, and
are applied only when every corrected channel stays inside [-1, 1].
"""

import logging
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
import pandas as pd

from artifacts import write_versioned_csv
from exceptions import NonFiniteError
from exceptions import ShapeError
from gaussian_process import GaussianProcess
from gaussian_process import RbfKernel
from nn_core.checkpoint import load_into
from nn_core.checkpoint import read_container
from nn_core.checkpoint import save_weights
from nn_core.layers import MLP
from nn_core.layers import Module
from nn_core.layers import constrain_tanh
from nn_core.optim import Adam
from nn_core.optim import clip_gradients
from nn_core.tape import Tensor
from nn_core.tape import as_tensor
from nn_core.tape import backward
from nn_core.tape import no_grad
from pinode import Normalizer
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS
from plant_oracle import column_statistics

logger = logging.getLogger(__name__)

CORRECTION_SCHEMA_VERSION = 1
FULL_EPOCHS = 500_000


@dataclass
class CorrectorConfig:
    segment_start: int = 950
    segment_length: int = 850
    lr: float = 1e-3
    epochs: int = 50_000
    full_epochs: bool = False
    hidden: int = 64
    scale: float = 0.2
    gp_amplitude: float = 1.0
    gp_length: float = 2000.0
    gp_noise: float = 0.3
    gp_window: int = 512
    ema_alpha: float = 0.95
    clip_norm: float = 1.0
    feedback: bool = False

    def __post_init__(self):
        if self.segment_start < 0 or self.segment_length < 0:
            raise ValueError("corrector segment must start and extend at non-negative steps")
        if not 0.0 < self.ema_alpha < 1.0:
            raise ValueError("ema_alpha must lie in (0, 1)")
        if self.scale <= 0 or self.gp_length <= 0 or self.gp_amplitude <= 0:
            raise ValueError("corrector scale and GP hyperparameters must be positive")
        if self.gp_noise < 0 or self.gp_window < 2:
            raise ValueError("need gp_noise >= 0 and a GP window of at least two points")

    @property
    def training_epochs(self) -> int:
        return FULL_EPOCHS if self.full_epochs else self.epochs

    @property
    def kernel(self) -> RbfKernel:
        return RbfKernel(self.gp_amplitude, self.gp_length, self.gp_noise)


def channel_names(condensers: Sequence[str]) -> List[str]:
    """Energy channels of every condenser, then their mass channels"""
    return [f"{c}.E_hx" for c in condensers] + [f"{c}.M_r" for c in condensers]


class CorrectorNet(Module):
    def __init__(self, d_in: int, n_out: int, hidden: int, scale: float, rng: np.random.Generator):
        self.d_in = d_in
        self.n_out = n_out
        self.scale = scale
        self.mlp = MLP([d_in, hidden, hidden, n_out], rng, activation="sigmoid")

    def __call__(self, z_in) -> Tensor:
        z_in = as_tensor(z_in)
        if z_in.shape[-1] != self.d_in:
            raise ShapeError(f"corrector expects {self.d_in} inputs, got {z_in.shape[-1]}")
        return constrain_tanh(self.mlp(z_in), self.scale)


def corrector_forward(z_in, net: CorrectorNet) -> np.ndarray:
    """phi_raw for one or more z_in rows; every entry lies in (-scale, scale)"""
    with no_grad():
        return net(np.asarray(z_in, dtype=float)).value


@dataclass
class TrainingPairs:
    t: np.ndarray  # (N,)
    z_in: np.ndarray  # (N, d_in)
    m_pred: np.ndarray  # (N, channels)
    m_bench: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


class CorrectorScaling:
    """Normalization shared by every condenser; statistics come from the run itself"""

    def __init__(self, stats: Dict[str, Dict[str, float]], condensers: Sequence[str]):
        self.stats = stats
        self.condensers = list(condensers)
        self.normalizer = Normalizer(stats)
        self.m_lo = np.array([stats["E_hx"]["min"], stats["M_r"]["min"]])
        self.m_span = np.array(
            [
                stats["E_hx"]["max"] - stats["E_hx"]["min"],
                stats["M_r"]["max"] - stats["M_r"]["min"],
            ]
        )

    @classmethod
    def from_frames(
        cls, frames: Sequence[pd.DataFrame], condensers: Sequence[str]
    ) -> "CorrectorScaling":
        return cls(column_statistics(list(frames)), condensers)

    @property
    def d_in(self) -> int:
        return len(self.condensers) * (len(INPUT_COLUMNS) + len(OUTPUT_COLUMNS))

    @property
    def n_channels(self) -> int:
        return 2 * len(self.condensers)

    def _channel_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        n = len(self.condensers)
        return np.repeat(self.m_lo, n), np.repeat(self.m_span, n)

    def z_in(self, inputs: np.ndarray, outputs: np.ndarray) -> np.ndarray:
        """(..., n_cond, 8) inputs and (..., n_cond, 9) outputs -> (..., d_in)"""
        x = self.normalizer.inputs(inputs)
        y = self.normalizer.outputs(outputs)
        both = np.concatenate([x, y], axis=-1)
        return both.reshape(both.shape[:-2] + (-1,))

    def channels(self, outputs: np.ndarray) -> np.ndarray:
        """Normalized (E_1..E_n, M_1..M_n) from (..., n_cond, 9) physical outputs"""
        energy = outputs[..., OUTPUT_COLUMNS.index("E_hx")]
        mass = outputs[..., OUTPUT_COLUMNS.index("M_r")]
        lo, span = self._channel_bounds()
        return 2.0 * (np.concatenate([energy, mass], axis=-1) - lo) / span - 1.0

    def physical(self, channels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Inverse of ``channels``: (energy, mass) per condenser"""
        lo, span = self._channel_bounds()
        values = (np.asarray(channels) + 1.0) * 0.5 * span + lo
        n = len(self.condensers)
        return values[..., :n], values[..., n:]


def _frame_block(
    frames: Dict[str, pd.DataFrame], names: Sequence[str], columns, rows
) -> np.ndarray:
    return np.stack([frames[n][columns].to_numpy(dtype=float)[rows] for n in names], axis=-2)


def collect_training_pairs(
    predicted: Dict[str, pd.DataFrame],
    bench: Dict[str, pd.DataFrame],
    scaling: CorrectorScaling,
    start: int,
    length: int,
) -> TrainingPairs:
    """
    One record per segment step from a prediction run and the benchmark, both
    tabulated per exchanger on the benchmark's sample grid. A prediction that
    stops inside the segment (failed run) aborts collection.
    """
    names = scaling.condensers
    rows = np.arange(start, start + length)
    if length == 0:
        empty = np.empty((0, scaling.n_channels))
        return TrainingPairs(np.empty(0), np.empty((0, scaling.d_in)), empty, empty.copy())
    for label, frames in (("prediction", predicted), ("benchmark", bench)):
        for name in names:
            if len(frames[name]) < start + length:
                raise ValueError(
                    f"{label} run for {name} has {len(frames[name])} steps, "
                    f"segment needs {start + length}"
                )
    inputs = _frame_block(predicted, names, INPUT_COLUMNS, rows)
    outputs = _frame_block(predicted, names, OUTPUT_COLUMNS, rows)
    bench_outputs = _frame_block(bench, names, OUTPUT_COLUMNS, rows)
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
        raise NonFiniteError("prediction run is not finite inside the corrector segment")
    return TrainingPairs(
        t=bench[names[0]]["t"].to_numpy(dtype=float)[rows],
        z_in=scaling.z_in(inputs, outputs),
        m_pred=scaling.channels(outputs),
        m_bench=scaling.channels(bench_outputs),
    )


@dataclass
class CorrectorTrainResult:
    net: CorrectorNet
    history: List[Dict[str, float]]
    initial_loss: float
    final_loss: float
    diverged: bool = False


def correction_loss(net: CorrectorNet, pairs: TrainingPairs) -> Tensor:
    """Mean over steps of |m_pred + phi(z_in) - m_bench|^2"""
    residual = net(pairs.z_in) + (pairs.m_pred - pairs.m_bench)
    return (residual * residual).sum(axis=-1).mean()


def train_corrector(
    pairs: TrainingPairs,
    config: CorrectorConfig,
    rng: np.random.Generator,
    net: Optional[CorrectorNet] = None,
    epochs: Optional[int] = None,
) -> CorrectorTrainResult:
    """Full-batch Adam; the lowest-loss weights are kept"""
    if len(pairs) == 0:
        raise ValueError("corrector training needs at least one record")
    net = net or CorrectorNet(
        pairs.z_in.shape[1], pairs.m_pred.shape[1], config.hidden, config.scale, rng
    )
    params = net.parameters()
    optimizer = Adam(params, lr=config.lr)
    epochs = config.training_epochs if epochs is None else epochs

    with no_grad():
        initial = float(correction_loss(net, pairs).value)
    best_loss, best_values = initial, [p.value.copy() for p in params]
    history: List[Dict[str, float]] = []
    diverged = False
    for epoch in range(1, epochs + 1):
        loss = correction_loss(net, pairs)
        try:
            grads = backward(loss, params)
        except NonFiniteError as e:
            logger.warning("corrector training diverged at epoch %d: %s", epoch, e)
            diverged = True
            break
        value = float(loss.value)
        if value < best_loss:
            best_loss, best_values = value, [p.value.copy() for p in params]
        optimizer.step(clip_gradients(grads, config.clip_norm))
        history.append({"epoch": epoch, "loss": value})
        if epoch % 1000 == 0:
            logger.debug("corrector epoch %d loss %.4g", epoch, value)

    for p, value in zip(params, best_values):
        p.value = value
    with no_grad():
        final = float(correction_loss(net, pairs).value)
    logger.info("corrector loss %.4g -> %.4g over %d epochs", initial, final, len(history))
    return CorrectorTrainResult(net.eval(), history, initial, final, diverged)


def gp_smooth(times, series, config: Optional[CorrectorConfig] = None) -> np.ndarray:
    """
    GP posterior mean of each channel at its own sample times; the series is
    mean-centered before regression and the mean restored afterwards.
    """
    config = config or CorrectorConfig()
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if times.size < 2:
        raise ValueError("GP smoothing needs at least two points")
    if np.any(np.diff(times) <= 0):
        raise ValueError("GP smoothing needs strictly increasing times")
    if series.shape[0] != times.size:
        raise ShapeError(f"{times.size} times but a series of shape {series.shape}")
    gp = GaussianProcess(config.kernel).fit(times, series, center=True)
    mean, _ = gp.predict(times, return_std=False)
    return mean


def ema(series, alpha: float = 0.95) -> np.ndarray:
    """s_0 = x_0, s_t = alpha s_(t-1) + (1 - alpha) x_t along the first axis"""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    series = np.asarray(series, dtype=float)
    out = np.empty_like(series)
    if series.shape[0] == 0:
        return out
    out[0] = series[0]
    for t in range(1, series.shape[0]):
        out[t] = alpha * out[t - 1] + (1.0 - alpha) * series[t]
    return out


def apply_correction(m_pred, phi) -> Tuple[np.ndarray, bool]:
    """(m_pred + phi, False) when every entry stays in [-1, 1], else (m_pred, True)"""
    m_pred = np.asarray(m_pred, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if m_pred.shape != phi.shape:
        raise ShapeError(f"prediction {m_pred.shape} vs correction {phi.shape}")
    corrected = m_pred + phi
    if np.all(np.abs(corrected) <= 1.0):
        return corrected, False
    return m_pred.copy(), True


@dataclass
class CorrectionRecord:
    t: float
    z_in: np.ndarray
    m_pred: np.ndarray
    phi_raw: np.ndarray
    phi_gp: np.ndarray
    phi_smooth: np.ndarray
    m_corr: np.ndarray
    skipped: bool
    m_bench: Optional[np.ndarray] = None


@dataclass
class CorrectorPipeline:
    """Online raw -> GP -> EMA -> gate chain, one call per accepted step"""

    net: CorrectorNet
    scaling: CorrectorScaling
    config: CorrectorConfig
    times: List[float] = field(default_factory=list)
    raw: List[np.ndarray] = field(default_factory=list)
    smoothed: Optional[np.ndarray] = None
    records: List[CorrectionRecord] = field(default_factory=list)
    skipped: int = 0

    def step(self, t: float, inputs: np.ndarray, outputs: np.ndarray) -> CorrectionRecord:
        """inputs (n_cond, 8) and outputs (n_cond, 9) of the condensers, physical units"""
        z_in = self.scaling.z_in(inputs, outputs)
        m_pred = self.scaling.channels(outputs)
        phi_raw = corrector_forward(z_in, self.net)
        if self.times and t <= self.times[-1]:
            self.times[-1], self.raw[-1] = t, phi_raw
        else:
            self.times.append(t)
            self.raw.append(phi_raw)
        window = self.config.gp_window
        times, raw = self.times[-window:], self.raw[-window:]
        if len(times) >= 2:
            phi_gp = gp_smooth(times, np.stack(raw), self.config)[-1]
        else:
            phi_gp = phi_raw
        alpha = self.config.ema_alpha
        if self.smoothed is None:
            self.smoothed = phi_gp
        else:
            self.smoothed = alpha * self.smoothed + (1.0 - alpha) * phi_gp
        m_corr, skipped = apply_correction(m_pred, self.smoothed)
        if skipped:
            self.skipped += 1
            logger.debug("correction at t=%.6g skipped by the range gate", t)
        record = CorrectionRecord(t, z_in, m_pred, phi_raw, phi_gp, self.smoothed, m_corr, skipped)
        self.records.append(record)
        return record


def correction_frame(
    records: Sequence[CorrectionRecord], condensers: Sequence[str]
) -> pd.DataFrame:
    """Long table: one row per (step, channel) with pred, bench, corrected"""
    rows = []
    for step, record in enumerate(records):
        for i, channel in enumerate(channel_names(condensers)):
            rows.append(
                {
                    "step": step,
                    "t": record.t,
                    "channel": channel,
                    "pred": record.m_pred[i],
                    "bench": np.nan if record.m_bench is None else record.m_bench[i],
                    "corrected": record.m_corr[i],
                    "skipped": int(record.skipped),
                }
            )
    return pd.DataFrame(
        rows, columns=["step", "t", "channel", "pred", "bench", "corrected", "skipped"]
    )


def write_correction_stream(
    path: str, records: Sequence[CorrectionRecord], condensers: Sequence[str]
) -> str:
    frame = correction_frame(records, condensers)
    return write_versioned_csv(path, frame, "corrector_parity", CORRECTION_SCHEMA_VERSION)


def write_corrector_loss(path: str, history: List[Dict[str, float]]) -> str:
    frame = pd.DataFrame(history, columns=["epoch", "loss"])
    return write_versioned_csv(path, frame, "corrector_loss", CORRECTION_SCHEMA_VERSION)


def save_corrector(path: str, net: CorrectorNet, scaling: CorrectorScaling) -> None:
    meta = {
        "corrector": {
            "d_in": net.d_in,
            "n_out": net.n_out,
            "hidden": net.mlp.layers[0].weight.shape[0],
            "scale": net.scale,
            "stats": scaling.stats,
            "condensers": scaling.condensers,
        }
    }
    save_weights(path, net, meta)


def load_corrector(path: str) -> Tuple[CorrectorNet, CorrectorScaling]:
    arrays, meta = read_container(path)
    if "corrector" not in meta:
        raise ShapeError(f"{path} is not a corrector checkpoint")
    info = meta["corrector"]
    net = CorrectorNet(
        info["d_in"], info["n_out"], info["hidden"], info["scale"], np.random.default_rng(0)
    )
    load_into(net, arrays)
    return net.eval(), CorrectorScaling(info["stats"], info["condensers"])
