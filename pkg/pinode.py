"""
Implicit physics-informed neural-ODE heat exchanger surrogate.

A GRU encoder reads a window of past inputs and (M_r, E_hx) states and
projects it to a latent vector. A gated latent ODE, forced by the inputs and
states, is integrated with RK4 across the decoder steps, and a GRU decoder maps
the latent trajectory to the nine outputs. The physics loss compares the
time derivatives of the predicted M_r and E_hx channels, taken through the
decoder by forward-mode tangents, with the mass and energy balances.

Decoder step j is forced by the inputs and states at its own target time, so
in closed loop the solver supplies the states the surrogate integrates toward.
Latent time runs in units of ``ModelConfig.time_scale`` seconds.
"""

import logging
from collections import deque
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Callable
from typing import Deque
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
from nn_core.checkpoint import load_into
from nn_core.checkpoint import read_container
from nn_core.checkpoint import save_weights
from nn_core.layers import Dropout
from nn_core.layers import GRUCell
from nn_core.layers import LayerNorm
from nn_core.layers import Linear
from nn_core.layers import Module
from nn_core.layers import gru_latent_derivative
from nn_core.optim import Adam
from nn_core.optim import PlateauScheduler
from nn_core.optim import clip_gradients
from nn_core.tape import Tensor
from nn_core.tape import as_tensor
from nn_core.tape import backward
from nn_core.tape import concat
from nn_core.tape import no_grad
from nn_core.tape import stack
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS

logger = logging.getLogger(__name__)

STATE_COLUMNS = ["M_r", "E_hx"]
M_CHANNEL = OUTPUT_COLUMNS.index("M_r")
E_CHANNEL = OUTPUT_COLUMNS.index("E_hx")
LOSS_SCHEMA_VERSION = 1


@dataclass
class ModelConfig:
    d_x: int = 8
    d_s: int = 2
    d_latent: int = 8
    hidden: int = 64
    d_out: int = 9
    t_enc: int = 20
    t_dec: int = 10
    dropout: float = 0.1
    time_scale: float = 10.0

    def __post_init__(self):
        if self.d_latent < 1:
            raise ValueError("d_latent must be at least 1")
        if self.t_enc < 1 or self.t_dec < 1:
            raise ValueError("T_enc and T_dec must be at least 1")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")


@dataclass
class TrainConfig:
    lam_phys: float = 0.5
    lam_cons: float = 0.5
    lr: float = 1e-3
    lr_factor: float = 0.5
    patience: int = 25
    clip_norm: float = 1.0
    batch_size: int = 32
    epochs: int = 100

    def __post_init__(self):
        if self.lam_phys < 0 or self.lam_cons < 0:
            raise ValueError("loss weights must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class Normalizer:
    """Per-column min-max scaling to [-1, 1], shared by training and inference"""

    def __init__(self, stats: Dict[str, Dict[str, float]]):
        missing = [c for c in INPUT_COLUMNS + OUTPUT_COLUMNS if c not in stats]
        if missing:
            raise ShapeError(f"normalization statistics lack columns {missing}")
        self.stats = stats
        self.in_lo, self.in_span = self._bounds(INPUT_COLUMNS)
        self.out_lo, self.out_span = self._bounds(OUTPUT_COLUMNS)
        self.state_lo, self.state_span = self._bounds(STATE_COLUMNS)

    def _bounds(self, columns: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.stats[c]["min"] for c in columns])
        hi = np.array([self.stats[c]["max"] for c in columns])
        return lo, hi - lo

    @staticmethod
    def _scale(x, lo, span) -> np.ndarray:
        return 2.0 * (np.asarray(x, dtype=float) - lo) / span - 1.0

    @staticmethod
    def _unscale(x, lo, span) -> np.ndarray:
        return (np.asarray(x, dtype=float) + 1.0) * 0.5 * span + lo

    def inputs(self, x) -> np.ndarray:
        return self._scale(x, self.in_lo, self.in_span)

    def outputs(self, y) -> np.ndarray:
        return self._scale(y, self.out_lo, self.out_span)

    def states(self, s) -> np.ndarray:
        return self._scale(s, self.state_lo, self.state_span)

    def denormalize_outputs(self, y) -> np.ndarray:
        return self._unscale(y, self.out_lo, self.out_span)

    @property
    def rate_scale(self) -> np.ndarray:
        """Multiplier taking physical (Mdot, Edot) to normalized units per second"""
        return 2.0 / self.state_span


@dataclass
class NormalizedWindow:
    """A batch of windows; leading axis is the batch"""

    x_enc: np.ndarray  # (B, T_enc, d_x)
    s_enc: np.ndarray  # (B, T_enc, d_s)
    x_dec: np.ndarray  # (B, T_dec, d_x)
    s_dec: np.ndarray  # (B, T_dec, d_s)
    dt: np.ndarray  # (B, T_dec) seconds
    y: np.ndarray  # (B, T_dec, 9)
    mdot_true: np.ndarray  # (B, T_dec), normalized units per second
    edot_true: np.ndarray

    def __len__(self) -> int:
        return self.x_enc.shape[0]

    def take(self, index) -> "NormalizedWindow":
        return NormalizedWindow(
            **{name: getattr(self, name)[index] for name in self.__dataclass_fields__}
        )

    @staticmethod
    def merge(windows: Sequence["NormalizedWindow"]) -> "NormalizedWindow":
        return NormalizedWindow(
            **{
                name: np.concatenate([getattr(w, name) for w in windows])
                for name in NormalizedWindow.__dataclass_fields__
            }
        )


def build_windows(
    frame: pd.DataFrame,
    normalizer: Normalizer,
    config: ModelConfig,
    strides: Sequence[int] = (1, 2, 5),
    window_step: Optional[int] = None,
    sample_period: float = 1.0,
) -> NormalizedWindow:
    """
    Cut an exchanger table into encoder/decoder windows. Each stride spaces both
    the encoder samples and the decoder steps, so decoder step sizes vary
    across the batch.
    """
    x = normalizer.inputs(frame[INPUT_COLUMNS].to_numpy(dtype=float))
    y = normalizer.outputs(frame[OUTPUT_COLUMNS].to_numpy(dtype=float))
    s = y[:, [M_CHANNEL, E_CHANNEL]]
    rates = frame[["Mdot_true", "Edot_true"]].to_numpy(dtype=float) * normalizer.rate_scale
    n = len(frame)
    step = window_step or config.t_dec
    fields = NormalizedWindow.__dataclass_fields__
    chunks: Dict[str, List[np.ndarray]] = {name: [] for name in fields}

    for stride in strides:
        span = (config.t_enc - 1 + config.t_dec) * stride
        for start in range(0, n - span, step):
            enc = start + stride * np.arange(config.t_enc)
            dec = enc[-1] + stride * np.arange(1, config.t_dec + 1)
            chunks["x_enc"].append(x[enc])
            chunks["s_enc"].append(s[enc])
            chunks["x_dec"].append(x[dec])
            chunks["s_dec"].append(s[dec])
            chunks["dt"].append(np.full(config.t_dec, stride * sample_period))
            chunks["y"].append(y[dec])
            chunks["mdot_true"].append(rates[dec, 0])
            chunks["edot_true"].append(rates[dec, 1])

    if not chunks["x_enc"]:
        raise ShapeError(
            f"{n} samples are too few for T_enc={config.t_enc}, T_dec={config.t_dec}"
        )
    return NormalizedWindow(**{name: np.stack(parts) for name, parts in chunks.items()})


def rk4_step(f: Callable[[Tensor], Tensor], zeta: Tensor, h) -> Tensor:
    """Classical RK4 with the forcing frozen inside ``f``"""
    k1 = f(zeta)
    k2 = f(zeta + 0.5 * h * k1)
    k3 = f(zeta + 0.5 * h * k2)
    k4 = f(zeta + h * k3)
    return zeta + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (1.0 / 6.0)


# Fehlberg 4(5) tableau
RKF_C = [0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0]
RKF_A = [
    [],
    [1.0 / 4.0],
    [3.0 / 32.0, 9.0 / 32.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
]
RKF_B4 = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0]
RKF_B5 = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0]


def rkf45_pair(
    f: Callable[[np.ndarray], np.ndarray], zeta: np.ndarray, h: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Embedded 4th and 5th order solutions after one step of size h"""
    zeta = np.asarray(zeta, dtype=float)
    stages: List[np.ndarray] = []
    for row in RKF_A:
        arg = zeta + h * sum((a * k for a, k in zip(row, stages)), np.zeros_like(zeta))
        stages.append(np.asarray(f(arg), dtype=float))
    z4 = zeta + h * sum(b * k for b, k in zip(RKF_B4, stages))
    z5 = zeta + h * sum(b * k for b, k in zip(RKF_B5, stages))
    return z4, z5


@dataclass
class ForwardResult:
    y: Tensor  # (B, T_dec, 9)
    mdot: Tensor  # (B, T_dec), normalized units per second
    edot: Tensor
    zetas: List[Tensor] = field(default_factory=list)


class Pinode(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        forcing = config.d_x + config.d_s
        self.encoder = GRUCell(forcing, config.hidden, rng)
        self.encoder_norm = LayerNorm(config.hidden)
        self.projection = Linear(config.hidden, config.d_latent, rng)
        self.latent_norm = LayerNorm(config.d_latent) if config.d_latent >= 2 else None
        self.ode = GRUCell(forcing, config.d_latent, rng)
        self.decoder = GRUCell(config.d_latent, config.hidden, rng)
        self.decoder_norm = LayerNorm(config.hidden)
        self.head = Linear(config.hidden, config.d_out, rng)
        self.dropout = Dropout(config.dropout, rng)

    def _check_window(self, x, s) -> None:
        if x.shape[-1] != self.config.d_x or s.shape[-1] != self.config.d_s:
            raise ShapeError(
                f"expected {self.config.d_x} features and {self.config.d_s} states, "
                f"got {x.shape[-1]} and {s.shape[-1]}"
            )

    def encode(self, x_enc, s_enc) -> Tensor:
        """(B, T_enc, d_x), (B, T_enc, d_s) -> zeta_0 (B, d_latent)"""
        x_enc, s_enc = as_tensor(x_enc), as_tensor(s_enc)
        self._check_window(x_enc, s_enc)
        batch = x_enc.shape[0]
        h = Tensor(np.zeros((batch, self.config.hidden)))
        for t in range(x_enc.shape[1]):
            forcing = concat([x_enc[:, t, :], s_enc[:, t, :]], axis=-1)
            h = self.encoder(forcing, h)
        h = self.encoder_norm(self.dropout(h))
        zeta = self.projection(h)
        if self.latent_norm is not None:
            zeta = self.latent_norm(zeta)
        return zeta

    def latent_derivative(self, x, s, zeta) -> Tensor:
        """d zeta / d tau for forcing (x, s)"""
        return gru_latent_derivative(x, s, zeta, self.ode)

    def integrate_latent(self, zeta0, x_dec, s_dec, dt) -> List[Tensor]:
        """One RK4 step per decoder index; dt is (B, T_dec) seconds"""
        x_dec, s_dec = as_tensor(x_dec), as_tensor(s_dec)
        dt = np.asarray(dt, dtype=float)
        if np.any(dt <= 0):
            raise ValueError("decoder steps need dt > 0")
        zeta = as_tensor(zeta0)
        trajectory = []
        for j in range(x_dec.shape[1]):
            x_j, s_j = x_dec[:, j, :], s_dec[:, j, :]
            h = (dt[:, j] / self.config.time_scale).reshape(-1, 1)
            zeta = rk4_step(lambda z: self.latent_derivative(x_j, s_j, z), zeta, h)
            if not np.all(np.isfinite(zeta.value)):
                raise NonFiniteError(f"latent state became non-finite at decoder step {j}", step=j)
            trajectory.append(zeta)
        return trajectory

    def decode(self, zetas: Sequence[Tensor]) -> Tensor:
        if not zetas:
            raise ShapeError("cannot decode an empty latent trajectory")
        h = Tensor(np.zeros((zetas[0].shape[0], self.config.hidden)))
        outputs = []
        for zeta in zetas:
            h = self.decoder(zeta, h)
            outputs.append(self.head(self.decoder_norm(h)))
        return stack(outputs, axis=1)

    def decode_step(self, zeta, dzeta, h_prev) -> Tuple[Tensor, Tensor, Tensor]:
        """One decoder step and the time derivative of its output along dzeta"""
        h, dh = self.decoder.step_with_tangent(zeta, dzeta, h_prev)
        normed = self.decoder_norm(h)
        y = self.head(normed)
        dy = self.head.tangent(self.decoder_norm.tangent(h, dh))
        return y, dy, h

    def forward(self, window: NormalizedWindow) -> ForwardResult:
        zeta0 = self.encode(window.x_enc, window.s_enc)
        zetas = self.integrate_latent(zeta0, window.x_dec, window.s_dec, window.dt)
        x_dec, s_dec = as_tensor(window.x_dec), as_tensor(window.s_dec)
        h = Tensor(np.zeros((len(window), self.config.hidden)))
        ys, mdots, edots = [], [], []
        for j, zeta in enumerate(zetas):
            dzeta = self.latent_derivative(x_dec[:, j, :], s_dec[:, j, :], zeta)
            y, dy, h = self.decode_step(zeta, dzeta, h)
            dy = dy * (1.0 / self.config.time_scale)
            ys.append(y)
            mdots.append(dy[:, M_CHANNEL])
            edots.append(dy[:, E_CHANNEL])
        return ForwardResult(
            y=stack(ys, axis=1), mdot=stack(mdots, axis=1), edot=stack(edots, axis=1), zetas=zetas
        )


def true_rates(m_in, m_out, h_in, h_out, q_a) -> Tuple[np.ndarray, np.ndarray]:
    """Mass and energy balances; Q_a > 0 leaves the refrigerant"""
    m_in, m_out = np.asarray(m_in, dtype=float), np.asarray(m_out, dtype=float)
    mdot = m_in - m_out
    edot = m_in * np.asarray(h_in) - m_out * np.asarray(h_out) - np.asarray(q_a)
    return mdot, edot


@dataclass
class LossTerms:
    data: Tensor
    phys: Tensor
    cons: Tensor
    total: Tensor

    def values(self) -> Dict[str, float]:
        return {
            "L_data": float(self.data.value),
            "L_phys": float(self.phys.value),
            "L_cons": float(self.cons.value),
            "L_total": float(self.total.value),
        }


def _mse(a, b) -> Tensor:
    diff = as_tensor(a) - as_tensor(b)
    return (diff * diff).mean()


def compute_losses(
    y_hat,
    y,
    rates_pred: Tuple[Any, Any],
    rates_true: Tuple[Any, Any],
    lam_phys: float = 0.5,
    lam_cons: float = 0.5,
) -> LossTerms:
    """L_total = L_data + lam_phys L_phys + lam_cons L_cons, all mean squared errors"""
    y_hat, y = as_tensor(y_hat), as_tensor(y)
    if y_hat.shape != y.shape:
        raise ShapeError(f"prediction {y_hat.shape} vs target {y.shape}")
    data = _mse(y_hat, y)
    phys = _mse(rates_pred[0], rates_true[0]) + _mse(rates_pred[1], rates_true[1])
    cons = _mse(y_hat[..., M_CHANNEL], y[..., M_CHANNEL]) + _mse(
        y_hat[..., E_CHANNEL], y[..., E_CHANNEL]
    )
    total = data + lam_phys * phys + lam_cons * cons
    return LossTerms(data, phys, cons, total)


def window_losses(model: Pinode, window: NormalizedWindow, config: TrainConfig) -> LossTerms:
    result = model.forward(window)
    return compute_losses(
        result.y,
        window.y,
        (result.mdot, result.edot),
        (window.mdot_true, window.edot_true),
        config.lam_phys,
        config.lam_cons,
    )


@dataclass
class TrainResult:
    model: Module
    history: List[Dict[str, float]]
    best_epoch: int = -1
    diverged: bool = False


def snapshot(module: Module) -> List[np.ndarray]:
    return [p.value.copy() for p in module.parameters()]


def restore(module: Module, values: Sequence[np.ndarray]) -> None:
    for p, value in zip(module.parameters(), values):
        p.value = value.copy()


def train(
    model: Pinode,
    train_windows: NormalizedWindow,
    val_windows: NormalizedWindow,
    config: TrainConfig,
    rng: np.random.Generator,
) -> TrainResult:
    """
    Mini-batch Adam with clipping; validation every epoch, the best
    validation L_total model is kept and the learning rate halves after
    ``patience`` epochs without improvement.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise ValueError("training and validation sets must be nonempty")
    params = model.parameters()
    optimizer = Adam(params, lr=config.lr)
    scheduler = PlateauScheduler(optimizer, factor=config.lr_factor, patience=config.patience)
    history: List[Dict[str, float]] = []
    best_values = snapshot(model)
    best_loss = float("inf")
    best_epoch = -1

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = rng.permutation(len(train_windows))
        sums = {"L_data": 0.0, "L_phys": 0.0, "L_cons": 0.0, "L_total": 0.0}
        batches = 0
        for lo in range(0, len(order), config.batch_size):
            batch = train_windows.take(order[lo : lo + config.batch_size])
            losses = window_losses(model, batch, config)
            try:
                grads = backward(losses.total, params)
            except NonFiniteError as e:
                logger.warning("training diverged at epoch %d: %s", epoch, e)
                restore(model, best_values)
                return TrainResult(model.eval(), history, best_epoch, diverged=True)
            optimizer.step(clip_gradients(grads, config.clip_norm))
            for name, value in losses.values().items():
                sums[name] += value
            batches += 1

        model.eval()
        with no_grad():
            val = window_losses(model, val_windows, config).values()
        row: Dict[str, float] = {"epoch": epoch, "lr": optimizer.lr}
        row.update({name: value / batches for name, value in sums.items()})
        row.update({f"val_{name}": value for name, value in val.items()})
        history.append(row)

        if not np.isfinite(val["L_total"]):
            logger.warning("validation loss is not finite at epoch %d, stopping", epoch)
            restore(model, best_values)
            return TrainResult(model.eval(), history, best_epoch, diverged=True)
        if val["L_total"] < best_loss:
            best_loss = val["L_total"]
            best_values = snapshot(model)
            best_epoch = epoch
        if scheduler.step(val["L_total"]):
            logger.info("epoch %d: learning rate reduced to %.3g", epoch, optimizer.lr)
        logger.debug(
            "epoch %d train %.4g val %.4g", epoch, row["L_total"], val["L_total"]
        )

    restore(model, best_values)
    return TrainResult(model.eval(), history, best_epoch)


def write_loss_history(path: str, history: List[Dict[str, float]]) -> None:
    columns = ["epoch", "lr", "L_data", "L_phys", "L_cons", "L_total"] + [
        f"val_{c}" for c in ("L_data", "L_phys", "L_cons", "L_total")
    ]
    frame = pd.DataFrame(history, columns=columns)
    write_versioned_csv(path, frame, "loss_history", LOSS_SCHEMA_VERSION)


def save_pinode(path: str, model: Pinode, normalizer: Normalizer, kind: str) -> None:
    meta = {
        "pinode": {
            "config": asdict(model.config),
            "stats": normalizer.stats,
            "exchanger_kind": kind,
        }
    }
    save_weights(path, model, meta)


def load_pinode(path: str) -> Tuple[Pinode, Normalizer]:
    arrays, meta = read_container(path)
    if "pinode" not in meta:
        raise ShapeError(f"{path} is not a PINODE checkpoint")
    config = ModelConfig(**meta["pinode"]["config"])
    model = Pinode(config, np.random.default_rng(0))
    load_into(model, arrays)
    return model.eval(), Normalizer(meta["pinode"]["stats"])


@dataclass
class SurrogateStep:
    """Tentative or committed closed-loop evaluation of one exchanger"""

    outputs: np.ndarray  # 9 physical outputs
    mdot: float  # physical units, kg/s
    edot: float  # W
    zeta: np.ndarray
    hidden: np.ndarray
    dt: float


class PinodeRunner:
    """
    Closed-loop driver for one exchanger. Holds the committed latent state and
    decoder hidden state; ``evaluate`` advances tentatively, ``commit`` accepts.
    The latent state is re-anchored by re-encoding the most recent T_enc
    committed samples every ``reencode_every`` commits.
    """

    def __init__(self, model: Pinode, normalizer: Normalizer, reencode_every: Optional[int] = None):
        self.model = model.eval()
        self.normalizer = normalizer
        self.reencode_every = reencode_every or model.config.t_dec
        self.history: Deque[Tuple[np.ndarray, np.ndarray]] = deque(maxlen=model.config.t_enc)
        self.committed: Optional[SurrogateStep] = None
        self.since_encode = 0

    def _forcing(self, x_phys, s_phys) -> Tuple[np.ndarray, np.ndarray]:
        x = self.normalizer.inputs(x_phys).reshape(1, -1)
        s = self.normalizer.states(s_phys).reshape(1, -1)
        return x, s

    def _derivative(self, x, s, zeta) -> np.ndarray:
        return self.model.latent_derivative(x, s, zeta).value

    def reset(self, x_history: np.ndarray, s_history: np.ndarray) -> SurrogateStep:
        x_history = np.atleast_2d(x_history)
        s_history = np.atleast_2d(s_history)
        self.history.clear()
        keep = self.model.config.t_enc
        for x, s in zip(x_history[-keep:], s_history[-keep:]):
            self.history.append((np.asarray(x, dtype=float), np.asarray(s, dtype=float)))
        xs = np.stack([self.normalizer.inputs(h[0]) for h in self.history])[None]
        ss = np.stack([self.normalizer.states(h[1]) for h in self.history])[None]
        with no_grad():
            zeta = self.model.encode(xs, ss).value
            x, s = self._forcing(*self.history[-1])
            dzeta = self._derivative(x, s, zeta)
            hidden = np.zeros((1, self.model.config.hidden))
            y, dy, _ = self.model.decode_step(zeta, dzeta, hidden)
        self.committed = self._pack(y.value, dy.value, zeta, hidden, 0.0)
        self.since_encode = 0
        return self.committed

    def _pack(self, y, dy, zeta, hidden, dt) -> SurrogateStep:
        outputs = self.normalizer.denormalize_outputs(y[0])
        rates = dy[0, [M_CHANNEL, E_CHANNEL]] / self.model.config.time_scale
        rates = rates / self.normalizer.rate_scale
        return SurrogateStep(outputs, float(rates[0]), float(rates[1]), zeta, hidden, dt)

    def evaluate(self, x_phys, s_phys, dt: float) -> SurrogateStep:
        if self.committed is None:
            raise RuntimeError("PinodeRunner.reset must run before evaluate")
        if dt <= 0.0:
            return self.committed
        x, s = self._forcing(x_phys, s_phys)
        with no_grad():
            zeta = rk4_step(
                lambda z: self.model.latent_derivative(x, s, z),
                as_tensor(self.committed.zeta),
                dt / self.model.config.time_scale,
            ).value
            if not np.all(np.isfinite(zeta)):
                raise NonFiniteError("latent state became non-finite in closed loop")
            dzeta = self._derivative(x, s, zeta)
            y, dy, hidden = self.model.decode_step(zeta, dzeta, self.committed.hidden)
        return self._pack(y.value, dy.value, zeta, hidden.value, dt)

    def commit(self, step: SurrogateStep, x_phys, s_phys) -> None:
        self.committed = step
        self.history.append((np.asarray(x_phys, dtype=float), np.asarray(s_phys, dtype=float)))
        self.since_encode += 1
        if self.since_encode >= self.reencode_every and len(self.history) == self.history.maxlen:
            xs = np.stack([h[0] for h in self.history])
            ss = np.stack([h[1] for h in self.history])
            outputs = step.outputs
            self.reset(xs, ss)
            drift = np.abs(self.committed.outputs - outputs) / self.normalizer.out_span
            logger.debug("re-encoded latent state (output drift %.3g)", float(np.max(drift)))

    def latent_error(self, x_phys, s_phys, dt: float) -> float:
        """||z4 - z5|| of an embedded RKF45 step of the latent ODE"""
        x, s = self._forcing(x_phys, s_phys)
        with no_grad():
            z4, z5 = rkf45_pair(
                lambda z: self._derivative(x, s, z),
                self.committed.zeta,
                dt / self.model.config.time_scale,
            )
        return float(np.linalg.norm(z4 - z5))
