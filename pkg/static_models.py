"""
Memoryless MLP surrogates for compressors and expansion valves.

Both models learn a smooth coefficient and apply the actuation structurally:

    compressor: m = speed * g_m(p_suct, p_dis, h_in),  h_out = h_in + g_h(...)
    valve:      m = opening * sqrt(max(p_in - p_out, 0)) * g_v(p_in, p_out, h_in)

so zero speed, a closed valve or a non-positive pressure drop give exactly zero
flow, flow is monotone in speed, and the valve is isenthalpic by construction.
"""

import logging
from dataclasses import dataclass
from typing import Dict
from typing import List
from typing import Sequence
from typing import Tuple

import numpy as np
import pandas as pd

from exceptions import NonFiniteError
from exceptions import ShapeError
from nn_core.checkpoint import load_into
from nn_core.checkpoint import read_container
from nn_core.checkpoint import save_weights
from nn_core.layers import MLP
from nn_core.layers import Module
from nn_core.optim import Adam
from nn_core.optim import clip_gradients
from nn_core.tape import backward
from nn_core.tape import no_grad
from plant_oracle import DEFAULT_PARAMETERS
from plant_oracle import DEFAULT_PROPERTIES
from plant_oracle import PlantParameters
from plant_oracle import PropertyMap
from plant_oracle import compressor_law
from plant_oracle import valve_law

logger = logging.getLogger(__name__)

COMPRESSOR_KIND = "compressor"
VALVE_KIND = "valve"

FEATURES = {
    COMPRESSOR_KIND: ["p_suct", "p_dis", "h_in", "speed"],
    VALVE_KIND: ["p_in", "p_out", "h_in", "opening"],
}
# coefficient features: the actuation enters structurally
COEFFICIENT_FEATURES = {
    COMPRESSOR_KIND: ["p_suct", "p_dis", "h_in"],
    VALVE_KIND: ["p_in", "p_out", "h_in"],
}
TARGETS = {
    COMPRESSOR_KIND: ["flow_per_rev", "enthalpy_rise"],
    VALVE_KIND: ["flow_coefficient"],
}

# operating boxes the training samples are drawn from
COMPRESSOR_BOX = {
    "p_suct": (3.0e5, 1.2e6),
    "p_dis": (1.2e6, 3.5e6),
    "h_in": (3.2e5, 4.2e5),
    "speed": (0.0, 70.0),
}
VALVE_BOX = {
    "p_in": (1.2e6, 3.2e6),
    "p_out": (3.0e5, 1.2e6),
    "h_in": (2.2e5, 3.2e5),
    "opening": (0.0, 1.0),
}


@dataclass
class StaticTrainConfig:
    hidden: int = 32
    layers: int = 2
    lr: float = 1e-3
    epochs: int = 2000
    n_samples: int = 1024
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.hidden < 1 or self.layers < 1:
            raise ValueError("static models need at least one hidden layer of width >= 1")
        if self.epochs < 0 or self.n_samples < 2:
            raise ValueError("need epochs >= 0 and at least two samples")


class StaticModel(Module):
    """MLP over normalized coefficient features; kind is compressor or valve"""

    def __init__(
        self,
        kind: str,
        stats: Dict[str, Dict[str, float]],
        rng: np.random.Generator,
        hidden: int = 32,
        layers: int = 2,
    ):
        if kind not in FEATURES:
            raise ValueError(f"Unsupported static model kind: {kind}")
        self.kind = kind
        self.stats = stats
        self.hidden = hidden
        self.n_layers = layers
        sizes = [len(COEFFICIENT_FEATURES[kind])] + [hidden] * layers + [len(TARGETS[kind])]
        self.net = MLP(sizes, rng, activation="tanh")
        self.in_lo, self.in_span = _bounds(stats, COEFFICIENT_FEATURES[kind])
        self.out_lo, self.out_span = _bounds(stats, TARGETS[kind])
        self.envelope_violations = 0

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return 2.0 * (features - self.in_lo) / self.in_span - 1.0

    def coefficients(self, features: np.ndarray) -> np.ndarray:
        """Physical coefficients for (N, 3) raw coefficient features"""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        scaled = self.normalize(features)
        outside = np.any(np.abs(scaled) > 1.0 + 1e-9, axis=1)
        if np.any(outside):
            self.envelope_violations += int(np.sum(outside))
            logger.debug("%s surrogate evaluated outside its envelope", self.kind)
        with no_grad():
            out = self.net(scaled).value
        return (out + 1.0) * 0.5 * self.out_span + self.out_lo


def _bounds(stats: Dict[str, Dict[str, float]], columns: Sequence[str]):
    missing = [c for c in columns if c not in stats]
    if missing:
        raise ShapeError(f"normalization statistics lack columns {missing}")
    lo = np.array([stats[c]["min"] for c in columns])
    hi = np.array([stats[c]["max"] for c in columns])
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return lo, span


def _stack(*columns) -> Tuple[np.ndarray, Tuple[int, ...]]:
    arrays = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in columns])
    shape = arrays[0].shape
    return np.column_stack([a.ravel() for a in arrays]), shape


def compressor_eval(
    model: StaticModel, p_suct, p_dis, h_in, speed
) -> Tuple[np.ndarray, np.ndarray]:
    """(mass flow, outlet enthalpy); flow is exactly zero at zero speed"""
    if model.kind != COMPRESSOR_KIND:
        raise ValueError("compressor_eval needs a compressor model")
    features, shape = _stack(p_suct, p_dis, h_in, speed)
    if np.any(features[:, 3] < 0):
        raise ValueError("compressor speed must be non-negative")
    coeff = model.coefficients(features[:, :3])
    flow = features[:, 3] * np.maximum(coeff[:, 0], 0.0)
    h_out = features[:, 2] + np.maximum(coeff[:, 1], 0.0)
    return flow.reshape(shape), h_out.reshape(shape)


def valve_eval(model: StaticModel, p_in, p_out, h_in, opening) -> Tuple[np.ndarray, np.ndarray]:
    """(mass flow, outlet enthalpy); h_out is h_in exactly"""
    if model.kind != VALVE_KIND:
        raise ValueError("valve_eval needs a valve model")
    features, shape = _stack(p_in, p_out, h_in, opening)
    if np.any(features[:, 3] < 0) or np.any(features[:, 3] > 1):
        raise ValueError("valve opening must lie in [0, 1]")
    drive = np.sqrt(np.maximum(features[:, 0] - features[:, 1], 0.0))
    coeff = model.coefficients(features[:, :3])
    flow = features[:, 3] * drive * np.maximum(coeff[:, 0], 0.0)
    return flow.reshape(shape), features[:, 2].reshape(shape).copy()


def _draw(box: Dict[str, Tuple[float, float]], n: int, rng: np.random.Generator) -> pd.DataFrame:
    return pd.DataFrame({name: rng.uniform(lo, hi, size=n) for name, (lo, hi) in box.items()})


def sample_compressor_data(
    rng: np.random.Generator,
    n: int,
    params: PlantParameters = DEFAULT_PARAMETERS,
    props: PropertyMap = DEFAULT_PROPERTIES,
) -> pd.DataFrame:
    frame = _draw(COMPRESSOR_BOX, n, rng)
    flow, h_out = compressor_law(
        frame["p_suct"], frame["p_dis"], frame["h_in"], frame["speed"], params, props
    )
    frame["m"] = flow
    frame["h_out"] = h_out
    return frame


def sample_valve_data(
    rng: np.random.Generator,
    n: int,
    params: PlantParameters = DEFAULT_PARAMETERS,
    props: PropertyMap = DEFAULT_PROPERTIES,
) -> pd.DataFrame:
    frame = _draw(VALVE_BOX, n, rng)
    flow, h_out = valve_law(
        frame["p_in"], frame["p_out"], frame["h_in"], frame["opening"], params, props
    )
    frame["m"] = flow
    frame["h_out"] = h_out
    return frame


def coefficient_targets(kind: str, frame: pd.DataFrame) -> pd.DataFrame:
    """Strip the structural actuation factor from sampled flows"""
    if kind == COMPRESSOR_KIND:
        usable = frame[frame["speed"] > 1e-6]
        return pd.DataFrame(
            {
                "p_suct": usable["p_suct"],
                "p_dis": usable["p_dis"],
                "h_in": usable["h_in"],
                "flow_per_rev": usable["m"] / usable["speed"],
                "enthalpy_rise": usable["h_out"] - usable["h_in"],
            }
        )
    if kind == VALVE_KIND:
        usable = frame[(frame["opening"] > 1e-6) & (frame["p_in"] > frame["p_out"])]
        drive = np.sqrt(usable["p_in"] - usable["p_out"])
        return pd.DataFrame(
            {
                "p_in": usable["p_in"],
                "p_out": usable["p_out"],
                "h_in": usable["h_in"],
                "flow_coefficient": usable["m"] / (usable["opening"] * drive),
            }
        )
    raise ValueError(f"Unsupported static model kind: {kind}")


def fit_static(
    kind: str,
    frame: pd.DataFrame,
    config: StaticTrainConfig,
    rng: np.random.Generator,
) -> Tuple[StaticModel, List[Dict[str, float]]]:
    """Full-batch Adam on the normalized coefficient targets"""
    targets = coefficient_targets(kind, frame)
    if len(targets) < 2:
        raise ValueError(f"not enough usable {kind} samples to train on")
    columns = COEFFICIENT_FEATURES[kind] + TARGETS[kind]
    stats = {c: {"min": float(targets[c].min()), "max": float(targets[c].max())} for c in columns}
    model = StaticModel(kind, stats, rng, config.hidden, config.layers)
    x = model.normalize(targets[COEFFICIENT_FEATURES[kind]].to_numpy(dtype=float))
    y = 2.0 * (targets[TARGETS[kind]].to_numpy(dtype=float) - model.out_lo) / model.out_span - 1.0

    params = model.parameters()
    optimizer = Adam(params, lr=config.lr)
    history: List[Dict[str, float]] = []
    for epoch in range(1, config.epochs + 1):
        diff = model.net(x) - y
        loss = (diff * diff).mean()
        try:
            grads = backward(loss, params)
        except NonFiniteError as e:
            logger.warning("%s surrogate training diverged at epoch %d: %s", kind, epoch, e)
            break
        optimizer.step(clip_gradients(grads, config.clip_norm))
        history.append({"epoch": epoch, "loss": float(loss.value)})
    if history:
        logger.info("%s surrogate trained, final loss %.3g", kind, history[-1]["loss"])
    return model, history


def save_static(path: str, model: StaticModel) -> None:
    meta = {
        "static": {
            "kind": model.kind,
            "stats": model.stats,
            "hidden": model.hidden,
            "layers": model.n_layers,
        }
    }
    save_weights(path, model, meta)


def load_static(path: str) -> StaticModel:
    arrays, meta = read_container(path)
    if "static" not in meta:
        raise ShapeError(f"{path} is not a static model checkpoint")
    info = meta["static"]
    model = StaticModel(
        info["kind"], info["stats"], np.random.default_rng(0), info["hidden"], info["layers"]
    )
    load_into(model, arrays)
    return model
