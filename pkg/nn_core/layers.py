"""
Neural building blocks on top of the tape: linear and GRU layers, layer
normalization, dropout, bounded-tanh output and small MLP stacks.

GRU gating follows the latent-ODE form

    r = sigmoid(W_r x + U_r h + b_r)
    z = sigmoid(W_z x + U_z h + b_z)
    h~ = tanh(W_h x + U_h (r * h) + b_h)
    dh/dt = (1 - z) * (h~ - h)

and a discrete step is ``h + dh/dt``.
"""

from typing import List
from typing import Sequence
from typing import Tuple

import numpy as np

from exceptions import ShapeError
from nn_core.tape import Tensor
from nn_core.tape import as_tensor
from nn_core.tape import concat

LAYER_NORM_EPS = 1e-5


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    """Parameter container; parameters are discovered in attribute order"""

    training: bool = False

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        found: List[Tuple[str, Tensor]] = []
        for name, attr in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(attr, Tensor) and attr.requires_grad:
                found.append((full, attr))
            elif isinstance(attr, Module):
                found.extend(attr.named_parameters(full + "."))
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        found.extend(item.named_parameters(f"{full}.{i}."))
        return found

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> List["Module"]:
        found: List[Module] = [self]
        for attr in vars(self).values():
            if isinstance(attr, Module):
                found.extend(attr.modules())
            elif isinstance(attr, (list, tuple)):
                for item in attr:
                    if isinstance(item, Module):
                        found.extend(item.modules())
        return found

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = uniform_init(rng, (out_features, in_features), in_features)
        self.bias = uniform_init(rng, (out_features,), in_features)

    def __call__(self, x: Tensor) -> Tensor:
        return as_tensor(x) @ self.weight.T + self.bias

    def tangent(self, dx: Tensor) -> Tensor:
        """Directional derivative; the bias drops out"""
        return as_tensor(dx) @ self.weight.T


class GRUCell(Module):
    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        fan = input_size + hidden_size
        self.W_r = uniform_init(rng, (hidden_size, input_size), fan)
        self.W_z = uniform_init(rng, (hidden_size, input_size), fan)
        self.W_h = uniform_init(rng, (hidden_size, input_size), fan)
        self.U_r = uniform_init(rng, (hidden_size, hidden_size), fan)
        self.U_z = uniform_init(rng, (hidden_size, hidden_size), fan)
        self.U_h = uniform_init(rng, (hidden_size, hidden_size), fan)
        self.b_r = uniform_init(rng, (hidden_size,), fan)
        self.b_z = uniform_init(rng, (hidden_size,), fan)
        self.b_h = uniform_init(rng, (hidden_size,), fan)

    def _check(self, x: Tensor, h: Tensor) -> None:
        if x.shape[-1] != self.input_size or h.shape[-1] != self.hidden_size:
            raise ShapeError(
                f"GRU expects input {self.input_size} and state {self.hidden_size}, "
                f"got {x.shape[-1]} and {h.shape[-1]}"
            )

    def gates(self, x: Tensor, h: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        x, h = as_tensor(x), as_tensor(h)
        self._check(x, h)
        r = (x @ self.W_r.T + h @ self.U_r.T + self.b_r).sigmoid()
        z = (x @ self.W_z.T + h @ self.U_z.T + self.b_z).sigmoid()
        candidate = (x @ self.W_h.T + (r * h) @ self.U_h.T + self.b_h).tanh()
        return r, z, candidate

    def derivative(self, x: Tensor, h: Tensor) -> Tensor:
        _, z, candidate = self.gates(x, h)
        return (1.0 - z) * (candidate - h)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        h = as_tensor(h)
        return h + self.derivative(x, h)

    def step_with_tangent(self, x: Tensor, dx: Tensor, h: Tensor) -> Tuple[Tensor, Tensor]:
        """One step and its derivative along ``dx`` with ``h`` held fixed"""
        x, dx, h = as_tensor(x), as_tensor(dx), as_tensor(h)
        r, z, candidate = self.gates(x, h)
        dr = r * (1.0 - r) * (dx @ self.W_r.T)
        dz = z * (1.0 - z) * (dx @ self.W_z.T)
        dcandidate = (1.0 - candidate * candidate) * (dx @ self.W_h.T + (dr * h) @ self.U_h.T)
        new_h = h + (1.0 - z) * (candidate - h)
        dnew_h = (1.0 - z) * dcandidate - dz * (candidate - h)
        return new_h, dnew_h


def gru_latent_derivative(x_t, s_t, zeta_t, cell: GRUCell) -> Tensor:
    """dζ/dt of the gated latent ODE with forcing [x_t, s_t]"""
    forcing = concat([as_tensor(x_t), as_tensor(s_t)], axis=-1)
    return cell.derivative(forcing, as_tensor(zeta_t))


class LayerNorm(Module):
    def __init__(self, size: int):
        self.gain = Tensor(np.ones(size), requires_grad=True)
        self.bias = Tensor(np.zeros(size), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)

    def tangent(self, x: Tensor, dx: Tensor) -> Tensor:
        x, dx = as_tensor(x), as_tensor(dx)
        centered = x - x.mean(axis=-1, keepdims=True)
        std = ((centered * centered).mean(axis=-1, keepdims=True) + LAYER_NORM_EPS).sqrt()
        normalized = centered / std
        dcentered = dx - dx.mean(axis=-1, keepdims=True)
        dnormalized = (
            dcentered - normalized * (normalized * dcentered).mean(axis=-1, keepdims=True)
        ) / std
        return dnormalized * self.gain


def layer_norm(v, gain, bias) -> Tensor:
    v = as_tensor(v)
    if v.shape[-1] < 2:
        raise ShapeError("layer_norm needs at least two features")
    centered = v - v.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (variance + LAYER_NORM_EPS).sqrt() * gain + bias


class Dropout(Module):
    """Inverted dropout, active only in training mode"""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if not self.training or self.rate == 0.0:
            return x
        keep = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * keep


def constrain_tanh(v, scale: float = 0.2) -> Tensor:
    if scale <= 0:
        raise ValueError("scale must be positive")
    return as_tensor(v).tanh() * scale


class MLP(Module):
    """Dense stack with a shared activation between layers, linear head"""

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activation: str = "tanh",
    ):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        if activation not in ("tanh", "sigmoid"):
            raise ValueError(f"Unsupported activation: {activation}")
        self.activation = activation
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        out = as_tensor(x)
        for i, layer in enumerate(self.layers):
            out = layer(out)
            if i < len(self.layers) - 1:
                out = out.tanh() if self.activation == "tanh" else out.sigmoid()
        return out
