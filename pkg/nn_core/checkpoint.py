"""
JSON weight container shared by every trained model:

    {"layers": [{"name": ..., "shape": [...], "values": [...]}, ...],
     "meta": {...}}

Values are flattened in row-major order.
"""

import json
from typing import Any
from typing import Dict
from typing import Tuple

import numpy as np

from exceptions import ShapeError
from nn_core.layers import Module


def to_container(module: Module, meta: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "layers": [
            {
                "name": name,
                "shape": list(param.shape),
                "values": param.value.ravel(order="C").tolist(),
            }
            for name, param in module.named_parameters()
        ],
        "meta": meta,
    }


def save_weights(path: str, module: Module, meta: Dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(to_container(module, meta), fh)


def read_container(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    with open(path, "r") as fh:
        data = json.load(fh)
    arrays = {
        layer["name"]: np.asarray(layer["values"], dtype=float).reshape(layer["shape"])
        for layer in data["layers"]
    }
    return arrays, data.get("meta", {})


def load_into(module: Module, arrays: Dict[str, np.ndarray]) -> Module:
    for name, param in module.named_parameters():
        if name not in arrays:
            raise ShapeError(f"checkpoint has no entry for '{name}'")
        if arrays[name].shape != param.shape:
            raise ShapeError(
                f"checkpoint '{name}' has shape {arrays[name].shape}, expected {param.shape}"
            )
        param.value = arrays[name].copy()
    return module
