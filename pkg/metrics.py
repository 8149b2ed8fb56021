"""
Accuracy metrics.

MAPE here is taken on channels scaled by the largest absolute reference value
of each channel, with the denominator floored at 1e-3 in those units, so
signed channels that cross zero (Q_a) do not blow up and the metric does not
change when prediction and reference are rescaled together.
"""

from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence

import numpy as np
import pandas as pd

from exceptions import ShapeError
from plant_oracle import OUTPUT_COLUMNS

MAPE_FLOOR = 1e-3
MAPE_CHANNELS = list(OUTPUT_COLUMNS)


def mape(pred, ref, floor: float = MAPE_FLOOR) -> float:
    """100 * mean(|pred - ref| / max(|ref|, floor))"""
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pred.shape != ref.shape:
        raise ShapeError(f"prediction {pred.shape} and reference {ref.shape} differ")
    if pred.size == 0:
        raise ValueError("MAPE needs at least one value")
    return float(100.0 * np.mean(np.abs(pred - ref) / np.maximum(np.abs(ref), floor)))


def channel_scale(ref: np.ndarray) -> np.ndarray:
    """Largest |value| per column; all-zero columns get 1"""
    scale = np.max(np.abs(np.asarray(ref, dtype=float)), axis=0)
    return np.where(scale > 0, scale, 1.0)


def _aligned(
    pred_frames: Dict[str, pd.DataFrame],
    ref_frames: Dict[str, pd.DataFrame],
    channels: Sequence[str],
    names: Optional[Sequence[str]] = None,
):
    names = list(names or ref_frames.keys())
    for name in names:
        if name not in pred_frames:
            raise ShapeError(f"prediction has no exchanger '{name}'")
        p, r = pred_frames[name], ref_frames[name]
        if len(p) != len(r):
            raise ShapeError(f"{name}: {len(p)} predicted rows vs {len(r)} reference rows")
        yield name, p[list(channels)].to_numpy(dtype=float), r[list(channels)].to_numpy(dtype=float)


def mape_all(
    pred_frames: Dict[str, pd.DataFrame],
    ref_frames: Dict[str, pd.DataFrame],
    channels: Sequence[str] = MAPE_CHANNELS,
    names: Optional[Sequence[str]] = None,
) -> float:
    """MAPE over every listed channel of every exchanger, each channel scaled by its reference"""
    pred_blocks: List[np.ndarray] = []
    ref_blocks: List[np.ndarray] = []
    for _, p, r in _aligned(pred_frames, ref_frames, channels, names):
        scale = channel_scale(r)
        pred_blocks.append(p / scale)
        ref_blocks.append(r / scale)
    if not ref_blocks:
        raise ValueError("no exchangers to compare")
    return mape(np.concatenate(pred_blocks, axis=1), np.concatenate(ref_blocks, axis=1))


def channel_mape(
    pred_frames: Dict[str, pd.DataFrame],
    ref_frames: Dict[str, pd.DataFrame],
    channels: Sequence[str] = MAPE_CHANNELS,
    names: Optional[Sequence[str]] = None,
) -> Dict[str, float]:
    out = {}
    for name, p, r in _aligned(pred_frames, ref_frames, channels, names):
        scale = channel_scale(r)
        for i, channel in enumerate(channels):
            out[f"{name}.{channel}"] = mape(p[:, i] / scale[i], r[:, i] / scale[i])
    return out


def reference_grid(trajectory, ref_frames: Dict[str, pd.DataFrame]):
    """Reference rows whose time the trajectory reached, and those times"""
    first = next(iter(ref_frames.values()))
    t_ref = first["t"].to_numpy(dtype=float)
    reached = t_ref <= trajectory.t[-1] + 1e-9 if len(trajectory) else np.zeros(len(t_ref), bool)
    clipped = {name: frame[reached].reset_index(drop=True) for name, frame in ref_frames.items()}
    return t_ref[reached], clipped


def trajectory_mape(
    trajectory,
    ref_frames: Dict[str, pd.DataFrame],
    corrected: bool = False,
    channels: Sequence[str] = MAPE_CHANNELS,
    names: Optional[Sequence[str]] = None,
) -> float:
    """MAPE of a system trajectory resampled onto the reference sample times it covers"""
    times, ref = reference_grid(trajectory, ref_frames)
    if times.size == 0:
        raise ValueError("trajectory covers none of the reference samples")
    pred = trajectory.hx_frames(times, corrected=corrected)
    return mape_all(pred, ref, channels, names)


def parity_frame(
    pred_frames: Dict[str, pd.DataFrame],
    ref_frames: Dict[str, pd.DataFrame],
    solver: str,
    channels: Sequence[str] = MAPE_CHANNELS,
) -> pd.DataFrame:
    """Long table (solver, channel, step, predicted, reference) in physical units"""
    parts = []
    for name, p, r in _aligned(pred_frames, ref_frames, channels):
        steps = np.arange(len(p))
        for i, channel in enumerate(channels):
            parts.append(
                pd.DataFrame(
                    {
                        "solver": solver,
                        "channel": f"{name}.{channel}",
                        "step": steps,
                        "predicted": p[:, i],
                        "reference": r[:, i],
                    }
                )
            )
    columns = ["solver", "channel", "step", "predicted", "reference"]
    if not parts:
        return pd.DataFrame(columns=columns)
    return pd.concat(parts, ignore_index=True)[columns]
