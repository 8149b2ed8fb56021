"""
Performance analysis utilities for thermoloop.

This module runs the scaling sweep over topology size and solver mode, and
summarizes the step-size and solve statistics of stored trajectories.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence

import numpy as np
import pandas as pd

from artifacts import read_schema_header
from artifacts import read_versioned_csv
from artifacts import write_line_chart
from artifacts import write_versioned_csv
from components.base import ComponentSet
from plant_oracle import make_profile
from system import SystemConfig
from system import simulate
from topology import Topology
from topology import build_topology

logger = logging.getLogger(__name__)

SCALE_SCHEMA_VERSION = 1
SCALE_COLUMNS = [
    "n_c",
    "n_v",
    "mode",
    "n_p",
    "state_dim",
    "runtime",
    "cpu_time",
    "rows",
    "failed",
    "failure_reason",
    "failure_t",
    "pressure_solves",
    "powell_solves",
    "lsq_solves",
    "lsq_used",
]


def scale_point(
    n_c: int,
    mode: str,
    n_steps: int,
    config: SystemConfig,
    make_components: Callable[[Topology], ComponentSet],
    seed: int,
) -> Dict[str, object]:
    """One sweep point: n_c compressors and n_c valve/evaporator pairs"""
    topology = build_topology(n_c, n_c)
    rng = np.random.default_rng(seed)
    profile = make_profile(topology, n_steps + 1, rng)
    trajectory = simulate(
        topology, make_components(topology), profile, replace(config, mode=mode), n_steps
    )
    stats = trajectory.solve_stats
    row = {
        "n_c": n_c,
        "n_v": n_c,
        "mode": mode,
        "n_p": topology.n_p,
        "state_dim": topology.state_dim,
        "runtime": trajectory.wall_time,
        "cpu_time": trajectory.cpu_time,
        "rows": len(trajectory),
        "failed": int(trajectory.failed),
        "failure_reason": trajectory.failure_reason,
        "failure_t": trajectory.failure_t,
        "pressure_solves": stats.n_solves if stats else 0,
        "powell_solves": stats.n_powell if stats else 0,
        "lsq_solves": stats.n_lsq if stats else 0,
        "lsq_used": int(bool(stats and stats.n_lsq > 0)),
    }
    logger.info(
        "n_c=%d %s: %.3f s, %d rows%s",
        n_c,
        mode,
        trajectory.wall_time,
        len(trajectory),
        f", FAILED at t={trajectory.failure_t:.6g}" if trajectory.failed else "",
    )
    return row


def run_scale_study(
    sizes: Sequence[int],
    modes: Sequence[str],
    n_steps: int,
    config: SystemConfig,
    make_components: Callable[[Topology], ComponentSet],
    seed: int = 0,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Runtime sweep over n_c = n_v in ``sizes`` for every solver mode. Failed
    simulations stay in the table with their reason; with ``workers`` > 1 the
    points run on a thread pool and cpu_time is the comparable column.
    """
    points = [(n_c, mode) for mode in modes for n_c in sorted(sizes)]

    def run(point) -> Dict[str, object]:
        n_c, mode = point
        return scale_point(n_c, mode, n_steps, config, make_components, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, points))
    else:
        rows = [run(point) for point in points]
    return pd.DataFrame(rows, columns=SCALE_COLUMNS)


def write_scale_study(path: str, frame: pd.DataFrame, chart: bool = False) -> List[str]:
    written = [write_versioned_csv(path, frame, "scale_study", SCALE_SCHEMA_VERSION)]
    if chart and not frame.empty:
        sizes = np.array(sorted(set(frame["n_c"])), dtype=float)
        series = {}
        for mode in dict.fromkeys(frame["mode"]):
            rows = frame[frame["mode"] == mode].set_index("n_c").reindex(sizes.astype(int))
            series[mode] = rows["runtime"].to_numpy(dtype=float)
        failed = frame[frame["failed"] == 1]["n_c"].to_numpy(dtype=float)
        written.append(
            write_line_chart(
                path.rsplit(".", 1)[0] + ".svg",
                sizes,
                series,
                "n_c",
                "runtime [s]",
                title="Scaling study",
                markers=failed,
            )
        )
    return written


def summarize_trajectory(path: str) -> Dict[str, float]:
    """Step-size, rejection, Newton and pressure-solve statistics of a stored trajectory"""
    header = read_schema_header(path)
    if header.get("schema") != "trajectory":
        raise ValueError(f"{path} is not a trajectory table")
    frame = read_versioned_csv(path)
    steps = frame["dt"].to_numpy(dtype=float)[1:]
    evals = frame["solve_evals"].dropna().to_numpy(dtype=float)
    summary = {
        "rows": float(len(frame)),
        "t_end": float(frame["t"].iloc[-1]) if len(frame) else float("nan"),
        "rejected_steps": float(np.nansum(frame["rejected"].to_numpy(dtype=float))),
        "newton_iterations": float(np.nansum(frame["newton_iters"].to_numpy(dtype=float))),
        "highres_rows": float(np.nansum(frame["highres"].to_numpy(dtype=float))),
        "lsq_rows": float(np.nansum(frame["lsq"].to_numpy(dtype=float))),
    }
    if steps.size:
        summary.update(
            {
                "dt_min": float(np.min(steps)),
                "dt_mean": float(np.mean(steps)),
                "dt_max": float(np.max(steps)),
            }
        )
    if evals.size:
        summary.update(
            {
                "solve_evals_p50": float(np.percentile(evals, 50)),
                "solve_evals_p90": float(np.percentile(evals, 90)),
                "solve_evals_max": float(np.max(evals)),
            }
        )
    return summary


def format_summary(summary: Dict[str, float], title: Optional[str] = None) -> str:
    lines = [title] if title else []
    width = max(len(k) for k in summary)
    lines.extend(f"{key.ljust(width)}  {value:.6g}" for key, value in summary.items())
    return "\n".join(lines)


if __name__ == "__main__":
    import sys

    if len(sys.argv) > 1:
        for trajectory_path in sys.argv[1:]:
            print(format_summary(summarize_trajectory(trajectory_path), trajectory_path))
    else:
        print("Usage: python performance_analysis.py <trajectory.csv> [...]")
