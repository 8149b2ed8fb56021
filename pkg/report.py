"""
Report emission: result tables, parity data, Pareto sets, design-space grids,
step-size histories and energy totals, all as versioned CSV; optional static
SVG line charts next to them.
"""

import logging
import os
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence

import numpy as np
import pandas as pd

from artifacts import read_versioned_csv
from artifacts import write_line_chart
from artifacts import write_versioned_csv
from bayesopt import ParamSpace
from bayesopt import best_from_log
from bayesopt import design_space_grid
from bayesopt import pareto_front
from dae import DASSL
from dae import IDA
from dot_generator import render_dot
from dot_generator import write_dot
from metrics import MAPE_CHANNELS
from metrics import MAPE_FLOOR
from metrics import parity_frame
from metrics import reference_grid
from system import ALGEBRAIC
from system import Trajectory
from topology import Topology

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
SOLVER_ORDER = [ALGEBRAIC, IDA, DASSL]
SOLVER_LABELS = {ALGEBRAIC: "Algebraic", IDA: "DAE-IDA", DASSL: "DAE-DASSL"}
TABLE_COLUMNS = ["solver", "MAPE_all [%]", "t_simulation [s]"]


def _ordered(modes) -> List[str]:
    return [m for m in SOLVER_ORDER if m in modes]


def _table(logs: Dict[str, pd.DataFrame], column: str) -> pd.DataFrame:
    rows = []
    for mode in _ordered(logs):
        log = logs[mode]
        usable = log[log["failed"] == 0] if "failed" in log.columns else log
        if usable.empty:
            rows.append({TABLE_COLUMNS[0]: SOLVER_LABELS[mode]})
            continue
        best = usable.iloc[int(np.argmin(usable[column].to_numpy(dtype=float)))]
        rows.append(
            {
                TABLE_COLUMNS[0]: SOLVER_LABELS[mode],
                TABLE_COLUMNS[1]: float(best["MAPE_all"]),
                TABLE_COLUMNS[2]: float(best["t_simulation"]),
            }
        )
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def best_objective_table(logs: Dict[str, pd.DataFrame]) -> pd.DataFrame:
    """One row per solver at its best weighted objective"""
    return _table(logs, "objective")


def fastest_table(logs: Dict[str, pd.DataFrame]) -> pd.DataFrame:
    """One row per solver at its fastest successful simulation"""
    return _table(logs, "t_simulation")


def format_tables(table1: pd.DataFrame, table2: pd.DataFrame) -> str:
    def block(title: str, table: pd.DataFrame) -> str:
        body = table.to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="failed")
        return f"{title}\n{body}\n"

    header = (
        f"MAPE_all over channels {', '.join(MAPE_CHANNELS)} of every heat exchanger, "
        f"each scaled by its largest reference magnitude, denominator floor {MAPE_FLOOR:g}.\n"
        "Objective terms are min-max normalized over the initial samples.\n\n"
    )
    return (
        header
        + block("Table 1: best overall objective (0.5 MAPE + 0.5 time)", table1)
        + "\n"
        + block("Table 2: fastest simulation time", table2)
    )


def combined_pareto(logs: Dict[str, pd.DataFrame]) -> pd.DataFrame:
    parts = []
    for mode in _ordered(logs):
        front = pareto_front(logs[mode])
        parts.append(
            pd.DataFrame(
                {
                    "solver": mode,
                    "iteration": front["iteration"].to_numpy(),
                    "MAPE_all": front["MAPE_all"].to_numpy(dtype=float),
                    "t_simulation": front["t_simulation"].to_numpy(dtype=float),
                }
            ).sort_values("MAPE_all", kind="mergesort")
        )
    columns = ["solver", "iteration", "MAPE_all", "t_simulation"]
    if not parts:
        return pd.DataFrame(columns=columns)
    return pd.concat(parts, ignore_index=True)[columns]


def dt_history_frame(trajectories: Dict[str, Trajectory]) -> pd.DataFrame:
    parts = []
    for mode in _ordered(trajectories):
        frame = trajectories[mode].to_frame()
        parts.append(
            pd.DataFrame(
                {
                    "solver": mode,
                    "t": frame["t"],
                    "dt": frame["dt"],
                    "h_used": frame["h_used"],
                    "order": frame["order"],
                    "highres": frame["highres"],
                }
            )
        )
    columns = ["solver", "t", "dt", "h_used", "order", "highres"]
    if not parts:
        return pd.DataFrame(columns=columns)
    return pd.concat(parts, ignore_index=True)[columns]


def energy_total_frame(
    trajectory: Trajectory, reference: Optional[Dict[str, pd.DataFrame]] = None
) -> pd.DataFrame:
    """System refrigerant energy sum E_hx over time: predicted, corrected and reference"""
    names = [hx.name for hx in trajectory.topology.heat_exchangers]
    times = np.asarray(trajectory.t, dtype=float)
    if reference is not None:
        times, _ = reference_grid(trajectory, reference)

    def total(frames: Dict[str, pd.DataFrame]) -> np.ndarray:
        return np.sum([frames[n]["E_hx"].to_numpy(dtype=float) for n in names], axis=0)

    frame = pd.DataFrame({"t": times, "predicted": total(trajectory.hx_frames(times))})
    if trajectory.corrected:
        frame["corrected"] = total(trajectory.hx_frames(times, corrected=True))
    if reference is not None:
        _, ref = reference_grid(trajectory, reference)
        frame["reference"] = total(ref)
    return frame


def corrector_parity_frame(
    trajectory: Trajectory, reference: Dict[str, pd.DataFrame]
) -> pd.DataFrame:
    """Per condenser ME channel and reference step: pred, bench, corrected (physical units)"""
    columns = ["step", "t", "channel", "pred", "bench", "corrected"]
    if not trajectory.corrected:
        return pd.DataFrame(columns=columns)
    times, ref = reference_grid(trajectory, reference)
    pred = trajectory.hx_frames(times)
    corrected = trajectory.hx_frames(times, corrected=True)
    parts = []
    for hx in trajectory.topology.heat_exchangers[: trajectory.topology.n_c]:
        for channel in ("E_hx", "M_r"):
            parts.append(
                pd.DataFrame(
                    {
                        "step": np.arange(len(times)),
                        "t": times,
                        "channel": f"{hx.name}.{channel}",
                        "pred": pred[hx.name][channel].to_numpy(dtype=float),
                        "bench": ref[hx.name][channel].to_numpy(dtype=float),
                        "corrected": corrected[hx.name][channel].to_numpy(dtype=float),
                    }
                )
            )
    return pd.concat(parts, ignore_index=True)[columns]


def solver_parity(
    trajectories: Dict[str, Trajectory], reference: Dict[str, pd.DataFrame]
) -> pd.DataFrame:
    parts = []
    for mode in _ordered(trajectories):
        times, ref = reference_grid(trajectories[mode], reference)
        if times.size:
            parts.append(parity_frame(trajectories[mode].hx_frames(times), ref, mode))
    if not parts:
        return parity_frame({}, {}, "")
    return pd.concat(parts, ignore_index=True)


def load_trajectories(run_dir: str, topology: Topology) -> Dict[str, Trajectory]:
    trajectories = {}
    for mode in SOLVER_ORDER:
        path = os.path.join(run_dir, f"trajectory_{mode}.csv")
        if os.path.exists(path):
            frame = read_versioned_csv(path, "trajectory")
            trajectories[mode] = Trajectory.from_frame(frame, topology, mode)
    return trajectories


def load_tune_logs(run_dir: str) -> Dict[str, pd.DataFrame]:
    logs = {}
    for mode in SOLVER_ORDER:
        path = os.path.join(run_dir, f"tune_log_{mode}.csv")
        if os.path.exists(path):
            logs[mode] = read_versioned_csv(path, "tune_log")
    return logs


def write_report(
    run_dir: str,
    topology: Topology,
    reference: Optional[Dict[str, pd.DataFrame]] = None,
    charts: bool = False,
    contour_points: int = 25,
) -> List[str]:
    """Emit every report artifact the stored runs under ``run_dir`` support"""
    written: List[str] = []

    def save(name: str, frame: pd.DataFrame, schema: str) -> None:
        path = os.path.join(run_dir, name)
        written.append(write_versioned_csv(path, frame, schema, REPORT_SCHEMA_VERSION))

    logs = load_tune_logs(run_dir)
    if logs:
        table1, table2 = best_objective_table(logs), fastest_table(logs)
        save("table1.csv", table1, "table_best_objective")
        save("table2.csv", table2, "table_fastest")
        path = os.path.join(run_dir, "tables.txt")
        with open(path, "w") as fh:
            fh.write(format_tables(table1, table2))
        written.append(path)
        save("pareto.csv", combined_pareto(logs), "pareto")
        for mode, log in logs.items():
            space = ParamSpace.for_mode(mode)
            if len(log[log["failed"] == 0]) >= 2:
                grid = design_space_grid(log, space, best_from_log(log, space), contour_points)
                save(f"contour_{mode}.csv", grid, "design_space")
            if charts:
                written.append(
                    write_line_chart(
                        os.path.join(run_dir, f"best_objective_{mode}.svg"),
                        log["iteration"].to_numpy(dtype=float),
                        {"best objective": log["best_objective"].to_numpy(dtype=float)},
                        "evaluation",
                        "objective",
                        title=SOLVER_LABELS[mode],
                    )
                )

    if charts:
        dot_path = os.path.join(run_dir, "topology.dot")
        if not os.path.exists(dot_path):
            write_dot(dot_path, topology)
        rendered = render_dot(dot_path)
        if rendered is not None:
            written.append(rendered)

    trajectories = load_trajectories(run_dir, topology)
    if trajectories:
        history = dt_history_frame(trajectories)
        save("dt_history.csv", history, "dt_history")
        if charts:
            written.append(_dt_chart(run_dir, history))
    if trajectories and reference is not None:
        save("parity.csv", solver_parity(trajectories, reference), "parity")
        for mode in _ordered(trajectories):
            trajectory = trajectories[mode]
            save(
                f"energy_total_{mode}.csv",
                energy_total_frame(trajectory, reference),
                "energy_total",
            )
            if trajectory.corrected:
                save(
                    f"corrector_parity_{mode}.csv",
                    corrector_parity_frame(trajectory, reference),
                    "corrector_parity",
                )
    logger.info("report: %d artifacts under %s", len(written), run_dir)
    return written


def _dt_chart(run_dir: str, history: pd.DataFrame) -> str:
    modes: Sequence[str] = _ordered(set(history["solver"]))
    first = history[history["solver"] == modes[0]]
    series = {}
    for mode in modes:
        rows = history[history["solver"] == mode]
        series[SOLVER_LABELS[mode]] = np.interp(
            first["t"].to_numpy(dtype=float),
            rows["t"].to_numpy(dtype=float),
            rows["dt"].to_numpy(dtype=float),
        )
    return write_line_chart(
        os.path.join(run_dir, "dt_history.svg"),
        first["t"].to_numpy(dtype=float),
        series,
        "t [s]",
        "dt [s]",
        title="Step size history",
    )
