import os

import numpy as np
import pandas as pd

from artifacts import read_versioned_csv
from components.oracle import OracleComponents
from debug_tools import DebugTimer
from performance_analysis import SCALE_COLUMNS
from performance_analysis import format_summary
from performance_analysis import run_scale_study
from performance_analysis import summarize_trajectory
from performance_analysis import write_scale_study
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS
from system import SystemConfig
from system import Trajectory
from system import write_trajectory
from topology import build_topology


def test_scale_study_table_shape():
    frame = run_scale_study(
        [1], ["algebraic", "ida"], 1, SystemConfig(), lambda topology: OracleComponents(topology)
    )
    assert list(frame.columns) == SCALE_COLUMNS
    assert list(frame["mode"]) == ["algebraic", "ida"]
    assert list(frame["n_p"]) == [3, 3]
    assert set(frame["failed"]) <= {0, 1}
    assert frame.loc[frame["mode"] == "ida", "lsq_used"].isin([0, 1]).all()


def test_write_scale_study_with_chart(tmp_path):
    frame = pd.DataFrame(
        [
            {**dict.fromkeys(SCALE_COLUMNS, 0), "n_c": 2, "mode": "ida", "runtime": 1.0},
            {**dict.fromkeys(SCALE_COLUMNS, 0), "n_c": 4, "mode": "ida", "runtime": 3.0},
            {**dict.fromkeys(SCALE_COLUMNS, 0), "n_c": 4, "mode": "dassl", "failed": 1},
        ],
        columns=SCALE_COLUMNS,
    )
    paths = write_scale_study(str(tmp_path / "scale_study.csv"), frame, chart=True)
    assert [os.path.basename(p) for p in paths] == ["scale_study.csv", "scale_study.svg"]
    assert len(read_versioned_csv(paths[0], "scale_study")) == 3


def test_summarize_trajectory(tmp_path):
    topology = build_topology(1, 1)
    trajectory = Trajectory(topology, "ida")
    for t, dt in ((0.0, 0.0), (1.0, 1.0), (3.0, 2.0)):
        trajectory.record(
            t,
            dt,
            np.ones(topology.state_dim),
            np.ones((topology.n_hx, len(OUTPUT_COLUMNS))),
            np.zeros((topology.n_hx, len(INPUT_COLUMNS))),
            np.full(topology.n_p, 1e6),
            rejected=1.0,
            newton_iters=2.0,
            solve_evals=4.0,
        )
    path = write_trajectory(str(tmp_path / "trajectory_ida.csv"), trajectory)
    summary = summarize_trajectory(path)
    assert summary["rows"] == 3
    assert summary["t_end"] == 3.0
    assert summary["rejected_steps"] == 3.0
    assert summary["newton_iterations"] == 6.0
    assert summary["dt_min"] == 1.0 and summary["dt_max"] == 2.0
    assert summary["solve_evals_max"] == 4.0
    text = format_summary(summary, "ida")
    assert text.splitlines()[0] == "ida"
    assert "t_end" in text


def test_debug_timer_accumulates():
    timings = {}
    for _ in range(2):
        with DebugTimer("stage", timings) as timer:
            pass
    assert timer.elapsed >= 0.0
    assert set(timings) == {"stage"}
    assert timings["stage"] >= timer.elapsed
