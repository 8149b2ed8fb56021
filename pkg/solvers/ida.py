import logging
from typing import List
from typing import Optional

import numpy as np

from corrector import CorrectorPipeline
from dae import IDA
from dae import DaeProblem
from dae import StepRecord
from dae import integrate_ida
from exceptions import StepFailure
from solvers.base import SystemSolver
from solvers.base import interpolate_rows
from system import CycleEvaluation
from system import CycleModel
from system import HighResMask
from system import Trajectory
from system import actuation_segments

logger = logging.getLogger(__name__)


class IdaSolver(SystemSolver):
    """
    Variable-order BDF with interpolated output. The run is split where the
    actuation or the target spacing changes; within a piece the integrator
    steps freely and outputs are requested every min(target, output interval)
    seconds. Exchanger outputs at those times are blended from the accepted
    internal steps rather than recomputed.
    """

    mode = IDA

    def advance(
        self,
        model: CycleModel,
        trajectory: Trajectory,
        mask: HighResMask,
        t_end: float,
        corrector: Optional[CorrectorPipeline],
    ) -> None:
        cfg = model.config
        dae_config = cfg.dae_config()
        for t0, t1, index in actuation_segments(model.profile, mask, t_end):
            spacing = min(mask.target_at(index), cfg.ida_output)
            n = max(int(np.ceil((t1 - t0) / spacing - 1e-9)), 1)
            t_eval = np.linspace(t0, t1, n + 1)[1:]

            model.hold_index = index
            accepted: List[CycleEvaluation] = [model.current]

            def on_step(record: StepRecord) -> None:
                accepted.append(model.accept(record.t, record.y))

            problem = DaeProblem.from_rhs(model.rhs, t0, model.current.y)
            result = integrate_ida(problem, t_eval, dae_config, on_step=on_step)
            logger.debug(
                "segment [%.6g, %.6g]: %d internal steps, %d rows",
                t0,
                t1,
                len(result.steps),
                len(result.t),
            )
            last = len(result.t) - 1
            for k, t in enumerate(result.t):
                point = interpolate_rows(accepted, float(t))
                self.record_values(
                    trajectory,
                    model,
                    float(t),
                    float(t) - trajectory.t[-1],
                    result.y[k],
                    point.outputs,
                    point.inputs,
                    point.pressures,
                    corrector,
                    h_used=float(result.h_used[k]),
                    order=float(result.order[k]),
                    newton_iters=float(result.newton_iters[k]),
                    rejected=float(result.stats.n_rejected if k == last else 0),
                    solve_evals=float(point.report.n_evals),
                    lsq=float(model.use_lsq),
                    highres=float(mask.mask[index]),
                )
            model.hold_index = None
            if result.failed:
                raise StepFailure(result.failure_reason, t=result.failure_t)
