import logging
from dataclasses import replace
from typing import Dict
from typing import Optional

from corrector import CorrectorPipeline
from dae import DASSL
from dae import DaeProblem
from dae import StepRecord
from dae import integrate_dassl
from exceptions import StepFailure
from solvers.base import SystemSolver
from system import CycleEvaluation
from system import CycleModel
from system import HighResMask
from system import Trajectory
from system import actuation_segments

logger = logging.getLogger(__name__)


class DasslSolver(SystemSolver):
    """
    Variable-order BDF driven toward successive targets t + increment with
    increment = dassl_increment * target spacing. A row is recorded at an
    accepted step once max(dassl_min_output * target, configured minimum)
    seconds have passed since the previous row; recorded rows reuse the
    evaluation cached at acceptance.
    """

    mode = DASSL

    def advance(
        self,
        model: CycleModel,
        trajectory: Trajectory,
        mask: HighResMask,
        t_end: float,
        corrector: Optional[CorrectorPipeline],
    ) -> None:
        cfg = model.config
        highres = cfg.highres
        for t0, t1, index in actuation_segments(model.profile, mask, t_end):
            target = mask.target_at(index)
            increment = highres.dassl_increment * target
            min_output = max(highres.dassl_min_output * target, cfg.dassl_min_output)
            dae_config = replace(cfg.dae_config(), dassl_min_output=min_output)

            model.hold_index = index
            accepted: Dict[float, CycleEvaluation] = {}

            def on_step(record: StepRecord) -> None:
                accepted[record.t] = model.accept(record.t, record.y)

            problem = DaeProblem.from_rhs(model.rhs, t0, model.current.y)
            result = integrate_dassl(problem, t1, dae_config, increment, on_step=on_step)
            logger.debug(
                "segment [%.6g, %.6g]: %d internal steps, %d rows",
                t0,
                t1,
                len(result.steps),
                len(result.t) - 1,
            )
            last = len(result.t) - 1
            for k in range(1, len(result.t)):
                point = accepted[float(result.t[k])]
                self.record(
                    trajectory,
                    model,
                    point,
                    point.t - trajectory.t[-1],
                    corrector,
                    h_used=float(result.h_used[k]),
                    order=float(result.order[k]),
                    newton_iters=float(result.newton_iters[k]),
                    rejected=float(result.stats.n_rejected if k == last else 0),
                    highres=float(mask.mask[index]),
                )
            model.hold_index = None
            if result.failed:
                raise StepFailure(result.failure_reason, t=result.failure_t)
