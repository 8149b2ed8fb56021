import logging
from typing import Optional

from corrector import CorrectorPipeline
from solvers.base import SystemSolver
from solvers.base import feedback_state
from system import ALGEBRAIC
from system import CycleModel
from system import HighResMask
from system import Trajectory
from system import dt_from_error

logger = logging.getLogger(__name__)


class AlgebraicSolver(SystemSolver):
    """
    Explicit Euler on the mass/energy states with the junction pressures
    solved at every point. The step is the RK45-adapted size clamped to
    [dt_min, target spacing] and never crosses into a window with a
    different target spacing.
    """

    mode = ALGEBRAIC

    def advance(
        self,
        model: CycleModel,
        trajectory: Trajectory,
        mask: HighResMask,
        t_end: float,
        corrector: Optional[CorrectorPipeline],
    ) -> None:
        cfg = model.config
        profile = model.profile
        point = model.current
        tiny = 1e-9 * max(1.0, t_end)
        while point.t < t_end - tiny:
            t = point.t
            index = profile.index_at(t)
            target = mask.target_at(index)
            error = model.latent_error(t, point.y, target)
            dt = dt_from_error(error, target, cfg.eps_dt, min(cfg.dt_min, target), target)
            change = mask.next_change(index)
            if change is not None and change * profile.dt > t + tiny:
                dt = min(dt, change * profile.dt - t)
            dt = min(dt, t_end - t)

            point = model.accept(t + dt, point.y + dt * point.ydot)
            corrected = self.record(
                trajectory,
                model,
                point,
                dt,
                corrector,
                h_used=dt,
                rejected=0.0,
                latent_error=error,
                highres=float(mask.mask[index]),
            )
            if corrected is not None and corrector.config.feedback:
                point = model.refresh(feedback_state(model, point.y, corrected))
