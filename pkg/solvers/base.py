import logging
import time
from abc import ABC
from abc import abstractmethod
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np

from components.base import ComponentSet
from corrector import CorrectorPipeline
from exceptions import ThermoloopError
from plant_oracle import ActuationProfile
from plant_oracle import PlantOracle
from system import ENERGY
from system import MASS
from system import CycleEvaluation
from system import CycleModel
from system import HighResMask
from system import SystemConfig
from system import Trajectory
from system import highres_mask
from system import with_mode
from topology import Topology

logger = logging.getLogger(__name__)


class SystemSolver(ABC):
    """Stepping strategy over a CycleModel; ``simulate`` is shared, ``advance`` is per mode"""

    mode = ""

    def simulate(
        self,
        topology: Topology,
        components: ComponentSet,
        profile: ActuationProfile,
        config: SystemConfig,
        horizon: int,
        corrector: Optional[CorrectorPipeline] = None,
        y0: Optional[np.ndarray] = None,
        history: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ) -> Trajectory:
        if horizon < 0:
            raise ValueError("horizon must be non-negative")
        if config.mode != self.mode:
            config = with_mode(config, self.mode)
        if y0 is None:
            y0 = PlantOracle(topology, components.params).initial_state()
        model = CycleModel(topology, components, profile, config)
        trajectory = Trajectory(topology, self.mode)
        mask = highres_mask(profile, config.highres)
        t_end = horizon * profile.dt

        wall, cpu = time.perf_counter(), time.thread_time()
        try:
            start = model.start(0.0, y0, history)
            self.record(trajectory, model, start, 0.0, corrector, highres=float(mask.mask[0]))
            if t_end > 0:
                self.advance(model, trajectory, mask, t_end, corrector)
        except (ThermoloopError, ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
            trajectory.fail(str(e), t=float(getattr(e, "t", float("nan"))))
            logger.warning(
                "%s solver failed after %d rows: %s", self.mode, len(trajectory), e
            )
        trajectory.wall_time = time.perf_counter() - wall
        trajectory.cpu_time = time.thread_time() - cpu
        trajectory.solve_stats = model.stats
        logger.info(
            "%s run: %d rows to t=%.6g in %.3f s (%d pressure solves)",
            self.mode,
            len(trajectory),
            trajectory.t[-1] if trajectory.t else float("nan"),
            trajectory.wall_time,
            model.stats.n_solves,
        )
        return trajectory

    @abstractmethod
    def advance(
        self,
        model: CycleModel,
        trajectory: Trajectory,
        mask: HighResMask,
        t_end: float,
        corrector: Optional[CorrectorPipeline],
    ) -> None:
        """Step from the accepted start point to t_end, recording rows; may raise"""
        pass

    def record(
        self,
        trajectory: Trajectory,
        model: CycleModel,
        point: CycleEvaluation,
        dt: float,
        corrector: Optional[CorrectorPipeline],
        **diagnostics: float,
    ) -> Optional[np.ndarray]:
        """Append one row; returns the corrected outputs when a corrector runs"""
        return self.record_values(
            trajectory,
            model,
            point.t,
            dt,
            point.y,
            point.outputs,
            point.inputs,
            point.pressures,
            corrector,
            solve_evals=point.report.n_evals,
            lsq=float(model.use_lsq),
            **diagnostics,
        )

    def record_values(
        self,
        trajectory: Trajectory,
        model: CycleModel,
        t: float,
        dt: float,
        y: np.ndarray,
        outputs: np.ndarray,
        inputs: np.ndarray,
        pressures: np.ndarray,
        corrector: Optional[CorrectorPipeline],
        **diagnostics: float,
    ) -> Optional[np.ndarray]:
        corrected = None
        correction = None
        if corrector is not None:
            cond = slice(0, model.topology.n_c)
            correction = corrector.step(t, inputs[cond], outputs[cond])
            energy, mass = corrector.scaling.physical(correction.m_corr)
            corrected = outputs.copy()
            corrected[cond, ENERGY] = energy
            corrected[cond, MASS] = mass
            diagnostics["corr_skipped"] = float(correction.skipped)
        trajectory.record(
            t, dt, y, outputs, inputs, pressures, corrected, correction, **diagnostics
        )
        return corrected


def feedback_state(model: CycleModel, y: np.ndarray, corrected: np.ndarray) -> np.ndarray:
    """State with the condenser mass and energy replaced by corrected values"""
    n_hx, n_c = model.topology.n_hx, model.topology.n_c
    y = y.copy()
    y[:n_c] = corrected[:n_c, MASS]
    y[n_hx : n_hx + n_c] = corrected[:n_c, ENERGY]
    return y


def interpolate_rows(points: List[CycleEvaluation], t: float) -> CycleEvaluation:
    """Linear blend of the two accepted points around t; outside the span the nearest one"""
    times = np.array([p.t for p in points])
    i = int(np.searchsorted(times, t))
    if i <= 0:
        return points[0]
    if i >= len(points):
        return points[-1]
    left, right = points[i - 1], points[i]
    w = (t - left.t) / (right.t - left.t)

    def blend(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (1.0 - w) * a + w * b

    return CycleEvaluation(
        t=t,
        y=blend(left.y, right.y),
        ydot=blend(left.ydot, right.ydot),
        pressures=blend(left.pressures, right.pressures),
        outputs=blend(left.outputs, right.outputs),
        inputs=blend(left.inputs, right.inputs),
        boundary=blend(left.boundary, right.boundary),
        report=right.report,
        hx=right.hx,
    )
