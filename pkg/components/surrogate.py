from typing import List
from typing import Optional
from typing import Tuple

import numpy as np

from components.base import ComponentSet
from components.base import ExchangerOutputs
from components.base import HeatExchangerBank
from pinode import Normalizer
from pinode import Pinode
from pinode import PinodeRunner
from pinode import SurrogateStep
from plant_oracle import DEFAULT_PARAMETERS
from plant_oracle import PlantParameters
from static_models import StaticModel
from static_models import compressor_eval
from static_models import valve_eval
from topology import CONDENSER
from topology import Topology


class SurrogateExchangers(HeatExchangerBank):
    """One closed-loop PINODE runner per exchanger; runners of a kind share weights"""

    def __init__(
        self,
        topology: Topology,
        condenser: Tuple[Pinode, Normalizer],
        evaporator: Tuple[Pinode, Normalizer],
        reencode_every: Optional[int] = None,
    ):
        self.runners: List[PinodeRunner] = []
        for hx in topology.heat_exchangers:
            model, normalizer = condenser if hx.kind == CONDENSER else evaporator
            self.runners.append(PinodeRunner(model, normalizer, reencode_every))
        self.history_length = max(r.model.config.t_enc for r in self.runners)

    def reset(self, t0: float, x_history: np.ndarray, s_history: np.ndarray) -> np.ndarray:
        steps = [
            runner.reset(x_history[:, j], s_history[:, j])
            for j, runner in enumerate(self.runners)
        ]
        return np.stack([step.outputs for step in steps])

    def evaluate(self, x: np.ndarray, s: np.ndarray, dt: float) -> ExchangerOutputs:
        steps: List[SurrogateStep] = [
            runner.evaluate(x[j], s[j], dt) for j, runner in enumerate(self.runners)
        ]
        return ExchangerOutputs(np.stack([step.outputs for step in steps]), dt, handle=steps)

    def commit(self, outputs: ExchangerOutputs, x: np.ndarray, s: np.ndarray) -> None:
        for j, (runner, step) in enumerate(zip(self.runners, outputs.handle)):
            runner.commit(step, x[j], s[j])

    def latent_error(self, x: np.ndarray, s: np.ndarray, dt: float) -> float:
        return max(runner.latent_error(x[j], s[j], dt) for j, runner in enumerate(self.runners))


class SurrogateComponents(ComponentSet):
    kind = "surrogate"

    def __init__(
        self,
        topology: Topology,
        condenser: Tuple[Pinode, Normalizer],
        evaporator: Tuple[Pinode, Normalizer],
        compressor_model: StaticModel,
        valve_model: StaticModel,
        params: PlantParameters = DEFAULT_PARAMETERS,
        reencode_every: Optional[int] = None,
    ):
        super().__init__(topology, params)
        self.compressor_model = compressor_model
        self.valve_model = valve_model
        self._bank = SurrogateExchangers(topology, condenser, evaporator, reencode_every)

    def compressor(self, p_suct, p_dis, h_in, speed) -> Tuple[np.ndarray, np.ndarray]:
        return compressor_eval(self.compressor_model, p_suct, p_dis, h_in, speed)

    def valve(self, p_in, p_out, h_in, opening) -> Tuple[np.ndarray, np.ndarray]:
        return valve_eval(self.valve_model, p_in, p_out, h_in, opening)

    @property
    def exchangers(self) -> HeatExchangerBank:
        return self._bank
