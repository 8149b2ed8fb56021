"""Exact plant laws wrapped as a component set; the reference the surrogates are checked against"""

from typing import Tuple

import numpy as np

from components.base import ComponentSet
from components.base import ExchangerOutputs
from components.base import HeatExchangerBank
from pinode import rkf45_pair
from plant_oracle import DEFAULT_PARAMETERS
from plant_oracle import DEFAULT_PROPERTIES
from plant_oracle import PlantOracle
from plant_oracle import PlantParameters
from plant_oracle import PropertyMap
from plant_oracle import compressor_law
from plant_oracle import valve_law
from topology import Topology


class OracleExchangers(HeatExchangerBank):
    """Outputs follow algebraically from (M_r, E_hx); there is no hidden state"""

    def __init__(self, oracle: PlantOracle):
        self.oracle = oracle

    def _outputs(self, x: np.ndarray, s: np.ndarray) -> Tuple[np.ndarray, bool]:
        y = np.concatenate([s[:, 0], s[:, 1]])
        return self.oracle.exchanger_outputs(y, x[:, 0], x[:, 2], x[:, 5])

    def reset(self, t0: float, x_history: np.ndarray, s_history: np.ndarray) -> np.ndarray:
        values, _ = self._outputs(x_history[-1], s_history[-1])
        return values

    def evaluate(self, x: np.ndarray, s: np.ndarray, dt: float) -> ExchangerOutputs:
        values, clamped = self._outputs(x, s)
        return ExchangerOutputs(values, dt, clamped=clamped)

    def commit(self, outputs: ExchangerOutputs, x: np.ndarray, s: np.ndarray) -> None:
        pass

    def local_rates(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """(M, E) rates of each exchanger with its boundary inputs frozen"""
        values, _ = self._outputs(x, s)
        k_out = self.oracle.params.k_outlet
        m_out = k_out * (values[:, 1] - x[:, 7])
        mdot = x[:, 4] - m_out
        edot = x[:, 4] * x[:, 5] - m_out * values[:, 3] - values[:, 5]
        return np.column_stack([mdot, edot])

    def latent_error(self, x: np.ndarray, s: np.ndarray, dt: float) -> float:
        scale = np.maximum(np.abs(s), 1e-12)
        z4, z5 = rkf45_pair(
            lambda z: self.local_rates(x, z.reshape(s.shape) * scale).ravel() / scale.ravel(),
            (s / scale).ravel(),
            dt,
        )
        return float(np.linalg.norm(z4 - z5))


class OracleComponents(ComponentSet):
    kind = "oracle"

    def __init__(
        self,
        topology: Topology,
        params: PlantParameters = DEFAULT_PARAMETERS,
        props: PropertyMap = DEFAULT_PROPERTIES,
    ):
        super().__init__(topology, params)
        self.props = props
        self.oracle = PlantOracle(topology, params, props)
        self._bank = OracleExchangers(self.oracle)

    def compressor(self, p_suct, p_dis, h_in, speed) -> Tuple[np.ndarray, np.ndarray]:
        return compressor_law(p_suct, p_dis, h_in, speed, self.params, self.props)

    def valve(self, p_in, p_out, h_in, opening) -> Tuple[np.ndarray, np.ndarray]:
        return valve_law(p_in, p_out, h_in, opening, self.params, self.props)

    @property
    def exchangers(self) -> HeatExchangerBank:
        return self._bank
