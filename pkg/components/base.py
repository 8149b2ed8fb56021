from abc import ABC
from abc import abstractmethod
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from plant_oracle import DEFAULT_PARAMETERS
from plant_oracle import PlantParameters
from topology import Topology


@dataclass
class ExchangerOutputs:
    """Tentative outputs of every exchanger, (n_hx, 9) in OUTPUT_COLUMNS order"""

    values: np.ndarray
    dt: float
    handle: object = None
    clamped: bool = False


class HeatExchangerBank(ABC):
    """All heat exchangers of a topology, condensers first"""

    # samples of input/state history ``reset`` needs
    history_length = 1

    @abstractmethod
    def reset(self, t0: float, x_history: np.ndarray, s_history: np.ndarray) -> np.ndarray:
        """Start from (T, n_hx, 8) inputs and (T, n_hx, 2) states; returns outputs at t0"""
        pass

    @abstractmethod
    def evaluate(self, x: np.ndarray, s: np.ndarray, dt: float) -> ExchangerOutputs:
        """Outputs dt seconds after the last commit, without committing"""
        pass

    @abstractmethod
    def commit(self, outputs: ExchangerOutputs, x: np.ndarray, s: np.ndarray) -> None:
        """Accept an evaluation as the new reference point"""
        pass

    @abstractmethod
    def latent_error(self, x: np.ndarray, s: np.ndarray, dt: float) -> float:
        """Embedded 4(5) error estimate of the exchanger dynamics over dt"""
        pass


class ComponentSet(ABC):
    """Compressor and valve laws plus the exchanger bank the system solver couples"""

    kind = ""

    def __init__(self, topology: Topology, params: PlantParameters = DEFAULT_PARAMETERS):
        self.topology = topology
        self.params = params

    @abstractmethod
    def compressor(self, p_suct, p_dis, h_in, speed) -> Tuple[np.ndarray, np.ndarray]:
        """(mass flow, outlet enthalpy) per compressor"""
        pass

    @abstractmethod
    def valve(self, p_in, p_out, h_in, opening) -> Tuple[np.ndarray, np.ndarray]:
        """(mass flow, outlet enthalpy) per valve"""
        pass

    @property
    @abstractmethod
    def exchangers(self) -> HeatExchangerBank:
        pass
