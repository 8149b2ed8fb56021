import logging
import os
from dataclasses import dataclass
from dataclasses import replace
from typing import Callable
from typing import Dict
from typing import Mapping
from typing import Optional

import numpy as np
import pandas as pd

from artifacts import read_versioned_csv
from artifacts import write_versioned_csv
from components.base import ComponentSet
from components.oracle import OracleComponents
from components.surrogate import SurrogateComponents
from corrector import CorrectorConfig
from corrector import CorrectorPipeline
from corrector import load_corrector
from dae import DASSL
from dae import IDA
from exceptions import ConfigError
from pinode import load_pinode
from plant_oracle import ActuationProfile
from plant_oracle import make_profile
from settings import Settings
from settings import load_settings
from solvers.algebraic import AlgebraicSolver
from solvers.base import SystemSolver
from solvers.dassl import DasslSolver
from solvers.ida import IdaSolver
from static_models import load_static
from system import ALGEBRAIC
from topology import CONDENSER
from topology import EVAPORATOR
from topology import Topology
from topology import build_topology

logger = logging.getLogger(__name__)

PROFILE_SCHEMA_VERSION = 1
CHECKPOINT_FILES = {
    CONDENSER: "condenser.json",
    EVAPORATOR: "evaporator.json",
    "compressor": "compressor.json",
    "valve": "valve.json",
    "corrector": "corrector.json",
}


def checkpoint_path(directory: str, name: str) -> str:
    return os.path.join(directory, CHECKPOINT_FILES[name])


@dataclass
class Scenario:
    settings: Settings
    topology: Topology
    profile: ActuationProfile
    rng: np.random.Generator

    def components(self, kind: Optional[str] = None) -> ComponentSet:
        sim = self.settings.simulation
        return ScenarioReader.get_components(
            kind or sim.components, self.topology, sim.checkpoints, sim.reencode_every
        )

    def component_factory(self, kind: Optional[str] = None) -> Callable[[], ComponentSet]:
        """Fresh component sets per call; surrogate runners carry per-run state"""
        return lambda: self.components(kind)

    def corrector(self, config: Optional[CorrectorConfig] = None) -> CorrectorPipeline:
        path = checkpoint_path(self.settings.simulation.checkpoints, "corrector")
        try:
            net, scaling = load_corrector(path)
        except OSError as e:
            raise ConfigError(f"corrector checkpoint {path} is missing: {e}") from e
        return CorrectorPipeline(net, scaling, config or self.settings.corrector)


class ScenarioReader:
    @staticmethod
    def get_solver(mode: str) -> SystemSolver:
        """Factory method to get the system solver for a mode"""
        if mode == ALGEBRAIC:
            return AlgebraicSolver()
        elif mode == IDA:
            return IdaSolver()
        elif mode == DASSL:
            return DasslSolver()
        else:
            raise ValueError("Unsupported solver mode")

    @staticmethod
    def get_components(
        kind: str,
        topology: Topology,
        checkpoints: str = "models",
        reencode_every: Optional[int] = None,
    ) -> ComponentSet:
        """Factory method for the component laws the system couples"""
        if kind == OracleComponents.kind:
            return OracleComponents(topology)
        elif kind == SurrogateComponents.kind:
            try:
                return SurrogateComponents(
                    topology,
                    condenser=load_pinode(checkpoint_path(checkpoints, CONDENSER)),
                    evaporator=load_pinode(checkpoint_path(checkpoints, EVAPORATOR)),
                    compressor_model=load_static(checkpoint_path(checkpoints, "compressor")),
                    valve_model=load_static(checkpoint_path(checkpoints, "valve")),
                    reencode_every=reencode_every,
                )
            except OSError as e:
                raise ConfigError(
                    f"surrogate checkpoints missing under {checkpoints}; run train first ({e})"
                ) from e
        else:
            raise ValueError("Unsupported component kind")

    @staticmethod
    def read_profile(path: str, topology: Topology) -> ActuationProfile:
        try:
            frame = read_versioned_csv(path, "actuation_profile")
        except OSError as e:
            raise ConfigError(f"cannot read actuation profile {path}: {e}") from e
        profile = ActuationProfile.from_frame(frame)
        if profile.n_c != topology.n_c or profile.n_v != topology.n_v:
            raise ConfigError(
                f"profile {path} drives {profile.n_c} compressors and {profile.n_v} valves, "
                f"topology has {topology.n_c} and {topology.n_v}"
            )
        return profile

    @staticmethod
    def build_profile(
        settings: Settings, topology: Topology, rng: np.random.Generator
    ) -> ActuationProfile:
        cfg = settings.profile
        if cfg.path:
            return ScenarioReader.read_profile(cfg.path, topology)
        # room for the dataset, a held-out continuation and the system horizon
        n = max(cfg.n_samples, settings.data.horizon + 1, settings.simulation.horizon + 1)
        profile = make_profile(
            topology,
            n,
            rng,
            jump_size=cfg.jump_size,
            segment_length=cfg.segment_length,
            speed_range=cfg.speed_range,
            opening_range=cfg.opening_range,
            constant=cfg.constant,
        )
        return replace(profile, dt=cfg.dt)

    @staticmethod
    def from_settings(settings: Settings) -> Scenario:
        topology = build_topology(settings.topology.n_c, settings.topology.n_v)
        rng = np.random.default_rng(settings.seed)
        profile = ScenarioReader.build_profile(settings, topology, rng)
        logger.info(
            "scenario: %d compressors, %d valves, %d profile samples at %.3g s",
            topology.n_c,
            topology.n_v,
            len(profile),
            profile.dt,
        )
        return Scenario(settings, topology, profile, rng)

    @staticmethod
    def from_file(path: Optional[str], env: Optional[Mapping[str, str]] = None) -> Scenario:
        return ScenarioReader.from_settings(load_settings(path, env))


def write_profile(path: str, profile: ActuationProfile) -> str:
    return write_versioned_csv(
        path, profile.to_frame(), "actuation_profile", PROFILE_SCHEMA_VERSION
    )


def read_reference(directory: str, topology: Topology) -> Dict[str, pd.DataFrame]:
    """Per-exchanger benchmark tables written by generate-data"""
    frames = {}
    for hx in topology.heat_exchangers:
        path = os.path.join(directory, f"{hx.name}.csv")
        try:
            frames[hx.name] = read_versioned_csv(path, "hx_dataset")
        except OSError as e:
            raise ConfigError(f"reference data {path} is missing; run generate-data first") from e
    return frames
