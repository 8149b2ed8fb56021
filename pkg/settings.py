"""
Run configuration: JSON scenario files layered over dataclass defaults, with
THERMOLOOP_<SECTION>__<FIELD> environment overrides, plus the run manifest.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import is_dataclass
from typing import Any
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Tuple
from typing import Union
from typing import get_args
from typing import get_origin
from typing import get_type_hints

from bayesopt import TuneConfig
from corrector import CorrectorConfig
from dae import DASSL
from dae import IDA
from exceptions import ConfigError
from pinode import ModelConfig
from pinode import TrainConfig
from static_models import StaticTrainConfig
from system import ALGEBRAIC
from system import SystemConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = "THERMOLOOP_"
MANIFEST_NAME = "manifest.json"


@dataclass
class TopologySettings:
    n_c: int = 2
    n_v: int = 1

    def __post_init__(self):
        if self.n_c < 1 or self.n_v < 1:
            raise ValueError("need at least one compressor and one valve")


@dataclass
class ProfileSettings:
    n_samples: int = 3000
    dt: float = 1.0
    jump_size: Tuple[float, float] = (6.0, 15.0)
    segment_length: Tuple[int, int] = (150, 400)
    speed_range: Tuple[float, float] = (30.0, 60.0)
    opening_range: Tuple[float, float] = (0.35, 0.65)
    constant: bool = False
    # CSV written by ActuationProfile.to_frame; overrides the random profile
    path: str = ""

    def __post_init__(self):
        if self.n_samples < 2 or self.dt <= 0:
            raise ValueError("profile needs at least two samples and a positive dt")
        if not 1 <= self.segment_length[0] <= self.segment_length[1]:
            raise ValueError("segment_length must be an increasing pair of positive counts")


@dataclass
class DataSettings:
    horizon: int = 2000
    required_window: int = 30
    validation_fraction: float = 0.2
    dir: str = "data"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("dataset horizon must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class SimulationSettings:
    horizon: int = 500
    components: str = "surrogate"
    checkpoints: str = "models"
    reencode_every: Optional[int] = None
    corrector: bool = False

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("simulation horizon must be non-negative")


@dataclass
class ScaleSettings:
    sizes: List[int] = field(default_factory=lambda: [2, 4, 8, 16])
    n_steps: int = 500
    modes: List[str] = field(default_factory=lambda: [ALGEBRAIC, IDA, DASSL])
    components: str = "oracle"

    def __post_init__(self):
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("scale study sizes must be positive")
        unknown = set(self.modes) - {ALGEBRAIC, IDA, DASSL}
        if unknown:
            raise ValueError(f"Unsupported solver mode: {sorted(unknown)[0]}")


@dataclass
class Settings:
    seed: int = 0
    out: str = "runs"
    topology: TopologySettings = field(default_factory=TopologySettings)
    profile: ProfileSettings = field(default_factory=ProfileSettings)
    data: DataSettings = field(default_factory=DataSettings)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    static: StaticTrainConfig = field(default_factory=StaticTrainConfig)
    corrector: CorrectorConfig = field(default_factory=CorrectorConfig)
    system: SystemConfig = field(default_factory=SystemConfig)
    tune: TuneConfig = field(default_factory=TuneConfig)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    scale: ScaleSettings = field(default_factory=ScaleSettings)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(value: Any, hint: Any, where: str) -> Any:
    if is_dataclass(hint):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{where}: expected an object")
        return build_section(hint, value, where)
    origin = get_origin(hint)
    if origin is Union:
        options = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, options[0], where)
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        (item,) = get_args(hint) or (Any,)
        return [_coerce(v, item, f"{where}[{i}]") for i, v in enumerate(value)]
    if origin in (tuple, Tuple):
        items = get_args(hint)
        if not isinstance(value, (list, tuple)) or len(value) != len(items):
            raise ConfigError(f"{where}: expected a list of {len(items)} values")
        return tuple(_coerce(v, t, f"{where}[{i}]") for i, (v, t) in enumerate(zip(value, items)))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def build_section(cls, data: Mapping[str, Any], where: str = ""):
    """Instantiate dataclass ``cls`` from a mapping, checking keys and scalar types"""
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key '{unknown[0]}'")
    hints = get_type_hints(cls)
    kwargs = {
        key: _coerce(value, hints[key], f"{where}.{key}" if where else key)
        for key, value in data.items()
    }
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{where or 'config'}: {e}") from e


def _parse_env_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def apply_env_overrides(data: Dict[str, Any], env: Mapping[str, str]) -> List[str]:
    """Fold THERMOLOOP_* variables into ``data``; returns the applied variable names"""
    applied = []
    for key in sorted(env):
        if not key.upper().startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX) :].lower().split("__")
        if path in (["seed"], ["out"]):
            data[path[0]] = _parse_env_value(env[key])
        elif len(path) >= 2 and all(path):
            node = data
            for part in path[:-1]:
                child = node.setdefault(part, {})
                if not isinstance(child, dict):
                    raise ConfigError(f"{key}: '{part}' is not a section")
                node = child
            node[path[-1]] = _parse_env_value(env[key])
        else:
            logger.debug("ignoring environment variable %s", key)
            continue
        applied.append(key)
    if applied:
        logger.info("environment overrides: %s", ", ".join(applied))
    return applied


def load_settings(
    path: Optional[str] = None, env: Optional[Mapping[str, str]] = None
) -> Settings:
    """Defaults, then the JSON file at ``path``, then environment overrides"""
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except ValueError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    apply_env_overrides(data, os.environ if env is None else env)
    return build_section(Settings, data)


def file_hash(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_path: str
    seed: int
    out_dir: str
    config_hash: str = ""
    input_hashes: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    status: str = "running"
    exit_code: Optional[int] = None
    failure: str = ""

    def __post_init__(self):
        if self.config_path and not self.config_hash and os.path.exists(self.config_path):
            self.config_hash = file_hash(self.config_path)

    def add_input(self, path: str) -> None:
        if os.path.exists(path):
            self.input_hashes[path] = file_hash(path)

    def add_artifact(self, path: str) -> str:
        if path not in self.artifacts:
            self.artifacts.append(path)
        return path

    def finish(self, exit_code: int, failure: str = "") -> None:
        self.exit_code = exit_code
        self.failure = failure
        self.status = "ok" if exit_code == 0 else "failed"

    def write(self) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, MANIFEST_NAME)
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
        logger.info("manifest written to %s", path)
        return path
