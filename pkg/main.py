import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Dict
from typing import List
from typing import Optional

import pandas as pd

from bayesopt import ParamSpace
from bayesopt import solver_objective
from bayesopt import tune
from bayesopt import write_tune_artifacts
from corrector import CorrectorScaling
from corrector import collect_training_pairs
from corrector import save_corrector
from corrector import train_corrector
from corrector import write_correction_stream
from corrector import write_corrector_loss
from debug_tools import DebugTimer
from dot_generator import write_dot
from exceptions import ConfigError
from exceptions import ThermoloopError
from metrics import trajectory_mape
from performance_analysis import run_scale_study
from performance_analysis import write_scale_study
from pinode import Normalizer
from pinode import NormalizedWindow
from pinode import Pinode
from pinode import build_windows
from pinode import save_pinode
from pinode import train
from pinode import write_loss_history
from plant_oracle import column_statistics
from plant_oracle import generate_dataset
from report import write_report
from scenario_reader import CHECKPOINT_FILES
from scenario_reader import Scenario
from scenario_reader import ScenarioReader
from scenario_reader import checkpoint_path
from scenario_reader import read_reference
from scenario_reader import write_profile
from settings import RunManifest
from settings import Settings
from settings import load_settings
from static_models import COMPRESSOR_KIND
from static_models import VALVE_KIND
from static_models import fit_static
from static_models import sample_compressor_data
from static_models import sample_valve_data
from static_models import save_static
from system import simulate
from system import write_trajectory
from topology import CONDENSER
from topology import EVAPORATOR

logger = logging.getLogger("thermoloop")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ["generate-data", "train", "simulate", "tune", "scale-study", "report"]
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory for every artifact")
    common.add_argument("--solver", choices=["algebraic", "ida", "dassl"])
    common.add_argument("--corrector", choices=["on", "off"])
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    parser = argparse.ArgumentParser(
        prog="thermoloop",
        description="Hybrid neural-ODE vapor-compression cycle simulation and solver tuning",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name, parents=[common])
        if name == "report":
            sub.add_argument("--charts", action="store_true", help="also write SVG charts")
    return parser


def _under(out: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(out, path)


def resolve_settings(args: argparse.Namespace) -> Settings:
    """Config file and environment, then command-line flags on top"""
    settings = load_settings(args.config)
    if args.seed is not None:
        settings.seed = args.seed
    if args.out:
        settings.out = args.out
    if args.solver:
        settings.system = replace(settings.system, mode=args.solver)
    if args.corrector:
        settings.simulation.corrector = args.corrector == "on"
    settings.data.dir = _under(settings.out, settings.data.dir)
    settings.simulation.checkpoints = _under(settings.out, settings.simulation.checkpoints)
    return settings


# -- commands ------------------------------------------------------------------


def generate_data(scenario: Scenario, manifest: RunManifest) -> int:
    settings = scenario.settings
    data_dir = settings.data.dir
    required = max(settings.data.required_window, settings.model.t_enc + settings.model.t_dec)
    frames = generate_dataset(
        scenario.topology,
        scenario.profile,
        settings.data.horizon,
        required_window=required,
        out_dir=data_dir,
    )
    manifest.add_artifact(write_profile(os.path.join(data_dir, "profile.csv"), scenario.profile))
    for name in frames:
        manifest.add_artifact(os.path.join(data_dir, f"{name}.csv"))
    for kind in (CONDENSER, EVAPORATOR):
        path = os.path.join(data_dir, f"{kind}.json")
        if os.path.exists(path):
            manifest.add_artifact(path)
    return EXIT_OK


def _split(frame: pd.DataFrame, fraction: float):
    n_val = max(int(round(len(frame) * fraction)), 1)
    return frame.iloc[: len(frame) - n_val], frame.iloc[len(frame) - n_val :]


def train_exchangers(
    scenario: Scenario, reference: Dict[str, pd.DataFrame], manifest: RunManifest
) -> None:
    settings = scenario.settings
    for kind in (CONDENSER, EVAPORATOR):
        members = [
            reference[hx.name] for hx in scenario.topology.heat_exchangers if hx.kind == kind
        ]
        normalizer = Normalizer(column_statistics(members))
        train_parts, val_parts = [], []
        for frame in members:
            head, tail = _split(frame, settings.data.validation_fraction)
            for part, bucket in ((head, train_parts), (tail, val_parts)):
                bucket.append(
                    build_windows(
                        part.reset_index(drop=True),
                        normalizer,
                        settings.model,
                        sample_period=scenario.profile.dt,
                    )
                )
        model = Pinode(settings.model, scenario.rng)
        result = train(
            model,
            NormalizedWindow.merge(train_parts),
            NormalizedWindow.merge(val_parts),
            settings.train,
            scenario.rng,
        )
        if result.diverged:
            logger.warning("%s training diverged; keeping epoch %d", kind, result.best_epoch)
        path = checkpoint_path(settings.simulation.checkpoints, kind)
        save_pinode(path, result.model, normalizer, kind)
        manifest.add_artifact(path)
        loss_path = os.path.join(settings.out, f"loss_{kind}.csv")
        write_loss_history(loss_path, result.history)
        manifest.add_artifact(loss_path)


def train_static(scenario: Scenario, manifest: RunManifest) -> None:
    settings = scenario.settings
    samplers = ((COMPRESSOR_KIND, sample_compressor_data), (VALVE_KIND, sample_valve_data))
    for kind, sampler in samplers:
        frame = sampler(scenario.rng, settings.static.n_samples)
        model, _ = fit_static(kind, frame, settings.static, scenario.rng)
        path = checkpoint_path(settings.simulation.checkpoints, kind)
        save_static(path, model)
        manifest.add_artifact(path)


def train_correction(
    scenario: Scenario, reference: Dict[str, pd.DataFrame], manifest: RunManifest
) -> int:
    settings = scenario.settings
    cfg = settings.corrector
    end = cfg.segment_start + cfg.segment_length
    condensers = [hx.name for hx in scenario.topology.heat_exchangers if hx.kind == CONDENSER]
    if cfg.segment_length == 0 or len(reference[condensers[0]]) < end:
        logger.warning("reference data is shorter than the corrector segment; skipping corrector")
        return EXIT_OK
    trajectory = simulate(
        scenario.topology,
        scenario.components("surrogate"),
        scenario.profile,
        settings.system,
        end,
    )
    if trajectory.failed:
        logger.error("prediction run for corrector training failed: %s", trajectory.failure_reason)
        return EXIT_NUMERICAL
    bench = {name: reference[name].iloc[:end].reset_index(drop=True) for name in condensers}
    predicted = trajectory.hx_frames(bench[condensers[0]]["t"].to_numpy(dtype=float))
    scaling = CorrectorScaling.from_frames([reference[n] for n in condensers], condensers)
    pairs = collect_training_pairs(predicted, bench, scaling, cfg.segment_start, cfg.segment_length)
    result = train_corrector(pairs, cfg, scenario.rng)
    path = checkpoint_path(settings.simulation.checkpoints, "corrector")
    save_corrector(path, result.net, scaling)
    manifest.add_artifact(path)
    manifest.add_artifact(
        write_corrector_loss(os.path.join(settings.out, "corrector_loss.csv"), result.history)
    )
    return EXIT_NUMERICAL if result.diverged else EXIT_OK


def train_all(scenario: Scenario, manifest: RunManifest) -> int:
    settings = scenario.settings
    reference = read_reference(settings.data.dir, scenario.topology)
    for name in reference:
        manifest.add_input(os.path.join(settings.data.dir, f"{name}.csv"))
    os.makedirs(settings.simulation.checkpoints, exist_ok=True)
    with DebugTimer("train_exchangers", manifest.timings):
        train_exchangers(scenario, reference, manifest)
    with DebugTimer("train_static", manifest.timings):
        train_static(scenario, manifest)
    if not settings.simulation.corrector:
        return EXIT_OK
    with DebugTimer("train_corrector", manifest.timings):
        return train_correction(scenario, reference, manifest)


def _optional_reference(scenario: Scenario) -> Optional[Dict[str, pd.DataFrame]]:
    try:
        return read_reference(scenario.settings.data.dir, scenario.topology)
    except ConfigError:
        logger.info("no reference data under %s", scenario.settings.data.dir)
        return None


def run_simulation(scenario: Scenario, manifest: RunManifest) -> int:
    settings = scenario.settings
    mode = settings.system.mode
    if settings.simulation.components == "surrogate":
        for name in CHECKPOINT_FILES:
            manifest.add_input(checkpoint_path(settings.simulation.checkpoints, name))
    corrector = scenario.corrector() if settings.simulation.corrector else None
    trajectory = simulate(
        scenario.topology,
        scenario.components(),
        scenario.profile,
        settings.system,
        settings.simulation.horizon,
        corrector=corrector,
    )
    out = settings.out
    manifest.add_artifact(write_trajectory(os.path.join(out, f"trajectory_{mode}.csv"), trajectory))
    pressures = None
    if trajectory.pressures:
        pressures = dict(zip(scenario.topology.pressure_nodes, trajectory.pressures[-1]))
    dot_path = os.path.join(out, "topology.dot")
    manifest.add_artifact(write_dot(dot_path, scenario.topology, pressures))
    if corrector is not None:
        condensers = corrector.scaling.condensers
        path = os.path.join(out, f"corrections_{mode}.csv")
        manifest.add_artifact(write_correction_stream(path, corrector.records, condensers))
    manifest.timings["simulation_wall"] = trajectory.wall_time
    manifest.timings["simulation_cpu"] = trajectory.cpu_time

    reference = _optional_reference(scenario)
    if reference is not None and len(trajectory) > 1:
        try:
            error = trajectory_mape(trajectory, reference)
            logger.info("%s MAPE_all vs reference: %.4f %%", mode, error)
        except ValueError as e:
            logger.warning("MAPE not available: %s", e)
    if trajectory.failed:
        manifest.failure = trajectory.failure_reason
        return EXIT_NUMERICAL
    return EXIT_OK


def run_tuning(scenario: Scenario, manifest: RunManifest) -> int:
    settings = scenario.settings
    mode = settings.system.mode
    reference = read_reference(settings.data.dir, scenario.topology)
    objective = solver_objective(
        scenario.component_factory(),
        scenario.topology,
        scenario.profile,
        reference,
        settings.system,
        settings.simulation.horizon,
        use_cpu_time=settings.tune.parallel,
    )
    result = tune(objective, ParamSpace.for_mode(mode), settings.tune, scenario.rng)
    for path in write_tune_artifacts(settings.out, mode, result):
        manifest.add_artifact(path)
    logger.info("%s: best objective %.4g at %s", mode, result.best_objective, result.best)
    return EXIT_OK


def run_scaling(scenario: Scenario, manifest: RunManifest, solver: Optional[str]) -> int:
    settings = scenario.settings
    scale = settings.scale
    modes: List[str] = [solver] if solver else list(scale.modes)

    def make_components(topology):
        return ScenarioReader.get_components(
            scale.components, topology, settings.simulation.checkpoints
        )

    frame = run_scale_study(
        scale.sizes, modes, scale.n_steps, settings.system, make_components, settings.seed
    )
    for path in write_scale_study(os.path.join(settings.out, "scale_study.csv"), frame):
        manifest.add_artifact(path)
    failed = frame[frame["failed"] == 1]
    if not failed.empty:
        logger.warning("%d of %d sweep points failed", len(failed), len(frame))
    return EXIT_OK


def run_report(scenario: Scenario, manifest: RunManifest, charts: bool) -> int:
    reference = _optional_reference(scenario)
    for path in write_report(scenario.settings.out, scenario.topology, reference, charts):
        manifest.add_artifact(path)
    return EXIT_OK


def run_command(args: argparse.Namespace, scenario: Scenario, manifest: RunManifest) -> int:
    name = args.command
    with DebugTimer(name, manifest.timings):
        if name == "generate-data":
            return generate_data(scenario, manifest)
        elif name == "train":
            return train_all(scenario, manifest)
        elif name == "simulate":
            return run_simulation(scenario, manifest)
        elif name == "tune":
            return run_tuning(scenario, manifest)
        elif name == "scale-study":
            return run_scaling(scenario, manifest, args.solver)
        elif name == "report":
            return run_report(scenario, manifest, getattr(args, "charts", False))
        else:
            raise ValueError(f"Unsupported command: {name}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        settings = resolve_settings(args)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG

    manifest = RunManifest(args.command, args.config or "", settings.seed, settings.out)
    logger.info("%s: seed %d, output under %s", args.command, settings.seed, settings.out)
    try:
        with DebugTimer("scenario", manifest.timings):
            scenario = ScenarioReader.from_settings(settings)
        code = run_command(args, scenario, manifest)
        manifest.finish(code, manifest.failure)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        manifest.finish(EXIT_CONFIG, str(e))
    except ThermoloopError as e:
        logger.error("numerical failure: %s", e)
        manifest.finish(EXIT_NUMERICAL, str(e))
    except Exception as e:
        logger.exception("An error occurred: %s", e)
        manifest.finish(EXIT_ERROR, str(e))
    finally:
        manifest.write()
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
