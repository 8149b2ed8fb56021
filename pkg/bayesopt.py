"""
Gaussian-process Bayesian optimization of solver parameters.

Parameters live on log-uniform ranges and are searched in the unit cube.
The scalar objective weighs accuracy (MAPE over all outputs) against
simulation time, each min-max normalized over the initial space-filling
samples. Failed simulations stay in the log with a penalty objective.
"""

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.stats import norm
from scipy.stats import qmc

from artifacts import write_versioned_csv
from dae import DASSL
from dae import IDA
from gaussian_process import GaussianProcess
from gaussian_process import RbfKernel
from gaussian_process import fit_hyperparameters
from metrics import trajectory_mape
from system import ALGEBRAIC
from system import SystemConfig
from system import simulate

logger = logging.getLogger(__name__)

TUNE_SCHEMA_VERSION = 1
DEDUP_TOL = 1e-6

PARAMETER_RANGES = {
    "eps_dt": (1e-4, 0.5),
    "eps_soln": (1e-8, 1e-3),
    "h_max": (1.0, 50.0),
    "h_min": (1e-4, 0.1),
    "ida_output": (0.5, 10.0),
    "dassl_min_output": (0.1, 5.0),
    "dassl_max_steps": (100.0, 10000.0),
}
MODE_PARAMETERS = {
    ALGEBRAIC: ["eps_dt", "eps_soln"],
    IDA: ["eps_dt", "eps_soln", "h_max", "h_min", "ida_output"],
    DASSL: ["eps_dt", "eps_soln", "h_max", "h_min", "dassl_min_output", "dassl_max_steps"],
}
INTEGER_PARAMETERS = {"dassl_max_steps"}


@dataclass
class Dimension:
    name: str
    low: float
    high: float
    log: bool = True
    integer: bool = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"{self.name}: low must be below high")
        if self.log and self.low <= 0:
            raise ValueError(f"{self.name}: log-uniform dimensions need low > 0")

    def to_unit(self, value: float) -> float:
        if self.log:
            return (np.log(value) - np.log(self.low)) / (np.log(self.high) - np.log(self.low))
        return (value - self.low) / (self.high - self.low)

    def from_unit(self, u: float) -> float:
        u = float(np.clip(u, 0.0, 1.0))
        if self.log:
            value = float(np.exp(np.log(self.low) + u * (np.log(self.high) - np.log(self.low))))
        else:
            value = self.low + u * (self.high - self.low)
        value = float(np.clip(value, self.low, self.high))
        return float(round(value)) if self.integer else value


@dataclass
class ParamSpace:
    dims: List[Dimension]

    @classmethod
    def for_mode(cls, mode: str) -> "ParamSpace":
        if mode not in MODE_PARAMETERS:
            raise ValueError(f"Unsupported solver mode: {mode}")
        return cls(
            [
                Dimension(name, *PARAMETER_RANGES[name], integer=name in INTEGER_PARAMETERS)
                for name in MODE_PARAMETERS[mode]
            ]
        )

    @property
    def names(self) -> List[str]:
        return [d.name for d in self.dims]

    @property
    def d(self) -> int:
        return len(self.dims)

    def to_unit(self, theta: Dict[str, float]) -> np.ndarray:
        return np.array([d.to_unit(theta[d.name]) for d in self.dims])

    def from_unit(self, u: Sequence[float]) -> Dict[str, float]:
        return {d.name: d.from_unit(ui) for d, ui in zip(self.dims, u)}


@dataclass
class TuneConfig:
    w_mape: float = 0.5
    w_time: float = 0.5
    budget: int = 100
    n_initial: int = 10
    n_candidates: int = 4096
    refit_every: int = 10
    penalty_factor: float = 2.0
    n_restarts: int = 5
    parallel: bool = False
    workers: int = 4

    def __post_init__(self):
        if self.w_mape < 0 or self.w_time < 0:
            raise ValueError("objective weights must be non-negative")
        if self.n_initial < 2 or self.budget < self.n_initial:
            raise ValueError("need budget >= n_initial >= 2")
        if self.n_candidates < 1 or self.refit_every < 1:
            raise ValueError("n_candidates and refit_every must be positive")


@dataclass
class Evaluation:
    mape: float
    time: float
    failed: bool = False
    reason: str = ""


def expected_improvement(mu, sigma, best: float):
    """(best - mu) Phi(u) + sigma phi(u), u = (best - mu) / sigma; max(best - mu, 0) at sigma = 0"""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("posterior standard deviation must be non-negative")
    mu, sigma = np.broadcast_arrays(mu, sigma)
    improve = np.asarray(best - mu)
    ei = np.asarray(np.maximum(improve, 0.0))
    spread = sigma > 0
    u = improve[spread] / sigma[spread]
    ei[spread] = improve[spread] * norm.cdf(u) + sigma[spread] * norm.pdf(u)
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def sobol_points(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    sampler = qmc.Sobol(d, scramble=True, seed=rng)
    with warnings.catch_warnings():
        # n that is not a power of two only loses balance properties
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(n)


def propose(
    model: GaussianProcess,
    space: ParamSpace,
    best: float,
    rng: np.random.Generator,
    observed: np.ndarray,
    n_candidates: int = 4096,
) -> np.ndarray:
    """
    Unit-cube point maximizing EI: the best of a scrambled Sobol candidate set,
    refined with L-BFGS-B. Points closer than 1e-6 to an observation are
    skipped; when EI is zero everywhere the candidate with the largest
    posterior spread is returned.
    """
    candidates = sobol_points(space.d, n_candidates, rng)
    observed = np.atleast_2d(observed)
    distance = cdist(candidates, observed).min(axis=1)
    fresh = distance >= DEDUP_TOL
    if not np.any(fresh):
        return candidates[int(np.argmax(distance))]
    candidates = candidates[fresh]
    mean, std = model.predict(candidates)
    ei = expected_improvement(mean, std, best)
    if np.max(ei) <= 0.0:
        logger.debug("EI vanished on every candidate, taking the most uncertain one")
        return candidates[int(np.argmax(std))]

    start = candidates[int(np.argmax(ei))]

    def negative_ei(u: np.ndarray) -> float:
        m, s = model.predict(u[None])
        return -float(expected_improvement(m, s, best)[0])

    result = minimize(negative_ei, start, method="L-BFGS-B", bounds=[(0.0, 1.0)] * space.d)
    refined = np.clip(result.x, 0.0, 1.0)
    if (
        result.fun < -float(np.max(ei))
        and cdist(refined[None], observed).min() >= DEDUP_TOL
    ):
        return refined
    return start


@dataclass
class Normalization:
    mape_lo: float
    mape_span: float
    time_lo: float
    time_span: float
    penalty: float = 2.0

    def objective(self, evaluation: Evaluation, config: TuneConfig) -> float:
        if evaluation.failed or not np.isfinite(evaluation.mape):
            return self.penalty
        accuracy = (evaluation.mape - self.mape_lo) / self.mape_span
        speed = (evaluation.time - self.time_lo) / self.time_span
        return config.w_mape * accuracy + config.w_time * speed


def normalization_from(evaluations: Sequence[Evaluation], config: TuneConfig) -> Normalization:
    """Min-max ranges over the successful initial samples; penalty is 2x their worst objective"""
    ok = [e for e in evaluations if not e.failed and np.isfinite(e.mape)]
    if not ok:
        return Normalization(0.0, 1.0, 0.0, 1.0, penalty=config.penalty_factor)
    mapes = np.array([e.mape for e in ok])
    times = np.array([e.time for e in ok])

    def span(values: np.ndarray) -> float:
        width = float(np.max(values) - np.min(values))
        return width if width > 0 else 1.0

    norm_ = Normalization(float(np.min(mapes)), span(mapes), float(np.min(times)), span(times))
    worst = max(norm_.objective(e, config) for e in ok)
    norm_.penalty = config.penalty_factor * (worst if worst > 0 else 1.0)
    return norm_


@dataclass
class TuneResult:
    best: Dict[str, float]
    best_objective: float
    log: pd.DataFrame
    normalization: Normalization
    space: ParamSpace
    kernel: Optional[RbfKernel] = None
    pareto: pd.DataFrame = field(default_factory=pd.DataFrame)


def _log_row(
    iteration: int, theta: Dict[str, float], evaluation: Evaluation, objective: float
) -> Dict[str, float]:
    row: Dict[str, float] = {"iteration": iteration}
    row.update(theta)
    row.update(
        {
            "MAPE_all": evaluation.mape,
            "t_simulation": evaluation.time,
            "objective": objective,
            "failed": int(evaluation.failed),
        }
    )
    return row


def _evaluate_all(
    objective: Callable[[Dict[str, float]], Evaluation],
    thetas: List[Dict[str, float]],
    config: TuneConfig,
) -> List[Evaluation]:
    if config.parallel and len(thetas) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(objective, thetas))
    return [objective(theta) for theta in thetas]


def tune(
    objective: Callable[[Dict[str, float]], Evaluation],
    space: ParamSpace,
    config: TuneConfig,
    rng: np.random.Generator,
) -> TuneResult:
    """
    GP-EI loop: ``n_initial`` Sobol samples, then one proposal per iteration
    until ``budget`` evaluations. GP hyperparameters are refitted by maximum
    likelihood every ``refit_every`` evaluations. Returns the argmin over the
    whole log.
    """
    unit = list(sobol_points(space.d, config.n_initial, rng))
    thetas = [space.from_unit(u) for u in unit]
    unit = [space.to_unit(theta) for theta in thetas]
    evaluations = _evaluate_all(objective, thetas, config)
    normalization = normalization_from(evaluations, config)
    objectives = [normalization.objective(e, config) for e in evaluations]
    rows = [
        _log_row(i + 1, theta, e, obj)
        for i, (theta, e, obj) in enumerate(zip(thetas, evaluations, objectives))
    ]
    logger.info(
        "initial design: best objective %.4g of %d samples (%d failed)",
        min(objectives),
        len(objectives),
        sum(e.failed for e in evaluations),
    )

    kernel: Optional[RbfKernel] = None
    while len(rows) < config.budget:
        X = np.array(unit)
        y = np.array(objectives)
        scale = float(np.std(y)) or 1.0
        y_std = (y - np.mean(y)) / scale
        if kernel is None or len(rows) % config.refit_every == 0:
            kernel = fit_hyperparameters(X, y_std, rng, n_restarts=config.n_restarts)
        model = GaussianProcess(kernel).fit(X, y_std)
        u = propose(model, space, float(np.min(y_std)), rng, X, config.n_candidates)
        theta = space.from_unit(u)
        evaluation = objective(theta)
        value = normalization.objective(evaluation, config)
        thetas.append(theta)
        unit.append(space.to_unit(theta))
        objectives.append(value)
        rows.append(_log_row(len(rows) + 1, theta, evaluation, value))
        logger.debug("evaluation %d: objective %.4g at %s", len(rows), value, theta)

    log = pd.DataFrame(rows)
    log["best_objective"] = log["objective"].cummin()
    best_index = int(np.argmin(objectives))
    best = thetas[best_index]
    logger.info("best objective %.4g at %s", objectives[best_index], best)
    return TuneResult(
        best=best,
        best_objective=float(objectives[best_index]),
        log=log,
        normalization=normalization,
        space=space,
        kernel=kernel,
        pareto=pareto_front(log),
    )


def pareto_mask(points) -> np.ndarray:
    """True where no other point is <= in every coordinate and < in at least one"""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("need a nonempty (n, k) array of points")
    keep = np.ones(len(points), dtype=bool)
    for i, p in enumerate(points):
        dominated = np.all(points <= p, axis=1) & np.any(points < p, axis=1)
        keep[i] = not np.any(dominated)
    return keep


def pareto_front(
    log, columns: Tuple[str, str] = ("MAPE_all", "t_simulation")
):
    """Non-dominated rows of an evaluation log (failed rows excluded) or of an (n, 2) array"""
    if isinstance(log, pd.DataFrame):
        usable = log[log["failed"] == 0] if "failed" in log.columns else log
        if usable.empty:
            return usable.copy()
        return usable[pareto_mask(usable[list(columns)].to_numpy(dtype=float))].copy()
    points = np.asarray(log, dtype=float)
    return points[pareto_mask(points)]


def apply_parameters(config: SystemConfig, theta: Dict[str, float]) -> SystemConfig:
    values = {k: (int(v) if k in INTEGER_PARAMETERS else float(v)) for k, v in theta.items()}
    return replace(config, **values)


def solver_objective(
    make_components: Callable,
    topology,
    profile,
    reference: Dict[str, pd.DataFrame],
    base: SystemConfig,
    horizon: int,
    use_cpu_time: bool = False,
) -> Callable[[Dict[str, float]], Evaluation]:
    """Objective that simulates with the given parameters and scores against ``reference``"""

    def evaluate(theta: Dict[str, float]) -> Evaluation:
        config = apply_parameters(base, theta)
        components = make_components()
        trajectory = simulate(topology, components, profile, config, horizon)
        elapsed = trajectory.cpu_time if use_cpu_time else trajectory.wall_time
        if trajectory.failed:
            return Evaluation(float("nan"), elapsed, True, trajectory.failure_reason)
        try:
            mape = trajectory_mape(trajectory, reference)
        except ValueError as e:
            return Evaluation(float("nan"), elapsed, True, str(e))
        return Evaluation(mape, elapsed)

    return evaluate


def timed(
    objective: Callable[[Dict[str, float]], float]
) -> Callable[[Dict[str, float]], Evaluation]:
    """Wrap a plain scalar function as an objective whose time term is its wall time"""

    def evaluate(theta: Dict[str, float]) -> Evaluation:
        start = time.perf_counter()
        value = float(objective(theta))
        return Evaluation(value, time.perf_counter() - start)

    return evaluate


def best_from_log(log: pd.DataFrame, space: ParamSpace) -> Dict[str, float]:
    row = log.iloc[int(np.argmin(log["objective"].to_numpy(dtype=float)))]
    return {name: float(row[name]) for name in space.names}


def design_space_grid(
    log: pd.DataFrame,
    space: ParamSpace,
    best: Dict[str, float],
    n: int = 25,
    axes: Tuple[str, str] = ("eps_dt", "eps_soln"),
) -> pd.DataFrame:
    """
    GP posterior means of log10 MAPE and log10 time on an n x n grid over two
    parameters, the others fixed at the best point; the last row marks the
    best point itself (is_best = 1).
    """
    log = log[log["failed"] == 0]
    if len(log) < 2:
        raise ValueError("need at least two successful evaluations for a design-space grid")
    X = np.array([space.to_unit({k: log[k].iloc[i] for k in space.names}) for i in range(len(log))])
    i, j = space.names.index(axes[0]), space.names.index(axes[1])
    base = space.to_unit(best)
    g = np.linspace(0.0, 1.0, n)
    gi, gj = np.meshgrid(g, g, indexing="ij")
    grid = np.repeat(base[None], n * n, axis=0)
    grid[:, i] = gi.ravel()
    grid[:, j] = gj.ravel()
    grid = np.vstack([grid, base[None]])

    columns = {}
    for label, column in (("log_mape", "MAPE_all"), ("log_time", "t_simulation")):
        target = np.log10(np.maximum(log[column].to_numpy(dtype=float), 1e-12))
        kernel = RbfKernel(1.0, 0.3, 1e-4)
        gp = GaussianProcess(kernel).fit(X, target, center=True)
        columns[label], _ = gp.predict(grid, return_std=False)

    frame = pd.DataFrame(
        {
            axes[0]: [space.dims[i].from_unit(u) for u in grid[:, i]],
            axes[1]: [space.dims[j].from_unit(u) for u in grid[:, j]],
            "log_mape": columns["log_mape"],
            "log_time": columns["log_time"],
            "is_best": [0] * (n * n) + [1],
        }
    )
    return frame


def write_tune_artifacts(out_dir: str, mode: str, result: TuneResult) -> List[str]:
    paths = [
        write_versioned_csv(
            f"{out_dir}/tune_log_{mode}.csv", result.log, "tune_log", TUNE_SCHEMA_VERSION
        ),
        write_versioned_csv(
            f"{out_dir}/pareto_{mode}.csv", result.pareto, "pareto", TUNE_SCHEMA_VERSION
        ),
    ]
    if len(result.log[result.log["failed"] == 0]) >= 2 and "eps_dt" in result.space.names:
        grid = design_space_grid(result.log, result.space, result.best)
        paths.append(
            write_versioned_csv(
                f"{out_dir}/contour_{mode}.csv", grid, "design_space", TUNE_SCHEMA_VERSION
            )
        )
    return paths
