"""
System-level coupling of compressors, valves and heat exchangers.

The junction pressures (one discharge node per compressor, the liquid
manifold and the suction manifold) are algebraic unknowns, solved at every
right-hand-side evaluation from mass balances scaled by ``m_scale``. The
refrigerant mass and internal energy of each heat exchanger are the
differential states, ordered mass block first. Stepping lives in solvers/;
this module holds what all three modes share: the coupled model, step-size
adaptation, the high-resolution windows around control jumps and the
trajectory record.
"""

import logging
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np
import pandas as pd

from artifacts import write_versioned_csv
from components.base import ComponentSet
from components.base import ExchangerOutputs
from corrector import CorrectionRecord
from corrector import CorrectorPipeline
from dae import DASSL
from dae import IDA
from dae import DaeConfig
from exceptions import ConvergenceError
from exceptions import NonFiniteError
from exceptions import ShapeError
from exceptions import StepFailure
from nonlinear import LEAST_SQUARES
from nonlinear import POWELL
from nonlinear import RootProblem
from nonlinear import SolveReport
from nonlinear import bounded_least_squares
from nonlinear import powell_hybrid
from plant_oracle import INPUT_COLUMNS
from plant_oracle import OUTPUT_COLUMNS
from plant_oracle import PRESSURE_BOUNDS
from plant_oracle import ActuationProfile
from plant_oracle import PlantOracle
from plant_oracle import mix_enthalpy
from topology import Topology

logger = logging.getLogger(__name__)

ALGEBRAIC = "algebraic"
SOLVER_MODES = (ALGEBRAIC, IDA, DASSL)

PRESSURE_UNIT = 1e6  # junction pressures are solved in MPa
TRAJECTORY_SCHEMA_VERSION = 1

P_FIRST = OUTPUT_COLUMNS.index("p_1")
P_LAST = OUTPUT_COLUMNS.index("p_N")
H_LAST = OUTPUT_COLUMNS.index("h_N")
Q_AIR = OUTPUT_COLUMNS.index("Q_a")
MASS = OUTPUT_COLUMNS.index("M_r")
ENERGY = OUTPUT_COLUMNS.index("E_hx")

TRAJECTORY_OUTPUTS = ["M_r", "E_hx", "p_1", "p_N", "h_1", "h_N", "T_a_out", "Q_a", "Q_lat"]
DIAGNOSTIC_COLUMNS = [
    "h_used",
    "order",
    "newton_iters",
    "rejected",
    "solve_evals",
    "lsq",
    "latent_error",
    "highres",
    "corr_skipped",
]


@dataclass
class HighResConfig:
    tau: float = 5.0
    n_pre: int = 5
    n_post: int = 50
    dt_high: float = 2.5
    dt_low: float = 7.5
    dassl_increment: float = 0.5
    dassl_min_output: float = 0.1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("jump threshold tau must be positive")
        if self.n_pre < 0 or self.n_post < 0:
            raise ValueError("window extents must be non-negative")
        if self.dt_high <= 0 or self.dt_low <= 0:
            raise ValueError("target output spacings must be positive")
        if self.dassl_increment <= 0 or self.dassl_min_output < 0:
            raise ValueError("DASSL increment must be positive and its output gate non-negative")


@dataclass
class SystemConfig:
    mode: str = ALGEBRAIC
    eps_dt: float = 1.1e-3
    eps_soln: float = 1e-6
    m_scale: float = 0.01  # kg/s
    dt_min: float = 0.1
    h_max: float = 10.0
    h_min: float = 1e-4
    ida_output: float = 2.5
    dassl_min_output: float = 0.5
    dassl_max_steps: int = 500
    lsq_threshold: int = 10
    max_pressure_evals: int = 200
    p_liquid0: float = 2.5e6
    p_suction0: float = 5.0e5
    highres: HighResConfig = field(default_factory=HighResConfig)

    def __post_init__(self):
        if self.mode not in SOLVER_MODES:
            raise ValueError(f"Unsupported solver mode: {self.mode}")
        if min(self.eps_dt, self.eps_soln, self.m_scale, self.dt_min) <= 0:
            raise ValueError("tolerances, m_scale and dt_min must be positive")
        if not 0 < self.h_min <= self.h_max:
            raise ValueError("need 0 < h_min <= h_max")
        if self.ida_output <= 0 or self.dassl_min_output < 0 or self.dassl_max_steps < 1:
            raise ValueError("invalid DAE output settings")
        if not PRESSURE_BOUNDS[0] < self.p_suction0 < self.p_liquid0 < PRESSURE_BOUNDS[1]:
            raise ValueError("initial pressures must satisfy p_min < suction < liquid < p_max")

    def dae_config(self) -> DaeConfig:
        return DaeConfig(
            mode=self.mode,
            rtol=self.eps_soln,
            atol=self.eps_soln,
            h_max=self.h_max,
            h_min=self.h_min,
            ida_output_interval=self.ida_output,
            dassl_min_output=self.dassl_min_output,
            dassl_max_steps=self.dassl_max_steps,
        )


# -- junction pressures ------------------------------------------------------


@dataclass
class JunctionState:
    """Exchanger-side quantities held fixed while the junction pressures are solved"""

    p_first: np.ndarray
    p_last: np.ndarray
    h_out: np.ndarray
    speeds: np.ndarray
    openings: np.ndarray


@dataclass
class JunctionFlows:
    pressures: np.ndarray
    residual: np.ndarray
    compressor_flow: np.ndarray
    compressor_h_out: np.ndarray
    valve_flow: np.ndarray
    m_in: np.ndarray  # per exchanger
    m_out: np.ndarray
    h_in: np.ndarray
    p_out: np.ndarray
    h_liq: float
    h_suct: float


def initial_pressures(topology: Topology, config: SystemConfig) -> np.ndarray:
    """Discharge nodes start at the liquid pressure"""
    p = np.full(topology.n_p, config.p_liquid0)
    p[-1] = config.p_suction0
    return p


def junction_flows(
    p: np.ndarray,
    junction: JunctionState,
    topology: Topology,
    components: ComponentSet,
    m_scale: float = 0.01,
) -> JunctionFlows:
    p = np.asarray(p, dtype=float)
    if p.shape != (topology.n_p,):
        raise ShapeError(f"expected {topology.n_p} junction pressures, got shape {p.shape}")
    n_c = topology.n_c
    params = components.params
    cond, evap = slice(0, n_c), slice(n_c, topology.n_hx)
    p_dis, p_liq, p_suct = p[:n_c], float(p[n_c]), float(p[n_c + 1])
    h_cond, h_evap = junction.h_out[cond], junction.h_out[evap]
    cond_out = params.k_outlet * (junction.p_last[cond] - p_liq)
    evap_out = params.k_outlet * (junction.p_last[evap] - p_suct)
    h_liq = mix_enthalpy(cond_out, h_cond)
    h_suct = mix_enthalpy(evap_out, h_evap)

    comp_flow, comp_h_out = components.compressor(p_suct, p_dis, h_suct, junction.speeds)
    comp_flow = np.broadcast_to(comp_flow, (n_c,)).astype(float)
    comp_h_out = np.broadcast_to(comp_h_out, (n_c,)).astype(float)
    cond_in = params.k_inlet * (p_dis - junction.p_first[cond])
    valve_flow, _ = components.valve(p_liq, junction.p_first[evap], h_liq, junction.openings)
    valve_flow = np.broadcast_to(valve_flow, (topology.n_v,)).astype(float)

    residual = np.concatenate(
        [
            comp_flow - cond_in,
            [np.sum(cond_out) - np.sum(valve_flow)],
            [np.sum(evap_out) - np.sum(comp_flow)],
        ]
    ) / m_scale

    return JunctionFlows(
        pressures=p.copy(),
        residual=residual,
        compressor_flow=comp_flow,
        compressor_h_out=comp_h_out,
        valve_flow=valve_flow,
        m_in=np.concatenate([comp_flow, valve_flow]),
        m_out=np.concatenate([cond_out, evap_out]),
        h_in=np.concatenate([comp_h_out, np.full(topology.n_v, h_liq)]),
        p_out=np.concatenate([np.full(n_c, p_liq), np.full(topology.n_v, p_suct)]),
        h_liq=h_liq,
        h_suct=h_suct,
    )


def pressure_residuals(
    p: np.ndarray,
    junction: JunctionState,
    topology: Topology,
    components: ComponentSet,
    m_scale: float = 0.01,
) -> np.ndarray:
    """(inflow - outflow) / m_scale at every pressure node, discharge nodes first"""
    return junction_flows(p, junction, topology, components, m_scale).residual


@dataclass
class SolveStats:
    n_solves: int = 0
    n_powell: int = 0
    n_lsq: int = 0
    n_fallback: int = 0
    n_rhs: int = 0
    evals: List[int] = field(default_factory=list)

    def record(self, report: SolveReport) -> None:
        self.n_solves += 1
        self.evals.append(report.n_evals)
        if report.method == POWELL:
            self.n_powell += 1
        elif report.method == LEAST_SQUARES:
            self.n_lsq += 1

    def fraction_within(self, limit: int = 10) -> float:
        if not self.evals:
            return 1.0
        return float(np.mean(np.asarray(self.evals) <= limit))

    def as_dict(self) -> Dict[str, float]:
        evals = np.asarray(self.evals) if self.evals else np.zeros(1)
        return {
            "pressure_solves": self.n_solves,
            "powell_solves": self.n_powell,
            "lsq_solves": self.n_lsq,
            "powell_fallbacks": self.n_fallback,
            "rhs_evaluations": self.n_rhs,
            "evals_p50": float(np.percentile(evals, 50)),
            "evals_p90": float(np.percentile(evals, 90)),
            "evals_max": float(np.max(evals)),
        }


# -- coupled model -----------------------------------------------------------


@dataclass
class CycleEvaluation:
    t: float
    y: np.ndarray
    ydot: np.ndarray
    pressures: np.ndarray
    outputs: np.ndarray  # (n_hx, 9); M_r and E_hx are the solver states
    inputs: np.ndarray  # (n_hx, 8) the exchangers were evaluated with
    boundary: np.ndarray  # (n_hx, 4) m_in, h_in, h_out, p_out for the next step
    report: SolveReport
    hx: ExchangerOutputs


class CycleModel:
    """
    Couples a component set to the junction-pressure solve.

    ``evaluate`` leaves the committed state alone; ``accept`` moves the
    reference point (surrogate latent state, boundary inputs) forward.
    Exchanger inputs use the refrigerant boundary values of the last accepted
    point, and the exchanger bank is advanced by the time since that point.
    """

    def __init__(
        self,
        topology: Topology,
        components: ComponentSet,
        profile: ActuationProfile,
        config: SystemConfig,
    ):
        if profile.n_c != topology.n_c or profile.n_v != topology.n_v:
            raise ShapeError(
                f"profile drives {profile.n_c} compressors and {profile.n_v} valves, "
                f"topology has {topology.n_c} and {topology.n_v}"
            )
        self.topology = topology
        self.components = components
        self.bank = components.exchangers
        self.profile = profile
        self.config = config
        self.use_lsq = config.mode != ALGEBRAIC or topology.n_p > config.lsq_threshold
        self.stats = SolveStats()
        self.p_guess = initial_pressures(topology, config)
        self.t_ref = 0.0
        self.boundary = np.zeros((topology.n_hx, 4))
        self.hold_index: Optional[int] = None
        self.current: Optional[CycleEvaluation] = None
        self._cache: Dict[Tuple[float, bytes], CycleEvaluation] = {}
        if self.use_lsq:
            logger.debug("%d pressure unknowns: using bounded least squares", topology.n_p)

    def actuation_index(self, t: float) -> int:
        return self.profile.index_at(t) if self.hold_index is None else self.hold_index

    def states(self, y: np.ndarray) -> np.ndarray:
        n_hx = self.topology.n_hx
        return np.column_stack([y[:n_hx], y[n_hx:]])

    def hx_inputs(self, t: float) -> np.ndarray:
        act = self.profile.sample(self.actuation_index(t))
        x = np.empty((self.topology.n_hx, len(INPUT_COLUMNS)))
        x[:, 0] = act.air_temp
        x[:, 1] = act.humidity
        x[:, 2] = act.air_flow
        x[:, 3] = act.ambient_pressure
        x[:, 4:] = self.boundary
        return x

    def bootstrap_history(self, t0: float, y0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Constant input/state history built from the plant's boundary flows at y0"""
        oracle = PlantOracle(self.topology, self.components.params)
        act = self.profile.sample(self.actuation_index(t0))
        snap = oracle.evaluate(y0, act)
        x0 = np.column_stack(
            [
                act.air_temp,
                act.humidity,
                act.air_flow,
                np.full(self.topology.n_hx, act.ambient_pressure),
                snap.m_in,
                snap.h_in,
                snap.h_out,
                snap.p_out,
            ]
        )
        length = self.bank.history_length
        x_hist = np.repeat(x0[None], length, axis=0)
        s_hist = np.repeat(self.states(np.asarray(y0, dtype=float))[None], length, axis=0)
        return x_hist, s_hist

    def start(
        self,
        t0: float,
        y0: np.ndarray,
        history: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ) -> CycleEvaluation:
        y0 = np.asarray(y0, dtype=float)
        if y0.shape != (self.topology.state_dim,):
            raise ShapeError(f"state must have length {self.topology.state_dim}, got {y0.shape}")
        x_hist, s_hist = self.bootstrap_history(t0, y0) if history is None else history
        self.bank.reset(t0, x_hist, s_hist)
        self.boundary = np.asarray(x_hist[-1][:, 4:], dtype=float).copy()
        self.t_ref = t0
        self.p_guess = initial_pressures(self.topology, self.config)
        self._cache.clear()
        return self.accept(t0, y0)

    def solve_pressures(
        self, junction: JunctionState, t: float
    ) -> Tuple[JunctionFlows, SolveReport]:
        cfg = self.config
        topology, components = self.topology, self.components

        def residual(x: np.ndarray) -> np.ndarray:
            p = x * PRESSURE_UNIT
            return pressure_residuals(p, junction, topology, components, cfg.m_scale)

        problem = RootProblem(
            residual,
            self.p_guess / PRESSURE_UNIT,
            tol=cfg.eps_soln,
            lower=PRESSURE_BOUNDS[0] / PRESSURE_UNIT,
            upper=PRESSURE_BOUNDS[1] / PRESSURE_UNIT,
            max_evals=cfg.max_pressure_evals,
        )
        if self.use_lsq:
            report = bounded_least_squares(problem)
        else:
            report = powell_hybrid(problem)
            if not report.converged:
                self.stats.n_fallback += 1
                logger.debug(
                    "powell hybrid missed tolerance at t=%.6g (%.3g), trying least squares",
                    t,
                    report.residual_norm,
                )
                report = bounded_least_squares(problem)
        self.stats.record(report)
        if not report.converged:
            raise ConvergenceError(
                f"junction pressures did not converge at t={t:.6g} "
                f"(residual {report.residual_norm:.3g}, {report.method})",
                report,
            )
        pressures = report.x * PRESSURE_UNIT
        self.p_guess = pressures
        return junction_flows(pressures, junction, topology, components, cfg.m_scale), report

    def evaluate(self, t: float, y: np.ndarray) -> CycleEvaluation:
        y = np.asarray(y, dtype=float)
        key = (float(t), y.tobytes())
        if key in self._cache:
            return self._cache[key]
        n_hx = self.topology.n_hx
        if not np.all(np.isfinite(y)) or np.any(y[:n_hx] <= 0):
            raise StepFailure(f"state left the physical domain at t={t:.6g}", t=t)
        self.stats.n_rhs += 1

        x = self.hx_inputs(t)
        s = self.states(y)
        act = self.profile.sample(self.actuation_index(t))
        try:
            hx = self.bank.evaluate(x, s, t - self.t_ref)
            values = hx.values.copy()
            values[:, MASS] = s[:, 0]
            values[:, ENERGY] = s[:, 1]
            junction = JunctionState(
                values[:, P_FIRST], values[:, P_LAST], values[:, H_LAST], act.speeds, act.openings
            )
            flows, report = self.solve_pressures(junction, t)
        except (ConvergenceError, NonFiniteError) as e:
            raise StepFailure(str(e), t=t) from e

        h_out = values[:, H_LAST]
        mdot = flows.m_in - flows.m_out
        edot = flows.m_in * flows.h_in - flows.m_out * h_out - values[:, Q_AIR]
        evaluation = CycleEvaluation(
            t=float(t),
            y=y.copy(),
            ydot=np.concatenate([mdot, edot]),
            pressures=flows.pressures,
            outputs=values,
            inputs=x,
            boundary=np.column_stack([flows.m_in, flows.h_in, h_out, flows.p_out]),
            report=report,
            hx=hx,
        )
        if len(self._cache) >= 16:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = evaluation
        return evaluation

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.evaluate(t, y).ydot

    def accept(self, t: float, y: np.ndarray) -> CycleEvaluation:
        evaluation = self.evaluate(t, y)
        if evaluation.hx.dt > 0:
            self.bank.commit(evaluation.hx, evaluation.inputs, self.states(evaluation.y))
        self.t_ref = evaluation.t
        self.boundary = evaluation.boundary.copy()
        self._cache.clear()
        self.current = evaluation
        return evaluation

    def refresh(self, y: np.ndarray) -> CycleEvaluation:
        """Re-evaluate the accepted point with a replaced state"""
        self.current = self.evaluate(self.t_ref, y)
        return self.current

    def latent_error(self, t: float, y: np.ndarray, dt: float) -> float:
        return self.bank.latent_error(self.hx_inputs(t), self.states(y), dt)


# -- step size and output resolution -----------------------------------------


def dt_from_error(
    error: float, dt0: float, eps_dt: float, dt_min: float, dt_max: float
) -> float:
    """2.5 (0.6 eps_dt dt0 / error)^(1/4) clamped to [dt_min, dt_max]; zero error gives dt_max"""
    if dt0 <= 0:
        raise ValueError("dt0 must be positive")
    if not 0 < dt_min <= dt_max:
        raise ValueError("need 0 < dt_min <= dt_max")
    if not np.isfinite(error):
        return dt_min
    if error <= 0.0:
        return dt_max
    raw = 2.5 * (0.6 * eps_dt * dt0 / error) ** 0.25
    return float(np.clip(raw, dt_min, dt_max))


def adapt_dt_rk45(
    estimate: Union[Callable[[float], float], float],
    dt0: float,
    eps_dt: float,
    dt_min: float = 0.1,
    dt_max: float = 7.5,
) -> float:
    """``estimate(dt0)`` is the embedded 4(5) latent error over dt0; a number is taken as is"""
    error = estimate(dt0) if callable(estimate) else float(estimate)
    return dt_from_error(error, dt0, eps_dt, dt_min, dt_max)


@dataclass
class HighResMask:
    mask: np.ndarray
    dt_target: np.ndarray
    jumps: np.ndarray

    def __post_init__(self):
        self._changes = np.flatnonzero(np.diff(self.dt_target) != 0) + 1

    def target_at(self, index: int) -> float:
        return float(self.dt_target[min(max(index, 0), len(self.dt_target) - 1)])

    def next_change(self, index: int) -> Optional[int]:
        """First sample after ``index`` whose target spacing differs"""
        later = self._changes[self._changes > index]
        return int(later[0]) if later.size else None


def detect_jumps(signals, tau: float) -> np.ndarray:
    """Indices j with |u[j] - u[j-1]| > tau in any column"""
    signals = np.asarray(signals, dtype=float)
    if signals.ndim == 1:
        signals = signals[:, None]
    if len(signals) < 2:
        raise ValueError("need at least two samples to detect jumps")
    return np.flatnonzero(np.any(np.abs(np.diff(signals, axis=0)) > tau, axis=1)) + 1


def highres_mask(
    profile: Union[ActuationProfile, np.ndarray], config: Optional[HighResConfig] = None
) -> HighResMask:
    config = config or HighResConfig()
    if isinstance(profile, ActuationProfile):
        signals = profile.control_signals()
    else:
        signals = np.asarray(profile, dtype=float)
    jumps = detect_jumps(signals, config.tau)
    n = len(signals)
    mask = np.zeros(n, dtype=bool)
    for j in jumps:
        mask[max(j - config.n_pre, 0) : min(j + config.n_post, n - 1) + 1] = True
    dt_target = np.where(mask, config.dt_high, config.dt_low)
    return HighResMask(mask, dt_target, jumps)


def actuation_segments(
    profile: ActuationProfile, mask: HighResMask, t_end: float
) -> List[Tuple[float, float, int]]:
    """(start, end, profile index) of stretches with constant actuation and target spacing"""
    table = np.column_stack(
        [
            profile.control_signals(),
            profile.air_temp,
            profile.air_flow,
            profile.humidity,
            profile.ambient_pressure,
            mask.dt_target,
        ]
    )
    changes = np.flatnonzero(np.any(np.diff(table, axis=0) != 0, axis=1)) + 1
    tiny = 1e-9 * max(1.0, t_end)
    edges = [0.0] + [k * profile.dt for k in changes if tiny < k * profile.dt < t_end - tiny]
    edges.append(t_end)
    return [(a, b, profile.index_at(a)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


# -- trajectory --------------------------------------------------------------


@dataclass
class Trajectory:
    topology: Topology
    mode: str
    t: List[float] = field(default_factory=list)
    dt: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)
    inputs: List[np.ndarray] = field(default_factory=list)
    pressures: List[np.ndarray] = field(default_factory=list)
    diagnostics: List[Dict[str, float]] = field(default_factory=list)
    corrected: List[np.ndarray] = field(default_factory=list)
    corrections: List[CorrectionRecord] = field(default_factory=list)
    failed: bool = False
    failure_step: Optional[int] = None
    failure_t: float = float("nan")
    failure_reason: str = ""
    wall_time: float = 0.0
    cpu_time: float = 0.0
    solve_stats: Optional[SolveStats] = None

    def __len__(self) -> int:
        return len(self.t)

    def record(
        self,
        t: float,
        dt: float,
        y: np.ndarray,
        outputs: np.ndarray,
        inputs: np.ndarray,
        pressures: np.ndarray,
        corrected: Optional[np.ndarray] = None,
        correction: Optional[CorrectionRecord] = None,
        **diagnostics: float,
    ) -> None:
        if self.t and t <= self.t[-1]:
            raise ValueError(f"trajectory time must increase ({t:.9g} after {self.t[-1]:.9g})")
        self.t.append(float(t))
        self.dt.append(float(dt))
        self.states.append(np.asarray(y, dtype=float).copy())
        self.outputs.append(np.asarray(outputs, dtype=float).copy())
        self.inputs.append(np.asarray(inputs, dtype=float).copy())
        self.pressures.append(np.asarray(pressures, dtype=float).copy())
        row = {name: float("nan") for name in DIAGNOSTIC_COLUMNS}
        row.update({k: float(v) for k, v in diagnostics.items()})
        self.diagnostics.append(row)
        if corrected is not None:
            self.corrected.append(np.asarray(corrected, dtype=float).copy())
        if correction is not None:
            self.corrections.append(correction)

    def fail(self, reason: str, t: float = float("nan")) -> None:
        self.failed = True
        self.failure_step = len(self.t)
        self.failure_t = t
        self.failure_reason = reason

    def state_array(self) -> np.ndarray:
        return np.array(self.states).reshape(len(self), self.topology.state_dim)

    def output_array(self, corrected: bool = False) -> np.ndarray:
        rows = self.corrected if corrected and self.corrected else self.outputs
        return np.array(rows).reshape(len(self), self.topology.n_hx, len(OUTPUT_COLUMNS))

    def to_frame(self) -> pd.DataFrame:
        """t, dt, per-exchanger outputs, junction pressures, diagnostics, then exchanger inputs"""
        hx_names = [hx.name for hx in self.topology.heat_exchangers]
        columns: Dict[str, np.ndarray] = {
            "t": np.asarray(self.t, dtype=float),
            "dt": np.asarray(self.dt, dtype=float),
        }
        outputs = self.output_array()
        for j, name in enumerate(hx_names):
            for col in TRAJECTORY_OUTPUTS:
                columns[f"{name}.{col}"] = outputs[:, j, OUTPUT_COLUMNS.index(col)]
        if self.corrected:
            corrected = self.output_array(corrected=True)
            for j, hx in enumerate(self.topology.heat_exchangers[: self.topology.n_c]):
                columns[f"{hx.name}.M_r_corr"] = corrected[:, j, MASS]
                columns[f"{hx.name}.E_hx_corr"] = corrected[:, j, ENERGY]
        pressures = np.array(self.pressures).reshape(len(self), self.topology.n_p)
        for i, node in enumerate(self.topology.pressure_nodes):
            columns[node] = pressures[:, i]
        for name in DIAGNOSTIC_COLUMNS:
            columns[name] = np.array([d[name] for d in self.diagnostics], dtype=float)
        inputs = np.array(self.inputs).reshape(len(self), self.topology.n_hx, len(INPUT_COLUMNS))
        for j, name in enumerate(hx_names):
            for i, col in enumerate(INPUT_COLUMNS):
                columns[f"{name}.in.{col}"] = inputs[:, j, i]
        return pd.DataFrame(columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, topology: Topology, mode: str) -> "Trajectory":
        """Rebuild a stored trajectory; diagnostics and corrected channels come back as stored"""
        hx_names = [hx.name for hx in topology.heat_exchangers]
        trajectory = cls(topology, mode)
        n = len(frame)
        outputs = np.empty((n, topology.n_hx, len(OUTPUT_COLUMNS)))
        inputs = np.empty((n, topology.n_hx, len(INPUT_COLUMNS)))
        for j, name in enumerate(hx_names):
            for col in TRAJECTORY_OUTPUTS:
                outputs[:, j, OUTPUT_COLUMNS.index(col)] = frame[f"{name}.{col}"]
            for i, col in enumerate(INPUT_COLUMNS):
                inputs[:, j, i] = frame[f"{name}.in.{col}"]
        corrected = None
        if f"{hx_names[0]}.M_r_corr" in frame.columns:
            corrected = outputs.copy()
            for j, name in enumerate(hx_names[: topology.n_c]):
                corrected[:, j, MASS] = frame[f"{name}.M_r_corr"]
                corrected[:, j, ENERGY] = frame[f"{name}.E_hx_corr"]
        pressures = frame[topology.pressure_nodes].to_numpy(dtype=float)
        for k in range(n):
            y = np.concatenate([outputs[k, :, MASS], outputs[k, :, ENERGY]])
            diagnostics = {
                name: float(frame[name].iloc[k]) for name in DIAGNOSTIC_COLUMNS if name in frame
            }
            trajectory.record(
                float(frame["t"].iloc[k]),
                float(frame["dt"].iloc[k]),
                y,
                outputs[k],
                inputs[k],
                pressures[k],
                corrected=None if corrected is None else corrected[k],
                **diagnostics,
            )
        return trajectory

    def hx_frames(
        self, times: Optional[np.ndarray] = None, corrected: bool = False
    ) -> Dict[str, pd.DataFrame]:
        """Per-exchanger (inputs, outputs, t) tables, linearly resampled onto ``times``"""
        t = np.asarray(self.t, dtype=float)
        grid = t if times is None else np.asarray(times, dtype=float)
        outputs = self.output_array(corrected)
        inputs = np.array(self.inputs).reshape(len(self), self.topology.n_hx, len(INPUT_COLUMNS))
        frames = {}
        for j, hx in enumerate(self.topology.heat_exchangers):
            block = np.concatenate([inputs[:, j], outputs[:, j]], axis=1)
            if times is not None:
                block = np.column_stack(
                    [np.interp(grid, t, block[:, c]) for c in range(block.shape[1])]
                )
            frame = pd.DataFrame(block, columns=INPUT_COLUMNS + OUTPUT_COLUMNS)
            frame["t"] = grid
            frames[hx.name] = frame
        return frames


def simulate(
    topology: Topology,
    components: ComponentSet,
    profile: ActuationProfile,
    config: SystemConfig,
    horizon: int,
    corrector: Optional[CorrectorPipeline] = None,
    y0: Optional[np.ndarray] = None,
    history: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Trajectory:
    """
    Simulate ``horizon`` profile sample periods with the solver named by
    ``config.mode``. Numerical failures end the run early with ``failed`` set
    on the returned trajectory instead of raising.
    """
    from scenario_reader import ScenarioReader

    solver = ScenarioReader.get_solver(config.mode)
    return solver.simulate(topology, components, profile, config, horizon, corrector, y0, history)


def with_mode(config: SystemConfig, mode: str) -> SystemConfig:
    return replace(config, mode=mode)


def write_trajectory(path: str, trajectory: Trajectory) -> str:
    frame = trajectory.to_frame()
    return write_versioned_csv(path, frame, "trajectory", TRAJECTORY_SCHEMA_VERSION)
