"""
Lumped-parameter vapor-compression plant with a synthetic, affine refrigerant
property map.

The plant is the reference for everything downstream: it generates the
training data for the heat exchanger and compressor/valve surrogates, and its
RK4 trajectories are the benchmark the system solvers are scored against.

State layout matches the system solvers: refrigerant masses of all heat
exchangers first (condensers, then evaporators), then their internal energies.
Sign convention: Q_a > 0 is heat flowing from refrigerant to air, and every
exchanger obeys dE/dt = m_in h_in - m_out h_out - Q_a.
"""

import json
import logging
import os
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from artifacts import write_versioned_csv
from exceptions import StepFailure
from topology import CONDENSER
from topology import EVAPORATOR
from topology import Topology

logger = logging.getLogger(__name__)

INPUT_COLUMNS = ["T_a_in", "phi_a_in", "m_a", "P_amb", "m_r_in", "h_r_in", "h_r_out", "P_r_out"]
OUTPUT_COLUMNS = ["p_1", "p_N", "h_1", "h_N", "T_a_out", "Q_a", "M_r", "E_hx", "Q_lat"]
AUX_COLUMNS = ["t", "m_r_out", "Mdot_true", "Edot_true"]
DATASET_SCHEMA_VERSION = 1

PRESSURE_BOUNDS = (2e5, 6e6)


@dataclass(frozen=True)
class PropertyMap:
    """Affine (p, h) -> (T, rho) map anchored at (p0, h0) -> (T0, rho0)"""

    p0: float = 1.5e6
    h0: float = 3.0e5
    T0: float = 300.0
    rho0: float = 200.0
    c_rho_p: float = 6e-5
    c_rho_h: float = -5e-4
    c_T_p: float = 1.2e-5
    c_T_h: float = 2e-5
    p_min: float = PRESSURE_BOUNDS[0]
    p_max: float = PRESSURE_BOUNDS[1]
    h_min: float = 1.0e5
    h_max: float = 5.0e5

    def clamp(self, p, h) -> Tuple[np.ndarray, np.ndarray, bool]:
        p = np.asarray(p, dtype=float)
        h = np.asarray(h, dtype=float)
        pc = np.clip(p, self.p_min, self.p_max)
        hc = np.clip(h, self.h_min, self.h_max)
        clamped = bool(np.any(pc != p) or np.any(hc != h))
        return pc, hc, clamped

    def temperature(self, p, h) -> np.ndarray:
        return self.T0 + self.c_T_p * (p - self.p0) + self.c_T_h * (h - self.h0)

    def density(self, p, h) -> np.ndarray:
        return self.rho0 + self.c_rho_p * (p - self.p0) + self.c_rho_h * (h - self.h0)

    def pressure(self, rho, h) -> np.ndarray:
        """Inverse of ``density`` in p at fixed h"""
        return self.p0 + (rho - self.rho0 - self.c_rho_h * (h - self.h0)) / self.c_rho_p


DEFAULT_PROPERTIES = PropertyMap()


@dataclass
class PropertyResult:
    T: np.ndarray
    rho: np.ndarray
    clamped: bool


def property_eval(p, h, props: PropertyMap = DEFAULT_PROPERTIES) -> PropertyResult:
    """Temperature and density; inputs outside the envelope are clamped and flagged"""
    pc, hc, clamped = props.clamp(p, h)
    if clamped:
        logger.debug("property map clamped (p=%s, h=%s)", p, h)
    return PropertyResult(T=props.temperature(pc, hc), rho=props.density(pc, hc), clamped=clamped)


@dataclass(frozen=True)
class PlantParameters:
    volume_condenser: float = 2e-2  # m^3
    volume_evaporator: float = 3e-2
    displacement: float = 5e-6  # m^3 per revolution
    eta_v0: float = 0.95
    clearance: float = 0.04
    eta_is: float = 0.7
    valve_cv: float = 3e-6
    k_inlet: float = 1e-7  # kg/(s Pa), discharge node -> condenser inlet
    k_outlet: float = 1e-7  # exchanger outlet -> manifold
    pressure_drop: float = 0.01
    ua_condenser: float = 400.0  # W/K
    ua_evaporator: float = 500.0
    cp_air: float = 1006.0
    latent_fraction: float = 0.3


DEFAULT_PARAMETERS = PlantParameters()


def compressor_law(
    p_suct,
    p_dis,
    h_in,
    speed,
    params: PlantParameters = DEFAULT_PARAMETERS,
    props: Optional[PropertyMap] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Volumetric compressor: m = eta_v * speed * rho_suct * V_disp, with
    eta_v = eta_v0 - clearance * (p_dis / p_suct - 1) clipped to [0, eta_v0],
    and a fixed isentropic-efficiency enthalpy rise.
    """
    props = props or DEFAULT_PROPERTIES
    p_suct = np.asarray(p_suct, dtype=float)
    rho = property_eval(p_suct, h_in, props).rho
    ratio = np.asarray(p_dis, dtype=float) / np.maximum(p_suct, 1.0)
    eta_v = np.clip(params.eta_v0 - params.clearance * (ratio - 1.0), 0.0, params.eta_v0)
    flow = eta_v * np.maximum(speed, 0.0) * rho * params.displacement
    rise = np.maximum(np.asarray(p_dis) - p_suct, 0.0) / (rho * params.eta_is)
    return flow, np.asarray(h_in, dtype=float) + rise


def valve_law(
    p_in,
    p_out,
    h_in,
    opening,
    params: PlantParameters = DEFAULT_PARAMETERS,
    props: PropertyMap = DEFAULT_PROPERTIES,
) -> Tuple[np.ndarray, np.ndarray]:
    """Orifice valve m = Cv * opening * sqrt(max(rho_in (p_in - p_out), 0)); isenthalpic"""
    rho = property_eval(p_in, h_in, props).rho
    drive = np.maximum(rho * (np.asarray(p_in) - np.asarray(p_out)), 0.0)
    flow = params.valve_cv * np.clip(opening, 0.0, 1.0) * np.sqrt(drive)
    return flow, np.asarray(h_in, dtype=float) * np.ones_like(flow)


def air_side(T_r, T_air, m_air, ua, cp_air) -> Tuple[np.ndarray, np.ndarray]:
    """Effectiveness-NTU heat rate Q_a (refrigerant -> air) and air outlet temperature"""
    capacity = np.maximum(m_air, 0.0) * cp_air
    safe = np.where(capacity > 0, capacity, 1.0)
    effectiveness = np.where(capacity > 0, 1.0 - np.exp(-ua / safe), 0.0)
    q_a = effectiveness * capacity * (T_r - T_air)
    t_out = np.where(capacity > 0, T_air + q_a / safe, T_air)
    return q_a, t_out


@dataclass
class ActuationSample:
    speeds: np.ndarray
    openings: np.ndarray
    air_temp: np.ndarray
    air_flow: np.ndarray
    humidity: np.ndarray
    ambient_pressure: float


@dataclass
class ActuationProfile:
    """Piecewise-constant actuation and air boundary conditions, one row per sample period"""

    speeds: np.ndarray  # (N, n_c) Hz
    openings: np.ndarray  # (N, n_v)
    air_temp: np.ndarray  # (N, n_hx) K
    air_flow: np.ndarray  # (N, n_hx) kg/s
    humidity: np.ndarray  # (N, n_hx)
    ambient_pressure: np.ndarray  # (N,) Pa
    dt: float = 1.0

    def __post_init__(self):
        n = len(self.speeds)
        if n < 2:
            raise ValueError("actuation profile needs at least two samples")
        for name in ("openings", "air_temp", "air_flow", "humidity", "ambient_pressure"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"profile column '{name}' has the wrong length")
        if np.any(self.speeds < 0):
            raise ValueError("compressor speeds must be non-negative")
        if np.any(self.openings < 0) or np.any(self.openings > 1):
            raise ValueError("valve openings must lie in [0, 1]")
        if self.dt <= 0:
            raise ValueError("profile sample period must be positive")

    def __len__(self) -> int:
        return len(self.speeds)

    @property
    def n_c(self) -> int:
        return self.speeds.shape[1]

    @property
    def n_v(self) -> int:
        return self.openings.shape[1]

    def index_at(self, t: float) -> int:
        return int(min(max(np.floor(t / self.dt + 1e-9), 0), len(self) - 1))

    def sample(self, index: int) -> ActuationSample:
        i = min(max(index, 0), len(self) - 1)
        return ActuationSample(
            speeds=self.speeds[i],
            openings=self.openings[i],
            air_temp=self.air_temp[i],
            air_flow=self.air_flow[i],
            humidity=self.humidity[i],
            ambient_pressure=float(self.ambient_pressure[i]),
        )

    def at(self, t: float) -> ActuationSample:
        return self.sample(self.index_at(t))

    def control_signals(self) -> np.ndarray:
        """Compressor speeds and valve openings side by side, (N, n_c + n_v)"""
        return np.hstack([self.speeds, self.openings])

    def to_frame(self) -> pd.DataFrame:
        columns: Dict[str, np.ndarray] = {"t": np.arange(len(self)) * self.dt}
        for k in range(self.n_c):
            columns[f"speed_{k + 1}"] = self.speeds[:, k]
        for k in range(self.n_v):
            columns[f"opening_{k + 1}"] = self.openings[:, k]
        for j in range(self.air_temp.shape[1]):
            columns[f"T_air_{j + 1}"] = self.air_temp[:, j]
            columns[f"m_air_{j + 1}"] = self.air_flow[:, j]
            columns[f"phi_air_{j + 1}"] = self.humidity[:, j]
        columns["P_amb"] = self.ambient_pressure
        return pd.DataFrame(columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "ActuationProfile":
        def block(prefix: str) -> np.ndarray:
            names = sorted(
                (c for c in frame.columns if c.startswith(prefix)),
                key=lambda c: int(c.rsplit("_", 1)[1]),
            )
            return frame[names].to_numpy(dtype=float)

        t = frame["t"].to_numpy(dtype=float)
        dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
        return cls(
            speeds=block("speed_"),
            openings=block("opening_"),
            air_temp=block("T_air_"),
            air_flow=block("m_air_"),
            humidity=block("phi_air_"),
            ambient_pressure=frame["P_amb"].to_numpy(dtype=float),
            dt=dt,
        )


def make_profile(
    topology: Topology,
    n_samples: int,
    rng: np.random.Generator,
    jump_size: Tuple[float, float] = (6.0, 15.0),
    segment_length: Tuple[int, int] = (150, 400),
    speed_range: Tuple[float, float] = (30.0, 60.0),
    opening_range: Tuple[float, float] = (0.35, 0.65),
    constant: bool = False,
) -> ActuationProfile:
    """
    Random piecewise-constant profile. Compressor speeds move in jumps of
    ``jump_size`` Hz between segments; valve openings drift by small steps.
    """
    n_c, n_v, n_hx = topology.n_c, topology.n_v, topology.n_hx
    speeds = np.empty((n_samples, n_c))
    openings = np.empty((n_samples, n_v))
    speed = rng.uniform(*speed_range, size=n_c)
    opening = rng.uniform(*opening_range, size=n_v)
    i = 0
    while i < n_samples:
        length = int(rng.integers(segment_length[0], segment_length[1] + 1))
        speeds[i : i + length] = speed
        openings[i : i + length] = opening
        i += length
        if constant:
            continue
        for k in range(n_c):
            delta = rng.uniform(*jump_size) * rng.choice([-1.0, 1.0])
            if not speed_range[0] <= speed[k] + delta <= speed_range[1]:
                delta = -delta
            speed[k] = float(np.clip(speed[k] + delta, *speed_range))
        opening = np.clip(opening + rng.uniform(-0.1, 0.1, size=n_v), *opening_range)

    air_temp = np.empty((n_samples, n_hx))
    air_flow = np.empty((n_samples, n_hx))
    for j, hx in enumerate(topology.heat_exchangers):
        air_temp[:, j] = 297.0 if hx.kind == CONDENSER else 303.0
        air_flow[:, j] = 0.3 if hx.kind == CONDENSER else 0.5
    humidity = np.full((n_samples, n_hx), 0.5)
    ambient = np.full(n_samples, 101325.0)
    return ActuationProfile(speeds, openings, air_temp, air_flow, humidity, ambient)


@dataclass
class PlantSnapshot:
    """Everything the plant knows at one (state, actuation) pair; per-exchanger arrays"""

    p_hx: np.ndarray
    h_hx: np.ndarray
    T_r: np.ndarray
    m_in: np.ndarray
    m_out: np.ndarray
    h_in: np.ndarray
    h_out: np.ndarray
    q_a: np.ndarray
    T_a_out: np.ndarray
    q_lat: np.ndarray
    p_out: np.ndarray  # pressure of the node each exchanger discharges into
    p_dis: np.ndarray
    p_liq: float
    p_suct: float
    compressor_flow: np.ndarray
    compressor_h_out: np.ndarray
    valve_flow: np.ndarray
    clamped: bool = False

    @property
    def mass_rate(self) -> np.ndarray:
        return self.m_in - self.m_out

    @property
    def energy_rate(self) -> np.ndarray:
        return self.m_in * self.h_in - self.m_out * self.h_out - self.q_a


@dataclass
class OracleRun:
    t: np.ndarray
    states: np.ndarray  # (n + 1, 2 n_hx)
    energy_flux: np.ndarray  # (n + 1, n_hx) cumulative integral of the energy rate
    snapshots: List[PlantSnapshot] = field(default_factory=list)


class PlantOracle:
    def __init__(
        self,
        topology: Topology,
        params: PlantParameters = DEFAULT_PARAMETERS,
        props: PropertyMap = DEFAULT_PROPERTIES,
    ):
        self.topology = topology
        self.params = params
        self.props = props
        kinds = [hx.kind for hx in topology.heat_exchangers]
        self.volumes = np.array(
            [
                params.volume_condenser if k == CONDENSER else params.volume_evaporator
                for k in kinds
            ]
        )
        self.ua = np.array(
            [params.ua_condenser if k == CONDENSER else params.ua_evaporator for k in kinds]
        )
        self.cond = slice(0, topology.n_c)
        self.evap = slice(topology.n_c, topology.n_hx)

    def initial_state(
        self,
        condenser_ph: Tuple[float, float] = (2.2e6, 2.8e5),
        evaporator_ph: Tuple[float, float] = (7.0e5, 3.6e5),
    ) -> np.ndarray:
        n_hx = self.topology.n_hx
        p = np.empty(n_hx)
        h = np.empty(n_hx)
        p[self.cond], h[self.cond] = condenser_ph
        p[self.evap], h[self.evap] = evaporator_ph
        mass = self.props.density(p, h) * self.volumes
        return np.concatenate([mass, mass * h])

    def split_state(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n_hx = self.topology.n_hx
        return y[:n_hx], y[n_hx:]

    def exchanger_outputs(
        self, y: np.ndarray, air_temp, air_flow, h_in
    ) -> Tuple[np.ndarray, bool]:
        """The nine outputs of every exchanger implied by its (M_r, E_hx) state, (n_hx, 9)"""
        mass, energy = self.split_state(np.asarray(y, dtype=float))
        if np.any(mass <= 0):
            raise StepFailure("refrigerant mass must stay positive")
        h = energy / mass
        p, h_eval, clamped = self.props.clamp(self.props.pressure(mass / self.volumes, h), h)
        T_r = self.props.temperature(p, h_eval)
        q_a, t_out = air_side(T_r, air_temp, air_flow, self.ua, self.params.cp_air)
        outputs = np.column_stack(
            [
                p,
                p * (1.0 - self.params.pressure_drop),
                0.5 * (np.asarray(h_in, dtype=float) + h),
                h,
                t_out,
                q_a,
                mass,
                energy,
                self.params.latent_fraction * np.maximum(q_a, 0.0),
            ]
        )
        return outputs, clamped

    def evaluate(self, y: np.ndarray, act: ActuationSample) -> PlantSnapshot:
        params, props = self.params, self.props
        n_c, n_v = self.topology.n_c, self.topology.n_v
        mass, energy = self.split_state(np.asarray(y, dtype=float))
        if np.any(mass <= 0) or not np.all(np.isfinite(y)):
            raise StepFailure("refrigerant mass must stay positive and finite")

        h = energy / mass
        p_raw = props.pressure(mass / self.volumes, h)
        p_hx, h_eval, clamped = props.clamp(p_raw, h)
        T_r = props.temperature(p_hx, h_eval)
        p_first = p_hx
        p_last = p_hx * (1.0 - params.pressure_drop)

        q_a, t_air_out = air_side(T_r, act.air_temp, act.air_flow, self.ua, params.cp_air)

        cond_p1, cond_pn, cond_h = p_first[self.cond], p_last[self.cond], h[self.cond]
        evap_p1, evap_pn, evap_h = p_first[self.evap], p_last[self.evap], h[self.evap]

        def liquid_enthalpy(p_liq: float) -> float:
            return mix_enthalpy(params.k_outlet * (cond_pn - p_liq), cond_h)

        def liquid_balance(p_liq: float) -> float:
            out = params.k_outlet * (cond_pn - p_liq)
            h_liq = liquid_enthalpy(p_liq)
            valves, _ = valve_law(p_liq, evap_p1, h_liq, act.openings, params, props)
            return float(np.sum(out) - np.sum(valves))

        lo = min(float(np.min(cond_pn)), float(np.min(evap_p1)))
        hi = float(np.max(cond_pn))
        p_liq = _root(liquid_balance, lo, hi)

        h_liq = liquid_enthalpy(p_liq)
        valve_flow, _ = valve_law(p_liq, evap_p1, h_liq, act.openings, params, props)
        cond_law = params.k_outlet * (cond_pn - p_liq)
        cond_out = cond_law - (np.sum(cond_law) - np.sum(valve_flow)) / n_c

        def suction_enthalpy(p_suct: float) -> float:
            return mix_enthalpy(params.k_outlet * (evap_pn - p_suct), evap_h)

        def compressor_flows(p_suct: float) -> Tuple[np.ndarray, np.ndarray]:
            # discharge pressure from m = k_in (p_dis - p1); linear in m given p_suct
            rho = property_eval(p_suct, suction_enthalpy(p_suct), props).rho
            a = np.maximum(act.speeds, 0.0) * rho * params.displacement
            c = params.clearance
            numer = a * (params.eta_v0 + c - c * cond_p1 / max(p_suct, 1.0))
            denom = 1.0 + a * c / (params.k_inlet * max(p_suct, 1.0))
            flow = np.maximum(numer / denom, 0.0)
            flow = np.minimum(flow, params.eta_v0 * a)
            return flow, cond_p1 + flow / params.k_inlet

        def suction_balance(p_suct: float) -> float:
            out = params.k_outlet * (evap_pn - p_suct)
            flow, _ = compressor_flows(p_suct)
            return float(np.sum(out) - np.sum(flow))

        p_suct = _root(suction_balance, 1e3, float(np.max(evap_pn)))
        comp_flow, p_dis = compressor_flows(p_suct)
        evap_law = params.k_outlet * (evap_pn - p_suct)
        evap_out = evap_law - (np.sum(evap_law) - np.sum(comp_flow)) / n_v
        h_suct = suction_enthalpy(p_suct)
        _, comp_h_out = compressor_law(p_suct, p_dis, h_suct, act.speeds, params, props)

        m_in = np.concatenate([comp_flow, valve_flow])
        m_out = np.concatenate([cond_out, evap_out])
        h_in = np.concatenate([comp_h_out, np.full(n_v, h_liq)])
        p_out = np.concatenate([np.full(n_c, p_liq), np.full(n_v, p_suct)])

        return PlantSnapshot(
            p_hx=p_hx,
            h_hx=h,
            T_r=T_r,
            m_in=m_in,
            m_out=m_out,
            h_in=h_in,
            h_out=h.copy(),
            q_a=q_a,
            T_a_out=t_air_out,
            q_lat=params.latent_fraction * np.maximum(q_a, 0.0),
            p_out=p_out,
            p_dis=p_dis,
            p_liq=p_liq,
            p_suct=p_suct,
            compressor_flow=comp_flow,
            compressor_h_out=comp_h_out,
            valve_flow=valve_flow,
            clamped=clamped,
        )

    def rhs(self, y: np.ndarray, act: ActuationSample) -> np.ndarray:
        snap = self.evaluate(y, act)
        return np.concatenate([snap.mass_rate, snap.energy_rate])

    def integrate(
        self,
        y0: np.ndarray,
        profile: ActuationProfile,
        n_steps: int,
        record: bool = True,
    ) -> OracleRun:
        """
        Fixed-step RK4 at the profile's sample period with zero-order-hold
        actuation. ``energy_flux`` accumulates the boundary fluxes
        m_in h_in - m_out h_out - Q_a by the trapezoid rule over each step's
        end points, independently of the state update.
        """
        dt = profile.dt
        n_hx = self.topology.n_hx
        states = np.empty((n_steps + 1, len(y0)))
        flux = np.zeros((n_steps + 1, n_hx))
        states[0] = y0
        snapshots: List[PlantSnapshot] = []
        y = np.array(y0, dtype=float)
        act = profile.sample(0)
        try:
            start = self.evaluate(y, act)
        except (StepFailure, ValueError) as e:
            raise StepFailure(f"oracle failed at step 0: {e}", t=0.0, step=0) from e
        for n in range(n_steps):
            if record:
                snapshots.append(start)
            try:
                r1 = np.concatenate([start.mass_rate, start.energy_rate])
                r2 = self.rhs(y + 0.5 * dt * r1, act)
                r3 = self.rhs(y + 0.5 * dt * r2, act)
                r4 = self.rhs(y + dt * r3, act)
                y = y + dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
                if not np.all(np.isfinite(y)):
                    raise StepFailure("non-finite state")
                end = self.evaluate(y, act)
                next_act = profile.sample(n + 1)
                start = end if _same_actuation(act, next_act) else self.evaluate(y, next_act)
            except (StepFailure, ValueError) as e:
                raise StepFailure(f"oracle failed at step {n}: {e}", t=n * dt, step=n) from e
            act = next_act
            states[n + 1] = y
            flux[n + 1] = flux[n] + 0.5 * dt * (r1[n_hx:] + end.energy_rate)
        if record:
            snapshots.append(start)
        return OracleRun(
            t=np.arange(n_steps + 1) * dt, states=states, energy_flux=flux, snapshots=snapshots
        )


def _same_actuation(a: ActuationSample, b: ActuationSample) -> bool:
    return a.ambient_pressure == b.ambient_pressure and all(
        np.array_equal(getattr(a, name), getattr(b, name))
        for name in ("speeds", "openings", "air_temp", "air_flow", "humidity")
    )


def _root(fn, lo: float, hi: float) -> float:
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0 or lo >= hi:
        return hi
    if f_lo * f_hi > 0:
        raise ValueError(f"manifold balance not bracketed on [{lo:.6g}, {hi:.6g}]")
    return float(brentq(fn, lo, hi, xtol=1e-8, rtol=1e-14, maxiter=200))


def mix_enthalpy(flows: np.ndarray, enthalpies: np.ndarray) -> float:
    """Flow-weighted enthalpy of merging streams; reverse flows do not contribute"""
    positive = np.maximum(flows, 0.0)
    total = float(np.sum(positive))
    if total <= 0.0:
        return float(np.mean(enthalpies))
    return float(np.dot(positive, enthalpies) / total)


def oracle_rhs(
    oracle: PlantOracle, y: np.ndarray, profile: ActuationProfile, t: float
) -> np.ndarray:
    """Time derivatives (mass block, energy block) at time t under zero-order-hold actuation"""
    return oracle.rhs(y, profile.at(t))


def snapshot_frame(
    run: OracleRun, profile: ActuationProfile, hx: int
) -> pd.DataFrame:
    """Per-exchanger table: the 8 inputs, then the 9 outputs, then auxiliary columns"""
    n_hx = len(run.snapshots[0].p_hx)
    rows = []
    for n, snap in enumerate(run.snapshots):
        act = profile.sample(n)
        mass = run.states[n, hx]
        energy = run.states[n, n_hx + hx]
        rows.append(
            [
                act.air_temp[hx],
                act.humidity[hx],
                act.air_flow[hx],
                act.ambient_pressure,
                snap.m_in[hx],
                snap.h_in[hx],
                snap.h_out[hx],
                snap.p_out[hx],
                snap.p_hx[hx],
                snap.p_hx[hx] * (1.0 - DEFAULT_PARAMETERS.pressure_drop),
                0.5 * (snap.h_in[hx] + snap.h_hx[hx]),
                snap.h_hx[hx],
                snap.T_a_out[hx],
                snap.q_a[hx],
                mass,
                energy,
                snap.q_lat[hx],
                run.t[n],
                snap.m_out[hx],
                snap.mass_rate[hx],
                snap.energy_rate[hx],
            ]
        )
    return pd.DataFrame(rows, columns=INPUT_COLUMNS + OUTPUT_COLUMNS + AUX_COLUMNS)


def column_statistics(frames: List[pd.DataFrame]) -> Dict[str, Dict[str, float]]:
    joined = pd.concat(frames, ignore_index=True)
    stats = {}
    for column in INPUT_COLUMNS + OUTPUT_COLUMNS:
        lo, hi = float(joined[column].min()), float(joined[column].max())
        if hi - lo < 1e-12 * max(abs(lo), abs(hi), 1.0):
            # constant columns get a unit span so normalization stays finite
            lo, hi = lo - 0.5, hi + 0.5
        stats[column] = {"min": lo, "max": hi}
    return stats


def generate_dataset(
    topology: Topology,
    profile: ActuationProfile,
    horizon: int,
    required_window: int = 30,
    oracle: Optional[PlantOracle] = None,
    y0: Optional[np.ndarray] = None,
    out_dir: Optional[str] = None,
) -> Dict[str, pd.DataFrame]:
    """
    Run the oracle for ``horizon`` steps and tabulate every heat exchanger.

    Returns one frame per exchanger name. When ``out_dir`` is given, writes
    ``<name>.csv`` per exchanger plus ``<kind>.json`` sidecars holding the
    per-column min/max and the rate-normalization bridge.
    """
    if horizon < required_window:
        raise ValueError(
            f"horizon {horizon} is shorter than the required window {required_window}"
        )
    oracle = oracle or PlantOracle(topology)
    y0 = oracle.initial_state() if y0 is None else y0
    logger.info("generating %d oracle steps for %d exchangers", horizon, topology.n_hx)
    run = oracle.integrate(y0, profile, horizon)

    frames = {
        hx.name: snapshot_frame(run, profile, j) for j, hx in enumerate(topology.heat_exchangers)
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for name, frame in frames.items():
            path = os.path.join(out_dir, f"{name}.csv")
            write_versioned_csv(path, frame, "hx_dataset", DATASET_SCHEMA_VERSION)
        for kind in (CONDENSER, EVAPORATOR):
            members = [frames[hx.name] for hx in topology.heat_exchangers if hx.kind == kind]
            if members:
                write_sidecar(os.path.join(out_dir, f"{kind}.json"), members, profile.dt)
    return frames


def sidecar_payload(frames: List[pd.DataFrame], dt: float) -> Dict:
    stats = column_statistics(frames)
    span = {c: stats[c]["max"] - stats[c]["min"] for c in ("M_r", "E_hx")}
    return {
        "schema_version": DATASET_SCHEMA_VERSION,
        "sample_period": dt,
        "columns": stats,
        # physical rate (per second) times this factor gives normalized units per second
        "rate_scale": {"Mdot": 2.0 / span["M_r"], "Edot": 2.0 / span["E_hx"]},
    }


def write_sidecar(path: str, frames: List[pd.DataFrame], dt: float) -> None:
    with open(path, "w") as fh:
        json.dump(sidecar_payload(frames, dt), fh, indent=2, sort_keys=True)
