"""
Variable-order (1-5), variable-step BDF integrator for index-1 residual
systems F(t, y, y') = 0.

The BDF derivative at t_n is the derivative of the Lagrange polynomial through
the actual (possibly nonuniform) history, so the formulas stay exact on
polynomials of degree k for any step pattern. On a uniform grid these are the
classical coefficients returned by ``bdf_coefficients``.

Two Newton policies share the stepping code:

- IDA mode keeps the factored iteration matrix across steps and only
  reassembles when the leading coefficient drifts by more than a factor 1.3 or
  Newton fails; a stale matrix is compensated by scaling the update.
- DASSL mode reassembles dF/dy + (alpha_0/h) dF/dy' by finite differences every
  time h or k changes.

Order control: a cold start climbs one order per step up to ``startup_order``
while the local error stays negligible. After that, the error at k-1 and k+1
is estimated from scaled backward differences of the accepted solutions, and
an order above the current one is only taken after k+1 steps whose size ratios
stay within ``steady_ratio``. Step growth per step is capped by
``STABLE_GROWTH``; variable-step BDF4 and BDF5 lose zero-stability at larger
ratios.
"""

import logging
from dataclasses import dataclass
from dataclasses import field
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import lu_factor
from scipy.linalg import lu_solve

from exceptions import ShapeError
from exceptions import StepFailure
from nonlinear import FD_STEP
from nonlinear import wrms_norm

logger = logging.getLogger(__name__)

IDA = "ida"
DASSL = "dassl"
MAX_ORDER = 5
STABLE_GROWTH = {1: 2.5, 2: 2.5, 3: 2.5, 4: 1.5, 5: 1.3}

Residual = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def derivative_weights(nodes: Sequence[float], x: float) -> np.ndarray:
    """Weights w_j with p'(x) = sum_j w_j y_j for the interpolant through (nodes, y)"""
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    weights = np.zeros(n)
    for j in range(n):
        total = 0.0
        for i in range(n):
            if i == j:
                continue
            term = 1.0 / (nodes[j] - nodes[i])
            for m in range(n):
                if m != i and m != j:
                    term *= (x - nodes[m]) / (nodes[j] - nodes[m])
            total += term
        weights[j] = total
    return weights


def extrapolation_weights(nodes: Sequence[float], x: float) -> np.ndarray:
    """Lagrange basis values at x"""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.ones(nodes.size)
    for j in range(nodes.size):
        for m in range(nodes.size):
            if m != j:
                weights[j] *= (x - nodes[m]) / (nodes[j] - nodes[m])
    return weights


def scaled_difference(nodes: Sequence[float], values: Sequence[np.ndarray], h: float) -> np.ndarray:
    """j! f[t_0..t_j] h^j over j+1 points; the j-th backward difference on a uniform grid"""
    nodes = np.asarray(nodes, dtype=float)
    table = [np.asarray(v, dtype=float) for v in values]
    j = nodes.size - 1
    for level in range(1, j + 1):
        for i in range(j, level - 1, -1):
            table[i] = (table[i] - table[i - 1]) / (nodes[i] - nodes[i - level])
    return table[j] * float(np.prod(np.arange(1, j + 1))) * h**j


def bdf_coefficients(k: int) -> np.ndarray:
    """alpha_0..alpha_k with y'(t_n) ~ (1/h) sum_i alpha_i y_{n-i} on a uniform grid"""
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"BDF order must be in 1..{MAX_ORDER}, got {k}")
    return derivative_weights(-np.arange(k + 1, dtype=float), 0.0)


@dataclass
class DaeProblem:
    residual: Residual
    t0: float
    y0: np.ndarray
    yp0: np.ndarray

    def __post_init__(self):
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        self.yp0 = np.atleast_1d(np.asarray(self.yp0, dtype=float))
        if self.y0.shape != self.yp0.shape:
            raise ShapeError(f"y0 {self.y0.shape} and yp0 {self.yp0.shape} differ")

    @classmethod
    def from_rhs(
        cls, rhs: Callable[[float, np.ndarray], np.ndarray], t0: float, y0: np.ndarray
    ) -> "DaeProblem":
        """Semi-explicit F = y' - f(t, y); y'(t0) = f(t0, y0) is consistent by construction"""
        y0 = np.asarray(y0, dtype=float)

        def residual(t: float, y: np.ndarray, yp: np.ndarray) -> np.ndarray:
            return yp - rhs(t, y)

        return cls(residual, t0, y0, np.asarray(rhs(t0, y0), dtype=float))


@dataclass
class DaeConfig:
    mode: str = IDA
    rtol: float = 1e-6
    atol: float = 1e-6
    h_max: float = 10.0
    h_min: float = 1e-4
    h0: Optional[float] = None
    max_order: int = MAX_ORDER
    ida_output_interval: float = 1.0
    dassl_min_output: float = 0.1
    dassl_max_steps: int = 500
    newton_max_iter: int = 4
    newton_tol: float = 0.33
    refresh_factor: float = 1.3
    safety: float = 0.9
    startup_order: int = 3
    steady_ratio: float = 1.5

    def __post_init__(self):
        if self.mode not in (IDA, DASSL):
            raise ValueError(f"Unsupported DAE mode: {self.mode}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.h_min <= self.h_max:
            raise ValueError("need 0 < h_min <= h_max")
        if not 1 <= self.max_order <= MAX_ORDER:
            raise ValueError(f"max_order must be in 1..{MAX_ORDER}")
        if not 1 <= self.startup_order <= MAX_ORDER:
            raise ValueError(f"startup_order must be in 1..{MAX_ORDER}")
        if self.steady_ratio < 1.0:
            raise ValueError("steady_ratio must be >= 1")


@dataclass
class NewtonResult:
    y: np.ndarray
    iterations: int
    converged: bool
    rate: float = 0.0


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    solve_linear: Callable[[np.ndarray], np.ndarray],
    y_pred: np.ndarray,
    atol: float,
    rtol: float,
    max_iter: int = 4,
    tol: float = 0.33,
    scale: float = 1.0,
) -> NewtonResult:
    """
    Modified Newton on G(y) = 0 from the predictor.

    ``solve_linear`` applies the (possibly stale) inverse iteration matrix.
    Converged once the rate-estimated WRMS distance to the solution,
    rate / (1 - rate) * ||delta||, drops below ``tol``.
    """
    y = np.array(y_pred, dtype=float)
    first = 0.0
    rate = 0.0
    for m in range(max_iter):
        g = residual(y)
        if not np.all(np.isfinite(g)):
            return NewtonResult(y, m, False, rate)
        delta = -scale * solve_linear(g)
        y = y + delta
        norm = wrms_norm(delta, y_pred, atol, rtol)
        if m == 0:
            first = norm
            if norm <= 1e-4 * tol:
                return NewtonResult(y, 1, True, 0.0)
            continue
        rate = (norm / first) ** (1.0 / m) if first > 0 else 0.0
        if rate >= 0.9:
            return NewtonResult(y, m + 1, False, rate)
        if rate / (1.0 - rate) * norm <= tol:
            return NewtonResult(y, m + 1, True, rate)
    return NewtonResult(y, max_iter, False, rate)


def step_order_control(
    estimates: Dict[int, float],
    h: float,
    k: int,
    h_min: float,
    h_max: float,
    safety: float = 0.9,
    can_raise: bool = True,
    growth_limits: Optional[Dict[int, float]] = None,
) -> Tuple[float, int]:
    """
    Pick the order with the largest admissible step, preferring a lower order
    over a higher one, and size the next step as
    h * clamp(safety * est^(-1/(k+1)), 0.2, 2.5), clamped to [h_min, h_max].
    ``growth_limits`` caps the growth per order.
    """
    limits = STABLE_GROWTH if growth_limits is None else growth_limits

    def factor(order: int) -> float:
        return step_factor(estimates[order], order, safety)

    best_k = k
    best = factor(k)
    if k - 1 in estimates and k > 1 and factor(k - 1) > best:
        best_k, best = k - 1, factor(k - 1)
    elif can_raise and k + 1 in estimates and factor(k + 1) > best:
        best_k, best = k + 1, factor(k + 1)
    best = min(best, limits.get(best_k, 2.5))
    return float(np.clip(h * best, h_min, h_max)), best_k


def step_factor(est: float, order: int, safety: float = 0.9) -> float:
    if est <= 0.0:
        return 2.5
    return float(np.clip(safety * est ** (-1.0 / (order + 1)), 0.2, 2.5))


@dataclass
class StepRecord:
    t: float
    y: np.ndarray
    yp: np.ndarray
    h: float
    order: int
    newton_iters: int
    jacobian_age: int
    error: float


@dataclass
class DaeStats:
    n_steps: int = 0
    n_rejected: int = 0
    n_newton: int = 0
    n_jacobians: int = 0
    n_residuals: int = 0


@dataclass
class DaeResult:
    t: np.ndarray
    y: np.ndarray
    h_used: np.ndarray
    order: np.ndarray
    newton_iters: np.ndarray
    jacobian_age: np.ndarray
    steps: List[StepRecord] = field(default_factory=list)
    stats: DaeStats = field(default_factory=DaeStats)
    failed: bool = False
    failure_reason: str = ""
    failure_t: float = float("nan")


class BdfIntegrator:
    """Single-instance BDF stepper; ``step`` advances one accepted step"""

    def __init__(self, problem: DaeProblem, config: DaeConfig, span: Optional[float] = None):
        self.problem = problem
        self.config = config
        self.stats = DaeStats()
        self.t = float(problem.t0)
        self.history: List[Tuple[float, np.ndarray]] = [(self.t, problem.y0.copy())]
        self.yp = problem.yp0.copy()
        self.order = 1
        self.steps_at_order = 0
        self.starting = True
        self.accepted_h: List[float] = []
        self.h = self._initial_step(span) if config.h0 is None else config.h0
        self.lu = None
        self.cj_lu = 0.0
        self.jacobian_age = 0

        f0 = self._residual(self.t, problem.y0, problem.yp0)
        if wrms_norm(f0, problem.y0, config.atol, config.rtol) > 1.0:
            raise ValueError("initial conditions are inconsistent with the residual")

    @property
    def y(self) -> np.ndarray:
        return self.history[-1][1]

    def _residual(self, t: float, y: np.ndarray, yp: np.ndarray) -> np.ndarray:
        self.stats.n_residuals += 1
        return np.asarray(self.problem.residual(t, y, yp), dtype=float)

    def _initial_step(self, span: Optional[float]) -> float:
        """min(0.001 span, 0.5 / ||y'0||) in the WRMS norm"""
        cfg = self.config
        ypnorm = wrms_norm(self.problem.yp0, self.problem.y0, cfg.atol, cfg.rtol)
        h = 1e-3 * span if span else 1e-2 * cfg.h_max
        if ypnorm > 0:
            h = min(h, 0.5 / ypnorm)
        return float(np.clip(h, cfg.h_min, cfg.h_max))

    def _assemble(self, t: float, y: np.ndarray, yp: np.ndarray, cj: float) -> None:
        """Iteration matrix dF/dy + cj dF/dy' by simultaneous finite differences"""
        f0 = self._residual(t, y, yp)
        n = y.size
        jac = np.empty((n, n))
        weights = self.config.rtol * np.abs(y) + self.config.atol
        for i in range(n):
            delta = FD_STEP * max(abs(y[i]), abs(self.h * yp[i]), weights[i])
            y_pert = y.copy()
            yp_pert = yp.copy()
            y_pert[i] += delta
            yp_pert[i] += cj * delta
            jac[:, i] = (self._residual(t, y_pert, yp_pert) - f0) / delta
        try:
            self.lu = lu_factor(jac)
        except (ValueError, np.linalg.LinAlgError) as e:
            raise StepFailure(f"singular iteration matrix at t={t:.6g}", t=t) from e
        self.cj_lu = cj
        self.jacobian_age = 0
        self.stats.n_jacobians += 1

    def _needs_assembly(self, cj: float) -> bool:
        if self.lu is None:
            return True
        if self.config.mode == DASSL:
            return not np.isclose(cj, self.cj_lu, rtol=1e-12, atol=0.0)
        ratio = cj / self.cj_lu
        return ratio > self.config.refresh_factor or ratio < 1.0 / self.config.refresh_factor

    def _predict(self, t_new: float, order: int) -> np.ndarray:
        past = self.history[-(order + 1) :]
        if len(past) < order + 1 or len(self.history) == 1:
            t_last, y_last = self.history[-1]
            return y_last + (t_new - t_last) * self.yp
        nodes = [p[0] for p in past]
        w = extrapolation_weights(nodes, t_new)
        return sum(wi * yi for wi, (_, yi) in zip(w, past))

    def _difference_estimate(self, order: int, h: float) -> Optional[float]:
        """Local error at ``order`` from the (order+1)-th difference of the accepted history"""
        if len(self.history) < order + 2:
            return None
        past = self.history[-(order + 2) :]
        diff = scaled_difference([p[0] for p in past], [p[1] for p in past], h)
        return wrms_norm(diff, self.y, self.config.atol, self.config.rtol) / (order + 1)

    def _steady(self, k: int) -> bool:
        """The last k+1 step ratios all lie within ``steady_ratio``"""
        sizes = self.accepted_h[-(k + 2) :]
        if len(sizes) < k + 2:
            return False
        ratios = np.asarray(sizes[1:]) / np.asarray(sizes[:-1])
        bound = self.config.steady_ratio
        return bool(np.all((ratios <= bound) & (ratios >= 1.0 / bound)))

    def _try_step(self, h: float) -> Tuple[Optional[np.ndarray], Optional[np.ndarray], float, int]:
        """Returns (y, yp, error, newton_iters); y is None when Newton failed twice"""
        k = self.order
        t_new = self.t + h
        past = self.history[-k:]
        nodes = [t_new] + [p[0] for p in reversed(past)]
        c = derivative_weights(nodes, t_new)
        beta = sum(ci * yi for ci, (_, yi) in zip(c[1:], reversed(past)))
        cj = float(c[0])
        y_pred = self._predict(t_new, k)

        def g(y: np.ndarray) -> np.ndarray:
            return self._residual(t_new, y, cj * y + beta)

        iterations = 0
        for attempt in range(2):
            fresh = attempt == 1 or self._needs_assembly(cj)
            if fresh:
                self._assemble(t_new, y_pred, cj * y_pred + beta, cj)
            scale = 2.0 / (1.0 + cj / self.cj_lu) if self.config.mode == IDA else 1.0
            result = newton_solve(
                g,
                lambda r: lu_solve(self.lu, r),
                y_pred,
                self.config.atol,
                self.config.rtol,
                self.config.newton_max_iter,
                self.config.newton_tol,
                scale,
            )
            iterations += result.iterations
            self.stats.n_newton += result.iterations
            if result.converged:
                y_new = result.y
                error = wrms_norm(
                    y_new - y_pred, y_new, self.config.atol, self.config.rtol
                ) / (k + 1)
                return y_new, cj * y_new + beta, error, iterations
            if fresh:
                break
            logger.debug("newton failed at t=%.6g (rate %.3g), refreshing", t_new, result.rate)
        return None, None, float("inf"), iterations

    def _fit_step(self, h: float, t_stop: Optional[float]) -> float:
        cfg = self.config
        h = float(np.clip(h, cfg.h_min, cfg.h_max))
        if t_stop is None:
            return h
        remaining = t_stop - self.t
        if h >= remaining - 1e-12 * max(1.0, abs(t_stop)):
            return remaining
        if remaining - h < cfg.h_min:
            return remaining if remaining <= cfg.h_max else 0.5 * remaining
        return h

    def step(self, t_stop: Optional[float] = None) -> StepRecord:
        """One accepted step, never passing ``t_stop``; raises StepFailure when h < h_min"""
        cfg = self.config
        failures = 0
        while True:
            h = self._fit_step(self.h, t_stop)
            if h < cfg.h_min and (t_stop is None or h < t_stop - self.t):
                raise StepFailure(
                    f"step size {h:.3g} below h_min at t={self.t:.6g}",
                    t=self.t,
                    diagnostics={"order": self.order, "rejected": self.stats.n_rejected},
                )
            y_new, yp_new, error, iterations = self._try_step(h)
            if y_new is not None and error <= 1.0:
                break
            self.stats.n_rejected += 1
            failures += 1
            logger.debug(
                "rejected step t=%.6g h=%.3g order=%d error=%.3g", self.t, h, self.order, error
            )
            self.h = 0.5 * h
            self.starting = False
            if failures >= 2:
                self.order = 1
                self.steps_at_order = 0
            if self.h < cfg.h_min:
                raise StepFailure(
                    f"step size fell below h_min={cfg.h_min:.3g} at t={self.t:.6g}",
                    t=self.t,
                    diagnostics={"order": self.order, "error": error, "newton": iterations},
                )

        t_new = self.t + h
        k = self.order
        self.t = t_new
        self.history.append((t_new, y_new))
        if len(self.history) > MAX_ORDER + 2:
            self.history.pop(0)
        self.accepted_h = self.accepted_h[-(MAX_ORDER + 1) :] + [h]
        self.yp = yp_new
        self.jacobian_age += 1
        self.stats.n_steps += 1
        self.steps_at_order += 1
        record = StepRecord(t_new, y_new, yp_new, h, k, iterations, self.jacobian_age, error)

        if self.starting:
            top = min(cfg.startup_order, cfg.max_order)
            if k < top and step_factor(error, k, cfg.safety) >= 2.0:
                self.order = k + 1
                self.steps_at_order = 0
                self.h = float(np.clip(2.0 * h, cfg.h_min, cfg.h_max))
                return record
            self.starting = False

        estimates: Dict[int, float] = {k: error}
        if k > 1:
            lower = self._difference_estimate(k - 1, h)
            if lower is not None:
                estimates[k - 1] = lower
        if k < cfg.max_order:
            higher = self._difference_estimate(k + 1, h)
            if higher is not None:
                estimates[k + 1] = higher

        can_raise = self.steps_at_order >= k + 1 and self._steady(k)
        self.h, new_order = step_order_control(
            estimates, h, k, cfg.h_min, cfg.h_max, cfg.safety, can_raise
        )
        if new_order != k:
            self.order = new_order
            self.steps_at_order = 0
        return record


def _start_record(stepper: BdfIntegrator) -> StepRecord:
    return StepRecord(stepper.t, stepper.y.copy(), stepper.yp.copy(), 0.0, stepper.order, 0, 0, 0.0)


def _result_from_rows(
    rows: List[StepRecord],
    steps: List[StepRecord],
    stats: DaeStats,
    failed: bool = False,
    reason: str = "",
    failure_t: float = float("nan"),
) -> DaeResult:
    return DaeResult(
        t=np.array([r.t for r in rows]),
        y=np.array([r.y for r in rows]),
        h_used=np.array([r.h for r in rows]),
        order=np.array([r.order for r in rows], dtype=int),
        newton_iters=np.array([r.newton_iters for r in rows], dtype=int),
        jacobian_age=np.array([r.jacobian_age for r in rows], dtype=int),
        steps=steps,
        stats=stats,
        failed=failed,
        failure_reason=reason,
        failure_t=failure_t,
    )


def integrate_ida(
    problem: DaeProblem,
    t_eval: Sequence[float],
    config: DaeConfig,
    integrator: Optional[BdfIntegrator] = None,
    on_step: Optional[Callable[[StepRecord], None]] = None,
) -> DaeResult:
    """
    Step internally to t_eval[-1] and return Hermite-interpolated values at
    every requested time. On a hard failure the rows reached so far are
    returned with ``failed`` set. ``on_step`` sees every accepted internal step.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size < 1 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    if t_eval[0] < problem.t0:
        raise ValueError("t_eval starts before the initial time")

    stepper = integrator or BdfIntegrator(problem, config, float(t_eval[-1]) - problem.t0)
    steps: List[StepRecord] = [_start_record(stepper)]
    failed, reason, failure_t = False, "", float("nan")
    t_end = float(t_eval[-1])
    while stepper.t < t_end - 1e-12 * max(1.0, abs(t_end)):
        try:
            record = stepper.step(t_end)
            if on_step is not None:
                on_step(record)
            steps.append(record)
        except StepFailure as e:
            failed, reason, failure_t = True, str(e), e.t
            logger.warning("IDA-mode integration failed: %s", e)
            break

    ts = np.array([s.t for s in steps])
    reached = t_eval[t_eval <= ts[-1] + 1e-12 * max(1.0, abs(ts[-1]))]
    rows: List[StepRecord] = []
    if len(steps) > 1:
        spline = CubicHermiteSpline(
            ts, np.array([s.y for s in steps]), np.array([s.yp for s in steps]), axis=0
        )
        values = spline(np.minimum(reached, ts[-1]))
    else:
        values = np.array([steps[0].y for _ in reached])
    for t, y in zip(reached, values):
        cover = steps[min(int(np.searchsorted(ts, t - 1e-12)), len(steps) - 1)]
        rows.append(
            StepRecord(
                float(t),
                y,
                cover.yp,
                cover.h,
                cover.order,
                cover.newton_iters,
                cover.jacobian_age,
                cover.error,
            )
        )
    return _result_from_rows(rows, steps[1:], stepper.stats, failed, reason, failure_t)


def integrate_dassl(
    problem: DaeProblem,
    t_end: float,
    config: DaeConfig,
    increment: float,
    integrator: Optional[BdfIntegrator] = None,
    on_step: Optional[Callable[[StepRecord], None]] = None,
) -> DaeResult:
    """
    Step toward successive targets t + increment, recording a point only when
    ``config.dassl_min_output`` has elapsed since the last record (the end
    point is always recorded). More than ``config.dassl_max_steps`` internal
    steps for one target aborts with a failure marker. ``on_step`` sees every
    accepted internal step.
    """
    if t_end <= problem.t0:
        raise ValueError("t_end must lie after the initial time")
    if increment <= 0:
        raise ValueError("increment must be positive")
    stepper = integrator or BdfIntegrator(problem, config, t_end - problem.t0)
    rows = [_start_record(stepper)]
    steps: List[StepRecord] = []
    last_record = stepper.t
    failed, reason, failure_t = False, "", float("nan")
    tiny = 1e-12 * max(1.0, abs(t_end))

    while stepper.t < t_end - tiny and not failed:
        target = min(stepper.t + increment, t_end)
        count = 0
        while stepper.t < target - tiny:
            if count >= config.dassl_max_steps:
                failed, failure_t = True, stepper.t
                reason = f"more than {config.dassl_max_steps} internal steps toward t={target:.6g}"
                break
            try:
                record = stepper.step(target)
                if on_step is not None:
                    on_step(record)
            except StepFailure as e:
                failed, reason, failure_t = True, str(e), e.t
                break
            steps.append(record)
            count += 1
        if failed:
            logger.warning("DASSL-mode integration failed: %s", reason)
            break
        at_end = stepper.t >= t_end - tiny
        if at_end or stepper.t - last_record >= config.dassl_min_output - tiny:
            rows.append(steps[-1])
            last_record = stepper.t

    return _result_from_rows(rows, steps, stepper.stats, failed, reason, failure_t)


def integrate(
    problem: DaeProblem,
    config: DaeConfig,
    t_eval: Optional[Sequence[float]] = None,
    t_end: Optional[float] = None,
    increment: Optional[float] = None,
) -> DaeResult:
    if config.mode == IDA:
        if t_eval is None:
            if t_end is None:
                raise ValueError("IDA mode needs t_eval or t_end")
            n = max(int(np.ceil((t_end - problem.t0) / config.ida_output_interval)), 1)
            t_eval = np.linspace(problem.t0, t_end, n + 1)
        return integrate_ida(problem, t_eval, config)
    if t_end is None:
        raise ValueError("DASSL mode needs t_end")
    return integrate_dassl(problem, t_end, config, increment or config.h_max)


def result_frame_rows(result: DaeResult) -> List[Dict[str, float]]:
    """Rows (t, y..., h_used, order, newton_iters, jacobian_age) ready for a DataFrame"""
    rows = []
    for i, t in enumerate(result.t):
        row = {"t": float(t)}
        row.update({f"y{j}": float(v) for j, v in enumerate(result.y[i])})
        row.update(
            {
                "h_used": float(result.h_used[i]),
                "order": int(result.order[i]),
                "newton_iters": int(result.newton_iters[i]),
                "jacobian_age": int(result.jacobian_age[i]),
            }
        )
        rows.append(row)
    return rows
