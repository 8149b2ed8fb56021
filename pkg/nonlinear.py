"""
Nonlinear algebraic solvers for the junction-pressure problems: the MINPACK
Powell hybrid (through scipy), a projected Levenberg-Marquardt for bounded
least squares, and the weighted RMS norm shared with the DAE integrator.
"""

import logging
from dataclasses import dataclass
from dataclasses import field
from typing import Callable
from typing import List
from typing import Optional

import numpy as np
from scipy.optimize import root

from exceptions import ShapeError

logger = logging.getLogger(__name__)

POWELL = "powell_hybrid"
LEAST_SQUARES = "bounded_least_squares"

FD_STEP = float(np.sqrt(np.finfo(float).eps))


@dataclass
class RootProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    tol: float = 1e-6
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    typical_scale: float = 1.0
    max_evals: int = 200

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.x0.size < 1:
            raise ShapeError("root problem needs at least one unknown")
        if self.tol <= 0:
            raise ValueError("solver tolerance must be positive")
        n = self.x0.size
        self.lower = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)
        ).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)
        ).copy()
        if np.any(self.lower >= self.upper):
            raise ValueError("every lower bound must be below its upper bound")


@dataclass
class SolveReport:
    x: np.ndarray
    residual_norm: float
    n_evals: int
    converged: bool
    method: str
    iterations: int = 0
    iterates: List[np.ndarray] = field(default_factory=list)
    message: str = ""


def wrms_norm(v, y_ref, atol: float, rtol: float) -> float:
    """sqrt(mean((v_i / (rtol |y_ref_i| + atol))^2))"""
    v = np.asarray(v, dtype=float)
    y_ref = np.asarray(y_ref, dtype=float)
    if v.shape != y_ref.shape:
        raise ShapeError(f"wrms_norm: vector {v.shape} vs reference {y_ref.shape}")
    if atol <= 0 or rtol <= 0:
        raise ValueError("atol and rtol must be positive")
    if v.size == 0:
        return 0.0
    weights = rtol * np.abs(y_ref) + atol
    return float(np.sqrt(np.mean((v / weights) ** 2)))


def finite_difference_jacobian(
    fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    f0: np.ndarray,
    typical_scale: float = 1.0,
    lower: Optional[np.ndarray] = None,
    upper: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Forward differences, step sqrt(eps) * max(|x_i|, typical_scale), flipped at an upper bound"""
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        step = FD_STEP * max(abs(x[i]), typical_scale)
        if upper is not None and x[i] + step > upper[i]:
            step = -step
        trial = x.copy()
        trial[i] += step
        jac[:, i] = (np.asarray(fn(trial), dtype=float) - f0) / step
    return jac


class _Counted:
    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn
        self.calls = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.calls += 1
        return np.atleast_1d(np.asarray(self.fn(x), dtype=float))


def powell_hybrid(problem: RootProblem) -> SolveReport:
    """
    Dogleg trust-region root finder with Broyden updates (MINPACK hybrd).

    Converged iff the infinity norm of the residual is at most ``problem.tol``.
    A stalled first attempt is restarted once from its best iterate, which
    re-initializes the finite-difference Jacobian.
    """
    fn = _Counted(problem.residual)
    r0 = fn(problem.x0)
    if r0.size != problem.x0.size:
        raise ShapeError(
            f"powell_hybrid needs a square system, got {r0.size} residuals "
            f"for {problem.x0.size} unknowns"
        )
    if np.max(np.abs(r0)) <= problem.tol:
        return SolveReport(problem.x0.copy(), float(np.max(np.abs(r0))), fn.calls, True, POWELL)

    x = problem.x0.copy()
    best_x, best_norm = x, float(np.max(np.abs(r0)))
    message = ""
    for attempt in range(2):
        budget = max(problem.max_evals - fn.calls, 1)
        try:
            sol = root(
                fn,
                x,
                method="hybr",
                options={
                    "xtol": 1e-12,
                    "maxfev": budget,
                    "factor": 0.1,
                    "eps": FD_STEP,
                },
            )
        except (ValueError, FloatingPointError) as e:
            message = str(e)
            logger.debug("powell hybrid attempt %d raised: %s", attempt, e)
            break
        norm = float(np.max(np.abs(sol.fun)))
        if np.isfinite(norm) and norm < best_norm:
            best_x, best_norm = np.asarray(sol.x, dtype=float), norm
        message = sol.message
        if best_norm <= problem.tol or fn.calls >= problem.max_evals:
            break
        logger.debug("powell hybrid stalled (%s), restarting from best iterate", sol.message)
        x = best_x

    return SolveReport(
        x=best_x,
        residual_norm=best_norm,
        n_evals=fn.calls,
        converged=best_norm <= problem.tol,
        method=POWELL,
        message=message,
    )


def bounded_least_squares(
    problem: RootProblem,
    lam: float = 1e-3,
    max_iter: int = 100,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SolveReport:
    """
    Levenberg-Marquardt with trial steps projected onto [lower, upper].

    Damping starts at ``lam`` and moves by a factor of 10 (up on rejection,
    down on acceptance). Stops when the gradient J^T r or the accepted step
    falls below the tolerance. For square systems ``converged`` additionally
    requires the residual to meet the tolerance.
    """
    fn = _Counted(problem.residual)
    lower, upper = problem.lower, problem.upper
    x = np.clip(problem.x0, lower, upper)
    r = fn(x)
    cost = float(r @ r)
    square = r.size == x.size
    iterates = [x.copy()]

    def done(stationary: bool) -> bool:
        return stationary and (not square or float(np.max(np.abs(r))) <= problem.tol)

    if float(np.max(np.abs(r))) <= problem.tol:
        return SolveReport(x, float(np.max(np.abs(r))), fn.calls, True, LEAST_SQUARES, 0, iterates)

    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        if jacobian is not None:
            jac = np.asarray(jacobian(x), dtype=float)
        else:
            jac = finite_difference_jacobian(fn, x, r, problem.typical_scale, lower, upper)
        grad = jac.T @ r
        if float(np.max(np.abs(grad))) <= problem.tol:
            converged = done(True)
            break

        normal = jac.T @ jac
        diag = np.maximum(np.diag(normal), 1e-300)
        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(normal + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(x + step, lower, upper)
            r_trial = fn(trial)
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial < cost:
                dx = trial - x
                x, r, cost = trial, r_trial, cost_trial
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        iterates.append(x.copy())
        if not accepted:
            logger.debug("least squares: no decrease with damping %.3g", lam)
            converged = done(True)
            break
        if float(np.max(np.abs(r))) <= problem.tol:
            converged = True
            break
        if np.linalg.norm(dx) <= problem.tol * (np.linalg.norm(x) + problem.tol):
            converged = done(True)
            break
        if fn.calls >= problem.max_evals:
            break

    return SolveReport(
        x=x,
        residual_norm=float(np.max(np.abs(r))),
        n_evals=fn.calls,
        converged=converged,
        method=LEAST_SQUARES,
        iterations=iteration,
        iterates=iterates,
    )
