"""
Exact Gaussian-process regression with an (ARD) RBF kernel plus white noise.

Used twice: with fixed hyperparameters to smooth corrector outputs in time,
and with maximum-likelihood hyperparameters as the Bayesian-optimization
surrogate over the unit cube.
"""

import logging
from dataclasses import dataclass
from typing import Optional
from typing import Tuple

import numpy as np
from scipy.linalg import cho_factor
from scipy.linalg import cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from exceptions import ShapeError

logger = logging.getLogger(__name__)

JITTER = 1e-10


@dataclass
class RbfKernel:
    """k(x, x') = C exp(-|(x - x') / l|^2 / 2) + noise * [x == x']"""

    amplitude: float = 1.0
    length_scales: np.ndarray = 1.0
    noise: float = 0.0

    def __post_init__(self):
        self.length_scales = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if self.amplitude <= 0 or np.any(self.length_scales <= 0):
            raise ValueError("kernel amplitude and length scales must be positive")
        if self.noise < 0:
            raise ValueError("kernel noise variance must be non-negative")

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Noise-free covariance between the rows of a and b"""
        d2 = cdist(a / self.length_scales, b / self.length_scales, "sqeuclidean")
        return self.amplitude * np.exp(-0.5 * d2)

    def with_dims(self, d: int) -> "RbfKernel":
        scales = self.length_scales
        if scales.size == 1 and d > 1:
            scales = np.full(d, float(scales[0]))
        if scales.size != d:
            raise ShapeError(f"kernel has {scales.size} length scales for {d} input dimensions")
        return RbfKernel(self.amplitude, scales, self.noise)


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


class GaussianProcess:
    """
    Zero-mean GP around an optional constant offset (``center=True`` uses the
    data mean). Observations may be (n,) or (n, channels); channels share the
    kernel and the factorization.
    """

    def __init__(self, kernel: RbfKernel, jitter: float = JITTER):
        self.kernel = kernel
        self.jitter = jitter
        self.X: Optional[np.ndarray] = None
        self.offset: np.ndarray = np.zeros(())
        self._factor = None
        self._alpha: Optional[np.ndarray] = None

    def fit(self, X, y, center: bool = False) -> "GaussianProcess":
        X = _as_matrix(X)
        y = np.asarray(y, dtype=float)
        if y.ndim > 2 or X.shape[0] != y.shape[0]:
            raise ShapeError(f"{X.shape[0]} inputs but observations of shape {y.shape}")
        if y.shape[0] < 1:
            raise ShapeError("a GP needs at least one observation")
        self.kernel = self.kernel.with_dims(X.shape[1])
        self.X = X
        self.offset = np.mean(y, axis=0) if center else np.zeros(y.shape[1:])
        gram = self.kernel(X, X)
        gram[np.diag_indices_from(gram)] += self.kernel.noise + self.jitter
        self._factor = _cholesky(gram)
        self._alpha = cho_solve(self._factor, y - self.offset)
        return self

    def predict(self, Xs, return_std: bool = True) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """Posterior mean and standard deviation of the latent function"""
        if self.X is None:
            raise RuntimeError("GaussianProcess.fit must run before predict")
        Xs = _as_matrix(Xs)
        cross = self.kernel(Xs, self.X)
        mean = self.offset + cross @ self._alpha
        if not return_std:
            return mean, None
        v = cho_solve(self._factor, cross.T)
        var = self.kernel.amplitude - np.sum(cross * v.T, axis=1)
        return mean, np.sqrt(np.maximum(var, 0.0))

    def log_marginal_likelihood(self, y) -> float:
        y = np.asarray(y, dtype=float) - self.offset
        if y.ndim != 1:
            raise ShapeError("marginal likelihood is defined for a single output channel")
        lower = self._factor[0]
        return float(
            -0.5 * y @ self._alpha
            - np.sum(np.log(np.abs(np.diag(lower))))
            - 0.5 * y.size * np.log(2.0 * np.pi)
        )


def _cholesky(gram: np.ndarray):
    """Cholesky factor, adding jitter tenfold until the matrix is positive definite"""
    extra = 0.0
    scale = max(float(np.mean(np.diag(gram))), 1e-300)
    for _ in range(8):
        try:
            return cho_factor(gram + extra * np.eye(len(gram)), lower=True)
        except np.linalg.LinAlgError:
            extra = 1e-10 * scale if extra == 0.0 else extra * 10.0
            logger.debug("gram matrix not positive definite, adding jitter %.3g", extra)
    raise np.linalg.LinAlgError("gram matrix stayed indefinite after jitter")


def gp_fit(X, y, kernel: RbfKernel, center: bool = False) -> GaussianProcess:
    return GaussianProcess(kernel).fit(X, y, center=center)


def fit_hyperparameters(
    X,
    y,
    rng: np.random.Generator,
    n_restarts: int = 5,
    length_bounds: Tuple[float, float] = (1e-2, 10.0),
    amplitude_bounds: Tuple[float, float] = (1e-2, 1e2),
    noise_bounds: Tuple[float, float] = (1e-8, 1e-1),
) -> RbfKernel:
    """Multi-start L-BFGS-B on the negative log marginal likelihood in log space"""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    d = X.shape[1]
    bounds = (
        [np.log(amplitude_bounds)]
        + [np.log(length_bounds)] * d
        + [np.log(noise_bounds)]
    )

    def unpack(theta: np.ndarray) -> RbfKernel:
        return RbfKernel(np.exp(theta[0]), np.exp(theta[1 : 1 + d]), np.exp(theta[-1]))

    def objective(theta: np.ndarray) -> float:
        try:
            gp = GaussianProcess(unpack(theta)).fit(X, y)
        except np.linalg.LinAlgError:
            return 1e10
        value = -gp.log_marginal_likelihood(y)
        return value if np.isfinite(value) else 1e10

    starts = [np.array([0.0] + [np.log(0.3)] * d + [np.log(1e-4)])]
    for _ in range(max(n_restarts - 1, 0)):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))

    best_theta, best_value = starts[0], objective(starts[0])
    for start in starts:
        result = minimize(objective, start, method="L-BFGS-B", bounds=bounds)
        if result.fun < best_value:
            best_theta, best_value = result.x, float(result.fun)
    kernel = unpack(best_theta)
    logger.debug(
        "GP hyperparameters: amplitude %.3g, length scales %s, noise %.3g",
        kernel.amplitude,
        np.array2string(kernel.length_scales, precision=3),
        kernel.noise,
    )
    return kernel
