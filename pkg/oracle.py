"""
Oracle statistic T_i = P(theta_i = 0 | X) for the multivariate normal
two-group model, plus an exact enumeration posterior used to check it.

The closed form is

    ln U_i = -(k^2/2 t_ii - k (Sigma^{-1} x)_i) + sum_{j != i} ln(p e^{-k^2 t_ji} + 1 - p)
    T_i    = 1 / (1 + p U_i / (1 - p))

evaluated entirely in log space.
"""
from dataclasses import dataclass
from typing import Union

import numpy as np
from loguru import logger
from scipy.linalg import solve_triangular
from scipy.special import expit, logsumexp
from scipy.stats import norm

from covariance import BLOCK_DIAGONAL, DENSE, EQUICORRELATED, IDENTITY, PrecisionMatrix, factorize_dense
from errors import ConfigError, NumericalError

POSTERIOR_NULL = "posterior_null"
P_VALUE = "p_value"
MARGINAL_LFDR = "marginal_lfdr"
SCALES = (POSTERIOR_NULL, P_VALUE, MARGINAL_LFDR)

ENUMERATION_LIMIT = 20
_ENUMERATION_CHUNK = 1 << 15
_COLUMN_CHUNK = 512


@dataclass(frozen=True)
class StatisticVector:
    """Per-hypothesis scores; smaller values are more significant."""

    values: np.ndarray
    scale: str

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValueError(f"Unknown statistic scale '{self.scale}'")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("Statistic values must be a vector")
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"{self.scale} statistics contain NaN or Inf")
        # 0 and 1 are reachable through floating-point saturation only
        if np.any((values < 0.0) | (values > 1.0)):
            raise NumericalError(f"{self.scale} statistics outside [0, 1]")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


def _as_values(statistic: Union[StatisticVector, np.ndarray]) -> np.ndarray:
    if isinstance(statistic, StatisticVector):
        return statistic.values
    return np.asarray(statistic, dtype=float)


@dataclass(frozen=True)
class OracleContext:
    """Everything of U_i that does not depend on x; built once per cell."""

    precision: PrecisionMatrix
    k: float
    p: float
    log_prior_odds: float
    column_logterm_sums: np.ndarray

    @property
    def n(self) -> int:
        return self.precision.n


def _logterm(t, k: float, p: float):
    """ln(p e^{-k^2 t} + 1 - p), stable for large |k^2 t| in either direction."""
    return np.logaddexp(np.log(p) - k * k * np.asarray(t, dtype=float), np.log1p(-p))


def _column_logterm_sums(precision: PrecisionMatrix, k: float, p: float) -> np.ndarray:
    if precision.kind == IDENTITY:
        return np.zeros(precision.n)
    if precision.kind == EQUICORRELATED:
        return np.full(precision.n, (precision.n - 1) * _logterm(precision.off_diagonal_value, k, p))
    if precision.kind == BLOCK_DIAGONAL:
        return np.concatenate([_column_logterm_sums(block, k, p) for block in precision.blocks])

    # full column sum minus the j == i term, a column chunk at a time
    t = precision.t
    sums = np.empty(precision.n)
    for start in range(0, precision.n, _COLUMN_CHUNK):
        stop = min(start + _COLUMN_CHUNK, precision.n)
        sums[start:stop] = _logterm(t[:, start:stop], k, p).sum(axis=0)
    return sums - _logterm(np.diag(t), k, p)


def _check_prior(k: float, p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must lie in (0, 1), got {p}")
    if k == 0 or not np.isfinite(k):
        raise ConfigError(f"k must be finite and nonzero, got {k}")


def build_context(precision: PrecisionMatrix, k: float, p: float) -> OracleContext:
    """Precompute the per-coordinate sums S_i once for a (precision, k, p) cell."""
    _check_prior(k, p)
    if precision.kind == DENSE and not np.all(np.isfinite(precision.t)):
        raise NumericalError("Precision matrix has non-finite entries")
    if not np.all(np.isfinite(precision.diag)):
        raise NumericalError("Precision matrix has non-finite diagonal entries")

    sums = _column_logterm_sums(precision, k, p)
    if not np.all(np.isfinite(sums)):
        raise NumericalError("Column log-term sums are not finite")

    logger.debug(f"Built oracle context for {precision.kind} precision, n={precision.n}")
    return OracleContext(
        precision=precision,
        k=float(k),
        p=float(p),
        log_prior_odds=float(np.log(p) - np.log1p(-p)),
        column_logterm_sums=sums,
    )


def log_u(x: np.ndarray, ctx: OracleContext) -> np.ndarray:
    """ln U_i = -(k^2/2 t_ii - k (T x)_i) + S_i, evaluated in O(n) for structured precisions."""
    x = np.asarray(x, dtype=float)
    if x.shape != (ctx.n,):
        raise ValueError(f"x has shape {x.shape}, context expects length {ctx.n}")
    s = ctx.precision.matvec(x)
    k = ctx.k
    return -(0.5 * k * k * ctx.precision.diag - k * s) + ctx.column_logterm_sums


def oracle_statistics(x: np.ndarray, ctx: OracleContext) -> StatisticVector:
    """T_i = sigmoid(-(log prior odds + ln U_i)); never clipped."""
    values = expit(-(ctx.log_prior_odds + log_u(x, ctx)))
    return StatisticVector(values, POSTERIOR_NULL)


def bayes_lambda(T: Union[StatisticVector, np.ndarray]) -> np.ndarray:
    """Lambda_i = T_i / (1 - T_i), the prior-weighted likelihood ratio."""
    values = _as_values(T)
    if np.any((values <= 0.0) | (values >= 1.0)):
        raise ValueError("bayes_lambda needs statistics strictly inside (0, 1)")
    return values / (1.0 - values)


def marginal_lfdr(x: np.ndarray, p: float, k: float) -> StatisticVector:
    """(1-p) phi(x_i) / ((1-p) phi(x_i) + p phi(x_i - k)) per coordinate."""
    _check_prior(k, p)
    x = np.asarray(x, dtype=float)
    log_null = np.log1p(-p) + norm.logpdf(x)
    log_alt = np.log(p) + norm.logpdf(x - k)
    return StatisticVector(np.exp(log_null - np.logaddexp(log_null, log_alt)), MARGINAL_LFDR)


def _state_block(start: int, stop: int, n: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(np.int8)


def brute_force_posterior(x: np.ndarray, sigma: np.ndarray, k: float, p: float) -> StatisticVector:
    """
    Exact P(theta_i = 0 | x) by summing the N(k theta, Sigma) density over
    all 2^n state vectors, weighted by the Bernoulli(p) prior.
    """
    _check_prior(k, p)
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = x.shape[0]
    if n > ENUMERATION_LIMIT:
        raise ConfigError(f"Enumeration is limited to n <= {ENUMERATION_LIMIT}, got n={n}")
    if sigma.shape != (n, n):
        raise ValueError(f"sigma has shape {sigma.shape}, expected ({n}, {n})")

    lower = factorize_dense(sigma, "brute-force")
    log_p, log_q = np.log(p), np.log1p(-p)

    log_total = -np.inf
    log_null = np.full(n, -np.inf)
    for start in range(0, 1 << n, _ENUMERATION_CHUNK):
        states = _state_block(start, min(start + _ENUMERATION_CHUNK, 1 << n), n)
        residual = x[None, :] - k * states
        whitened = solve_triangular(lower, residual.T, lower=True)
        ones = states.sum(axis=1)
        # normalizing constant of the density is shared by every state and cancels
        log_weight = -0.5 * np.sum(whitened ** 2, axis=0) + ones * log_p + (n - ones) * log_q

        log_total = np.logaddexp(log_total, logsumexp(log_weight))
        masked = np.where(states == 0, log_weight[:, None], -np.inf)
        log_null = np.logaddexp(log_null, logsumexp(masked, axis=0))

    return StatisticVector(np.exp(log_null - log_total), POSTERIOR_NULL)
