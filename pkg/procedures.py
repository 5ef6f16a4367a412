"""
Rejection rules: the oracle running-average step-up rule, Benjamini-Hochberg
on one-sided p-values, and the marginal-LFDR step-up procedure.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Union

import numpy as np
from scipy.stats import norm
from statsmodels.stats.multitest import fdrcorrection

from errors import ConfigError
from model import ModelParams, SampleDraw
from oracle import (
    MARGINAL_LFDR,
    P_VALUE,
    POSTERIOR_NULL,
    OracleContext,
    StatisticVector,
    bayes_lambda,
    marginal_lfdr,
    oracle_statistics,
)

ORACLE = "oracle"
BH = "bh"
MARGINAL = "marginal"
BAYES_RULE = "bayes_rule"

# absorbs rounding in cumulative sums so that a running mean equal to alpha counts as <= alpha
STEP_UP_RTOL = 1e-12


@dataclass(frozen=True)
class DecisionResult:
    reject: np.ndarray
    num_rejected: int
    cutoff_rank: int
    method: str

    @property
    def n(self) -> int:
        return self.reject.shape[0]


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


def _values(statistic: Union[StatisticVector, np.ndarray]) -> np.ndarray:
    if isinstance(statistic, StatisticVector):
        return statistic.values
    return np.asarray(statistic, dtype=float)


def _reject_smallest(values: np.ndarray, count: int, method: str) -> DecisionResult:
    """Reject the `count` smallest values; ties broken by original index."""
    order = np.argsort(values, kind="stable")
    reject = np.zeros(values.shape[0], dtype=np.int8)
    reject[order[:count]] = 1
    return DecisionResult(reject=reject, num_rejected=int(count), cutoff_rank=int(count), method=method)


def step_up_threshold(T: Union[StatisticVector, np.ndarray], alpha: float) -> int:
    """k = max{l : mean of the l smallest statistics <= alpha}, 0 if none."""
    _check_alpha(alpha)
    ordered = np.sort(_values(T))
    if ordered.size == 0:
        return 0
    running = np.cumsum(ordered) / np.arange(1, ordered.size + 1)
    admissible = np.flatnonzero(running <= alpha * (1.0 + STEP_UP_RTOL))
    return int(admissible[-1] + 1) if admissible.size else 0


def oracle_procedure(T: StatisticVector, alpha: float, method: str = ORACLE) -> DecisionResult:
    """Reject the hypotheses with the smallest statistics up to the running-average cutoff."""
    if isinstance(T, StatisticVector) and T.scale not in (POSTERIOR_NULL, MARGINAL_LFDR):
        raise ValueError(f"Step-up rule needs posterior-null statistics, got {T.scale}")
    values = _values(T)
    return _reject_smallest(values, step_up_threshold(values, alpha), method)


def bh_from_pvalues(pvalues: Union[StatisticVector, np.ndarray], alpha: float) -> DecisionResult:
    """Benjamini-Hochberg: reject the l* smallest, l* = max{i : p_(i) <= i alpha / n}."""
    _check_alpha(alpha)
    values = _values(pvalues)
    if values.size == 0:
        return DecisionResult(reject=np.zeros(0, dtype=np.int8), num_rejected=0, cutoff_rank=0, method=BH)
    rejected, _ = fdrcorrection(values, alpha=alpha, method="indep")
    reject = rejected.astype(np.int8)
    count = int(reject.sum())
    return DecisionResult(reject=reject, num_rejected=count, cutoff_rank=count, method=BH)


def one_sided_pvalues(x: np.ndarray) -> StatisticVector:
    """p_i = 1 - Phi(x_i) via the upper-tail survival function."""
    return StatisticVector(norm.sf(np.asarray(x, dtype=float)), P_VALUE)


def bh_procedure(x: np.ndarray, alpha: float) -> DecisionResult:
    """BH on one-sided p-values of the raw statistics."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("BH needs finite test statistics")
    return bh_from_pvalues(one_sided_pvalues(x), alpha)


def marginal_procedure(x: np.ndarray, p: float, k: float, alpha: float) -> DecisionResult:
    """Marginal LFDR per coordinate, then the same running-average step-up rule."""
    return oracle_procedure(marginal_lfdr(x, p, k), alpha, method=MARGINAL)


def bayes_rule_procedure(T: StatisticVector, lam: float) -> DecisionResult:
    """Weighted-classification Bayes rule: reject when Lambda_i < lam."""
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    reject = (bayes_lambda(T) < lam).astype(np.int8)
    count = int(reject.sum())
    return DecisionResult(reject=reject, num_rejected=count, cutoff_rank=count, method=BAYES_RULE)


def _run_oracle(draw: SampleDraw, params: ModelParams, ctx: Optional[OracleContext]) -> DecisionResult:
    return oracle_procedure(oracle_statistics(draw.x, ctx), params.alpha)


def _run_bh(draw: SampleDraw, params: ModelParams, ctx: Optional[OracleContext]) -> DecisionResult:
    return bh_procedure(draw.x, params.alpha)


def _run_marginal(draw: SampleDraw, params: ModelParams, ctx: Optional[OracleContext]) -> DecisionResult:
    return marginal_procedure(draw.x, params.p, params.k, params.alpha)


MethodRunner = Callable[[SampleDraw, ModelParams, Optional[OracleContext]], DecisionResult]

METHODS: Dict[str, MethodRunner] = {
    ORACLE: _run_oracle,
    BH: _run_bh,
    MARGINAL: _run_marginal,
}
