"""
Confusion counts per replicate and their aggregation into FDR / FNR /
mFDR / mFNR, plus the weighted classification loss.

Per-replicate ratios use the 0/0 -> 0 convention.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from errors import ConfigError
from procedures import DecisionResult


@dataclass(frozen=True)
class ConfusionCounts:
    V: int  # false rejections
    R: int  # rejections
    W: int  # false acceptances
    A: int  # acceptances

    def __post_init__(self):
        if min(self.V, self.R, self.W, self.A) < 0:
            raise ValueError("Confusion counts must be non-negative")
        if self.V > self.R or self.W > self.A:
            raise ValueError(f"Inconsistent counts {self}")

    @property
    def n(self) -> int:
        return self.R + self.A


@dataclass(frozen=True)
class ErrorRates:
    fdr: float
    fnr: float
    mfdr: float
    mfnr: float
    mean_rejections: float
    se_fdr: float
    se_fnr: float
    replicates: int


def _binary(vector: np.ndarray, name: str) -> np.ndarray:
    vector = np.asarray(vector)
    if vector.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    return vector.astype(bool)


def confusion(decision: DecisionResult, theta: np.ndarray) -> ConfusionCounts:
    """Count (V, R, W, A) for one replicate; theta_i = 0 marks a true null."""
    reject = _binary(decision.reject, "reject")
    null = ~_binary(theta, "theta")
    if reject.shape != null.shape:
        raise ValueError(f"Decision length {reject.shape[0]} does not match theta length {null.shape[0]}")

    n = reject.shape[0]
    R = int(reject.sum())
    return ConfusionCounts(
        V=int(np.sum(reject & null)),
        R=R,
        W=int(np.sum(~reject & ~null)),
        A=n - R,
    )


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    out = np.zeros(numerator.shape[0], dtype=float)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def _standard_error(values: np.ndarray) -> float:
    if values.shape[0] < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.shape[0]))


def aggregate(counts: Sequence[ConfusionCounts]) -> ErrorRates:
    """Average per-replicate ratios into FDR / FNR and pool the counts into mFDR / mFNR."""
    if len(counts) == 0:
        raise ValueError("Cannot aggregate an empty list of confusion counts")

    V = np.array([c.V for c in counts], dtype=float)
    R = np.array([c.R for c in counts], dtype=float)
    W = np.array([c.W for c in counts], dtype=float)
    A = np.array([c.A for c in counts], dtype=float)

    fdp = _ratio(V, R)
    fnp = _ratio(W, A)
    return ErrorRates(
        fdr=float(fdp.mean()),
        fnr=float(fnp.mean()),
        mfdr=float(V.sum() / R.sum()) if R.sum() > 0 else 0.0,
        mfnr=float(W.sum() / A.sum()) if A.sum() > 0 else 0.0,
        mean_rejections=float(R.mean()),
        se_fdr=_standard_error(fdp),
        se_fnr=_standard_error(fnp),
        replicates=len(counts),
    )


def classification_loss(decision: DecisionResult, theta: np.ndarray, lam: float) -> float:
    """(1/n) sum[delta_i (1 - theta_i) + lam theta_i (1 - delta_i)]."""
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    delta = _binary(decision.reject, "reject").astype(float)
    theta = _binary(theta, "theta").astype(float)
    if delta.shape != theta.shape:
        raise ValueError(f"Decision length {delta.shape[0]} does not match theta length {theta.shape[0]}")
    return float(np.mean(delta * (1.0 - theta) + lam * theta * (1.0 - delta)))


def mean_classification_loss(
    decisions: Sequence[DecisionResult], thetas: Sequence[np.ndarray], lam: float
) -> float:
    """Average classification loss over paired decisions and state vectors."""
    if len(decisions) == 0 or len(decisions) != len(thetas):
        raise ValueError("Need one theta per decision and at least one replicate")
    return float(np.mean([classification_loss(d, t, lam) for d, t in zip(decisions, thetas)]))
