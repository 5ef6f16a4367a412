"""
Two-group model: theta_i iid Bernoulli(p), X | theta ~ N(k * theta, Sigma).

Every replicate draws from its own PCG64 stream seeded by
SeedSequence(base_seed, spawn_key=(cell, replicate)), so draws do not
depend on scheduling. Normals come from numpy's Generator.standard_normal
(ziggurat); states are drawn before observations.
"""
from dataclasses import dataclass

import numpy as np

from covariance import CholeskyFactor, CovarianceSpec
from errors import ConfigError

MAX_SEED = 2 ** 64


@dataclass(frozen=True)
class ModelParams:
    """Full oracle knowledge of one simulation cell."""

    n: int
    p: float
    k: float
    sigma: CovarianceSpec
    alpha: float = 0.05

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"Non-null proportion p must lie in (0, 1), got {self.p}")
        if self.k == 0 or not np.isfinite(self.k):
            raise ConfigError(f"Mean shift k must be finite and nonzero, got {self.k}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"Level alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma.n != self.n:
            raise ConfigError(f"Covariance {self.sigma.label} has dimension {self.sigma.n}, expected {self.n}")


@dataclass(frozen=True)
class SampleDraw:
    """One replicate: latent states and observed test statistics."""

    theta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if self.theta.shape != self.x.shape or self.theta.ndim != 1:
            raise ValueError(f"theta {self.theta.shape} and x {self.x.shape} must be vectors of equal length")
        if not np.all((self.theta == 0) | (self.theta == 1)):
            raise ValueError("theta entries must be 0 or 1")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class SeedSpec:
    """Derives an independent random stream per (cell, replicate)."""

    base_seed: int

    def __post_init__(self):
        if int(self.base_seed) != self.base_seed or not 0 <= self.base_seed < MAX_SEED:
            raise ConfigError(f"Seed must be an unsigned 64-bit integer, got {self.base_seed}")

    def seed_sequence(self, cell_index: int, replicate_index: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.base_seed), spawn_key=(int(cell_index), int(replicate_index)))

    def stream(self, cell_index: int, replicate_index: int) -> np.random.Generator:
        """PCG64 generator for one (cell, replicate) pair."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence(cell_index, replicate_index)))


def sample_states(n: int, p: float, stream: np.random.Generator) -> np.ndarray:
    """iid Bernoulli(p) non-null indicators as an int8 vector."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"p must lie in (0, 1), got {p}")
    return (stream.random(n) < p).astype(np.int8)


def sample_observations(
    theta: np.ndarray, k: float, factor: CholeskyFactor, stream: np.random.Generator
) -> np.ndarray:
    """x = k * theta + L z with z iid standard normal."""
    theta = np.asarray(theta)
    if theta.shape != (factor.n,):
        raise ValueError(f"theta has shape {theta.shape}, factor expects length {factor.n}")
    z = stream.standard_normal(factor.num_innovations)
    return k * theta + factor.apply(z)


def draw_replicate(params: ModelParams, factor: CholeskyFactor, stream: np.random.Generator) -> SampleDraw:
    """States first, then observations, from the same stream."""
    theta = sample_states(params.n, params.p, stream)
    x = sample_observations(theta, params.k, factor, stream)
    return SampleDraw(theta=theta, x=x)
