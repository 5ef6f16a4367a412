"""
Covariance structures for the two-group normal model.

Specs are symbolic; the factor and precision builders keep the structure
(identity, equicorrelated, block-diagonal) instead of materializing n x n
matrices, so the n = 5000 simulations stay O(n) per draw.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.linalg import block_diag, cho_solve, lapack

from errors import ConfigError, NotPositiveDefiniteError, NumericalError

SYMMETRY_TOL = 1e-10

IDENTITY = "identity"
EQUICORRELATED = "equicorrelated"
BLOCK_DIAGONAL = "block_diagonal"
DENSE = "dense"
VARIANTS = (IDENTITY, EQUICORRELATED, BLOCK_DIAGONAL, DENSE)


def equicorrelated_lower_bound(n: int) -> float:
    """Smallest admissible rho (exclusive) for an n x n equicorrelated matrix."""
    return -1.0 / (n - 1) if n > 1 else -1.0


@dataclass(frozen=True)
class CovarianceSpec:
    """Symbolic description of a unit-diagonal covariance matrix."""

    variant: str
    n: int
    rho: float = 0.0
    blocks: Tuple[Tuple[int, float], ...] = ()
    matrix: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    source: Optional[str] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"Unknown covariance variant '{self.variant}'")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"Covariance dimension must be a positive integer, got {self.n}")

        if self.variant == EQUICORRELATED:
            _check_equicorrelated(self.n, self.rho, EQUICORRELATED)
        elif self.variant == BLOCK_DIAGONAL:
            if not self.blocks:
                raise ConfigError("Block-diagonal covariance needs at least one block")
            for size, rho in self.blocks:
                if int(size) != size or size < 1:
                    raise ConfigError(f"Block sizes must be positive integers, got {size}")
                _check_equicorrelated(size, rho, f"{BLOCK_DIAGONAL} block of size {size}")
            if sum(size for size, _ in self.blocks) != self.n:
                raise ConfigError("Block sizes do not add up to n")
        elif self.variant == DENSE:
            _check_dense(self.matrix, self.n)

    @classmethod
    def identity(cls, n: int) -> "CovarianceSpec":
        return cls(IDENTITY, n)

    @classmethod
    def equicorrelated(cls, n: int, rho: float) -> "CovarianceSpec":
        return cls(EQUICORRELATED, n, rho=float(rho))

    @classmethod
    def block_diagonal(cls, blocks: Sequence[Tuple[int, float]]) -> "CovarianceSpec":
        blocks = tuple((int(size), float(rho)) for size, rho in blocks)
        return cls(BLOCK_DIAGONAL, sum(size for size, _ in blocks), blocks=blocks)

    @classmethod
    def dense(cls, matrix, source: Optional[str] = None) -> "CovarianceSpec":
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ConfigError("Dense covariance must be a 2-D matrix")
        matrix.setflags(write=False)
        return cls(DENSE, matrix.shape[0], matrix=matrix, source=source)

    @property
    def label(self) -> str:
        """Textual form used in config files and the CSV sigma column."""
        if self.variant == IDENTITY:
            return "identity"
        if self.variant == EQUICORRELATED:
            return f"equi:{self.rho:.12g}"
        if self.variant == BLOCK_DIAGONAL:
            return "blocks:" + ",".join(f"{size}@{rho:.12g}" for size, rho in self.blocks)
        return f"dense:{self.source or 'matrix'}"

    def block_specs(self) -> Tuple["CovarianceSpec", ...]:
        """Per-block equicorrelated specs of a block-diagonal spec."""
        return tuple(_block_spec(size, rho) for size, rho in self.blocks)


def _block_spec(size: int, rho: float) -> CovarianceSpec:
    if rho == 0.0:
        return CovarianceSpec.identity(size)
    return CovarianceSpec.equicorrelated(size, rho)


def _check_equicorrelated(n: int, rho: float, variant: str) -> None:
    lower = equicorrelated_lower_bound(n)
    if not np.isfinite(rho):
        raise ConfigError(f"{variant}: rho must be finite")
    if not lower < rho < 1.0:
        raise NotPositiveDefiniteError(
            variant, detail=f"rho={rho:g} outside the open interval ({lower:g}, 1) for n={n}"
        )


def _check_dense(matrix: Optional[np.ndarray], n: int) -> None:
    if matrix is None or matrix.shape != (n, n):
        raise ConfigError(f"Dense covariance must be a square {n}x{n} matrix")
    if not np.all(np.isfinite(matrix)):
        raise NumericalError("Dense covariance has non-finite entries")
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOL:
        raise ConfigError(f"Dense covariance is not symmetric within {SYMMETRY_TOL:g}")
    if np.max(np.abs(np.diag(matrix) - 1.0)) > SYMMETRY_TOL:
        raise ConfigError("Dense covariance must have a unit diagonal (correlation matrix)")


def parse_covariance_spec(text: str, n: Optional[int] = None) -> CovarianceSpec:
    """Parse `identity`, `equi:RHO`, `blocks:S@R,...` or `dense:PATH`."""
    text = str(text).strip()
    kind, _, body = text.partition(":")
    kind = kind.strip().lower()

    try:
        if kind == "identity":
            return CovarianceSpec.identity(_require_n(n, text))
        if kind == "equi":
            return CovarianceSpec.equicorrelated(_require_n(n, text), float(body))
        if kind == "blocks":
            blocks = []
            for item in body.split(","):
                size, _, rho = item.strip().partition("@")
                blocks.append((int(size), float(rho)))
            return CovarianceSpec.block_diagonal(blocks)
        if kind == "dense":
            return load_dense_covariance(body.strip())
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Malformed covariance spec '{text}': {e}") from e

    raise ConfigError(f"Unknown covariance spec '{text}'")


def _require_n(n: Optional[int], text: str) -> int:
    if n is None:
        raise ConfigError(f"Covariance spec '{text}' needs the dimension n")
    return int(n)


def load_dense_covariance(path: str) -> CovarianceSpec:
    """Load a comma-separated matrix file (no header) as a dense spec."""
    try:
        frame = pd.read_csv(path, header=None)
    except FileNotFoundError as e:
        raise ConfigError(f"Covariance matrix file {path} not found") from e
    logger.debug(f"Loaded {frame.shape[0]}x{frame.shape[1]} covariance from {path}")
    return CovarianceSpec.dense(frame.to_numpy(dtype=float), source=path)


def factorize_dense(matrix: np.ndarray, variant: str) -> np.ndarray:
    """Lower Cholesky factor via LAPACK potrf, reporting the failing minor."""
    lower, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(variant, minor_index=int(info))
    if info < 0:
        raise NumericalError(f"potrf rejected argument {-info} for {variant} covariance")
    return lower


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    """Materialize the correlation matrix described by spec."""
    if spec.variant == IDENTITY:
        return np.eye(spec.n)
    if spec.variant == EQUICORRELATED:
        matrix = np.full((spec.n, spec.n), spec.rho)
        np.fill_diagonal(matrix, 1.0)
        return matrix
    if spec.variant == BLOCK_DIAGONAL:
        return block_diag(*(build_covariance(block) for block in spec.block_specs()))

    factorize_dense(spec.matrix, DENSE)
    return np.array(spec.matrix)


# Cholesky factors

SHARED_FACTOR = "shared_factor"
SYMMETRIC_ROOT = "symmetric_root"
BLOCKS = "blocks"


@dataclass(frozen=True)
class CholeskyFactor:
    """
    A factor L with L @ L.T == Sigma, kept in structured form.

    shared_factor: x = common * z0 * 1 + idiosyncratic * z (n + 1 innovations)
    symmetric_root: x = idiosyncratic * (z + common * sum(z) * 1), used when rho < 0
    """

    n: int
    kind: str
    common: float = 0.0
    idiosyncratic: float = 1.0
    lower: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    blocks: Tuple["CholeskyFactor", ...] = ()

    @cached_property
    def num_innovations(self) -> int:
        if self.kind == SHARED_FACTOR:
            return self.n + 1
        if self.kind == BLOCKS:
            return sum(block.num_innovations for block in self.blocks)
        return self.n

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Map iid standard normal innovations to a N(0, Sigma) draw."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.num_innovations,):
            raise ValueError(f"Expected {self.num_innovations} innovations, got shape {z.shape}")

        if self.kind == IDENTITY:
            return z.copy()
        if self.kind == SHARED_FACTOR:
            return self.common * z[0] + self.idiosyncratic * z[1:]
        if self.kind == SYMMETRIC_ROOT:
            return self.idiosyncratic * (z + self.common * z.sum())
        if self.kind == BLOCKS:
            parts, start = [], 0
            for block in self.blocks:
                stop = start + block.num_innovations
                parts.append(block.apply(z[start:stop]))
                start = stop
            return np.concatenate(parts)
        return self.lower @ z

    def to_dense(self) -> np.ndarray:
        """Dense n x num_innovations matrix of the factor (verification only)."""
        if self.kind == IDENTITY:
            return np.eye(self.n)
        if self.kind == SHARED_FACTOR:
            return np.hstack([
                np.full((self.n, 1), self.common),
                self.idiosyncratic * np.eye(self.n),
            ])
        if self.kind == SYMMETRIC_ROOT:
            return self.idiosyncratic * (np.eye(self.n) + self.common * np.ones((self.n, self.n)))
        if self.kind == BLOCKS:
            return block_diag(*(block.to_dense() for block in self.blocks))
        return np.array(self.lower)


def cholesky(spec: CovarianceSpec) -> CholeskyFactor:
    """Sampling factor for spec; closed form for the equicorrelated family."""
    if spec.variant == IDENTITY or (spec.variant == EQUICORRELATED and spec.rho == 0.0):
        return CholeskyFactor(spec.n, IDENTITY)

    if spec.variant == EQUICORRELATED:
        rho, n = spec.rho, spec.n
        if rho > 0.0:
            return CholeskyFactor(n, SHARED_FACTOR, common=np.sqrt(rho), idiosyncratic=np.sqrt(1.0 - rho))
        # (1 - rho)(I + c J) has symmetric root sqrt(1 - rho)(I + d J) with (1 + d n)^2 = 1 + c n
        c = rho / (1.0 - rho)
        d = (np.sqrt(1.0 + c * n) - 1.0) / n
        return CholeskyFactor(n, SYMMETRIC_ROOT, common=d, idiosyncratic=np.sqrt(1.0 - rho))

    if spec.variant == BLOCK_DIAGONAL:
        return CholeskyFactor(spec.n, BLOCKS, blocks=tuple(cholesky(b) for b in spec.block_specs()))

    logger.debug(f"Factorizing dense {spec.n}x{spec.n} covariance")
    lower = factorize_dense(spec.matrix, DENSE)
    lower.setflags(write=False)
    return CholeskyFactor(spec.n, DENSE, lower=lower)


# Precision matrices


@dataclass(frozen=True)
class PrecisionMatrix:
    """
    Sigma^{-1} in structured form.

    For the equicorrelated kind every diagonal entry is diagonal_value and
    every off-diagonal entry is off_diagonal_value; `t` holds the dense
    matrix only for the dense kind.
    """

    n: int
    kind: str
    diagonal_value: float = 1.0
    off_diagonal_value: float = 0.0
    t: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    blocks: Tuple["PrecisionMatrix", ...] = ()

    @cached_property
    def diag(self) -> np.ndarray:
        if self.kind == DENSE:
            return np.diag(self.t).copy()
        if self.kind == BLOCK_DIAGONAL:
            return np.concatenate([block.diag for block in self.blocks])
        return np.full(self.n, self.diagonal_value)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Sigma^{-1} @ x without materializing structured kinds."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"Expected a vector of length {self.n}, got shape {x.shape}")

        if self.kind == IDENTITY:
            return x.copy()
        if self.kind == EQUICORRELATED:
            return (self.diagonal_value - self.off_diagonal_value) * x + self.off_diagonal_value * x.sum()
        if self.kind == BLOCK_DIAGONAL:
            parts, start = [], 0
            for block in self.blocks:
                parts.append(block.matvec(x[start:start + block.n]))
                start += block.n
            return np.concatenate(parts)
        return self.t @ x

    def to_dense(self) -> np.ndarray:
        if self.kind == IDENTITY:
            return np.eye(self.n)
        if self.kind == EQUICORRELATED:
            return (
                (self.diagonal_value - self.off_diagonal_value) * np.eye(self.n)
                + self.off_diagonal_value * np.ones((self.n, self.n))
            )
        if self.kind == BLOCK_DIAGONAL:
            return block_diag(*(block.to_dense() for block in self.blocks))
        return np.array(self.t)


def precision(spec: CovarianceSpec) -> PrecisionMatrix:
    """Sigma^{-1}: Sherman-Morrison closed form, per-block, or via Cholesky."""
    if spec.variant == IDENTITY or (spec.variant == EQUICORRELATED and spec.rho == 0.0):
        return PrecisionMatrix(spec.n, IDENTITY)

    if spec.variant == EQUICORRELATED:
        rho, n = spec.rho, spec.n
        scale = 1.0 / (1.0 - rho)
        off = -scale * rho / (1.0 + (n - 1) * rho)
        return PrecisionMatrix(n, EQUICORRELATED, diagonal_value=scale + off, off_diagonal_value=off)

    if spec.variant == BLOCK_DIAGONAL:
        return PrecisionMatrix(
            spec.n, BLOCK_DIAGONAL, blocks=tuple(precision(b) for b in spec.block_specs())
        )

    lower = factorize_dense(spec.matrix, DENSE)
    t = cho_solve((lower, True), np.eye(spec.n))
    t = 0.5 * (t + t.T)
    if not np.all(np.isfinite(t)):
        raise NumericalError("Dense precision matrix has non-finite entries")
    t.setflags(write=False)
    return PrecisionMatrix(spec.n, DENSE, t=t)
