"""
Simulation driver: sweeps (p, Sigma) grids, runs seeded replicates for
every requested procedure on shared draws, and aggregates per cell.
"""
import multiprocessing as mp
import os
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from covariance import CholeskyFactor, CovarianceSpec, build_covariance, cholesky, precision
from errors import ConfigError, NumericalError, OutputError
from metrics import ConfusionCounts, ErrorRates, aggregate, confusion
from model import ModelParams, SampleDraw, SeedSpec, draw_replicate
from oracle import OracleContext, brute_force_posterior, build_context, oracle_statistics
from procedures import BH, MARGINAL, METHODS, ORACLE
from reporting import write_reports_csv

DEFAULT_METHODS = (ORACLE, BH, MARGINAL)
DEFAULT_SEED = 20240517


def parse_methods(methods: Iterable[str]) -> Tuple[str, ...]:
    """Normalize a method list (or comma-separated string) and reject unknown names."""
    if isinstance(methods, str):
        methods = methods.split(",")
    names = tuple(dict.fromkeys(m.strip().lower() for m in methods if m.strip()))
    unknown = [m for m in names if m not in METHODS]
    if unknown or not names:
        raise ConfigError(f"Unknown or empty method list {list(methods)}; choose from {sorted(METHODS)}")
    return names


@dataclass(frozen=True)
class GridConfig:
    n: int
    p_grid: Tuple[float, ...]
    sigma_grid: Tuple[CovarianceSpec, ...]
    k: float = 2.5
    alpha: float = 0.05
    replicates: int = 200
    base_seed: int = DEFAULT_SEED
    methods: Tuple[str, ...] = DEFAULT_METHODS
    threads: int = 1
    record_timing: bool = True

    def __post_init__(self):
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        object.__setattr__(self, "sigma_grid", tuple(self.sigma_grid))
        object.__setattr__(self, "methods", parse_methods(self.methods))

        if not self.p_grid or not self.sigma_grid:
            raise ConfigError("p_grid and sigma_grid must be non-empty")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ConfigError(f"replicates must be a positive integer, got {self.replicates}")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError(f"threads must be a positive integer, got {self.threads}")
        SeedSpec(self.base_seed)
        # validates n, k, alpha and every p / sigma combination up front
        self.cells()

    def cells(self) -> List[Tuple[int, ModelParams]]:
        """Grid cells in config order (sigma-major); the index keys the seed streams."""
        cells = []
        for sigma in self.sigma_grid:
            for p in self.p_grid:
                params = ModelParams(n=self.n, p=p, k=self.k, sigma=sigma, alpha=self.alpha)
                cells.append((len(cells), params))
        return cells

    def with_overrides(self, **changes) -> "GridConfig":
        changes = {key: value for key, value in changes.items() if value is not None}
        return replace(self, **changes)


@dataclass(frozen=True)
class CellReport:
    method: str
    p: float
    sigma_label: str
    fdr: float
    se_fdr: float
    fnr: float
    se_fnr: float
    mfdr: float
    mfnr: float
    mean_rejections: float
    replicates: int
    wall_time_seconds: float

    @classmethod
    def from_rates(cls, method: str, params: ModelParams, rates: ErrorRates, wall_time: float) -> "CellReport":
        return cls(
            method=method,
            p=params.p,
            sigma_label=params.sigma.label,
            fdr=rates.fdr,
            se_fdr=rates.se_fdr,
            fnr=rates.fnr,
            se_fnr=rates.se_fnr,
            mfdr=rates.mfdr,
            mfnr=rates.mfnr,
            mean_rejections=rates.mean_rejections,
            replicates=rates.replicates,
            wall_time_seconds=wall_time,
        )

    def sort_key(self):
        return (self.sigma_label, self.p, self.method)

    def as_row(self) -> Dict[str, object]:
        row = asdict(self)
        row["sigma"] = row.pop("sigma_label")
        row["wall_time_s"] = row.pop("wall_time_seconds")
        return row


def build_cell_artifacts(
    params: ModelParams, methods: Sequence[str]
) -> Tuple[CholeskyFactor, Optional[OracleContext]]:
    """Sampling factor always; precision and oracle context only when the oracle runs."""
    factor = cholesky(params.sigma)
    ctx = None
    if ORACLE in methods:
        ctx = build_context(precision(params.sigma), params.k, params.p)
    return factor, ctx


def run_cell(
    params: ModelParams,
    replicates: int,
    seeds: SeedSpec,
    methods: Sequence[str] = DEFAULT_METHODS,
    cell_index: int = 0,
    on_draw: Optional[Callable[[int, SampleDraw], None]] = None,
    record_timing: bool = True,
) -> List[CellReport]:
    """Run `replicates` draws of one cell; every method sees the same draw."""
    methods = parse_methods(methods)
    if int(replicates) != replicates or replicates < 1:
        raise ConfigError(f"replicates must be a positive integer, got {replicates}")

    cell_name = f"sigma={params.sigma.label}, p={params.p:g}"
    logger.info(f"Running cell {cell_index} ({cell_name}) with {replicates} replicates: {', '.join(methods)}")
    start = time.perf_counter()

    counts: Dict[str, List[ConfusionCounts]] = {method: [] for method in methods}
    try:
        factor, ctx = build_cell_artifacts(params, methods)
        for replicate in range(replicates):
            draw = draw_replicate(params, factor, seeds.stream(cell_index, replicate))
            if on_draw is not None:
                on_draw(replicate, draw)
            for method in methods:
                decision = METHODS[method](draw, params, ctx)
                counts[method].append(confusion(decision, draw.theta))
    except NumericalError as e:
        logger.error(f"Numerical failure in cell {cell_index} ({cell_name}): {e}")
        raise NumericalError(f"Cell {cell_index} ({cell_name}, methods {','.join(methods)}): {e}") from e

    elapsed = time.perf_counter() - start if record_timing else 0.0
    reports = [
        CellReport.from_rates(method, params, aggregate(counts[method]), elapsed)
        for method in sorted(methods)
    ]
    logger.debug(f"Cell {cell_index} finished in {time.perf_counter() - start:.2f}s")
    return reports


def _run_cell_task(task: Tuple[int, ModelParams, GridConfig]) -> List[CellReport]:
    cell_index, params, config = task
    return run_cell(
        params,
        config.replicates,
        SeedSpec(config.base_seed),
        config.methods,
        cell_index=cell_index,
        record_timing=config.record_timing,
    )


def _check_writable(out_path: Path) -> None:
    parent = out_path.parent if str(out_path.parent) else Path(".")
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise OutputError(f"Output directory {parent} does not exist or is not writable")
    if out_path.is_dir():
        raise OutputError(f"Output path {out_path} is a directory")


def run_grid(
    config: GridConfig, out_path, on_cell_done: Optional[Callable[[List[CellReport]], None]] = None
) -> List[CellReport]:
    """Run every (sigma, p) cell and write the sorted CSV report."""
    out_path = Path(out_path)
    _check_writable(out_path)

    tasks = [(index, params, config) for index, params in config.cells()]
    logger.info(
        f"Running {len(tasks)} cells x {len(config.methods)} methods, "
        f"{config.replicates} replicates each, {config.threads} worker(s)"
    )

    reports: List[CellReport] = []
    if config.threads > 1 and len(tasks) > 1:
        with mp.Pool(processes=min(config.threads, len(tasks))) as pool:
            for cell_reports in pool.imap(_run_cell_task, tasks):
                reports.extend(cell_reports)
                if on_cell_done is not None:
                    on_cell_done(cell_reports)
    else:
        for task in tasks:
            cell_reports = _run_cell_task(task)
            reports.extend(cell_reports)
            if on_cell_done is not None:
                on_cell_done(cell_reports)

    reports.sort(key=CellReport.sort_key)
    write_reports_csv([report.as_row() for report in reports], out_path)
    logger.success(f"Wrote {len(reports)} rows to {out_path}")
    return reports


# Closed form vs. exact enumeration

VERIFY_P_GRID = (0.05, 0.3, 0.7)
VERIFY_K_GRID = (-1.5, 2.5)
VERIFY_MAX_N = 10
VERIFY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class VerificationSummary:
    instances: int
    max_rel_error_independent: float
    max_rel_error_correlated: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error_independent <= VERIFY_TOLERANCE


def random_correlation_spec(n: int, rng: np.random.Generator) -> CovarianceSpec:
    """Random PD correlation matrix from a random factor G G^T + n I, rescaled to unit diagonal."""
    factor = rng.standard_normal((n, n))
    raw = factor @ factor.T + n * np.eye(n)
    scale = 1.0 / np.sqrt(np.diag(raw))
    matrix = raw * scale[:, None] * scale[None, :]
    matrix = 0.5 * (matrix + matrix.T)
    np.fill_diagonal(matrix, 1.0)
    return CovarianceSpec.dense(matrix)


def closed_form_error(spec: CovarianceSpec, p: float, k: float, rng: np.random.Generator) -> float:
    """Max relative error of the closed form against enumeration on one model draw."""
    params = ModelParams(n=spec.n, p=p, k=k, sigma=spec)
    draw = draw_replicate(params, cholesky(spec), rng)
    closed = oracle_statistics(draw.x, build_context(precision(spec), k, p)).values
    exact = brute_force_posterior(draw.x, build_covariance(spec), k, p).values
    return float(np.max(np.abs(closed - exact) / exact))


def run_verification(instances: int = 200, base_seed: int = 0) -> VerificationSummary:
    """
    Compare the closed form with exact enumeration on random instances.

    Independent instances use Sigma = I and must agree to VERIFY_TOLERANCE.
    Correlated instances use random dense correlation matrices; their
    discrepancy is reported because the product factor of the closed form
    ignores how x reweights the other states.
    """
    if instances < 1:
        raise ConfigError("instances must be positive")
    seeds = SeedSpec(base_seed)
    worst_independent = worst_correlated = 0.0

    for index in range(instances):
        rng = seeds.stream(0, index)
        n = int(rng.integers(1, VERIFY_MAX_N + 1))
        p = float(rng.choice(VERIFY_P_GRID))
        k = float(rng.choice(VERIFY_K_GRID))
        worst_independent = max(worst_independent, closed_form_error(CovarianceSpec.identity(n), p, k, rng))
        worst_correlated = max(worst_correlated, closed_form_error(random_correlation_spec(n, rng), p, k, rng))

    logger.info(
        f"Verification over {instances} instances: independent {worst_independent:.3e}, "
        f"correlated {worst_correlated:.3e}"
    )
    return VerificationSummary(instances, worst_independent, worst_correlated)
