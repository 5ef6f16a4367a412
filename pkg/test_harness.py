import csv

import numpy as np
import pytest

from covariance import CovarianceSpec
from errors import ConfigError, NumericalError, OutputError
from harness import (
    DEFAULT_METHODS,
    GridConfig,
    VERIFY_TOLERANCE,
    CellReport,
    parse_methods,
    random_correlation_spec,
    run_cell,
    run_grid,
    run_verification,
)
from metrics import aggregate, confusion
from model import ModelParams, SeedSpec, draw_replicate
from oracle import build_context, log_u
from procedures import bh_from_pvalues, bh_procedure, marginal_procedure
from reporting import CSV_COLUMNS


def small_grid(**overrides):
    values = dict(
        n=60,
        p_grid=[0.05, 0.2],
        sigma_grid=[CovarianceSpec.identity(60), CovarianceSpec.equicorrelated(60, 0.4)],
        replicates=6,
        base_seed=123,
        record_timing=False,
    )
    values.update(overrides)
    return GridConfig(**values)


def test_parse_methods():
    assert parse_methods("oracle, BH") == ("oracle", "bh")
    assert parse_methods(["marginal", "marginal"]) == ("marginal",)
    with pytest.raises(ConfigError):
        parse_methods("oracle,storey")
    with pytest.raises(ConfigError):
        parse_methods("")


def test_grid_validation():
    with pytest.raises(ConfigError):
        small_grid(p_grid=[])
    with pytest.raises(ConfigError):
        small_grid(replicates=0)
    with pytest.raises(ConfigError):
        small_grid(threads=0)
    with pytest.raises(ConfigError):
        small_grid(p_grid=[1.2])
    with pytest.raises(ConfigError):
        small_grid(sigma_grid=[CovarianceSpec.identity(5)])


def test_cells_are_sigma_major():
    cells = small_grid().cells()
    assert [index for index, _ in cells] == [0, 1, 2, 3]
    assert [(params.sigma.label, params.p) for _, params in cells] == [
        ("identity", 0.05), ("identity", 0.2), ("equi:0.4", 0.05), ("equi:0.4", 0.2),
    ]


def test_with_overrides_ignores_none():
    config = small_grid().with_overrides(base_seed=None, threads=3)
    assert config.base_seed == 123
    assert config.threads == 3


def test_degenerate_cell():
    params = ModelParams(n=1, p=0.5, k=2.5, sigma=CovarianceSpec.identity(1), alpha=0.05)
    reports = run_cell(params, 1, SeedSpec(0))
    assert sorted(r.method for r in reports) == sorted(DEFAULT_METHODS)
    for report in reports:
        assert report.mean_rejections in (0.0, 1.0)
        for value in (report.fdr, report.fnr, report.mfdr, report.mfnr):
            assert value in (0.0, 1.0)
        assert report.replicates == 1


def test_run_cell_is_deterministic():
    params = ModelParams(n=200, p=0.1, k=2.5, sigma=CovarianceSpec.equicorrelated(200, 0.5))
    first = run_cell(params, 10, SeedSpec(5), cell_index=3, record_timing=False)
    second = run_cell(params, 10, SeedSpec(5), cell_index=3, record_timing=False)
    assert first == second
    assert [r.method for r in first] == sorted(DEFAULT_METHODS)


def test_different_cells_get_different_draws():
    params = ModelParams(n=200, p=0.1, k=2.5, sigma=CovarianceSpec.identity(200))
    first = run_cell(params, 5, SeedSpec(5), methods=["bh"], cell_index=0, record_timing=False)
    second = run_cell(params, 5, SeedSpec(5), methods=["bh"], cell_index=1, record_timing=False)
    assert first != second


def test_methods_share_each_draw():
    params = ModelParams(n=100, p=0.1, k=2.5, sigma=CovarianceSpec.equicorrelated(100, 0.3))
    seen = []
    run_cell(params, 7, SeedSpec(1), on_draw=lambda replicate, draw: seen.append(replicate))
    assert seen == list(range(7))


def test_method_subset_does_not_change_shared_results():
    params = ModelParams(n=100, p=0.1, k=2.5, sigma=CovarianceSpec.equicorrelated(100, 0.3))
    everything = {r.method: r for r in run_cell(params, 8, SeedSpec(2), record_timing=False)}
    only_bh = run_cell(params, 8, SeedSpec(2), methods=["bh"], record_timing=False)
    assert only_bh == [everything["bh"]]


def test_rates_in_unit_interval():
    params = ModelParams(n=300, p=0.1, k=2.5, sigma=CovarianceSpec.block_diagonal([(150, 0.25), (150, 0.75)]))
    for report in run_cell(params, 10, SeedSpec(8), record_timing=False):
        for value in (report.fdr, report.fnr, report.mfdr, report.mfnr, report.se_fdr, report.se_fnr):
            assert 0.0 <= value <= 1.0
        assert report.wall_time_seconds == 0.0


def test_simulated_fdr_below_mfdr_when_every_replicate_rejects():
    # a shared shift moves V/R and R in the same direction
    params = ModelParams(n=200, p=0.5, k=4.0, sigma=CovarianceSpec.equicorrelated(200, 0.5))
    rejections = {"bh": [], "marginal": []}

    def count(replicate, draw):
        rejections["bh"].append(bh_procedure(draw.x, params.alpha).num_rejected)
        rejections["marginal"].append(marginal_procedure(draw.x, params.p, params.k, params.alpha).num_rejected)

    reports = run_cell(params, 100, SeedSpec(31), methods=["bh", "marginal"], on_draw=count, record_timing=False)
    for report in reports:
        R = np.array(rejections[report.method])
        assert R.min() > 0 and R.max() < params.n
        assert report.fdr <= report.mfdr
        assert report.fnr <= report.mfnr


def test_timing_recorded_when_requested():
    params = ModelParams(n=50, p=0.1, k=2.5, sigma=CovarianceSpec.identity(50))
    reports = run_cell(params, 2, SeedSpec(8), record_timing=True)
    assert all(r.wall_time_seconds > 0.0 for r in reports)


def test_non_positive_definite_cell_is_identified():
    sigma = CovarianceSpec.dense([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]])
    params = ModelParams(n=3, p=0.1, k=2.5, sigma=sigma)
    with pytest.raises(NumericalError) as info:
        run_cell(params, 2, SeedSpec(0), cell_index=4)
    assert "Cell 4" in str(info.value)
    assert "p=0.1" in str(info.value)


def test_as_row_matches_csv_columns():
    params = ModelParams(n=10, p=0.1, k=2.5, sigma=CovarianceSpec.identity(10))
    row = run_cell(params, 2, SeedSpec(0), record_timing=False)[0].as_row()
    assert sorted(row) == sorted(CSV_COLUMNS)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_run_grid_writes_sorted_csv(tmp_path):
    out = tmp_path / "grid.csv"
    reports = run_grid(small_grid(), out)
    rows = read_rows(out)
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 1 + 2 * 2 * 3
    assert reports == sorted(reports, key=CellReport.sort_key)
    assert [row[:3] for row in rows[1:4]] == [["bh", "equi:0.4", "0.05"], ["marginal", "equi:0.4", "0.05"], ["oracle", "equi:0.4", "0.05"]]
    assert out.read_bytes().endswith(b"\n") and b"\r" not in out.read_bytes()


def test_run_grid_single_cell_matches_run_cell(tmp_path):
    config = small_grid(p_grid=[0.1], sigma_grid=[CovarianceSpec.equicorrelated(60, 0.4)])
    reports = run_grid(config, tmp_path / "one.csv")
    direct = run_cell(config.cells()[0][1], 6, SeedSpec(123), record_timing=False)
    assert reports == direct
    assert len(read_rows(tmp_path / "one.csv")) == 4


def test_run_grid_same_seed_is_byte_identical(tmp_path):
    run_grid(small_grid(), tmp_path / "a.csv")
    run_grid(small_grid(), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_run_grid_invariant_to_workers(tmp_path):
    run_grid(small_grid(threads=1), tmp_path / "serial.csv")
    run_grid(small_grid(threads=3), tmp_path / "parallel.csv")
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()


def test_run_grid_reports_progress(tmp_path):
    done = []
    run_grid(small_grid(), tmp_path / "grid.csv", on_cell_done=lambda reports: done.append(len(reports)))
    assert done == [3, 3, 3, 3]


def test_run_grid_unwritable_path(tmp_path):
    with pytest.raises(OutputError):
        run_grid(small_grid(), tmp_path / "missing" / "grid.csv")
    with pytest.raises(OutputError):
        run_grid(small_grid(), tmp_path)


def test_random_correlation_spec():
    spec = random_correlation_spec(6, np.random.default_rng(0))
    assert spec.n == 6
    assert np.all(np.diag(spec.matrix) == 1.0)
    assert np.all(np.linalg.eigvalsh(spec.matrix) > 0)


def test_verification_summary():
    summary = run_verification(instances=20, base_seed=3)
    assert summary.instances == 20
    assert summary.max_rel_error_independent <= VERIFY_TOLERANCE
    assert summary.passed
    assert summary.max_rel_error_correlated > VERIFY_TOLERANCE


def test_verification_needs_instances():
    with pytest.raises(ConfigError):
        run_verification(instances=0)


@pytest.mark.parametrize("func", [build_context, log_u, confusion, aggregate, draw_replicate, bh_from_pvalues])
def test_public_entry_points_are_documented(func):
    assert func.__doc__ and func.__doc__.strip()
