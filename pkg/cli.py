#!/usr/bin/env python3
"""
CLI interface for the oracle FDR simulator
"""
import functools
import sys

import click
from colorama import Fore, Style, init
from dotenv import load_dotenv
from loguru import logger

from config_manager import (
    BLOCK_TABLES,
    EQUICORRELATED_TABLES,
    configure_logging,
    grid_config_from_mapping,
    load_config,
    reference_grid,
)
from errors import ConfigError, OracleFdrError, OutputError
from harness import VERIFY_TOLERANCE, parse_methods, run_grid, run_verification
from reporting import METRIC_TITLES, pivot_table, read_reports_csv, render_markdown_report

init(autoreset=True)
load_dotenv()

TABLE_METRICS = {1: "fdr", 2: "fnr", 3: "mean_rejections", 4: "fdr", 5: "fnr", 6: "mean_rejections"}


def handle_errors(func):
    """Print package errors in red and exit with their code (1 config, 2 numerical, 3 I/O)."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except OracleFdrError as e:
            click.echo(f"{Fore.RED}Error: {e}{Style.RESET_ALL}", err=True)
            sys.exit(e.exit_code)

    return wrapper


def _run_with_progress(config, out):
    click.echo(
        f"\n{Fore.YELLOW}Running {len(config.cells())} cells "
        f"({', '.join(config.methods)}; {config.replicates} replicates)...{Style.RESET_ALL}"
    )
    with click.progressbar(length=len(config.cells()), label="Simulating cells") as bar:
        reports = run_grid(config, out, on_cell_done=lambda _: bar.update(1))
    click.echo(f"\n{Fore.GREEN}✓ Wrote {len(reports)} rows to {out}{Style.RESET_ALL}")
    return reports


@click.group()
@click.option("--log-level", default=None, help="Override the configured log level")
@click.pass_context
def cli(ctx, log_level):
    """Oracle FDR simulator - closed-form oracle statistic vs. BH and marginal procedures"""
    ctx.ensure_object(dict)
    ctx.obj["log_level"] = log_level
    configure_logging({}, level=log_level or "WARNING")


@cli.command()
@click.option("--config", "config_path", required=True, help="YAML config with a simulation section")
@click.option("--out", "-o", required=True, help="Output CSV path")
@click.option("--seed", type=int, envvar="ORACLE_FDR_SEED", help="Override base seed")
@click.option("--threads", type=int, envvar="ORACLE_FDR_THREADS", help="Worker processes")
@click.option("--methods", help="Comma-separated subset of oracle,bh,marginal")
@click.option("--replicates", type=int, help="Override replicate count")
@click.option("--timing/--no-timing", default=None, help="Record wall time per cell (reproduce: off by default)")
@click.pass_context
@handle_errors
def simulate(ctx, config_path, out, seed, threads, methods, replicates, timing):
    """Run the grid described by a config file"""
    config_data = load_config(config_path)
    configure_logging(config_data, level=ctx.obj["log_level"])
    if "simulation" not in config_data:
        raise ConfigError(f"Config file {config_path} has no simulation section")

    config = grid_config_from_mapping(config_data["simulation"]).with_overrides(
        base_seed=seed,
        threads=threads,
        methods=parse_methods(methods) if methods else None,
        replicates=replicates,
        record_timing=timing,
    )
    _run_with_progress(config, out)


@cli.command()
@click.option("--table", "-t", type=int, required=True, help="Table to reproduce (1-6)")
@click.option("--out", "-o", required=True, help="Output CSV path")
@click.option("--seed", type=int, envvar="ORACLE_FDR_SEED", help="Override base seed")
@click.option("--threads", type=int, envvar="ORACLE_FDR_THREADS", help="Worker processes")
@click.option("--replicates", type=int, help="Override replicate count")
@click.option("--timing/--no-timing", default=None, help="Record wall time per cell (reproduce: off by default)")
@click.pass_context
@handle_errors
def reproduce(ctx, table, out, seed, threads, replicates, timing):
    """Run the reference grid behind one of the tables"""
    configure_logging({}, level=ctx.obj["log_level"])
    # timing is off unless requested so repeat runs produce byte-identical CSV
    config = reference_grid(
        table, base_seed=seed, threads=threads, replicates=replicates, record_timing=bool(timing)
    )

    family = "equicorrelated" if table in EQUICORRELATED_TABLES else "block-diagonal"
    click.echo(f"\n{Fore.CYAN}Table {table}: {family} grid, metric {TABLE_METRICS[table]}{Style.RESET_ALL}")
    _run_with_progress(config, out)

    if table in BLOCK_TABLES:
        click.echo(f"{Fore.YELLOW}Note: block sizes default to four equal blocks of 1250.{Style.RESET_ALL}")
    click.echo(pivot_table(read_reports_csv(out), TABLE_METRICS[table]).to_string())


@cli.command()
@click.option("--instances", type=int, default=200, show_default=True, help="Random instances per family")
@click.option("--seed", type=int, default=0, show_default=True, help="Base seed for the instances")
@click.pass_context
@handle_errors
def verify(ctx, instances, seed):
    """Compare the closed-form statistic with exact enumeration"""
    configure_logging({}, level=ctx.obj["log_level"])
    click.echo(f"\n{Fore.YELLOW}Enumerating {instances} instances per family (n <= 10)...{Style.RESET_ALL}")
    summary = run_verification(instances, seed)

    click.echo(f"\n{Fore.CYAN}Max relative error |closed form - exact| / exact:{Style.RESET_ALL}")
    click.echo(f"  • independent Sigma: {summary.max_rel_error_independent:.3e}")
    click.echo(f"  • correlated Sigma:  {summary.max_rel_error_correlated:.3e}")

    if not summary.passed:
        click.echo(
            f"{Fore.RED}✗ Independent family exceeds {VERIFY_TOLERANCE:g}{Style.RESET_ALL}", err=True
        )
        sys.exit(2)
    click.echo(f"\n{Fore.GREEN}✓ Independent family agrees within {VERIFY_TOLERANCE:g}{Style.RESET_ALL}")


@cli.command()
@click.option("--csv", "csv_path", required=True, help="Simulation report CSV")
@click.option("--metric", "-m", type=click.Choice(sorted(METRIC_TITLES)), default="fdr", show_default=True)
@handle_errors
def tabulate(csv_path, metric):
    """Print one metric in the reference table layout"""
    frame = read_reports_csv(csv_path)
    click.echo(f"\n{Fore.CYAN}{METRIC_TITLES[metric]}{Style.RESET_ALL}")
    click.echo(pivot_table(frame, metric).to_string())


@cli.command()
@click.option("--csv", "csv_path", required=True, help="Simulation report CSV")
@click.option("--out", "-o", required=True, help="Output markdown path")
@click.option("--metrics", default="fdr,fnr,mean_rejections", show_default=True, help="Comma-separated metrics")
@click.option("--title", default="Simulation report", show_default=True)
@handle_errors
def report(csv_path, out, metrics, title):
    """Render FDR / FNR / rejection tables as markdown"""
    frame = read_reports_csv(csv_path)
    names = [m.strip() for m in metrics.split(",") if m.strip()]
    content = render_markdown_report(frame, names, title=title)
    try:
        with open(out, "w", encoding="utf-8") as f:
            f.write(content)
    except OSError as e:
        logger.error(f"Could not write {out}: {e}")
        raise OutputError(f"Could not write {out}: {e}") from e
    click.echo(f"{Fore.GREEN}✓ Report saved to {out}{Style.RESET_ALL}")


if __name__ == "__main__":
    cli()
