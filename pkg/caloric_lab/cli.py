"""Command line interface for caloric-lab."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, NoReturn

import click
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from . import settings
from .errors import CaloricLabError
from .experiments import EXPLANATIONS, RunReport, calibrate, run_experiment
from .export import RunArtifacts, write_run, write_table
from .graph import FAMILIES, MEASURE_RULES
from .loader import EXPERIMENTS, ExperimentConfig, load_experiment, validate_experiment_dict

logger = logging.getLogger(__name__)

FAMILY_NOTES: Dict[str, str] = {
    "lattice-zd": "ℤ^d with nearest-neighbour edges; keys: dimension, weights, measure",
    "weighted-line": (
        "ℤ¹ with w_{n,n+1} = c(1+min(|n|,|n+1|))^p, so Deg(n) = 2|n|+1 off the origin for c = p = 1; "
        "keys: weights, measure"
    ),
    "star": "one center joined to `leaves` leaves; keys: leaves, weights, measure",
    "normalized-wrap": "any inner family with m_x = Σ_y w_xy; keys: inner",
}


def _fail(ctx: click.Context, exc: CaloricLabError) -> NoReturn:
    Console(stderr=True).print(f"[bold red]Error:[/bold red] {escape(str(exc))}", highlight=False)
    ctx.exit(exc.exit_code)


@click.group(invoke_without_command=True)
@click.option("--verbose", "-v", is_flag=True, help="Verbose (DEBUG) logging")
@click.option("--list-families", is_flag=True, help="List the graph families a config can name")
@click.option("--explain", type=click.Choice(EXPERIMENTS), help="Describe an experiment tag and its tables")
@click.pass_context
def cli(ctx: click.Context, verbose: bool, list_families: bool, explain: str | None) -> None:
    """Discrete heat-equation experiments on weighted graphs."""

    settings.configure_logging("DEBUG" if verbose else None)
    console = Console()
    if list_families:
        table = Table(title="Graph families")
        table.add_column("family")
        table.add_column("description")
        for family in FAMILIES:
            table.add_row(family, FAMILY_NOTES[family])
        console.print(table)
        ctx.exit(0)
    if explain:
        console.print(f"[bold]{explain}[/bold]: {EXPLANATIONS[explain]}", highlight=False)
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(1)


def _show_report(report: RunReport, artifacts: RunArtifacts) -> None:
    console = Console()
    table = Table(title=f"{report.config.name} ({report.config.experiment})")
    table.add_column("check")
    table.add_column("result")
    table.add_column("detail")
    for check in report.checks:
        result = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.name, result, check.detail)
    console.print(table)
    for path in artifacts.paths:
        console.print(f"wrote {path}", highlight=False)


def _execute(ctx: click.Context, config: ExperimentConfig, out: Path | None, threads: int | None) -> None:
    try:
        report = run_experiment(config, threads=threads)
        output_dir = out or config.output_dir or settings.resolve_under_output(config.name)
        artifacts = write_run(report, output_dir)
    except CaloricLabError as exc:
        _fail(ctx, exc)
    _show_report(report, artifacts)
    ctx.exit(0 if report.passed else 1)


def _with_seed(config: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    if seed is None:
        return config
    raw = dict(config.raw)
    raw["seed"] = seed
    return replace(config, seed=seed, raw=raw)


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory for tables and summary")
@click.option("--threads", type=click.IntRange(min=1), help="Worker threads for radius sweeps")
@click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), help="Override the config seed")
@click.option("--verbose", "-v", is_flag=True, help="Verbose (DEBUG) logging")
@click.pass_context
def run(
    ctx: click.Context,
    config_path: Path,
    out: Path | None,
    threads: int | None,
    seed: int | None,
    verbose: bool,
) -> None:
    """Run the experiment described by CONFIG_PATH."""

    if verbose:
        settings.configure_logging("DEBUG")
    try:
        config = _with_seed(load_experiment(config_path), seed)
    except CaloricLabError as exc:
        _fail(ctx, exc)
    _execute(ctx, config, out, threads)


@cli.command("verify-metric")
@click.option("--family", type=click.Choice(FAMILIES), default="lattice-zd", show_default=True)
@click.option("--dimension", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--leaves", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--weight-power", type=float, help="Use w = (1+r)^p instead of unit weights")
@click.option("--measure", type=click.Choice(MEASURE_RULES), default="counting", show_default=True)
@click.option("--normalized", is_flag=True, help="Wrap the family with the normalized measure")
@click.option("--hops", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--length", type=float, help="Explicit constant edge length instead of the constructed metric")
@click.option("--radius", "radii", type=float, multiple=True, help="Cut-off radius to check (repeatable)")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path))
@click.pass_context
def verify_metric(
    ctx: click.Context,
    family: str,
    dimension: int,
    leaves: int,
    weight_power: float | None,
    measure: str,
    normalized: bool,
    hops: int,
    length: float | None,
    radii: tuple,
    out: Path | None,
) -> None:
    """Check the intrinsic metric condition and cut-off Lipschitz bounds from flags."""

    family_block: Dict[str, Any] = {"family": family, "measure": {"rule": measure}}
    if family == "lattice-zd":
        family_block["dimension"] = dimension
    if family == "star":
        family_block["leaves"] = leaves
    if weight_power is not None:
        family_block["weights"] = {"rule": "radial-power", "power": weight_power}
    if normalized:
        family_block = {"family": "normalized-wrap", "inner": family_block}

    payload: Dict[str, Any] = {
        "name": "verify-metric",
        "experiment": "verify-metric",
        "family": family_block,
        "window": {"hops": hops},
        "metric": {"kind": "explicit", "length": length} if length is not None else {"kind": "constructed"},
    }
    if radii:
        payload["params"] = {"radii": sorted(radii)}
    try:
        config = validate_experiment_dict(payload)
    except CaloricLabError as exc:
        _fail(ctx, exc)
    _execute(ctx, config, out, None)


@cli.command("calibrate")
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--baseline", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--threads", type=click.IntRange(min=1))
@click.pass_context
def calibrate_command(ctx: click.Context, config_path: Path, baseline: Path, threads: int | None) -> None:
    """Record the ratios of a caccioppoli-sweep config in the baseline table."""

    try:
        config = load_experiment(config_path)
        frame = calibrate(config, baseline, threads=threads)
        write_table(frame, baseline)
    except CaloricLabError as exc:
        _fail(ctx, exc)
    Console().print(f"baseline {baseline}: {len(frame)} rows", highlight=False)
    ctx.exit(0)


def main(argv: List[str] | None = None) -> int:
    try:
        return cli.main(args=argv, prog_name="caloric-lab", standalone_mode=False) or 0
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.Abort:
        return 1
    except CaloricLabError as exc:
        Console(stderr=True).print(f"Error: {exc}", highlight=False)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
