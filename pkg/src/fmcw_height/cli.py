"""Command-line front end: run a scenario, sweep one parameter, list presets.

Exit codes: 0 success, 1 invalid scenario or arguments, 2 runtime failure
such as a target reaching zero distance.
"""
from __future__ import annotations

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from . import report
from .errors import FmcwHeightError, ScenarioError
from .scenario import (
    Scenario,
    apply_overrides,
    check_override_key,
    load_scenario,
    parse_value,
    preset_names,
    resolve_scenario,
    run_scenario,
)

log = logging.getLogger("fmcw_height")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Failure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _guard(fn, *args):
    try:
        return fn(*args)
    except ScenarioError as exc:
        raise _Failure(f"invalid scenario: {exc}", EXIT_VALIDATION) from None
    except FmcwHeightError as exc:
        raise _Failure(f"run failed: {exc}", EXIT_RUNTIME) from None


def _summary(result) -> str:
    lines = [f"{result.mode.value}: {result.n_cycles} cycles, {len(result.records)} estimates"]
    matched = [r for r in result.records if r.target_id is not None]
    if result.mode.value == "somc":
        for r in sorted(matched, key=lambda r: r.target_id):
            e = r.estimate
            lines.append(
                f"  target {r.target_id}: true {r.true_height:.3f} m, estimate {e.height:.3f} m, "
                f"resolution {e.resolution:.3f} m, valid {e.valid}"
            )
    else:
        valid = [r for r in matched if r.estimate.valid]
        lines.append(f"  {len(matched)} per-CPI estimates matched to targets, {len(valid)} flagged valid")
    return "\n".join(lines)


@click.group()
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
def cli(verbose: int) -> None:
    """Height estimation from ground-multipath amplitude modulation in FMCW radar."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.argument("scenario")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a scenario field, e.g. targets.0.height_m=1.5.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: scenario output_dir, else ./out).")
def run(scenario: str, overrides: tuple[str, ...], out_dir: str | None) -> None:
    """Simulate and estimate SCENARIO (a YAML file or preset name)."""
    sc: Scenario = _guard(load_scenario, scenario, overrides)
    result = _guard(run_scenario, sc)
    target = Path(out_dir or sc.output_dir or "out")
    paths = report.write_run(target, result, sc.model_dump(mode="json"))
    click.echo(_summary(result))
    for name, path in paths.items():
        click.echo(f"wrote {name}: {path}")


def _parse_values(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _sweep_point(args):
    tree, key, value_text, run_dir = args
    sc = apply_overrides(resolve_scenario(tree), [(key, parse_value(value_text))])
    result = run_scenario(sc)
    report.write_run(run_dir, result, sc.model_dump(mode="json"))
    return report.sweep_rows(value_text, result)


@cli.command()
@click.argument("scenario")
@click.option("--param", "param", required=True, help="Dotted scenario key to vary.")
@click.option("--values", "values", required=True, help="Comma-separated values, may be empty.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Fixed overrides.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="sweep_out",
              show_default=True, help="Output directory.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True, help="Parallel workers.")
def sweep(scenario: str, param: str, values: str, overrides: tuple[str, ...], out_dir: str, jobs: int) -> None:
    """Run SCENARIO once per value of PARAM and aggregate into sweep.csv."""
    sc: Scenario = _guard(load_scenario, scenario, overrides)
    _guard(check_override_key, sc, param)
    items = _parse_values(values)
    for text in items:
        # validate every point before any simulation starts
        _guard(apply_overrides, sc, [(param, parse_value(text))])

    tree = sc.model_dump(mode="json")
    out = Path(out_dir)
    tasks = [(tree, param, text, out / "runs" / f"{i:03d}") for i, text in enumerate(items)]
    rows: list[tuple] = []
    if tasks:
        if jobs == 1:
            chunks = [_guard(_sweep_point, t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_sweep_point, t) for t in tasks]
                chunks = [_guard(f.result) for f in futures]
        for chunk in chunks:
            rows.extend(chunk)
    path = out / "sweep.csv"
    report.write_csv(path, report.SWEEP_COLUMNS, rows)
    click.echo(f"{len(items)} runs, {len(rows)} rows; wrote {path}")


@cli.command()
def presets() -> None:
    """List the bundled preset scenarios."""
    for name in preset_names():
        sc = load_scenario(name)
        click.echo(f"{name}: {sc.description}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="fmcw-height", standalone_mode=False)
    except _Failure as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_RUNTIME
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
