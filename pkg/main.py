#!/usr/bin/env python3
"""
Stable Conley Index v1.0.0 — stable Conley indices through finite-dimensional compressions

Available Commands:
  validate       Parse and validate a problem file
  admissible     Admissibility numbers for every frame of a problem
  index          Stable index on one frame
  ladder         Stable indices on every frame, with the equality matrix
  sweep          Continuation sweep between two problems
  report         Run the ladder and write JSON / CSV / SVG reports
  config         Manage user settings (workers, cache, theme)
  cache          Inspect or clear the result cache

Exit codes: 0 success, 2 invalid problem file, 3 pipeline failure.
"""

import logging
import sys
from pathlib import Path
from typing import Optional, Tuple

import click
from tabulate import tabulate

from stable_conley import config_manager
from stable_conley.cache import ResultCache
from stable_conley.config import EXIT_PIPELINE, EXIT_VALIDATION, REPORT_FORMATS
from stable_conley.errors import ProblemParseError, ProblemValidationError, StableConleyError, StructureError
from stable_conley.problem import ProblemSpec, load_problem
from stable_conley.report_exporter import emit_report
from stable_conley.runner import RunReport, assemble_frame, continuation_sweep, run_ladder
from stable_conley.subspace_lab import admissible, signature
from stable_conley.summary import format_summary, frame_table
from stable_conley.utils import format_ranks, themed_header, themed_print

# Set up logging
logging.basicConfig(
    level=logging.WARNING,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

PROBLEM_OPTION = click.option('--problem', '-p', 'problem_path', required=True,
                              type=click.Path(exists=True, dir_okay=False),
                              help='Problem file (INI sections, JSON values)')
MAX_REFINE_OPTION = click.option('--max-refine', type=click.IntRange(min=0), default=None,
                                 help='Grid refinements allowed per frame (default: from the problem file)')


def _load(problem_path: str) -> ProblemSpec:
    """Parse a problem file or exit with the validation code."""
    try:
        return load_problem(problem_path)
    except (ProblemParseError, ProblemValidationError, StructureError) as e:
        click.echo(f"Error: {problem_path}: {e}", err=True)
        sys.exit(EXIT_VALIDATION)


def _settings(spec: ProblemSpec, max_refine: Optional[int], workers: int = 1):
    try:
        return spec.engine_settings(max_refinements=max_refine, workers=workers)
    except StructureError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)


def _cache(cache_dir: Optional[str], no_cache: bool) -> Optional[ResultCache]:
    if no_cache or not config_manager.get_cache_enabled():
        return None
    return ResultCache(config_manager.get_cache_dir(cache_dir))


def _emit(report: RunReport, out: Optional[str], formats: Tuple[str, ...]):
    if not out:
        return
    for fmt in formats:
        for path in emit_report(report, fmt, out):
            click.echo(f"  wrote {path}")


# ══════════════════════════════════════════════════════════════════════════════
# CLI Root
# ══════════════════════════════════════════════════════════════════════════════

@click.group()
@click.version_option(version='1.0.0')
@click.option('--verbose', '-v', is_flag=True, help='Log pipeline milestones (INFO level)')
def cli(verbose: bool):
    """Stable Conley Index — stable indices of compressed flows."""
    if verbose:
        logging.getLogger().setLevel(logging.INFO)


# ══════════════════════════════════════════════════════════════════════════════
# Problem files
# ══════════════════════════════════════════════════════════════════════════════

@cli.command()
@PROBLEM_OPTION
def validate(problem_path: str):
    """Parse a problem file and report every invalid setting.

    \b
    Examples:
      stable-conley validate -p problems/repeller.ini
    """
    spec = _load(problem_path)
    try:
        F = spec.build_field()
        frames = spec.frames(F)
    except (StableConleyError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)

    themed_header(f"Problem: {spec.name}", Path(problem_path).name)
    L = F.L
    click.echo(f"Core eigenvalues : {', '.join(f'{v:.6g}' for v in L.core_eigenvalues())}")
    click.echo(f"Tail values      : {', '.join(f'{v:.6g}' for v in L.tail_values)}")
    click.echo(f"Spectral gap     : {L.spectral_gap:.6g}")
    click.echo(f"Growth witness   : ({F.growth_witness[0]:.6g}, {F.growth_witness[1]:.6g})")
    click.echo(f"Neighbourhood    : {spec.neighborhood.shape} of radius {spec.neighborhood.radius:.6g}")
    click.echo(f"Frames           : {', '.join(f'{n} ({V.dim})' for n, _, V in frames)}")
    themed_print("✓ Problem file is valid", "success")


@cli.command('admissible')
@PROBLEM_OPTION
def admissible_cmd(problem_path: str):
    """Admissibility numbers (kernel, commutator, residual) for every frame."""
    spec = _load(problem_path)
    try:
        F = spec.build_field()
        X = spec.build_neighborhood()
        budget = spec.build_budget()
        rows = []
        for name, kind, V in spec.frames(F):
            record = admissible(F, V, X, budget)
            sig = signature(F.L, V, budget.tolerance_for(F.L))
            rows.append([name, kind, V.dim, 'yes' if record.admissible else 'no',
                         f"{record.kernel_defect:.3g}", f"{record.commutator:.4g}",
                         f"{record.residual_lower:.4g}", f"{record.residual_upper:.4g}",
                         '/'.join(str(d) for d in sig.dims), '; '.join(record.reasons)])
    except StableConleyError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_PIPELINE)

    themed_header(f"Admissibility: {spec.name}", f"c1={budget.c1:g}, c2={budget.c2:g}")
    click.echo(tabulate(rows, headers=['Frame', 'Kind', 'Dim', 'Admissible', 'Kernel', 'Commutator',
                                       'Residual lo', 'Residual hi', '-/0/+', 'Reasons'], tablefmt='simple'))


# ══════════════════════════════════════════════════════════════════════════════
# Indices
# ══════════════════════════════════════════════════════════════════════════════

@cli.command()
@PROBLEM_OPTION
@click.option('--frame', '-f', 'frame_name', default=None, help='Frame name (default: the first frame)')
@MAX_REFINE_OPTION
@click.option('--out', '-o', default=None, help='Directory for the report files')
@click.option('--format', 'formats', type=click.Choice(REPORT_FORMATS), multiple=True, default=('json',),
              show_default=True, help='Report format (repeatable)')
def index(problem_path: str, frame_name: Optional[str], max_refine: Optional[int],
          out: Optional[str], formats: Tuple[str, ...]):
    """Stable Conley index of the problem on a single frame.

    \b
    Examples:
      stable-conley index -p problems/saddle.ini
      stable-conley index -p problems/repeller.ini -f R1 --out reports --format svg
    """
    spec = _load(problem_path)
    settings = _settings(spec, max_refine)
    try:
        F = spec.build_field()
        frames = spec.frames(F)
        chosen = [(i, item) for i, item in enumerate(frames) if frame_name in (None, item[0])]
        if not chosen:
            raise ValueError(f"No frame named '{frame_name}'; frames: {', '.join(n for n, _, _ in frames)}")
        position, (name, kind, V) = chosen[0]
        result = assemble_frame(F, spec.build_neighborhood(), spec.build_budget(), settings,
                                position, name, kind, V)
    except (StableConleyError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_PIPELINE)

    report = RunReport(spec.name, '', settings.to_dict(), [result])
    themed_header(f"Stable index: {spec.name}", f"frame {name}")
    click.echo(frame_table(report))
    if result.homology is not None:
        click.echo(f"\nConley index homology : {format_ranks(result.homology.ranks())}")
        click.echo(f"Shift (dim V-)        : {result.index.shift}")
        click.echo(f"Method                : {result.method} ({result.refinements} refinement(s))")
    _emit(report, out, formats)
    if not result.assembled:
        click.echo(f"Error: frame {name}: {'; '.join(result.reasons)}", err=True)
        sys.exit(EXIT_PIPELINE)


@cli.command()
@PROBLEM_OPTION
@MAX_REFINE_OPTION
@click.option('--workers', '-w', type=click.IntRange(min=1), default=None,
              help='Frames processed concurrently (default: from config)')
@click.option('--out', '-o', default=None, help='Directory for the report files')
@click.option('--format', 'formats', type=click.Choice(REPORT_FORMATS), multiple=True, default=('json',),
              show_default=True, help='Report format (repeatable)')
@click.option('--cache-dir', default=None, help='Result cache directory (overrides config and environment)')
@click.option('--no-cache', is_flag=True, help='Recompute every frame')
def ladder(problem_path: str, max_refine: Optional[int], workers: Optional[int], out: Optional[str],
           formats: Tuple[str, ...], cache_dir: Optional[str], no_cache: bool):
    """Stable indices on every ladder rung and rotated frame.

    \b
    Examples:
      stable-conley ladder -p problems/linear_s0.ini
      stable-conley ladder -p problems/repeller.ini -w 4 --out reports --format json --format csv
    """
    spec = _load(problem_path)
    workers = workers or config_manager.get_workers()
    try:
        report = run_ladder(spec, workers=workers, cache=_cache(cache_dir, no_cache),
                            progress=config_manager.get_progress_enabled(), settings=_settings(spec, max_refine))
        click.echo(format_summary(report))
        _emit(report, out, formats)
    except (StableConleyError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_PIPELINE)

    if not report.assembled:
        click.echo("Error: no frame could be assembled", err=True)
        sys.exit(EXIT_PIPELINE)
    if report.all_equal:
        themed_print(f"✓ All {len(report.assembled)} stable indices agree", "success")
    else:
        themed_print("Stable indices differ between frames", "warning")


@cli.command()
@PROBLEM_OPTION
@click.option('--target', '-t', 'target_path', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Problem file of the end field')
@click.option('--steps', '-n', type=click.IntRange(min=2), default=11, show_default=True,
              help='Interpolation points including both ends')
@MAX_REFINE_OPTION
@click.option('--out', '-o', default=None, help='Directory for the report files')
@click.option('--format', 'formats', type=click.Choice(REPORT_FORMATS), multiple=True, default=('json',),
              show_default=True, help='Report format (repeatable)')
def sweep(problem_path: str, target_path: str, steps: int, max_refine: Optional[int],
          out: Optional[str], formats: Tuple[str, ...]):
    """Continuation sweep from one problem's field to another's.

    \b
    Examples:
      stable-conley sweep -p problems/repeller.ini -t problems/repeller_scaled.ini -n 11
    """
    spec_a = _load(problem_path)
    spec_b = _load(target_path)
    try:
        report = continuation_sweep(spec_a, spec_b, steps, _settings(spec_a, max_refine))
        click.echo(format_summary(report))
        _emit(report, out, [f for f in formats if f != 'svg'])
    except (StableConleyError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_PIPELINE)

    if report.sweep.broken:
        click.echo(f"Error: isolation lost at step {report.sweep.break_step} "
                   f"(s={report.sweep.break_s:.4g})", err=True)
        sys.exit(EXIT_PIPELINE)
    themed_print("✓ Isolation kept along the whole sweep", "success")


@cli.command()
@PROBLEM_OPTION
@click.option('--out', '-o', required=True, help='Directory for the report files')
@click.option('--format', 'formats', type=click.Choice(REPORT_FORMATS), multiple=True,
              default=tuple(REPORT_FORMATS), show_default=True, help='Report format (repeatable)')
@MAX_REFINE_OPTION
@click.option('--cache-dir', default=None, help='Result cache directory (overrides config and environment)')
@click.option('--no-cache', is_flag=True, help='Recompute every frame')
def report(problem_path: str, out: str, formats: Tuple[str, ...], max_refine: Optional[int],
           cache_dir: Optional[str], no_cache: bool):
    """Run the ladder and write every requested report format.

    \b
    Examples:
      stable-conley report -p problems/saddle.ini -o reports
    """
    spec = _load(problem_path)
    try:
        result = run_ladder(spec, workers=config_manager.get_workers(), cache=_cache(cache_dir, no_cache),
                            progress=config_manager.get_progress_enabled(), settings=_settings(spec, max_refine))
        themed_header(f"Reports: {spec.name}", out)
        _emit(result, out, formats)
    except (StableConleyError, ValueError, IOError) as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_PIPELINE)
    if result.cache_hits:
        themed_print(f"{result.cache_hits} frame(s) served from the cache", "info")


# ══════════════════════════════════════════════════════════════════════════════
# Settings and cache
# ══════════════════════════════════════════════════════════════════════════════

@cli.group()
def config():
    """View and manage user configuration settings."""
    pass


@config.command('show')
def config_show():
    """Display current configuration."""
    click.echo(config_manager.show_config())


@config.command('set')
@click.argument('section')
@click.argument('key')
@click.argument('value')
def config_set(section: str, key: str, value: str):
    """Set a configuration value.

    \b
    Examples:
      stable-conley config set engine workers 8
      stable-conley config set cache directory ~/scratch/conley
      stable-conley config set display theme green
    """
    try:
        config_manager.set_value(section, key, value)
    except ValueError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(f"✓ Set [{section}] {key} = {value}")


@config.command('reset')
@click.confirmation_option(prompt='Reset all settings to defaults?')
def config_reset():
    """Reset all configuration to defaults."""
    config_manager.reset_config()
    click.echo("✓ Configuration reset to defaults.")


@cli.group()
def cache():
    """Inspect or clear the per-frame result cache."""
    pass


@cache.command('info')
@click.option('--cache-dir', default=None, help='Cache directory (overrides config and environment)')
def cache_info(cache_dir: Optional[str]):
    """Show the cache location and size."""
    stats = ResultCache(config_manager.get_cache_dir(cache_dir)).get_stats()
    themed_header("Result cache")
    click.echo(f"Directory : {stats['directory']}")
    click.echo(f"Entries   : {stats['entries']}")
    click.echo(f"Size      : {stats['bytes'] / 1024:.1f} KiB")
    click.echo(f"Enabled   : {config_manager.get_cache_enabled()}")


@cache.command('clear')
@click.option('--cache-dir', default=None, help='Cache directory (overrides config and environment)')
@click.confirmation_option(prompt='Delete every cached result?')
def cache_clear(cache_dir: Optional[str]):
    """Delete every cached result."""
    removed = ResultCache(config_manager.get_cache_dir(cache_dir)).clear()
    themed_print(f"✓ Removed {removed} cached result(s)", "success")


if __name__ == '__main__':
    cli()
