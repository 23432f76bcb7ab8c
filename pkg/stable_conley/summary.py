"""
Run statistics and the console summary printed after a run.
"""

from collections import Counter
from typing import Any, Dict, List

from tabulate import tabulate

from .runner import RunReport
from .utils import format_ranks


def analyze_report(report: RunReport) -> Dict[str, Any]:
    """
    Statistics of a run.

    Returns:
        Dictionary with keys:
          - total, admissible, assembled, failed: frame counts
          - status_counts: status -> count
          - stable_classes: number of distinct stable indices among assembled frames
          - largest_commutator, largest_residual: over admissibility-evaluated frames
          - compression_distances: frame -> compression distance
          - cache_hits, elapsed
    """
    frames = report.frames
    classes = Counter(tuple(r.index.entries()) for r in report.assembled)
    return {
        'total': len(frames),
        'admissible': sum(1 for r in frames if r.admissibility.admissible),
        'assembled': len(report.assembled),
        'failed': sum(1 for r in frames if r.status == 'failed'),
        'status_counts': dict(Counter(r.status for r in frames)),
        'stable_classes': len(classes),
        'largest_commutator': max((r.admissibility.commutator for r in frames), default=0.0),
        'largest_residual': max((r.admissibility.residual_upper for r in frames), default=0.0),
        'compression_distances': {r.name: r.admissibility.compression_distance for r in frames},
        'cache_hits': report.cache_hits,
        'elapsed': report.elapsed,
    }


def _bar_chart(data: Dict[str, float], title: str, width: int = 40) -> List[str]:
    if not data:
        return []
    lines = [f"\n--- {title} ---"]
    top = max(data.values()) or 1.0
    for key, value in data.items():
        lines.append(f"  {str(key):<12} {'█' * int(value * width / top)} {value:.3g}")
    return lines


def frame_table(report: RunReport) -> str:
    rows = []
    for r in report.frames:
        rows.append([
            r.name, r.kind, r.dim, r.status,
            r.index.shift if r.index is not None else '-',
            format_ranks({k: {'rank': rk, 'torsion': t} for k, rk, t in r.index.entries()}) if r.index else '-',
            f"{r.p1_cubes}/{r.p0_cubes}" if r.p1_cubes is not None else '-',
            f"{r.admissibility.commutator:.3g}",
            f"{r.admissibility.residual_upper:.3g}",
        ])
    return tabulate(rows, headers=['Frame', 'Kind', 'Dim', 'Status', 'Shift', 'Stable index', 'P1/P0',
                                   'Commutator', 'Residual'], tablefmt='simple')


def equality_table(report: RunReport) -> str:
    names, matrix = report.equality_matrix()
    if not names:
        return 'No assembled frames.'
    rows = [[name] + ['=' if v else 'x' for v in row] for name, row in zip(names, matrix)]
    return tabulate(rows, headers=[''] + names, tablefmt='simple')


def format_summary(report: RunReport) -> str:
    """Human-readable summary of a ladder run or a sweep."""
    lines = ['=' * 60, f"  RUN SUMMARY: {report.problem}", '=' * 60]
    if report.frames:
        stats = analyze_report(report)
        lines.append(f"\nFrames attempted   : {stats['total']}")
        lines.append(f"Admissible         : {stats['admissible']}")
        lines.append(f"Assembled          : {stats['assembled']}")
        lines.append(f"Stable classes     : {stats['stable_classes']}")
        lines.append(f"Largest commutator : {stats['largest_commutator']:.4g}")
        lines.append(f"Largest residual   : {stats['largest_residual']:.4g}")
        lines.append(f"Cache hits         : {stats['cache_hits']}")
        lines.append('\n' + frame_table(report))
        lines.append('\n--- Stable equality ---')
        lines.append(equality_table(report))
        lines.extend(_bar_chart(stats['compression_distances'], 'Compression distance'))
        for r in report.frames:
            if r.reasons:
                lines.append(f"  {r.name}: {'; '.join(r.reasons)}")

    sweep = report.sweep
    if sweep is not None:
        lines.append(f"\nSweep on frame {sweep.frame}, pseudometric {sweep.pseudometric:.4g}")
        rows = [[s.step, f"{s.s:.4g}", 'yes' if s.isolated else 'NO', s.invariant_cubes, s.refinements]
                for s in sweep.steps]
        lines.append(tabulate(rows, headers=['Step', 's', 'Isolated', 'Inv. cubes', 'Refinements'],
                              tablefmt='simple'))
        if sweep.broken:
            lo, hi = sweep.bracket
            lines.append(f"\nIsolation lost at step {sweep.break_step}: crossing in ({lo:.4g}, {hi:.4g}]")
        else:
            lines.append(f"\nEnd indices equal: {sweep.ends_equal}")
    lines.append(f"\nElapsed: {report.elapsed:.2f}s")
    lines.append('=' * 60)
    return '\n'.join(lines)
