"""
Report exporter: writes a RunReport as JSON, CSV or SVG.

Every writer is a pure function of the report, so emitting the same report
twice gives byte-identical files.
"""

import logging
import re
from pathlib import Path
from typing import Any, Callable, Dict, List, Union

import numpy as np
import pandas as pd

from .config import CSV_COLUMNS, CSV_COLUMNS_VERSION, FORMAT_EXTENSIONS, REPORT_FORMATS, SVG_SIZE, SWEEP_COLUMNS
from .runner import FrameResult, RunReport
from .utils import canonical_json, format_ranks

logger = logging.getLogger(__name__)

_PAD = 24
_COLOURS = {'p1': '#9ecae1', 'p0': '#fc9272', 'grid': '#dddddd', 'arrow': '#444444'}


def _slug(text: str) -> str:
    text = text.replace('->', ' to ')
    return re.sub(r'[^A-Za-z0-9_.]+', '_', text).strip('_') or 'report'


def _write(path: Path, content: str) -> Path:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(content)
    return path


# ── JSON ──────────────────────────────────────────────────────────────────────

def report_to_json(report: RunReport) -> str:
    data = dict(report.to_dict(), csv_columns_version=CSV_COLUMNS_VERSION)
    return canonical_json(data, indent=2) + '\n'


# ── CSV ───────────────────────────────────────────────────────────────────────

def _frame_row(r: FrameResult) -> Dict[str, Any]:
    a = r.admissibility
    virtual = {}
    if r.index is not None:
        virtual = {k: {'rank': rank, 'torsion': list(t)} for k, rank, t in r.index.entries()}
    ranks = {}
    if r.homology is not None:
        ranks = {k: {'rank': g.rank, 'torsion': list(g.torsion)} for k, g in r.homology.groups.items()}
    return {
        'frame': r.name,
        'kind': r.kind,
        'dim': r.dim,
        'status': r.status,
        'admissible': a.admissible,
        'kernel_defect': a.kernel_defect,
        'commutator': a.commutator,
        'residual_upper': a.residual_upper,
        'residual_lower': a.residual_lower,
        'compression_distance': a.compression_distance,
        'shift': r.index.shift if r.index is not None else '',
        'p1_cubes': '' if r.p1_cubes is None else r.p1_cubes,
        'p0_cubes': '' if r.p0_cubes is None else r.p0_cubes,
        'ranks': format_ranks(ranks) if r.homology is not None else '',
        'virtual_ranks': format_ranks(virtual) if r.index is not None else '',
        'reasons': '; '.join(r.reasons),
    }


def report_to_csv(report: RunReport) -> str:
    """One row per attempted frame, columns CSV_COLUMNS."""
    df = pd.DataFrame([_frame_row(r) for r in report.frames], columns=CSV_COLUMNS)
    return df.to_csv(index=False, lineterminator='\n')


def sweep_to_csv(report: RunReport) -> str:
    """One row per continuation step, columns SWEEP_COLUMNS."""
    steps = report.sweep.steps if report.sweep is not None else []
    df = pd.DataFrame([s.to_dict() for s in steps], columns=SWEEP_COLUMNS)
    return df.to_csv(index=False, lineterminator='\n')


# ── SVG ───────────────────────────────────────────────────────────────────────

def frame_to_svg(r: FrameResult) -> str:
    """
    Phase-portrait slice of a planar frame: P1 cubes shaded blue, the exit
    set P0 shaded red, and arrows of the compressed flow.

    Raises:
        ValueError: If the frame has no planar portrait
    """
    portrait = r.portrait
    if portrait is None:
        raise ValueError(f"Frame {r.name} has no planar portrait")
    shape = np.asarray(portrait['grid']['shape'], dtype=int)
    half = np.asarray(portrait['grid']['half_widths'], dtype=float)
    span = SVG_SIZE - 2 * _PAD
    cell = span / shape

    def to_px(x: float, y: float):
        return _PAD + (x + half[0]) / (2 * half[0]) * span, _PAD + (half[1] - y) / (2 * half[1]) * span

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f'<title>{r.name}: P1 {len(portrait["p1"])} cubes, P0 {len(portrait["p0"])} cubes</title>',
        '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
        f'<path d="M0,0 L6,3 L0,6 z" fill="{_COLOURS["arrow"]}"/></marker></defs>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{span}" height="{span}" fill="none" stroke="{_COLOURS["grid"]}"/>',
    ]
    p0 = {tuple(c) for c in portrait['p0']}
    for layer, cubes in (('p1', [c for c in portrait['p1'] if tuple(c) not in p0]), ('p0', portrait['p0'])):
        for i, j in cubes:
            x = _PAD + i * cell[0]
            y = _PAD + (shape[1] - 1 - j) * cell[1]
            lines.append(f'<rect class="{layer}" x="{x:.2f}" y="{y:.2f}" width="{cell[0]:.2f}" '
                         f'height="{cell[1]:.2f}" fill="{_COLOURS[layer]}"/>')

    arrows = np.asarray(portrait['arrows'], dtype=float).reshape(-1, 4)
    lengths = np.linalg.norm(arrows[:, 2:], axis=1)
    longest = float(lengths.max()) if lengths.size else 0.0
    if longest > 0.0:
        samples = max(int(round(np.sqrt(len(arrows)))), 2)
        scale = 0.8 * (2 * float(half.min()) / (samples - 1)) / longest
        for x, y, u, v in arrows:
            if u == 0.0 and v == 0.0:
                continue
            x0, y0 = to_px(x, y)
            x1, y1 = to_px(x + scale * u, y + scale * v)
            lines.append(f'<line class="flow" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                         f'stroke="{_COLOURS["arrow"]}" marker-end="url(#head)"/>')
    lines.append('</svg>')
    return '\n'.join(lines) + '\n'


# ── Emission ──────────────────────────────────────────────────────────────────

def _emit_json(report: RunReport, out_dir: Path, stem: str) -> List[Path]:
    return [_write(out_dir / f'{stem}{FORMAT_EXTENSIONS["json"]}', report_to_json(report))]


def _emit_csv(report: RunReport, out_dir: Path, stem: str) -> List[Path]:
    written = []
    if report.frames or report.sweep is None:
        written.append(_write(out_dir / f'{stem}{FORMAT_EXTENSIONS["csv"]}', report_to_csv(report)))
    if report.sweep is not None:
        written.append(_write(out_dir / f'{stem}_sweep{FORMAT_EXTENSIONS["csv"]}', sweep_to_csv(report)))
    return written


def _emit_svg(report: RunReport, out_dir: Path, stem: str) -> List[Path]:
    written = []
    for r in report.frames:
        if r.portrait is None:
            logger.warning(f"SVG skipped for frame {r.name}: portraits need an assembled 2-dimensional "
                           f"engine result (dim {r.dim}, status {r.status})")
            continue
        written.append(_write(out_dir / f'{stem}_{_slug(r.name)}{FORMAT_EXTENSIONS["svg"]}', frame_to_svg(r)))
    return written


EMITTERS: Dict[str, Callable[[RunReport, Path, str], List[Path]]] = {
    'json': _emit_json,
    'csv': _emit_csv,
    'svg': _emit_svg,
}


def emit_report(report: RunReport, fmt: str, out_dir: Union[str, Path]) -> List[Path]:
    """
    Write a report in one format.

    Args:
        report: RunReport from run_ladder or continuation_sweep
        fmt: One of REPORT_FORMATS
        out_dir: Output directory (created if missing)

    Returns:
        Paths written (empty when every SVG was skipped)

    Raises:
        ValueError: If the format is not supported
    """
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"Unsupported format '{fmt}'. Choose from: {', '.join(REPORT_FORMATS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = EMITTERS[fmt](report, out, _slug(report.problem))
    logger.info(f"Wrote {len(written)} {fmt} file(s) to {out}")
    return written
