"""
Utility helpers shared across the stable_conley package.

Functions:
    themed_print      — print a message in the configured console colour
    themed_header     — print a ruled section header with an optional detail
    to_jsonable       — convert numpy scalars/arrays and tuples to JSON types
    canonical_json    — deterministic JSON text used for hashing and reports
    content_hash      — SHA-256 hex digest of the canonical JSON of an object
    format_ranks      — compact "degree:rank" rendering of graded data
"""

import hashlib
import json
import logging
from typing import Any, Dict, Mapping

import click
import numpy as np

from . import config_manager
from .config import DEFAULT_THEME, HEADER_WIDTH, MESSAGE_COLOURS, THEMES

logger = logging.getLogger(__name__)


def _theme_colour() -> str:
    theme = config_manager.get('display', 'theme', fallback=DEFAULT_THEME)
    if theme not in THEMES:
        logger.debug(f"Unknown display theme '{theme}', using {DEFAULT_THEME}")
        return DEFAULT_THEME
    return theme


def themed_print(message: str, kind: str = "info"):
    """
    Echo one console line in the colour of its kind.

    ``info`` and ``header`` lines take the configured theme colour; warnings
    and errors go to stderr so report paths on stdout stay pipeable.
    """
    colour = _theme_colour() if kind in ("info", "header") else MESSAGE_COLOURS.get(kind, _theme_colour())
    click.secho(message, fg=colour, bold=kind == "header", err=kind in ("warning", "error"))


def themed_header(title: str, detail: str = ""):
    rule = "─" * HEADER_WIDTH
    themed_print(rule, "header")
    themed_print(f"  {title}" + (f"  ({detail})" if detail else ""), "header")
    themed_print(rule, "header")


# ── Serialisation ─────────────────────────────────────────────────────────────

def to_jsonable(value: Any) -> Any:
    """
    Recursively convert a value into plain JSON types.

    numpy arrays become nested lists, numpy scalars become Python numbers,
    tuples become lists and mapping keys become strings.

    Args:
        value: Arbitrary nested structure

    Returns:
        Structure made only of dict, list, str, int, float, bool and None
    """
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def canonical_json(value: Any, indent: Any = None) -> str:
    """
    Serialize a value deterministically (sorted keys, shortest float repr).

    Args:
        value: Structure accepted by to_jsonable
        indent: Passed through to json.dumps

    Returns:
        JSON text
    """
    separators = (',', ':') if indent is None else (',', ': ')
    return json.dumps(to_jsonable(value), sort_keys=True, indent=indent,
                      separators=separators, allow_nan=False)


def content_hash(value: Any) -> str:
    """Return the SHA-256 hex digest of the canonical JSON of a value."""
    return hashlib.sha256(canonical_json(value).encode('utf-8')).hexdigest()


def format_ranks(ranks: Dict[Any, Any]) -> str:
    """
    Render graded data as "k:rank" pairs, torsion in brackets.

    Args:
        ranks: Mapping degree -> rank, or degree -> {"rank": r, "torsion": [...]}

    Returns:
        String such as "0:1" or "1:1 2:0[2]"; "-" when empty
    """
    parts = []
    for degree in sorted(ranks, key=int):
        entry = ranks[degree]
        if isinstance(entry, Mapping):
            torsion = entry.get('torsion') or []
            suffix = f"[{','.join(str(t) for t in torsion)}]" if torsion else ''
            parts.append(f"{int(degree)}:{entry.get('rank', 0)}{suffix}")
        else:
            parts.append(f"{int(degree)}:{entry}")
    return ' '.join(parts) if parts else '-'
