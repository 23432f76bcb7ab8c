"""
User preferences stored in an INI file.

Problem files carry the numerics of a run; this file only holds machine-level
settings such as the worker count, the cache location and the console theme.
"""

import configparser
import logging
from pathlib import Path
from typing import Any, Optional

from .config import DEFAULT_CACHE_DIR, DEFAULT_THEME, cache_dir_from_env

logger = logging.getLogger(__name__)

CONFIG_FILE = Path.home() / '.stable_conley.ini'

DEFAULTS = {
    'engine': {
        'workers': '4',
    },
    'cache': {
        'enabled': 'true',
        'directory': '',
    },
    'display': {
        'theme': DEFAULT_THEME,  # one of config.THEMES
        'progress': 'true',
    },
}


def _defaults() -> configparser.RawConfigParser:
    parser = configparser.RawConfigParser()
    parser.read_dict(DEFAULTS)
    return parser


def load_config() -> configparser.RawConfigParser:
    """
    Read the settings file over the defaults.

    Unknown sections in the file are kept so that `show_config` can list them,
    but only keys from DEFAULTS are ever consulted.
    """
    parser = _defaults()
    if not CONFIG_FILE.exists():
        return parser
    try:
        parser.read(CONFIG_FILE, encoding='utf-8')
    except configparser.Error as e:
        logger.warning(f'Ignoring unreadable config file {CONFIG_FILE}: {e}')
        return _defaults()
    return parser


def save_config(parser: configparser.RawConfigParser) -> None:
    try:
        CONFIG_FILE.parent.mkdir(parents=True, exist_ok=True)
        with open(CONFIG_FILE, 'w', encoding='utf-8') as f:
            parser.write(f)
    except OSError as e:
        logger.error(f'Could not write {CONFIG_FILE}: {e}')


def get(section: str, key: str, fallback: Any = None) -> str:
    """Current value of `section.key` as a string, or `fallback`."""
    return load_config().get(section, key, fallback=fallback)


def set_value(section: str, key: str, value: str) -> None:
    """
    Set and persist a single config value.

    Args:
        section: Config section name
        key: Key within section
        value: New value

    Raises:
        ValueError: If the section or key is unknown
    """
    if section not in DEFAULTS or key not in DEFAULTS[section]:
        known = ', '.join(f'{s}.{k}' for s, keys in DEFAULTS.items() for k in keys)
        raise ValueError(f"Unknown setting '{section}.{key}'. Known settings: {known}")
    parser = load_config()
    parser.set(section, key, str(value))
    save_config(parser)


def reset_config() -> None:
    """Drop the settings file so every value falls back to DEFAULTS."""
    if CONFIG_FILE.exists():
        CONFIG_FILE.unlink()
        logger.info(f'Removed {CONFIG_FILE}')


def show_config() -> str:
    """Settings as INI-like text, with untouched values marked `(default)`."""
    parser = load_config()
    lines = [f'Config file: {CONFIG_FILE}', '=' * 50]
    for section in parser.sections():
        lines.append(f'\n[{section}]')
        for key, val in parser.items(section):
            mark = '  (default)' if DEFAULTS.get(section, {}).get(key) == val else ''
            lines.append(f'  {key} = {val}{mark}')
    lines.append(f'\nResolved cache directory: {get_cache_dir()}')
    return '\n'.join(lines)


def get_workers() -> int:
    """Get the number of concurrent frame pipelines."""
    try:
        return max(1, int(get('engine', 'workers', fallback='4')))
    except (ValueError, TypeError):
        return 4


def get_cache_enabled() -> bool:
    """Whether per-frame results are cached by default."""
    return str(get('cache', 'enabled', fallback='true')).strip().lower() in ('1', 'true', 'yes', 'on')


def get_progress_enabled() -> bool:
    """Whether progress bars are shown."""
    return str(get('display', 'progress', fallback='true')).strip().lower() in ('1', 'true', 'yes', 'on')


def get_cache_dir(override: Optional[str] = None) -> Path:
    """
    Resolve the cache directory.

    Precedence: explicit override, environment variable, config file, default.
    """
    if override:
        return Path(override).expanduser()
    from_env = cache_dir_from_env()
    if from_env is not None:
        return from_env
    configured = get('cache', 'directory', fallback='')
    if configured:
        return Path(configured).expanduser()
    return DEFAULT_CACHE_DIR
