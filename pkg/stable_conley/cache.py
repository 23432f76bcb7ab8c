"""
On-disk cache of per-frame results.

Entries are JSON files named by the content hash of the inputs that produced
them; a changed input gives a new key, so entries never need invalidation.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .utils import canonical_json, content_hash

logger = logging.getLogger(__name__)

CACHE_FORMAT = 1


class ResultCache:
    """JSON result cache with hit/miss counting."""

    def __init__(self, directory: Union[str, Path], enabled: bool = True):
        self.directory = Path(directory).expanduser()
        self.enabled = enabled
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key_for(*parts: Any) -> str:
        return content_hash({'format': CACHE_FORMAT, 'parts': list(parts)})

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f'{key}.json'

    def get(self, key: str) -> Optional[Dict[str, Any]]:
        if not self.enabled:
            return None
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            with open(path, 'r', encoding='utf-8') as f:
                value = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            logger.warning(f"Ignoring unreadable cache entry {path.name}: {e}")
            self.misses += 1
            return None
        self.hits += 1
        logger.info(f"Cache hit {key[:12]}")
        return value

    def put(self, key: str, value: Dict[str, Any]):
        if not self.enabled:
            return
        path = self._path(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix('.tmp')
            with open(tmp, 'w', encoding='utf-8') as f:
                f.write(canonical_json(value))
            os.replace(tmp, path)
        except IOError as e:
            logger.warning(f"Could not write cache entry {path.name}: {e}")

    def clear(self) -> int:
        """Delete every entry; returns how many were removed."""
        removed = 0
        if not self.directory.exists():
            return 0
        for path in self.directory.glob('*/*.json'):
            try:
                path.unlink()
                removed += 1
            except OSError as e:
                logger.warning(f"Could not remove {path}: {e}")
        return removed

    def get_stats(self) -> Dict[str, Any]:
        entries = list(self.directory.glob('*/*.json')) if self.directory.exists() else []
        return {
            'directory': str(self.directory),
            'entries': len(entries),
            'bytes': sum(p.stat().st_size for p in entries),
            'hits': self.hits,
            'misses': self.misses,
        }
