"""
Configuration settings and numerical defaults for stable_conley.
"""

import os
from pathlib import Path
from typing import Optional

# Tolerances
SYMMETRY_TOLERANCE = 1e-12
ORTHONORMAL_TOLERANCE = 1e-12
KERNEL_TOLERANCE = 1e-9
CONTAINMENT_TOLERANCE = 1e-9

# Cubical grid defaults
DEFAULT_SUBDIVISIONS = 64
MIN_SUBDIVISIONS = 8
DEFAULT_MARGIN = 2
DEFAULT_MAX_CELLS = 32768
DEFAULT_MAX_REFINEMENTS = 1
DEFAULT_MAX_ENGINE_DIM = 3
DEFAULT_COLLAR_LAYERS = 4
FIELD_BOX_SCALE = 1.25       # field box half-width relative to the grid box
IMAGE_CHUNK_SIZE = 4096      # cubes integrated per batch
MU_PASSES = 6                # log-norm fixed-point passes per outer-map chunk
MAX_CHUNK_ENTRIES = 2_000_000

# Flow defaults
DEFAULT_FLOW_TOLERANCE = 1e-8
DEFAULT_TAU_FACTOR = 1.0
DEFAULT_TAU_MAX = 1.0
MIN_STEP_FRACTION = 1e-9

# Sampling
GROWTH_SAMPLES = 10_000
RESIDUAL_SAMPLES = 256
SAMPLING_SEED = 0

# Budgets
DEFAULT_COMMUTATOR_BUDGET = 0.1
DEFAULT_RESIDUAL_BUDGET = 0.1
DEFAULT_CONTINUATION_THRESHOLD = 1.0

# Console
THEMES = ['cyan', 'green', 'blue', 'yellow', 'white']
DEFAULT_THEME = 'cyan'
MESSAGE_COLOURS = {'success': 'green', 'warning': 'yellow', 'error': 'red'}
HEADER_WIDTH = 60

METHODS = ['auto', 'engine', 'shortcut']
NEIGHBORHOOD_SHAPES = ['ball', 'box']

# Report settings
REPORT_FORMATS = ['json', 'csv', 'svg']
FORMAT_EXTENSIONS = {
    'json': '.json',
    'csv': '.csv',
    'svg': '.svg',
}
CSV_COLUMNS_VERSION = 1
CSV_COLUMNS = [
    'frame', 'kind', 'dim', 'status', 'admissible', 'kernel_defect',
    'commutator', 'residual_upper', 'residual_lower', 'compression_distance',
    'shift', 'p1_cubes', 'p0_cubes', 'ranks', 'virtual_ranks', 'reasons',
]
SWEEP_COLUMNS = ['step', 's', 'isolated', 'invariant_cubes', 'refinements']
SVG_SIZE = 480
PORTRAIT_SAMPLES = 13       # arrows per axis in phase-portrait slices

# Exit codes
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PIPELINE = 3

# Cache
CACHE_ENV_VAR = 'STABLE_CONLEY_CACHE'
DEFAULT_CACHE_DIR = Path.home() / '.cache' / 'stable_conley'


def cache_dir_from_env() -> Optional[Path]:
    """Return the cache directory named by the environment, if any."""
    value = os.environ.get(CACHE_ENV_VAR, '').strip()
    return Path(value).expanduser() if value else None


def is_power_of_two(value: int) -> bool:
    """True for 1, 2, 4, 8, ..."""
    return value > 0 and (value & (value - 1)) == 0
