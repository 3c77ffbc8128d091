"""
Configuration settings for mecce central spin decoherence simulations.

This module provides centralized configuration for solver limits, numerical
guards, parallel execution, output formatting, and the desk-scale model presets
used by the shipped configs and the verification suite. Environment-dependent
settings are loaded from environment variables.
"""

import math
import os
from pathlib import Path

# Load environment variables if available
try:
    from dotenv import load_dotenv

    load_dotenv()
except ImportError:
    pass

TWO_PI = 2.0 * math.pi

# Hard cap on cluster size; superoperators grow as 4**order
MAX_CLUSTER_ORDER = 8

# Largest bath handled by the projected exact oracle
EXACT_MAX_SPINS = 12

# Largest bath handled by the unprojected oracle (central spin adds one more)
UNPROJECTED_MAX_SPINS = 10

# Cluster contributions are frozen to 1 once a subcluster contribution drops below this
DIVISION_EPSILON = 1e-10

# Superoperators up to this dimension are exponentiated densely (4**5 = 1024)
DENSE_SUPEROPERATOR_LIMIT = 1024

# Dense propagators kept per generator (least recently used are evicted)
PROPAGATOR_CACHE_SIZE = 16

# Time points per work unit for clusters above the dense limit
GRID_CHUNK_POINTS = 16

# Full double precision in every CSV numeric field
CSV_FLOAT_FORMAT = "%.17g"

# Desk-scale regimes; frequencies in ordinary units (multiplied by 2*pi on ingestion),
# rates gamma in 1/time as given
MODEL_PRESETS = {
    "chain_fid": {
        "kind": "chain",
        "n": 8,
        "j_max": 0.1,  # J_ij in [0, 0.1 * 2pi]
        "a_max": 2.0,  # a_i in [0, 2 * 2pi]
        "initial": "neel",
        "gamma": 0.01,
        "time_grid": {"start": 0.0, "stop": 40.0, "num": 81},
        "pulses": {"p": 0, "timing": "cpmg"},
        "orders": [1, 2, 3, 4, 5],
    },
    "chain_pulses": {
        "kind": "chain",
        "n": 200,
        "j_max": 0.1,
        "a_max": 2.0,
        "initial": "neel",
        "gamma": 0.01,
        "time_grid": {"start": 0.0, "stop": 40.0, "num": 81},
        "pulses": {"p": 1, "timing": "cpmg"},
        "orders": [2, 3],
    },
    "lattice_echo": {
        "kind": "lattice2d",
        "side": 6,
        "j": 4.0,  # uniform J_ij = 4 * 2pi
        "a_max": 2.0,
        "initial": "random-pure",
        "gamma": TWO_PI,  # a_max / 2 in angular units; rates are never rescaled
        "time_grid": {"start": 0.0, "stop": 2.0, "num": 81},
        "pulses": {"p": 1, "timing": "cpmg"},
        "orders": [1, 2, 3, 4],
    },
    "nv_surface": {
        "kind": "nv-surface",
        "depth": 10.0,  # nm
        "density": 0.001,  # spins / nm^2
        "t1": 100.0,  # microseconds
        "extent": 200.0,  # nm
        "cutoff": 40.0,  # nm, distance neighbor rule
        "time_grid": {"start": 0.0, "stop": 400.0, "num": 81},
        "pulses": {"p": 1, "timing": "cpmg"},
        "orders": [1, 2, 3],
    },
}

# Runtime configuration from environment variables
MECCE_LOG_LEVEL = os.getenv("MECCE_LOG_LEVEL", "INFO")
MECCE_MAX_WORKERS = int(os.getenv("MECCE_MAX_WORKERS", str(os.cpu_count() or 1)))
MECCE_OUTPUT_DIR = Path(os.getenv("MECCE_OUTPUT_DIR", "results"))
