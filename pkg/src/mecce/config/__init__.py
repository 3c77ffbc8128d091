"""
Configuration settings for mecce simulations.

This module provides centralized configuration constants for solver limits,
numerical guards, parallel execution, and desk-scale model presets.
"""

from .settings import (
    CSV_FLOAT_FORMAT,
    DENSE_SUPEROPERATOR_LIMIT,
    DIVISION_EPSILON,
    EXACT_MAX_SPINS,
    GRID_CHUNK_POINTS,
    MAX_CLUSTER_ORDER,
    MECCE_LOG_LEVEL,
    MECCE_MAX_WORKERS,
    MECCE_OUTPUT_DIR,
    MODEL_PRESETS,
    PROPAGATOR_CACHE_SIZE,
    TWO_PI,
    UNPROJECTED_MAX_SPINS,
)

__all__ = [
    "CSV_FLOAT_FORMAT",
    "DENSE_SUPEROPERATOR_LIMIT",
    "DIVISION_EPSILON",
    "EXACT_MAX_SPINS",
    "GRID_CHUNK_POINTS",
    "MAX_CLUSTER_ORDER",
    "MECCE_LOG_LEVEL",
    "MECCE_MAX_WORKERS",
    "MECCE_OUTPUT_DIR",
    "MODEL_PRESETS",
    "PROPAGATOR_CACHE_SIZE",
    "TWO_PI",
    "UNPROJECTED_MAX_SPINS",
]
