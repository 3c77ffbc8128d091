"""
mecce - central spin decoherence in interacting, dissipative spin baths.

Computes the coherence of a central two-level spin with the master-equation
cluster-correlation expansion and checks it against exact full-bath solutions.

Key components:
    - Spin bath models (random chains, square lattices, NV surface spins)
    - Projected Lindblad propagator with pi-pulse schedules
    - Cluster enumeration and recursive cluster-expansion assembly
    - Exact projected and unprojected master-equation references
    - Config-driven command-line runs, sweeps and an acceptance suite
"""

__version__ = "0.1.0"
__author__ = "Silas Pignotti"

# Package metadata
__description__ = "Master-equation cluster-correlation expansion toolkit"
__license__ = "MIT"
