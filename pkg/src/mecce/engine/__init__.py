"""
Solvers: projected master-equation propagation, cluster expansion, and exact references.
"""

from .cce import (
    Cluster,
    ClusterEvaluationError,
    CoherenceCurve,
    ContributionTable,
    ConvergenceReport,
    MECCESimulator,
    NeighborRule,
    assemble,
    convergence_from_table,
    convergence_report,
    enumerate_clusters,
    extract_t2,
    factorization_diagnostic,
    factorization_difference,
    run_mecce,
)
from .exact import UnprojectedReport, exact_coherence, exact_unprojected
from .lindblad import (
    BranchHamiltonians,
    ClusterPropagator,
    IllPosedStateError,
    ProjectedGenerator,
    SegmentPlan,
    build_generator,
    plan_segments,
    project_hamiltonians,
    propagate,
    propagate_curve,
    single_spin_analytic,
)

__all__ = [
    "BranchHamiltonians",
    "Cluster",
    "ClusterEvaluationError",
    "ClusterPropagator",
    "CoherenceCurve",
    "ContributionTable",
    "ConvergenceReport",
    "IllPosedStateError",
    "MECCESimulator",
    "NeighborRule",
    "ProjectedGenerator",
    "SegmentPlan",
    "UnprojectedReport",
    "assemble",
    "build_generator",
    "convergence_from_table",
    "convergence_report",
    "enumerate_clusters",
    "exact_coherence",
    "exact_unprojected",
    "extract_t2",
    "factorization_diagnostic",
    "factorization_difference",
    "plan_segments",
    "project_hamiltonians",
    "propagate",
    "propagate_curve",
    "run_mecce",
    "single_spin_analytic",
]
