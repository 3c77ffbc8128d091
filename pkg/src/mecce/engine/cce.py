"""
Master-equation cluster-correlation expansion.

The total coherence factorizes into irreducible cluster contributions,

    L(t) = prod_C L~_C(t),   L~_C(t) = L_C(t) / prod_{C' proper subset of C} L~_C'(t),

where L_C is the coherence of the central spin coupled to cluster C alone,
obtained from the projected master equation. Truncating at a maximum cluster
size gives the expansion order. This module enumerates clusters, evaluates
them (optionally in a process pool), assembles the product, and provides the
convergence, factorization and T2 diagnostics.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Literal

import networkx as nx
import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from mecce.config.settings import (
    DENSE_SUPEROPERATOR_LIMIT,
    DIVISION_EPSILON,
    GRID_CHUNK_POINTS,
    MAX_CLUSTER_ORDER,
    MECCE_LOG_LEVEL,
    MECCE_MAX_WORKERS,
)
from mecce.engine.lindblad import (
    ClusterPropagator,
    dissipation_frobenius,
    project_hamiltonians,
)
from mecce.model.system import PulseSchedule, SystemSpec

logger = logging.getLogger(__name__)

NeighborMode = Literal["graph-edges", "distance-cutoff", "magnitude-cutoff"]


class ClusterEvaluationError(RuntimeError):
    """A cluster failed during Hamiltonian projection, generator assembly or propagation."""

    def __init__(self, label: str, stage: str, message: str):
        super().__init__(label, stage, message)
        self.label = label
        self.stage = stage
        self.message = message

    def __str__(self) -> str:
        return f"cluster {self.label} failed during {self.stage}: {self.message}"


@dataclass(frozen=True)
class Cluster:
    """Nonempty set of bath spins, stored as strictly increasing indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        if not indices:
            raise ValueError("a cluster needs at least one spin")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"cluster indices must be strictly increasing, got {indices}")
        object.__setattr__(self, "indices", indices)

    @classmethod
    def of(cls, indices: Iterable[int]) -> Cluster:
        return cls(tuple(sorted(indices)))

    @property
    def order(self) -> int:
        return len(self.indices)

    @property
    def label(self) -> str:
        return "-".join(str(i) for i in self.indices)

    @property
    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (self.order, self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class NeighborRule:
    """
    Adjacency policy for cluster connectivity.

    ``graph-edges`` uses the coupling graph as is, ``distance-cutoff`` connects
    spins closer than ``value`` (requires positions), and ``magnitude-cutoff``
    keeps coupling-graph edges with |J| >= ``value``.
    """

    mode: NeighborMode = "graph-edges"
    value: float | None = None

    def __post_init__(self):
        if self.mode not in ("graph-edges", "distance-cutoff", "magnitude-cutoff"):
            raise ValueError(f"unknown neighbor rule '{self.mode}'")
        if self.mode == "distance-cutoff" and (self.value is None or self.value <= 0):
            raise ValueError("distance-cutoff rule needs a positive radius")
        if self.mode == "magnitude-cutoff" and (self.value is None or self.value < 0):
            raise ValueError("magnitude-cutoff rule needs a non-negative J_min")

    def graph(self, spec: SystemSpec) -> nx.Graph:
        """Undirected neighbor graph on the bath indices."""
        graph = nx.Graph()
        graph.add_nodes_from(range(spec.n_spins))
        if self.mode == "graph-edges":
            graph.add_edges_from((i, j) for i, j, _ in spec.graph.edges)
        elif self.mode == "magnitude-cutoff":
            graph.add_edges_from(
                (i, j) for i, j, coupling in spec.graph.edges if abs(coupling) >= self.value
            )
        else:
            positions = spec.positions
            if positions is None:
                if spec.n_spins == 0:
                    return graph
                raise ValueError("distance-cutoff rule needs bath spin positions")
            graph.add_edges_from(cKDTree(positions).query_pairs(self.value))
        return graph


def enumerate_clusters(
    spec: SystemSpec, rule: NeighborRule | None = None, max_order: int = 2
) -> list[Cluster]:
    """
    All connected clusters of the neighbor graph up to ``max_order`` spins.

    Clusters grow levelwise: each connected set of size k is extended by every
    neighbor of its members. The result is sorted by (order, indices).

    Raises:
        ValueError: If max_order is below 1 or above MAX_CLUSTER_ORDER
    """
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if max_order > MAX_CLUSTER_ORDER:
        raise ValueError(f"max_order {max_order} exceeds the hard cap {MAX_CLUSTER_ORDER}")
    graph = (rule or NeighborRule()).graph(spec)

    levels = [{frozenset((v,)) for v in graph}]
    for _ in range(1, max_order):
        grown = set()
        for members in levels[-1]:
            for v in members:
                for u in graph.neighbors(v):
                    if u not in members:
                        grown.add(members | {u})
        if not grown:
            break
        levels.append(grown)

    clusters = [Cluster.of(members) for level in levels for members in level]
    clusters.sort(key=lambda c: c.sort_key)
    return clusters


@dataclass
class CoherenceCurve:
    """Complex coherence values on a time grid with run metadata."""

    time: np.ndarray
    values: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.time.shape != self.values.shape:
            raise ValueError(
                f"time grid {self.time.shape} and values {self.values.shape} differ in shape"
            )

    def __len__(self) -> int:
        return len(self.time)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def max_deviation(self, other: CoherenceCurve) -> float:
        """max_t |L(t) - L'(t)| on a shared time grid."""
        if not np.array_equal(self.time, other.time):
            raise ValueError("curves are sampled on different time grids")
        if len(self) == 0:
            return 0.0
        return float(np.max(np.abs(self.values - other.values)))

    def to_frame(self) -> pd.DataFrame:
        """Columns t, re, im, abs."""
        return pd.DataFrame(
            {
                "t": self.time,
                "re": self.values.real,
                "im": self.values.imag,
                "abs": self.magnitude,
            }
        )


class ContributionTable:
    """
    Cluster coherences L_C and, after assembly, irreducible contributions L~_C.

    When built with the neighbor graph, assembly checks that every connected
    proper subcluster of a key is itself a key.
    """

    def __init__(self, time_grid: Sequence[float], graph: nx.Graph | None = None):
        self.time_grid = np.asarray(time_grid, dtype=float)
        self.graph = graph
        self.coherence: dict[Cluster, np.ndarray] = {}
        self.irreducible: dict[Cluster, np.ndarray] = {}
        self.guard_hits = 0

    def add(self, cluster: Cluster, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=complex)
        if values.shape != self.time_grid.shape:
            raise ValueError(
                f"cluster {cluster.label}: {values.shape} values "
                f"for a grid of {self.time_grid.shape}"
            )
        self.coherence[cluster] = values

    def __contains__(self, cluster: Cluster) -> bool:
        return cluster in self.coherence

    def __getitem__(self, cluster: Cluster) -> np.ndarray:
        return self.coherence[cluster]

    def __len__(self) -> int:
        return len(self.coherence)

    def clusters(self, max_order: int | None = None) -> list[Cluster]:
        """Keys in canonical order, optionally truncated at ``max_order``."""
        keys = sorted(self.coherence, key=lambda c: c.sort_key)
        if max_order is None:
            return keys
        return [c for c in keys if c.order <= max_order]

    def subclusters(self, cluster: Cluster) -> list[Cluster]:
        """Enumerated proper subclusters of ``cluster`` in canonical order."""
        found = []
        for size in range(1, cluster.order):
            for members in combinations(cluster.indices, size):
                candidate = Cluster(members)
                if candidate in self.coherence:
                    found.append(candidate)
                elif size == 1 or (
                    self.graph is not None and nx.is_connected(self.graph.subgraph(members))
                ):
                    raise RuntimeError(
                        f"internal invariant violation: subcluster {candidate.label} of "
                        f"{cluster.label} missing from the contribution table"
                    )
        return found


def assemble(
    table: ContributionTable, max_order: int, epsilon: float = DIVISION_EPSILON
) -> CoherenceCurve:
    """
    Assemble the truncated expansion from a complete contribution table.

    Irreducible contributions are computed by increasing cluster size. Once any
    subcluster contribution drops below ``epsilon`` in magnitude, L~_C is set to
    1 from that time on and the table's guard counter is increased.

    Raises:
        RuntimeError: If a required subcluster entry is missing
    """
    total = np.ones(table.time_grid.shape, dtype=complex)
    hits = 0
    for cluster in table.clusters(max_order):
        subclusters = table.subclusters(cluster)
        contribution = table[cluster].copy()
        if subclusters:
            denominators = np.array([table.irreducible[sub] for sub in subclusters])
            vanishing = np.any(np.abs(denominators) < epsilon, axis=0)
            if vanishing.any():
                first = int(np.argmax(vanishing))
                hits += 1
                logger.debug(
                    f"division guard on cluster {cluster.label} from t={table.time_grid[first]:.6g}"
                )
            else:
                first = len(contribution)
            contribution[:first] = contribution[:first] / np.prod(
                denominators[:, :first], axis=0
            )
            contribution[first:] = 1.0
        table.irreducible[cluster] = contribution
        total *= contribution
    table.guard_hits = hits
    return CoherenceCurve(
        table.time_grid.copy(),
        total,
        {"order": max_order, "n_clusters": len(table.clusters(max_order)), "guard_hits": hits},
    )


def _evaluate_cluster(
    spec: SystemSpec, indices: tuple[int, ...], schedule: PulseSchedule, time_grid: np.ndarray
) -> np.ndarray:
    label = "-".join(str(i) for i in indices)
    try:
        propagator = ClusterPropagator(spec, indices)
    except Exception as exc:
        raise ClusterEvaluationError(label, "generator assembly", str(exc)) from exc
    try:
        return propagator.curve(schedule, time_grid)
    except Exception as exc:
        raise ClusterEvaluationError(label, "propagation", str(exc)) from exc


class MECCESimulator:
    """
    Evaluates cluster contributions and assembles ME-CCE coherence curves.

    With ``max_workers`` above 1 work units are distributed over a process pool.
    A work unit is a cluster over the full time grid, or over a slice of it for
    clusters above the dense limit. Results are always reduced in canonical
    order, so serial and parallel runs agree.
    """

    def __init__(
        self,
        rule: NeighborRule | None = None,
        max_workers: int | None = None,
        epsilon: float = DIVISION_EPSILON,
        logger: logging.Logger | None = None,
    ):
        self.rule = rule or NeighborRule()
        self.max_workers = max(1, max_workers if max_workers is not None else MECCE_MAX_WORKERS)
        self.epsilon = epsilon
        self.logger = logger or self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        """Set up the logger with consistent formatting."""
        logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")
        logger.setLevel(getattr(logging, MECCE_LOG_LEVEL, logging.INFO))

        if logger.handlers:
            return logger

        formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)
        return logger

    def work_units(
        self, clusters: Sequence[Cluster], grid: np.ndarray
    ) -> list[tuple[Cluster, slice]]:
        """
        (cluster, time slice) pairs in canonical order.

        Clusters whose superoperator exceeds DENSE_SUPEROPERATOR_LIMIT are split
        into slices of GRID_CHUNK_POINTS time points; smaller clusters run over
        the whole grid. The split does not depend on the worker count.
        """
        units = []
        for cluster in sorted(clusters, key=lambda c: c.sort_key):
            if 4**cluster.order <= DENSE_SUPEROPERATOR_LIMIT:
                units.append((cluster, slice(0, grid.size)))
                continue
            for start in range(0, max(grid.size, 1), GRID_CHUNK_POINTS):
                stop = min(start + GRID_CHUNK_POINTS, grid.size)
                units.append((cluster, slice(start, stop)))
        return units

    def evaluate(
        self,
        spec: SystemSpec,
        clusters: Sequence[Cluster],
        schedule: PulseSchedule | None = None,
        time_grid: Sequence[float] | None = None,
    ) -> ContributionTable:
        """
        Cluster coherences L_C on the time grid.

        Raises:
            ClusterEvaluationError: Naming the first failing cluster and stage
        """
        schedule = schedule or spec.pulses
        grid = np.asarray(spec.time_grid if time_grid is None else time_grid, dtype=float)
        table = ContributionTable(grid, self.rule.graph(spec))
        units = self.work_units(clusters, grid)

        start = time.perf_counter()
        pieces: dict[Cluster, list[np.ndarray]] = {}
        if self.max_workers == 1 or len(units) < 2:
            for cluster, window in units:
                pieces.setdefault(cluster, []).append(
                    _evaluate_cluster(spec, cluster.indices, schedule, grid[window])
                )
        else:
            with ProcessPoolExecutor(max_workers=self.max_workers) as executor:
                futures = [
                    executor.submit(
                        _evaluate_cluster, spec, cluster.indices, schedule, grid[window]
                    )
                    for cluster, window in units
                ]
                try:
                    for (cluster, _), future in zip(units, futures, strict=True):
                        pieces.setdefault(cluster, []).append(future.result())
                except ClusterEvaluationError:
                    for future in futures:
                        future.cancel()
                    raise
        for cluster, values in pieces.items():
            table.add(cluster, np.concatenate(values))
        self.logger.info(
            f"Evaluated {len(pieces)} clusters in {len(units)} work units with "
            f"{self.max_workers} worker(s) in {time.perf_counter() - start:.2f}s"
        )
        return table

    def table(
        self, spec: SystemSpec, max_order: int, schedule: PulseSchedule | None = None
    ) -> ContributionTable:
        """Enumerate clusters up to ``max_order`` and evaluate them."""
        clusters = enumerate_clusters(spec, self.rule, max_order)
        counts = pd.Series([c.order for c in clusters]).value_counts().sort_index()
        self.logger.info(
            f"Enumerated {len(clusters)} clusters up to order {max_order}: "
            + ", ".join(f"{count} of order {order}" for order, count in counts.items())
        )
        return self.evaluate(spec, clusters, schedule)

    def run(
        self, spec: SystemSpec, max_order: int, schedule: PulseSchedule | None = None
    ) -> CoherenceCurve:
        """Coherence curve of the expansion truncated at ``max_order``."""
        start = time.perf_counter()
        table = self.table(spec, max_order, schedule)
        curve = assemble(table, max_order, self.epsilon)
        if curve.metadata["guard_hits"]:
            self.logger.warning(
                f"Division guard triggered on {curve.metadata['guard_hits']} cluster(s)"
            )
        curve.metadata.update(
            {
                "method": "mecce" if spec.is_dissipative else "cce",
                "seed": spec.metadata.get("seed"),
                "model": spec.metadata.get("model"),
                "wall_time": time.perf_counter() - start,
            }
        )
        return curve


def run_mecce(
    spec: SystemSpec,
    rule: NeighborRule | None = None,
    max_order: int = 2,
    schedule: PulseSchedule | None = None,
    *,
    workers: int = 1,
    epsilon: float = DIVISION_EPSILON,
) -> CoherenceCurve:
    """
    Enumerate, propagate and assemble the ME-CCE coherence of ``spec``.

    Args:
        spec: System description with time grid
        rule: Neighbor rule for cluster connectivity
        max_order: Expansion order
        schedule: Pulse schedule (``spec.pulses`` by default)
        workers: Process pool size (1 runs serially)
        epsilon: Division guard threshold

    Returns:
        CoherenceCurve with metadata order, seed, model, wall_time, n_clusters, guard_hits
    """
    return MECCESimulator(rule, workers, epsilon, logger=logger).run(spec, max_order, schedule)


def factorization_diagnostic(
    spec: SystemSpec,
    rule: NeighborRule | None = None,
    schedule: PulseSchedule | None = None,
    *,
    order: int = 4,
    workers: int = 1,
    epsilon: float = DIVISION_EPSILON,
) -> CoherenceCurve:
    """
    Interplay of coherent and dissipative dynamics, L_MECCE4 - L_MECCE1 * L_CCE4.

    The order-1 dissipative curve comes from the same contribution table as the
    full one; the coherent curve reruns the expansion with every rate set to 0.
    """
    simulator = MECCESimulator(rule, workers, epsilon, logger=logger)
    table = simulator.table(spec, order, schedule)
    full = assemble(table, order, epsilon)
    single = assemble(table, 1, epsilon)
    coherent = simulator.run(spec.coherent(), order, schedule)
    difference = factorization_difference(full, single, coherent)
    difference.metadata.update(
        {"seed": spec.metadata.get("seed"), "model": spec.metadata.get("model")}
    )
    return difference


def factorization_difference(
    full: CoherenceCurve, single: CoherenceCurve, coherent: CoherenceCurve
) -> CoherenceCurve:
    """Pointwise full - single * coherent on a shared grid (complex)."""
    for curve in (single, coherent):
        if not np.array_equal(full.time, curve.time):
            raise ValueError("curves are sampled on different time grids")
    return CoherenceCurve(
        full.time.copy(),
        full.values - single.values * coherent.values,
        {"method": "factorization-diagnostic", "order": full.metadata.get("order")},
    )


@dataclass
class ConvergenceReport:
    """Per-order curves with consecutive-order deviations and short-time norm criteria."""

    orders: list[int]
    curves: list[CoherenceCurve]
    deviations: list[float]
    hamiltonian_norm: float
    dissipation_norm: float
    flags: np.ndarray
    first_violation: float | None

    @property
    def time(self) -> np.ndarray:
        return self.curves[0].time

    @property
    def hamiltonian_criterion(self) -> float:
        """max ||H^(a)||_F * t at the final time."""
        return self.hamiltonian_norm * float(self.time[-1])

    @property
    def dissipation_criterion(self) -> float:
        """max g ||L^dag L||_F * t at the final time."""
        return self.dissipation_norm * float(self.time[-1])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"t": self.time, "beyond_fast_convergence": self.flags})
        for order, curve in zip(self.orders, self.curves, strict=True):
            frame[f"abs_order_{order}"] = curve.magnitude
        return frame


def convergence_report(
    spec: SystemSpec,
    rule: NeighborRule | None = None,
    orders: Sequence[int] = (1, 2),
    schedule: PulseSchedule | None = None,
    *,
    workers: int = 1,
    epsilon: float = DIVISION_EPSILON,
) -> ConvergenceReport:
    """
    Convergence of the expansion over a list of orders.

    All orders share one contribution table evaluated at the largest order. The
    Frobenius criteria max ||H^(a)_C||_F t and max g ||L^dag L||_F t run over the
    enumerated clusters; times where either exceeds 1 are flagged as beyond the
    regime of guaranteed fast convergence.
    """
    orders = [int(k) for k in orders]
    if not orders:
        raise ValueError("convergence report needs at least one order")
    if any(b < a for a, b in zip(orders, orders[1:])):
        raise ValueError(f"orders must be ascending, got {orders}")

    rule = rule or NeighborRule()
    simulator = MECCESimulator(rule, workers, epsilon, logger=logger)
    table = simulator.table(spec, orders[-1], schedule)
    return convergence_from_table(spec, table, orders, epsilon)


def criterion_norms(spec: SystemSpec, clusters: Iterable[Cluster]) -> tuple[float, float]:
    """max ||H^(a)_C||_F and max g ||L^dag L||_F over the given clusters."""
    hamiltonian_norm = 0.0
    dissipation_norm = 0.0
    for cluster in clusters:
        hamiltonian_norm = max(hamiltonian_norm, project_hamiltonians(spec, cluster).frobenius())
        dissipation_norm = max(dissipation_norm, dissipation_frobenius(spec.jumps, cluster))
    return hamiltonian_norm, dissipation_norm


def convergence_window(
    spec: SystemSpec, table: ContributionTable, max_order: int | None = None
) -> float:
    """Largest time at which both Frobenius criteria stay <= 1 over clusters up to ``max_order``."""
    norms = criterion_norms(spec, table.clusters(max_order))
    bounds = [1.0 / norm for norm in norms if norm > 0]
    return min(bounds, default=math.inf)


def convergence_from_table(
    spec: SystemSpec,
    table: ContributionTable,
    orders: Sequence[int],
    epsilon: float = DIVISION_EPSILON,
) -> ConvergenceReport:
    """Convergence report from an evaluated table covering the largest order."""
    orders = [int(k) for k in orders]
    curves = [assemble(table, order, epsilon) for order in orders]
    deviations = [a.max_deviation(b) for a, b in zip(curves, curves[1:])]

    hamiltonian_norm, dissipation_norm = criterion_norms(spec, table.clusters())
    grid = table.time_grid
    flags = (hamiltonian_norm * grid > 1.0) | (dissipation_norm * grid > 1.0)
    first = float(grid[np.argmax(flags)]) if flags.any() else None
    if first is not None:
        logger.info(f"Norm criteria exceed 1 from t={first:.6g}")
    return ConvergenceReport(
        orders, curves, deviations, hamiltonian_norm, dissipation_norm, flags, first
    )


def extract_t2(curve: CoherenceCurve) -> float | None:
    """
    First time |L(t)| falls below |L(t0)| / e, linearly interpolated.

    Returns:
        T2, or None if the curve never crosses the threshold

    Raises:
        ValueError: On an empty curve
    """
    if len(curve) == 0:
        raise ValueError("cannot extract T2 from an empty curve")
    magnitude = curve.magnitude
    threshold = magnitude[0] / math.e
    below = np.flatnonzero(magnitude < threshold)
    if below.size == 0:
        return None
    k = int(below[0])
    t0, t1 = curve.time[k - 1], curve.time[k]
    m0, m1 = magnitude[k - 1], magnitude[k]
    return float(t0 + (threshold - m0) * (t1 - t0) / (m1 - m0))
