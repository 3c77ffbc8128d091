"""
Built-in acceptance suite.

Each check runs a desk-scale instance and compares against a closed form, the
exact oracle, an independent unitary evaluation, or a qualitative ordering.
Tolerances can be overridden per check, which is how the harness is tested
against an injected bad tolerance.
"""

import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mecce.config.settings import DIVISION_EPSILON, MECCE_LOG_LEVEL, TWO_PI
from mecce.engine.cce import (
    CoherenceCurve,
    ContributionTable,
    MECCESimulator,
    NeighborRule,
    assemble,
    convergence_window,
    enumerate_clusters,
    extract_t2,
    factorization_difference,
)
from mecce.engine.exact import exact_coherence, exact_unprojected
from mecce.engine.lindblad import (
    build_generator,
    initial_block,
    plan_segments,
    project_hamiltonians,
    propagate_curve,
    single_spin_analytic,
)
from mecce.model.builders import (
    build_chain,
    build_disjoint_pairs,
    build_lattice2d,
    build_nv_surface,
)
from mecce.model.system import (
    BathSpin,
    BathState,
    CouplingGraph,
    JumpKind,
    JumpSpec,
    PulseSchedule,
    SystemSpec,
    exchange_jumps,
    relaxation_jumps,
)

DEFAULT_TOLERANCES = {
    "analytic": 1e-9,
    "oracle_chain": 1e-6,
    "unitary_limit": 1e-10,
    "echo": 1e-10,
    "factorization_bound": 1e-6,
    "separable": 0.02,
    "disjoint": 1e-8,
    "nv_ordering": 1e-6,
    "nv_convergence": 0.02,
    "physicality": 1e-8,
    "physicality_window": 1e-6,
    "physicality_trace": 1e-10,
    "physicality_cross": 1e-9,
    "collective": 1e-12,
    "collective_chain": 0.02,
}

CHECK_NAMES = (
    "analytic",
    "oracle_chain",
    "unitary_limit",
    "echo",
    "motional_narrowing",
    "factorization_bound",
    "separable",
    "disjoint",
    "nv_ordering",
    "physicality",
    "collective",
)

# Chain regime with couplings J in [0, 0.1 * 2pi] and a in [0, 2 * 2pi]
CHAIN_GRID = np.linspace(0.0, 40.0, 81)
LATTICE_GRID = np.linspace(0.0, 2.0, 41)
NV_GRID = np.linspace(0.0, 400.0, 81)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    runtime: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def unitary_cluster_curve(
    spec: SystemSpec, indices: Sequence[int], schedule: PulseSchedule, grid: np.ndarray
) -> np.ndarray:
    """Cluster coherence Tr[U0 rho U1^dag] / Tr[rho] from two-branch unitaries."""
    branches = project_hamiltonians(spec, indices)
    h0, h1 = branches.h0.toarray(), branches.h1.toarray()
    rho = initial_block(spec, indices)
    values = np.empty(len(grid), dtype=complex)
    for k, t in enumerate(grid):
        left = np.eye(rho.shape[0], dtype=complex)
        right = np.eye(rho.shape[0], dtype=complex)
        for duration, branch in plan_segments(schedule, t):
            a, b = (h0, h1) if branch == "01" else (h1, h0)
            left = scipy.linalg.expm(-1j * a * duration) @ left
            right = scipy.linalg.expm(-1j * b * duration) @ right
        values[k] = np.trace(left @ rho @ right.conj().T) / np.trace(rho)
    return values


def hand_built_pair_generator(a: Sequence[float], coupling: float, jumps) -> np.ndarray:
    """Projected generator of two spins written out with explicit numpy products."""
    iz = np.diag([0.5, -0.5]).astype(complex)
    ip = np.array([[0, 1], [0, 0]], dtype=complex)
    im = ip.T.copy()
    one = np.eye(2, dtype=complex)
    field = a[0] * np.kron(iz, one) + a[1] * np.kron(one, iz)
    bath = 0.5 * coupling * (np.kron(ip, im) + np.kron(im, ip) - 4.0 * np.kron(iz, iz))
    h0, h1 = bath + 0.5 * field, bath - 0.5 * field
    ident = np.eye(4, dtype=complex)
    generator = -1j * np.kron(ident, h0) + 1j * np.kron(h1.T, ident)
    labels = {"+": ip, "-": im}
    for rate, first, second in jumps:
        op = np.kron(labels[first], labels[second])
        number = op.conj().T @ op
        generator += rate * (
            np.kron(op.conj(), op) - 0.5 * np.kron(ident, number) - 0.5 * np.kron(number.T, ident)
        )
    return generator


class VerificationSuite:
    """
    Runs the acceptance checks and reports pass/fail per check.

    Args:
        quick: Fewer seeds per check
        tolerances: Per-check overrides of DEFAULT_TOLERANCES
        max_workers: Process pool size for cluster evaluation
    """

    def __init__(
        self,
        quick: bool = False,
        tolerances: dict[str, float] | None = None,
        max_workers: int = 1,
        logger: logging.Logger | None = None,
    ):
        unknown = set(tolerances or {}) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerance names: {', '.join(sorted(unknown))}")
        self.quick = quick
        self.tolerances = {**DEFAULT_TOLERANCES, **(tolerances or {})}
        self.max_workers = max_workers
        self.logger = logger or self._setup_logger()
        self._observed: list[tuple[str, float, float]] = []

    def _setup_logger(self) -> logging.Logger:
        logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")
        logger.setLevel(getattr(logging, MECCE_LOG_LEVEL, logging.INFO))
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(
                logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
            )
            logger.addHandler(handler)
        return logger

    def _seeds(self, full: int, quick: int) -> list[int]:
        return list(range(quick if self.quick else full))

    def _simulator(self, rule: NeighborRule | None = None) -> MECCESimulator:
        return MECCESimulator(rule, self.max_workers, DIVISION_EPSILON, logger=self.logger)

    def _observe(self, label: str, *curves: CoherenceCurve) -> None:
        """
        Record max |L| of curves for the physicality check.

        Assembled curves carry a ``convergence_window`` and are bounded only up to
        it, with the looser tolerance; propagated and exact curves are bounded
        everywhere.
        """
        for curve in curves:
            magnitude = curve.magnitude
            window = curve.metadata.get("convergence_window")
            if window is None:
                tolerance = self.tolerances["physicality"]
            else:
                magnitude = magnitude[curve.time <= window]
                tolerance = self.tolerances["physicality_window"]
            if magnitude.size:
                self._observed.append((label, float(np.max(magnitude)), tolerance))

    def _assembled(
        self, spec: SystemSpec, table: ContributionTable, order: int
    ) -> CoherenceCurve:
        curve = assemble(table, order)
        curve.metadata["convergence_window"] = convergence_window(spec, table, order)
        return curve

    def _run(
        self, spec: SystemSpec, order: int, rule: NeighborRule | None = None
    ) -> CoherenceCurve:
        return self._assembled(spec, self._simulator(rule).table(spec, order), order)

    def _chain(self, seed: int, **kwargs) -> SystemSpec:
        options = {"gamma": 0.01, "initial": "neel", "time_grid": CHAIN_GRID}
        options.update(kwargs)
        return build_chain(8, 0.1 * TWO_PI, 2.0 * TWO_PI, seed, **options)

    def run(self, names: Sequence[str] | None = None) -> list[CheckResult]:
        """Run the named checks (all by default) in suite order."""
        selected = list(CHECK_NAMES if names is None else names)
        unknown = [name for name in selected if name not in CHECK_NAMES]
        if unknown:
            raise ValueError(f"unknown checks: {', '.join(unknown)}")
        results = []
        for name in CHECK_NAMES:
            if name not in selected:
                continue
            check: Callable[[], tuple[bool, str]] = getattr(self, f"check_{name}")
            start = time.perf_counter()
            try:
                passed, detail = check()
            except Exception as e:
                passed, detail = False, f"raised {type(e).__name__}: {e}"
            result = CheckResult(name, passed, detail, time.perf_counter() - start)
            self.logger.info(f"{result.line()} ({result.runtime:.1f}s)")
            results.append(result)
        return results

    def check_analytic(self) -> tuple[bool, str]:
        a = 1.0
        grid = np.linspace(0.0, 10.0 / a, 201)
        worst = 0.0
        for ratio in (0.0, 0.1, 0.5, 1.0, 5.0):
            gamma = ratio * a
            spec = SystemSpec(
                bath=(BathSpin(0, a),), jumps=relaxation_jumps(1, gamma), time_grid=grid
            )
            curve = propagate_curve(spec, (0,), PulseSchedule())
            worst = max(worst, float(np.max(np.abs(curve - single_spin_analytic(a, gamma, grid)))))
        return worst < self.tolerances["analytic"], f"max |dL| = {worst:.3e}"

    def check_oracle_chain(self) -> tuple[bool, str]:
        seeds = self._seeds(10, 2)
        monotone = 0
        worst_full = 0.0
        for seed in seeds:
            spec = self._chain(seed)
            exact = exact_coherence(spec)
            table = self._simulator().table(spec, spec.n_spins)
            deviations = []
            for order in (1, 2, 3, 4, 5):
                curve = self._assembled(spec, table, order)
                self._observe("oracle_chain", curve)
                deviations.append(curve.max_deviation(exact))
            full = self._assembled(spec, table, spec.n_spins)
            worst_full = max(worst_full, full.max_deviation(exact))
            if all(b <= a + 1e-12 for a, b in zip(deviations, deviations[1:])):
                monotone += 1
        required = math.ceil(0.9 * len(seeds))
        passed = monotone >= required and worst_full < self.tolerances["oracle_chain"]
        return passed, (
            f"nonincreasing deviation for {monotone}/{len(seeds)} seeds, "
            f"full order max |dL| = {worst_full:.3e}"
        )

    def check_unitary_limit(self) -> tuple[bool, str]:
        spec = self._chain(0, gamma=0.0)
        schedule = spec.pulses
        rule = NeighborRule()
        simulator = self._simulator(rule)
        reference = ContributionTable(spec.time_grid, rule.graph(spec))
        for cluster in enumerate_clusters(spec, rule, spec.n_spins):
            reference.add(
                cluster, unitary_cluster_curve(spec, cluster.indices, schedule, spec.time_grid)
            )
        table = simulator.table(spec, spec.n_spins)
        worst = 0.0
        for order in range(1, spec.n_spins + 1):
            expected = assemble(reference, order)
            curve = self._assembled(spec, table, order)
            self._observe("unitary_limit", curve)
            worst = max(worst, curve.max_deviation(expected))
        return worst < self.tolerances["unitary_limit"], f"max |dL| over orders = {worst:.3e}"

    def check_echo(self) -> tuple[bool, str]:
        spec = build_chain(
            6,
            0.0,
            2.0 * TWO_PI,
            3,
            initial="random-pure",
            pulses=PulseSchedule(p=1),
            time_grid=np.linspace(0.0, 10.0, 51),
        )
        curve = self._run(spec, 2)
        exact = exact_coherence(spec)
        self._observe("echo", curve, exact)
        worst = max(
            float(np.max(np.abs(curve.values - 1))),
            float(np.max(np.abs(exact.values - 1))),
        )
        return worst < self.tolerances["echo"], f"max |L - 1| = {worst:.3e}"

    def check_motional_narrowing(self) -> tuple[bool, str]:
        a = 1.0
        free_grid = np.linspace(0.0, 200.0 / a, 4001)

        def free_t2(gamma: float) -> float:
            curve = CoherenceCurve(free_grid, single_spin_analytic(a, gamma, free_grid))
            t2 = extract_t2(curve)
            return math.inf if t2 is None else t2

        echo_grid = np.linspace(0.0, 1000.0 / a, 4001)

        def echo_t2(gamma: float) -> float:
            spec = SystemSpec(
                bath=(BathSpin(0, a),),
                jumps=relaxation_jumps(1, gamma),
                pulses=PulseSchedule(p=1),
                time_grid=echo_grid,
            )
            curve = CoherenceCurve(echo_grid, propagate_curve(spec, (0,)))
            t2 = extract_t2(curve)
            return math.inf if t2 is None else t2

        free = {ratio: free_t2(ratio * a) for ratio in (1.0, 5.0)}
        echo = {ratio: echo_t2(ratio * a) for ratio in (0.01, 1.0, 5.0)}
        passed = free[5.0] > free[1.0] and echo[5.0] > echo[1.0] and echo[0.01] > echo[1.0]
        return passed, (
            f"free T2(a)={free[1.0]:.4g}, T2(5a)={free[5.0]:.4g}; "
            f"echo T2(0.01a)={echo[0.01]:.4g}, T2(a)={echo[1.0]:.4g}, T2(5a)={echo[5.0]:.4g}"
        )

    def _factorization(self, spec: SystemSpec, order: int) -> CoherenceCurve:
        simulator = self._simulator()
        table = simulator.table(spec, order)
        full = self._assembled(spec, table, order)
        single = self._assembled(spec, table, 1)
        coherent = self._run(spec.coherent(), order)
        self._observe("factorization", full, single, coherent)
        return factorization_difference(full, single, coherent)

    def check_factorization_bound(self) -> tuple[bool, str]:
        lowest = math.inf
        seeds = self._seeds(5, 1)
        for seed in seeds:
            spec = build_lattice2d(
                6,
                4.0 * TWO_PI,
                2.0 * TWO_PI,
                seed,
                gamma=TWO_PI,
                pulses=PulseSchedule(p=1),
                time_grid=LATTICE_GRID,
            )
            difference = self._factorization(spec, 4)
            lowest = min(lowest, float(np.min(difference.values.real)))
        tolerance = self.tolerances["factorization_bound"]
        return lowest >= -tolerance, f"min Re dL = {lowest:.3e} over {len(seeds)} seed(s)"

    def check_separable(self) -> tuple[bool, str]:
        largest = 0.0
        seeds = self._seeds(5, 1)
        for seed in seeds:
            spec = self._chain(seed, pulses=PulseSchedule(p=1))
            difference = self._factorization(spec, 4)
            largest = max(largest, float(np.max(np.abs(difference.values))))
        return largest < self.tolerances["separable"], f"max |dL| = {largest:.3e}"

    def check_disjoint(self) -> tuple[bool, str]:
        spec = build_disjoint_pairs(
            3, 1.0 * TWO_PI, 2.0 * TWO_PI, 0, gamma=0.1, time_grid=np.linspace(0.0, 10.0, 51)
        )
        curve = self._run(spec, 2)
        exact = exact_coherence(spec)
        self._observe("disjoint", curve, exact)
        worst = curve.max_deviation(exact)
        return worst < self.tolerances["disjoint"], f"max |dL| = {worst:.3e}"

    def check_nv_ordering(self) -> tuple[bool, str]:
        seeds = self._seeds(10, 2)
        rule = NeighborRule("distance-cutoff", 40.0)
        ordered = 0
        shorter = 0
        worst_convergence = 0.0
        for seed in seeds:
            spec = build_nv_surface(
                10.0, 0.001, 100.0, 200.0, seed, pulses=PulseSchedule(p=1), time_grid=NV_GRID
            )
            simulator = self._simulator(rule)
            table = simulator.table(spec, 3)
            dissipative = {order: self._assembled(spec, table, order) for order in (2, 3)}
            coherent = self._run(spec.coherent(), 3, rule)
            self._observe("nv_ordering", *dissipative.values(), coherent)
            excess = np.max(dissipative[3].magnitude - coherent.magnitude)
            if excess <= self.tolerances["nv_ordering"]:
                ordered += 1
            t2_me, t2_cce = extract_t2(dissipative[3]), extract_t2(coherent)
            if t2_me is not None and (t2_cce is None or t2_me < t2_cce):
                shorter += 1
            worst_convergence = max(
                worst_convergence, dissipative[2].max_deviation(dissipative[3])
            )
        required = math.ceil(0.8 * len(seeds))
        passed = (
            ordered == len(seeds)
            and shorter >= required
            and worst_convergence < self.tolerances["nv_convergence"]
        )
        return passed, (
            f"|L_ME| <= |L_CCE| for {ordered}/{len(seeds)}, T2_ME < T2_CCE for "
            f"{shorter}/{len(seeds)}, order 2 vs 3 max |dL| = {worst_convergence:.3e}"
        )

    def _random_instance(self, n: int, seed: int) -> SystemSpec:
        rng = np.random.default_rng(1000 + seed)
        edges = tuple((i, i + 1, float(rng.uniform(-1.0, 1.0) * TWO_PI)) for i in range(n - 1))
        jumps = relaxation_jumps(n, float(rng.uniform(0.05, 0.5)))
        if n > 1:
            jumps += exchange_jumps([(0, 1)], float(rng.uniform(0.05, 0.5)))
        return SystemSpec(
            bath=tuple(BathSpin(i, float(rng.uniform(0.0, 2.0) * TWO_PI)) for i in range(n)),
            graph=CouplingGraph(edges),
            jumps=jumps,
            initial=BathState.random_product(n, seed, pure=seed % 2 == 0),
            pulses=PulseSchedule(p=seed % 3),
            time_grid=np.linspace(0.0, 2.0, 11),
            metadata={"model": "random", "seed": seed},
        )

    def check_physicality(self) -> tuple[bool, str]:
        trace_error = 0.0
        lowest = math.inf
        cross = 0.0
        sizes = (2, 4) if self.quick else (1, 2, 3, 4, 5, 6)
        for seed, n in enumerate(sizes):
            spec = self._random_instance(n, seed)
            report = exact_unprojected(spec)
            trace_error = max(trace_error, report.max_trace_error)
            lowest = min(lowest, report.min_eigenvalue)
            cross = max(cross, report.curve.max_deviation(exact_coherence(spec)))
            self._observe("physicality", report.curve)
        largest = max((value for _, value, _ in self._observed), default=1.0)
        violations = sorted(
            {label for label, value, tolerance in self._observed if value > 1.0 + tolerance}
        )
        passed = (
            not violations
            and trace_error <= self.tolerances["physicality_trace"]
            and lowest >= -self.tolerances["physicality_trace"]
            and cross <= self.tolerances["physicality_cross"]
        )
        detail = (
            f"max |L| = {largest:.12f} over {len(self._observed)} curve(s), "
            f"max |Tr rho - 1| = {trace_error:.3e}, "
            f"min eigenvalue = {lowest:.3e}, projected vs unprojected = {cross:.3e}"
        )
        if violations:
            detail += f"; |L| > 1 in {', '.join(violations)}"
        return passed, detail

    def check_collective(self) -> tuple[bool, str]:
        a, coupling, rate = (0.7 * TWO_PI, -0.3 * TWO_PI), 0.4 * TWO_PI, 0.25
        spec = SystemSpec(
            bath=(BathSpin(0, a[0]), BathSpin(1, a[1])),
            graph=CouplingGraph(((0, 1, coupling),)),
            jumps=(
                JumpSpec(JumpKind.EXCHANGE_UP, (0, 1), rate),
                JumpSpec(JumpKind.EXCHANGE_DOWN, (0, 1), 2.0 * rate),
            ),
        )
        generator = build_generator(project_hamiltonians(spec, (0, 1)), spec.jumps, (0, 1))
        expected = hand_built_pair_generator(
            a, coupling, [(rate, "-", "+"), (2.0 * rate, "+", "-")]
        )
        generator_error = float(np.max(np.abs(generator.g01.toarray() - expected)))

        chain = build_chain(
            6,
            0.1 * TWO_PI,
            2.0 * TWO_PI,
            0,
            gamma=0.01,
            exchange_rate=0.05,
            time_grid=CHAIN_GRID,
        )
        # Full order for six spins; order 4 is reported for reference
        table = self._simulator().table(chain, chain.n_spins)
        curves = {order: self._assembled(chain, table, order) for order in (4, chain.n_spins)}
        exact = exact_coherence(chain)
        self._observe("collective", *curves.values(), exact)
        chain_error = curves[chain.n_spins].max_deviation(exact)
        truncated_error = curves[4].max_deviation(exact)
        passed = (
            generator_error < self.tolerances["collective"]
            and chain_error < self.tolerances["collective_chain"]
        )
        return passed, (
            f"two-spin generator max |dG| = {generator_error:.3e}, "
            f"6-spin full order vs exact = {chain_error:.3e} (order 4: {truncated_error:.3e})"
        )
