"""
Experiment configuration files.

An experiment is a YAML document with the sections ``model``, ``dissipation``,
``pulses``, ``solver`` and ``output``. Frequencies (couplings a and J, the
magnitude cutoff, the NV dipolar constant) are entered in ordinary units and
multiplied by 2*pi when the SystemSpec is built; rates gamma are taken in 1/time
as written. NV models use nm and microseconds.

Example:
    model:
      kind: chain
      n: 8
      j_max: 0.1
      a_max: 2.0
    dissipation:
      gamma: 0.01
    pulses:
      p: 1
    solver:
      method: both
      orders: [1, 2, 3]
      time_grid: {start: 0.0, stop: 40.0, num: 81}
      seeds: [0, 1]
"""

import hashlib
import json
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from mecce.config.settings import (
    DIVISION_EPSILON,
    MAX_CLUSTER_ORDER,
    MECCE_OUTPUT_DIR,
    TWO_PI,
)
from mecce.engine.cce import NeighborRule
from mecce.model import builders
from mecce.model.system import (
    BathSpin,
    CouplingGraph,
    JumpSpec,
    PulseSchedule,
    SystemSpec,
    exchange_jumps,
)

InitialKind = Literal["neel", "maximally-mixed", "random-pure", "random-basis"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ChainModel(_Section):
    kind: Literal["chain"] = "chain"
    n: int = Field(ge=1)
    j_max: float = Field(ge=0, description="upper bound of J_ij (frequency)")
    a_max: float = Field(ge=0, description="upper bound of a_i (frequency)")
    periodic: bool = False
    initial: InitialKind = "neel"


class LatticeModel(_Section):
    kind: Literal["lattice2d"] = "lattice2d"
    side: int = Field(ge=1)
    j: float = Field(description="uniform nearest-neighbor coupling (frequency)")
    a_max: float = Field(ge=0, description="upper bound of a_i (frequency)")
    periodic: bool = False
    initial: InitialKind = "random-pure"


class NVSurfaceModel(_Section):
    kind: Literal["nv-surface"] = "nv-surface"
    depth: float = Field(ge=0, description="NV depth below the surface (nm)")
    density: float = Field(gt=0, description="surface spin density (1/nm^2)")
    t1: float = Field(gt=0, description="surface spin relaxation time (us)")
    extent: float = Field(default=200.0, gt=0, description="side of the surface patch (nm)")
    field_axis: tuple[float, float, float] | None = None
    dipolar_constant: float | None = Field(
        default=None, gt=0, description="override of D_ee (MHz nm^3)"
    )

    @model_validator(mode="after")
    def _check_axis(self):
        if self.field_axis is not None and not any(self.field_axis):
            raise ValueError("field_axis must be a nonzero vector")
        return self


class JumpEntry(_Section):
    kind: Literal["raise", "lower", "exchange-up", "exchange-down"]
    targets: list[int]
    rate: float = Field(ge=0)


class ExplicitModel(_Section):
    kind: Literal["explicit"] = "explicit"
    a: list[float] = Field(min_length=1, description="central-spin couplings (frequency)")
    edges: list[tuple[int, int, float]] = Field(default_factory=list)
    positions: list[tuple[float, float, float]] | None = None
    jumps: list[JumpEntry] = Field(default_factory=list)
    initial: InitialKind = "maximally-mixed"

    @model_validator(mode="after")
    def _check_sizes(self):
        if self.positions is not None and len(self.positions) != len(self.a):
            raise ValueError(f"{len(self.positions)} positions for {len(self.a)} spins")
        return self


ModelSection = Annotated[
    ChainModel | LatticeModel | NVSurfaceModel | ExplicitModel, Field(discriminator="kind")
]


class DissipationSection(_Section):
    gamma: float | None = Field(default=None, ge=0, description="raise/lower rate per spin")
    t1: float | None = Field(default=None, gt=0, description="sets gamma = 1 / (2 t1)")
    exchange_rate: float = Field(default=0.0, ge=0, description="two-site exchange rate per bond")

    @model_validator(mode="after")
    def _one_rate(self):
        if self.gamma is not None and self.t1 is not None:
            raise ValueError("give either gamma or t1, not both")
        return self

    @property
    def rate(self) -> float | None:
        if self.t1 is not None:
            return 1.0 / (2.0 * self.t1)
        return self.gamma


class PulseSection(_Section):
    p: int = Field(default=0, ge=0)
    timing: Literal["cpmg", "equidistant"] = "cpmg"


class TimeGrid(_Section):
    start: float = Field(default=0.0, ge=0)
    stop: float | None = None
    num: int | None = Field(default=None, ge=1)
    times: list[float] | None = None

    @model_validator(mode="after")
    def _check_grid(self):
        if self.times is not None:
            if self.stop is not None or self.num is not None:
                raise ValueError("give either explicit times or stop/num")
            values = np.asarray(self.times, dtype=float)
        else:
            if self.stop is None or self.num is None:
                raise ValueError("time grid needs stop and num, or explicit times")
            if self.stop <= self.start and self.num > 1:
                raise ValueError("time grid stop must exceed start")
            values = self.values()
        if values.size == 0:
            raise ValueError("time grid must not be empty")
        if values[0] < 0 or np.any(np.diff(values) <= 0):
            raise ValueError("time grid must be non-negative and strictly ascending")
        return self

    def values(self) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        return np.linspace(self.start, self.stop, self.num)


class NeighborSection(_Section):
    mode: Literal["graph-edges", "distance-cutoff", "magnitude-cutoff"] = "graph-edges"
    value: float | None = Field(
        default=None, description="radius (nm) or J_min (frequency) depending on mode"
    )


class SolverSection(_Section):
    method: Literal["mecce", "exact", "both"] = "mecce"
    orders: list[int] = Field(default_factory=lambda: [2], min_length=1)
    neighbor_rule: NeighborSection = Field(default_factory=NeighborSection)
    epsilon: float = Field(default=DIVISION_EPSILON, gt=0)
    time_grid: TimeGrid
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    coherent_baseline: bool = Field(
        default=False, description="also run the expansion with every rate set to 0"
    )
    diagnostics: list[Literal["convergence", "factorization"]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_orders(self):
        for order in self.orders:
            if not 1 <= order <= MAX_CLUSTER_ORDER:
                raise ValueError(f"order {order} outside 1..{MAX_CLUSTER_ORDER}")
        if any(b <= a for a, b in zip(self.orders, self.orders[1:])):
            raise ValueError(f"orders must be strictly ascending, got {self.orders}")
        return self


class OutputSection(_Section):
    directory: str = str(MECCE_OUTPUT_DIR)
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv"], min_length=1)


class ExperimentConfig(_Section):
    """Validated experiment description; builds a SystemSpec per seed."""

    model: ModelSection
    dissipation: DissipationSection = Field(default_factory=DissipationSection)
    pulses: PulseSection = Field(default_factory=PulseSection)
    solver: SolverSection
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_combination(self):
        if self.model.kind == "nv-surface" and self.dissipation.exchange_rate > 0:
            raise ValueError("exchange_rate is not supported for the nv-surface model")
        if self.model.kind == "explicit":
            n = len(self.model.a)
            for i, j, _ in self.model.edges:
                if not (0 <= i < n and 0 <= j < n):
                    raise ValueError(f"edge ({i}, {j}) outside bath of {n} spins")
        return self

    def time_grid(self) -> np.ndarray:
        return self.solver.time_grid.values()

    def schedule(self) -> PulseSchedule:
        return PulseSchedule(p=self.pulses.p, timing=self.pulses.timing)

    def neighbor_rule(self) -> NeighborRule:
        section = self.solver.neighbor_rule
        value = section.value
        if section.mode == "magnitude-cutoff" and value is not None:
            value = value * TWO_PI
        return NeighborRule(section.mode, value)

    def to_system_spec(self, seed: int | None = None) -> SystemSpec:
        """
        Build the SystemSpec of this experiment for one seed.

        Args:
            seed: Seed of the random couplings, positions and initial state
                  (the first configured seed by default)

        Returns:
            SystemSpec in angular units
        """
        seed = self.solver.seeds[0] if seed is None else seed
        model = self.model
        dissipation = self.dissipation
        rate = dissipation.rate
        grid = self.time_grid()
        pulses = self.schedule()

        if model.kind == "chain":
            spec = builders.build_chain(
                model.n,
                model.j_max * TWO_PI,
                model.a_max * TWO_PI,
                seed,
                gamma=rate or 0.0,
                exchange_rate=dissipation.exchange_rate,
                periodic=model.periodic,
                initial=model.initial,
                pulses=pulses,
                time_grid=grid,
            )
        elif model.kind == "lattice2d":
            spec = builders.build_lattice2d(
                model.side,
                model.j * TWO_PI,
                model.a_max * TWO_PI,
                seed,
                gamma=rate or 0.0,
                periodic=model.periodic,
                initial=model.initial,
                pulses=pulses,
                time_grid=grid,
            )
            if dissipation.exchange_rate > 0:
                bonds = [(i, j) for i, j, _ in spec.graph.edges]
                extra_jumps = exchange_jumps(bonds, dissipation.exchange_rate)
                spec = spec.replace(jumps=spec.jumps + extra_jumps)
        elif model.kind == "nv-surface":
            extra = {}
            if model.dipolar_constant is not None:
                extra["dipolar_constant"] = model.dipolar_constant * TWO_PI
            spec = builders.build_nv_surface(
                model.depth,
                model.density,
                model.t1,
                model.extent,
                seed,
                field_axis=None if model.field_axis is None else np.asarray(model.field_axis),
                pulses=pulses,
                time_grid=grid,
                **extra,
            )
            if rate is not None:
                spec = spec.with_rate(rate)
        else:
            n = len(model.a)
            positions = model.positions or [None] * n
            jumps = tuple(JumpSpec(j.kind, tuple(j.targets), j.rate) for j in model.jumps)
            if dissipation.exchange_rate > 0:
                bonds = [(i, j) for i, j, _ in model.edges]
                jumps += exchange_jumps(bonds, dissipation.exchange_rate)
            spec = SystemSpec(
                bath=tuple(BathSpin(i, a * TWO_PI, positions[i]) for i, a in enumerate(model.a)),
                graph=CouplingGraph(tuple((i, j, c * TWO_PI) for i, j, c in model.edges)),
                jumps=jumps,
                initial=builders.initial_state(model.initial, n, seed),
                pulses=pulses,
                time_grid=grid,
                metadata={"model": "explicit", "seed": seed},
            )
            if rate is not None:
                spec = spec.with_rate(rate)
        return spec


def load_config(path: str | Path) -> ExperimentConfig:
    """
    Read and validate an experiment config file.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: On malformed YAML or invalid fields (pydantic ValidationError)
    """
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValueError(f"{path}: malformed YAML: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping with model and solver sections")
    return ExperimentConfig.model_validate(data)


def canonicalize(config: ExperimentConfig) -> dict[str, Any]:
    """Plain, JSON-compatible form with every default filled in."""
    return json.loads(json.dumps(config.model_dump(mode="json"), sort_keys=True))


def dump_config(config: ExperimentConfig) -> str:
    """Canonical YAML text; loading it back gives an equal config."""
    return yaml.safe_dump(canonicalize(config), sort_keys=True)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form."""
    text = json.dumps(canonicalize(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
