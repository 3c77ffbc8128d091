"""
Experiment backend for config-driven runs and parameter sweeps.

This module turns a validated ExperimentConfig into solver runs per seed and
writes coherence curves, T2 summary tables, diagnostics and a run manifest to
an output directory.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

import networkx as nx
import numpy as np
import pandas as pd
import scipy

import mecce
from mecce.config.experiment import ExperimentConfig, canonicalize, config_hash
from mecce.config.settings import CSV_FLOAT_FORMAT, MECCE_MAX_WORKERS, MECCE_OUTPUT_DIR
from mecce.engine.cce import (
    CoherenceCurve,
    MECCESimulator,
    assemble,
    convergence_from_table,
    extract_t2,
    factorization_difference,
)
from mecce.engine.exact import exact_coherence

SWEEP_PARAMETERS = ("gamma", "depth", "p", "order")


@dataclass
class RunRecord:
    """Curves, T2 values, diagnostics and timings of one seed."""

    config_hash: str
    seed: int
    curves: dict[str, CoherenceCurve] = field(default_factory=dict)
    t2: dict[str, float | None] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    system: dict[str, Any] = field(default_factory=dict)

    def summary_rows(self) -> list[dict[str, Any]]:
        rows = []
        for label, curve in self.curves.items():
            rows.append(
                {
                    "seed": self.seed,
                    "solver": curve.metadata.get("method", label),
                    "order": curve.metadata.get("order"),
                    "curve": label,
                    "t2": self.t2.get(label),
                    "max_abs": float(np.max(curve.magnitude)) if len(curve) else None,
                    "guard_hits": curve.metadata.get("guard_hits", 0),
                }
            )
        return rows


class ExperimentBackend:
    """
    Runs experiments described by ExperimentConfig and writes their results.

    Args:
        output_dir: Result directory (the config's output directory by default)
        max_workers: Process pool size for cluster evaluation
        log_level: Logging verbosity level (DEBUG, INFO, WARNING, ERROR)
    """

    def __init__(
        self,
        output_dir: Path | None = None,
        max_workers: int | None = None,
        log_level: str = "INFO",
    ):
        self.logger = self._setup_logging(log_level)
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.max_workers = max_workers or MECCE_MAX_WORKERS
        self.logger.debug("Experiment backend initialized")

    def _setup_logging(self, level: str) -> logging.Logger:
        """Configure logging for the backend with console output."""
        logger = logging.getLogger("mecce_backend")
        logger.setLevel(getattr(logging, level.upper()))

        if not logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
            handler.setFormatter(formatter)
            logger.addHandler(handler)

        return logger

    def output_directory(self, config: ExperimentConfig) -> Path:
        directory = self.output_dir or Path(config.output.directory or MECCE_OUTPUT_DIR)
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    def run_seed(self, config: ExperimentConfig, seed: int) -> RunRecord:
        """
        Execute every requested solver for one seed, without writing files.

        Returns:
            RunRecord with curves keyed mecce_order{k}, cce_order{k}, exact

        Raises:
            ClusterEvaluationError: If a cluster fails to propagate
            ValueError: If the model exceeds a solver cap
        """
        record = RunRecord(config_hash(config), seed)
        spec = config.to_system_spec(seed)
        record.system = spec.to_dict()
        schedule = config.schedule()
        orders = config.solver.orders
        solver = config.solver
        simulator = MECCESimulator(
            config.neighbor_rule(), self.max_workers, solver.epsilon, logger=self.logger
        )
        self.logger.info(
            f"Seed {seed}: {spec.n_spins} bath spins, {len(spec.graph)} couplings, "
            f"p={schedule.p} ({schedule.timing})"
        )

        table = None
        if solver.method in ("mecce", "both"):
            start = time.perf_counter()
            table = simulator.table(spec, orders[-1], schedule)
            for order in orders:
                curve = assemble(table, order, solver.epsilon)
                curve.metadata.update({"method": "mecce", "seed": seed})
                record.curves[f"mecce_order{order}"] = curve
            record.timings["mecce"] = time.perf_counter() - start

        coherent_curves = {}
        if solver.method in ("mecce", "both") and (
            solver.coherent_baseline or "factorization" in solver.diagnostics
        ):
            start = time.perf_counter()
            coherent_table = simulator.table(spec.coherent(), orders[-1], schedule)
            for order in orders:
                curve = assemble(coherent_table, order, solver.epsilon)
                curve.metadata.update({"method": "cce", "seed": seed})
                coherent_curves[order] = curve
                if solver.coherent_baseline:
                    record.curves[f"cce_order{order}"] = curve
            record.timings["cce"] = time.perf_counter() - start

        if solver.method in ("exact", "both"):
            start = time.perf_counter()
            exact = exact_coherence(spec, schedule)
            exact.metadata["seed"] = seed
            record.curves["exact"] = exact
            record.timings["exact"] = time.perf_counter() - start

        if table is not None and "exact" in record.curves:
            exact = record.curves["exact"]
            deviation = pd.DataFrame({"t": exact.time})
            record.diagnostics["max_deviation_from_exact"] = {}
            for order in orders:
                curve = record.curves[f"mecce_order{order}"]
                deviation[f"order_{order}"] = np.abs(curve.values - exact.values)
                record.diagnostics["max_deviation_from_exact"][order] = curve.max_deviation(exact)
            record.tables["deviation"] = deviation

        if table is not None and "convergence" in solver.diagnostics:
            report = convergence_from_table(spec, table, orders, solver.epsilon)
            record.diagnostics["convergence"] = {
                "orders": report.orders,
                "deviations": report.deviations,
                "hamiltonian_criterion": report.hamiltonian_criterion,
                "dissipation_criterion": report.dissipation_criterion,
                "first_violation": report.first_violation,
            }
            record.tables["convergence"] = report.to_frame()

        if table is not None and "factorization" in solver.diagnostics:
            order = orders[-1]
            difference = factorization_difference(
                record.curves[f"mecce_order{order}"],
                assemble(table, 1, solver.epsilon),
                coherent_curves[order],
            )
            record.diagnostics["factorization"] = {
                "order": order,
                "min_real": float(np.min(difference.values.real)),
                "max_abs": float(np.max(np.abs(difference.values))),
            }
            record.tables["factorization"] = difference.to_frame()

        for label, curve in record.curves.items():
            record.t2[label] = extract_t2(curve)
        return record

    def run(self, config: ExperimentConfig, seeds: list[int] | None = None) -> list[RunRecord]:
        """
        Run all seeds and write curves, summary table and manifest.

        Args:
            config: Validated experiment configuration
            seeds: Overrides the configured seed list

        Returns:
            One RunRecord per seed
        """
        start_time = time.time()
        directory = self.output_directory(config)
        seeds = list(seeds) if seeds is not None else list(config.solver.seeds)

        self.logger.info(f"Starting {config.model.kind} experiment")
        self.logger.info(f"   Method: {config.solver.method}, orders {config.solver.orders}")
        self.logger.info(f"   Seeds: {seeds}")
        self.logger.info(f"   Output: {directory}")

        records = []
        for seed in seeds:
            record = self.run_seed(config, seed)
            self.write_record(record, config, directory)
            records.append(record)

        self.write_summary(records, directory)
        self.write_manifest(config, records, directory, time.time() - start_time)
        self.logger.info(f"Experiment completed in {time.time() - start_time:.2f}s")
        return records

    def write_curve(self, curve: CoherenceCurve, path: Path, formats: list[str]) -> None:
        frame = curve.to_frame()
        if "csv" in formats:
            frame.to_csv(path.with_suffix(".csv"), index=False, float_format=CSV_FLOAT_FORMAT)
        if "json" in formats:
            frame.to_json(path.with_suffix(".json"), orient="records", double_precision=15)

    def write_record(self, record: RunRecord, config: ExperimentConfig, directory: Path) -> None:
        """One file per (solver, order, seed), diagnostic tables and the realized system."""
        formats = config.output.formats
        for label, curve in record.curves.items():
            self.write_curve(curve, directory / f"{label}_seed{record.seed}", formats)
        for name, frame in record.tables.items():
            frame.to_csv(
                directory / f"{name}_seed{record.seed}.csv",
                index=False,
                float_format=CSV_FLOAT_FORMAT,
            )
        if record.system:
            path = directory / f"system_seed{record.seed}.json"
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self._convert_to_json_serializable(record.system), f, indent=2)

    def write_summary(self, records: list[RunRecord], directory: Path) -> Path:
        """T2 per run as summary.csv."""
        rows = [row for record in records for row in record.summary_rows()]
        columns = ["seed", "solver", "order", "curve", "t2", "max_abs", "guard_hits"]
        summary = pd.DataFrame(rows, columns=columns)
        path = directory / "summary.csv"
        summary.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        return path

    def write_manifest(
        self,
        config: ExperimentConfig,
        records: list[RunRecord],
        directory: Path,
        wall_time: float,
        extra: dict[str, Any] | None = None,
    ) -> Path:
        """Machine-readable manifest with config hash, versions and timings."""
        manifest = {
            "config_hash": config_hash(config),
            "config": canonicalize(config),
            "seeds": [record.seed for record in records],
            "versions": {
                "mecce": mecce.__version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
                "networkx": nx.__version__,
            },
            "timings": {str(record.seed): record.timings for record in records},
            "guard_hits": {
                str(record.seed): {
                    label: curve.metadata.get("guard_hits", 0)
                    for label, curve in record.curves.items()
                }
                for record in records
            },
            "diagnostics": {
                str(record.seed): self._convert_to_json_serializable(record.diagnostics)
                for record in records
            },
            "wall_time": wall_time,
            "created": datetime.now().isoformat(),
            **(extra or {}),
        }
        path = directory / "manifest.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        return path

    def _convert_to_json_serializable(self, obj: Any) -> Any:
        """Convert NumPy types and integer keys to JSON-serializable Python types."""
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, dict):
            return {str(k): self._convert_to_json_serializable(v) for k, v in obj.items()}
        if isinstance(obj, list | tuple):
            return [self._convert_to_json_serializable(item) for item in obj]
        return obj

    def sweep_config(
        self, config: ExperimentConfig, parameter: str, value: float
    ) -> ExperimentConfig:
        """
        Copy of ``config`` with one parameter replaced.

        Raises:
            ValueError: On an unknown parameter or one the model does not have
        """
        if parameter not in SWEEP_PARAMETERS:
            raise ValueError(
                f"unknown sweep parameter '{parameter}'; choose from {', '.join(SWEEP_PARAMETERS)}"
            )
        data = canonicalize(config)
        if parameter == "gamma":
            data["dissipation"]["gamma"] = float(value)
            data["dissipation"]["t1"] = None
        elif parameter == "depth":
            if config.model.kind != "nv-surface":
                raise ValueError("depth sweeps need the nv-surface model")
            data["model"]["depth"] = float(value)
            data["solver"]["coherent_baseline"] = True
        elif parameter == "p":
            data["pulses"]["p"] = int(value)
        else:
            data["solver"]["orders"] = [int(value)]
        return ExperimentConfig.model_validate(data)

    def sweep(
        self,
        config: ExperimentConfig,
        parameter: str,
        values: list[float],
        seeds: list[int] | None = None,
    ) -> pd.DataFrame:
        """
        One run per value; aggregate (value, T2) table plus individual curves.

        Each value writes its curves into a subdirectory ``{parameter}_{value}``.
        Depth sweeps report ME-CCE and CCE (all rates 0) T2 side by side.
        """
        start_time = time.time()
        directory = self.output_directory(config)
        seeds = list(seeds) if seeds is not None else list(config.solver.seeds)
        configs = [self.sweep_config(config, parameter, value) for value in values]
        self.logger.info(f"Sweeping {parameter} over {len(values)} value(s)")

        rows = []
        all_records = []
        for value, swept in zip(values, configs, strict=True):
            subdirectory = directory / f"{parameter}_{value:g}"
            subdirectory.mkdir(parents=True, exist_ok=True)
            records = []
            for seed in seeds:
                record = self.run_seed(swept, seed)
                self.write_record(record, swept, subdirectory)
                records.append(record)
            self.write_summary(records, subdirectory)
            all_records.extend(records)

            top = swept.solver.orders[-1]
            for record in records:
                row = {"value": value, "seed": record.seed}
                if f"mecce_order{top}" in record.curves:
                    row["t2"] = record.t2[f"mecce_order{top}"]
                else:
                    row["t2"] = record.t2.get("exact")
                if f"cce_order{top}" in record.curves:
                    row["t2_cce"] = record.t2[f"cce_order{top}"]
                if "exact" in record.curves:
                    row["t2_exact"] = record.t2["exact"]
                rows.append(row)
            self.logger.info(f"   {parameter}={value:g} done")

        table = pd.DataFrame(rows)
        table.to_csv(
            directory / f"sweep_{parameter}.csv", index=False, float_format=CSV_FLOAT_FORMAT
        )
        self.write_manifest(
            config,
            all_records,
            directory,
            time.time() - start_time,
            extra={"sweep": {"parameter": parameter, "values": list(values)}},
        )
        return table
