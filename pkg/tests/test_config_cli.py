import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from mecce.backend.experiment_backend import ExperimentBackend
from mecce.backend.verification import VerificationSuite
from mecce.cli import EXIT_FAILURE, EXIT_INVALID_CONFIG, EXIT_OK, main
from mecce.config.experiment import (
    ExperimentConfig,
    config_hash,
    dump_config,
    load_config,
)
from mecce.config.settings import MODEL_PRESETS, TWO_PI
from mecce.engine.cce import CoherenceCurve
from mecce.model import SystemSpec

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

TINY_CHAIN = {
    "model": {"kind": "chain", "n": 3, "j_max": 0.1, "a_max": 0.2},
    "dissipation": {"gamma": 0.05},
    "solver": {
        "method": "both",
        "orders": [1, 2],
        "time_grid": {"start": 0.0, "stop": 2.0, "num": 5},
        "diagnostics": ["convergence"],
    },
}


def write_config(path: Path, data: dict) -> Path:
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class TestConfig:
    @pytest.mark.parametrize("name", ["chain_fid", "chain_pulses", "lattice_echo", "nv_surface"])
    def test_shipped_configs_load(self, name):
        config = load_config(CONFIG_DIR / f"{name}.yaml")
        spec = config.to_system_spec()
        assert spec.time_grid.size == 81

    @pytest.mark.parametrize("name", sorted(MODEL_PRESETS))
    def test_shipped_configs_match_presets(self, name):
        preset = MODEL_PRESETS[name]
        config = load_config(CONFIG_DIR / f"{name}.yaml")
        model = config.model.model_dump()
        for key in set(preset) & set(model):
            assert model[key] == preset[key], key
        assert config.solver.orders == preset["orders"]
        assert config.pulses.model_dump() == preset["pulses"]
        assert config.solver.time_grid.model_dump(exclude_none=True) == preset["time_grid"]
        if "gamma" in preset:
            assert config.dissipation.gamma == pytest.approx(preset["gamma"])
        if "cutoff" in preset:
            assert config.solver.neighbor_rule.value == preset["cutoff"]

    def test_chain_config_scales_frequencies(self):
        config = load_config(CONFIG_DIR / "chain_fid.yaml")
        spec = config.to_system_spec(0)
        assert spec.n_spins == 8
        assert np.all(spec.couplings <= 2.0 * TWO_PI)
        assert all(jump.rate == 0.01 for jump in spec.jumps)

    def test_nv_config_uses_distance_rule(self):
        config = load_config(CONFIG_DIR / "nv_surface.yaml")
        rule = config.neighbor_rule()
        assert rule.mode == "distance-cutoff"
        assert rule.value == 40.0
        assert all(jump.rate == pytest.approx(0.005) for jump in config.to_system_spec(0).jumps)

    def test_magnitude_cutoff_is_a_frequency(self):
        data = {**TINY_CHAIN, "solver": {**TINY_CHAIN["solver"]}}
        data["solver"]["neighbor_rule"] = {"mode": "magnitude-cutoff", "value": 0.05}
        rule = ExperimentConfig.model_validate(data).neighbor_rule()
        assert rule.value == pytest.approx(0.05 * TWO_PI)

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig.model_validate({**TINY_CHAIN, "extra": 1})

    def test_orders_must_ascend(self):
        data = {**TINY_CHAIN, "solver": {**TINY_CHAIN["solver"], "orders": [2, 1]}}
        with pytest.raises(ValueError, match="ascending"):
            ExperimentConfig.model_validate(data)

    def test_order_cap(self):
        data = {**TINY_CHAIN, "solver": {**TINY_CHAIN["solver"], "orders": [9]}}
        with pytest.raises(ValueError):
            ExperimentConfig.model_validate(data)

    def test_gamma_or_t1(self):
        data = {**TINY_CHAIN, "dissipation": {"gamma": 0.1, "t1": 5.0}}
        with pytest.raises(ValueError, match="either gamma or t1"):
            ExperimentConfig.model_validate(data)

    def test_t1_sets_rate(self):
        data = {**TINY_CHAIN, "dissipation": {"t1": 5.0}}
        assert ExperimentConfig.model_validate(data).dissipation.rate == pytest.approx(0.1)

    def test_explicit_times(self):
        solver = {**TINY_CHAIN["solver"], "time_grid": {"times": [0.0, 0.5, 2.0]}}
        config = ExperimentConfig.model_validate({**TINY_CHAIN, "solver": solver})
        assert config.time_grid().tolist() == [0.0, 0.5, 2.0]

    def test_time_grid_must_ascend(self):
        solver = {**TINY_CHAIN["solver"], "time_grid": {"times": [0.0, 2.0, 1.0]}}
        with pytest.raises(ValueError, match="ascending"):
            ExperimentConfig.model_validate({**TINY_CHAIN, "solver": solver})

    def test_explicit_model(self):
        data = {
            "model": {
                "kind": "explicit",
                "a": [1.0, 0.5],
                "edges": [[0, 1, 0.2]],
                "jumps": [{"kind": "exchange-up", "targets": [0, 1], "rate": 0.3}],
            },
            "solver": {"time_grid": {"stop": 1.0, "num": 3}},
        }
        spec = ExperimentConfig.model_validate(data).to_system_spec()
        assert spec.couplings.tolist() == pytest.approx([TWO_PI, 0.5 * TWO_PI])
        assert spec.graph.edges[0][2] == pytest.approx(0.2 * TWO_PI)
        assert spec.jumps[0].rate == 0.3

    def test_explicit_edge_outside_bath(self):
        data = {
            "model": {"kind": "explicit", "a": [1.0], "edges": [[0, 1, 0.2]]},
            "solver": {"time_grid": {"stop": 1.0, "num": 3}},
        }
        with pytest.raises(ValueError, match="outside bath"):
            ExperimentConfig.model_validate(data)

    def test_hash_is_stable_under_dump(self):
        config = ExperimentConfig.model_validate(TINY_CHAIN)
        reloaded = ExperimentConfig.model_validate(yaml.safe_load(dump_config(config)))
        assert config_hash(reloaded) == config_hash(config)
        assert len(config_hash(config)) == 64

    def test_hash_sees_changes(self):
        config = ExperimentConfig.model_validate(TINY_CHAIN)
        changed = ExperimentConfig.model_validate({**TINY_CHAIN, "pulses": {"p": 1}})
        assert config_hash(changed) != config_hash(config)


class TestBackend:
    def test_run_writes_results(self, tmp_path):
        config = ExperimentConfig.model_validate(TINY_CHAIN)
        backend = ExperimentBackend(tmp_path, max_workers=1)
        records = backend.run(config)

        assert set(records[0].curves) == {"mecce_order1", "mecce_order2", "exact"}
        frame = pd.read_csv(tmp_path / "mecce_order2_seed0.csv")
        assert list(frame.columns) == ["t", "re", "im", "abs"]
        assert frame["t"].tolist() == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])
        assert (tmp_path / "exact_seed0.csv").exists()
        assert (tmp_path / "deviation_seed0.csv").exists()
        assert (tmp_path / "convergence_seed0.csv").exists()

        summary = pd.read_csv(tmp_path / "summary.csv")
        assert len(summary) == 3
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config_hash"] == config_hash(config)
        assert manifest["seeds"] == [0]

    def test_writes_realized_system(self, tmp_path):
        config = ExperimentConfig.model_validate(TINY_CHAIN)
        backend = ExperimentBackend(tmp_path, max_workers=1)
        record = backend.run_seed(config, 0)
        backend.write_record(record, config, tmp_path)
        data = json.loads((tmp_path / "system_seed0.json").read_text())
        restored = SystemSpec.from_dict(data)
        assert restored.n_spins == 3
        assert np.allclose(restored.couplings, SystemSpec.from_dict(record.system).couplings)
        assert len(restored.jumps) == len(record.system["jumps"]) > 0
        assert np.allclose(restored.time_grid, [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_repeated_runs_write_identical_files(self, tmp_path):
        config = ExperimentConfig.model_validate(TINY_CHAIN)
        first, second = tmp_path / "first", tmp_path / "second"
        ExperimentBackend(first, max_workers=1).run(config)
        ExperimentBackend(second, max_workers=1).run(config)
        names = sorted(p.name for p in first.iterdir() if p.suffix in {".csv", ".json"})
        names.remove("manifest.json")
        assert "summary.csv" in names
        assert "system_seed0.json" in names
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_full_order_agrees_with_exact(self, tmp_path):
        config = ExperimentConfig.model_validate(
            {**TINY_CHAIN, "solver": {**TINY_CHAIN["solver"], "orders": [1, 2, 3]}}
        )
        record = ExperimentBackend(tmp_path, max_workers=1).run_seed(config, 0)
        assert record.diagnostics["max_deviation_from_exact"][3] < 1e-9

    def test_sweep_pulses(self, tmp_path):
        config = ExperimentConfig.model_validate(TINY_CHAIN)
        table = ExperimentBackend(tmp_path, max_workers=1).sweep(config, "p", [0, 1])
        assert table["value"].tolist() == [0, 1]
        assert {"t2", "t2_exact"} <= set(table.columns)
        assert (tmp_path / "p_0" / "summary.csv").exists()
        assert (tmp_path / "p_1" / "mecce_order2_seed0.csv").exists()
        assert (tmp_path / "sweep_p.csv").exists()

    def test_depth_sweep_needs_nv_model(self, tmp_path):
        config = ExperimentConfig.model_validate(TINY_CHAIN)
        with pytest.raises(ValueError, match="nv-surface"):
            ExperimentBackend(tmp_path).sweep_config(config, "depth", 5.0)

    def test_depth_sweep_adds_coherent_baseline(self, tmp_path):
        config = load_config(CONFIG_DIR / "nv_surface.yaml")
        swept = ExperimentBackend(tmp_path).sweep_config(config, "depth", 20.0)
        assert swept.model.depth == 20.0
        assert swept.solver.coherent_baseline


class TestVerification:
    def test_analytic_check_passes(self):
        [result] = VerificationSuite(quick=True).run(["analytic"])
        assert result.passed

    def test_physicality_check_passes(self):
        [result] = VerificationSuite(quick=True).run(["physicality"])
        assert result.passed, result.line()

    def test_observed_bound_stops_at_convergence_window(self):
        suite = VerificationSuite(quick=True)
        time = np.linspace(0.0, 2.0, 5)
        assembled = CoherenceCurve(
            time, np.array([1.0, 0.9, 0.8, 1.5, 2.0]), {"convergence_window": 1.0}
        )
        exact = CoherenceCurve(time, np.array([1.0, 0.9, 0.8, 0.7, 0.6]))
        suite._observe("assembled", assembled)
        suite._observe("exact", exact)
        assert suite._observed == [
            ("assembled", 1.0, suite.tolerances["physicality_window"]),
            ("exact", 1.0, suite.tolerances["physicality"]),
        ]
        passed, _ = suite.check_physicality()
        assert passed

    def test_unbounded_exact_curve_fails_physicality(self):
        suite = VerificationSuite(quick=True)
        time = np.linspace(0.0, 2.0, 3)
        suite._observe("exact", CoherenceCurve(time, np.array([1.0, 1.2, 0.9])))
        passed, detail = suite.check_physicality()
        assert not passed
        assert "exact" in detail

    @pytest.mark.slow
    def test_collective_check_passes(self):
        [result] = VerificationSuite(quick=True).run(["collective"])
        assert result.passed, result.line()

    def test_unknown_tolerance(self):
        with pytest.raises(ValueError, match="unknown tolerance"):
            VerificationSuite(tolerances={"bogus": 1.0})

    def test_unknown_check(self):
        with pytest.raises(ValueError, match="unknown checks"):
            VerificationSuite().run(["bogus"])

    @pytest.mark.slow
    def test_quick_suite(self):
        results = VerificationSuite(quick=True).run(["echo", "disjoint"])
        assert all(result.passed for result in results), [r.line() for r in results]


class TestCli:
    def test_run(self, tmp_path):
        config = write_config(tmp_path / "chain.yaml", TINY_CHAIN)
        out = tmp_path / "out"
        assert main(["run", str(config), "--out", str(out), "--threads", "1"]) == EXIT_OK
        assert (out / "mecce_order1_seed0.csv").exists()
        assert (out / "manifest.json").exists()

    def test_run_single_seed(self, tmp_path):
        config = write_config(tmp_path / "chain.yaml", TINY_CHAIN)
        out = tmp_path / "out"
        argv = ["run", str(config), "--out", str(out), "--threads", "1", "--seed", "3"]
        assert main(argv) == EXIT_OK
        assert (out / "exact_seed3.csv").exists()

    def test_invalid_config(self, tmp_path):
        config = write_config(tmp_path / "bad.yaml", {**TINY_CHAIN, "extra": True})
        assert main(["run", str(config)]) == EXIT_INVALID_CONFIG

    def test_malformed_yaml(self, tmp_path):
        config = tmp_path / "broken.yaml"
        config.write_text("model: [unclosed", encoding="utf-8")
        assert main(["run", str(config)]) == EXIT_INVALID_CONFIG

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.yaml")]) == EXIT_INVALID_CONFIG

    def test_sweep_unknown_parameter(self, tmp_path):
        config = write_config(tmp_path / "chain.yaml", TINY_CHAIN)
        argv = ["sweep", str(config), "--param", "bogus", "--values", "1,2"]
        assert main(argv) == EXIT_INVALID_CONFIG

    def test_sweep_bad_values(self, tmp_path):
        config = write_config(tmp_path / "chain.yaml", TINY_CHAIN)
        argv = ["sweep", str(config), "--param", "p", "--values", "one,two"]
        assert main(argv) == EXIT_INVALID_CONFIG

    def test_verify_passes(self):
        assert main(["verify", "--check", "analytic"]) == EXIT_OK

    def test_verify_fails_with_injected_tolerance(self):
        argv = ["verify", "--check", "analytic", "--tolerance", "analytic=-1"]
        assert main(argv) == EXIT_FAILURE

    def test_verify_unknown_tolerance(self):
        argv = ["verify", "--check", "analytic", "--tolerance", "bogus=1"]
        assert main(argv) == EXIT_INVALID_CONFIG
