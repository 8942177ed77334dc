"""
Unit tests for scenario configuration, generation and results export
"""

import json

import numpy as np
import pandas as pd
import pytest

from src.core.policies import ClairvoyantPolicy
from src.core.scenario_io import (
    cap_condition_report,
    config_hash,
    export_plot_data,
    export_results,
    export_scenario,
    export_sweep_plot_data,
    load_scenario,
    results_frame,
    scenario_to_config,
    synthetic_travel_times,
    validate_config,
    write_run_metadata,
)
from src.core.simulator import policy_kinds, run_experiment, summarize
from src.shared.error_handler import ConfigurationError, ScenarioInvariantError
from src.shared.models import ResultRow, RunConfig

pytestmark = pytest.mark.unit


class TestValidation:
    """Test cases for schema validation."""

    def test_valid_config(self, scenario_config):
        validate_config(scenario_config)

    def test_missing_section_listed(self, scenario_config):
        del scenario_config["controls"]
        with pytest.raises(ConfigurationError) as exc:
            validate_config(scenario_config)
        assert any("controls" in e for e in exc.value.details['schema_errors'])

    def test_needs_theta_source(self, scenario_config):
        del scenario_config["theta"]
        with pytest.raises(ConfigurationError):
            validate_config(scenario_config)

    def test_unknown_shock_kind(self, scenario_config):
        scenario_config["shock"]["kind"] = "laplace"
        with pytest.raises(ConfigurationError, match="shock"):
            validate_config(scenario_config)

    def test_wrong_schema_version(self, scenario_config):
        scenario_config["schema_version"] = 2
        with pytest.raises(ConfigurationError):
            validate_config(scenario_config)


class TestLoadScenario:
    """Test cases for building scenarios from configs."""

    def test_explicit_config(self, scenario_config):
        scenario = load_scenario(scenario_config)
        assert scenario.n_locations == 2
        assert scenario.theta.alpha[0, 1] == 3.75
        assert scenario.metadata['generated'] == []
        assert scenario.metadata['name'] == "symmetric"

    def test_from_file(self, scenario_config, write_config):
        path = write_config(scenario_config)
        scenario = load_scenario(path)
        assert scenario.metadata['source'] == str(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_scenario(tmp_path / "absent.json")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError, match="not valid JSON"):
            load_scenario(path)

    def test_generated_parameters_respect_bounds(self, generative_config):
        scenario = load_scenario(generative_config)
        assert scenario.theta.within(scenario.bounds)
        xi = scenario.travel_time[scenario.links]
        assert xi.min() >= 2 and xi.max() <= 30
        assert np.all(xi == np.round(xi))
        assert scenario.metadata['generator_seed'] == 11
        assert set(scenario.metadata['generated']) == {'theta', 'travel_time'}

    def test_generation_is_seeded(self, generative_config):
        a, b = load_scenario(generative_config), load_scenario(generative_config)
        np.testing.assert_array_equal(a.theta.alpha, b.theta.alpha)
        generative_config["generator_seed"] = 12
        c = load_scenario(generative_config)
        assert not np.array_equal(a.theta.alpha, c.theta.alpha)

    def test_explicit_matrices_win(self, scenario_config):
        scenario_config["theta_generator"] = {
            "alpha": {"mean": 3.75, "spread": 2.25},
            "beta": {"mean": 2.5, "spread": 2.25},
        }
        scenario = load_scenario(scenario_config)
        assert scenario.theta.alpha[1, 0] == 3.75
        assert 'theta' not in scenario.metadata['generated']

    def test_csv_travel_times_relative_to_file(self, scenario_config, write_config, tmp_path):
        (tmp_path / "xi.csv").write_text("0,4\n6,0\n")
        del scenario_config["travel_time"]
        scenario_config["travel_time_source"] = {"csv": "xi.csv"}
        scenario = load_scenario(write_config(scenario_config))
        assert scenario.travel_time[0, 1] == 4.0
        assert scenario.travel_time[1, 0] == 6.0

    def test_conflicting_sizes(self, scenario_config):
        scenario_config["n_locations"] = 3
        with pytest.raises(ConfigurationError, match="conflicting"):
            load_scenario(scenario_config)

    def test_inverted_bounds(self, scenario_config):
        scenario_config["bounds"]["alpha_min"] = 4.5
        with pytest.raises(ConfigurationError, match="inverted"):
            load_scenario(scenario_config)

    def test_negative_demand_floor_rejected(self, scenario_config):
        scenario_config["economics"]["p_max"] = 2.0
        with pytest.raises(ScenarioInvariantError) as exc:
            load_scenario(scenario_config)
        assert 'alpha_min - beta_max*p_max' in exc.value.details['inequality']

    def test_floor_of_exactly_zero_accepted(self, scenario_config):
        # 3.5 - 3.0 * 1.0 - 0.5 == 0
        assert load_scenario(scenario_config).p_max == 1.0

    def test_cost_above_cap_rejected(self, scenario_config):
        scenario_config["economics"]["cost_c"] = 1.5
        with pytest.raises(ScenarioInvariantError, match="c < p_max"):
            load_scenario(scenario_config)

    def test_synthetic_range_must_be_nonempty(self):
        with pytest.raises(ConfigurationError):
            synthetic_travel_times(3, 10, 5, np.random.default_rng(0))


class TestScenarioExport:
    """Test cases for exporting resolved scenarios."""

    def test_exported_config_reloads_identically(self, generative_config, tmp_path):
        scenario = load_scenario(generative_config)
        path = export_scenario(scenario, tmp_path / "out" / "resolved.json")
        reloaded = load_scenario(path)
        np.testing.assert_array_equal(reloaded.theta.beta, scenario.theta.beta)
        np.testing.assert_array_equal(reloaded.travel_time, scenario.travel_time)
        assert config_hash(reloaded) == config_hash(scenario)

    def test_hash_ignores_name(self, scenario_config):
        named = load_scenario(scenario_config)
        scenario_config["name"] = "renamed"
        assert config_hash(load_scenario(scenario_config)) == config_hash(named)

    def test_hash_tracks_parameters(self, scenario_config):
        base = config_hash(load_scenario(scenario_config))
        scenario_config["controls"]["eta"] = 0.3
        assert config_hash(load_scenario(scenario_config)) != base

    def test_explicit_form(self, generative_config):
        config = scenario_to_config(load_scenario(generative_config))
        assert "theta" in config and "travel_time" in config
        assert "theta_generator" not in config
        json.dumps(config)

    def test_cap_condition_report(self, scenario_config):
        report = cap_condition_report(load_scenario(scenario_config))
        assert report == {'holds': True, 'imbalance_l1': 0.0}


class TestResultsExport:
    """Test cases for results and plot-data files."""

    @pytest.fixture
    def experiment(self, scenario_config):
        scenario = load_scenario(scenario_config)
        config = RunConfig(6, 2, 0, policy_kinds(["nrps", "clairvoyant"], scenario))
        return run_experiment(scenario, config)

    def test_results_columns_and_order(self, experiment, tmp_path):
        path = export_results(experiment.trajectories(), tmp_path / "results.csv", record_every=2)
        frame = pd.read_csv(path)
        assert list(frame.columns) == list(ResultRow.columns())
        assert list(zip(frame.replication, frame.policy))[:4] == [
            (0, "nrps"), (0, "nrps"), (0, "nrps"), (0, "clairvoyant")
        ]
        assert len(frame) == 2 * 2 * 3
        assert not path.read_bytes().count(b"\r")

    def test_empty_results_header_only(self, tmp_path):
        path = export_results([], tmp_path / "results.csv")
        assert path.read_text().strip() == ",".join(ResultRow.columns())
        assert results_frame([]).empty

    def test_plot_data(self, experiment, tmp_path):
        path = export_plot_data(summarize(experiment), tmp_path / "plot_data.csv", 0.45, 2.0)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ['eta', 'rho', 'policy', 'day', 'metric', 'statistic', 'value']
        assert set(frame.eta) == {0.45}

    def test_sweep_plot_data(self, experiment, tmp_path):
        summary = summarize(experiment)
        path = export_sweep_plot_data([(summary, 0.25, 1.0), (summary, 0.45, 2.0)], tmp_path / "plot.csv")
        frame = pd.read_csv(path)
        assert set(zip(frame.eta, frame.rho)) == {(0.25, 1.0), (0.45, 2.0)}


class TestRunMetadata:
    """Test cases for the run metadata file."""

    def test_written_with_timestamp(self, symmetric_scenario, tmp_path):
        metadata = {
            'run_id': 'abc',
            'scenario': {'source': tmp_path / "s.json"},
            'seeds': {'base_seed': 0},
            'solver_path_counts': {'clairvoyant': {'closed_form': 3}},
            'd_th': {'clairvoyant': [1]},
            'clairvoyant_objective': ClairvoyantPolicy(symmetric_scenario).solution.objective,
        }
        path = write_run_metadata(tmp_path / "run_metadata.json", metadata)
        body = json.loads(path.read_text())
        assert body['run_id'] == 'abc'
        assert 'written_at' in body
        assert body['scenario']['source'].endswith("s.json")
        assert body['clairvoyant_objective'] == pytest.approx(2.45)

    def test_required_fields(self, tmp_path):
        with pytest.raises(ConfigurationError, match="Missing required"):
            write_run_metadata(tmp_path / "run_metadata.json", {'run_id': 'abc'})
