"""
Integration tests for the command line surface.

Each test drives the click group end to end on the bundled scenarios at a
short horizon and checks the files and JSON lines it produces.
"""

import json
from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner

from src.core.cli import cli
from src.shared.models import ResultRow

SCENARIOS = Path(__file__).resolve().parents[2] / "scenarios"


@pytest.fixture
def runner():
    return CliRunner()


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


@pytest.mark.integration
class TestRunCommand:
    """Test cases for `nrps-lab run`."""

    def test_writes_outputs(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "run", "--scenario", str(SCENARIOS / "symmetric_n2.json"), "--D", "20", "--reps", "2",
            "--seed", "3", "--out", str(tmp_path), "--record-every", "5",
        ])
        assert result.exit_code == 0, result.stderr
        line = last_json(result.stdout)
        assert set(line['final_regret_mean']) == {"nrps", "clairvoyant", "myopic", "perturbed", "random"}
        assert line['final_regret_mean']['clairvoyant'] == 0.0

        frame = pd.read_csv(tmp_path / "results.csv")
        assert list(frame.columns) == list(ResultRow.columns())
        assert sorted(frame.day.unique()) == [1, 6, 11, 16]
        assert len(frame) == 2 * 5 * 4

        plot = pd.read_csv(tmp_path / "plot_data.csv")
        assert list(plot.columns[:2]) == ['eta', 'rho']

        metadata = json.loads((tmp_path / "run_metadata.json").read_text())
        assert metadata['seeds']['stream_keys'] == [[3, 0], [3, 1]]
        assert metadata['scenario']['n_locations'] == 2
        assert metadata['offset_schedule'] == {'nrps': 'even_days', 'perturbed': 'every_day'}
        assert metadata['solver_path_counts']['nrps']['offset'] == 2 * 10

    def test_same_seed_same_results(self, runner, tmp_path):
        args = ["run", "--scenario", str(SCENARIOS / "near_homogeneous_n3.json"), "--D", "12",
                "--policies", "nrps,myopic", "--seed", "9"]
        first = runner.invoke(cli, args + ["--out", str(tmp_path / "a")])
        second = runner.invoke(cli, args + ["--out", str(tmp_path / "b")])
        assert first.exit_code == 0 and second.exit_code == 0
        assert (tmp_path / "a" / "results.csv").read_text() == (tmp_path / "b" / "results.csv").read_text()

    def test_sweep_creates_subdirectories(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "run", "--scenario", str(SCENARIOS / "symmetric_n2.json"), "--D", "6",
            "--policies", "nrps", "--sweep-eta", "0.25,0.45", "--rho", "1", "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.stderr
        for name in ("eta_0.25_rho_1", "eta_0.45_rho_1"):
            assert (tmp_path / name / "results.csv").is_file()
            assert (tmp_path / name / "run_metadata.json").is_file()
        combined = pd.read_csv(tmp_path / "plot_data.csv")
        assert set(combined.eta) == {0.25, 0.45}
        assert len(result.stdout.strip().splitlines()) == 2

    def test_eta_outside_region_recorded(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "run", "--scenario", str(SCENARIOS / "symmetric_n2.json"), "--D", "4",
            "--policies", "nrps", "--eta", "0.7", "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.stderr
        metadata = json.loads((tmp_path / "run_metadata.json").read_text())
        assert metadata['eta_in_guaranteed_region'] is False
        assert "0.7" in metadata['eta_warning']

    def test_unknown_policy_is_configuration_error(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "run", "--scenario", str(SCENARIOS / "symmetric_n2.json"), "--policies", "greedy",
            "--out", str(tmp_path),
        ])
        assert result.exit_code == 2
        assert last_json(result.stderr)['error_code'] == "CONFIGURATION_ERROR"

    def test_missing_scenario_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", "--scenario", str(tmp_path / "absent.json"), "--D", "4"])
        assert result.exit_code == 2
        assert "not found" in last_json(result.stderr)['message']

    def test_bad_flag_is_json_error(self, runner):
        result = runner.invoke(cli, ["run", "--scenario", "x.json", "--D", "many"])
        assert result.exit_code == 2
        payload = last_json(result.stderr)
        assert payload['error'] is True
        assert payload['error_code'] == "CONFIGURATION_ERROR"

    def test_invariant_violation_exits_nonzero(self, runner, tmp_path):
        config = json.loads((SCENARIOS / "symmetric_n2.json").read_text())
        config["economics"]["p_max"] = 2.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(config))
        result = runner.invoke(cli, ["run", "--scenario", str(path), "--D", "4", "--out", str(tmp_path)])
        assert result.exit_code == 1
        assert last_json(result.stderr)['error_code'] == "SCENARIO_INVARIANT_VIOLATION"


@pytest.mark.integration
class TestScenarioCommands:
    """Test cases for `validate` and `export-scenario`."""

    def test_validate(self, runner):
        result = runner.invoke(cli, ["validate", "--scenario", str(SCENARIOS / "default_n25.json")])
        assert result.exit_code == 0, result.stderr
        payload = last_json(result.stdout)
        assert payload['valid'] is True
        assert payload['n_locations'] == 25
        assert len(payload['config_hash']) == 64

    def test_export_then_validate_same_hash(self, runner, tmp_path):
        out = tmp_path / "explicit.json"
        exported = runner.invoke(cli, [
            "export-scenario", "--scenario", str(SCENARIOS / "default_n25.json"), "--out", str(out),
        ])
        assert exported.exit_code == 0, exported.stderr
        validated = runner.invoke(cli, ["validate", "--scenario", str(out)])
        assert last_json(validated.stdout)['config_hash'] == last_json(exported.stdout)['config_hash']
        assert "theta" in json.loads(out.read_text())
