"""
Scenario configuration, parameter sampling, data ingestion and results
export.

A scenario file is JSON validated against SCENARIO_SCHEMA. Demand
parameters and travel times are either explicit matrices or generated:
alpha and beta from truncated normals on the bound intervals, travel
times from a header-less CSV or a synthetic integer generator. Explicit
matrices win when both forms are present.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jsonschema import Draft7Validator
from scipy.stats import truncnorm

from ..shared.error_handler import (
    ConfigurationError,
    ErrorCategory,
    NrpsLabError,
    ValidationError,
    validate_required_fields,
)
from ..shared.models import (
    DemandParams,
    ParamBounds,
    ResultRow,
    Scenario,
    ShockField,
    off_diagonal_mask,
)
from ..shared.utils import (
    canonical_json,
    format_timestamp,
    hash_content,
    measure_execution_time,
    safe_json_dumps,
)
from .demand import eps_minus_matrix
from .network_model import load_travel_times_csv
from .pricing import cap_condition_holds, imbalance_vector

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_matrix = {"type": "array", "minItems": 2, "items": {"type": "array", "items": {"type": "number"}}}
_shock = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["truncated_gaussian", "uniform", "degenerate_zero"]},
        "lo": {"type": "number", "maximum": 0},
        "hi": {"type": "number", "minimum": 0},
        "mu": {"type": "number"},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
    },
}
_normal = {
    "type": "object",
    "required": ["mean", "spread"],
    "properties": {"mean": {"type": "number"}, "spread": {"type": "number", "exclusiveMinimum": 0}},
    "additionalProperties": False,
}

SCENARIO_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "NRPS scenario",
    "type": "object",
    "required": ["economics", "controls", "bounds", "shock"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "n_locations": {"type": "integer", "minimum": 2},
        "generator_seed": {"type": "integer", "minimum": 0},
        "economics": {
            "type": "object",
            "required": ["cost_c", "p_max"],
            "properties": {"cost_c": {"type": "number"}, "p_max": {"type": "number"}},
            "additionalProperties": False,
        },
        "controls": {
            "type": "object",
            "required": ["rho", "eta"],
            "properties": {
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "eta": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "bounds": {
            "type": "object",
            "required": ["alpha_min", "alpha_max", "beta_min", "beta_max"],
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in ("alpha_min", "alpha_max", "beta_min", "beta_max")},
            "additionalProperties": False,
        },
        "shock": {
            **_shock,
            "properties": {
                **_shock["properties"],
                "overrides": {
                    "type": "array",
                    "items": {
                        **_shock,
                        "required": ["origin", "destination", "kind"],
                        "properties": {
                            **_shock["properties"],
                            "origin": {"type": "integer", "minimum": 0},
                            "destination": {"type": "integer", "minimum": 0},
                        },
                    },
                },
            },
        },
        "theta": {
            "type": "object",
            "required": ["alpha", "beta"],
            "properties": {"alpha": _matrix, "beta": _matrix},
        },
        "theta_generator": {
            "type": "object",
            "required": ["alpha", "beta"],
            "properties": {
                "alpha": _normal,
                "beta": _normal,
                "spread_is_std": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "travel_time": _matrix,
        "travel_time_source": {
            "type": "object",
            "oneOf": [
                {"required": ["csv"]},
                {"required": ["synthetic"]},
            ],
            "properties": {
                "csv": {"type": "string"},
                "synthetic": {
                    "type": "object",
                    "properties": {
                        "low": {"type": "integer", "minimum": 1},
                        "high": {"type": "integer", "minimum": 1},
                    },
                    "additionalProperties": False,
                },
            },
        },
    },
    "allOf": [
        {"anyOf": [{"required": ["theta"]}, {"required": ["theta_generator"]}]},
        {"anyOf": [{"required": ["travel_time"]}, {"required": ["travel_time_source"]}]},
    ],
}

_validator = Draft7Validator(SCENARIO_SCHEMA)


def validate_config(config: Mapping[str, Any], source: str = '<config>') -> None:
    """Raise ConfigurationError listing every schema violation."""
    errors = sorted(_validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        messages = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigurationError(
            f"Scenario config {source} is invalid: {'; '.join(messages)}",
            source=source,
            details={'schema_errors': messages}
        )


def _truncated_normal_matrix(n: int, mean: float, spread: float, lo: float, hi: float,
                             spread_is_std: bool, rng: np.random.Generator) -> np.ndarray:
    scale = spread if spread_is_std else float(np.sqrt(spread))
    a, b = (lo - mean) / scale, (hi - mean) / scale
    mask = off_diagonal_mask(n)
    out = np.zeros((n, n))
    out[mask] = truncnorm.rvs(a, b, loc=mean, scale=scale, size=n * (n - 1), random_state=rng)
    return np.clip(out, lo, hi) * mask


def synthetic_travel_times(n: int, low: int, high: int, rng: np.random.Generator) -> np.ndarray:
    """Asymmetric integer travel times drawn uniformly from [low, high]."""
    if low > high:
        raise ConfigurationError(f"Synthetic travel-time range [{low}, {high}] is empty")
    xi = rng.integers(low, high, size=(n, n), endpoint=True).astype(float)
    np.fill_diagonal(xi, 0.0)
    return xi


def _resolve_n(config: Mapping[str, Any], source: str) -> int:
    sizes = set()
    if 'n_locations' in config:
        sizes.add(int(config['n_locations']))
    if 'theta' in config:
        sizes.add(len(config['theta']['alpha']))
    if 'travel_time' in config:
        sizes.add(len(config['travel_time']))
    if not sizes:
        raise ConfigurationError(f"Scenario config {source} does not determine n_locations", source=source)
    if len(sizes) > 1:
        raise ConfigurationError(f"Scenario config {source} has conflicting sizes {sorted(sizes)}", source=source)
    return sizes.pop()


def _matrix_field(value, n: int, name: str, source: str) -> np.ndarray:
    rows = [len(r) for r in value]
    if len(value) != n or any(r != n for r in rows):
        raise ConfigurationError(f"{name} in {source} must be {n}x{n}", source=source, details={'field': name})
    return np.array(value, dtype=float)


def scenario_from_config(config: Mapping[str, Any], base_dir: Optional[Path] = None,
                         source: str = '<config>') -> Scenario:
    """Build and validate a Scenario from a parsed config dictionary."""
    validate_config(config, source)
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    n = _resolve_n(config, source)
    seed = int(config.get('generator_seed', 0))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    bounds = ParamBounds.from_dict(config['bounds']) if _bounds_ok(config, source) else None
    generated = []

    if 'travel_time' in config:
        xi = _matrix_field(config['travel_time'], n, 'travel_time', source)
    elif 'csv' in config['travel_time_source']:
        csv_path = Path(config['travel_time_source']['csv'])
        if not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        xi = load_travel_times_csv(csv_path)
        if xi.shape[0] != n:
            raise ConfigurationError(f"Travel-time CSV has {xi.shape[0]} locations, expected {n}", source=source)
    else:
        spec = config['travel_time_source']['synthetic']
        xi = synthetic_travel_times(n, int(spec.get('low', 2)), int(spec.get('high', 30)), rng)
        generated.append('travel_time')

    if 'theta' in config:
        theta = DemandParams(
            _matrix_field(config['theta']['alpha'], n, 'alpha', source),
            _matrix_field(config['theta']['beta'], n, 'beta', source),
        )
    else:
        gen = config['theta_generator']
        spread_is_std = bool(gen.get('spread_is_std', False))
        alpha = _truncated_normal_matrix(n, gen['alpha']['mean'], gen['alpha']['spread'],
                                         bounds.alpha_min, bounds.alpha_max, spread_is_std, rng)
        beta = _truncated_normal_matrix(n, gen['beta']['mean'], gen['beta']['spread'],
                                        bounds.beta_min, bounds.beta_max, spread_is_std, rng)
        theta = DemandParams(alpha, beta)
        generated.append('theta')

    try:
        shock = ShockField.from_dict(config['shock'])
    except (KeyError, ValueError, ValidationError) as e:
        raise ConfigurationError(f"Invalid shock spec in {source}: {e}", source=source)

    metadata = {
        'source': source,
        'name': config.get('name'),
        'generator_seed': seed,
        'generated': generated,
    }
    return Scenario(
        n_locations=n,
        travel_time=xi,
        theta=theta,
        bounds=bounds,
        shock=shock,
        cost_c=config['economics']['cost_c'],
        p_max=config['economics']['p_max'],
        rho=config['controls']['rho'],
        eta=config['controls']['eta'],
        metadata=metadata,
    )


def _bounds_ok(config: Mapping[str, Any], source: str) -> bool:
    b = config['bounds']
    if b['alpha_min'] > b['alpha_max'] or b['beta_min'] > b['beta_max']:
        raise ConfigurationError(f"Parameter bounds in {source} are inverted", source=source)
    return True


@measure_execution_time
def load_scenario(config_file: Union[str, Path, Mapping[str, Any]]) -> Scenario:
    """
    Load, generate and validate a scenario.

    Accepts a path to a JSON file or an already parsed dictionary. Scenario
    invariant failures propagate as ScenarioInvariantError naming the
    failing inequality.
    """
    if isinstance(config_file, Mapping):
        return scenario_from_config(config_file)

    path = Path(config_file)
    if not path.is_file():
        raise ConfigurationError(f"Scenario file not found: {path}", source=str(path))
    try:
        config = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Scenario file {path} is not valid JSON: {e}", source=str(path))
    scenario = scenario_from_config(config, base_dir=path.parent, source=str(path))
    logger.debug(f"Loaded scenario {path} with N={scenario.n_locations}")
    return scenario


def scenario_to_config(scenario: Scenario) -> Dict[str, Any]:
    """Explicit-matrix config reproducing the scenario exactly."""
    config = {
        'schema_version': SCHEMA_VERSION,
        'n_locations': scenario.n_locations,
        'economics': {'cost_c': scenario.cost_c, 'p_max': scenario.p_max},
        'controls': {'rho': scenario.rho, 'eta': scenario.eta},
        'bounds': scenario.bounds.to_dict(),
        'shock': scenario.shock.to_dict(),
        'theta': scenario.theta.to_dict(),
        'travel_time': scenario.travel_time.tolist(),
    }
    if scenario.metadata.get('name'):
        config['name'] = scenario.metadata['name']
    return config


def config_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical explicit config (name excluded)."""
    config = scenario_to_config(scenario)
    config.pop('name', None)
    return hash_content(canonical_json(config))


def export_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario_to_config(scenario), indent=2) + "\n", encoding='utf-8')
    return path


def cap_condition_report(scenario: Scenario) -> Dict[str, Any]:
    """Whether the true parameters satisfy the no-binding-cap sufficient condition."""
    eps_minus = eps_minus_matrix(scenario.shock, scenario.n_locations)
    v = imbalance_vector(scenario.theta, scenario.cost_c, eps_minus)
    return {
        'holds': cap_condition_holds(scenario.theta, scenario, v, eps_minus),
        'imbalance_l1': float(np.sum(np.abs(v))),
    }


def results_frame(trajectories: Iterable, record_every: int = 1) -> pd.DataFrame:
    rows = [row.to_dict() for traj in trajectories for row in traj.rows(record_every)]
    frame = pd.DataFrame(rows, columns=list(ResultRow.columns()))
    if not frame.empty:
        frame = frame.astype({'replication': int, 'day': int, 'active_set_size': int, 'dTh_flag': int})
    return frame


def export_results(trajectories: Iterable, path: Union[str, Path], record_every: int = 1) -> Path:
    """
    Write one CSV row per recorded day per trajectory.

    Rows keep the order of the given trajectories, which callers supply
    sorted by replication and then policy.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        results_frame(trajectories, record_every).to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    except OSError as e:
        raise NrpsLabError(f"Could not write results to {path}: {e}", error_code="IO_ERROR",
                           category=ErrorCategory.IO, details={'path': str(path)})
    return path


def plot_frame(summary: pd.DataFrame, eta: float, rho: float) -> pd.DataFrame:
    frame = summary.copy()
    frame.insert(0, 'rho', rho)
    frame.insert(0, 'eta', eta)
    return frame


def export_plot_data(summary: pd.DataFrame, path: Union[str, Path], eta: float, rho: float) -> Path:
    """Long-format curve data: eta, rho, policy, day, metric, statistic, value."""
    return _write_plot_frame(plot_frame(summary, eta, rho), path)


def export_sweep_plot_data(parts: Sequence[Tuple[pd.DataFrame, float, float]], path: Union[str, Path]) -> Path:
    """One long-format file for every (summary, eta, rho) of a control sweep."""
    frame = pd.concat([plot_frame(summary, eta, rho) for summary, eta, rho in parts], ignore_index=True)
    return _write_plot_frame(frame, path)


def _write_plot_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    return path


RUN_METADATA_FIELDS = ['run_id', 'scenario', 'seeds', 'solver_path_counts', 'd_th']


def write_run_metadata(path: Union[str, Path], metadata: Mapping[str, Any]) -> Path:
    validate_required_fields(dict(metadata), RUN_METADATA_FIELDS)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {'written_at': format_timestamp(), **metadata}
    path.write_text(safe_json_dumps(body) + "\n", encoding='utf-8')
    return path
