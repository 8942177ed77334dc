"""
Shared fixtures for the simulation lab test suite.
"""

import dataclasses
import json

import numpy as np
import pytest

from src.shared.models import DemandParams, ParamBounds, Scenario, ShockKind, ShockSpec
from src.shared.settings import get_settings

DEFAULT_BOUNDS = ParamBounds(3.5, 4.0, 2.0, 3.0)


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached per process; clear around every test so env changes apply."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def make_scenario(alpha, beta, xi, *, p_max=1.0, cost_c=0.1, bounds=DEFAULT_BOUNDS,
                  shock=None, rho=2.0, eta=0.45):
    return Scenario(
        n_locations=len(alpha),
        travel_time=np.array(xi, dtype=float),
        theta=DemandParams(np.array(alpha, dtype=float), np.array(beta, dtype=float)),
        bounds=bounds,
        shock=shock or ShockSpec.zero(),
        cost_c=cost_c,
        p_max=p_max,
        rho=rho,
        eta=eta,
    )


@pytest.fixture
def symmetric_scenario():
    """Two locations, alpha 3.75, beta 2.5, unit travel times, no shocks."""
    return make_scenario(
        [[0, 3.75], [3.75, 0]],
        [[0, 2.5], [2.5, 0]],
        [[0, 1], [1, 0]],
    )


@pytest.fixture
def asymmetric_scenario():
    """Two locations with alpha_12 = 4, alpha_21 = 3.5."""
    return make_scenario(
        [[0, 4.0], [3.5, 0]],
        [[0, 2.5], [2.5, 0]],
        [[0, 1], [1, 0]],
    )


@pytest.fixture
def capped_scenario():
    """The asymmetric instance with p_max = 0.85, where the (1, 2) cap binds."""
    return make_scenario(
        [[0, 4.0], [3.5, 0]],
        [[0, 2.5], [2.5, 0]],
        [[0, 1], [1, 0]],
        p_max=0.85,
    )


@pytest.fixture
def random_scenario():
    """Four locations near the homogeneous instance, uniform shocks."""
    rng = np.random.default_rng(7)
    n = 4
    alpha = 3.75 + rng.uniform(-0.02, 0.02, size=(n, n))
    beta = 2.5 + rng.uniform(-0.05, 0.05, size=(n, n))
    xi = rng.integers(2, 31, size=(n, n)).astype(float)
    mask = ~np.eye(n, dtype=bool)
    return make_scenario(
        np.where(mask, alpha, 0.0),
        np.where(mask, beta, 0.0),
        np.where(mask, xi, 0.0),
        shock=ShockSpec(ShockKind.UNIFORM, lo=-0.5, hi=0.5),
    )


@pytest.fixture
def scenario_config():
    """Explicit-matrix config of the symmetric two-location instance."""
    return {
        "schema_version": 1,
        "name": "symmetric",
        "economics": {"cost_c": 0.1, "p_max": 1.0},
        "controls": {"rho": 2.0, "eta": 0.45},
        "bounds": {"alpha_min": 3.5, "alpha_max": 4.0, "beta_min": 2.0, "beta_max": 3.0},
        "shock": {"kind": "uniform", "lo": -0.5, "hi": 0.5},
        "theta": {
            "alpha": [[0.0, 3.75], [3.75, 0.0]],
            "beta": [[0.0, 2.5], [2.5, 0.0]],
        },
        "travel_time": [[0.0, 1.0], [1.0, 0.0]],
    }


@pytest.fixture
def generative_config():
    """Small generative config: sampled theta and synthetic travel times."""
    return {
        "n_locations": 4,
        "generator_seed": 11,
        "economics": {"cost_c": 0.1, "p_max": 1.0},
        "controls": {"rho": 2.0, "eta": 0.45},
        "bounds": {"alpha_min": 3.5, "alpha_max": 4.0, "beta_min": 2.0, "beta_max": 3.0},
        "shock": {"kind": "truncated_gaussian", "lo": -0.5, "hi": 0.5, "mu": 0.0, "sigma": 1.0},
        "theta_generator": {
            "alpha": {"mean": 3.75, "spread": 2.25},
            "beta": {"mean": 2.5, "spread": 2.25},
        },
        "travel_time_source": {"synthetic": {"low": 2, "high": 30}},
    }


@pytest.fixture
def write_config(tmp_path):
    def _write(config, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(config))
        return path
    return _write


@pytest.fixture
def pinned_scenario(symmetric_scenario):
    """The symmetric instance with bounds collapsed onto the true parameters."""
    return dataclasses.replace(symmetric_scenario, bounds=ParamBounds(3.75, 3.75, 2.5, 2.5))
