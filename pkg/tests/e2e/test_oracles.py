"""
Oracle equivalence checks over many random instances.

Closed-form prices against the active-set QP, effective resistances
against nodal analysis, and the least-squares determinant identity.
"""

import numpy as np
import pytest

from src.core.demand import eps_minus_matrix
from src.core.estimation import LinkHistory, dispersion, least_squares
from src.core.network_model import build_resistor_network, effective_resistances, laplacian
from src.core.pricing import cap_condition_holds, flow_imbalance, imbalance_vector, solve_day
from src.shared.models import DemandParams, ParamBounds, Scenario, ShockKind, ShockSpec, off_diagonal_mask

BOUNDS = ParamBounds(3.5, 4.0, 2.0, 3.0)


def random_scenario(rng, n):
    mask = off_diagonal_mask(n)
    alpha = np.where(mask, 3.75 + rng.uniform(-0.05, 0.05, (n, n)), 0.0)
    beta = np.where(mask, 2.5 + rng.uniform(-0.2, 0.2, (n, n)), 0.0)
    xi = np.where(mask, rng.integers(2, 31, (n, n)), 0).astype(float)
    return Scenario(
        n_locations=n,
        travel_time=xi,
        theta=DemandParams(alpha, beta),
        bounds=BOUNDS,
        shock=ShockSpec(ShockKind.TRUNCATED_GAUSSIAN, lo=-0.5, hi=0.5, sigma=1.0),
        cost_c=0.1,
        p_max=1.0,
        rho=2.0,
        eta=0.45,
    )


def nodal_resistance(lap, i, j):
    n = lap.shape[0]
    keep = [k for k in range(n) if k != j]
    current = np.zeros(n)
    current[i] = 1.0
    potential = np.zeros(n)
    potential[keep] = np.linalg.solve(lap[np.ix_(keep, keep)], current[keep])
    return potential[i]


@pytest.mark.integration
class TestPricingOracle:
    """Closed form and active-set QP agree whenever no cap can bind."""

    def test_two_hundred_instances(self):
        rng = np.random.default_rng(20240601)
        compared = attempts = 0
        while compared < 200 and attempts < 2000:
            attempts += 1
            scenario = random_scenario(rng, int(rng.integers(3, 9)))
            eps = eps_minus_matrix(scenario.shock, scenario.n_locations)
            v = imbalance_vector(scenario.theta, scenario.cost_c, eps)
            if not cap_condition_holds(scenario.theta, scenario, v, eps):
                continue
            closed = solve_day(scenario.theta, scenario, eps)
            qp = solve_day(scenario.theta, scenario, eps, force_qp=True)
            assert np.max(np.abs(closed.prices - qp.prices)) <= 1e-8
            assert np.max(np.abs(flow_imbalance(closed.supplies))) <= 1e-9
            compared += 1
        assert compared == 200


@pytest.mark.integration
class TestResistanceOracle:
    """Effective resistances from the pseudoinverse against unit-current analysis."""

    def test_one_hundred_graphs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            net = build_resistor_network(rng.uniform(2, 3, (n, n)), rng.uniform(2, 30, (n, n)))
            lap = laplacian(net)
            r_eff = effective_resistances(lap).r_eff
            mask = off_diagonal_mask(n)
            np.testing.assert_allclose(r_eff, r_eff.T, atol=1e-12)
            np.testing.assert_array_equal(np.diag(r_eff), 0.0)
            assert np.all(r_eff[mask] <= net.resistance[mask] + 1e-12)
            for i in range(n):
                for j in range(n):
                    if i != j:
                        assert abs(r_eff[i, j] - nodal_resistance(lap, i, j)) <= 1e-10
                        for k in range(n):
                            assert r_eff[i, j] <= r_eff[i, k] + r_eff[k, j] + 1e-12


@pytest.mark.integration
class TestEstimatorOracle:
    """Exact recovery and the dispersion identity."""

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            alpha, beta = rng.uniform(3.5, 4.0), rng.uniform(2.0, 3.0)
            prices = np.array([rng.uniform(0.2, 0.6), rng.uniform(0.6, 1.0)])
            history = LinkHistory([(d + 1, p, alpha - beta * p) for d, p in enumerate(prices)])
            (a, b), _ = least_squares(history)
            assert abs(a - alpha) <= 1e-10 and abs(b - beta) <= 1e-10

    def test_dispersion_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            p = rng.uniform(0, 1, int(rng.integers(2, 40)))
            gaps = p[:, None] - p[None, :]
            assert abs(dispersion(p.size, p.sum(), p @ p) - 0.5 * np.sum(gaps ** 2)) <= 1e-9
