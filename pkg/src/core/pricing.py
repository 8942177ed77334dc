"""
Single-day provider problem.

Maximize the expected per-slot payoff

    sum xi_ij (alpha_ij + eps_minus_ij - beta_ij p_ij) p_ij - sum xi_ij (alpha_ij - beta_ij p_ij) c

over prices p <= p_max, with supplies w = alpha - beta p required to
balance at every node. When the cap condition holds the optimum has a
closed form in the effective resistances of the beta/xi resistor network;
otherwise the active-set QP solver is used.
"""

import logging
from typing import Optional, Protocol, Tuple

import numpy as np

from ..shared.error_handler import ScenarioInvariantError, ValidationError
from ..shared.models import (
    DemandParams,
    ParamBounds,
    PricingSolution,
    SolverPath,
    off_diagonal_mask,
)
from ..shared.settings import get_settings
from .linalg import KktSystem, solve_eq_qp_active_set
from .network_model import (
    EffectiveResistances,
    resistor_network_from_params,
    effective_resistances,
    laplacian,
)

logger = logging.getLogger(__name__)

FLOW_BALANCE_TOLERANCE = 1e-9


class MarketTerms(Protocol):
    """What the pricing problem needs besides the demand parameters."""
    n_locations: int
    travel_time: np.ndarray
    bounds: ParamBounds
    cost_c: float
    p_max: float


def _check_inputs(theta: DemandParams, terms: MarketTerms, eps_minus: np.ndarray) -> np.ndarray:
    n = terms.n_locations
    if theta.n != n:
        raise ValidationError(f"theta has {theta.n} locations, expected {n}", field='theta')
    eps_minus = np.asarray(eps_minus, dtype=float)
    if eps_minus.shape != (n, n):
        raise ValidationError(f"eps_minus shape {eps_minus.shape} does not match N={n}", field='eps_minus')
    return eps_minus


def flow_imbalance(supplies: np.ndarray) -> np.ndarray:
    """Per-node outflow minus inflow."""
    w = np.where(off_diagonal_mask(supplies.shape[0]), supplies, 0.0)
    return w.sum(axis=1) - w.sum(axis=0)


def imbalance_vector(theta: DemandParams, c: float, eps_minus: np.ndarray) -> np.ndarray:
    """v_k = sum_j (alpha - c beta - eps_minus)_kj - sum_j (alpha - c beta - eps_minus)_jk."""
    mask = off_diagonal_mask(theta.n)
    net = np.where(mask, theta.alpha - c * theta.beta - np.asarray(eps_minus, dtype=float), 0.0)
    return net.sum(axis=1) - net.sum(axis=0)


def _base_prices(theta: DemandParams, c: float, eps_minus: np.ndarray) -> np.ndarray:
    mask = off_diagonal_mask(theta.n)
    beta = np.where(mask, theta.beta, 1.0)
    return np.where(mask, (c * theta.beta + theta.alpha + eps_minus) / (2.0 * beta), 0.0)


def closed_form_prices(theta: DemandParams, scenario: MarketTerms, r_eff: EffectiveResistances,
                       v: np.ndarray, eps_minus: np.ndarray) -> np.ndarray:
    """
    p_ij = (c beta + alpha + eps_minus)/(2 beta) + (1/(4 xi_ij)) sum_k (R_jk - R_ik) v_k.

    Optimal whenever no price cap binds.
    """
    eps_minus = _check_inputs(theta, scenario, eps_minus)
    mask = off_diagonal_mask(theta.n)
    rv = r_eff.r_eff @ np.asarray(v, dtype=float)
    xi = np.where(mask, scenario.travel_time, 1.0)
    correction = (rv[None, :] - rv[:, None]) / (4.0 * xi)
    return np.where(mask, _base_prices(theta, scenario.cost_c, eps_minus) + correction, 0.0)


def cap_condition_holds(theta: DemandParams, scenario: MarketTerms, v: np.ndarray,
                        eps_minus: np.ndarray) -> bool:
    """
    sum_k |v_k| <= min over links of
    2 (beta_ij + (xi_ij/xi_ji) beta_ji) (2 p_max - c - (alpha_ij + eps_minus_ij)/beta_ij).

    Sufficient for every cap multiplier to vanish at the optimum.
    """
    eps_minus = _check_inputs(theta, scenario, eps_minus)
    mask = off_diagonal_mask(theta.n)
    alpha, beta = theta.alpha[mask], theta.beta[mask]
    xi = scenario.travel_time
    ratio = xi[mask] / xi.T[mask]
    rhs = 2.0 * (beta + ratio * theta.beta.T[mask]) * (
        2.0 * scenario.p_max - scenario.cost_c - (alpha + eps_minus[mask]) / beta
    )
    return bool(np.sum(np.abs(v)) <= rhs.min())


def duals_from_imbalance(r_eff: EffectiveResistances, v: np.ndarray) -> np.ndarray:
    """Solution of L sigma = v with the last node's dual pinned at zero."""
    sigma = r_eff.pseudoinverse @ np.asarray(v, dtype=float)
    return sigma - sigma[-1]


def build_pricing_qp(theta: DemandParams, scenario: MarketTerms,
                     eps_minus: np.ndarray) -> Tuple[KktSystem, np.ndarray, np.ndarray]:
    """
    Encode the day problem as a KktSystem over the off-diagonal prices
    (row-major). Flow balance rows are indexed by node; the last node's row
    is the dropped reference, so the equality multipliers are the node duals.
    """
    eps_minus = _check_inputs(theta, scenario, eps_minus)
    n = theta.n
    rows, cols = np.nonzero(off_diagonal_mask(n))
    m = rows.size
    alpha, beta = theta.alpha[rows, cols], theta.beta[rows, cols]
    xi = scenario.travel_time[rows, cols]
    c = scenario.cost_c

    hessian = -2.0 * xi * beta
    linear = xi * (alpha + eps_minus[rows, cols] + beta * c)
    equality = np.zeros((n, m))
    link = np.arange(m)
    equality[rows, link] = -beta
    equality[cols, link] = beta
    out_alpha = np.bincount(rows, weights=alpha, minlength=n)
    in_alpha = np.bincount(cols, weights=alpha, minlength=n)
    rhs = -(out_alpha - in_alpha)

    # Equal supply t on every link balances every node.
    t = float(np.max(alpha - beta * scenario.p_max))
    start = np.minimum((alpha - t) / beta, scenario.p_max)

    system = KktSystem(
        hessian=hessian,
        equality_matrix=equality,
        equality_rhs=rhs,
        linear_term=linear,
        upper_bounds=np.full(m, scenario.p_max),
        reference_row=n - 1,
        initial_point=start,
    )
    return system, rows, cols


def expected_objective(sol: PricingSolution, theta: DemandParams, scenario: MarketTerms,
                       eps_minus: np.ndarray) -> float:
    """Expected per-slot payoff of the solution's prices under theta."""
    return _objective(sol.prices, theta, scenario, eps_minus)


def _objective(prices: np.ndarray, theta: DemandParams, scenario: MarketTerms, eps_minus: np.ndarray) -> float:
    eps_minus = _check_inputs(theta, scenario, eps_minus)
    mask = off_diagonal_mask(theta.n)
    xi, p = scenario.travel_time[mask], prices[mask]
    alpha, beta = theta.alpha[mask], theta.beta[mask]
    revenue = xi * (alpha + eps_minus[mask] - beta * p) * p
    cost = xi * (alpha - beta * p) * scenario.cost_c
    return float(np.sum(revenue) - np.sum(cost))


def check_solution(sol: PricingSolution, p_max: float, tolerance: float = FLOW_BALANCE_TOLERANCE) -> None:
    """Raise when a solution breaks the cap, non-negativity or balance invariants."""
    mask = off_diagonal_mask(sol.prices.shape[0])
    if np.any(sol.prices[mask] > p_max + tolerance):
        raise ScenarioInvariantError("Price exceeds p_max", inequality='p_ij <= p_max')
    if np.any(sol.supplies[mask] < -tolerance):
        raise ScenarioInvariantError("Negative supply", inequality='w_ij >= 0')
    imbalance = float(np.max(np.abs(flow_imbalance(sol.supplies))))
    if imbalance > tolerance:
        raise ScenarioInvariantError(
            f"Flow balance residual {imbalance:.3e} exceeds {tolerance:.0e}",
            inequality='sum_j w_ij = sum_j w_ji',
            details={'residual': imbalance}
        )
    if np.any(sol.cap_duals < 0):
        raise ScenarioInvariantError("Negative cap multiplier", inequality='mu_ij >= 0')


def solve_day(theta_hat: DemandParams, scenario: MarketTerms, eps_minus: np.ndarray,
              force_qp: bool = False) -> PricingSolution:
    """
    Optimal prices and supplies for one day under theta_hat.

    Closed form when the cap condition holds, active-set QP otherwise;
    when the QP ends with no binding cap the closed form is compared
    against it and the gap recorded.
    """
    eps_minus = _check_inputs(theta_hat, scenario, eps_minus)
    if not theta_hat.within(scenario.bounds):
        raise ValidationError("Estimated parameters lie outside the parameter bounds", field='theta_hat')

    n = theta_hat.n
    mask = off_diagonal_mask(n)
    network = resistor_network_from_params(theta_hat, scenario.travel_time)
    r_eff = effective_resistances(laplacian(network))
    v = imbalance_vector(theta_hat, scenario.cost_c, eps_minus)
    holds = cap_condition_holds(theta_hat, scenario, v, eps_minus)

    gap: Optional[float] = None
    iterations = 0
    active: frozenset = frozenset()
    cap_duals = np.zeros((n, n))

    if holds and not force_qp:
        prices = closed_form_prices(theta_hat, scenario, r_eff, v, eps_minus)
        sigma = duals_from_imbalance(r_eff, v)
        path = SolverPath.CLOSED_FORM
    else:
        system, rows, cols = build_pricing_qp(theta_hat, scenario, eps_minus)
        result = solve_eq_qp_active_set(system)
        prices = np.zeros((n, n))
        prices[rows, cols] = result.solution
        cap_duals[rows, cols] = result.bound_duals
        sigma = result.eq_duals.copy()
        iterations = result.iterations
        active = frozenset((int(rows[k]), int(cols[k])) for k in result.active_set)
        zero = ~np.isin(np.arange(rows.size), result.active_set)
        cap_duals[rows[zero], cols[zero]] = 0.0
        if active:
            path = SolverPath.ACTIVE_SET
        else:
            path = SolverPath.ACTIVE_SET_EMPTY
            closed = closed_form_prices(theta_hat, scenario, r_eff, v, eps_minus)
            gap = float(np.max(np.abs(closed - prices)))
            if gap > get_settings().kkt_tolerance:
                logger.warning(f"Closed form and QP prices differ by {gap:.3e} with no binding cap")

    supplies = np.where(mask, theta_hat.alpha - theta_hat.beta * prices, 0.0)
    objective = _objective(prices, theta_hat, scenario, eps_minus)
    solution = PricingSolution(
        prices=prices,
        supplies=supplies,
        node_duals=sigma,
        cap_duals=cap_duals,
        active_set=active,
        objective=objective,
        solver_path=path,
        cap_condition=holds,
        closed_form_gap=gap,
        iterations=iterations,
    )
    check_solution(solution, scenario.p_max)
    return solution
