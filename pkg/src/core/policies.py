"""
Decision policies behind a uniform per-day interface.

Learning policies are built from a ProviderView, which carries the
parameter bounds and market terms but never the true demand parameters.
"""

import dataclasses
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..shared.error_handler import NrpsLabError, ValidationError
from ..shared.models import (
    Decision,
    DecisionMeta,
    DemandParams,
    ParamBounds,
    PolicyKind,
    PolicyName,
    PricingSolution,
    Scenario,
    SolverPath,
    off_diagonal_mask,
)
from .demand import INIT_STREAM, RANDOM_POLICY_STREAM, eps_minus_matrix, substream
from .estimation import LinkEstimatorBank, initial_estimate
from .pricing import solve_day

logger = logging.getLogger(__name__)

RngFactory = Callable[[int], np.random.Generator]


@dataclass(frozen=True, eq=False)
class ProviderView:
    """Everything a learning provider may know about the market."""
    n_locations: int
    travel_time: np.ndarray
    bounds: ParamBounds
    cost_c: float
    p_max: float
    rho: float
    eta: float
    eps_minus: np.ndarray

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> 'ProviderView':
        return cls(
            n_locations=scenario.n_locations,
            travel_time=scenario.travel_time,
            bounds=scenario.bounds,
            cost_c=scenario.cost_c,
            p_max=scenario.p_max,
            rho=scenario.rho,
            eta=scenario.eta,
            eps_minus=eps_minus_matrix(scenario.shock, scenario.n_locations),
        )


def offset_size(rho: float, eta: float, day: int) -> float:
    """rho * d^(-eta)."""
    return float(rho * day ** (-eta))


def apply_offsets(solution_prices: np.ndarray, solution_supplies: np.ndarray, beta_hat: np.ndarray,
                  rho: float, eta: float, day: int):
    """Lower every price by rho d^-eta / beta_hat and raise every supply by rho d^-eta."""
    mask = off_diagonal_mask(beta_hat.shape[0])
    step = offset_size(rho, eta, day)
    price_offset = np.where(mask, step / np.where(mask, beta_hat, 1.0), 0.0)
    prices = np.where(mask, solution_prices - price_offset, 0.0)
    supplies = np.where(mask, solution_supplies + step, 0.0)
    return prices, supplies, price_offset, step


def _decision(policy: str, sol: PricingSolution, estimate: Optional[DemandParams]) -> Decision:
    return Decision(
        prices=sol.prices,
        supplies=sol.supplies,
        meta=DecisionMeta(
            policy=policy,
            active_set_size=sol.active_set_size,
            solver_path=sol.solver_path,
            estimate=estimate,
            cap_condition=sol.cap_condition,
        ),
    )


class Policy(ABC):
    """A provider that decides prices and supplies day by day."""

    def __init__(self, kind: PolicyKind):
        self.kind = kind

    @property
    def label(self) -> str:
        return self.kind.label

    @abstractmethod
    def decide(self, day: int) -> Decision:
        """Decision for day d (1-based)."""

    def observe(self, day: int, decision: Decision, realized_demand: np.ndarray) -> None:
        """Feed back the realized link demand of day d."""


class ClairvoyantPolicy(Policy):
    """Knows the true parameters; solves once and repeats the answer."""

    def __init__(self, scenario: Scenario, kind: Optional[PolicyKind] = None):
        super().__init__(kind or PolicyKind(PolicyName.CLAIRVOYANT))
        self.scenario = scenario
        eps_minus = eps_minus_matrix(scenario.shock, scenario.n_locations)
        self.solution = solve_day(scenario.theta, scenario, eps_minus)
        self._decision = _decision(self.label, self.solution, scenario.theta)

    def decide(self, day: int) -> Decision:
        return self._decision


class _LearningPolicy(Policy):
    def __init__(self, kind: PolicyKind, view: ProviderView, init_rng: np.random.Generator,
                 fallback: str = 'carry_forward'):
        super().__init__(kind)
        self.view = view
        self.estimators = LinkEstimatorBank(view.n_locations, view.bounds, fallback)
        self.theta_hat = initial_estimate(view.bounds, view.n_locations, init_rng)

    def _refit(self, day: int) -> DemandParams:
        if day > 1:
            self.theta_hat = self.estimators.estimate(self.theta_hat, day)
        return self.theta_hat

    def _solve(self, theta_hat: DemandParams) -> PricingSolution:
        return solve_day(theta_hat, self.view, self.view.eps_minus)

    def observe(self, day: int, decision: Decision, realized_demand: np.ndarray) -> None:
        self.estimators.observe(day, decision.prices, realized_demand)


class NrpsPolicy(_LearningPolicy):
    """
    Odd days: refit on all past days and solve. Even days: repeat the odd
    day's solution with prices lowered by rho d^-eta / beta_hat and supplies
    raised by rho d^-eta.
    """

    def __init__(self, kind: PolicyKind, view: ProviderView, init_rng: np.random.Generator):
        super().__init__(kind, view, init_rng, fallback='raise')
        self.last_odd: Optional[PricingSolution] = None
        self.last_odd_estimate: Optional[DemandParams] = None

    def decide(self, day: int) -> Decision:
        if day % 2 == 1:
            theta_hat = self._refit(day)
            solution = self._solve(theta_hat)
            self.last_odd, self.last_odd_estimate = solution, theta_hat
            return _decision(self.label, solution, theta_hat)

        if self.last_odd is None:
            raise ValidationError(f"Even day {day} has no preceding odd-day solution", field='day')
        prices, supplies, price_offset, step = apply_offsets(
            self.last_odd.prices, self.last_odd.supplies, self.last_odd_estimate.beta,
            self.kind.rho, self.kind.eta, day
        )
        return Decision(
            prices=prices,
            supplies=supplies,
            meta=DecisionMeta(
                policy=self.label,
                active_set_size=self.last_odd.active_set_size,
                solver_path=SolverPath.OFFSET,
                estimate=self.last_odd_estimate,
                price_offset=price_offset,
                supply_offset=step,
                cap_condition=self.last_odd.cap_condition,
            ),
        )


class MyopicPolicy(_LearningPolicy):
    """Refits and solves every day, without exploration."""

    def __init__(self, kind: PolicyKind, view: ProviderView, init_rng: np.random.Generator):
        super().__init__(kind, view, init_rng, fallback=kind.fallback)

    def decide(self, day: int) -> Decision:
        theta_hat = self._refit(day)
        return _decision(self.label, self._solve(theta_hat), theta_hat)


class PerturbedMyopicPolicy(MyopicPolicy):
    """Myopic decision with the NRPS even-day offsets applied every day."""

    OFFSET_SCHEDULE = "every_day"

    def decide(self, day: int) -> Decision:
        theta_hat = self._refit(day)
        solution = self._solve(theta_hat)
        prices, supplies, price_offset, step = apply_offsets(
            solution.prices, solution.supplies, theta_hat.beta, self.kind.rho, self.kind.eta, day
        )
        return Decision(
            prices=prices,
            supplies=supplies,
            meta=DecisionMeta(
                policy=self.label,
                active_set_size=solution.active_set_size,
                solver_path=solution.solver_path,
                estimate=theta_hat,
                price_offset=price_offset,
                supply_offset=step,
                cap_condition=solution.cap_condition,
            ),
        )


class RandomPolicy(Policy):
    """Guesses theta uniformly from the bounds every day and solves."""

    def __init__(self, kind: PolicyKind, view: ProviderView, rng: np.random.Generator):
        super().__init__(kind)
        self.view = view
        self.rng = rng

    def decide(self, day: int) -> Decision:
        theta_hat = initial_estimate(self.view.bounds, self.view.n_locations, self.rng)
        solution = solve_day(theta_hat, self.view, self.view.eps_minus)
        return _decision(self.label, solution, theta_hat)


def build_policy(kind: PolicyKind, scenario: Scenario, base_seed: int, replication: int,
                 view: Optional[ProviderView] = None,
                 clairvoyant: Optional[ClairvoyantPolicy] = None) -> Policy:
    """
    Instantiate a policy for one episode.

    Learning policies share the initial-estimate stream of the
    replication, so they all start from the same theta_hat^0.
    """
    if kind.name is PolicyName.CLAIRVOYANT:
        return clairvoyant if clairvoyant is not None else ClairvoyantPolicy(scenario, kind)

    view = view or ProviderView.from_scenario(scenario)
    if kind.rho is not None:
        view = dataclasses.replace(view, rho=kind.rho, eta=kind.eta)
    if kind.name is PolicyName.RANDOM:
        return RandomPolicy(kind, view, substream(base_seed, replication, RANDOM_POLICY_STREAM))

    init_rng = substream(base_seed, replication, INIT_STREAM)
    if kind.name is PolicyName.NRPS:
        return NrpsPolicy(kind, view, init_rng)
    if kind.name is PolicyName.MYOPIC:
        return MyopicPolicy(kind, view, init_rng)
    if kind.name is PolicyName.PERTURBED:
        return PerturbedMyopicPolicy(kind, view, init_rng)
    raise NrpsLabError(f"No policy implementation for {kind.name}")
