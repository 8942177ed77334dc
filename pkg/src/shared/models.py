"""
Shared data models for the NRPS simulation lab

This module contains the immutable value types passed between the engine
modules (scenario, demand parameters, shocks, pricing solutions, decisions,
run configuration, result rows) together with their validation.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Mapping, Optional, Tuple

import numpy as np

from .error_handler import ScenarioInvariantError, ValidationError

logger = logging.getLogger(__name__)

Link = Tuple[int, int]

# Absolute slack used by every scenario inequality check.
INEQUALITY_SLACK = 1e-12


def _frozen_matrix(value: Any, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {arr.shape}", field=name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries", field=name)
    arr.setflags(write=False)
    return arr


def off_diagonal_mask(n: int) -> np.ndarray:
    """Boolean N×N mask selecting links (i, j) with i != j."""
    return ~np.eye(n, dtype=bool)


class ShockKind(Enum):
    """Supported shock distributions."""
    TRUNCATED_GAUSSIAN = "truncated_gaussian"
    UNIFORM = "uniform"
    DEGENERATE_ZERO = "degenerate_zero"


@dataclass(frozen=True)
class ShockSpec:
    """Zero-mean bounded distribution of one link's daily demand shock."""
    kind: ShockKind
    lo: float = 0.0
    hi: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not isinstance(self.kind, ShockKind):
            try:
                object.__setattr__(self, 'kind', ShockKind(self.kind))
            except ValueError:
                raise ValidationError(f"Unknown shock kind: {self.kind!r}", field='kind')
        for name in ('lo', 'hi', 'mu', 'sigma'):
            object.__setattr__(self, name, float(getattr(self, name)))
        self._validate()

    def _validate(self) -> None:
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValidationError("Shock support must be bounded", field='shock')
        if self.lo > 0 or self.hi < 0:
            raise ValidationError("Shock support must contain zero (lo <= 0 <= hi)", field='shock')

        if self.kind is ShockKind.DEGENERATE_ZERO:
            if self.lo != 0.0 or self.hi != 0.0:
                raise ValidationError("degenerate_zero shocks must have lo = hi = 0", field='shock')
            return

        if self.mu != 0.0:
            raise ValidationError("Shock mean must be exactly zero (mu = 0)", field='mu')
        if self.hi <= 0.0:
            raise ValidationError("Shock support must have positive width", field='hi')
        if abs(self.lo + self.hi) > INEQUALITY_SLACK:
            raise ValidationError(
                "Shock truncation must be symmetric (lo = -hi) to keep a zero mean",
                field='shock'
            )
        if self.kind is ShockKind.TRUNCATED_GAUSSIAN and self.sigma <= 0.0:
            raise ValidationError("Gaussian shock sigma must be positive", field='sigma')

    def to_dict(self) -> Dict[str, Any]:
        data = {'kind': self.kind.value, 'lo': self.lo, 'hi': self.hi}
        if self.kind is ShockKind.TRUNCATED_GAUSSIAN:
            data.update({'mu': self.mu, 'sigma': self.sigma})
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ShockSpec':
        kind = ShockKind(data['kind'])
        if kind is ShockKind.DEGENERATE_ZERO:
            return cls(kind)
        return cls(
            kind,
            lo=data['lo'],
            hi=data['hi'],
            mu=data.get('mu', 0.0),
            sigma=data.get('sigma', 1.0)
        )

    @classmethod
    def zero(cls) -> 'ShockSpec':
        return cls(ShockKind.DEGENERATE_ZERO)


@dataclass(frozen=True)
class ShockField:
    """A shared shock spec with optional per-link overrides."""
    default: ShockSpec
    overrides: Mapping[Link, ShockSpec] = field(default_factory=dict)

    def __post_init__(self):
        overrides = {}
        for link, spec in dict(self.overrides).items():
            i, j = (int(link[0]), int(link[1]))
            if i == j:
                raise ValidationError(f"Shock override on diagonal entry ({i}, {j})", field='overrides')
            overrides[(i, j)] = spec
        object.__setattr__(self, 'overrides', dict(sorted(overrides.items())))

    def spec_for(self, i: int, j: int) -> ShockSpec:
        return self.overrides.get((i, j), self.default)

    @property
    def lower(self) -> float:
        """Smallest shock support bound over all links."""
        return min([self.default.lo] + [s.lo for s in self.overrides.values()])

    @property
    def upper(self) -> float:
        return max([self.default.hi] + [s.hi for s in self.overrides.values()])

    def check_links(self, n: int) -> None:
        for (i, j) in self.overrides:
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"Shock override link ({i}, {j}) outside {n} locations",
                                      field='overrides')

    def to_dict(self) -> Dict[str, Any]:
        data = self.default.to_dict()
        if self.overrides:
            data['overrides'] = [
                {'origin': i, 'destination': j, **spec.to_dict()}
                for (i, j), spec in self.overrides.items()
            ]
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ShockField':
        overrides = {
            (int(item['origin']), int(item['destination'])): ShockSpec.from_dict(item)
            for item in data.get('overrides', [])
        }
        return cls(ShockSpec.from_dict(data), overrides)


@dataclass(frozen=True)
class ParamBounds:
    """The rectangle the provider knows the demand parameters lie in."""
    alpha_min: float
    alpha_max: float
    beta_min: float
    beta_max: float

    def __post_init__(self):
        for name in ('alpha_min', 'alpha_max', 'beta_min', 'beta_max'):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (0 < self.alpha_min <= self.alpha_max):
            raise ValidationError("Bounds must satisfy 0 < alpha_min <= alpha_max", field='bounds')
        if not (0 < self.beta_min <= self.beta_max):
            raise ValidationError("Bounds must satisfy 0 < beta_min <= beta_max", field='bounds')

    def contains(self, alpha: np.ndarray, beta: np.ndarray, atol: float = INEQUALITY_SLACK) -> bool:
        alpha = np.asarray(alpha, dtype=float)
        beta = np.asarray(beta, dtype=float)
        return bool(
            np.all(alpha >= self.alpha_min - atol) and np.all(alpha <= self.alpha_max + atol)
            and np.all(beta >= self.beta_min - atol) and np.all(beta <= self.beta_max + atol)
        )

    def to_dict(self) -> Dict[str, float]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ParamBounds':
        return cls(data['alpha_min'], data['alpha_max'], data['beta_min'], data['beta_max'])


@dataclass(frozen=True, eq=False)
class DemandParams:
    """Link demand parameters: expected demand on (i, j) is alpha_ij - beta_ij * p_ij."""
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = _frozen_matrix(self.alpha, 'alpha')
        beta = _frozen_matrix(self.beta, 'beta')
        if alpha.shape != beta.shape:
            raise ValidationError(
                f"alpha {alpha.shape} and beta {beta.shape} must have the same shape", field='theta'
            )
        object.__setattr__(self, 'alpha', alpha)
        object.__setattr__(self, 'beta', beta)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def links(self) -> Tuple[np.ndarray, np.ndarray]:
        mask = off_diagonal_mask(self.n)
        return self.alpha[mask], self.beta[mask]

    def within(self, bounds: ParamBounds, atol: float = INEQUALITY_SLACK) -> bool:
        alpha, beta = self.links()
        return bounds.contains(alpha, beta, atol)

    def to_dict(self) -> Dict[str, Any]:
        return {'alpha': self.alpha.tolist(), 'beta': self.beta.tolist()}

    @classmethod
    def uniform(cls, n: int, alpha: float, beta: float) -> 'DemandParams':
        mask = off_diagonal_mask(n)
        return cls(np.where(mask, alpha, 0.0), np.where(mask, beta, 0.0))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable problem instance."""
    n_locations: int
    travel_time: np.ndarray
    theta: DemandParams
    bounds: ParamBounds
    shock: ShockField
    cost_c: float
    p_max: float
    rho: float
    eta: float
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.shock, ShockSpec):
            object.__setattr__(self, 'shock', ShockField(self.shock))
        xi = _frozen_matrix(self.travel_time, 'travel_time').copy()
        np.fill_diagonal(xi, 0.0)
        xi.setflags(write=False)
        object.__setattr__(self, 'travel_time', xi)
        for name in ('cost_c', 'p_max', 'rho', 'eta'):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, 'metadata', dict(self.metadata))
        self._validate()

    def _validate(self) -> None:
        from .settings import get_settings

        n = self.n_locations
        if not isinstance(n, (int, np.integer)) or n < 2:
            raise ValidationError("n_locations must be an integer >= 2", field='n_locations')
        max_locations = get_settings().max_locations
        if n > max_locations:
            raise ValidationError(
                f"n_locations {n} exceeds the configured cap of {max_locations}", field='n_locations'
            )
        if self.travel_time.shape != (n, n):
            raise ValidationError(
                f"travel_time shape {self.travel_time.shape} does not match N={n}", field='travel_time'
            )
        if self.theta.n != n:
            raise ValidationError(f"theta has {self.theta.n} locations, expected {n}", field='theta')
        self.shock.check_links(n)

        mask = off_diagonal_mask(n)
        if np.any(self.travel_time[mask] <= 0):
            raise ScenarioInvariantError("Travel times must be positive off the diagonal",
                                         inequality='xi_ij > 0')
        if not self.theta.within(self.bounds):
            raise ScenarioInvariantError(
                "True demand parameters lie outside the parameter bounds",
                inequality='alpha_min <= alpha_ij <= alpha_max, beta_min <= beta_ij <= beta_max'
            )
        if not (0 < self.cost_c < self.p_max):
            raise ScenarioInvariantError(
                f"Need 0 < c < p_max, got c={self.cost_c}, p_max={self.p_max}",
                inequality='0 < c < p_max'
            )
        floor = self.bounds.alpha_min - self.bounds.beta_max * self.p_max + self.shock.lower
        if floor < -INEQUALITY_SLACK:
            raise ScenarioInvariantError(
                f"Demand can turn negative: alpha_min - beta_max*p_max + eps_lo = {floor:.6g} < 0",
                inequality='alpha_min - beta_max*p_max + eps_lo >= 0',
                details={'value': floor}
            )
        if not self.rho > 0:
            raise ValidationError(f"rho must be positive, got {self.rho}", field='rho')
        if not self.eta > 0:
            raise ValidationError(f"eta must be positive, got {self.eta}", field='eta')
        if not self.eta_in_guaranteed_region:
            logger.warning(f"eta={self.eta} is outside (0, 1/2); decay guarantees do not apply")

    @property
    def eta_in_guaranteed_region(self) -> bool:
        return 0.0 < self.eta < 0.5

    @property
    def links(self) -> np.ndarray:
        return off_diagonal_mask(self.n_locations)

    def with_controls(self, rho: Optional[float] = None, eta: Optional[float] = None) -> 'Scenario':
        """Copy with rho and/or eta replaced."""
        return dataclasses.replace(
            self,
            rho=self.rho if rho is None else rho,
            eta=self.eta if eta is None else eta
        )


class SolverPath(str, Enum):
    """Which route produced a day's pricing solution."""
    CLOSED_FORM = "closed_form"
    ACTIVE_SET = "active_set"
    ACTIVE_SET_EMPTY = "active_set_empty"
    OFFSET = "offset"


@dataclass(frozen=True, eq=False)
class PricingSolution:
    """Optimal single-day prices and supplies with their multipliers."""
    prices: np.ndarray
    supplies: np.ndarray
    node_duals: np.ndarray
    cap_duals: np.ndarray
    active_set: FrozenSet[Link]
    objective: float
    solver_path: SolverPath
    cap_condition: bool
    closed_form_gap: Optional[float] = None
    iterations: int = 0

    @property
    def active_set_size(self) -> int:
        return len(self.active_set)


@dataclass(frozen=True, eq=False)
class DecisionMeta:
    policy: str
    active_set_size: int
    solver_path: SolverPath
    estimate: Optional[DemandParams] = None
    price_offset: Optional[np.ndarray] = None
    supply_offset: Optional[float] = None
    cap_condition: Optional[bool] = None


@dataclass(frozen=True, eq=False)
class Decision:
    """Prices and supplies implemented on one day."""
    prices: np.ndarray
    supplies: np.ndarray
    meta: DecisionMeta


class PolicyName(str, Enum):
    NRPS = "nrps"
    CLAIRVOYANT = "clairvoyant"
    MYOPIC = "myopic"
    PERTURBED = "perturbed"
    RANDOM = "random"


OFFSET_POLICIES = frozenset({PolicyName.NRPS, PolicyName.PERTURBED})


@dataclass(frozen=True)
class PolicyKind:
    """A policy together with its control parameters."""
    name: PolicyName
    rho: Optional[float] = None
    eta: Optional[float] = None
    fallback: str = "carry_forward"

    def __post_init__(self):
        if not isinstance(self.name, PolicyName):
            try:
                object.__setattr__(self, 'name', PolicyName(str(self.name).strip().lower()))
            except ValueError:
                raise ValidationError(f"Unknown policy: {self.name!r}", field='policies')
        if self.name in OFFSET_POLICIES:
            if self.rho is None or self.eta is None:
                raise ValidationError(f"{self.name.value} needs rho and eta", field='policies')
            if not self.rho > 0:
                raise ValidationError(f"rho must be positive, got {self.rho}", field='rho')
            if not self.eta > 0:
                raise ValidationError(f"eta must be positive, got {self.eta}", field='eta')
        if self.fallback not in ("carry_forward", "min_norm"):
            raise ValidationError(f"Unknown estimator fallback: {self.fallback!r}", field='fallback')

    @property
    def label(self) -> str:
        return self.name.value

    @classmethod
    def for_scenario(cls, name: str, scenario: Scenario, fallback: str = "carry_forward") -> 'PolicyKind':
        try:
            policy = PolicyName(str(name).strip().lower())
        except ValueError:
            raise ValidationError(f"Unknown policy: {name!r}", field='policies')
        if policy in OFFSET_POLICIES:
            return cls(policy, scenario.rho, scenario.eta, fallback)
        return cls(policy, fallback=fallback)


@dataclass(frozen=True)
class RunConfig:
    """Horizon, replication count, seed and policy set of one experiment."""
    horizon: int
    replications: int
    base_seed: int
    policies: Tuple[PolicyKind, ...]
    record_every: int = 1
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'policies', tuple(self.policies))
        if self.horizon < 1:
            raise ValidationError("Horizon D must be >= 1", field='horizon')
        if self.replications < 1:
            raise ValidationError("Replications must be >= 1", field='replications')
        if self.base_seed < 0:
            raise ValidationError("Base seed must be a non-negative integer", field='base_seed')
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1", field='record_every')
        if self.workers < 1:
            raise ValidationError("workers must be >= 1", field='workers')
        labels = [p.label for p in self.policies]
        if not labels:
            raise ValidationError("At least one policy is required", field='policies')
        if len(set(labels)) != len(labels):
            raise ValidationError(f"Duplicate policies in {labels}", field='policies')

    @property
    def policy_labels(self) -> Tuple[str, ...]:
        return tuple(p.label for p in self.policies)


@dataclass(frozen=True)
class ResultRow:
    """One recorded day of one policy in one replication."""
    replication: int
    policy: str
    day: int
    realized_payoff: float
    cum_avg_payoff: float
    regret_cum_avg: float
    est_error: float
    active_set_size: int
    dTh_flag: int

    @classmethod
    def columns(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)
