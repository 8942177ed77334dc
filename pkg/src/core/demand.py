"""
Stochastic link demand: shocks, expected and realized demand, and the
partial expectation eps_minus = E[min(eps, 0)].

Shock streams are counter based: the generator for (base_seed,
replication, day) is rebuilt from a SeedSequence spawn key, so every
policy in a comparison set sees the same shocks on the same day.
"""

import logging
from typing import Literal, Union

import numpy as np
from scipy import integrate, stats

from ..shared.error_handler import ScenarioInvariantError, ValidationError
from ..shared.models import ShockField, ShockKind, ShockSpec, off_diagonal_mask

logger = logging.getLogger(__name__)

# Spawn-key stream identifiers (second component of the key).
SHOCK_STREAM = 0
INIT_STREAM = 1
RANDOM_POLICY_STREAM = 2

QUADRATURE_ABS_TOL = 1e-12


def substream(base_seed: int, replication: int, stream: int, counter: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (replication, stream, counter) key."""
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(replication), int(stream), int(counter)))
    return np.random.Generator(np.random.Philox(seq))


def _truncated_gaussian(spec: ShockSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        draws = rng.normal(spec.mu, spec.sigma, size=max(need, 16) * 2)
        draws = draws[(draws >= spec.lo) & (draws <= spec.hi)][:need]
        out[filled:filled + draws.size] = draws
        filled += draws.size
    return out


def _draw(spec: ShockSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    if spec.kind is ShockKind.DEGENERATE_ZERO:
        return np.zeros(size)
    if spec.kind is ShockKind.UNIFORM:
        return rng.uniform(spec.lo, spec.hi, size=size)
    return _truncated_gaussian(spec, rng, size)


def sample_shocks(spec: Union[ShockSpec, ShockField], rng: np.random.Generator, n: int) -> np.ndarray:
    """
    One day's N×N shock matrix (zero diagonal).

    Off-diagonal links are drawn row-major from the shared spec; links with
    an override are redrawn afterwards, in sorted link order.
    """
    field = spec if isinstance(spec, ShockField) else ShockField(spec)
    mask = off_diagonal_mask(n)
    eps = np.zeros((n, n))
    eps[mask] = _draw(field.default, rng, n * (n - 1))
    for (i, j), override in field.overrides.items():
        eps[i, j] = _draw(override, rng, 1)[0]
    return eps


class ShockStream:
    """Deterministic day-indexed shocks for one replication."""

    def __init__(self, base_seed: int, replication: int, n: int, field: ShockField):
        self.base_seed = int(base_seed)
        self.replication = int(replication)
        self.n = n
        self.field = field if isinstance(field, ShockField) else ShockField(field)

    @property
    def key(self):
        return (self.base_seed, self.replication)

    def day(self, d: int) -> np.ndarray:
        if d < 1:
            raise ValidationError(f"Days are 1-based, got {d}")
        return sample_shocks(self.field, substream(self.base_seed, self.replication, SHOCK_STREAM, d), self.n)


def _truncated_gaussian_minus(spec: ShockSpec) -> float:
    a = spec.hi / spec.sigma
    mass = stats.norm.cdf(a) - stats.norm.cdf(-a)
    return float(spec.sigma * (stats.norm.pdf(a) - stats.norm.pdf(0.0)) / mass)


def _density(spec: ShockSpec):
    if spec.kind is ShockKind.UNIFORM:
        width = spec.hi - spec.lo
        return lambda x: 1.0 / width
    dist = stats.truncnorm(spec.lo / spec.sigma, spec.hi / spec.sigma, loc=0.0, scale=spec.sigma)
    return dist.pdf


def epsilon_minus(spec: ShockSpec, method: Literal['auto', 'quadrature'] = 'auto') -> float:
    """Partial expectation of the shock over its negative part."""
    if spec.kind is ShockKind.DEGENERATE_ZERO:
        return 0.0
    if method == 'auto':
        if spec.kind is ShockKind.UNIFORM:
            return -spec.hi / 4.0
        return _truncated_gaussian_minus(spec)
    if method != 'quadrature':
        raise ValidationError(f"Unknown epsilon_minus method: {method!r}")
    density = _density(spec)
    value, _ = integrate.quad(lambda x: x * density(x), spec.lo, 0.0, epsabs=QUADRATURE_ABS_TOL)
    return float(value)


def eps_minus_matrix(field: Union[ShockSpec, ShockField], n: int) -> np.ndarray:
    """eps_minus per link as an N×N matrix with zero diagonal."""
    field = field if isinstance(field, ShockField) else ShockField(field)
    out = np.where(off_diagonal_mask(n), epsilon_minus(field.default), 0.0)
    for (i, j), spec in field.overrides.items():
        out[i, j] = epsilon_minus(spec)
    out.setflags(write=False)
    return out


def expected_demand(alpha, beta, p):
    """alpha - beta * p (scalars or arrays)."""
    return alpha - beta * p


def realized_demand(alpha, beta, p, eps, tolerance: float = 1e-12):
    """
    alpha - beta * p + eps.

    Negative demand means the scenario is invalid; it is raised, never clamped.
    """
    value = expected_demand(alpha, beta, p) + eps
    lowest = float(np.min(value)) if np.ndim(value) else float(value)
    if lowest < -tolerance:
        raise ScenarioInvariantError(
            f"Realized demand is negative ({lowest:.6g})",
            inequality='alpha - beta*p + eps >= 0',
            details={'value': lowest}
        )
    return value
