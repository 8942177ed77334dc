"""
Per-link least-squares demand estimation with projection onto the
parameter rectangle.

The fit of Psi = alpha - beta p only needs the sufficient statistics
(n, sum p, sum p^2, sum Psi, sum p Psi); the normal equations are

    [[n,  -S1], [S1, -S2]] (alpha, beta) = (Y, PY).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np

from ..shared.error_handler import DegenerateHistoryError, ValidationError
from ..shared.models import DemandParams, ParamBounds, off_diagonal_mask
from .linalg import DETERMINANT_TOLERANCE, cramer_2x2, solve_2x2

logger = logging.getLogger(__name__)

Fallback = Literal['carry_forward', 'min_norm', 'raise']


@dataclass
class LinkHistory:
    """Ordered (day, price, realized demand) observations of one link."""
    records: List[Tuple[int, float, float]] = field(default_factory=list)

    def __post_init__(self):
        days = [r[0] for r in self.records]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise ValidationError("LinkHistory days must be strictly increasing", field='records')

    def append(self, day: int, price: float, demand: float) -> None:
        if self.records and day <= self.records[-1][0]:
            raise ValidationError(f"Day {day} does not follow day {self.records[-1][0]}", field='records')
        self.records.append((int(day), float(price), float(demand)))

    def __len__(self) -> int:
        return len(self.records)

    def statistics(self) -> Tuple[int, float, float, float, float]:
        if not self.records:
            return 0, 0.0, 0.0, 0.0, 0.0
        _, p, psi = (np.array(col, dtype=float) for col in zip(*self.records))
        return len(p), float(p.sum()), float(p @ p), float(psi.sum()), float(p @ psi)


@dataclass(frozen=True)
class Estimate:
    alpha_hat: float
    beta_hat: float
    raw_alpha: float
    raw_beta: float
    determinant: float


def dispersion(count, s1, s2):
    """n * sum p^2 - (sum p)^2, equal to half the sum of squared pairwise price gaps."""
    return count * s2 - s1 * s1


def least_squares(history: LinkHistory) -> Tuple[Tuple[float, float], float]:
    """Raw (alpha, beta) fit and the dispersion determinant."""
    count, s1, s2, y, py = history.statistics()
    if count < 2:
        raise DegenerateHistoryError(f"Least squares needs at least 2 records, got {count}")
    alpha, beta = solve_2x2(np.array([[count, -s1], [s1, -s2]]), np.array([y, py]))
    return (float(alpha), float(beta)), float(dispersion(count, s1, s2))


def project(raw: Tuple[float, float], bounds: ParamBounds) -> Tuple[float, float]:
    """Componentwise clamp onto [alpha_min, alpha_max] x [beta_min, beta_max]."""
    alpha, beta = raw
    return (
        float(np.clip(alpha, bounds.alpha_min, bounds.alpha_max)),
        float(np.clip(beta, bounds.beta_min, bounds.beta_max)),
    )


def estimate_link(history: LinkHistory, bounds: ParamBounds) -> Estimate:
    (raw_alpha, raw_beta), det = least_squares(history)
    alpha_hat, beta_hat = project((raw_alpha, raw_beta), bounds)
    return Estimate(alpha_hat, beta_hat, raw_alpha, raw_beta, det)


def squared_error(theta_hat, theta) -> float:
    """
    (alpha_hat - alpha)^2 + (beta_hat - beta)^2 for one link, or its sum
    over every link when given DemandParams.
    """
    if isinstance(theta_hat, DemandParams) and isinstance(theta, DemandParams):
        mask = off_diagonal_mask(theta.n)
        da = theta_hat.alpha[mask] - theta.alpha[mask]
        db = theta_hat.beta[mask] - theta.beta[mask]
        return float(da @ da + db @ db)
    (ah, bh), (a, b) = theta_hat, theta
    return float((ah - a) ** 2 + (bh - b) ** 2)


def standard_errors(history: LinkHistory) -> Tuple[float, float]:
    """Normal-equation standard errors of the raw (alpha, beta) fit."""
    count, s1, s2, _, _ = history.statistics()
    if count < 3:
        raise DegenerateHistoryError(f"Standard errors need at least 3 records, got {count}")
    (alpha, beta), det = least_squares(history)
    _, p, psi = (np.array(col, dtype=float) for col in zip(*history.records))
    residuals = psi - (alpha - beta * p)
    noise = float(residuals @ residuals) / (count - 2)
    # inverse of X'X for X = [1, -p]
    var_alpha = noise * s2 / det
    var_beta = noise * count / det
    return float(np.sqrt(var_alpha)), float(np.sqrt(var_beta))


def initial_estimate(bounds: ParamBounds, n: int, rng: np.random.Generator) -> DemandParams:
    """Uniform draw from the bounds rectangle for every link."""
    mask = off_diagonal_mask(n)
    alpha = rng.uniform(bounds.alpha_min, bounds.alpha_max, size=(n, n))
    beta = rng.uniform(bounds.beta_min, bounds.beta_max, size=(n, n))
    return DemandParams(np.where(mask, alpha, 0.0), np.where(mask, beta, 0.0))


class LinkEstimatorBank:
    """
    Sufficient statistics for every link of the network, updated once per
    day; estimate() solves all N(N-1) normal equations at once.
    """

    def __init__(self, n: int, bounds: ParamBounds, fallback: Fallback = 'carry_forward'):
        if fallback not in ('carry_forward', 'min_norm', 'raise'):
            raise ValidationError(f"Unknown estimator fallback: {fallback!r}", field='fallback')
        self.n = n
        self.bounds = bounds
        self.fallback = fallback
        self.mask = off_diagonal_mask(n)
        self.count = 0
        self.last_day = 0
        self.s1 = np.zeros((n, n))
        self.s2 = np.zeros((n, n))
        self.y = np.zeros((n, n))
        self.py = np.zeros((n, n))
        self.degenerate = np.zeros((n, n), dtype=bool)

    def observe(self, day: int, prices: np.ndarray, demand: np.ndarray) -> None:
        if day <= self.last_day:
            raise ValidationError(f"Day {day} does not follow day {self.last_day}", field='day')
        p = np.where(self.mask, prices, 0.0)
        psi = np.where(self.mask, demand, 0.0)
        self.count += 1
        self.last_day = day
        self.s1 += p
        self.s2 += p * p
        self.y += psi
        self.py += p * psi

    def determinant(self) -> np.ndarray:
        return dispersion(self.count, self.s1, self.s2)

    def estimate(self, previous: DemandParams, day: Optional[int] = None) -> DemandParams:
        """
        Projected least-squares estimate for every link.

        Links whose history has no price dispersion keep their previous
        estimate ('carry_forward'), take the minimum-norm fit ('min_norm'),
        or raise ('raise').
        """
        n = float(self.count)
        alpha, beta, _, ok = cramer_2x2(n, -self.s1, self.s1, -self.s2, self.y, self.py,
                                        DETERMINANT_TOLERANCE)
        ok = ok & self.mask
        degenerate = self.mask & ~ok
        self.degenerate = degenerate

        if degenerate.any():
            if self.fallback == 'raise':
                raise DegenerateHistoryError(
                    f"{int(degenerate.sum())} links have no price dispersion"
                    + (f" on day {day}" if day is not None else ""),
                    details={'links': int(degenerate.sum()), 'day': day}
                )
            if self.fallback == 'min_norm' and self.count > 0:
                # All prices equal p0: minimum-norm solution of alpha - beta p0 = mean demand.
                p0 = self.s1 / n
                level = self.y / n / (1.0 + p0 * p0)
                alpha = np.where(degenerate, level, alpha)
                beta = np.where(degenerate, -level * p0, beta)
            else:
                alpha = np.where(degenerate, previous.alpha, alpha)
                beta = np.where(degenerate, previous.beta, beta)

        alpha = np.where(self.mask, np.clip(alpha, self.bounds.alpha_min, self.bounds.alpha_max), 0.0)
        beta = np.where(self.mask, np.clip(beta, self.bounds.beta_min, self.bounds.beta_max), 0.0)
        return DemandParams(alpha, beta)
