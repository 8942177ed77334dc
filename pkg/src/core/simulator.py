"""
Day-by-day episodes, realized payoffs, regret and estimation-error
curves, and the threshold day after which no price cap binds.

Every policy of one replication is run against the same ShockStream, and
a clairvoyant reference is always run so regret is available.
"""

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..shared.error_handler import (
    NrpsLabError,
    ScenarioInvariantError,
    SimulationError,
    StreamMismatchError,
    ValidationError,
)
from ..shared.models import (
    Decision,
    PolicyKind,
    PolicyName,
    ResultRow,
    RunConfig,
    Scenario,
    off_diagonal_mask,
)
from ..shared.performance_optimizer import PerformanceMetrics, ReplicationPool
from .demand import ShockStream, realized_demand
from .estimation import squared_error
from .policies import ProviderView, build_policy
from .pricing import FLOW_BALANCE_TOLERANCE, flow_imbalance

logger = logging.getLogger(__name__)

SUMMARY_METRICS = ('cum_avg_payoff', 'regret_cum_avg', 'est_error')


@dataclass
class Trajectory:
    """Per-day payoffs, estimation errors and active-set sizes of one episode."""
    policy: str
    replication: int
    stream_key: Tuple[int, int]
    horizon: int
    payoff: np.ndarray
    est_error: np.ndarray
    active_set_size: np.ndarray
    solver_paths: Dict[str, int] = field(default_factory=dict)
    regret: Optional[np.ndarray] = None
    d_th: Optional[int] = None

    @property
    def cum_avg_payoff(self) -> np.ndarray:
        return np.cumsum(self.payoff) / np.arange(1, self.horizon + 1)

    def recorded_days(self, stride: int = 1) -> np.ndarray:
        return np.arange(1, self.horizon + 1, stride)

    def rows(self, stride: int = 1) -> List[ResultRow]:
        days = self.recorded_days(stride)
        idx = days - 1
        cum_avg = self.cum_avg_payoff
        regret = self.regret if self.regret is not None else np.full(self.horizon, np.nan)
        return [
            ResultRow(
                replication=self.replication,
                policy=self.policy,
                day=int(d),
                realized_payoff=float(self.payoff[i]),
                cum_avg_payoff=float(cum_avg[i]),
                regret_cum_avg=float(regret[i]),
                est_error=float(self.est_error[i]),
                active_set_size=int(self.active_set_size[i]),
                dTh_flag=int(self.d_th is not None and d >= self.d_th),
            )
            for d, i in zip(days, idx)
        ]


def realized_payoff(decision: Decision, shocks: np.ndarray, scenario: Scenario) -> float:
    """sum xi min(Psi, w) p - sum xi w c, with Psi the realized demand."""
    mask = off_diagonal_mask(scenario.n_locations)
    psi = realized_demand(scenario.theta.alpha[mask], scenario.theta.beta[mask],
                          decision.prices[mask], shocks[mask])
    w, p, xi = decision.supplies[mask], decision.prices[mask], scenario.travel_time[mask]
    return float(np.sum(xi * np.minimum(psi, w) * p) - np.sum(xi * w * scenario.cost_c))


def check_decision(decision: Decision, p_max: float) -> None:
    mask = off_diagonal_mask(decision.prices.shape[0])
    if np.any(decision.prices[mask] > p_max + FLOW_BALANCE_TOLERANCE):
        raise ScenarioInvariantError("Decision price exceeds p_max", inequality='p_ij <= p_max')
    if np.any(decision.supplies[mask] < -FLOW_BALANCE_TOLERANCE):
        raise ScenarioInvariantError("Decision supply is negative", inequality='w_ij >= 0')
    residual = float(np.max(np.abs(flow_imbalance(decision.supplies))))
    if residual > FLOW_BALANCE_TOLERANCE:
        raise ScenarioInvariantError(
            f"Decision flow balance residual {residual:.3e}",
            inequality='sum_j w_ij = sum_j w_ji',
            details={'residual': residual}
        )


def run_episode(kind: PolicyKind, scenario: Scenario, horizon: int, shock_stream: ShockStream,
                view: Optional[ProviderView] = None) -> Trajectory:
    """
    Run one policy for days 1..D against the given shock stream.

    The policy is built from its kind with the stream's (base_seed, replication)
    key, so its initial estimate and random guesses follow that key.
    """
    policy = build_policy(kind, scenario, shock_stream.base_seed, shock_stream.replication, view=view)
    n = scenario.n_locations
    mask = off_diagonal_mask(n)
    payoff = np.empty(horizon)
    est_error = np.empty(horizon)
    active = np.zeros(horizon, dtype=int)
    paths: Counter = Counter()
    start = time.time()

    for d in range(1, horizon + 1):
        try:
            decision = policy.decide(d)
            check_decision(decision, scenario.p_max)
            shocks = shock_stream.day(d)
            psi = np.zeros((n, n))
            psi[mask] = realized_demand(scenario.theta.alpha[mask], scenario.theta.beta[mask],
                                        decision.prices[mask], shocks[mask])
            payoff[d - 1] = realized_payoff(decision, shocks, scenario)
            policy.observe(d, decision, psi)
        except NrpsLabError as e:
            raise SimulationError(
                f"{policy.label} failed on day {d}: {e.message}",
                policy=policy.label,
                replication=shock_stream.replication,
                day=d,
                cause=e
            ) from e

        meta = decision.meta
        est_error[d - 1] = squared_error(meta.estimate, scenario.theta) if meta.estimate is not None else np.nan
        active[d - 1] = meta.active_set_size
        paths[meta.solver_path.value] += 1

    trajectory = Trajectory(
        policy=policy.label,
        replication=shock_stream.replication,
        stream_key=shock_stream.key,
        horizon=horizon,
        payoff=payoff,
        est_error=est_error,
        active_set_size=active,
        solver_paths=dict(sorted(paths.items())),
    )
    trajectory.d_th = detect_d_th(trajectory)
    logger.debug(
        f"Episode {policy.label} replication {shock_stream.replication} finished",
        extra={'extra_fields': {
            'event_type': 'episode_end',
            'policy': policy.label,
            'replication': shock_stream.replication,
            'duration_ms': round((time.time() - start) * 1000, 2),
            'd_th': trajectory.d_th,
        }}
    )
    return trajectory


def regret_curve(policy_traj: Trajectory, clair_traj: Trajectory) -> np.ndarray:
    """Delta_D = (1/D) sum_{d<=D} (Pi_clair - Pi_policy) for D = 1..horizon."""
    if policy_traj.stream_key != clair_traj.stream_key:
        raise StreamMismatchError(
            f"Trajectories come from different shock streams: "
            f"{policy_traj.stream_key} vs {clair_traj.stream_key}",
            details={'policy': list(policy_traj.stream_key), 'reference': list(clair_traj.stream_key)}
        )
    if policy_traj.horizon != clair_traj.horizon:
        raise StreamMismatchError(
            f"Trajectory horizons differ: {policy_traj.horizon} vs {clair_traj.horizon}"
        )
    gap = clair_traj.payoff - policy_traj.payoff
    return np.cumsum(gap) / np.arange(1, gap.size + 1)


def detect_d_th(trajectory: Trajectory) -> Optional[int]:
    """First day from which every later day has an empty active set; None if caps bind on the last day."""
    binding = np.flatnonzero(trajectory.active_set_size > 0)
    if binding.size == 0:
        return 1
    last = int(binding[-1]) + 1
    if last >= trajectory.horizon:
        return None
    return last + 1


def estimation_error_curve(trajectory: Trajectory, stride: int = 1) -> np.ndarray:
    """Network squared estimation error at the recorded days."""
    return trajectory.est_error[trajectory.recorded_days(stride) - 1]


def estimation_rate_shape(days: np.ndarray, eta: float) -> np.ndarray:
    """ln(d-1) / (d-1)^(1-2 eta) at each day (zero at d <= 2)."""
    d = np.asarray(days, dtype=float) - 1.0
    safe = np.where(d > 1.0, d, 2.0)
    return np.where(d > 1.0, np.log(safe) / safe ** (1.0 - 2.0 * eta), 0.0)


def trend_slope(days: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of log(values) against log(days)."""
    days = np.asarray(days, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (days > 0) & (values > 0) & np.isfinite(values)
    slope, _ = np.polyfit(np.log(days[keep]), np.log(values[keep]), 1)
    return float(slope)


@dataclass
class ReplicationResult:
    replication: int
    trajectories: Dict[str, Trajectory]
    reference: Trajectory


def run_replication(scenario: Scenario, run_config: RunConfig, replication: int) -> ReplicationResult:
    """Every configured policy plus the clairvoyant reference on one common shock stream."""
    stream = ShockStream(run_config.base_seed, replication, scenario.n_locations, scenario.shock)
    view = ProviderView.from_scenario(scenario)
    reference = run_episode(PolicyKind(PolicyName.CLAIRVOYANT), scenario, run_config.horizon, stream)
    reference.regret = regret_curve(reference, reference)

    trajectories: Dict[str, Trajectory] = {}
    for kind in run_config.policies:
        if kind.name is PolicyName.CLAIRVOYANT:
            trajectories[kind.label] = reference
            continue
        trajectory = run_episode(kind, scenario, run_config.horizon, stream, view=view)
        trajectory.regret = regret_curve(trajectory, reference)
        trajectories[kind.label] = trajectory
    return ReplicationResult(replication, trajectories, reference)


@dataclass
class ExperimentResult:
    scenario: Scenario
    run_config: RunConfig
    replications: List[ReplicationResult]
    metrics: PerformanceMetrics

    def trajectories(self) -> List[Trajectory]:
        """All trajectories ordered by (replication, configured policy order)."""
        return [
            rep.trajectories[label]
            for rep in self.replications
            for label in self.run_config.policy_labels
        ]

    def solver_path_counts(self) -> Dict[str, Dict[str, int]]:
        totals: Dict[str, Counter] = {label: Counter() for label in self.run_config.policy_labels}
        for traj in self.trajectories():
            totals[traj.policy].update(traj.solver_paths)
        return {label: dict(sorted(c.items())) for label, c in totals.items()}

    def d_th(self) -> Dict[str, List[Optional[int]]]:
        return {
            label: [rep.trajectories[label].d_th for rep in self.replications]
            for label in self.run_config.policy_labels
        }


def run_experiment(scenario: Scenario, run_config: RunConfig) -> ExperimentResult:
    """Run every replication (concurrently when workers > 1) and merge in replication order."""
    metrics = PerformanceMetrics()
    pool = ReplicationPool(run_config.workers, metrics)
    replications = pool.map(partial(run_replication, scenario, run_config), range(run_config.replications))
    metrics.finish()
    return ExperimentResult(scenario, run_config, replications, metrics)


def summarize(result: ExperimentResult) -> pd.DataFrame:
    """
    Long-format curves: replication mean, standard error, and the first
    replication's single-seed curve for each policy and metric, plus the
    estimation-rate reference shape.
    """
    stride = result.run_config.record_every
    frames = []
    for label in result.run_config.policy_labels:
        trajs = [rep.trajectories[label] for rep in result.replications]
        days = trajs[0].recorded_days(stride)
        idx = days - 1
        series = {
            'cum_avg_payoff': np.stack([t.cum_avg_payoff[idx] for t in trajs]),
            'regret_cum_avg': np.stack([t.regret[idx] for t in trajs]),
            'est_error': np.stack([estimation_error_curve(t, stride) for t in trajs]),
        }
        for metric in SUMMARY_METRICS:
            values = series[metric]
            stats = {
                'mean': values.mean(axis=0),
                'stderr': (values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])
                           if values.shape[0] > 1 else np.full(days.size, np.nan)),
                'replication_0': values[0],
            }
            for statistic, value in stats.items():
                frames.append(pd.DataFrame({
                    'policy': label,
                    'day': days,
                    'metric': metric,
                    'statistic': statistic,
                    'value': value,
                }))

    days = np.arange(1, result.run_config.horizon + 1, stride)
    frames.append(pd.DataFrame({
        'policy': 'reference',
        'day': days,
        'metric': 'est_error_rate_shape',
        'statistic': 'shape',
        'value': estimation_rate_shape(days, result.scenario.eta),
    }))
    return pd.concat(frames, ignore_index=True)


def final_values(result: ExperimentResult, label: str, metric: str, day: int) -> np.ndarray:
    """Per-replication value of a metric on one day."""
    values = []
    for rep in result.replications:
        traj = rep.trajectories[label]
        if metric == 'cum_avg_payoff':
            values.append(traj.cum_avg_payoff[day - 1])
        elif metric == 'regret_cum_avg':
            values.append(traj.regret[day - 1])
        elif metric == 'est_error':
            values.append(estimation_error_curve(traj)[day - 1])
        else:
            raise ValidationError(f"Unknown metric {metric!r}", field="metric")
    return np.array(values)


def policy_kinds(names: Sequence[str], scenario: Scenario, fallback: str = 'carry_forward') -> Tuple[PolicyKind, ...]:
    return tuple(PolicyKind.for_scenario(name, scenario, fallback) for name in names)
