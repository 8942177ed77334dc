"""
Command line surface of the simulation lab.

    nrps-lab run --scenario s.json --D 2000 --reps 20 --policies nrps,myopic
    nrps-lab validate --scenario s.json
    nrps-lab export-scenario --scenario s.json --out explicit.json

Every failure ends with one JSON line on stderr and a nonzero exit.
"""

import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import click

from ..shared.error_handler import (
    ConfigurationError,
    ErrorHandler,
    error_handler_decorator,
    exit_code_for,
)
from ..shared.logging_config import setup_logging
from ..shared.models import PolicyName, RunConfig, Scenario, SolverPath
from ..shared.settings import get_settings
from ..shared.utils import generate_id
from .policies import PerturbedMyopicPolicy
from .scenario_io import (
    cap_condition_report,
    config_hash,
    export_plot_data,
    export_results,
    export_scenario,
    export_sweep_plot_data,
    load_scenario,
    write_run_metadata,
)
from .simulator import ExperimentResult, final_values, policy_kinds, run_experiment, summarize

SERVICE = 'nrps-lab'
DEFAULT_POLICIES = ','.join(p.value for p in PolicyName)
NO_GUARANTEE = "caps bound on some days; no published decay guarantee covers this regime"


class JsonErrorGroup(click.Group):
    """Click group whose usage errors also end in the single JSON error line."""

    def main(self, *args, **kwargs):
        kwargs['standalone_mode'] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.exceptions.Abort:
            sys.exit(1)
        except click.ClickException as e:
            error = ConfigurationError(e.format_message(), source='command line')
            sys.stderr.write(ErrorHandler(SERVICE, 'cli').format_error_line(error) + "\n")
            sys.exit(exit_code_for(error))
        sys.exit(rv if isinstance(rv, int) else 0)


def parse_floats(raw: Optional[str], flag: str) -> List[float]:
    if raw is None:
        return []
    try:
        values = [float(v) for v in raw.split(',') if v.strip()]
    except ValueError:
        raise ConfigurationError(f"{flag} expects comma-separated numbers, got {raw!r}", source=flag)
    if not values:
        raise ConfigurationError(f"{flag} is empty", source=flag)
    return values


def parse_policies(raw: str) -> List[str]:
    names = [v.strip().lower() for v in raw.split(',') if v.strip()]
    known = {p.value for p in PolicyName}
    unknown = [n for n in names if n not in known]
    if unknown or not names:
        raise ConfigurationError(
            f"--policies must name some of {sorted(known)}, got {raw!r}", source='--policies'
        )
    return names


def control_grid(scenario: Scenario, eta: Optional[float], rho: Optional[float],
                 sweep_eta: Optional[str], sweep_rho: Optional[str]) -> List[Tuple[float, float]]:
    """(eta, rho) combinations to run, eta-major."""
    if eta is not None and sweep_eta is not None:
        raise ConfigurationError("Use either --eta or --sweep-eta, not both", source='--eta')
    if rho is not None and sweep_rho is not None:
        raise ConfigurationError("Use either --rho or --sweep-rho, not both", source='--rho')
    etas = parse_floats(sweep_eta, '--sweep-eta') or [scenario.eta if eta is None else eta]
    rhos = parse_floats(sweep_rho, '--sweep-rho') or [scenario.rho if rho is None else rho]
    for value, flag in [(e, 'eta') for e in etas] + [(r, 'rho') for r in rhos]:
        if not value > 0:
            raise ConfigurationError(f"{flag} must be positive, got {value}", source=f'--{flag}')
    return [(e, r) for e in etas for r in rhos]


def combo_dir(out: Path, eta: float, rho: float, sweeping: bool) -> Path:
    return out / f"eta_{eta:g}_rho_{rho:g}" if sweeping else out


def run_metadata(result: ExperimentResult, run_id: str, flags: dict, myopic_fallback: str) -> dict:
    scenario, run_config = result.scenario, result.run_config
    path_counts = result.solver_path_counts()
    binding_days = sum(c.get(SolverPath.ACTIVE_SET.value, 0) for c in path_counts.values())
    return {
        'run_id': run_id,
        'flags': flags,
        'scenario': {
            'source': scenario.metadata.get('source'),
            'name': scenario.metadata.get('name'),
            'config_hash': config_hash(scenario),
            'n_locations': scenario.n_locations,
            'generator_seed': scenario.metadata.get('generator_seed'),
            'generated': scenario.metadata.get('generated', []),
            'true_cap_condition': cap_condition_report(scenario),
        },
        'seeds': {
            'base_seed': run_config.base_seed,
            'replications': run_config.replications,
            'stream_keys': [[run_config.base_seed, r] for r in range(run_config.replications)],
        },
        'horizon': run_config.horizon,
        'record_every': run_config.record_every,
        'policies': list(run_config.policy_labels),
        'controls': {'eta': scenario.eta, 'rho': scenario.rho},
        'eta_in_guaranteed_region': scenario.eta_in_guaranteed_region,
        'eta_warning': None if scenario.eta_in_guaranteed_region
        else f"eta={scenario.eta} is outside (0, 1/2)",
        'solver_path_counts': path_counts,
        'd_th': result.d_th(),
        'cap_binding_regime': {
            'days': binding_days,
            'flag': NO_GUARANTEE if binding_days else None,
        },
        'offset_schedule': {
            PolicyName.NRPS.value: 'even_days',
            PolicyName.PERTURBED.value: PerturbedMyopicPolicy.OFFSET_SCHEDULE,
        },
        'myopic_fallback': myopic_fallback,
        'timing': result.metrics.to_dict(),
    }


@click.group(cls=JsonErrorGroup)
def cli():
    """Network revenue management pricing and supply simulation lab."""


@cli.command()
@click.option('--scenario', 'scenario_path', required=True, type=click.Path(path_type=Path),
              help='Scenario JSON file.')
@click.option('--D', 'horizon', type=int, default=2000, show_default=True, help='Horizon in days.')
@click.option('--reps', type=int, default=1, show_default=True, help='Replications.')
@click.option('--seed', type=int, default=0, show_default=True, help='Base seed.')
@click.option('--policies', default=DEFAULT_POLICIES, show_default=True,
              help='Comma-separated policy list.')
@click.option('--out', type=click.Path(path_type=Path), default=None,
              help='Output directory (default: NRPS_OUTPUT_DIR or ./results).')
@click.option('--record-every', type=int, default=1, show_default=True, help='Day stride of recorded rows.')
@click.option('--eta', type=float, default=None, help='Override the scenario eta.')
@click.option('--rho', type=float, default=None, help='Override the scenario rho.')
@click.option('--sweep-eta', default=None, help='Comma-separated eta values.')
@click.option('--sweep-rho', default=None, help='Comma-separated rho values.')
@click.option('--workers', type=int, default=None, help='Replication worker processes.')
@click.option('--myopic-fallback', type=click.Choice(['carry_forward', 'min_norm']),
              default='carry_forward', show_default=True,
              help='Estimator behaviour on a history without price dispersion.')
@error_handler_decorator(SERVICE, 'run')
def run(scenario_path: Path, horizon: int, reps: int, seed: int, policies: str, out: Optional[Path],
        record_every: int, eta: Optional[float], rho: Optional[float], sweep_eta: Optional[str],
        sweep_rho: Optional[str], workers: Optional[int], myopic_fallback: str):
    """Simulate every policy under common shocks and write results."""
    settings = get_settings()
    log = setup_logging(SERVICE, 'run')
    run_id = generate_id('run-')
    out = out if out is not None else settings.output_dir
    workers = workers if workers is not None else settings.workers

    names = parse_policies(policies)
    base = load_scenario(scenario_path)
    grid = control_grid(base, eta, rho, sweep_eta, sweep_rho)
    sweeping = len(grid) > 1
    flags = {
        'scenario': str(scenario_path), 'D': horizon, 'reps': reps, 'seed': seed,
        'policies': names, 'out': str(out), 'record_every': record_every, 'eta': eta, 'rho': rho,
        'sweep_eta': sweep_eta, 'sweep_rho': sweep_rho, 'workers': workers,
        'myopic_fallback': myopic_fallback,
    }
    log.log_run_start(horizon, reps, names, run_id=run_id)

    plot_parts = []
    for combo_eta, combo_rho in grid:
        scenario = base.with_controls(rho=combo_rho, eta=combo_eta)
        run_config = RunConfig(
            horizon=horizon,
            replications=reps,
            base_seed=seed,
            policies=policy_kinds(names, scenario, myopic_fallback),
            record_every=record_every,
            workers=workers,
        )
        result = run_experiment(scenario, run_config)
        for index, duration in sorted(result.metrics.task_durations.items()):
            log.log_replication_end(index, duration, {'eta': combo_eta, 'rho': combo_rho}, run_id=run_id)

        target = combo_dir(out, combo_eta, combo_rho, sweeping)
        export_results(result.trajectories(), target / 'results.csv', record_every)
        summary = summarize(result)
        export_plot_data(summary, target / 'plot_data.csv', combo_eta, combo_rho)
        plot_parts.append((summary, combo_eta, combo_rho))

        metadata = run_metadata(result, run_id, flags, myopic_fallback)
        write_run_metadata(target / 'run_metadata.json', metadata)
        for label, counts in metadata['solver_path_counts'].items():
            log.log_solver_path(label, counts, run_id=run_id)
        if metadata['cap_binding_regime']['days']:
            log.warning(NO_GUARANTEE, extra_fields={'eta': combo_eta, 'rho': combo_rho}, run_id=run_id)

        final_regret = {
            label: float(final_values(result, label, 'regret_cum_avg', horizon).mean())
            for label in run_config.policy_labels
        }
        click.echo(json.dumps({'out': str(target), 'eta': combo_eta, 'rho': combo_rho,
                               'final_regret_mean': final_regret}, sort_keys=True))

    if sweeping:
        export_sweep_plot_data(plot_parts, out / 'plot_data.csv')
    log.log_processing_step('run_complete', {'combinations': len(grid), 'out': str(out)}, run_id=run_id)


@cli.command()
@click.option('--scenario', 'scenario_path', required=True, type=click.Path(path_type=Path))
@error_handler_decorator(SERVICE, 'validate')
def validate(scenario_path: Path):
    """Load a scenario, check every invariant and print its hash."""
    setup_logging(SERVICE, 'validate')
    scenario = load_scenario(scenario_path)
    click.echo(json.dumps({
        'valid': True,
        'config_hash': config_hash(scenario),
        'n_locations': scenario.n_locations,
        'eta_in_guaranteed_region': scenario.eta_in_guaranteed_region,
        'cap_condition': cap_condition_report(scenario),
    }, sort_keys=True))


@cli.command('export-scenario')
@click.option('--scenario', 'scenario_path', required=True, type=click.Path(path_type=Path))
@click.option('--out', 'out_path', required=True, type=click.Path(path_type=Path))
@error_handler_decorator(SERVICE, 'export-scenario')
def export_scenario_command(scenario_path: Path, out_path: Path):
    """Write the explicit-matrix form of a (possibly generative) scenario."""
    setup_logging(SERVICE, 'export-scenario')
    scenario = load_scenario(scenario_path)
    export_scenario(scenario, out_path)
    click.echo(json.dumps({'out': str(out_path), 'config_hash': config_hash(scenario)}, sort_keys=True))


def run_cli(args: Optional[Sequence[str]] = None) -> None:
    cli.main(args=list(args) if args is not None else None, prog_name=SERVICE)


if __name__ == '__main__':
    run_cli()
