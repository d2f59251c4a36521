import os

import click

from .config import Config
from .core import spectral
from .core.calibration import calibrate_constants
from .core.forcing import evaluate_number
from .exceptions import ArtifactError, BlowUpError
from .services import experiment_service, report_service, storage


def _finish(out):
    """Print the report of ``out`` and exit with its code."""
    try:
        text, code = report_service.emit_report(out)
    except ArtifactError as e:
        click.echo(f"ERROR: {e}", err=True)
        raise SystemExit(report_service.EXIT_MISSING)
    click.echo(text)
    raise SystemExit(code)


@click.command('run')
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False),
              help='Scenario INI file (or the name of a bundled scenario).')
@click.option('--seed', type=int, default=None, help='Override [experiment] seed.')
@click.option('--out', type=click.Path(file_okay=False), default=None, help='Artifact directory.')
@click.option('--dt-halving', is_flag=True, default=False,
              help='Also run the base flow with dt/2 to calibrate tolerances (convergence study).')
def run_command(config_path, seed, out, dt_halving):
    """Run a scenario and check every estimate."""
    spec = experiment_service.load_config(_resolve_scenario(config_path))
    out = out or spec.experiment.out or os.path.join(Config.OUTPUT_ROOT, spec.experiment.name)
    try:
        experiment_service.run_experiment(spec, out=out, dt_halving=dt_halving or None, seed=seed)
    except BlowUpError:
        pass
    _finish(out)


@click.command('verify')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Artifact directory of a previous run.')
@click.option('--tolerance-constant', type=float, default=None, help='C in tol = C dt^2 + floor.')
def verify_command(out, tolerance_constant):
    """Re-check stored trajectories without simulating."""
    try:
        experiment_service.verify_artifacts(out, tolerance_constant)
    except ArtifactError as e:
        click.echo(f"ERROR: {e}", err=True)
        raise SystemExit(report_service.EXIT_MISSING)
    _finish(out)


@click.command('calibrate')
@click.option('--L', 'L', default='2*pi', help='Box length (pi arithmetic allowed).')
@click.option('--N', 'N', type=int, default=16)
@click.option('--dim', type=click.Choice(['2', '3']), default='3')
@click.option('--ensemble', type=int, default=None, help='Number of random fields (>= 100).')
@click.option('--seed', type=int, default=0)
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Write the constants as JSON.')
def calibrate_command(L, N, dim, ensemble, seed, out):
    """Calibrate the constants c1, c3, c4, c5 on a grid."""
    grid = spectral.make_grid(evaluate_number(L), N, int(dim))
    constants = calibrate_constants(grid, ensemble, seed=seed)
    for name in ('c1', 'c3', 'c4', 'c5', 'c_I'):
        click.echo(f"{name:<4} = {getattr(constants, name):.10g}")
    if out:
        storage.write_json(out, constants.to_dict())


@click.command('sweep')
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False))
@click.option('--out', type=click.Path(file_okay=False), default=None)
@click.option('--parallel', type=int, default=None, help='Concurrent member experiments.')
def sweep_command(config_path, out, parallel):
    """Run the members of a scenario's [sweep] section."""
    spec = experiment_service.load_config(_resolve_scenario(config_path))
    results = experiment_service.run_sweep(spec, out=out, parallel=parallel)
    worst = 0
    for result in results:
        click.echo(f"{result['name']:<32} value={result['value']!s:<12} exit={result['exit_code']}")
        worst = max(worst, result['exit_code'])
    raise SystemExit(worst)


def _resolve_scenario(path):
    if os.path.exists(path):
        return path
    bundled = os.path.join(Config.SCENARIO_FOLDER, f'{path}.ini')
    if os.path.exists(bundled):
        return bundled
    return path


def init_app(cli):
    """Register the sub-commands on the click group built by the application factory."""
    for command in (run_command, verify_command, calibrate_command, sweep_command):
        cli.add_command(command)

