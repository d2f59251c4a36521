"""Scenario configs, the run pipeline, re-verification and sweeps.

A scenario is an INI document with the sections [experiment], [grid],
[flow], [base], [perturbation], [budget] and [sweep] (see README.md).
``run_experiment`` executes base run, perturbation run and optional direct
3D run, then every estimate check, and writes the artifact directory.
"""
import configparser
import dataclasses
import hashlib
import io
import logging
import os
import re
import time
import traceback

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import ValidationError

from ..config import Config
from ..core import calibration, conditions, spectral, stability
from ..core.estimates import (ToleranceModel, compute_A_constants, estimate_tolerance, verify_decay_2d,
                              vorticity_cancellation_residual, w1sigma_monitor, window_bounds, window_w21_norms)
from ..core.forcing import Expression, ForcingSum, compile_forcing
from ..core.norms import sharp_poincare_constants
from ..core.solver import (convergence_order, l2_distance, max_pointwise_error, run_2d_base, run_full_3d,
                           run_perturbation, taylor_green_exact)
from ..exceptions import ArtifactError, BlowUpError, BudgetError, ConfigError, FieldError
from ..logging_config import run_context
from ..models.experiment import ExperimentSpec, RunArtifacts
from ..models.field import Field
from ..models.report import InequalityReport, overall_status
from ..models.trajectory import SolverConfig
from . import report_service, storage

logger = logging.getLogger(__name__)

SECTIONS = ('experiment', 'grid', 'flow', 'base', 'perturbation', 'budget', 'sweep')
FAILED_MARKER = 'FAILED'

# Relative divergence of an expression initial condition accepted without a warning
PROJECTION_WARN = 1e-10

# L2 distance allowed between the direct run and base plus perturbation
SPLIT_TOL = 1e-5


def _line_numbers(text):
    """{(section,): line, (section, key): line} for a raw INI document."""
    lines, section = {}, None
    for number, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped[0] in '#;':
            continue
        if stripped.startswith('[') and stripped.endswith(']'):
            section = stripped[1:-1].strip()
            lines[(section,)] = number
        elif section is not None:
            lines[(section, re.split(r'[=:]', stripped, maxsplit=1)[0].strip())] = number
    return lines


def _new_parser():
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#',))
    parser.optionxform = str
    return parser


def parse_config(text):
    """Parse and validate a scenario document into an ExperimentSpec.

    Raises ConfigError with the offending line for syntax and schema errors
    and for budgets that violate (4.19).
    """
    parser = _new_parser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}", line=getattr(e, 'lineno', None)) from e
    lines = _line_numbers(text)
    raw = {name: dict(parser[name]) for name in parser.sections()}
    try:
        spec = ExperimentSpec(**raw)
    except ValidationError as e:
        error = e.errors()[0]
        loc = tuple(str(part) for part in error['loc'])
        line = lines.get(loc[:2]) or lines.get(loc[:1])
        raise ConfigError(f"{'.'.join(loc)}: {error['msg']}", line=line) from e
    _check_budget(spec, lines)
    return spec


def _check_budget(spec, lines=None):
    """Refuse explicit budget values that already violate (4.19)."""
    lines = lines or {}
    budget, nu = spec.budget, spec.flow.nu
    kappa = 2.0 * np.pi / spec.grid.L
    c4 = budget.c4 if budget.c4 is not None else calibration.derived_c4(kappa)
    if budget.gamma is not None and budget.gamma_star is not None and budget.gamma > budget.gamma_star:
        raise ConfigError(f"(4.19) refused: gamma={budget.gamma} exceeds gamma_star={budget.gamma_star}",
                          line=lines.get(('budget', 'gamma')))
    if budget.c_star is not None and not budget.c_star < nu * c4:
        raise ConfigError(f"(4.19) refused: c_star={budget.c_star} must be below nu*c4={nu * c4:.6g}",
                          line=lines.get(('budget', 'c_star')))
    if None not in (budget.gamma_star, budget.c_star, budget.c5):
        small, _ = conditions.smallness_margins(nu, c4, budget.c5, budget.gamma_star, budget.c_star)
        if small < 0:
            raise ConfigError(f"(4.19) refused: nu*c4 - c5*gamma_star^2/nu^3 falls short of c_star/2 by {-small:.6g}",
                              line=lines.get(('budget', 'gamma_star')))


def _format_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and isinstance(value[0], str):
            return '; '.join(value)
        return ', '.join(_format_value(float(v)) for v in value)
    return str(value)


def emit_config(spec):
    """INI text of ``spec`` with every default written out; parses back to an equal spec."""
    parser = _new_parser()
    for name in SECTIONS:
        section = getattr(spec, name)
        parser[name] = {key: _format_value(value) for key, value in section.model_dump().items()
                        if value is not None}
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def config_hash(spec):
    """Hash of the canonical config; the output directory does not enter."""
    canonical = spec.model_copy(update={'experiment': spec.experiment.model_copy(update={'out': None})})
    return hashlib.sha256(emit_config(canonical).encode('utf-8')).hexdigest()[:16]


def load_config(path):
    if not os.path.exists(path):
        raise ArtifactError(f"config file {path} does not exist")
    with open(path, encoding='utf-8') as f:
        return parse_config(f.read())


def build_initial(section, grid, nu, seed):
    """Initial velocity of a run section on ``grid`` (None for a zero start)."""
    if section.initial == 'zero':
        return None
    if section.initial == 'taylor-green':
        return taylor_green_exact(grid, nu, 0.0, amplitude=section.amplitude)
    if section.initial == 'random':
        return spectral.random_divfree_field(grid, seed, spectrum_decay=section.spectrum_decay,
                                             h1_norm=section.amplitude)
    if len(section.components) != grid.dim:
        raise ConfigError(f"initial expression needs {grid.dim} components, got {len(section.components)}")
    variables = dict(zip(('x1', 'x2', 'x3'), grid.coordinates()))
    variables.update(t=0.0, kappa=grid.kappa)
    data = np.stack([np.broadcast_to(Expression(c).evaluate(**variables), grid.physical_shape)
                     for c in section.components]).astype(float)
    raw = spectral.to_spectral(Field(grid, data, 'physical'))
    if spectral.divergence_norm(raw) > PROJECTION_WARN:
        logger.warning(f"Initial expression is not divergence-free; projecting "
                       f"(relative divergence {spectral.divergence_norm(raw):.3g})")
    return spectral.leray_project(raw)


def _solver_config(spec, grid, section, seed, dt=None):
    return SolverConfig(grid=grid, nu=spec.flow.nu, dt=spec.flow.dt if dt is None else dt, t_end=spec.t_end,
                        T=spec.flow.T, forcing=section.forcing_spec(),
                        initial=build_initial(section, grid, spec.flow.nu, seed),
                        snapshot_stride=spec.flow.snapshot_stride, sigma=spec.flow.sigma)


def resolve_constants(spec, grid):
    """Calibrated constants with the [budget] overrides applied."""
    budget = spec.budget
    overrides = {name: getattr(budget, name) for name in ('c1', 'c3', 'c4', 'c5') if getattr(budget, name) is not None}
    if budget.calibrate:
        constants = calibration.calibrate_constants(grid, budget.ensemble_size, seed=spec.experiment.seed)
    else:
        missing = {'c3', 'c5'} - set(overrides)
        if missing:
            raise ConfigError(f"calibrate = false needs explicit {sorted(missing)} in [budget]")
        c1, _ = sharp_poincare_constants(grid)
        constants = calibration.CalibratedConstants(
            c1=c1, c3=overrides['c3'], c4=calibration.derived_c4(grid.kappa), c5=overrides['c5'],
            c_I=float('nan'), kappa=grid.kappa, ensemble_size=0, seed=spec.experiment.seed)
    return dataclasses.replace(constants, **overrides)


def check_runs(spec, base, pert=None, full=None, tolerance=None, constants=None):
    """All estimate checks on stored runs.

    Returns ``(reports, windows, extras)``: reports keyed by equation id, a
    per-window summary frame and the intermediate objects (budgets, series,
    envelopes) used for plots and the JSON summary.
    """
    tolerance = tolerance or ToleranceModel()
    tol = tolerance(spec.flow.dt)
    T = spec.flow.T
    budget2d = compute_A_constants(base, T)
    reports = dict(verify_decay_2d(base, budget2d, tol))
    reports['3.8'] = w1sigma_monitor(base, spec.flow.sigma, T, tolerance=tol)
    residuals = [vorticity_cancellation_residual(s) for s in (base.snapshots[0], base.snapshots[-1])]
    reports['3.6'] = InequalityReport.from_margins(
        '3.6', [base.snapshots[0].time_stamp, base.snapshots[-1].time_stamp], [-r for r in residuals], tol,
        kind='info', description='normalized int v_s . grad v_s . Lap v_s (vanishes in 2D)',
        values={'max_residual': max(residuals)})
    extras = {'budget2d': budget2d, 'tolerance': tolerance.to_dict()}
    rows = [{'window': k, 't0': t0, 't1': t1, 'forcing_integral': budget2d.window_forcing[k]}
            for k, (t0, t1) in enumerate((k * T, (k + 1) * T) for k in range(budget2d.k_max))]
    for row, w21 in zip(rows, window_w21_norms(base, T)):
        row['base_w21'] = w21
        row['base_l2_sq_start'] = float(np.interp(row['t0'], base.times, base.series('l2_sq')))
        row['base_grad_l2_sq_start'] = float(np.interp(row['t0'], base.times, base.series('grad_l2_sq')))

    if pert is not None:
        constants = constants or resolve_constants(spec, pert.grid)
        b = spec.budget
        budget = stability.default_budget(spec.flow.nu, T, constants, gamma_fraction=b.gamma_fraction,
                                          gamma=b.gamma, gamma_star=b.gamma_star, c_star=b.c_star, alpha=b.alpha)
        l2_budget, l2_hypotheses = stability.compute_B_constants(
            pert, budget2d, constants.c1, constants.c3, T, tol, lift=stability.lift_factor(base, pert.grid.dim))
        reports.update(l2_hypotheses)
        reports.update(stability.verify_l2_stability(pert, l2_budget, T, tol))
        k_max = len(window_bounds(pert.t_end, T))
        series = [stability.stability_series(pert, base, budget, k) for k in range(k_max)]
        hypotheses = stability.check_stability_hypotheses(series, budget, tol)
        reports.update(hypotheses)
        kinds = ('linear', 'nonlinear') if b.envelope == 'both' else (b.envelope,)
        envelopes = [stability.gronwall_envelope(s, budget, kind=kind) for kind in kinds for s in series]
        reports.update(stability.verify_stability_conclusion(series, budget, envelopes, hypotheses, tol))
        linear = {e.window: e for e in envelopes if e.kind == 'linear'}
        for row, s in zip(rows, series):
            row.update(X_sq_start=float(s.X_sq[0]), X_sq_end=float(s.X_sq[-1]), X_sq_max=float(np.max(s.X_sq)),
                       int_A_sq=float(s.int_A_sq[-1]), int_G_sq=float(s.int_G_sq[-1]))
            if s.window in linear:
                row['endpoint_bound'] = linear[s.window].endpoint_bound
        extras.update(constants=constants.to_dict(), stability_budget=budget.to_dict(),
                      l2_budget=l2_budget.to_dict(), series=series, envelopes=envelopes, budget=budget)

    if full is not None and pert is not None:
        reports['1.3'] = split_consistency(base, pert, full, tol)
    return reports, pd.DataFrame(rows), extras


def split_consistency(base, pert, full, tol):
    """The direct 3D run against base plus perturbation at the last snapshot."""
    split = spectral.lift_to_3d(base.snapshots[-1]) + pert.snapshots[-1]
    distance = l2_distance(full.snapshots[-1], split)
    return InequalityReport.from_margins(
        '1.3', [full.snapshots[-1].time_stamp], [SPLIT_TOL - distance], tol,
        description=f'||v_direct - (v_s + u)|| <= {SPLIT_TOL:g} at the last snapshot',
        values={'l2_distance': distance, 'threshold': SPLIT_TOL})


def _taylor_green_study(spec, base, fine):
    """Errors against the exact solution at t_end for dt and dt/2, and the observed order."""
    errors = []
    for run in (base, fine):
        exact = taylor_green_exact(run.grid, run.nu, run.snapshots[-1].time_stamp, spec.base.amplitude)
        errors.append(max_pointwise_error(run.snapshots[-1], exact))
    return {'errors': errors, 'dts': [base.dt, fine.dt],
            'order': float(convergence_order(errors, [base.dt, fine.dt])[0]) if min(errors) > 0 else float('inf')}


def run_experiment(spec, out=None, dt_halving=None, seed=None):
    """Run every stage of ``spec`` and write its artifact directory.

    Partial artifacts are kept on failure, with a FAILED marker and the
    traceback in summary.json; the error is re-raised.
    """
    if seed is not None:
        spec = spec.model_copy(update={'experiment': spec.experiment.model_copy(update={'seed': seed})})
    with run_context(spec.experiment.name, config_hash(spec)):
        return _run_experiment(spec, out, dt_halving)


def _run_experiment(spec, out, dt_halving):
    name = spec.experiment.name
    out = out or spec.experiment.out or os.path.join(Config.OUTPUT_ROOT, name)
    dt_halving = spec.experiment.dt_halving if dt_halving is None else dt_halving
    os.makedirs(out, exist_ok=True)
    marker = os.path.join(out, FAILED_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    digest = config_hash(spec)
    with open(os.path.join(out, 'config.ini'), 'w', encoding='utf-8') as f:
        f.write(emit_config(spec))
    artifacts = RunArtifacts(out=out, config_hash=digest, status='running',
                             summary=os.path.join(out, 'summary.json'))
    summary = {'name': name, 'config_hash': digest, 'seed': spec.experiment.seed}
    started = time.time()
    seed_value = spec.experiment.seed
    try:
        logger.info(f"Starting experiment {name} ({digest}) into {out}")
        plane = spectral.make_grid(spec.grid.L, spec.grid.N, 2)
        box = spectral.make_grid(spec.grid.L, spec.grid.N, 3)
        base_config = _solver_config(spec, plane, spec.base, seed_value)
        runs = {'base': run_2d_base(base_config, digest)}
        tolerance = ToleranceModel()
        if dt_halving:
            fine = run_2d_base(dataclasses.replace(base_config, dt=base_config.dt / 2.0), digest)
            runs['base_half_dt'] = fine
            tolerance = estimate_tolerance(runs['base'], fine)
            if spec.base.initial == 'taylor-green' and spec.base.forcing == 'zero' and not spec.base.mean_constant:
                summary['taylor_green'] = _taylor_green_study(spec, runs['base'], fine)
        if spec.perturbation.enabled:
            pert_config = _solver_config(spec, box, spec.perturbation, [seed_value, 1])
            runs['perturbation'] = run_perturbation(pert_config, runs['base'], digest)
            if spec.experiment.full_3d:
                forcing = ForcingSum(compile_forcing(spec.base.forcing_spec(), box),
                                     compile_forcing(spec.perturbation.forcing_spec(), box))
                base0 = build_initial(spec.base, plane, spec.flow.nu, seed_value)
                initial = pert_config.initial or Field.zeros(box, 3)
                if base0 is not None:
                    initial = spectral.lift_to_3d(base0) + spectral.to_spectral(initial)
                full_config = dataclasses.replace(pert_config, forcing=forcing, initial=initial)
                runs['full'] = run_full_3d(full_config, digest)
        for key, run in runs.items():
            artifacts.trajectories[key] = storage.save_trajectory(run, os.path.join(out, key))

        reports, windows, extras = check_runs(spec, runs['base'], runs.get('perturbation'), runs.get('full'),
                                              tolerance)
        artifacts.inequalities = storage.write_reports(reports, os.path.join(out, 'inequalities.json'))
        artifacts.windows = storage.write_csv(windows, os.path.join(out, 'windows.csv'))
        if 'constants' in extras:
            storage.write_json(os.path.join(out, 'constants.json'), extras['constants'])
        artifacts.plots.append(report_service.plot_energy(
            {k: v for k, v in runs.items() if k != 'base_half_dt'}, os.path.join(out, 'energy.png')))
        if 'series' in extras:
            artifacts.plots.append(report_service.plot_stability(
                extras['series'], extras['envelopes'], extras['budget'], os.path.join(out, 'stability.png')))
        summary.update(budget2d=extras['budget2d'].to_dict(), tolerance=extras['tolerance'],
                       overall=overall_status(reports))
        for key in ('constants', 'stability_budget', 'l2_budget'):
            if key in extras:
                summary[key] = extras[key]
        artifacts.status = 'completed'
    except BlowUpError as e:
        artifacts.status = 'aborted'
        summary.update(blowup=e.report, error=str(e), traceback=traceback.format_exc())
        if e.trajectory is not None:
            kind = e.trajectory.kind
            artifacts.trajectories[kind] = storage.save_trajectory(e.trajectory, os.path.join(out, kind))
        logger.error(f"Experiment {name} aborted: {e}", exc_info=True)
        raise
    except Exception as e:
        artifacts.status = 'failed'
        summary.update(error=str(e), traceback=traceback.format_exc())
        logger.error(f"Experiment {name} failed: {e}", exc_info=True)
        raise
    finally:
        summary.update(status=artifacts.status, elapsed=time.time() - started,
                       trajectories=artifacts.trajectories, plots=artifacts.plots)
        storage.write_json(artifacts.summary, summary)
        if artifacts.status != 'completed':
            with open(marker, 'w', encoding='utf-8') as f:
                f.write(f"{artifacts.status}\n")
        else:
            text, _ = report_service.emit_report(out)
            with open(os.path.join(out, 'summary.txt'), 'w', encoding='utf-8') as f:
                f.write(text + '\n')
    logger.info(f"Experiment {name} completed: {summary['overall']}")
    return artifacts


def verify_artifacts(out, tolerance_constant=None):
    """Recompute every check from the trajectories stored in ``out`` without simulating."""
    spec = load_config(os.path.join(out, 'config.ini'))
    base_dir = os.path.join(out, 'base')
    if not os.path.isdir(base_dir):
        raise ArtifactError(f"{out} holds no base trajectory")
    base = storage.load_trajectory(base_dir)
    pert = storage.load_trajectory(os.path.join(out, 'perturbation')) \
        if os.path.isdir(os.path.join(out, 'perturbation')) else None
    full = storage.load_trajectory(os.path.join(out, 'full')) if os.path.isdir(os.path.join(out, 'full')) else None
    if os.path.isdir(os.path.join(out, 'base_half_dt')):
        tolerance = estimate_tolerance(base, storage.load_trajectory(os.path.join(out, 'base_half_dt')))
    elif tolerance_constant is not None:
        tolerance = ToleranceModel(C=float(tolerance_constant), source='cli')
    else:
        tolerance = ToleranceModel()
    constants = None
    constants_path = os.path.join(out, 'constants.json')
    if pert is not None and os.path.exists(constants_path):
        stored = storage.read_json(constants_path)
        stored['c3_running_max'] = tuple(stored.get('c3_running_max', ()))
        stored['c_I'] = float(stored['c_I'])
        constants = calibration.CalibratedConstants(**stored)
    reports, windows, _ = check_runs(spec, base, pert, full, tolerance, constants)
    storage.write_reports(reports, os.path.join(out, 'inequalities.json'))
    storage.write_csv(windows, os.path.join(out, 'windows.csv'))
    logger.info(f"Re-verified {out}: {overall_status(reports)}")
    return reports


def sweep_specs(spec):
    """Member specs of the [sweep] section, one per value of ``parameter`` ('section.key')."""
    parameter = spec.sweep.parameter
    if not parameter:
        return [spec]
    section_name, _, key = parameter.partition('.')
    if section_name not in SECTIONS or not key:
        raise ConfigError(f"sweep parameter must be 'section.key', got {parameter!r}")
    section = getattr(spec, section_name)
    if key not in type(section).model_fields:
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    members = []
    for i, value in enumerate(spec.sweep.values):
        try:
            updated = section.model_validate(section.model_dump() | {key: value})
        except ValidationError as e:
            raise ConfigError(f"sweep value {value} for {parameter}: {e.errors()[0]['msg']}") from e
        experiment = spec.experiment.model_copy(update={'name': f'{spec.experiment.name}-{i:03d}'})
        members.append(spec.model_copy(update={section_name: updated, 'experiment': experiment,
                                               'sweep': type(spec.sweep)()}))
    return members


def _run_member(spec, out):
    try:
        run_experiment(spec, out=out)
        _, code = report_service.emit_report(out)
        return {'name': spec.experiment.name, 'out': out, 'exit_code': code}
    except BlowUpError as e:
        return {'name': spec.experiment.name, 'out': out, 'exit_code': report_service.EXIT_ABORTED, 'error': str(e)}
    except (BudgetError, FieldError, ConfigError) as e:
        return {'name': spec.experiment.name, 'out': out, 'exit_code': report_service.EXIT_MISSING, 'error': str(e)}


def run_sweep(spec, out=None, parallel=None):
    """Run the members of a sweep concurrently and write sweep.csv."""
    out = out or spec.experiment.out or os.path.join(Config.OUTPUT_ROOT, spec.experiment.name)
    parallel = Config.PARALLEL if parallel is None else int(parallel)
    members = sweep_specs(spec)
    os.makedirs(out, exist_ok=True)
    logger.info(f"Sweeping {spec.sweep.parameter} over {len(members)} values with {parallel} workers")
    results = Parallel(n_jobs=parallel)(
        delayed(_run_member)(member, os.path.join(out, member.experiment.name)) for member in members)
    for result, value in zip(results, spec.sweep.values or [None]):
        result['value'] = value
    storage.write_csv(pd.DataFrame(results), os.path.join(out, 'sweep.csv'))
    return results
