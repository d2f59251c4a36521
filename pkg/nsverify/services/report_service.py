import logging
import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from ..exceptions import ArtifactError
from ..models.report import overall_status
from . import storage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_MISSING = 2
EXIT_ABORTED = 3


def _format_row(key, report):
    margin = f'{report.worst_margin:.3e}' if np.isfinite(report.worst_margin) else str(report.worst_margin)
    stamp = f'{report.worst_time:.4g}' if np.isfinite(report.worst_time) else '-'
    return f'{key:<10} {report.kind:<11} {report.status:<8} {margin:>11} {stamp:>9} {report.tolerance:>10.2e}'


def emit_report(out):
    """Summary table of the inequality reports in artifact directory ``out``.

    Returns ``(text, exit_code)``. The first line names the first failed
    equation when there is one. Raises ArtifactError when the directory
    holds no reports.
    """
    out = getattr(out, 'out', out)
    if not os.path.isdir(out):
        raise ArtifactError(f"artifact directory {out} does not exist")
    summary_path = os.path.join(out, 'summary.json')
    summary = storage.read_json(summary_path) if os.path.exists(summary_path) else {}
    if summary.get('status') == 'aborted':
        blowup = summary.get('blowup', {})
        text = (f"ABORTED: {blowup.get('kind', 'run')} run blew up at t={blowup.get('t')} "
                f"(energy {blowup.get('energy')})")
        return text, EXIT_ABORTED
    reports = storage.read_reports(os.path.join(out, 'inequalities.json'))
    if not reports:
        raise ArtifactError(f"{out} holds an empty inequality report")
    failed = [key for key, r in reports.items() if r.status == 'fail']
    status = overall_status(reports)
    if failed:
        first = reports[failed[0]]
        headline = (f"FAIL {failed[0]}: worst margin {first.worst_margin:.3e} at t={first.worst_time:.4g} "
                    f"({len(failed)} of {len(reports)} checks failed)")
    else:
        counts = {s: sum(r.status == s for r in reports.values()) for s in ('pass', 'info', 'unmet', 'vacuous')}
        headline = 'OK: ' + ', '.join(f'{n} {s}' for s, n in counts.items() if n)
    lines = [headline, '', f"{'eq':<10} {'kind':<11} {'status':<8} {'worst':>11} {'at t':>9} {'tol':>10}"]
    lines += [_format_row(key, report) for key, report in reports.items()]
    if summary:
        lines += ['', f"config hash {summary.get('config_hash', '')}, overall {status}"]
    text = '\n'.join(lines)
    return text, EXIT_FAIL if failed else EXIT_OK


def plot_energy(trajectories, path):
    """Energy and squared H^1 norm of every run against time, log scale."""
    fig, axes = plt.subplots(1, 2, figsize=(12, 4.5))
    for name, trajectory in trajectories.items():
        t = trajectory.times
        axes[0].semilogy(t, np.maximum(trajectory.series('energy'), 1e-300), label=name)
        axes[1].semilogy(t, np.maximum(trajectory.series('h1_sq'), 1e-300), label=name)
    axes[0].set_title('Kinetic energy')
    axes[1].set_title('Squared H^1 norm (mean-free part)')
    for ax in axes:
        ax.set_xlabel('t')
        ax.legend()
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_stability(series, envelopes, budget, path):
    """X^2 per window against gamma and the Gronwall envelopes."""
    fig, ax = plt.subplots(figsize=(10, 5))
    for s in series:
        ax.semilogy(s.times, np.maximum(s.X_sq, 1e-300), color='tab:blue',
                    label='X^2' if s.window == 0 else None)
    styles = {'linear': ('tab:orange', '--'), 'nonlinear': ('tab:green', ':')}
    seen = set()
    for envelope in envelopes:
        color, style = styles[envelope.kind]
        finite = np.isfinite(envelope.values)
        ax.semilogy(envelope.times[finite], envelope.values[finite], color=color, linestyle=style,
                    label=f'{envelope.kind} envelope' if envelope.kind not in seen else None)
        seen.add(envelope.kind)
    ax.axhline(budget.gamma, color='tab:red', label='gamma')
    ax.axhline(budget.gamma_star, color='tab:red', linestyle='--', label='gamma_star')
    ax.set_xlabel('t')
    ax.set_title('Perturbation H^1 norm against its bounds')
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
