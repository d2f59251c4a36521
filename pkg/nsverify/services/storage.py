"""On-disk formats of snapshots, trajectories and reports.

A trajectory directory holds::

    diagnostics.csv          one row per step (DIAGNOSTIC_COLUMNS + means)
    norms.csv                one NormReport per step (NORM_COLUMNS)
    summary.json             run metadata
    snapshots/snap_XXXXXX.npz

Floats are written with 17 significant digits so that a reload reproduces
every value bit for bit.
"""
import json
import logging
import os

import numpy as np
import pandas as pd

from ..core import spectral
from ..exceptions import ArtifactError
from ..models.field import Field, MeanVector
from ..models.norms import TrajectoryNorms
from ..models.report import InequalityReport
from ..models.trajectory import Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
SNAPSHOT_DIR = 'snapshots'


def _to_builtin(value):
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path, data):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_to_builtin(data), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def read_json(path):
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact {path}")
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def write_csv(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def read_csv(path):
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact {path}")
    return pd.read_csv(path, float_precision='round_trip')


def save_snapshot(field, path):
    """Write one field as .npz: data plus L, N, dim, representation, time_stamp."""
    np.savez(path, data=field.data, L=field.grid.L, N=field.grid.N, dim=field.grid.dim,
             representation=field.representation, time_stamp=field.time_stamp,
             divergence_free=field.divergence_free)
    return path


def load_snapshot(path):
    if not os.path.exists(path):
        raise ArtifactError(f"missing snapshot {path}")
    with np.load(path) as archive:
        grid = spectral.make_grid(float(archive['L']), int(archive['N']), int(archive['dim']))
        return Field(grid, np.array(archive['data']), str(archive['representation']),
                     divergence_free=bool(archive['divergence_free']),
                     time_stamp=float(archive['time_stamp']))


def save_forcing_series(fields, path):
    """Write the series read back by snapshot forcing: times, physical data, L, N, dim."""
    if len(fields) < 2:
        raise ArtifactError("a forcing series needs at least two fields")
    grid = fields[0].grid
    data = np.stack([spectral.to_physical(f).data for f in fields])
    np.savez(path, times=np.array([f.time_stamp for f in fields]), data=data,
             L=grid.L, N=grid.N, dim=grid.dim)
    return path


def save_trajectory(trajectory, directory):
    """Write ``trajectory`` under ``directory`` and return the directory."""
    snapshot_dir = os.path.join(directory, SNAPSHOT_DIR)
    os.makedirs(snapshot_dir, exist_ok=True)
    for i, snapshot in enumerate(trajectory.snapshots):
        save_snapshot(snapshot, os.path.join(snapshot_dir, f'snap_{i * trajectory.snapshot_stride:06d}.npz'))
    write_csv(trajectory.diagnostics, os.path.join(directory, 'diagnostics.csv'))
    write_csv(trajectory.norms.to_frame(), os.path.join(directory, 'norms.csv'))
    grid = trajectory.grid
    write_json(os.path.join(directory, 'summary.json'), {
        'kind': trajectory.kind, 'status': trajectory.status, 'config_hash': trajectory.config_hash,
        'L': grid.L, 'N': grid.N, 'dim': grid.dim, 'nu': trajectory.nu, 'dt': trajectory.dt,
        'snapshot_stride': trajectory.snapshot_stride, 'n_steps': len(trajectory.diagnostics) - 1,
        'n_snapshots': len(trajectory.snapshots), 'metadata': trajectory.metadata,
    })
    logger.info(f"Saved {trajectory!r} to {directory}")
    return directory


def load_trajectory(directory):
    summary = read_json(os.path.join(directory, 'summary.json'))
    grid = spectral.make_grid(summary['L'], summary['N'], summary['dim'])
    diagnostics = read_csv(os.path.join(directory, 'diagnostics.csv'))
    norms = TrajectoryNorms.from_frame(read_csv(os.path.join(directory, 'norms.csv')))
    snapshot_dir = os.path.join(directory, SNAPSHOT_DIR)
    names = sorted(os.listdir(snapshot_dir)) if os.path.isdir(snapshot_dir) else []
    snapshots = [load_snapshot(os.path.join(snapshot_dir, name)) for name in names if name.endswith('.npz')]
    mean_columns = [f'mean_{i}' for i in range(grid.dim)]
    means = [MeanVector(np.array(row, dtype=float), t)
             for row, t in zip(diagnostics[mean_columns].to_numpy(), diagnostics['t'].to_numpy())]
    return Trajectory(kind=summary['kind'], grid=grid, nu=summary['nu'], dt=summary['dt'],
                      snapshot_stride=summary['snapshot_stride'], snapshots=snapshots, means=means,
                      norms=norms, diagnostics=diagnostics, config_hash=summary['config_hash'],
                      status=summary['status'], metadata=summary.get('metadata', {}))


def write_reports(reports, path):
    """Inequality reports as one JSON document keyed by equation id."""
    return write_json(path, {key: report.to_dict() for key, report in reports.items()})


def read_reports(path):
    return {key: InequalityReport.from_dict(data) for key, data in read_json(path).items()}
