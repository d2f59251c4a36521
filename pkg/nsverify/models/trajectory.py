from dataclasses import dataclass, field as dataclass_field
from typing import List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field as PydanticField, field_validator, model_validator

from ..exceptions import ConfigError, CoverageError
from .field import Field, MeanVector
from .grid import TorusGrid
from .norms import TrajectoryNorms

# Per-step scalar diagnostics; mean_<i> and forcing_mean_<i> follow for each component
DIAGNOSTIC_COLUMNS = ['step', 't', 'energy', 'l2_sq', 'h1_sq', 'h2_sq', 'grad_l2_sq', 'grad_l3_sq',
                      'l6_sq', 'w1_sigma', 'forcing_l2_sq', 'forcing_l65', 'divergence']

# Largest accepted nu * dt * |k_max|^2
MAX_VISCOUS_CFL = 100.0


class ForcingSpec(BaseModel):
    """Right-hand side of a run.

    The spatial part is made mean-free before use; the mean is tracked
    separately as ``mean_constant + mean_amplitude * sin(mean_frequency * t)``.
    """

    model_config = ConfigDict(extra='forbid')

    kind: Literal['zero', 'expression', 'snapshots'] = 'zero'
    components: List[str] = PydanticField(default_factory=list)
    snapshot_path: Optional[str] = None
    mean_constant: List[float] = PydanticField(default_factory=list)
    mean_amplitude: List[float] = PydanticField(default_factory=list)
    mean_frequency: float = 0.0

    @field_validator('components')
    @classmethod
    def _strip(cls, value):
        return [c.strip() for c in value]

    @model_validator(mode='after')
    def _check_kind(self):
        if self.kind == 'expression' and not self.components:
            raise ValueError("expression forcing needs one expression per component")
        if self.kind == 'snapshots' and not self.snapshot_path:
            raise ValueError("snapshot forcing needs snapshot_path")
        if self.kind != 'expression' and self.components:
            raise ValueError(f"components are only used by expression forcing, not {self.kind!r}")
        return self

    @property
    def has_mean(self):
        return any(self.mean_constant) or any(self.mean_amplitude)


@dataclass
class SolverConfig:
    grid: TorusGrid
    nu: float
    dt: float
    t_end: float
    T: float
    forcing: ForcingSpec = dataclass_field(default_factory=ForcingSpec)
    initial: Optional[Field] = None
    snapshot_stride: int = 1
    sigma: Optional[float] = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"viscosity nu must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ConfigError(f"time step dt must be positive, got {self.dt}")
        if not (self.T > 0 and self.t_end >= self.T):
            raise ConfigError(f"need t_end >= T > 0, got t_end={self.t_end}, T={self.T}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ConfigError(f"snapshot_stride must be a positive integer, got {self.snapshot_stride}")
        k_max_sq = float(np.max(self.grid.k_squared))
        if self.nu * self.dt * k_max_sq > MAX_VISCOUS_CFL:
            raise ConfigError(f"dt={self.dt} does not resolve the viscous scale "
                              f"(nu*dt*|k_max|^2 = {self.nu * self.dt * k_max_sq:.3g})")
        if self.initial is not None and self.initial.grid != self.grid:
            raise ConfigError(f"initial field lives on {self.initial.grid!r}, expected {self.grid!r}")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class Trajectory:
    """Recorded run.

    ``diagnostics`` holds one row per time step, ``norms`` the NormReport of
    the mean-free part at the same steps, ``snapshots`` the full velocity
    (mean included, spectral) every ``snapshot_stride`` steps.
    """

    kind: str
    grid: TorusGrid
    nu: float
    dt: float
    snapshot_stride: int
    snapshots: List[Field]
    means: List[MeanVector]
    norms: TrajectoryNorms
    diagnostics: pd.DataFrame
    config_hash: str = ''
    status: str = 'completed'
    metadata: dict = dataclass_field(default_factory=dict)

    def __repr__(self):
        return (f'<Trajectory {self.kind} {self.grid!r} steps={len(self.diagnostics)} '
                f'snapshots={len(self.snapshots)} {self.status}>')

    @property
    def times(self):
        return self.diagnostics['t'].to_numpy(dtype=float)

    @property
    def snapshot_times(self):
        return np.array([s.time_stamp for s in self.snapshots], dtype=float)

    @property
    def t_end(self):
        return float(self.times[-1])

    def series(self, name):
        if name not in self.diagnostics.columns:
            raise CoverageError(f"trajectory has no {name!r} series")
        return self.diagnostics[name].to_numpy(dtype=float)

    def mean_values(self):
        """(n_steps, ncomp) array of the recorded means."""
        return np.stack([m.value for m in self.means])

    def snapshot_at(self, t, atol=1e-9):
        for snapshot in self.snapshots:
            if abs(snapshot.time_stamp - t) <= atol:
                return snapshot
        raise CoverageError(f"no snapshot stored at t={t}")

    def require_span(self, t0, t1, atol=1e-9):
        times = self.snapshot_times
        if times.size == 0 or t0 < times[0] - atol or t1 > times[-1] + atol:
            raise CoverageError(f"{self.kind} trajectory does not cover ({t0}, {t1})")
