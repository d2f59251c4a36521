import math
import os
from dataclasses import dataclass, field as dataclass_field
from typing import Annotated, Dict, List, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field as PydanticField

from ..core.forcing import evaluate_number
from .trajectory import ForcingSpec


def _number(value):
    if isinstance(value, str):
        return evaluate_number(value)
    return value


def _numbers(value):
    if isinstance(value, str):
        value = [v for v in value.split(',') if v.strip()]
    return [_number(v) for v in value]


def _expressions(value):
    if isinstance(value, str):
        value = [v.strip() for v in value.split(';') if v.strip()]
    return value


Number = Annotated[float, BeforeValidator(_number)]
Numbers = Annotated[List[float], BeforeValidator(_numbers)]
Expressions = Annotated[List[str], BeforeValidator(_expressions)]


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid', validate_assignment=True)


class ExperimentSection(Section):
    name: str = 'experiment'
    seed: int = 0
    out: Optional[str] = None
    windows: int = PydanticField(default=3, ge=1)
    full_3d: bool = False
    dt_halving: bool = False


class GridSection(Section):
    L: Number = 2.0 * math.pi
    N: int = PydanticField(default=16, ge=4)


class FlowSection(Section):
    nu: Number = PydanticField(gt=0)
    dt: Number = PydanticField(gt=0)
    T: Number = PydanticField(default=1.0, gt=0)
    snapshot_stride: int = PydanticField(default=1, ge=1)
    sigma: Optional[Number] = None


class RunSection(Section):
    """Initial velocity and forcing of one run.

    ``initial``: 'zero', 'taylor-green' (scaled by ``amplitude``), 'random'
    (``amplitude`` is the H^1 norm) or 'expression' (``components``, made
    divergence-free by projection).
    """

    enabled: bool = True
    initial: Literal['zero', 'taylor-green', 'random', 'expression'] = 'zero'
    amplitude: Number = 1.0
    spectrum_decay: Number = 2.0
    components: Expressions = PydanticField(default_factory=list)
    forcing: Literal['zero', 'expression', 'snapshots'] = 'zero'
    forcing_components: Expressions = PydanticField(default_factory=list)
    forcing_snapshot_path: Optional[str] = None
    mean_constant: Numbers = PydanticField(default_factory=list)
    mean_amplitude: Numbers = PydanticField(default_factory=list)
    mean_frequency: Number = 0.0

    def forcing_spec(self):
        return ForcingSpec(kind=self.forcing, components=self.forcing_components,
                           snapshot_path=self.forcing_snapshot_path, mean_constant=self.mean_constant,
                           mean_amplitude=self.mean_amplitude, mean_frequency=self.mean_frequency)


class BudgetSection(Section):
    calibrate: bool = True
    ensemble_size: int = PydanticField(default=100, ge=100)
    gamma_fraction: Number = PydanticField(default=0.5, gt=0, le=1)
    envelope: Literal['linear', 'nonlinear', 'both'] = 'both'
    gamma: Optional[Number] = None
    gamma_star: Optional[Number] = None
    c_star: Optional[Number] = None
    alpha: Optional[Number] = None
    c1: Optional[Number] = None
    c3: Optional[Number] = None
    c4: Optional[Number] = None
    c5: Optional[Number] = None


class SweepSection(Section):
    parameter: Optional[str] = None
    values: Numbers = PydanticField(default_factory=list)


class ExperimentSpec(Section):
    """Fully resolved experiment: one model per INI section."""

    experiment: ExperimentSection = PydanticField(default_factory=ExperimentSection)
    grid: GridSection = PydanticField(default_factory=GridSection)
    flow: FlowSection
    base: RunSection = PydanticField(default_factory=RunSection)
    perturbation: RunSection = PydanticField(default_factory=RunSection)
    budget: BudgetSection = PydanticField(default_factory=BudgetSection)
    sweep: SweepSection = PydanticField(default_factory=SweepSection)

    @property
    def t_end(self):
        return self.experiment.windows * self.flow.T


@dataclass
class RunArtifacts:
    out: str
    config_hash: str
    status: str
    trajectories: Dict[str, str] = dataclass_field(default_factory=dict)
    inequalities: Optional[str] = None
    windows: Optional[str] = None
    summary: Optional[str] = None
    plots: List[str] = dataclass_field(default_factory=list)
    metadata: dict = dataclass_field(default_factory=dict)

    def missing(self):
        """Paths recorded on this object that do not exist on disk."""
        paths = list(self.trajectories.values()) + [self.inequalities, self.windows, self.summary] + self.plots
        return [p for p in paths if p and not os.path.exists(p)]
