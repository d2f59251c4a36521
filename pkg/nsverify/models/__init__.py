from .grid import TorusGrid
from .field import Field, MeanVector
from .norms import NormReport, TrajectoryNorms
from .trajectory import ForcingSpec, SolverConfig, Trajectory
from .budget import StabilityBudget, TwoDBudget
from .report import InequalityReport, StabilitySeries
