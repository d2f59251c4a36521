from dataclasses import asdict, dataclass, field as dataclass_field
from typing import List, Tuple

import numpy as np
import pandas as pd

from ..exceptions import FieldError

# Fixed column order of the norms CSV (one NormReport per row)
NORM_COLUMNS = ['time_stamp', 'l2_sq', 'h1_sq', 'h2_sq', 'grad_l2_sq', 'grad_l3_sq',
                'l6_sq', 'sigma', 'w1_sigma']


@dataclass(frozen=True)
class NormReport:
    time_stamp: float
    l2_sq: float
    h1_sq: float
    h2_sq: float
    grad_l2_sq: float
    grad_l3_sq: float
    l6_sq: float
    sigma: float
    w1_sigma: float

    def __post_init__(self):
        for name in NORM_COLUMNS[1:]:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise FieldError(f"norm entry {name}={value} must be finite and nonnegative")

    def to_row(self):
        return [asdict(self)[c] for c in NORM_COLUMNS]

    @classmethod
    def from_row(cls, row):
        return cls(**{c: float(row[c]) for c in NORM_COLUMNS})


@dataclass
class TrajectoryNorms:
    """Time-ordered NormReports over an interval, integrated with ``rule``."""

    reports: List[NormReport] = dataclass_field(default_factory=list)
    interval: Tuple[float, float] = (0.0, 0.0)
    rule: str = 'trapezoid'

    def __post_init__(self):
        times = self.times
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise FieldError("norm report time stamps must be strictly increasing")
        if times.size and (times[0] < self.interval[0] - 1e-12 or times[-1] > self.interval[1] + 1e-12):
            raise FieldError(f"interval {self.interval} does not bracket the report stamps")

    def __len__(self):
        return len(self.reports)

    @property
    def times(self):
        return np.array([r.time_stamp for r in self.reports], dtype=float)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.reports], dtype=float)

    def append(self, report):
        if self.reports and report.time_stamp <= self.reports[-1].time_stamp:
            raise FieldError("norm reports must be appended in time order")
        self.reports.append(report)
        self.interval = (min(self.interval[0], report.time_stamp) if len(self.reports) > 1
                         else report.time_stamp, max(self.interval[1], report.time_stamp))

    def to_frame(self):
        return pd.DataFrame([r.to_row() for r in self.reports], columns=NORM_COLUMNS)

    @classmethod
    def from_frame(cls, frame):
        reports = [NormReport.from_row(row) for _, row in frame.iterrows()]
        interval = (reports[0].time_stamp, reports[-1].time_stamp) if reports else (0.0, 0.0)
        return cls(reports, interval)
