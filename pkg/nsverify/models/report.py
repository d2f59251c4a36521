from dataclasses import dataclass, field as dataclass_field
from typing import Dict, Optional

import numpy as np

from ..exceptions import FieldError

# Ordering used when reports are combined into an overall status
STATUS_ORDER = ('pass', 'info', 'unmet', 'vacuous', 'fail')


@dataclass
class InequalityReport:
    """Margins (rhs - lhs) of one inequality along a set of sample times.

    ``kind`` is 'conclusion' for claims that must hold, 'hypothesis' for
    premises of a conditional statement (a violated premise is 'unmet', never
    'fail'), or 'info' for quantities reported without a verdict.
    """

    eq_id: str
    times: np.ndarray
    margins: np.ndarray
    tolerance: float
    status: str
    kind: str = 'conclusion'
    description: str = ''
    values: Dict[str, float] = dataclass_field(default_factory=dict)
    note: str = ''

    def __repr__(self):
        return f'<InequalityReport {self.eq_id} {self.status} worst={self.worst_margin:.3g}>'

    @classmethod
    def from_margins(cls, eq_id, times, margins, tolerance, kind='conclusion', vacuous=False,
                     description='', values=None, note=''):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        margins = np.atleast_1d(np.asarray(margins, dtype=float))
        if times.shape != margins.shape:
            raise FieldError(f"{eq_id}: {times.size} sample times for {margins.size} margins")
        # +inf is an unbounded right-hand side; NaN never holds
        holds = bool(not np.any(np.isnan(margins)) and np.all(margins >= -tolerance))
        if kind == 'info':
            status = 'info'
        elif holds:
            status = 'pass'
        elif kind == 'hypothesis':
            status = 'unmet'
        else:
            status = 'fail'
        if vacuous and kind == 'conclusion':
            status = 'vacuous'
        return cls(eq_id, times, margins, float(tolerance), status, kind, description,
                   dict(values or {}), note)

    @property
    def worst_index(self) -> Optional[int]:
        if self.margins.size == 0:
            return None
        return int(np.argmin(np.where(np.isnan(self.margins), -np.inf, self.margins)))

    @property
    def worst_margin(self):
        i = self.worst_index
        return float('nan') if i is None else float(self.margins[i])

    @property
    def worst_time(self):
        i = self.worst_index
        return float('nan') if i is None else float(self.times[i])

    @property
    def holds(self):
        return self.status in ('pass', 'info')

    def to_dict(self, include_series=True):
        out = {
            'eq_id': self.eq_id,
            'status': self.status,
            'kind': self.kind,
            'description': self.description,
            'tolerance': self.tolerance,
            'worst_margin': self.worst_margin,
            'worst_time': self.worst_time,
            'values': self.values,
            'note': self.note,
        }
        if include_series:
            out['times'] = self.times.tolist()
            out['margins'] = self.margins.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(data['eq_id'], np.asarray(data.get('times', []), dtype=float),
                   np.asarray(data.get('margins', []), dtype=float), data['tolerance'],
                   data['status'], data.get('kind', 'conclusion'), data.get('description', ''),
                   data.get('values', {}), data.get('note', ''))


def overall_status(reports):
    """Worst status over a mapping or sequence of reports."""
    items = reports.values() if isinstance(reports, dict) else reports
    statuses = [r.status for r in items]
    if not statuses:
        return 'pass'
    return max(statuses, key=STATUS_ORDER.index)


@dataclass
class StabilitySeries:
    """Quantities of the H^1 stability argument on one window [kT, (k+1)T]."""

    window: int
    times: np.ndarray
    X_sq: np.ndarray
    Y_sq: np.ndarray
    Z_sq: np.ndarray
    G_sq: np.ndarray
    A_sq: np.ndarray
    int_A_sq: np.ndarray
    int_G_sq: np.ndarray
    envelope: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.times)
        for name in ('X_sq', 'Y_sq', 'Z_sq', 'G_sq', 'A_sq', 'int_A_sq', 'int_G_sq'):
            if len(getattr(self, name)) != n:
                raise FieldError(f"series {name} has {len(getattr(self, name))} samples, expected {n}")
        if np.any(self.X_sq > self.Y_sq * (1 + 1e-12) + 1e-300):
            raise FieldError("X^2 must not exceed Y^2")

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t1(self):
        return float(self.times[-1])
