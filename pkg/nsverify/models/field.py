from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from ..exceptions import FieldError, GridError
from .grid import TorusGrid

Representation = Literal['physical', 'spectral']


@dataclass(frozen=True, eq=False)
class Field:
    """A scalar or vector field on a torus grid.

    ``data`` has a leading component axis: ``(ncomp, *physical_shape)`` real
    values or ``(ncomp, *spectral_shape)`` complex coefficients. Fields are
    treated as immutable; every operation returns a new instance.
    """

    grid: TorusGrid
    data: np.ndarray
    representation: Representation = 'physical'
    divergence_free: bool = False
    time_stamp: float = 0.0

    def __post_init__(self):
        if self.representation not in ('physical', 'spectral'):
            raise FieldError(f"unknown representation {self.representation!r}")
        data = np.asarray(self.data)
        expected = self.grid.spectral_shape if self.representation == 'spectral' else self.grid.physical_shape
        if data.ndim != self.grid.dim + 1 or data.shape[1:] != expected:
            raise FieldError(
                f"{self.representation} data of shape {data.shape} does not fit {self.grid!r}"
                f" (expected (ncomp, *{expected}))")
        if self.representation == 'spectral':
            data = data.astype(np.complex128, copy=False)
        else:
            if np.iscomplexobj(data):
                raise FieldError("physical data must be real-valued")
            data = data.astype(np.float64, copy=False)
        object.__setattr__(self, 'data', data)

    def __repr__(self):
        flag = ' div-free' if self.divergence_free else ''
        return f'<Field {self.ncomp}x{self.grid!r} {self.representation}{flag} t={self.time_stamp:g}>'

    @property
    def ncomp(self):
        return self.data.shape[0]

    @property
    def is_spectral(self):
        return self.representation == 'spectral'

    @property
    def is_vector(self):
        return self.ncomp == self.grid.dim

    def replace(self, **changes):
        return replace(self, **changes)

    def _check_compatible(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        if other.grid != self.grid:
            raise GridError(f"grid mismatch: {self.grid!r} vs {other.grid!r}")
        if other.representation != self.representation:
            raise FieldError("cannot combine fields in different representations")
        if other.ncomp != self.ncomp:
            raise FieldError(f"component mismatch: {self.ncomp} vs {other.ncomp}")
        return True

    def __add__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return replace(self, data=self.data + other.data,
                       divergence_free=self.divergence_free and other.divergence_free)

    def __sub__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return replace(self, data=self.data - other.data,
                       divergence_free=self.divergence_free and other.divergence_free)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return replace(self, data=self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return replace(self, data=-self.data)

    @classmethod
    def zeros(cls, grid, ncomp=None, representation='spectral', time_stamp=0.0):
        ncomp = grid.dim if ncomp is None else ncomp
        if representation == 'spectral':
            data = np.zeros((ncomp,) + grid.spectral_shape, dtype=np.complex128)
        else:
            data = np.zeros((ncomp,) + grid.physical_shape)
        return cls(grid, data, representation, divergence_free=ncomp == grid.dim,
                   time_stamp=time_stamp)

    @classmethod
    def from_function(cls, grid, func, time_stamp=0.0, divergence_free=False):
        """Sample ``func(*coordinates)`` (returning a sequence of components) on the grid."""
        values = func(*grid.coordinates())
        data = np.stack([np.broadcast_to(np.asarray(v, dtype=float), grid.physical_shape)
                         for v in values])
        return cls(grid, data, 'physical', divergence_free=divergence_free, time_stamp=time_stamp)


@dataclass(frozen=True, eq=False)
class MeanVector:
    """Spatial average of a field: the k=0 Fourier coefficient."""

    value: np.ndarray
    time_stamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'value', np.asarray(self.value, dtype=float).reshape(-1))

    def __repr__(self):
        return f'<MeanVector {np.array2string(self.value, precision=6)} t={self.time_stamp:g}>'

    @property
    def norm_sq(self):
        return float(np.dot(self.value, self.value))
