import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..exceptions import GridError


@dataclass(frozen=True)
class TorusGrid:
    """Uniform collocation grid on the periodic box [0, L]^dim.

    Spectral arrays follow the real-to-complex layout of ``scipy.fft.rfftn``:
    every axis but the last holds the full integer range in FFT order, the
    last axis holds only the non-negative half ``0..N/2``.

    Mode numbers run over [-N/2, N/2). The Nyquist slot of a leading axis
    carries -N/2 (``fftfreq``); on the last axis it carries +N/2
    (``rfftfreq``), which is the same mode. Only |m| and m^2 enter
    derivatives, masks and norms, so the two labels are interchangeable.
    """

    L: float
    N: int
    dim: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if not (isinstance(self.L, (int, float)) and math.isfinite(self.L) and self.L > 0):
            raise GridError(f"box length L must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise GridError(f"N must be an even integer >= 4, got {self.N}")

    def __repr__(self):
        return f'<TorusGrid L={self.L:g} N={self.N} dim={self.dim}>'

    @property
    def kappa(self):
        """Lowest nonzero wavenumber 2*pi/L."""
        return 2.0 * math.pi / self.L

    @property
    def spacing(self):
        return self.L / self.N

    @property
    def volume(self):
        return self.L ** self.dim

    @property
    def physical_shape(self):
        return (self.N,) * self.dim

    @property
    def spectral_shape(self):
        return (self.N,) * (self.dim - 1) + (self.N // 2 + 1,)

    @property
    def spatial_axes(self):
        return tuple(range(1, self.dim + 1))

    @cached_property
    def multipliers(self):
        """Integer mode numbers m per axis, shaped to broadcast over spectral arrays.

        The Nyquist entry is -N/2 on leading axes and +N/2 on the last axis.
        """
        out = []
        for axis in range(self.dim):
            if axis == self.dim - 1:
                m = np.fft.rfftfreq(self.N, 1.0 / self.N)
            else:
                m = np.fft.fftfreq(self.N, 1.0 / self.N)
            shape = [1] * self.dim
            shape[axis] = m.size
            out.append(np.rint(m).astype(np.int64).reshape(shape))
        return tuple(out)

    @cached_property
    def wavenumbers(self):
        return tuple(self.kappa * m for m in self.multipliers)

    @cached_property
    def k_vectors(self):
        """Full wavenumber vectors, shape (dim, *spectral_shape)."""
        return np.stack([np.broadcast_to(k, self.spectral_shape) for k in self.wavenumbers]).astype(float)

    @cached_property
    def k_squared(self):
        return np.sum(self.k_vectors ** 2, axis=0)

    @cached_property
    def derivative_wavenumbers(self):
        """Wavenumbers for odd derivatives: the Nyquist mode has no real derivative and is dropped."""
        half = self.N // 2
        return np.stack([
            np.broadcast_to(np.where(np.abs(m) == half, 0.0, k), self.spectral_shape)
            for m, k in zip(self.multipliers, self.wavenumbers)
        ])

    @cached_property
    def hermitian_weights(self):
        """Multiplicity of each stored coefficient in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    @cached_property
    def dealias_mask(self):
        keep = np.ones(self.spectral_shape, dtype=bool)
        for m in self.multipliers:
            keep &= np.abs(m) <= self.N / 3.0
        return keep

    def coordinates(self):
        x = np.arange(self.N) * self.spacing
        return np.meshgrid(*([x] * self.dim), indexing='ij')

    def mode_index(self, modes):
        """Storage index of the integer mode ``modes``.

        Leading entries may be any integer and are reduced mod N, so N/2 and
        -N/2 share a slot. The last entry must lie in [0, N/2]; -N/2 is
        accepted as the Nyquist mode stored at N/2.
        """
        if len(modes) != self.dim:
            raise GridError(f"mode {modes} does not match dim={self.dim}")
        *lead, last = modes
        if last == -(self.N // 2):
            last = self.N // 2
        if not 0 <= last <= self.N // 2:
            raise GridError(f"last-axis mode must lie in [0, {self.N // 2}], got {last}")
        return tuple(int(m) % self.N for m in lead) + (int(last),)

    def plane(self):
        """The 2D grid of the (x1, x2) cross-section."""
        return TorusGrid(self.L, self.N, 2)

    def lifted(self):
        return TorusGrid(self.L, self.N, 3)
