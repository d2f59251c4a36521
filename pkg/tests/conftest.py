import math

import numpy as np
import pytest

from nsverify.core import spectral
from nsverify.core.solver import run_2d_base, taylor_green_exact
from nsverify.models.field import Field
from nsverify.models.trajectory import ForcingSpec, SolverConfig

TWO_PI = 2.0 * math.pi


@pytest.fixture(autouse=True)
def _quiet(monkeypatch, tmp_path):
    """Keep progress bars off and logs out of the working tree."""
    from nsverify.config import Config
    monkeypatch.setattr(Config, 'SHOW_PROGRESS', False)
    monkeypatch.setattr(Config, 'OUTPUT_ROOT', str(tmp_path / 'runs'))


@pytest.fixture
def plane16():
    return spectral.make_grid(TWO_PI, 16, 2)


@pytest.fixture
def plane32():
    return spectral.make_grid(TWO_PI, 32, 2)


@pytest.fixture
def box16():
    return spectral.make_grid(TWO_PI, 16, 3)


@pytest.fixture
def box8():
    return spectral.make_grid(TWO_PI, 8, 3)


def sine_field(grid, component=0, along=0, amplitude=1.0):
    """Vector field with a single nonzero component amplitude*sin(x_along)."""

    def func(*x):
        values = [np.zeros_like(x[0]) for _ in range(grid.dim)]
        values[component] = amplitude * np.sin(x[along])
        return values

    return spectral.to_spectral(Field.from_function(grid, func, divergence_free=component != along))


@pytest.fixture
def forced_base_run(plane16):
    """Short forced 2D base run: shear forcing at wavenumber 2 over two windows of length 1."""
    config = SolverConfig(
        grid=plane16, nu=0.1, dt=1e-2, t_end=2.0, T=1.0,
        forcing=ForcingSpec(kind='expression', components=['0.2*sin(2*x2)', '0']),
        initial=taylor_green_exact(plane16, 0.1, 0.0, amplitude=0.5),
        snapshot_stride=5)
    return run_2d_base(config)
