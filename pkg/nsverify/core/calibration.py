"""Numerical values for the absolute constants of the stability argument.

c1 and c4 follow from the sharp Poincare inequality on the torus. c3 (the
L6-H1 embedding) and c_I (the L3 interpolation inequality for gradients) are
lower bounds: the largest ratio observed over a random ensemble of mean-free,
divergence-free fields.

c5 retraces the estimate of the stretching term. With Holder and the
interpolation inequality,

    |int u . grad u . Lap u| <= c_I^2 ||D^2 u||^(5/2) ||grad u||^(1/2)
                             <= (nu c4 / 2) ||D^2 u||^2 + 108 c_I^12 / nu^3 ||grad u||^6,

by Young's inequality with exponents 4/3 and 4. The mean and base-flow
terms are absorbed the same way using c3 and the Poincare constant, giving
the factor 16 c3 (1 + kappa^-2). The volume enters through the L3 norm of a
constant, hence |Omega|^(1/3). c5 is the largest of these.
"""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..config import Config
from ..exceptions import FieldError
from ..utils.decorators import timed
from . import spectral
from .norms import embedding_ratio_l6_h1, interpolation_ratio, sharp_poincare_constants

logger = logging.getLogger(__name__)

MIN_ENSEMBLE = 100

# Cycled through so the ensemble mixes smooth and rough fields
SPECTRUM_DECAYS = (1.0, 1.5, 2.0, 3.0)


@dataclass(frozen=True)
class CalibratedConstants:
    c1: float
    c3: float
    c4: float
    c5: float
    c_I: float
    kappa: float
    ensemble_size: int
    seed: int
    c3_running_max: tuple = ()

    def to_dict(self):
        out = asdict(self)
        out['c3_running_max'] = list(self.c3_running_max)
        return out


def derived_c4(kappa):
    k2 = kappa ** 2
    return (k2 + k2 ** 2) / (1.0 + k2 + k2 ** 2)


def derived_c5(c3, c_I, kappa, volume):
    return max(108.0 * c_I ** 12, 16.0 * c3 * (1.0 + kappa ** -2), volume ** (1.0 / 3.0), 1.0)


@timed
def calibrate_constants(grid, ensemble_size=None, seed=0):
    """Calibrated c1, c3, c4, c5 (and c_I) on ``grid`` from ``ensemble_size`` random fields."""
    ensemble_size = Config.CALIBRATION_ENSEMBLE if ensemble_size is None else int(ensemble_size)
    if ensemble_size < MIN_ENSEMBLE:
        raise FieldError(f"calibration needs at least {MIN_ENSEMBLE} fields, got {ensemble_size}")
    c1, _ = sharp_poincare_constants(grid)
    embedding, interpolation = [], []
    for i in range(ensemble_size):
        decay = SPECTRUM_DECAYS[i % len(SPECTRUM_DECAYS)]
        field = spectral.random_divfree_field(grid, seed=[seed, i], spectrum_decay=decay)
        embedding.append(embedding_ratio_l6_h1(field))
        interpolation.append(interpolation_ratio(field))
    running = np.maximum.accumulate(embedding)
    c3 = float(running[-1])
    c_I = float(np.max(interpolation))
    c4 = derived_c4(grid.kappa)
    c5 = derived_c5(c3, c_I, grid.kappa, grid.volume)
    logger.info(f"Calibrated on {grid!r} with {ensemble_size} fields: c1={c1:.6g}, c3={c3:.6g}, "
                f"c_I={c_I:.6g}, c4={c4:.6g}, c5={c5:.6g}")
    if not math.isfinite(c5):
        raise FieldError("calibration produced a non-finite c5")
    return CalibratedConstants(c1=c1, c3=c3, c4=c4, c5=c5, c_I=c_I, kappa=grid.kappa,
                               ensemble_size=ensemble_size, seed=seed,
                               c3_running_max=tuple(float(v) for v in running))
