"""Norms and function-space quantities measured on fields and trajectories.

H^s norms are evaluated modewise with exact spectral derivatives, using the
weights 1 + |k|^2 + ... + |k|^(2s) (derivatives over ordered index tuples).
L_p norms with p != 2 use collocation quadrature on a grid refined by 2.
"""
import logging
import math

import numpy as np
import scipy.integrate

from ..config import Config
from ..exceptions import CoverageError, FieldError
from ..models.field import Field
from ..models.norms import NormReport, TrajectoryNorms
from . import spectral

logger = logging.getLogger(__name__)

# Time stamps closer than this are treated as equal
TIME_EPS = 1e-9


def _pointwise_magnitude(values):
    return np.sqrt(np.sum(values ** 2, axis=0))


def _quadrature_norm(magnitude, p, volume):
    if math.isinf(p):
        return float(np.max(magnitude))
    return float((np.mean(magnitude ** p) * volume) ** (1.0 / p))


def lp_norm(field, p):
    """||f||_{L_p}; vector fields use the pointwise Euclidean magnitude."""
    if not p >= 1:
        raise FieldError(f"L_p norms need p >= 1, got {p}")
    if p == 2:
        return math.sqrt(spectral.parseval_sum(field))
    magnitude = _pointwise_magnitude(spectral.zero_pad(field))
    return _quadrature_norm(magnitude, p, field.grid.volume)


def sobolev_norm_sq(field, s):
    if s not in (0, 1, 2):
        raise FieldError(f"H^s norms are supported for s in (0, 1, 2), got {s}")
    k2 = field.grid.k_squared
    weight = sum(k2 ** j for j in range(s + 1))
    return spectral.parseval_sum(field, weight)


def norm_report(field, sigma=None):
    """All squared norms the estimates need, evaluated on ``field`` as given."""
    sigma = Config.DEFAULT_SIGMA if sigma is None else float(sigma)
    grid = field.grid
    field = spectral.to_spectral(field)
    k2 = grid.k_squared
    l2_sq = spectral.parseval_sum(field)
    grad_l2_sq = spectral.parseval_sum(field, k2)
    hess_sq = spectral.parseval_sum(field, k2 * k2)

    u = _pointwise_magnitude(spectral.zero_pad(field))
    du = _pointwise_magnitude(spectral.zero_pad(spectral.gradient(field)))
    vol = grid.volume
    return NormReport(
        time_stamp=float(field.time_stamp),
        l2_sq=l2_sq,
        h1_sq=l2_sq + grad_l2_sq,
        h2_sq=l2_sq + grad_l2_sq + hess_sq,
        grad_l2_sq=grad_l2_sq,
        grad_l3_sq=_quadrature_norm(du, 3.0, vol) ** 2,
        l6_sq=_quadrature_norm(u, 6.0, vol) ** 2,
        sigma=sigma,
        w1_sigma=_quadrature_norm(u, sigma, vol) + _quadrature_norm(du, sigma, vol),
    )


def trajectory_norms(fields, sigma=None):
    reports = [norm_report(f, sigma) for f in fields]
    interval = (reports[0].time_stamp, reports[-1].time_stamp) if reports else (0.0, 0.0)
    return TrajectoryNorms(reports, interval)


def _snapshots(source):
    fields = list(getattr(source, 'snapshots', source))
    if not fields:
        raise CoverageError("trajectory has no snapshots")
    return fields


def integrate_window(times, values, t0, t1):
    """Trapezoid integral of sampled ``values`` over [t0, t1].

    Endpoints falling between samples are handled by linear interpolation of
    the integrand.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if t1 < t0:
        raise CoverageError(f"empty interval ({t0}, {t1})")
    if times.size == 0 or t0 < times[0] - TIME_EPS or t1 > times[-1] + TIME_EPS:
        raise CoverageError(f"interval ({t0}, {t1}) is outside the sampled span")
    inner = (times > t0 + TIME_EPS) & (times < t1 - TIME_EPS)
    t = np.concatenate([[t0], times[inner], [t1]])
    v = np.concatenate([[np.interp(t0, times, values)], values[inner], [np.interp(t1, times, values)]])
    return float(scipy.integrate.trapezoid(v, t))


def mixed_norm(source, p1, p2, interval):
    """||u||_{L_{p2}(t0, t1; L_{p1})} by trapezoid quadrature over snapshots."""
    fields = _snapshots(source)
    times = np.array([f.time_stamp for f in fields], dtype=float)
    t0, t1 = interval
    if not p2 >= 1:
        raise FieldError(f"time exponent must be >= 1, got {p2}")
    values = np.array([lp_norm(f, p1) ** p2 for f in fields])
    return integrate_window(times, values, t0, t1) ** (1.0 / p2)


def time_derivatives(fields):
    """Second-order finite differences in time of a snapshot sequence."""
    times = np.array([f.time_stamp for f in fields], dtype=float)
    stacked = np.stack([spectral.to_spectral(f).data for f in fields])
    dt_data = np.gradient(stacked, times, axis=0, edge_order=2)
    return [Field(f.grid, d, 'spectral', time_stamp=f.time_stamp) for f, d in zip(fields, dt_data)]


def w21_norm(source, p1, p2, interval):
    """||D^2 u|| + ||d_t u|| + ||u|| in L_{p2}(t0, t1; L_{p1})."""
    fields = _snapshots(source)
    t0, t1 = interval
    inside = [f for f in fields if t0 - TIME_EPS <= f.time_stamp <= t1 + TIME_EPS]
    if len(inside) < 3:
        raise FieldError(f"W^(2,1) norm needs at least 3 snapshots in {interval}, got {len(inside)}")
    d_t = time_derivatives(fields)
    second = [spectral.hessian(f) for f in fields]
    return (mixed_norm(second, p1, p2, interval)
            + mixed_norm(d_t, p1, p2, interval)
            + mixed_norm(fields, p1, p2, interval))


def _require_mean_free_nonzero(field):
    field = spectral.to_spectral(field)
    l2_sq = spectral.parseval_sum(field)
    if l2_sq == 0.0:
        raise FieldError("ratio undefined for the zero field")
    m = spectral.mean(field).value
    rms = math.sqrt(l2_sq / field.grid.volume)
    if float(np.max(np.abs(m))) > 1e-12 * rms:
        raise FieldError("field is not mean-free")
    return field


def poincare_ratio(field, relative_to='h1'):
    """||grad u||^2 / ||u||^2_{H^1} (or / ||u||^2_{L_2} with ``relative_to='l2'``)."""
    field = _require_mean_free_nonzero(field)
    grad_sq = spectral.parseval_sum(field, field.grid.k_squared)
    l2_sq = spectral.parseval_sum(field)
    if relative_to == 'l2':
        return grad_sq / l2_sq
    if relative_to != 'h1':
        raise FieldError(f"relative_to must be 'h1' or 'l2', got {relative_to!r}")
    return grad_sq / (l2_sq + grad_sq)


def sharp_poincare_constants(grid):
    """(kappa^2 / (1 + kappa^2), kappa^2): the H^1 and L_2 forms of the torus Poincare constant."""
    k2 = grid.kappa ** 2
    return k2 / (1.0 + k2), k2


def embedding_ratio_l6_h1(field):
    """||u||^2_{L_6} / ||u||^2_{H^1}."""
    field = _require_mean_free_nonzero(field)
    return lp_norm(field, 6.0) ** 2 / sobolev_norm_sq(field, 1)


def interpolation_ratio(field):
    """||grad u||_{L_3} / (||D^2 u||_{L_2}^(1/2) ||grad u||_{L_2}^(1/2))."""
    field = _require_mean_free_nonzero(field)
    k2 = field.grid.k_squared
    grad_l2 = math.sqrt(spectral.parseval_sum(field, k2))
    hess_l2 = math.sqrt(spectral.parseval_sum(field, k2 * k2))
    grad_l3 = lp_norm(spectral.gradient(field), 3.0)
    return grad_l3 / math.sqrt(hess_l2 * grad_l2)
