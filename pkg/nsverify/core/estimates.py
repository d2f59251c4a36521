"""Energy-type bounds for the two-dimensional base flow, checked along a run.

The window constants A1..A5 are evaluated from the recorded per-step norm
series; the supremum over windows is the maximum over the complete windows
actually simulated.
"""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..config import Config
from ..exceptions import CoverageError, FieldError
from ..models.budget import TwoDBudget
from ..models.report import InequalityReport
from ..utils.decorators import refuses_3d
from . import spectral
from .norms import integrate_window, norm_report, sharp_poincare_constants, w21_norm

logger = logging.getLogger(__name__)

# Columns compared between a run and its dt/2 counterpart
TOLERANCE_COLUMNS = ('l2_sq', 'h1_sq', 'h2_sq', 'grad_l2_sq')

# Relative slack of the uniform-in-time W^1_sigma monitor
W1_SIGMA_RTOL = 1e-3

TIME_EPS = 1e-9


@dataclass(frozen=True)
class ToleranceModel:
    """tol(dt) = C * dt^2 + floor."""

    C: float = Config.TOLERANCE_CONSTANT
    floor: float = Config.TOLERANCE_FLOOR
    source: str = 'default'

    def __call__(self, dt):
        return self.C * dt ** 2 + self.floor

    def to_dict(self):
        return asdict(self)


def estimate_tolerance(coarse, fine, safety=2.0):
    """Fit C from a run and the same run with half the step (Richardson estimate times ``safety``)."""
    if not math.isclose(fine.dt * 2.0, coarse.dt, rel_tol=1e-9):
        raise FieldError(f"expected a dt/2 companion run, got dt={coarse.dt} and dt={fine.dt}")
    t = coarse.times
    if fine.times[-1] < t[-1] - TIME_EPS:
        raise CoverageError("the dt/2 run is shorter than the run it calibrates")
    worst = 0.0
    for name in TOLERANCE_COLUMNS:
        reference = np.interp(t, fine.times, fine.series(name))
        worst = max(worst, float(np.max(np.abs(coarse.series(name) - reference))))
    # error(dt) ~ 4/3 * |u_dt - u_dt/2| for a second-order scheme
    C = safety * (4.0 / 3.0) * worst / coarse.dt ** 2
    logger.info(f"Tolerance constant from dt-halving: C={C:.6g} (max difference {worst:.3g})")
    return ToleranceModel(C=C, source='dt-halving')


def resolve_tolerance(tolerance, dt):
    if tolerance is None:
        return ToleranceModel()(dt)
    if callable(tolerance):
        return float(tolerance(dt))
    return float(tolerance)


def window_bounds(t_end, T):
    """Complete windows [kT, (k+1)T] inside [0, t_end]."""
    if not T > 0:
        raise CoverageError(f"window length must be positive, got {T}")
    count = int(math.floor(t_end / T + TIME_EPS))
    return [(k * T, (k + 1) * T) for k in range(count)]


def window_mask(times, t0, t1):
    return (times >= t0 - TIME_EPS) & (times <= t1 + TIME_EPS)


def compute_A_constants(base, T, forcing_l2_sq=None, c_s1=None):
    """Window constants of the base flow.

    ``forcing_l2_sq`` is an optional ``(times, values)`` series of
    ||f_s||^2; by default the series recorded with the run is used.
    """
    c_s1 = sharp_poincare_constants(base.grid)[0] if c_s1 is None else c_s1
    nu = base.nu
    if forcing_l2_sq is None:
        f_times, f_values = base.times, base.series('forcing_l2_sq')
    else:
        f_times, f_values = (np.asarray(a, dtype=float) for a in forcing_l2_sq)
    windows = window_bounds(min(base.t_end, f_times[-1]), T)
    if not windows:
        raise CoverageError(f"run of length {base.t_end} holds no complete window of length {T}")
    integrals = tuple(integrate_window(f_times, f_values, t0, t1) for t0, t1 in windows)
    A1_sq = max(integrals) / (nu * c_s1)
    growth = 1.0 - math.exp(-nu * c_s1 * T)
    A2_sq = A1_sq / growth + float(base.series('l2_sq')[0])
    A4_sq = c_s1 * A1_sq / growth + float(base.series('grad_l2_sq')[0])
    return TwoDBudget(nu=nu, T=T, c_s1=c_s1, A1_sq=A1_sq, A2_sq=A2_sq, A3_sq=A1_sq + A2_sq,
                      A4_sq=A4_sq, A5_sq=A1_sq + A4_sq, k_max=len(windows), window_forcing=integrals)


def _running_bound(times, level, rate, windows):
    """level(t) + rate * int_{kT}^t ... concatenated over windows; returns (times, values)."""
    out_t, out_v = [], []
    for t0, t1 in windows:
        mask = window_mask(times, t0, t1)
        t = times[mask]
        running = cumulative_trapezoid(rate[mask], t, initial=0.0) if t.size > 1 else np.zeros(t.size)
        out_t.append(t)
        out_v.append(level[mask] + running)
    return np.concatenate(out_t), np.concatenate(out_v)


def verify_decay_2d(base, budget, tolerance=None):
    """Check the window energy and enstrophy bounds of the base flow at every sample.

    Returns reports keyed '3.1' (L2 at window starts), '3.2' (L2 plus
    integrated H^1 in each window), '3.3' (differential energy inequality),
    '3.4' (gradient at window starts) and '3.5' (gradient plus integrated H^2).
    """
    tol = resolve_tolerance(tolerance, base.dt)
    times = base.times
    windows = window_bounds(base.t_end, budget.T)[:budget.k_max]
    if not windows:
        raise CoverageError("base run covers no complete window")
    nu, c = budget.nu, budget.c_s1
    l2, h1, h2 = base.series('l2_sq'), base.series('h1_sq'), base.series('h2_sq')
    grad = base.series('grad_l2_sq')
    forcing = base.series('forcing_l2_sq')
    starts = np.array([w[0] for w in windows] + [windows[-1][1]])
    reports = {}

    reports['3.1'] = InequalityReport.from_margins(
        '3.1', starts, budget.A2_sq - np.interp(starts, times, l2), tol,
        description='||v_s(kT)||^2 <= A2^2', values={'A2_sq': budget.A2_sq})

    t, lhs = _running_bound(times, l2, nu * c * h1, windows)
    reports['3.2'] = InequalityReport.from_margins(
        '3.2', t, budget.A3_sq - lhs, tol,
        description='||v_s(t)||^2 + nu c_s1 int ||v_s||_H1^2 <= A3^2', values={'A3_sq': budget.A3_sq})

    inside = window_mask(times, windows[0][0], windows[-1][1])
    d_l2 = np.gradient(l2, times, edge_order=2) if times.size > 2 else np.zeros_like(l2)
    margin = forcing / (nu * c) - (d_l2 + nu * c * h1)
    reports['3.3'] = InequalityReport.from_margins(
        '3.3', times[inside], margin[inside], tol,
        description='d/dt ||v_s||^2 + nu c_s1 ||v_s||_H1^2 <= ||f_s||^2 / (nu c_s1)')

    reports['3.4'] = InequalityReport.from_margins(
        '3.4', starts, budget.A4_sq - np.interp(starts, times, grad), tol,
        description='||grad v_s(kT)||^2 <= A4^2', values={'A4_sq': budget.A4_sq})

    t, lhs = _running_bound(times, grad, nu * c * h2, windows)
    reports['3.5'] = InequalityReport.from_margins(
        '3.5', t, budget.A5_sq - lhs, tol,
        description='||grad v_s(t)||^2 + nu c_s1 int ||v_s||_H2^2 <= A5^2', values={'A5_sq': budget.A5_sq})

    for key, report in reports.items():
        if report.status == 'fail':
            logger.warning(f"Inequality {key} fails: worst margin {report.worst_margin:.3g} "
                           f"at t={report.worst_time:.6g} (tolerance {tol:.3g})")
    return reports


@refuses_3d
def vorticity_cancellation_residual(vs):
    """|int v_s . grad v_s . Lap v_s| / (||v_s||_H1 ||v_s||_H2^2), barred factors mean-free.

    The integral vanishes for two-dimensional divergence-free fields; the
    products are evaluated on the grid refined by 2, where they are exact.
    """
    vs = spectral.to_spectral(vs)
    if not vs.is_vector:
        raise FieldError(f"expected a 2-component velocity, got {vs.ncomp}")
    div = spectral.divergence_norm(vs)
    if div > 1e-10:
        raise FieldError(f"velocity is not divergence-free (relative divergence {div:.3g})")
    grid = vs.grid
    bar = spectral.mean_free(vs)
    k2 = grid.k_squared
    h2_sq = spectral.parseval_sum(bar, 1.0 + k2 + k2 * k2)
    h1 = math.sqrt(spectral.parseval_sum(vs, 1.0 + k2))
    if h2_sq == 0.0 or h1 == 0.0:
        return 0.0
    v = spectral.zero_pad(vs)
    grad = spectral.zero_pad(spectral.gradient(bar)).reshape((2, 2) + v.shape[1:])
    lap = spectral.zero_pad(spectral.laplacian(bar))
    integral = np.mean(np.einsum('j...,cj...,c...->...', v, grad, lap)) * grid.volume
    return abs(float(integral)) / (h1 * h2_sq)


def w1sigma_monitor(base, sigma=None, T=None, rel_tol=W1_SIGMA_RTOL, tolerance=None):
    """Window maxima of ||v_s||_{W^1_sigma} (mean-free part) against the first window's maximum.

    The bound it monitors has an unknown constant, so the report is
    informational; ``values['bounded']`` records whether no later window
    exceeds the first-window maximum by more than ``rel_tol``.
    """
    sigma = Config.DEFAULT_SIGMA if sigma is None else float(sigma)
    if not sigma > 3:
        raise FieldError(f"the W^1_sigma monitor needs sigma > 3, got {sigma}")
    tol = resolve_tolerance(tolerance, base.dt)
    stored = base.norms.reports[0].sigma if len(base.norms) else None
    if stored is not None and math.isclose(stored, sigma):
        times, values = base.times, base.series('w1_sigma')
    else:
        times = base.snapshot_times
        values = np.array([norm_report(spectral.mean_free(s), sigma).w1_sigma for s in base.snapshots])
    windows = window_bounds(times[-1], T) if T else []
    if not windows:
        windows = [(times[0], times[-1])]
    maxima = np.array([np.max(values[window_mask(times, t0, t1)]) for t0, t1 in windows])
    reference = maxima[0]
    margins = reference * (1.0 + rel_tol) - maxima
    bounded = bool(np.all(margins >= -tol))
    report = InequalityReport.from_margins(
        '3.8', [w[1] for w in windows], margins, tol, kind='info',
        description='window maxima of ||v_s||_W1sigma against the first window',
        values={'sigma': sigma, 'sup': float(np.max(values)), 'first_window_max': float(reference),
                'bounded': bounded, 'window_maxima': maxima.tolist()})
    if not bounded:
        logger.info(f"W^1_sigma maxima grow beyond the first window: {maxima.tolist()}")
    return report


def window_w21_norms(base, T):
    """||v_s||_{W^{2,1}_{2,2}} of the mean-free base flow over each complete window."""
    fields = [spectral.mean_free(s) for s in base.snapshots]
    out = []
    for t0, t1 in window_bounds(base.snapshot_times[-1], T):
        try:
            out.append(w21_norm(fields, 2.0, 2.0, (t0, t1)))
        except FieldError:
            out.append(float('nan'))
    return out

