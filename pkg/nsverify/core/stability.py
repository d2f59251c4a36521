"""Stability of the base flow under three-dimensional perturbations.

Two layers are checked on a perturbation run driven by a base run:

* the L2 bound, valid when the L2 assumption on the window length holds;
* the H^1 bound X^2 = ||u||_H1^2 <= gamma, valid when the smallness
  hypotheses on the initial data, on G^2 and on the window integrals of A^2
  and G^2 hold. Its proof compares X^2 with the solution of a scalar
  differential inequality (the Gronwall envelope).

Base-flow norms are measured on the 2D grid and lifted to the 3D box:
squared L_p norms of an x3-invariant field pick up a factor L^(2/p).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp

from ..exceptions import CoverageError
from ..models.budget import StabilityBudget, TwoDBudget
from ..models.report import InequalityReport, StabilitySeries
from . import conditions
from .estimates import TIME_EPS, resolve_tolerance, window_bounds, window_mask
from .norms import integrate_window

logger = logging.getLogger(__name__)

# Relative slack allowed when comparing X^2 with an envelope or endpoint bound
ENVELOPE_RTOL = 1e-3


def lift_factor(base, target_dim, p=2.0):
    """Factor turning a squared L_p norm on the base grid into one on the target box."""
    if base.grid.dim >= target_dim:
        return 1.0
    return base.grid.L ** (2.0 / p)


def lifted_budget(budget, factor):
    """A TwoDBudget with all squared L2 quantities multiplied by ``factor``."""
    if factor == 1.0:
        return budget
    return TwoDBudget(nu=budget.nu, T=budget.T, c_s1=budget.c_s1, A1_sq=budget.A1_sq * factor,
                      A2_sq=budget.A2_sq * factor, A3_sq=budget.A3_sq * factor,
                      A4_sq=budget.A4_sq * factor, A5_sq=budget.A5_sq * factor, k_max=budget.k_max,
                      window_forcing=tuple(w * factor for w in budget.window_forcing))


def default_budget(nu, T, constants, gamma_fraction=0.5, gamma=None, gamma_star=None,
                   c_star=None, alpha=None):
    """StabilityBudget from calibrated constants; any parameter may be overridden."""
    c4, c5 = constants.c4, constants.c5
    notes = []
    if c_star is None:
        c_star = nu * c4 / 2.0
        notes.append('c_star = nu*c4/2')
    if gamma_star is None:
        gamma_star = conditions.default_gamma_star(nu, c4, c5, c_star)
        notes.append('gamma_star = sqrt((nu*c4 - c_star/2) nu^3 / c5)')
    if alpha is None:
        alpha = conditions.default_alpha(c_star, T)
        notes.append('alpha = (1 - exp(-c_star T/4)) exp(-c_star T/4) / 2')
    if gamma is None:
        gamma = gamma_fraction * gamma_star
        notes.append(f'gamma = {gamma_fraction:g} * gamma_star')
    return StabilityBudget(nu=nu, T=T, gamma=gamma, gamma_star=gamma_star, c_star=c_star, alpha=alpha,
                           c1=constants.c1, c3=constants.c3, c4=c4, c5=c5, notes=tuple(notes))


@dataclass(frozen=True)
class L2Budget:
    B1_sq: float
    B2_sq: float
    B2_sq_A3: float
    B3_sq: float
    B4_sq: float
    assumption_margin: float
    explicit_margin: float
    k_max: int

    @property
    def hypotheses_hold(self):
        return self.assumption_margin >= 0.0

    def to_dict(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__} | {
            'hypotheses_hold': self.hypotheses_hold}


def _mean_sq(trajectory):
    values = trajectory.mean_values()
    return np.sum(values ** 2, axis=1)


def _grown(value, exponent):
    """value * exp(exponent), infinite on overflow and zero for a zero value."""
    if value == 0.0:
        return 0.0
    try:
        return value * math.exp(exponent)
    except OverflowError:
        return math.inf


def compute_B_constants(pert, budget2d, c1, c3, T=None, tolerance=None, lift=1.0):
    """L2 window constants of the perturbation and the reports on their assumptions.

    ``budget2d`` holds the base-flow constants; ``lift`` rescales them to the
    perturbation box (``lift_factor(base, 3)`` for a 2D base). Returns
    ``(L2Budget, reports)``
    with reports keyed '4.1.hyp' (window-length assumption) and '4.11'
    (its explicit form).
    """
    T = budget2d.T if T is None else T
    nu = pert.nu
    tol = resolve_tolerance(tolerance, pert.dt)
    lifted = lifted_budget(budget2d, lift)
    times = pert.times
    integrand = (nu * c1 / (2.0 * c3)) * _mean_sq(pert) \
        + (2.0 * c3 / (nu * c1)) * pert.series('forcing_l65') ** 2
    windows = window_bounds(pert.t_end, T)
    if not windows:
        raise CoverageError(f"perturbation run of length {pert.t_end} holds no complete window of length {T}")
    B1_sq = max(integrate_window(times, integrand, t0, t1) for t0, t1 in windows)
    B2_sq = _grown(B1_sq, 4.0 * c3 * lifted.A5_sq / (nu * c1))
    B2_sq_A3 = _grown(B1_sq, 4.0 * c3 * lifted.A3_sq / (nu * c1))
    B3_sq = B2_sq / (1.0 - math.exp(-nu * c1 * T / 2.0)) + float(pert.series('l2_sq')[0])
    B4_sq = B2_sq + B3_sq
    assumption = conditions.l2_assumption_margin(nu, T, c1, c3, lifted.A3_sq)
    grad0 = lifted.A4_sq - lifted.c_s1 * lifted.A1_sq / (1.0 - math.exp(-nu * lifted.c_s1 * T))
    explicit = conditions.explicit_l2_condition_margin(
        nu, T, lifted.c_s1, c1, c3, max(lifted.window_forcing, default=0.0), grad0)
    result = L2Budget(B1_sq, B2_sq, B2_sq_A3, B3_sq, B4_sq, assumption, explicit, len(windows))
    reports = {
        '4.1.hyp': InequalityReport.from_margins(
            '4.1.hyp', [0.0], [assumption], tol, kind='hypothesis',
            description='-nu c1 T/2 + 4 c3 A3^2/(nu c1) <= 0', values={'A3_sq': lifted.A3_sq}),
        '4.11': InequalityReport.from_margins(
            '4.11', [0.0], [explicit], tol, kind='hypothesis',
            description='explicit window-length condition on the base forcing and initial gradient'),
    }
    return result, reports


def verify_l2_stability(pert, l2_budget, T, tolerance=None):
    """'4.1.1': ||u(kT)||^2 <= B3^2 at window starts; '4.1.2': ||u(t)||^2 <= B4^2 along the run."""
    tol = resolve_tolerance(tolerance, pert.dt)
    vacuous = not l2_budget.hypotheses_hold
    times, l2 = pert.times, pert.series('l2_sq')
    windows = window_bounds(pert.t_end, T)
    starts = np.array([w[0] for w in windows] + [windows[-1][1]]) if windows else times[:1]
    values = {'B2_sq': l2_budget.B2_sq, 'B2_sq_A3': l2_budget.B2_sq_A3, 'B3_sq': l2_budget.B3_sq,
              'B4_sq': l2_budget.B4_sq}
    note = 'hypotheses of the L2 bound do not hold' if vacuous else ''
    if not math.isfinite(l2_budget.B2_sq):
        note = (note + '; ' if note else '') + 'B2^2 overflows, the L2 bounds are infinite'
    return {
        '4.1.1': InequalityReport.from_margins(
            '4.1.1', starts, l2_budget.B3_sq - np.interp(starts, times, l2), tol, vacuous=vacuous,
            description='||u(kT)||^2 <= B3^2', values=values, note=note),
        '4.1.2': InequalityReport.from_margins(
            '4.1.2', times, l2_budget.B4_sq - l2, tol, vacuous=vacuous,
            description='||u(t)||^2 <= B4^2', values=values, note=note),
    }


def stability_series(pert, base, budget, k):
    """X^2, Y^2, Z^2, G^2 and A^2 on window k of the perturbation run."""
    t0, t1 = k * budget.T, (k + 1) * budget.T
    if t1 > pert.t_end + TIME_EPS:
        raise CoverageError(f"perturbation run ends at {pert.t_end}, window {k} needs {t1}")
    mask = window_mask(pert.times, t0, t1)
    times = pert.times[mask]
    grad_l3_sq = np.interp(times, base.times, base.series('grad_l3_sq')) * lift_factor(base, pert.grid.dim, 3.0)
    mean_sq = _mean_sq(pert)[mask]
    A_sq = budget.c5 / budget.nu * grad_l3_sq
    G_sq = budget.c5 / budget.nu * (grad_l3_sq * mean_sq + pert.series('forcing_l2_sq')[mask])
    X_sq = pert.series('h1_sq')[mask]
    int_A = cumulative_trapezoid(A_sq, times, initial=0.0)
    int_G = cumulative_trapezoid(G_sq, times, initial=0.0)
    return StabilitySeries(window=k, times=times, X_sq=X_sq, Y_sq=pert.series('h2_sq')[mask],
                           Z_sq=np.exp(-int_A) * X_sq, G_sq=G_sq, A_sq=A_sq, int_A_sq=int_A, int_G_sq=int_G)


def check_stability_hypotheses(series, budget, tolerance=0.0):
    """Reports on every premise of the H^1 bound, for a list of window series.

    Keys: '4.12.1' (initial H^1 size), '4.12.2' (G^2 pointwise), '4.26.1'
    and '4.26.2' (window integrals of A^2 and G^2), '4.27' (recursion
    condition, sum form) and '4.19' (admissibility of gamma_star).
    """
    tol = float(tolerance)
    c_star, gamma, alpha, T = budget.c_star, budget.gamma, budget.alpha, budget.T
    first = series[0]
    ends = [s.t1 for s in series]
    int_A = np.array([s.int_A_sq[-1] for s in series])
    int_G = np.array([s.int_G_sq[-1] for s in series])
    margins_26 = [conditions.window_margins(c_star, T, a, g, alpha, gamma) for a, g in zip(int_A, int_G)]
    recursion = conditions.recursion_margin(alpha, c_star, T)
    measured = [conditions.recursion_margin(alpha, c_star, T, int_A_sq=a) for a in int_A]
    product = conditions.recursion_margin(alpha, c_star, T, form='product')
    small, gap = conditions.smallness_margins(budget.nu, budget.c4, budget.c5, budget.gamma_star, c_star)
    reports = {
        '4.12.1': InequalityReport.from_margins(
            '4.12.1', [first.t0], [gamma - first.X_sq[0]], tol, kind='hypothesis',
            description='||u(0)||_H1^2 <= gamma', values={'gamma': gamma}),
        '4.12.2': InequalityReport.from_margins(
            '4.12.2', np.concatenate([s.times for s in series]),
            c_star * gamma / 4.0 - np.concatenate([s.G_sq for s in series]), tol, kind='hypothesis',
            description='G^2(t) <= c_star gamma / 4', values={'bound': c_star * gamma / 4.0}),
        '4.26.1': InequalityReport.from_margins(
            '4.26.1', ends, [m[0] for m in margins_26], tol, kind='hypothesis',
            description='int A^2 <= c_star T / 4 on every window', values={'bound': c_star * T / 4.0}),
        '4.26.2': InequalityReport.from_margins(
            '4.26.2', ends, [m[1] for m in margins_26], tol, kind='hypothesis',
            description='int G^2 <= alpha gamma on every window', values={'bound': alpha * gamma}),
        '4.27': InequalityReport.from_margins(
            '4.27', [0.0], [recursion], tol, kind='hypothesis',
            description='alpha exp(c_star T/4) + exp(-c_star T/4) <= 1',
            values={'alpha': alpha, 'product_form_margin': product,
                    'measured_int_A_margins': measured},
            note='product form alpha exp(c_star T/4) exp(-c_star T/4) <= 1 reported in values'),
        '4.19': InequalityReport.from_margins(
            '4.19', [0.0, 0.0, 0.0], [small, gap, budget.gamma_star - gamma], tol, kind='hypothesis',
            description='nu c4 - c5 gamma_star^2/nu^3 >= c_star/2, c_star < nu c4, gamma <= gamma_star',
            values={'gamma_star': budget.gamma_star, 'c_star': c_star}),
    }
    for key, report in reports.items():
        if report.status == 'unmet':
            logger.info(f"Hypothesis {key} is not met (worst margin {report.worst_margin:.3g})")
    return reports


@dataclass
class Envelope:
    window: int
    kind: str
    times: np.ndarray
    values: np.ndarray
    endpoint_bound: float
    exceeded: bool
    exceeded_at: Optional[float] = None


def gronwall_envelope(series, budget, X0_sq=None, kind='linear'):
    """Upper envelope of X^2 on one window, the differential inequality taken as an equation.

    ``kind='linear'`` integrates dW/dt = (A^2 - c_star/2) W + G^2 in closed
    form on the sample grid; ``kind='nonlinear'`` integrates
    dW/dt = -W (nu c4 - c5 W^2 / nu^3) + A^2 W + G^2 with solve_ivp. An
    envelope rising above gamma_star is flagged, since the reduction to the
    linear form no longer applies.
    """
    times = series.times
    X0_sq = float(series.X_sq[0]) if X0_sq is None else float(X0_sq)
    if X0_sq > budget.gamma:
        logger.warning(f"Envelope started above gamma: X0^2={X0_sq:.3g} > {budget.gamma:.3g}")
    if kind == 'linear':
        phase = cumulative_trapezoid(series.A_sq - budget.c_star / 2.0, times, initial=0.0)
        forced = cumulative_trapezoid(np.exp(-phase) * series.G_sq, times, initial=0.0)
        values = np.exp(phase) * (X0_sq + forced)
    elif kind == 'nonlinear':
        nu, c4, c5 = budget.nu, budget.c4, budget.c5

        def rhs(t, w):
            a = np.interp(t, times, series.A_sq)
            g = np.interp(t, times, series.G_sq)
            return -w * (nu * c4 - c5 * w ** 2 / nu ** 3) + a * w + g

        def above(t, w):
            return w[0] - budget.gamma_star
        above.terminal = True
        above.direction = 1

        solution = solve_ivp(rhs, (times[0], times[-1]), [X0_sq], t_eval=times, events=above,
                             rtol=1e-10, atol=1e-14, max_step=float(np.min(np.diff(times))) if times.size > 1 else np.inf)
        values = np.full(times.shape, np.inf)
        values[:solution.y.shape[1]] = solution.y[0]
    else:
        raise ValueError(f"kind must be 'linear' or 'nonlinear', got {kind!r}")
    over = np.nonzero(values > budget.gamma_star)[0]
    exceeded = bool(over.size)
    bound = conditions.endpoint_bound(series.int_A_sq[-1], series.int_G_sq[-1], budget.c_star,
                                      times[-1] - times[0], X0_sq)
    envelope = Envelope(series.window, kind, times, values, bound, exceeded,
                        float(times[over[0]]) if exceeded else None)
    if exceeded:
        logger.warning(f"{kind} envelope on window {series.window} exceeds gamma_star at t={envelope.exceeded_at:.6g}")
    series.envelope = values if kind == 'linear' else series.envelope
    return envelope


def verify_stability_conclusion(series, budget, envelopes, hypotheses=None, tolerance=0.0):
    """Reports on the conclusions of the H^1 bound.

    '4.13': X^2(t) <= gamma at every sample; '4.21': X^2 below the linear
    envelope; '4.18': X^2 below the nonlinear envelope (when supplied);
    '4.25': X^2 at each window end below the endpoint bound. All are vacuous
    when a hypothesis is unmet or an envelope left the admissible range.
    """
    tol = float(tolerance)
    unmet = [key for key, r in (hypotheses or {}).items() if r.status == 'unmet']
    aborted = [e.window for e in envelopes if e.exceeded]
    vacuous = bool(unmet or aborted)
    note = ''
    if unmet:
        note = f"unmet hypotheses: {', '.join(sorted(unmet))}"
    if aborted:
        note = (note + '; ' if note else '') + f"envelope above gamma_star on windows {aborted}"
    times = np.concatenate([s.times for s in series])
    X_sq = np.concatenate([s.X_sq for s in series])
    reports = {
        '4.13': InequalityReport.from_margins(
            '4.13', times, budget.gamma - X_sq, tol, vacuous=vacuous,
            description='||u(t)||_H1^2 <= gamma', values={'gamma': budget.gamma, 'max_X_sq': float(np.max(X_sq))},
            note=note),
    }
    for kind, key in (('linear', '4.21'), ('nonlinear', '4.18')):
        chosen = [(s, e) for s, e in zip(series, [e for e in envelopes if e.kind == kind])]
        if not chosen:
            continue
        margins = np.concatenate([e.values * (1.0 + ENVELOPE_RTOL) - s.X_sq for s, e in chosen])
        stamps = np.concatenate([s.times for s, _ in chosen])
        reports[key] = InequalityReport.from_margins(
            key, stamps, margins, tol, vacuous=vacuous,
            description=f'X^2(t) <= {kind} Gronwall envelope', note=note)
    linear = [e for e in envelopes if e.kind == 'linear']
    if linear:
        ends = [s.t1 for s in series]
        margins = [e.endpoint_bound * (1.0 + ENVELOPE_RTOL) - s.X_sq[-1] for s, e in zip(series, linear)]
        reports['4.25'] = InequalityReport.from_margins(
            '4.25', ends, margins, tol, vacuous=vacuous,
            description='X^2((k+1)T) <= exp(int A^2) int G^2 + exp(-c_star T/2 + int A^2) X^2(kT)',
            values={'bounds': [e.endpoint_bound for e in linear]}, note=note)
    for key, report in reports.items():
        if report.status == 'fail':
            logger.warning(f"Conclusion {key} fails: worst margin {report.worst_margin:.3g} at t={report.worst_time:.6g}")
    return reports
