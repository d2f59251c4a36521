"""Time integration of the full, base and perturbation systems.

All three evolve a mean-free velocity with an integrating-factor Heun
scheme: the viscous term is integrated exactly through exp(-nu |k|^2 dt) and
the Leray-projected nonlinearity and forcing by the explicit trapezoidal
predictor-corrector. The spatial mean is never stepped; it is set at every
step from the exact antiderivative of the mean forcing.
"""
import logging
import math

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from tqdm import tqdm

from ..config import Config
from ..exceptions import BlowUpError, CoverageError, FieldError, ForcingError, GridError, NotApplicableError
from ..models.field import Field, MeanVector
from ..models.norms import TrajectoryNorms
from ..models.trajectory import DIAGNOSTIC_COLUMNS, Trajectory
from ..utils.decorators import timed
from . import spectral
from .forcing import CompiledForcing, Forcing, compile_forcing
from .norms import lp_norm, norm_report

logger = logging.getLogger(__name__)

# Discrete divergence accepted for an initial velocity
DIVERGENCE_TOL = 1e-10


class IntegratingFactorRK2:
    """Heun's method for w' = -nu |k|^2 w + N(w, t) with the linear part integrated exactly."""

    def __init__(self, grid, nu, dt):
        self.grid = grid
        self.nu = nu
        self.dt = dt
        self.factor = np.exp(-nu * grid.k_squared * dt)

    def step(self, w, t, nonlinear):
        dt, E = self.dt, self.factor
        k1 = nonlinear(w, t)
        predictor = E * (w + dt * k1)
        k2 = nonlinear(predictor, t + dt)
        return E * (w + 0.5 * dt * k1) + 0.5 * dt * k2


def _zero_mean(data, grid):
    data[(slice(None),) + (0,) * grid.dim] = 0.0
    return data


def _project(data, grid):
    k = grid.k_vectors
    k2 = np.where(grid.k_squared == 0.0, 1.0, grid.k_squared)
    return data - k * (np.sum(k * data, axis=0) / k2)


def nse_rhs(v, f=None, nu=1.0):
    """P(-v.grad v + f) + nu Lap v for a divergence-free velocity ``v``."""
    v = spectral.to_spectral(v)
    if f is not None:
        f = spectral.to_spectral(f)
        if f.grid != v.grid:
            raise GridError(f"forcing on {f.grid!r} does not match velocity on {v.grid!r}")
    forcing = f.data if f is not None else 0.0
    nonlinear = _project(-spectral.advect(v, v).data + forcing, v.grid)
    data = nonlinear - nu * v.grid.k_squared * v.data
    return Field(v.grid, data, 'spectral', divergence_free=True, time_stamp=v.time_stamp)


class NavierStokesSystem:
    """Mean-free part of the forced Navier-Stokes equations on one grid."""

    kind = 'full'

    def __init__(self, grid, nu, forcing, mean0, t0=0.0):
        self.grid = grid
        self.nu = nu
        self.forcing = forcing
        self.mean0 = np.asarray(mean0, dtype=float)
        self.t0 = t0
        self._a0 = forcing.mean_antiderivative(t0)

    def mean(self, t):
        return self.mean0 + self.forcing.mean_antiderivative(t) - self._a0

    def velocity(self, w, t):
        return spectral.with_mean(Field(self.grid, w, 'spectral', True, t), self.mean(t))

    def nonlinear(self, w, t):
        v = self.velocity(w, t)
        data = -spectral.advect(v, v).data
        if not self.forcing.is_zero:
            data = data + self.forcing.at(t).data
        return _zero_mean(_project(data, self.grid), self.grid)


class BaseFlowInterpolant:
    """Cubic-in-time reconstruction of a stored base trajectory on a target grid."""

    def __init__(self, base, grid):
        snapshots = base.snapshots
        if len(snapshots) < 2:
            raise CoverageError("base trajectory needs at least two snapshots for interpolation")
        coeffs = []
        for snap in snapshots:
            if snap.grid.dim < grid.dim:
                snap = spectral.lift_to_3d(snap)
            if snap.grid != grid:
                raise GridError(f"base trajectory on {snap.grid!r} cannot drive {grid!r}")
            coeffs.append(spectral.to_spectral(snap).data)
        self.grid = grid
        self.times = base.snapshot_times
        stacked = np.ascontiguousarray(np.stack(coeffs))
        self._spline = CubicSpline(self.times, stacked.view(np.float64), axis=0)

    def __call__(self, t):
        if not self.times[0] - 1e-9 <= t <= self.times[-1] + 1e-9:
            raise CoverageError(f"base trajectory covers ({self.times[0]}, {self.times[-1]}), asked for t={t}")
        data = np.ascontiguousarray(self._spline(t)).view(np.complex128)
        return Field(self.grid, data, 'spectral', divergence_free=True, time_stamp=t)


class PerturbationSystem(NavierStokesSystem):
    """u_t + u.grad u - nu Lap u + grad q = -v_s.grad u - u.grad v_s + g, mean-free part."""

    kind = 'perturbation'

    def __init__(self, grid, nu, forcing, mean0, base, t0=0.0):
        super().__init__(grid, nu, forcing, mean0, t0)
        self.base = base

    def nonlinear(self, w, t):
        u = self.velocity(w, t)
        vs = self.base(t)
        u_bar = Field(self.grid, w, 'spectral', True, t)
        data = -(spectral.advect(vs + u, u_bar).data + spectral.advect(u, vs).data)
        if not self.forcing.is_zero:
            data = data + self.forcing.at(t).data
        return _zero_mean(_project(data, self.grid), self.grid)


def mean_ode_integrate(mean_forcing, initial, times):
    """Mean velocity m(t) = m(t0) + int_{t0}^t mean(g) dt' at each of ``times``.

    ``mean_forcing`` is a Forcing (integrated exactly through its
    antiderivative), a ``(sample_times, values)`` pair integrated by the
    trapezoid rule, or None for zero forcing.
    """
    times = np.asarray(times, dtype=float)
    m0 = np.asarray(getattr(initial, 'value', initial), dtype=float)
    if times.size == 0:
        return []
    t0 = times[0]
    if mean_forcing is None:
        increments = np.zeros((times.size, m0.size))
    elif isinstance(mean_forcing, Forcing):
        a0 = mean_forcing.mean_antiderivative(t0)
        increments = np.stack([mean_forcing.mean_antiderivative(t) - a0 for t in times])
    else:
        sample_times, values = mean_forcing
        sample_times = np.asarray(sample_times, dtype=float)
        values = np.asarray(values, dtype=float).reshape(sample_times.size, -1)
        if t0 < sample_times[0] - 1e-12 or times[-1] > sample_times[-1] + 1e-12:
            raise CoverageError(f"mean forcing samples cover ({sample_times[0]}, {sample_times[-1]}),"
                                f" asked for ({t0}, {times[-1]})")
        running = cumulative_trapezoid(values, sample_times, axis=0, initial=0.0)
        at = np.stack([np.interp(times, sample_times, running[:, i]) for i in range(values.shape[1])], axis=1)
        a0 = np.array([np.interp(t0, sample_times, running[:, i]) for i in range(values.shape[1])])
        increments = at - a0
    return [MeanVector(m0 + inc, t) for inc, t in zip(increments, times)]


class _Recorder:
    def __init__(self, system, config, kind):
        self.system = system
        self.grid = system.grid
        self.kind = kind
        self.sigma = config.sigma
        self.stride = config.snapshot_stride
        self.dt = config.dt
        self.rows = []
        self.norms = TrajectoryNorms()
        self.means = []
        self.snapshots = []
        self.scale = None

    def record(self, step, t, w):
        grid = self.grid
        w_field = Field(grid, w, 'spectral', divergence_free=True, time_stamp=t)
        m = self.system.mean(t)
        energy = 0.5 * (spectral.parseval_sum(w_field) + grid.volume * float(np.dot(m, m)))
        if not np.all(np.isfinite(w)):
            energy = math.nan
        self._check(step, t, energy)
        report = norm_report(w_field, self.sigma)
        forcing = self.system.forcing
        if forcing.is_zero:
            f_l2, f_l65 = 0.0, 0.0
        else:
            f = forcing.at(t)
            f_l2 = spectral.parseval_sum(f)
            f_l65 = lp_norm(f, 6.0 / 5.0)
        row = {
            'step': step, 't': t, 'energy': energy,
            'l2_sq': report.l2_sq, 'h1_sq': report.h1_sq, 'h2_sq': report.h2_sq,
            'grad_l2_sq': report.grad_l2_sq, 'grad_l3_sq': report.grad_l3_sq, 'l6_sq': report.l6_sq,
            'w1_sigma': report.w1_sigma, 'forcing_l2_sq': f_l2, 'forcing_l65': f_l65,
            'divergence': spectral.divergence_norm(w_field),
        }
        forcing_mean = forcing.mean_value(t)
        for i in range(grid.dim):
            row[f'mean_{i}'] = m[i]
        for i in range(grid.dim):
            row[f'forcing_mean_{i}'] = forcing_mean[i]
        self.rows.append(row)
        self.norms.append(report)
        self.means.append(MeanVector(m, t))
        if step % self.stride == 0:
            self.snapshots.append(self.system.velocity(w.copy(), t))

    def _check(self, step, t, energy):
        if self.scale is None or step <= 1:
            self.scale = max(self.scale or 0.0, energy, 1.0)
        if not math.isfinite(energy) or energy > Config.BLOWUP_FACTOR * self.scale:
            report = {'kind': self.kind, 'step': step, 't': t, 'energy': energy,
                      'threshold': Config.BLOWUP_FACTOR * self.scale}
            logger.error(f"{self.kind} run blew up at step {step} (t={t:.6g}, energy={energy:.6g})")
            raise BlowUpError(f"{self.kind} run blew up at t={t:.6g}", report=report,
                              trajectory=self.trajectory(status='aborted'))

    def trajectory(self, status='completed', config_hash=''):
        frame = pd.DataFrame(self.rows, columns=_diagnostic_columns(self.grid))
        return Trajectory(kind=self.kind, grid=self.grid, nu=self.system.nu,
                          dt=self.dt, snapshot_stride=self.stride, snapshots=self.snapshots,
                          means=self.means, norms=self.norms, diagnostics=frame,
                          config_hash=config_hash, status=status)


def _diagnostic_columns(grid):
    return DIAGNOSTIC_COLUMNS + [f'mean_{i}' for i in range(grid.dim)] \
        + [f'forcing_mean_{i}' for i in range(grid.dim)]


def _initial_state(config, grid, kind):
    initial = config.initial
    if initial is None:
        return Field.zeros(grid, grid.dim, 'spectral')
    initial = spectral.to_spectral(initial)
    if not np.all(np.isfinite(initial.data)):
        t0 = initial.time_stamp
        logger.error(f"{kind} run refused: initial velocity is not finite")
        aborted = Trajectory(kind=kind, grid=grid, nu=config.nu, dt=config.dt,
                             snapshot_stride=config.snapshot_stride, snapshots=[], means=[],
                             norms=TrajectoryNorms(), diagnostics=pd.DataFrame(columns=_diagnostic_columns(grid)),
                             status='aborted')
        raise BlowUpError(f"{kind} run has a non-finite initial velocity",
                          report={'kind': kind, 'step': 0, 't': t0, 'energy': math.nan,
                                  'threshold': math.nan},
                          trajectory=aborted)
    if initial.grid.dim == 3 and grid.dim == 2:
        initial = spectral.restrict_to_plane(initial)
    if not initial.is_vector:
        raise FieldError(f"initial velocity needs {grid.dim} components, got {initial.ncomp}")
    div = spectral.divergence_norm(initial)
    if div > DIVERGENCE_TOL:
        raise FieldError(f"initial velocity is not divergence-free (relative divergence {div:.3g})")
    return initial


def _integrate(system, config, w0, config_hash=''):
    stepper = IntegratingFactorRK2(system.grid, system.nu, config.dt)
    recorder = _Recorder(system, config, system.kind)
    w = _zero_mean(w0.copy(), system.grid)
    n_steps = config.n_steps
    if abs(n_steps * config.dt - config.t_end) > 1e-9 * max(1.0, config.t_end):
        logger.warning(f"t_end={config.t_end} is not a multiple of dt={config.dt}; "
                       f"stopping at t={n_steps * config.dt}")
    t = system.t0
    recorder.record(0, t, w)
    for step in tqdm(range(1, n_steps + 1), desc=system.kind, disable=not Config.SHOW_PROGRESS):
        w = _zero_mean(stepper.step(w, t, system.nonlinear), system.grid)
        t = system.t0 + step * config.dt
        recorder.record(step, t, w)
    return recorder.trajectory(config_hash=config_hash)


def advance(state, forcing, nu, dt):
    """One integrating-factor Heun step of the full equations for ``state`` at ``state.time_stamp``."""
    state = spectral.to_spectral(state)
    grid = state.grid
    forcing = compile_forcing(forcing, grid)
    t = state.time_stamp
    system = NavierStokesSystem(grid, nu, forcing, spectral.mean(state).value, t0=t)
    stepper = IntegratingFactorRK2(grid, nu, dt)
    w = _zero_mean(state.data.copy(), grid)
    w = _zero_mean(stepper.step(w, t, system.nonlinear), grid)
    if not np.all(np.isfinite(w)):
        raise BlowUpError(f"non-finite state after one step from t={t}", report={'t': t, 'dt': dt})
    return system.velocity(w, t + dt)


def _base_forcing(spec, grid):
    """Base flow forcing on the plane ``grid``; a compiled 3D forcing must be of two-dimensional form."""
    if isinstance(spec, CompiledForcing) and spec.grid.dim == 3:
        spec.validate_2d()
        spec = spec.spec
    forcing = compile_forcing(spec, grid)
    if forcing.grid != grid:
        raise ForcingError(f"base flow forcing lives on {forcing.grid!r}, not {grid!r}")
    return forcing


@timed
def run_2d_base(config, config_hash=''):
    """Evolve the two-dimensional base flow; 3D configs must carry x3-invariant data."""
    grid = config.grid.plane() if config.grid.dim == 3 else config.grid
    try:
        initial = _initial_state(config, grid, 'base')
    except NotApplicableError as e:
        raise FieldError(f"base flow initial data is not two-dimensional: {e}") from e
    forcing = _base_forcing(config.forcing, grid)
    system = NavierStokesSystem(grid, config.nu, forcing, spectral.mean(initial).value)
    system.kind = 'base'
    logger.info(f"Starting base run on {grid!r}: nu={config.nu}, dt={config.dt}, t_end={config.t_end}")
    return _integrate(system, config, initial.data, config_hash)


@timed
def run_perturbation(config, base, config_hash=''):
    """Evolve the perturbation of a stored base trajectory on a 3D grid."""
    grid = config.grid
    if grid.dim != 3:
        raise GridError(f"perturbation runs need a 3D grid, got {grid!r}")
    base.require_span(0.0, config.n_steps * config.dt)
    interpolant = BaseFlowInterpolant(base, grid)
    initial = _initial_state(config, grid, 'perturbation')
    forcing = compile_forcing(config.forcing, grid)
    system = PerturbationSystem(grid, config.nu, forcing, spectral.mean(initial).value, interpolant)
    logger.info(f"Starting perturbation run on {grid!r} against base {base!r}")
    return _integrate(system, config, initial.data, config_hash)


@timed
def run_full_3d(config, config_hash=''):
    grid = config.grid
    if grid.dim != 3:
        raise GridError(f"full runs need a 3D grid, got {grid!r}")
    initial = _initial_state(config, grid, 'full')
    forcing = compile_forcing(config.forcing, grid)
    system = NavierStokesSystem(grid, config.nu, forcing, spectral.mean(initial).value)
    logger.info(f"Starting full 3D run on {grid!r}")
    return _integrate(system, config, initial.data, config_hash)


def recover_pressure(v, f=None, nu=None):
    """Mean-free pressure solving -Lap p = div(v.grad v - f) mode by mode.

    ``nu`` does not enter (the viscous term is divergence-free) and is accepted
    for symmetry with ``nse_rhs``.
    """
    v = spectral.to_spectral(v)
    grid = v.grid
    source = spectral.advect(v, v).data
    if f is not None:
        f = spectral.to_spectral(f)
        if f.grid != grid:
            raise GridError(f"forcing on {f.grid!r} does not match velocity on {grid!r}")
        source = source - f.data
    k2 = np.where(grid.k_squared == 0.0, 1.0, grid.k_squared)
    p_hat = 1j * np.sum(grid.k_vectors * source, axis=0) / k2
    p_hat[(0,) * grid.dim] = 0.0
    return Field(grid, p_hat[np.newaxis], 'spectral', time_stamp=v.time_stamp)


def taylor_green_exact(grid, nu, t, amplitude=1.0):
    """(sin x1 cos x2, -cos x1 sin x2, 0) exp(-2 nu t) on the 2*pi box."""
    if abs(grid.L - 2.0 * math.pi) > 1e-12 * 2.0 * math.pi:
        raise GridError(f"the Taylor-Green solution is defined on L=2*pi, got L={grid.L}")
    decay = amplitude * math.exp(-2.0 * nu * t)

    def velocity(*x):
        u1 = decay * np.sin(x[0]) * np.cos(x[1])
        u2 = -decay * np.cos(x[0]) * np.sin(x[1])
        return (u1, u2) if grid.dim == 2 else (u1, u2, np.zeros_like(u1))

    field = Field.from_function(grid, velocity, time_stamp=t, divergence_free=True)
    return spectral.to_spectral(field)


def energy_identity_residual(trajectory, nu=None):
    """Per-step relative residual of d/dt ||v||^2 + 2 nu ||grad v||^2 = 0 (unforced runs).

    The time derivative is a forward difference and the dissipation is
    averaged over the step (trapezoid).
    """
    nu = trajectory.nu if nu is None else nu
    frame = trajectory.diagnostics
    forcing_cols = ['forcing_l2_sq'] + [c for c in frame.columns if c.startswith('forcing_mean_')]
    if np.any(frame[forcing_cols].to_numpy() != 0.0):
        raise NotApplicableError("the energy identity without forcing needs an unforced run")
    t = trajectory.times
    l2 = 2.0 * trajectory.series('energy')
    grad = trajectory.series('grad_l2_sq')
    dissipation = nu * (grad[1:] + grad[:-1])
    residual = np.diff(l2) / np.diff(t) + dissipation
    scale = np.maximum(np.abs(dissipation), np.finfo(float).tiny)
    return np.abs(residual) / scale


def convergence_order(errors, dts):
    """Observed orders log(e_i / e_{i+1}) / log(dt_i / dt_{i+1}) between consecutive runs."""
    errors = np.asarray(errors, dtype=float)
    dts = np.asarray(dts, dtype=float)
    if errors.size != dts.size or errors.size < 2:
        raise ValueError("need matching error and dt sequences of length >= 2")
    return np.log(errors[:-1] / errors[1:]) / np.log(dts[:-1] / dts[1:])


def l2_distance(a, b):
    return lp_norm(spectral.to_spectral(a) - spectral.to_spectral(b), 2.0)


def max_pointwise_error(a, b):
    return float(np.max(np.abs(spectral.to_physical(a).data - spectral.to_physical(b).data)))
