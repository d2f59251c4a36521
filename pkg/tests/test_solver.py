"""Tests for the integrating-factor solver and its analytic checks."""
import math

import numpy as np
import numpy.testing as npt
import pytest

from nsverify.config import Config
from nsverify.core import spectral
from nsverify.core.forcing import CompiledForcing, SteadyForcing, compile_forcing
from nsverify.core.solver import (IntegratingFactorRK2, advance, convergence_order, energy_identity_residual,
                                  l2_distance, max_pointwise_error, mean_ode_integrate, nse_rhs,
                                  recover_pressure, run_2d_base, run_full_3d, run_perturbation,
                                  taylor_green_exact)
from nsverify.exceptions import (BlowUpError, ConfigError, CoverageError, FieldError, ForcingError, GridError,
                                 NotApplicableError)
from nsverify.models.field import Field, MeanVector
from nsverify.models.trajectory import ForcingSpec, SolverConfig

from .conftest import sine_field


def _base_config(grid, initial, dt, t_end, **kwargs):
    kwargs.setdefault('T', min(1.0, t_end))
    return SolverConfig(grid=grid, nu=kwargs.pop('nu', 0.1), dt=dt, t_end=t_end, initial=initial, **kwargs)


class TestSolverConfig:
    """Validation of run parameters."""

    def test_nonpositive_viscosity(self, plane16):
        with pytest.raises(ConfigError, match='viscosity'):
            SolverConfig(grid=plane16, nu=0.0, dt=0.01, t_end=1.0, T=1.0)

    def test_window_longer_than_run(self, plane16):
        with pytest.raises(ConfigError, match='t_end >= T'):
            SolverConfig(grid=plane16, nu=0.1, dt=0.01, t_end=0.5, T=1.0)

    def test_unresolved_viscous_scale(self, plane16):
        with pytest.raises(ConfigError, match='viscous'):
            SolverConfig(grid=plane16, nu=10.0, dt=1.0, t_end=1.0, T=1.0)

    def test_initial_on_wrong_grid(self, plane16, plane32):
        with pytest.raises(ConfigError, match='initial'):
            SolverConfig(grid=plane16, nu=0.1, dt=0.01, t_end=1.0, T=1.0, initial=Field.zeros(plane32))


class TestStepper:
    """Single steps of the integrating-factor scheme."""

    def test_linear_part_is_exact(self, plane16):
        field = sine_field(plane16, component=0, along=1)
        stepper = IntegratingFactorRK2(plane16, nu=0.3, dt=0.5)
        out = stepper.step(field.data, 0.0, lambda w, t: np.zeros_like(w))
        npt.assert_allclose(out, field.data * math.exp(-0.3 * 0.5), atol=1e-15)

    def test_nse_rhs_of_taylor_green(self, plane16):
        v = taylor_green_exact(plane16, 0.1, 0.0)
        rhs = nse_rhs(v, nu=0.1)
        # the nonlinearity is a pure gradient, so only viscous decay is left
        npt.assert_allclose(rhs.data, -0.2 * v.data, atol=1e-13)

    def test_advance_matches_exact_decay(self, plane16):
        v = taylor_green_exact(plane16, 0.1, 0.0)
        stepped = advance(v, None, 0.1, 0.01)
        assert stepped.time_stamp == pytest.approx(0.01)
        assert max_pointwise_error(stepped, taylor_green_exact(plane16, 0.1, 0.01)) < 1e-13


class TestTaylorGreen:
    """Decay of the Taylor-Green vortex against its closed form."""

    def test_pointwise_error(self, plane32):
        config = _base_config(plane32, taylor_green_exact(plane32, 0.1, 0.0), dt=1e-3, t_end=1.0,
                              snapshot_stride=1000)
        run = run_2d_base(config)
        exact = taylor_green_exact(plane32, 0.1, 1.0)
        assert run.snapshots[-1].time_stamp == pytest.approx(1.0)
        assert max_pointwise_error(run.snapshots[-1], exact) <= 1e-6
        npt.assert_allclose(run.series('divergence'), 0.0, atol=1e-12)

    def test_energy_follows_exponential(self, plane16):
        config = _base_config(plane16, taylor_green_exact(plane16, 0.1, 0.0), dt=1e-2, t_end=1.0)
        run = run_2d_base(config)
        expected = 0.5 * (2.0 * math.pi) ** 2 * 0.5 * np.exp(-0.4 * run.times)
        npt.assert_allclose(run.series('energy'), expected, rtol=1e-10)

    def test_requires_2pi_box(self):
        grid = spectral.make_grid(1.0, 16, 2)
        with pytest.raises(GridError, match='2\\*pi'):
            taylor_green_exact(grid, 0.1, 0.0)

    def test_pressure_sign(self, plane16):
        # p = (cos 2x1 + cos 2x2) / 4 for the unit-amplitude vortex
        p = spectral.to_physical(recover_pressure(taylor_green_exact(plane16, 0.1, 0.0)))
        x1, x2 = plane16.coordinates()
        npt.assert_allclose(p.data[0], 0.25 * (np.cos(2 * x1) + np.cos(2 * x2)), atol=1e-13)


class TestConvergence:
    """Second-order accuracy on a genuinely nonlinear flow."""

    def test_observed_order(self, plane16):
        initial = spectral.random_divfree_field(plane16, seed=7, h1_norm=2.0)
        t_end = 0.4
        reference = run_2d_base(_base_config(plane16, initial, dt=t_end / 320, t_end=t_end, nu=0.05,
                                             snapshot_stride=320)).snapshots[-1]
        dts = [t_end / 20, t_end / 40, t_end / 80]
        errors = []
        for dt in dts:
            steps = int(round(t_end / dt))
            run = run_2d_base(_base_config(plane16, initial, dt=dt, t_end=t_end, nu=0.05, snapshot_stride=steps))
            errors.append(l2_distance(run.snapshots[-1], reference))
        assert np.all(convergence_order(errors, dts) > 1.8)

    def test_order_needs_two_runs(self):
        with pytest.raises(ValueError):
            convergence_order([1e-3], [0.1])

    def test_order_of_exact_powers(self):
        npt.assert_allclose(convergence_order([4e-4, 1e-4, 2.5e-5], [0.2, 0.1, 0.05]), [2.0, 2.0])


@pytest.mark.slow
class TestEnergyIdentity:
    """d/dt ||v||^2 + 2 nu ||grad v||^2 = 0 for unforced runs."""

    def test_residual_per_step(self, box16):
        initial = spectral.random_divfree_field(box16, seed=3, spectrum_decay=3.0, h1_norm=1e-2)
        config = SolverConfig(grid=box16, nu=0.01, dt=1e-3, t_end=1.0, T=1.0, initial=initial,
                              snapshot_stride=1000)
        run = run_full_3d(config)
        residual = energy_identity_residual(run)
        assert residual.size == 1000
        assert np.max(residual) <= 1e-6


class TestEnergyIdentityGuards:
    """Inputs the energy identity does not apply to."""

    def test_forced_run_rejected(self, forced_base_run):
        with pytest.raises(NotApplicableError):
            energy_identity_residual(forced_base_run)


class TestMeanEvolution:
    """The k=0 mode follows the integrated mean forcing."""

    def test_constant_and_sinusoidal_mean(self, plane16):
        spec = ForcingSpec(mean_constant=[0.3, 0.0], mean_amplitude=[0.0, 0.5], mean_frequency=2.0)
        initial = spectral.with_mean(spectral.random_divfree_field(plane16, seed=1, h1_norm=0.2), [0.1, -0.2])
        run = run_2d_base(_base_config(plane16, initial, dt=1e-2, t_end=1.0, forcing=spec))
        t = run.times
        expected = np.stack([0.1 + 0.3 * t, -0.2 + 0.5 * (1.0 - np.cos(2.0 * t)) / 2.0], axis=1)
        npt.assert_allclose(run.mean_values(), expected, atol=1e-8)
        integrated = mean_ode_integrate(compile_forcing(spec, plane16), MeanVector([0.1, -0.2]), t)
        npt.assert_allclose(np.stack([m.value for m in integrated]), run.mean_values(), atol=1e-8)

    def test_sampled_forcing_by_trapezoid(self):
        samples = np.linspace(0.0, 1.0, 10001)
        values = np.stack([np.full_like(samples, 0.3), 0.5 * np.sin(2.0 * samples)], axis=1)
        times = np.linspace(0.0, 1.0, 11)
        out = mean_ode_integrate((samples, values), MeanVector([0.0, 1.0]), times)
        expected = np.stack([0.3 * times, 1.0 + 0.25 * (1.0 - np.cos(2.0 * times))], axis=1)
        npt.assert_allclose(np.stack([m.value for m in out]), expected, atol=1e-8)

    def test_samples_must_cover(self):
        samples = np.linspace(0.0, 0.5, 11)
        with pytest.raises(CoverageError):
            mean_ode_integrate((samples, np.zeros(11)), MeanVector([0.0]), [0.0, 1.0])

    def test_zero_forcing_keeps_mean(self):
        out = mean_ode_integrate(None, MeanVector([2.0, 3.0]), [0.0, 0.5, 1.0])
        assert all(np.array_equal(m.value, [2.0, 3.0]) for m in out)


class TestInitialData:
    """Initial velocities are checked before a run starts."""

    def test_divergent_initial_rejected(self, plane16):
        initial = sine_field(plane16, component=0, along=0)
        with pytest.raises(FieldError, match='divergence-free'):
            run_2d_base(_base_config(plane16, initial, dt=0.01, t_end=1.0))

    def test_base_rejects_3d_data(self, box16):
        initial = sine_field(box16, component=2, along=0)
        with pytest.raises(FieldError, match='two-dimensional'):
            run_2d_base(_base_config(box16, initial, dt=0.01, t_end=1.0))

    def test_x3_invariant_data_accepted(self, plane16):
        planar = taylor_green_exact(plane16, 0.1, 0.0)
        box = plane16.lifted()
        run = run_2d_base(_base_config(box, spectral.lift_to_3d(planar), dt=0.01, t_end=1.0))
        assert run.grid.dim == 2
        assert max_pointwise_error(run.snapshots[-1], taylor_green_exact(plane16, 0.1, 1.0)) < 1e-10

    def test_perturbation_needs_3d(self, forced_base_run, plane16):
        with pytest.raises(GridError, match='3D'):
            run_perturbation(_base_config(plane16, None, dt=0.01, t_end=1.0), forced_base_run)

    def test_perturbation_needs_coverage(self, forced_base_run, box16):
        with pytest.raises(CoverageError):
            run_perturbation(_base_config(box16, None, dt=0.01, t_end=3.0), forced_base_run)


class TestPerturbation:
    """The perturbation run against a stored base flow."""

    def test_zero_perturbation_stays_zero(self, forced_base_run, box16):
        run = run_perturbation(_base_config(box16, None, dt=0.01, t_end=1.0), forced_base_run)
        npt.assert_array_equal(run.series('l2_sq'), 0.0)

    def test_x3_invariant_perturbation_stays_invariant(self, forced_base_run, plane16):
        box = plane16.lifted()
        initial = spectral.lift_to_3d(spectral.random_divfree_field(plane16, seed=4, h1_norm=0.1))
        run = run_perturbation(_base_config(box, initial, dt=0.01, t_end=1.0, snapshot_stride=50),
                               forced_base_run)
        assert all(spectral.is_x3_invariant(s, tol=1e-10) for s in run.snapshots)


@pytest.mark.slow
class TestSplitConsistency:
    """Base plus perturbation reproduces the direct run of the full equations."""

    @staticmethod
    def _distance(plane, dt, stride):
        box = plane.lifted()
        base0 = spectral.random_divfree_field(plane, seed=21, h1_norm=1.0)
        pert0 = spectral.random_divfree_field(box, seed=22, h1_norm=0.1)
        forcing = ForcingSpec(kind='expression', components=['0.1*sin(x2)', '0'])
        base = run_2d_base(SolverConfig(grid=plane, nu=0.1, dt=dt, t_end=1.0, T=1.0, forcing=forcing,
                                        initial=base0, snapshot_stride=stride))
        steps = int(round(1.0 / dt))
        pert = run_perturbation(SolverConfig(grid=box, nu=0.1, dt=dt, t_end=1.0, T=1.0, initial=pert0,
                                             snapshot_stride=steps), base)
        full_forcing = ForcingSpec(kind='expression', components=['0.1*sin(x2)', '0', '0'])
        full = run_full_3d(SolverConfig(grid=box, nu=0.1, dt=dt, t_end=1.0, T=1.0, forcing=full_forcing,
                                        initial=spectral.lift_to_3d(base0) + pert0, snapshot_stride=steps))
        split = spectral.lift_to_3d(base.snapshots[-1]) + pert.snapshots[-1]
        return l2_distance(full.snapshots[-1], split)

    def test_direct_matches_split(self, plane16):
        coarse = self._distance(plane16, 2e-3, 1)
        fine = self._distance(plane16, 1e-3, 2)
        assert fine <= 1e-5
        assert coarse / fine >= 3.5


class TestBlowUp:
    """Runaway runs abort with the partial trajectory."""

    def test_runaway_energy(self, plane16, monkeypatch):
        monkeypatch.setattr(Config, 'BLOWUP_FACTOR', 10.0)
        forcing = ForcingSpec(kind='expression', components=['1e3*sin(x2)', '0'])
        config = _base_config(plane16, None, dt=1e-3, t_end=1.0, forcing=forcing)
        with pytest.raises(BlowUpError) as info:
            run_2d_base(config)
        error = info.value
        assert error.report['kind'] == 'base'
        assert error.report['energy'] > error.report['threshold']
        assert error.trajectory.status == 'aborted'
        assert 0 < len(error.trajectory.diagnostics) < config.n_steps + 1

    def test_non_finite_initial_velocity(self, plane16):
        initial = Field(plane16, np.full((2, 16, 16), np.nan), 'physical')
        with pytest.raises(BlowUpError) as info:
            run_2d_base(_base_config(plane16, initial, dt=1e-2, t_end=1.0))
        error = info.value
        assert error.report['step'] == 0
        assert error.trajectory.status == 'aborted'
        assert error.trajectory.kind == 'base'
        assert len(error.trajectory.diagnostics) == 0

    def test_non_finite_forcing(self, plane16):
        forcing = ForcingSpec(kind='expression', components=['0', 'sqrt(sin(x1))'])
        with pytest.raises(BlowUpError) as info:
            run_2d_base(_base_config(plane16, None, dt=1e-2, t_end=1.0, forcing=forcing))
        error = info.value
        assert error.report['step'] == 1
        assert math.isnan(error.report['energy'])
        assert error.trajectory.status == 'aborted'
        assert len(error.trajectory.diagnostics) == 1


class TestBaseForcing:
    """Forcing handed to the base run must be of two-dimensional form."""

    def test_x3_dependent_forcing_rejected(self, box16):
        forcing = CompiledForcing(ForcingSpec(kind='expression', components=['sin(x3)', '0', '0']), box16)
        with pytest.raises(ForcingError, match='two-dimensional form'):
            run_2d_base(_base_config(box16, None, dt=1e-2, t_end=1.0, forcing=forcing))

    def test_third_mean_component_rejected(self, box16):
        forcing = CompiledForcing(ForcingSpec(mean_constant=[0.0, 0.0, 0.1]), box16)
        with pytest.raises(ForcingError, match='third component'):
            run_2d_base(_base_config(box16, None, dt=1e-2, t_end=1.0, forcing=forcing))

    def test_planar_3d_forcing_drives_the_plane(self, box16):
        spec = ForcingSpec(kind='expression', components=['0.2*sin(2*x2)', '0', '0'], mean_constant=[0.1, 0.0, 0.0])
        run = run_2d_base(_base_config(box16, None, dt=1e-2, t_end=1.0, forcing=CompiledForcing(spec, box16)))
        reference = run_2d_base(_base_config(box16.plane(), None, dt=1e-2, t_end=1.0, forcing=spec))
        assert run.grid.dim == 2
        npt.assert_allclose(run.mean_values()[:, 0], 0.1 * run.times, atol=1e-12)
        npt.assert_allclose(run.series('l2_sq'), reference.series('l2_sq'), rtol=1e-12)

    def test_forcing_on_another_grid_rejected(self, box16):
        forcing = SteadyForcing(sine_field(box16, component=0, along=1))
        with pytest.raises(ForcingError, match='lives on'):
            run_2d_base(_base_config(box16, None, dt=1e-2, t_end=1.0, forcing=forcing))
