"""Tests for the L2 and H^1 stability checks and the Gronwall envelopes."""
import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import cumulative_trapezoid

from nsverify.core import conditions, spectral, stability
from nsverify.core.calibration import CalibratedConstants, derived_c4
from nsverify.core.estimates import compute_A_constants
from nsverify.core.solver import run_2d_base, run_perturbation
from nsverify.exceptions import BudgetError, CoverageError
from nsverify.models.budget import StabilityBudget
from nsverify.models.report import StabilitySeries
from nsverify.models.trajectory import SolverConfig

from .conftest import TWO_PI

CONSTANTS = CalibratedConstants(c1=0.5, c3=0.05, c4=derived_c4(1.0), c5=TWO_PI, c_I=0.5, kappa=1.0,
                                ensemble_size=100, seed=0)


@pytest.fixture
def budget():
    return stability.default_budget(0.1, 1.0, CONSTANTS)


@pytest.fixture(scope='module')
def quiescent_runs():
    """A zero base flow and a small random perturbation of it over two windows."""
    plane = spectral.make_grid(TWO_PI, 8, 2)
    box = plane.lifted()
    base = run_2d_base(SolverConfig(grid=plane, nu=0.1, dt=0.01, t_end=2.0, T=1.0, snapshot_stride=10))
    initial = spectral.random_divfree_field(box, seed=5, h1_norm=1e-3)
    pert = run_perturbation(SolverConfig(grid=box, nu=0.1, dt=0.01, t_end=2.0, T=1.0, initial=initial,
                                         snapshot_stride=50), base)
    return base, pert


def _series(times, X_sq, A_sq, G_sq, window=0):
    times = np.asarray(times, dtype=float)
    X_sq, A_sq, G_sq = (np.full(times.shape, v, dtype=float) for v in (X_sq, A_sq, G_sq))
    return StabilitySeries(window=window, times=times, X_sq=X_sq, Y_sq=X_sq.copy(), Z_sq=X_sq.copy(),
                           G_sq=G_sq, A_sq=A_sq, int_A_sq=cumulative_trapezoid(A_sq, times, initial=0.0),
                           int_G_sq=cumulative_trapezoid(G_sq, times, initial=0.0))


class TestBudget:
    """Default smallness parameters and their validation."""

    def test_defaults(self, budget):
        c4 = 2.0 / 3.0
        assert budget.c_star == pytest.approx(0.1 * c4 / 2.0)
        expected_star = math.sqrt((0.1 * c4 - budget.c_star / 2.0) * 1e-3 / TWO_PI)
        assert budget.gamma_star == pytest.approx(expected_star, rel=1e-12)
        assert budget.gamma == pytest.approx(0.5 * expected_star)
        assert abs(budget.gamma_star_margin) < 1e-15
        assert len(budget.notes) == 4

    def test_overrides_kept(self):
        b = stability.default_budget(0.1, 1.0, CONSTANTS, gamma=1e-4, alpha=0.01)
        assert b.gamma == 1e-4
        assert b.alpha == 0.01

    def test_gamma_above_gamma_star_refused(self, budget):
        with pytest.raises(BudgetError, match='gamma'):
            stability.default_budget(0.1, 1.0, CONSTANTS, gamma=2.0 * budget.gamma_star)

    def test_c_star_at_nu_c4_refused(self):
        with pytest.raises(BudgetError):
            StabilityBudget(nu=0.1, T=1.0, gamma=1e-6, gamma_star=1e-6, c_star=0.1, alpha=0.01,
                            c1=0.5, c3=0.05, c4=2.0 / 3.0, c5=TWO_PI)


class TestLifting:
    """Base-grid norms rescaled to the perturbation box."""

    def test_factors(self, quiescent_runs):
        base, _ = quiescent_runs
        assert stability.lift_factor(base, 3) == pytest.approx(TWO_PI)
        assert stability.lift_factor(base, 3, p=3.0) == pytest.approx(TWO_PI ** (2.0 / 3.0))
        assert stability.lift_factor(base, 2) == 1.0

    def test_lifted_parseval_matches_factor(self, plane16):
        field = spectral.random_divfree_field(plane16, seed=3)
        lifted = spectral.lift_to_3d(field)
        ratio = spectral.parseval_sum(lifted) / spectral.parseval_sum(field)
        assert ratio == pytest.approx(plane16.L, rel=1e-12)

    def test_lifted_budget(self, forced_base_run):
        budget2d = compute_A_constants(forced_base_run, 1.0)
        lifted = stability.lifted_budget(budget2d, 3.0)
        assert lifted.A3_sq == pytest.approx(3.0 * budget2d.A3_sq)
        assert lifted.window_forcing[0] == pytest.approx(3.0 * budget2d.window_forcing[0])
        assert stability.lifted_budget(budget2d, 1.0) is budget2d


class TestL2Stability:
    """Window constants B1..B4 and the L2 bound."""

    def test_quiescent_base(self, quiescent_runs):
        base, pert = quiescent_runs
        budget2d = compute_A_constants(base, 1.0)
        l2_budget, reports = stability.compute_B_constants(pert, budget2d, 0.5, 0.05, 1.0, 1e-12,
                                                           lift=stability.lift_factor(base, 3))
        assert l2_budget.B1_sq == 0.0
        assert l2_budget.B3_sq == pytest.approx(pert.series('l2_sq')[0])
        assert l2_budget.hypotheses_hold
        assert reports['4.1.hyp'].status == 'pass'
        assert reports['4.1.hyp'].worst_margin == pytest.approx(0.1 * 0.5 * 1.0 / 2.0)
        checks = stability.verify_l2_stability(pert, l2_budget, 1.0, 1e-12)
        assert checks['4.1.1'].status == 'pass'
        assert checks['4.1.2'].status == 'pass'

    def test_failed_assumption_makes_bound_vacuous(self, quiescent_runs, forced_base_run):
        _, pert = quiescent_runs
        budget2d = compute_A_constants(forced_base_run, 1.0)
        l2_budget, reports = stability.compute_B_constants(pert, budget2d, 0.5, 0.05, 1.0, 1e-12, lift=TWO_PI)
        assert reports['4.1.hyp'].status == 'unmet'
        assert not l2_budget.hypotheses_hold
        checks = stability.verify_l2_stability(pert, l2_budget, 1.0, 1e-12)
        assert {r.status for r in checks.values()} == {'vacuous'}


class TestSeries:
    """Quantities on one window of the perturbation run."""

    def test_quiescent_base_gives_zero_coefficients(self, quiescent_runs, budget):
        base, pert = quiescent_runs
        s = stability.stability_series(pert, base, budget, 1)
        assert s.t0 == pytest.approx(1.0)
        assert s.t1 == pytest.approx(2.0)
        npt.assert_array_equal(s.A_sq, 0.0)
        npt.assert_array_equal(s.G_sq, 0.0)
        npt.assert_allclose(s.Z_sq, s.X_sq)
        assert np.all(s.X_sq <= s.Y_sq)

    def test_window_past_run(self, quiescent_runs, budget):
        base, pert = quiescent_runs
        with pytest.raises(CoverageError):
            stability.stability_series(pert, base, budget, 2)

    def test_X_above_Y_rejected(self):
        with pytest.raises(ValueError, match='X\\^2'):
            StabilitySeries(0, np.array([0.0, 1.0]), np.array([2.0, 2.0]), np.array([1.0, 1.0]),
                            np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2))


class TestEnvelope:
    """Gronwall envelopes in closed form."""

    def test_reduced_case_bounds_measured_decay(self, quiescent_runs, budget):
        base, pert = quiescent_runs
        for k in range(2):
            s = stability.stability_series(pert, base, budget, k)
            envelope = stability.gronwall_envelope(s, budget)
            expected = s.X_sq[0] * np.exp(-budget.c_star * (s.times - s.t0) / 2.0)
            npt.assert_allclose(envelope.values, expected, rtol=1e-12)
            assert np.all(s.X_sq <= envelope.values * (1.0 + 1e-3))
            assert not envelope.exceeded
            assert s.envelope is envelope.values

    def test_constant_forcing_closed_form(self, budget):
        times = np.linspace(0.0, 1.0, 20001)
        g = 1e-5
        s = _series(times, 1e-4, 0.0, g)
        envelope = stability.gronwall_envelope(s, budget)
        rate = budget.c_star / 2.0
        expected = 1e-4 * np.exp(-rate * times) + g * (1.0 - np.exp(-rate * times)) / rate
        npt.assert_allclose(envelope.values, expected, rtol=1e-8)

    def test_endpoint_bound(self, budget):
        times = np.linspace(0.0, 1.0, 101)
        s = _series(times, 1e-4, 2e-3, 3e-6)
        envelope = stability.gronwall_envelope(s, budget)
        expected = conditions.endpoint_bound(s.int_A_sq[-1], s.int_G_sq[-1], budget.c_star, 1.0, 1e-4)
        assert envelope.endpoint_bound == pytest.approx(expected, rel=1e-14)

    def test_nonlinear_below_linear(self, budget):
        times = np.linspace(0.0, 1.0, 201)
        s = _series(times, 0.5 * budget.gamma, 0.0, 0.0)
        linear = stability.gronwall_envelope(s, budget, kind='linear')
        nonlinear = stability.gronwall_envelope(s, budget, kind='nonlinear')
        assert not nonlinear.exceeded
        assert np.all(nonlinear.values <= linear.values * (1.0 + 1e-9))

    def test_growth_past_gamma_star_is_flagged(self, budget):
        times = np.linspace(0.0, 1.0, 201)
        s = _series(times, 0.5 * budget.gamma, 0.0, 10.0 * budget.gamma_star)
        for kind in ('linear', 'nonlinear'):
            envelope = stability.gronwall_envelope(s, budget, kind=kind)
            assert envelope.exceeded
            assert 0.0 < envelope.exceeded_at < 1.0

    def test_unknown_kind(self, budget):
        s = _series(np.linspace(0.0, 1.0, 11), 1e-6, 0.0, 0.0)
        with pytest.raises(ValueError, match='kind'):
            stability.gronwall_envelope(s, budget, kind='quadratic')


class TestHypothesesAndConclusions:
    """Statuses of premises and conclusions of the H^1 bound."""

    def test_quiescent_run_passes(self, quiescent_runs, budget):
        base, pert = quiescent_runs
        series = [stability.stability_series(pert, base, budget, k) for k in range(2)]
        hypotheses = stability.check_stability_hypotheses(series, budget, 1e-12)
        assert set(hypotheses) == {'4.12.1', '4.12.2', '4.26.1', '4.26.2', '4.27', '4.19'}
        assert {r.status for r in hypotheses.values()} == {'pass'}
        assert hypotheses['4.27'].values['product_form_margin'] == pytest.approx(1.0 - budget.alpha)
        envelopes = [stability.gronwall_envelope(s, budget, kind=kind)
                     for kind in ('linear', 'nonlinear') for s in series]
        conclusions = stability.verify_stability_conclusion(series, budget, envelopes, hypotheses, 1e-12)
        assert set(conclusions) == {'4.13', '4.21', '4.18', '4.25'}
        assert {r.status for r in conclusions.values()} == {'pass'}

    def test_unmet_hypothesis_makes_conclusions_vacuous(self, quiescent_runs, budget):
        base, pert = quiescent_runs
        tight = stability.default_budget(0.1, 1.0, CONSTANTS, gamma=1e-9)
        series = [stability.stability_series(pert, base, tight, k) for k in range(2)]
        hypotheses = stability.check_stability_hypotheses(series, tight, 1e-12)
        assert hypotheses['4.12.1'].status == 'unmet'
        envelopes = [stability.gronwall_envelope(s, tight) for s in series]
        conclusions = stability.verify_stability_conclusion(series, tight, envelopes, hypotheses, 1e-12)
        assert {r.status for r in conclusions.values()} == {'vacuous'}
        assert '4.12.1' in conclusions['4.13'].note

    def test_large_forcing_leaves_G_hypothesis_unmet(self, budget):
        times = np.linspace(0.0, 1.0, 101)
        s = _series(times, 0.1 * budget.gamma, 0.0, budget.c_star * budget.gamma)
        hypotheses = stability.check_stability_hypotheses([s], budget, 1e-12)
        assert hypotheses['4.12.2'].status == 'unmet'
        assert hypotheses['4.12.1'].status == 'pass'

    def test_exceeded_envelope_makes_conclusions_vacuous(self, budget):
        times = np.linspace(0.0, 1.0, 101)
        s = _series(times, 0.5 * budget.gamma, 0.0, 10.0 * budget.gamma_star)
        envelopes = [stability.gronwall_envelope(s, budget)]
        conclusions = stability.verify_stability_conclusion([s], budget, envelopes, {}, 1e-12)
        assert conclusions['4.13'].status == 'vacuous'
        assert 'gamma_star' in conclusions['4.13'].note
