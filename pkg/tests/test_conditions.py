"""Scalar smallness conditions checked against formulas written out by hand."""
import math

import numpy as np
import pytest

from nsverify.core import conditions


def _tuples(count=50, seed=2024):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield {
            'nu': rng.uniform(0.01, 2.0),
            'T': rng.uniform(0.1, 5.0),
            'c_s1': rng.uniform(0.1, 1.0),
            'c1': rng.uniform(0.1, 1.0),
            'c3': rng.uniform(0.01, 1.0),
            'c4': rng.uniform(0.1, 1.0),
            'c5': rng.uniform(1.0, 100.0),
            'A3_sq': rng.uniform(0.0, 10.0),
            'F': rng.uniform(0.0, 5.0),
            'G0': rng.uniform(0.0, 5.0),
            'gamma_star': rng.uniform(1e-4, 1e-1),
            'c_star': rng.uniform(1e-3, 1.0),
            'alpha': rng.uniform(0.0, 0.5),
            'gamma': rng.uniform(1e-4, 1e-1),
            'int_A': rng.uniform(0.0, 1.0),
            'int_G': rng.uniform(0.0, 1.0),
            'X0': rng.uniform(0.0, 1.0),
        }


PARAMETERS = list(_tuples())


def _close(a, b):
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


class TestConditionArithmetic:
    """Every evaluator against an independent transcription."""

    @pytest.mark.parametrize('p', PARAMETERS)
    def test_l2_assumption(self, p):
        expected = p['nu'] * p['c1'] * p['T'] / 2 - 4 * p['c3'] * p['A3_sq'] / (p['nu'] * p['c1'])
        _close(conditions.l2_assumption_margin(p['nu'], p['T'], p['c1'], p['c3'], p['A3_sq']), expected)

    @pytest.mark.parametrize('p', PARAMETERS)
    def test_explicit_l2_condition(self, p):
        nu, T, cs = p['nu'], p['T'], p['c_s1']
        e = math.exp(-nu * cs * T)
        lhs = (2 - e) * p['F'] / (cs * nu * (1 - e)) + p['G0']
        expected = nu * nu * p['c1'] * p['c1'] * T / (8 * p['c3']) - lhs
        got = conditions.explicit_l2_condition_margin(nu, T, cs, p['c1'], p['c3'], p['F'], p['G0'])
        _close(got, expected)

    @pytest.mark.parametrize('p', PARAMETERS)
    def test_smallness(self, p):
        nu = p['nu']
        small, gap = conditions.smallness_margins(nu, p['c4'], p['c5'], p['gamma_star'], p['c_star'])
        _close(small, nu * p['c4'] - p['c5'] * p['gamma_star'] * p['gamma_star'] / (nu * nu * nu) - p['c_star'] / 2)
        _close(gap, nu * p['c4'] - p['c_star'])

    @pytest.mark.parametrize('p', PARAMETERS)
    def test_window(self, p):
        a, g = conditions.window_margins(p['c_star'], p['T'], p['int_A'], p['int_G'], p['alpha'], p['gamma'])
        _close(a, p['c_star'] * p['T'] / 4 - p['int_A'])
        _close(g, p['alpha'] * p['gamma'] - p['int_G'])

    @pytest.mark.parametrize('p', PARAMETERS)
    def test_recursion(self, p):
        q = p['c_star'] * p['T'] / 4
        _close(conditions.recursion_margin(p['alpha'], p['c_star'], p['T']),
               1 - p['alpha'] * math.exp(q) - math.exp(-q))
        _close(conditions.recursion_margin(p['alpha'], p['c_star'], p['T'], int_A_sq=p['int_A']),
               1 - p['alpha'] * math.exp(p['int_A']) - math.exp(-q))
        _close(conditions.recursion_margin(p['alpha'], p['c_star'], p['T'], form='product'), 1 - p['alpha'])

    @pytest.mark.parametrize('p', PARAMETERS)
    def test_endpoint_bound(self, p):
        expected = (math.exp(p['int_A']) * p['int_G']
                    + math.exp(-p['c_star'] * p['T'] / 2 + p['int_A']) * p['X0'])
        _close(conditions.endpoint_bound(p['int_A'], p['int_G'], p['c_star'], p['T'], p['X0']), expected)


class TestDefaults:
    """Default gamma_star and alpha sit on or inside their conditions."""

    @pytest.mark.parametrize('p', PARAMETERS[:10])
    def test_gamma_star_is_extremal(self, p):
        c_star = 0.5 * p['nu'] * p['c4']
        gamma_star = conditions.default_gamma_star(p['nu'], p['c4'], p['c5'], c_star)
        small, gap = conditions.smallness_margins(p['nu'], p['c4'], p['c5'], gamma_star, c_star)
        assert abs(small) <= 1e-12 * p['nu'] * p['c4']
        assert gap > 0

    @pytest.mark.parametrize('p', PARAMETERS[:10])
    def test_alpha_satisfies_recursion(self, p):
        alpha = conditions.default_alpha(p['c_star'], p['T'])
        assert alpha > 0
        assert conditions.recursion_margin(alpha, p['c_star'], p['T']) > 0

    def test_unknown_form(self):
        with pytest.raises(ValueError, match='form'):
            conditions.recursion_margin(0.1, 0.1, 1.0, form='cubic')
