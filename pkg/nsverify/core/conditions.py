"""Scalar smallness conditions of the stability argument.

Each function returns a margin (right-hand side minus left-hand side); a
condition holds when its margin is nonnegative.
"""
import math


def l2_assumption_margin(nu, T, c1, c3, A3_sq):
    """nu*c1*T/2 - 4*c3*A3^2/(nu*c1): the growth of the L2 estimate is absorbed over one window."""
    return nu * c1 * T / 2.0 - 4.0 * c3 * A3_sq / (nu * c1)


def explicit_l2_condition_margin(nu, T, c_s1, c1, c3, sup_forcing_integral, grad_l2_sq0):
    """Explicit form of the L2 assumption in terms of the base forcing and initial gradient.

    ``sup_forcing_integral`` is the largest window integral of ||f_s||^2 and
    ``grad_l2_sq0`` is ||grad v_s(0)||^2.
    """
    decay = math.exp(-nu * c_s1 * T)
    lhs = (2.0 - decay) / (c_s1 * nu * (1.0 - decay)) * sup_forcing_integral + grad_l2_sq0
    return nu ** 2 * c1 ** 2 * T / (8.0 * c3) - lhs


def smallness_margins(nu, c4, c5, gamma_star, c_star):
    """(nu*c4 - c5*gamma_star^2/nu^3 - c_star/2, nu*c4 - c_star)."""
    return (nu * c4 - c5 * gamma_star ** 2 / nu ** 3 - c_star / 2.0,
            nu * c4 - c_star)


def window_margins(c_star, T, int_A_sq, int_G_sq, alpha, gamma):
    """(c_star*T/4 - int A^2, alpha*gamma - int G^2) over one window."""
    return c_star * T / 4.0 - int_A_sq, alpha * gamma - int_G_sq


def recursion_margin(alpha, c_star, T, int_A_sq=None, form='sum'):
    """Margin of the window recursion condition.

    ``form='sum'``: 1 - (alpha*exp(c_star*T/4) + exp(-c_star*T/4)), or with
    ``int_A_sq`` given, alpha*exp(int A^2) in place of the first term.
    ``form='product'``: 1 - alpha*exp(c_star*T/4)*exp(-c_star*T/4).
    """
    quarter = c_star * T / 4.0
    if form == 'product':
        return 1.0 - alpha * math.exp(quarter) * math.exp(-quarter)
    if form != 'sum':
        raise ValueError(f"form must be 'sum' or 'product', got {form!r}")
    growth = quarter if int_A_sq is None else int_A_sq
    return 1.0 - (alpha * math.exp(growth) + math.exp(-quarter))


def endpoint_bound(int_A_sq, int_G_sq, c_star, T, X_sq_start):
    """exp(int A^2) int G^2 + exp(-c_star*T/2 + int A^2) X^2(kT)."""
    return math.exp(int_A_sq) * int_G_sq + math.exp(-c_star * T / 2.0 + int_A_sq) * X_sq_start


def default_gamma_star(nu, c4, c5, c_star):
    """Largest gamma_star with nu*c4 - c5*gamma_star^2/nu^3 >= c_star/2."""
    return math.sqrt((nu * c4 - c_star / 2.0) * nu ** 3 / c5)


def default_alpha(c_star, T):
    """Half the largest alpha accepted by the sum-form recursion condition."""
    quarter = c_star * T / 4.0
    return 0.5 * (1.0 - math.exp(-quarter)) * math.exp(-quarter)
