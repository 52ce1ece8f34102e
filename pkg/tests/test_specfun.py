"""
Tests for Gamma, Mittag-Leffler and the fractional Gronwall envelope
"""
import math

import numpy as np
import pytest

from docsolve.core.exceptions import GronwallInputError, SpecialFunctionError
from docsolve.services.fracops import Grid
from docsolve.services.specfun import gamma, gronwall_envelope, log_gamma, mittag_leffler


def test_gamma_values():
    assert gamma(5.0) == pytest.approx(24.0, rel=1e-14)
    assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert gamma(2.5) == pytest.approx(1.329340388179137, rel=1e-14)
    assert gamma(-0.5) == pytest.approx(-2.0 * math.sqrt(math.pi), rel=1e-14)


def test_gamma_recurrence():
    x = np.linspace(0.1, 20.0, 200)
    np.testing.assert_allclose(gamma(x + 1.0), x * gamma(x), rtol=1e-12)


@pytest.mark.parametrize("pole", [0.0, -1.0, -2.0, -7.0])
def test_gamma_poles(pole):
    with pytest.raises(SpecialFunctionError):
        gamma(pole)
    with pytest.raises(SpecialFunctionError):
        log_gamma(pole)


def test_log_gamma():
    assert log_gamma(10.0) == pytest.approx(math.log(362880.0), rel=1e-14)


# ----------------------------------------------------------------------
# Mittag-Leffler
# ----------------------------------------------------------------------

def test_mittag_leffler_exponential():
    assert mittag_leffler(1.0, 1.0, 1.0) == pytest.approx(math.e, rel=1e-10)
    z = np.linspace(-10.0, 10.0, 21)
    np.testing.assert_allclose(mittag_leffler(1.0, 1.0, z), np.exp(z), rtol=1e-10, atol=1e-10)


def test_mittag_leffler_hyperbolic_and_trigonometric():
    assert mittag_leffler(2.0, 1.0, 4.0) == pytest.approx(math.cosh(2.0), rel=1e-10)
    z = np.linspace(0.0, 10.0, 11)
    np.testing.assert_allclose(mittag_leffler(2.0, 1.0, z), np.cosh(np.sqrt(z)), rtol=1e-10)
    np.testing.assert_allclose(
        mittag_leffler(2.0, 1.0, -z), np.cos(np.sqrt(z)), rtol=1e-10, atol=1e-10
    )


def test_mittag_leffler_second_parameter():
    z = np.array([-3.0, -0.5, 0.5, 3.0])
    np.testing.assert_allclose(mittag_leffler(1.0, 2.0, z), np.expm1(z) / z, rtol=1e-10)


def test_mittag_leffler_at_zero():
    assert mittag_leffler(0.5, 1.0, 0.0) == 1.0
    assert mittag_leffler(0.5, 2.0, 0.0) == pytest.approx(1.0)
    assert mittag_leffler(0.7, 1.5, 0.0) == pytest.approx(1.0 / math.gamma(1.5))


def test_mittag_leffler_keeps_shape():
    z = np.zeros((2, 3))
    assert mittag_leffler(0.5, 1.0, z).shape == (2, 3)


@pytest.mark.parametrize(
    "alpha, z",
    [(0.5, 60.0), (0.5, -51.0), (0.2, 2.0), (0.0, 0.5), (-1.0, 0.5)],
)
def test_mittag_leffler_range(alpha, z):
    with pytest.raises(SpecialFunctionError):
        mittag_leffler(alpha, 1.0, z)


# ----------------------------------------------------------------------
# Gronwall envelope
# ----------------------------------------------------------------------

GRID = Grid(0.0, 1.0, 200)


def test_gronwall_zero_a_gives_zero():
    env = gronwall_envelope(np.zeros(201), np.ones(201), 0.5, GRID)
    np.testing.assert_array_equal(env.values, 0.0)
    assert env.truncation_index >= 1


def test_gronwall_zero_b_returns_a():
    a = 1.0 + GRID.nodes
    env = gronwall_envelope(a, np.zeros(201), 0.5, GRID)
    np.testing.assert_array_equal(env.values, a)


def test_gronwall_constant_inputs_match_closed_form():
    c, beta, alpha = 2.0, 1.0, 0.5
    env = gronwall_envelope(np.full(201, c), np.full(201, beta), alpha, GRID)
    closed = c * mittag_leffler(alpha, 1.0, beta * math.gamma(alpha) * GRID.nodes**alpha)
    assert np.all(env.values <= closed * (1.0 + 1e-6))
    np.testing.assert_allclose(env.values, closed, rtol=1e-8)


def test_gronwall_envelope_dominates_a_and_is_monotone_in_a():
    t = GRID.nodes
    a1 = 1.0 + np.sin(3.0 * t) ** 2
    b = 0.5 + t
    env1 = gronwall_envelope(a1, b, 0.7, GRID)
    env2 = gronwall_envelope(a1 + 0.5, b, 0.7, GRID)
    assert np.all(env1.values >= a1)
    assert np.all(env2.values >= env1.values)
    np.testing.assert_array_equal(env1.times, t)


def test_gronwall_envelope_is_monotone_in_b():
    t = GRID.nodes
    a = 1.0 + t**2
    b1 = 0.5 + t
    env1 = gronwall_envelope(a, b1, 0.6, GRID)
    env2 = gronwall_envelope(a, b1 + 0.3, 0.6, GRID)
    env3 = gronwall_envelope(a, 2.0 * b1 + 0.3, 0.6, GRID)
    assert np.all(env2.values >= env1.values * (1.0 - 1e-12))
    assert np.all(env3.values >= env2.values * (1.0 - 1e-12))
    assert env3.values[-1] > env1.values[-1]


@pytest.mark.parametrize(
    "a, b, alpha",
    [
        (-np.ones(201), np.ones(201), 0.5),
        (np.ones(201), -np.ones(201), 0.5),
        (np.ones(201), 1.0 - GRID.nodes, 0.5),
        (np.ones(201), np.ones(201), 0.0),
        (np.ones(201), np.ones(201), 1.5),
        (np.ones(100), np.ones(201), 0.5),
        (np.full(201, np.nan), np.ones(201), 0.5),
    ],
)
def test_gronwall_rejects_bad_input(a, b, alpha):
    with pytest.raises(GronwallInputError):
        gronwall_envelope(a, b, alpha, GRID)
