import math
from fractions import Fraction as F

import numpy as np
import pytest

from xyheights.weights import (
    DEFAULT_TOL,
    log_weight,
    weight,
    weight_table,
    window_halfwidth,
)


def series_oracle(J, k, terms=60):
    """Independent truncated series: sum over i-j=k of (J/2)^i/i! (J/2)^j/j!."""
    k = abs(k)
    x = F(J) / 2  # exact rationals sidestep factorial overflow
    total = F(0)
    for j in range(terms):
        total += x ** (j + k) / math.factorial(j + k) * x**j / math.factorial(j)
    return float(total)


def test_values_against_independent_series():
    for J in (0.1, 0.5, 1.0, 2.0, 4.0):
        for k in range(0, 11):
            assert weight(J, k) == pytest.approx(series_oracle(J, k), rel=1e-12)


def test_reference_values():
    assert weight(1.0, 0) == pytest.approx(1.2660658778, abs=1e-9)
    assert weight(1.0, 1) == pytest.approx(0.5651591040, abs=1e-9)


def test_zero_coupling_exact():
    assert weight(0.0, 0) == 1.0
    assert weight(0.0, 3) == 0.0
    assert log_weight(0.0, 0) == 0.0
    assert log_weight(0.0, 1) == -math.inf


def test_symmetry():
    for J in (0.3, 1.7):
        for k in range(1, 8):
            assert weight(J, k) == weight(J, -k)


def test_log_weight_matches_plain():
    for J in (0.5, 4.0, 9.0):
        for k in (0, 1, 5, 12):
            assert log_weight(J, k) == pytest.approx(math.log(weight(J, k)), abs=1e-12)


def test_log_domain_handles_large_arguments():
    # far beyond float factorial range; compare against scipy's scaled Bessel
    import scipy.special as sp

    for J in (50.0, 200.0):
        for k in (0, 3, 40):
            expected = math.log(sp.ive(k, J)) + J
            assert log_weight(J, k) == pytest.approx(expected, rel=1e-10)


def test_table_symmetry_and_tail():
    t = weight_table(2.0, 12)
    for k in range(13):
        assert t[k] == t[-k]
    assert t[13] == 0.0
    assert t.tail < t[12]


def test_log_concavity_and_ratio_monotonicity():
    for J in (0.1, 0.5, 1.0, 2.0, 4.0, 8.0):
        t = weight_table(J, 20)
        for k in range(-19, 20):
            assert t[k] ** 2 >= t[k - 1] * t[k + 1] - 1e-12 * t[k] ** 2
        ratios = [t[k + 1] / t[k] for k in range(0, 15)]
        assert all(a > b for a, b in zip(ratios, ratios[1:]))


def test_truncation_insensitive_to_extra_terms():
    for J in (0.7, 3.0):
        for k in (0, 2, 5):
            a = weight(J, k, tol=DEFAULT_TOL)
            b = series_oracle(J, k, terms=200)
            assert a == pytest.approx(b, rel=10 * DEFAULT_TOL)


def test_total_mass_is_exp_J():
    for J in (0.5, 1.0, 2.0, 5.0):
        total = sum(weight(J, k) for k in range(-50, 51))
        assert total == pytest.approx(math.exp(J), rel=1e-12)


def test_window_halfwidth():
    assert window_halfwidth(0.0) == 0
    W = window_halfwidth(1.0, 1e-12)
    assert weight(1.0, W + 1) / weight(1.0, 0) < 1e-12
    assert weight(1.0, W) / weight(1.0, 0) >= 1e-12
