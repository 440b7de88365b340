import itertools

import numpy as np
import pytest

from conftest import brute_expectation
from dynlogit._tables import match
from dynlogit.model import Parameters, all_outcomes, probability_table, single_index_path
from dynlogit.moments_arp import (
    P2_T4_VARIANTS,
    P2_T5_TAGS,
    P3_T5_VARIANTS,
    initial_pattern,
    moment_arp_t3_xeq,
    moment_arp_t4_xeq,
    moment_p2_nox_t3,
    moment_p2_t4,
    moment_p2_t4_zero_start,
    moment_p2_t5_family,
    moment_p3_t5,
    p2_t4_distinct_summands,
    p2_t4_scale,
    p2_t4_support,
    p2_t5_dependency_residuals,
    transplant_initial,
)

INITIALS2 = list(itertools.product((0, 1), repeat=2))


@pytest.fixture
def point():
    rng = np.random.default_rng(21)
    return rng.normal(size=(5, 2)), Parameters([0.6, -0.4], [0.9, 0.5])


@pytest.mark.parametrize("variant", P2_T4_VARIANTS)
@pytest.mark.parametrize("y0", INITIALS2)
def test_second_order_t4_mean_zero_against_recursion(point, variant, y0):
    x, params = point
    x = x[:4]
    for alpha in (-1.0, 0.8):
        e = brute_expectation(lambda y: moment_p2_t4(variant, np.array(y0), y, x, params), y0, 4, x, params.beta, params.gamma, alpha)
        assert abs(e) < 1e-12


def test_second_order_variant_a_value_written_out(point):
    x, params = point
    x = x[:4]
    xb = x @ params.beta
    g1 = params.gamma[0]
    # at y0 = 0, path (0,0,1,1): exp(x_2 b - x_4 b - g1) - 1
    value = moment_p2_t4("A", np.array([0, 0]), np.array([0, 0, 1, 1]), x, params)
    assert value == pytest.approx(np.exp(xb[1] - xb[3] - g1) - 1)
    assert moment_p2_t4("A", np.array([0, 0]), np.array([0, 1, 1, 0]), x, params) == -1.0


def test_index_form_equals_lag_form_at_zero_start(point):
    x, params = point
    ys = all_outcomes(4)
    for v in P2_T4_VARIANTS:
        np.testing.assert_allclose(
            moment_p2_t4(v, np.array([0, 0]), ys, x[:4], params), moment_p2_t4_zero_start(v, ys, x[:4], params), atol=1e-13
        )


def test_scale_bounds_the_moment_and_counts_distinct_summands(point):
    x, params = point
    ys = all_outcomes(4)
    for v in P2_T4_VARIANTS:
        for y0 in INITIALS2:
            assert len(p2_t4_distinct_summands(v, y0)) == 8
            m = moment_p2_t4(v, np.array(y0), ys, x[:4], params)
            scale = p2_t4_scale(v, np.array(y0), x[:4], params)
            assert np.all(np.abs(m) <= scale + 1e-12)


def test_scale_is_smooth_in_the_parameters(point):
    x, params = point
    y0 = np.array([1, 0])
    base = p2_t4_scale("C", y0, x[:4], params)
    h = 1e-6
    shifted = p2_t4_scale("C", y0, x[:4], Parameters(params.beta, params.gamma + [h, 0]))
    back = p2_t4_scale("C", y0, x[:4], Parameters(params.beta, params.gamma - [h, 0]))
    assert abs(shifted - 2 * base + back) < 1e-8


def test_moment_vanishes_outside_its_support(point):
    x, params = point
    ys = all_outcomes(4)
    for v in P2_T4_VARIANTS:
        inside = np.zeros(16, dtype=bool)
        for pattern in p2_t4_support(v):
            inside |= match(ys, pattern)
        for y0 in INITIALS2:
            m = moment_p2_t4(v, np.array(y0), ys, x[:4], params)
            assert np.all(m[~inside] == 0)


@pytest.mark.parametrize("variant", P3_T5_VARIANTS)
def test_third_order_t5_mean_zero(variant):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(5, 1))
    params = Parameters([0.5], [0.8, -0.3, 0.4])
    for y0 in [(0, 0, 0), (1, 0, 1), (0, 1, 1)]:
        probs = probability_table(np.array(y0), x, params.beta, params.gamma, 0.3, 5)
        assert abs(moment_p3_t5(variant, np.array(y0), all_outcomes(5), x, params) @ probs) < 1e-12


def test_second_order_t5_family_mean_zero_and_dependencies(point):
    x, params = point
    ys = all_outcomes(5)
    for y0 in INITIALS2:
        probs = probability_table(np.array(y0), x, params.beta, params.gamma, -0.5, 5)
        for tag in P2_T5_TAGS:
            assert abs(moment_p2_t5_family(tag, np.array(y0), ys, x, params) @ probs) < 1e-12
        r = p2_t5_dependency_residuals(np.array(y0), ys, x, params)
        assert r.shape == (32, 4)
        assert np.abs(r).max() < 1e-11


def test_embedded_family_is_third_order_with_zero_last_lag(point):
    x, params = point
    ys = all_outcomes(5)
    embedded = moment_p2_t5_family(("embed", "C"), np.array([1, 0]), ys, x, params)
    direct = moment_p3_t5("C", np.array([0, 1, 0]), ys, x, Parameters(params.beta, [0.9, 0.5, 0.0]))
    np.testing.assert_allclose(embedded, direct)
    with pytest.raises(ValueError):
        moment_p2_t5_family(("other", "A"), np.array([1, 0]), ys, x, params)


def test_no_regressor_moment_mean_zero():
    gamma = [0.7, -1.1]
    for y0 in INITIALS2:
        for alpha in (-1.0, 2.0):
            e = brute_expectation(lambda y: moment_p2_nox_t3(np.array(y0), y, gamma), y0, 3, np.zeros((3, 0)), np.zeros(0), gamma, alpha)
            assert abs(e) < 1e-14


def test_initial_pattern_codes():
    y0 = np.array([[0, 0, 0], [0, 1, 1], [1, 0, 0], [1, 1, 1], [0, 1, 0]])
    np.testing.assert_array_equal(initial_pattern(y0), [0, 1, 2, 3, -1])


@pytest.mark.parametrize("p", [2, 3, 4])
def test_restricted_t3_mean_zero_for_each_pattern(p):
    rng = np.random.default_rng(p)
    params = Parameters(rng.normal(size=2), np.linspace(1.0, 0.4, p))
    x = rng.normal(size=(3, 2))
    x[2] = x[1]
    for y0 in [(0,) * p, (0,) + (1,) * (p - 1), (1,) + (0,) * (p - 1), (1,) * p]:
        e = brute_expectation(lambda y: moment_arp_t3_xeq(np.array(y0), y, x, params), y0, 3, x, params.beta, params.gamma, 0.2)
        assert abs(e) < 1e-13


def test_restricted_moments_check_their_preconditions():
    params = Parameters([1.0], [1.0, 0.5, 0.2])
    x = np.array([[0.1], [0.2], [0.3], [0.3]])
    ys = all_outcomes(3)
    with pytest.raises(ValueError, match="differ"):
        moment_arp_t3_xeq(np.zeros(3, dtype=int), ys, x[:3], params)
    x3 = np.array([[0.1], [0.2], [0.2]])
    with pytest.raises(ValueError):
        moment_arp_t3_xeq(np.array([0, 1, 0]), ys, x3, params)
    with pytest.raises(ValueError):
        moment_arp_t4_xeq("C_alt", np.zeros(3, dtype=int), all_outcomes(4), x, params)
    with pytest.raises(ValueError):
        moment_arp_t4_xeq("A", np.zeros(2, dtype=int), all_outcomes(4), x, Parameters([1.0], [1.0, 0.5]))


@pytest.mark.parametrize("variant,y0", [("A", (0, 0, 0)), ("B", (0, 0, 0)), ("C", (0, 0, 0)), ("C_alt", (0, 1, 0))])
def test_restricted_t4_mean_zero(variant, y0):
    params = Parameters([0.8], [1.0, 0.6, -0.3])
    x = np.array([[0.4], [-0.2], [0.9], [0.9]])
    e = brute_expectation(lambda y: moment_arp_t4_xeq(variant, np.array(y0), y, x, params), y0, 4, x, params.beta, params.gamma, -0.7)
    assert abs(e) < 1e-13


def test_transplant_keeps_every_single_index(point):
    x, params = point
    ys = all_outcomes(4)
    old, new = np.array([1, 1]), np.array([0, 0])
    shifted = transplant_initial(old, new, x[:4], params)
    z_old = single_index_path(old, ys, x[:4], params.beta, params.gamma)
    z_new = single_index_path(new, ys, shifted, np.append(params.beta, 1.0), params.gamma)
    np.testing.assert_allclose(z_old, z_new, atol=1e-14)
