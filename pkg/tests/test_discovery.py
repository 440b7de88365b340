import mpmath
import numpy as np
import pytest

from dynlogit.discovery import (
    AmbiguousSpectrumError,
    basis_conjecture_check,
    build_probability_matrix,
    default_alpha_grid,
    discover_special_case,
    measured_moment_count,
    moment_count_formula,
    nullspace,
    solve_constrained_moment,
    system_ar1_t3,
    system_p2_t4_a,
    unit,
)
from dynlogit.model import ModelSpec, Parameters, all_outcomes, probability_table
from dynlogit.moments_ar1 import moment_ar1_t3
from dynlogit.moments_arp import moment_p2_t4


@pytest.mark.parametrize("p,T,count", [(1, 2, 0), (1, 3, 2), (1, 4, 8), (1, 5, 22), (2, 4, 4), (2, 5, 16), (3, 5, 8), (2, 3, 0)])
def test_count_formula(p, T, count):
    assert moment_count_formula(p, T) == count


def test_alpha_grids():
    spread = default_alpha_grid(3)
    assert spread.size == 10 and spread[0] == -5 and spread[-1] == 5
    integer = default_alpha_grid(2, "integer")
    np.testing.assert_array_equal(integer, [-10, 1, 2, 3, 4, 10])
    with pytest.raises(ValueError):
        default_alpha_grid(3, "bogus")
    with pytest.raises(ValueError):
        build_probability_matrix(ModelSpec(1, 3, 1), Parameters([1.0], [1.0]), [0], np.zeros((3, 1)), grid=[1.0, 0.0])


def test_probability_matrix_rows_are_probability_vectors():
    spec, params = ModelSpec(1, 3, 1), Parameters([0.5], [1.0])
    x = np.array([[0.1], [0.2], [-0.3]])
    L = build_probability_matrix(spec, params, [1], x, grid=[0.0, 1.0])
    np.testing.assert_allclose(L[1], probability_table(np.array([1]), x, [0.5], [1.0], 1.0, 3))
    Lmp = build_probability_matrix(spec, params, [1], x, grid=[0.0, 1.0], digits=40)
    assert isinstance(Lmp, mpmath.matrix)
    assert float(Lmp[1, 3]) == pytest.approx(L[1, 3], rel=1e-14)


def test_float_nullspace_of_known_matrix():
    A = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    basis = nullspace(A)
    assert basis.dimension == 1
    np.testing.assert_allclose(np.abs(basis.vectors[0]), [np.sqrt(0.5), np.sqrt(0.5), 0.0], atol=1e-14)


def test_ambiguous_gap_raises_unless_relaxed():
    A = np.diag([1.0, 2e-9, 1e-10])
    with pytest.raises(AmbiguousSpectrumError):
        nullspace(A, normalize_rows=False)
    relaxed = nullspace(A, normalize_rows=False, strict=False)
    assert relaxed.ambiguous and relaxed.dimension == 1


@pytest.mark.parametrize("p,T,expected", [(1, 3, 2), (1, 4, 8), (2, 4, 4)])
def test_measured_counts_at_random_points(p, T, expected):
    rng = np.random.default_rng(p * 10 + T)
    params = Parameters(rng.uniform(0.5, 1.5, 1), rng.uniform(0.5, 1.5, p))
    assert measured_moment_count(p, T, params, np.zeros(p, dtype=int), rng.normal(size=(T, 1))) == expected


def test_degenerate_parameters_add_moments():
    x = np.array([[0.3], [-0.1], [0.8], [0.2]])
    static = discover_special_case(ModelSpec(1, 2, 1), Parameters([1.0], [0.0]), [0], x[:2])
    assert static.dimension == 1
    no_first_lag = discover_special_case(ModelSpec(2, 4, 1), Parameters([1.0], [0.0, 0.6]), [0, 0], x)
    assert no_first_lag.dimension == 9


def test_constrained_solve_float_and_high_precision_agree():
    rng = np.random.default_rng(8)
    L = rng.normal(size=(2, 4))
    cons = [(unit(4, 1), 1.0), (unit(4, 2), -2.0)]
    m_float = solve_constrained_moment(L, cons)
    m_mp = solve_constrained_moment(mpmath.matrix(L.tolist()), cons)
    np.testing.assert_allclose(L @ m_float, 0, atol=1e-13)
    np.testing.assert_allclose(m_float, m_mp, atol=1e-12)
    assert m_float[0] == pytest.approx(1.0) and m_float[1] == pytest.approx(-2.0)
    with pytest.raises(ValueError, match="square"):
        solve_constrained_moment(L, cons[:1])
    with pytest.raises(np.linalg.LinAlgError):
        solve_constrained_moment(np.zeros((2, 4)), cons)


@pytest.mark.parametrize("variant", ["A", "B"])
def test_first_order_system_recovers_closed_form(variant):
    x = np.array([[0.2], [1.0], [-0.6]])
    params = Parameters([0.9], [1.4])
    L, cons = system_ar1_t3(variant, ModelSpec(1, 3, 1), params, [1], x)
    found = solve_constrained_moment(L, cons)
    np.testing.assert_allclose(found, moment_ar1_t3(variant, 1, all_outcomes(3), x, params), atol=1e-12)


def test_second_order_system_recovers_closed_form():
    x = np.array([[0.2], [1.0], [-0.6], [0.4]])
    params = Parameters([0.9], [1.0, 0.5])
    L, cons = system_p2_t4_a(ModelSpec(2, 4, 1), params, [1, 0], x)
    found = solve_constrained_moment(L, cons)
    np.testing.assert_allclose(found, moment_p2_t4("A", np.array([1, 0]), all_outcomes(4), x, params), atol=1e-12)


def test_triplets_span_the_nullspace_for_four_periods():
    x = np.array([[0.3], [-0.2], [0.5], [1.0]])
    report = basis_conjecture_check(4, 0, x, Parameters([1.0], [1.0]))
    assert report.dimension_match and report.coefficient_uniqueness
    assert report.nullspace_dim == report.expected == 8
    with pytest.raises(ValueError):
        basis_conjecture_check(4, 0, x, Parameters([1.0], [0.0]))
