from __future__ import annotations

import numpy as np
import pytest  # type: ignore[import]
import sympy as sp
from hypothesis import given, strategies as st  # type: ignore[import]

from caloric_lab.errors import DomainError, PreconditionError, ResourceError
from caloric_lab.lattice import (
    LatticeLaplacian,
    LatticePolynomial,
    binomial,
    binomial_expansion,
    binomial_in_time,
    exact_rank,
    forward_difference_order,
    harmonic_polynomial_basis,
    monomials,
    nullspace,
    solve_poisson,
)


@pytest.mark.parametrize(
    "n, i, expected",
    [(5, 2, 10), (4, 0, 1), (2, 3, 0), (3, -1, 0), (-1, 3, -1), (-2, 2, 3)],
)
def test_binomial_values(n: int, i: int, expected: int) -> None:
    assert binomial(n, i) == expected


@given(st.integers(min_value=-50, max_value=50), st.integers(min_value=0, max_value=10))
def test_binomial_difference_identity(n: int, i: int) -> None:
    assert binomial(n + 1, i) - binomial(n, i) == binomial(n, i - 1)


def test_binomial_in_time_matches_negated_argument() -> None:
    t = sp.Symbol("t")
    assert sp.expand(binomial_in_time(t, 2) - (t**2 + t) / 2) == 0
    for n in range(0, 6):
        assert binomial_in_time(t, 3).subs(t, -n) == binomial(n, 3)


def test_binomial_expansion_of_square() -> None:
    assert binomial_expansion([0, 1, 4, 9]) == (0, 1, 2, 0)
    assert forward_difference_order([0, 1, 4, 9, 16]) == 3
    assert forward_difference_order([0, 0, 0]) == 0


@given(
    st.lists(st.integers(min_value=-20, max_value=20), min_size=1, max_size=5).filter(lambda c: c[-1] != 0),
)
def test_newton_coefficients_reconstruct_polynomials(coefficients) -> None:
    degree = len(coefficients) - 1
    samples = [sum(c * n**k for k, c in enumerate(coefficients)) for n in range(degree + 3)]
    newton = binomial_expansion(samples)
    for n, value in enumerate(samples):
        assert sum(a * binomial(n, i) for i, a in enumerate(newton)) == value
    assert forward_difference_order(samples) == degree + 1


def test_monomial_order_and_cap() -> None:
    assert monomials(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert monomials(3, -1) == []
    with pytest.raises(ResourceError):
        monomials(10, 10)


def test_polynomial_parsing() -> None:
    poly = LatticePolynomial.from_expr("x**2 - y**2", 2)
    assert dict(poly.terms) == {(0, 2): -1, (2, 0): 1}
    assert poly.degree == 2
    assert LatticePolynomial.from_expr("0.5*x1", 1).terms == {(1,): sp.Rational(1, 2)}
    assert LatticePolynomial.zero(3).degree == -1
    with pytest.raises(DomainError):
        LatticePolynomial.from_expr("x*z", 2)
    with pytest.raises(DomainError):
        LatticePolynomial.from_expr("sqrt(2)*x", 1)


def test_polynomial_evaluation() -> None:
    poly = LatticePolynomial.from_expr("x**2 - y**2 + 1/3", 2)
    assert poly.evaluate_exact((1, 2)) == sp.Rational(-8, 3)
    np.testing.assert_allclose(poly.evaluate(np.array([[1, 2], [3, 0]])), [-8 / 3, 28 / 3])


def test_polynomial_arithmetic() -> None:
    x = LatticePolynomial.from_expr("x", 1)
    square = LatticePolynomial.from_expr("x**2", 1)
    combined = (square - x * 3) + LatticePolynomial.constant(1, 2)
    assert str(combined) == "x1**2 - 3*x1 + 2"
    assert (combined - combined).is_zero
    assert (-x).max_abs_coefficient() == 1
    with pytest.raises(DomainError):
        x + LatticePolynomial.zero(2)


@pytest.mark.parametrize(
    "expr, dimension, expected",
    [
        ("x**2", 1, "2"),
        ("x**4", 1, "12*x1**2 + 2"),
        ("x*y", 2, "0"),
        ("x**3*y", 2, "6*x1*x2"),
    ],
)
def test_lattice_laplacian_action(expr: str, dimension: int, expected: str) -> None:
    operator = LatticeLaplacian(dimension)
    image = operator.apply(LatticePolynomial.from_expr(expr, dimension))
    assert image == LatticePolynomial.from_expr(expected, dimension)


def test_scaled_laplacian() -> None:
    operator = LatticeLaplacian(2, sp.Rational(1, 4))
    image = operator.apply(LatticePolynomial.from_expr("x**2 + y**2", 2))
    assert image == LatticePolynomial.constant(2, 1)
    with pytest.raises(DomainError):
        LatticeLaplacian(1, 0)


def test_exact_linear_algebra() -> None:
    matrix = sp.Matrix([[1, 2], [2, 4]])
    assert exact_rank(matrix) == 1
    assert nullspace(matrix) == [[-2, 1]]


@pytest.mark.parametrize(
    "dimension, degree, size",
    [(1, 2, 2), (1, 5, 2), (2, 1, 3), (2, 2, 5), (2, 3, 7), (3, 2, 9)],
)
def test_harmonic_space_dimensions(dimension: int, degree: int, size: int) -> None:
    basis = harmonic_polynomial_basis(dimension, degree)
    assert basis.size == size
    operator = LatticeLaplacian(dimension)
    assert all(operator.apply(p).is_zero for p in basis.polynomials)


def test_harmonic_space_rejects_bad_arguments() -> None:
    with pytest.raises(PreconditionError):
        harmonic_polynomial_basis(0, 2)


def test_minimum_norm_poisson_solution() -> None:
    operator = LatticeLaplacian(2)
    solution = solve_poisson(operator, LatticePolynomial.from_expr("x**2 - y**2", 2))
    assert solution == LatticePolynomial.from_expr("(x**4 - y**4)/12", 2)


@pytest.mark.parametrize("rhs", ["1", "x*y + 3", "x**3 - 2*y", "x**2 + y**2"])
def test_poisson_solutions_invert_the_laplacian(rhs: str) -> None:
    operator = LatticeLaplacian(2)
    target = LatticePolynomial.from_expr(rhs, 2)
    solution = solve_poisson(operator, target)
    assert operator.apply(solution) == target
    assert solution.degree == target.degree + 2
