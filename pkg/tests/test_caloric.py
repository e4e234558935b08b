from __future__ import annotations

import numpy as np
import pytest  # type: ignore[import]
import sympy as sp
from numpy.testing import assert_allclose
from scipy.integrate import quad

from caloric_lab import caloric
from caloric_lab.caloric import (
    Cylinder,
    PolyField,
    basis_value,
    cylinder_aggregate,
    equation_violations,
    evolve_forward_continuous,
    interval_aggregate,
    is_caloric,
    march_backward_discrete,
    residual,
    time_derivative,
)
from caloric_lab.errors import CoverageError, DomainError, PreconditionError
from caloric_lab.graph import FamilyConfig, build_window, generate, pack_coords
from caloric_lab.lattice import LatticeLaplacian, LatticePolynomial
from caloric_lab.metrics import ball_mask, construct_path_metric
from caloric_lab.operators import VertexFunction, gamma_values
from caloric_lab.structure import assemble_ancient, solve_hierarchy


def _poly(*exprs: str, dimension: int = 1):
    return tuple(LatticePolynomial.from_expr(e, dimension) for e in exprs)


@pytest.fixture(scope="module")
def line():
    window = build_window(generate(FamilyConfig()), hops=10)
    return window, construct_path_metric(window)


@pytest.fixture(scope="module")
def heat_field() -> PolyField:
    """x² + 2t in the monomial time basis."""

    return PolyField(_poly("x**2", "2"))


def test_quadratic_field_is_caloric(heat_field: PolyField) -> None:
    assert residual(heat_field) == 0
    assert is_caloric(heat_field)
    assert heat_field.mode == "continuous"
    assert heat_field.at(sp.Rational(-1, 2)) == LatticePolynomial.from_expr("x**2 - 1", 1)


def test_quadratic_field_in_the_binomial_basis(heat_field: PolyField) -> None:
    binomial = heat_field.to_basis("binomial")
    assert binomial == _poly("x**2", "-2")
    discrete = PolyField(binomial, "binomial")
    assert discrete.mode == "discrete"
    assert residual(discrete) == 0
    assert PolyField(discrete.to_basis("monomial")).coefficients == heat_field.coefficients


def test_residual_is_linear_in_perturbations(heat_field: PolyField) -> None:
    eps = sp.Rational(1, 1000)
    square, two = heat_field.coefficients
    shifted_top = PolyField((square, two + LatticePolynomial.constant(1, eps)))
    assert residual(shifted_top) == pytest.approx(1e-3, rel=1e-12)
    bumped_base = PolyField((square + square * (eps / 2), two))
    assert residual(bumped_base) == pytest.approx(1e-3, rel=1e-12)
    assert not is_caloric(bumped_base)


@pytest.mark.parametrize("top", ["1", "x", "x*y", "x**2 - y**2"])
@pytest.mark.parametrize("mode", ["continuous", "discrete"])
def test_window_residual_matches_exact_check(top: str, mode: str) -> None:
    window = build_window(generate(FamilyConfig(dimension=2)), hops=4)
    basis = "monomial" if mode == "continuous" else "binomial"
    field = PolyField(_poly(top, dimension=2), basis)
    assert residual(field) == 0
    assert residual(field.on_window(window)) == 0.0


def test_time_derivatives_shift_coefficients(heat_field: PolyField) -> None:
    assert time_derivative(heat_field).coefficients == _poly("2")
    discrete = PolyField(heat_field.to_basis("binomial"), "binomial")
    assert time_derivative(discrete).coefficients == _poly("2")
    cubic = PolyField(_poly("0", "0", "1"))
    assert time_derivative(cubic, "continuous").coefficients == _poly("0", "2")


def test_invalid_fields_are_rejected(line) -> None:
    window, _ = line
    with pytest.raises(PreconditionError):
        PolyField(())
    with pytest.raises(PreconditionError):
        PolyField(_poly("x"), "chebyshev")
    with pytest.raises(DomainError):
        PolyField((LatticePolynomial.from_expr("x", 1), VertexFunction.constant(window, 1.0)))
    with pytest.raises(DomainError):
        PolyField((LatticePolynomial.zero(1), LatticePolynomial.zero(2)))


def test_equation_violations_per_coefficient() -> None:
    field = PolyField(_poly("x**2", "3"))
    assert equation_violations(field) == [1.0, 0.0]


def test_backward_march_of_square(line) -> None:
    window, _ = line
    u0 = VertexFunction.from_coords(window, lambda x: x * x)
    field = march_backward_discrete(window, u0, 3)
    assert field.value(pack_coords((2,)), -3) == 4 - 6
    assert field.at(-3).defined_mask.sum() == 17
    assert residual(field) == 0.0
    with pytest.raises(DomainError):
        field.at(-4)
    with pytest.raises(DomainError):
        field.value(pack_coords((10,)), -3)


def test_backward_march_of_random_slice_is_caloric(line) -> None:
    window, _ = line
    rng = np.random.default_rng(3)
    u0 = VertexFunction(window, rng.uniform(-1.0, 1.0, len(window)))
    field = march_backward_discrete(window, u0, 3)
    assert residual(field) <= 1e-12
    assert is_caloric(field)


def test_backward_march_leaves_small_windows() -> None:
    window = build_window(generate(FamilyConfig()), hops=3)
    with pytest.raises(CoverageError):
        march_backward_discrete(window, VertexFunction.constant(window, 1.0), 6)


def test_forward_evolution_tracks_quadratic_solution() -> None:
    window = build_window(generate(FamilyConfig()), hops=30)
    u0 = VertexFunction.from_coords(window, lambda x: x * x)
    sampled = evolve_forward_continuous(window, u0, 1.0, 0.1)
    assert len(sampled.times) == 11
    inner = np.abs(window.coords_array[:, 0]) <= 5
    coords = window.coords_array[:, 0].astype(float)
    for index, t in enumerate(sampled.times):
        assert_allclose(sampled.values[index][inner], coords[inner] ** 2 + 2 * t, atol=1e-6)


def test_forward_evolution_edge_cases() -> None:
    window = build_window(generate(FamilyConfig()), hops=2)
    u0 = VertexFunction.constant(window, 1.0)
    single = evolve_forward_continuous(window, u0, 0.0, 0.1)
    assert single.values.shape == (1, len(window))
    assert single.mass(0) == len(window)
    with pytest.raises(PreconditionError):
        evolve_forward_continuous(window, u0, 1.0, 0.0)


def test_forward_evolution_conserves_mass_on_a_finite_graph() -> None:
    window = build_window(generate(FamilyConfig(family="star", leaves=5)), hops=1)
    u0 = VertexFunction(window, np.random.default_rng(2).normal(size=len(window)))
    sampled = evolve_forward_continuous(window, u0, 2.0, 0.25)
    for index in range(len(sampled.times)):
        assert sampled.mass(index) == pytest.approx(sampled.mass(0), rel=1e-8, abs=1e-10)


def test_forward_evolution_obeys_the_maximum_principle() -> None:
    window = build_window(generate(FamilyConfig(dimension=2)), hops=5)
    u0 = VertexFunction(window, np.random.default_rng(4).uniform(-1.0, 3.0, size=len(window)))
    sampled = evolve_forward_continuous(window, u0, 1.0, 0.1)
    assert sampled.values.max() <= u0.values.max() + 1e-9
    assert sampled.values.min() >= u0.values.min() - 1e-9


def test_cylinder_validation() -> None:
    assert Cylinder(0, 2).interval == (-4, 0)
    assert Cylinder(0, 3, "discrete").interval == (-9, 0)
    with pytest.raises(PreconditionError):
        Cylinder(0, 1.5, "discrete")
    with pytest.raises(PreconditionError):
        Cylinder(0, 0)
    with pytest.raises(PreconditionError):
        Cylinder(0, 1, "sideways")


def test_continuous_aggregates_of_quadratic_field(line, heat_field: PolyField) -> None:
    window, metric = line
    cylinder = Cylinder(metric.base, 1)
    assert cylinder_aggregate(heat_field, window, metric, "gamma", cylinder) == pytest.approx(11.0)
    assert cylinder_aggregate(heat_field, window, metric, "dt2", cylinder) == pytest.approx(12.0)
    assert cylinder_aggregate(heat_field, window, metric, "u2", cylinder) == pytest.approx(2.0)


def test_time_aggregates_are_additive(line, heat_field: PolyField) -> None:
    window, metric = line
    half = sp.Rational(-1, 2)
    whole = interval_aggregate(heat_field, window, metric, "u2", 2, -1, 0, "continuous")
    parts = interval_aggregate(heat_field, window, metric, "u2", 2, -1, half, "continuous") + interval_aggregate(
        heat_field, window, metric, "u2", 2, half, 0, "continuous"
    )
    assert whole == pytest.approx(parts, rel=1e-12)


@pytest.mark.parametrize("quantity", ["u2", "gamma"])
def test_continuous_aggregates_match_quadrature(line, quantity: str) -> None:
    window, metric = line
    field = assemble_ancient(solve_hierarchy(LatticePolynomial.constant(1, 1), 2, "continuous"))
    array = field.coefficient_array(window)
    mask = ball_mask(metric, 2)
    measure = window.measure_array[mask]

    def spatial(t: float) -> float:
        values = sum(basis_value(field.basis, t, i) * row for i, row in enumerate(array))
        density = values**2 if quantity == "u2" else gamma_values(window, values)
        return float(np.sum(density[mask] * measure))

    expected, _ = quad(spatial, -4.0, 0.0, epsabs=1e-12, epsrel=1e-12)
    actual = cylinder_aggregate(field, window, metric, quantity, Cylinder(metric.base, 2))
    assert actual == pytest.approx(expected, rel=1e-9)


def test_negative_aggregates_are_reported(line, heat_field: PolyField, monkeypatch) -> None:
    window, metric = line
    monkeypatch.setattr(caloric, "_time_gram", lambda *args: -np.eye(2))
    with pytest.raises(PreconditionError):
        cylinder_aggregate(heat_field, window, metric, "u2", Cylinder(metric.base, 1))


def test_rounding_level_negatives_clamp_to_zero(line, heat_field: PolyField, monkeypatch) -> None:
    window, metric = line
    # spatial Gram of (x², 2) on B_1 is [[2, 4], [4, 12]]
    monkeypatch.setattr(caloric, "_time_gram", lambda *args: np.diag([6.0, -1.0 - 1e-12]))
    assert cylinder_aggregate(heat_field, window, metric, "u2", Cylinder(metric.base, 1)) == 0.0


@pytest.mark.parametrize("quantity, expected", [("u2", 8.0), ("gamma", 22.0), ("Dt2", 24.0)])
def test_grid_and_polynomial_discrete_aggregates_agree(line, heat_field, quantity: str, expected: float) -> None:
    window, metric = line
    marched = march_backward_discrete(window, VertexFunction.from_coords(window, lambda x: x * x), 4)
    discrete = PolyField(heat_field.to_basis("binomial"), "binomial")
    cylinder = Cylinder(metric.base, 1, "discrete")
    grid_value = cylinder_aggregate(marched, window, metric, quantity, cylinder)
    poly_value = cylinder_aggregate(discrete, window, metric, quantity, cylinder)
    assert grid_value == pytest.approx(expected)
    assert poly_value == pytest.approx(expected)


def test_aggregate_errors(line) -> None:
    window, metric = line
    marched = march_backward_discrete(window, VertexFunction.constant(window, 1.0), 4)
    with pytest.raises(CoverageError):
        cylinder_aggregate(marched, window, metric, "u2", Cylinder(metric.base, 3, "discrete"))
    with pytest.raises(PreconditionError):
        interval_aggregate(marched, window, metric, "dt2", 1, -1, 0, "discrete")
    with pytest.raises(PreconditionError):
        interval_aggregate(marched, window, metric, "u2", 1, -1, 0, "continuous")
    with pytest.raises(PreconditionError):
        interval_aggregate(marched, window, metric, "energy", 1, -1, 0, "discrete")
    with pytest.raises(PreconditionError):
        interval_aggregate(marched, window, metric, "u2", 1, 0, -1, "discrete")


def test_normalized_lattice_operator_scales_the_equation() -> None:
    operator = LatticeLaplacian(2, sp.Rational(1, 4))
    field = PolyField(_poly("x**2", "1/2", dimension=2), operator=operator)
    assert residual(field) == 0
    assert residual(PolyField(_poly("x**2", "2", dimension=2), operator=operator)) > 0
