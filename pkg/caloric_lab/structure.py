"""Structure of ancient solutions: hierarchy chains, assembly, extraction and dimension bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Tuple

import numpy as np
import sympy as sp
from scipy.sparse.linalg import spsolve

from .caloric import (
    MODE_BASIS,
    MODES,
    CALORIC_TOLERANCE,
    Coefficient,
    PolyField,
    basis_value,
    combine,
    equation_violations,
    field_scale,
    is_caloric,
)
from .errors import AssemblyError, PreconditionError, SingularSystemError
from .graph import GraphWindow, VertexId
from .lattice import (
    LatticeLaplacian,
    LatticePolynomial,
    exact_rank,
    harmonic_polynomial_basis,
    monomials,
    solve_poisson,
)
from .metrics import MetricData, ball_mask
from .operators import VertexFunction, laplacian_matrix, laplacian_values

logger = logging.getLogger(__name__)

GROWTH_CLASSES = ("H_k", "P_k", "P~_k")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise PreconditionError(f"unknown mode '{mode}'")


def chain_factor(mode: str, index: int) -> int:
    """c_i in Δp_i = c_i p_{i+1}."""

    return index + 1 if mode == "continuous" else -1


@dataclass(frozen=True, eq=False)
class HierarchyChain:
    """(p₀, …, p_l) with Δp_l = 0 and Δp_i = c_i p_{i+1}."""

    mode: str
    coefficients: Tuple[Coefficient, ...]
    operator: LatticeLaplacian | None = None

    def __post_init__(self) -> None:
        _check_mode(self.mode)
        object.__setattr__(self, "coefficients", tuple(self.coefficients))

    @property
    def length(self) -> int:
        return len(self.coefficients) - 1

    def as_field(self) -> PolyField:
        return PolyField(self.coefficients, MODE_BASIS[self.mode], self.operator)

    def violations(self, window: GraphWindow | None = None) -> list:
        return equation_violations(self.as_field(), window)


@dataclass(frozen=True)
class GrowthCertificate:
    """|u| ≤ C(1 + R)^k on the measured cylinders around ``base``."""

    rate: float
    constant: float
    base: VertexId
    growth_class: str

    def __post_init__(self) -> None:
        if self.growth_class not in GROWTH_CLASSES:
            raise PreconditionError(f"unknown growth class '{self.growth_class}'")
        if self.rate < 0 or self.constant < 0:
            raise PreconditionError("growth rate and constant must be nonnegative")


def solve_hierarchy(
    top: LatticePolynomial,
    length: int,
    mode: str,
    operator: LatticeLaplacian | None = None,
) -> HierarchyChain:
    """Solve the Poisson hierarchy downwards from a harmonic top coefficient, exactly."""

    _check_mode(mode)
    if length < 0:
        raise PreconditionError("chain length must be nonnegative")
    operator = operator or LatticeLaplacian(top.dimension)
    if not operator.apply(top).is_zero:
        raise PreconditionError(f"top coefficient {top} is not harmonic")

    chain = [top]
    for index in range(length - 1, -1, -1):
        chain.insert(0, solve_poisson(operator, chain[0] * chain_factor(mode, index)))
    logger.debug("Solved %s hierarchy of length %d from top %s", mode, length, top)
    return HierarchyChain(mode=mode, coefficients=tuple(chain), operator=operator)


def dirichlet_solve(window: GraphWindow, rhs: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
    """Solve Δu = rhs on the interior with u fixed on the boundary."""

    interior = window.interior_mask
    boundary = ~interior
    if not np.any(boundary):
        raise PreconditionError("Dirichlet problems need a nonempty boundary")
    matrix = laplacian_matrix(window)[interior]
    inner = matrix[:, interior].tocsc()
    outer = matrix[:, boundary]
    target = np.asarray(rhs, dtype=float)[interior] - outer @ np.asarray(boundary_values, dtype=float)[boundary]
    out = np.array(boundary_values, dtype=float)
    out[interior] = np.atleast_1d(spsolve(inner, target))
    return out


def harmonic_extension(window: GraphWindow, boundary_values: VertexFunction) -> VertexFunction:
    """Harmonic function on the interior matching ``boundary_values`` on the boundary."""

    values = dirichlet_solve(window, np.zeros(len(window)), boundary_values.values)
    return VertexFunction(window, values)


def solve_hierarchy_window(window: GraphWindow, top: VertexFunction, length: int, mode: str) -> HierarchyChain:
    """Numeric hierarchy on a window: each lower coefficient solves its Poisson equation with zero boundary data."""

    _check_mode(mode)
    if length < 0:
        raise PreconditionError("chain length must be nonnegative")
    top_lap = laplacian_values(window, top.values)[window.interior_mask]
    if top_lap.size and np.max(np.abs(top_lap)) > CALORIC_TOLERANCE * (1.0 + top.max_abs()):
        raise PreconditionError("top coefficient is not harmonic on the window interior")

    chain = [top]
    zeros = np.zeros(len(window))
    for index in range(length - 1, -1, -1):
        rhs = chain_factor(mode, index) * chain[0].values
        chain.insert(0, VertexFunction(window, dirichlet_solve(window, rhs, zeros)))
    return HierarchyChain(mode=mode, coefficients=tuple(chain))


def assemble_ancient(chain: HierarchyChain) -> PolyField:
    """Assemble Σ p_i t^i (continuous) or Σ p_i C(−t, i) (discrete)."""

    field = chain.as_field()
    violations = chain.violations()
    if field.is_lattice:
        tolerance = 0.0
    else:
        tolerance = CALORIC_TOLERANCE * (1.0 + field_scale(field))
    for index, violation in enumerate(violations):
        if violation > tolerance:
            raise AssemblyError(index, violation)
    return field


def default_times(length: int, mode: str) -> Tuple:
    """Continuous: −1 + j/(l+1); discrete: −l − j, for j = 1..l+1."""

    _check_mode(mode)
    if mode == "continuous":
        return tuple(sp.Integer(-1) + sp.Rational(j, length + 1) for j in range(1, length + 2))
    return tuple(-length - j for j in range(1, length + 2))


def sample_slices(field: PolyField, times: Sequence) -> Tuple[Coefficient, ...]:
    return tuple(field.at(t) for t in times)


def extract_coefficients(
    samples: Sequence[Coefficient],
    times: Sequence,
    length: int,
    mode: str,
    operator: LatticeLaplacian | None = None,
) -> HierarchyChain:
    """Recover (p₀, …, p_l) from l+1 slices by solving the time-basis Vandermonde system."""

    _check_mode(mode)
    if len(samples) != length + 1 or len(times) != length + 1:
        raise PreconditionError(f"need {length + 1} slices and times, got {len(samples)} and {len(times)}")
    exact_times = [sp.Rational(t) for t in times]
    if len(set(exact_times)) != len(exact_times):
        raise SingularSystemError(f"sample times {list(times)} are not distinct")
    if mode == "discrete" and any(not t.is_integer or t >= -length for t in exact_times):
        raise PreconditionError(f"discrete extraction needs integer times below {-length}")

    basis = MODE_BASIS[mode]
    if all(isinstance(s, LatticePolynomial) for s in samples):
        matrix = sp.Matrix(length + 1, length + 1, lambda j, i: basis_value(basis, exact_times[j], i))
        inverse = matrix.inv()
        coefficients = tuple(
            combine(samples, [inverse[i, j] for j in range(length + 1)]) for i in range(length + 1)
        )
        return HierarchyChain(mode, coefficients, operator or LatticeLaplacian(samples[0].dimension))

    window = samples[0].window
    matrix = np.array([[float(basis_value(basis, t, i)) for i in range(length + 1)] for t in exact_times])
    stacked = np.vstack([s.values for s in samples])
    solved = np.linalg.solve(matrix, stacked)
    defined = np.logical_and.reduce([s.defined_mask for s in samples])
    coefficients = tuple(VertexFunction(window, row, defined=defined) for row in solved)
    return HierarchyChain(mode, coefficients)


@dataclass(frozen=True)
class VanishingReport:
    order: int
    holds: bool
    offending: Tuple[int, ...]


def vanishing_order(rate: float, alpha: float) -> int:
    """Smallest integer q with 4q > 2k + α + 2."""

    return math.floor((2 * Fraction(rate) + Fraction(alpha) + 2) / 4) + 1


def vanishing_order_check(field: PolyField, rate: float, alpha: float, window: GraphWindow | None = None) -> VanishingReport:
    """Check that every coefficient p_i with i ≥ q vanishes."""

    if not is_caloric(field, window):
        raise PreconditionError("vanishing-order check needs a caloric field")
    order = vanishing_order(rate, alpha)
    tolerance = 0.0 if field.is_lattice else CALORIC_TOLERANCE * (1.0 + field_scale(field, window))
    offending = []
    for index, coeff in enumerate(field.coefficients):
        if index < order:
            continue
        size = float(coeff.max_abs_coefficient()) if isinstance(coeff, LatticePolynomial) else coeff.max_abs()
        if size > tolerance:
            offending.append(index)
    return VanishingReport(order=order, holds=not offending, offending=tuple(offending))


def chain_space_dimension(
    dimension: int,
    degree: int,
    length: int,
    mode: str,
    operator: LatticeLaplacian | None = None,
) -> int:
    """Dimension of {(p₀, …, p_l) : deg p_i ≤ degree, hierarchy equations hold}, exactly."""

    _check_mode(mode)
    operator = operator or LatticeLaplacian(dimension)
    size = len(monomials(dimension, degree))
    lap = operator.matrix(degree, rows_degree=degree)
    blocks = length + 1
    system = sp.zeros(blocks * size, blocks * size)
    for index in range(blocks):
        system[index * size:(index + 1) * size, index * size:(index + 1) * size] = lap
        if index < length:
            shift = -chain_factor(mode, index) * sp.eye(size)
            system[index * size:(index + 1) * size, (index + 1) * size:(index + 2) * size] = shift
    rank = exact_rank(system)
    logger.debug("Chain system %dx%d has rank %d", system.rows, system.cols, rank)
    return blocks * size - rank


@dataclass(frozen=True)
class DimensionReport:
    dimension: int
    rate: float
    mode: str
    dim_harmonic: int
    dim_caloric: int
    bound: float
    holds: bool


def dimension_bound_report(
    dimension: int,
    rate: float,
    mode: str = "continuous",
    operator: LatticeLaplacian | None = None,
) -> DimensionReport:
    """Compare the polynomial-chain dimension of P_2k (or its discrete analogue) with (k+1)·dim H_2k."""

    if rate < 0:
        raise PreconditionError("growth rate must be nonnegative")
    degree = math.floor(2 * Fraction(rate))
    length = math.floor(Fraction(rate))
    harmonic = harmonic_polynomial_basis(dimension, degree, operator)
    dim_caloric = chain_space_dimension(dimension, degree, length, mode, operator)
    bound = (float(rate) + 1.0) * harmonic.size
    report = DimensionReport(
        dimension=dimension,
        rate=float(rate),
        mode=mode,
        dim_harmonic=harmonic.size,
        dim_caloric=dim_caloric,
        bound=bound,
        holds=dim_caloric <= bound,
    )
    logger.info(
        "Dimension d=%d k=%g (%s): dim H=%d, dim P=%d, bound %g",
        dimension,
        rate,
        mode,
        report.dim_harmonic,
        report.dim_caloric,
        bound,
    )
    return report


def parabolic_degree(field: PolyField) -> int:
    """max_j(deg a_j + 2j) over the monomial-in-time coefficients of a lattice field."""

    if not field.is_lattice:
        raise PreconditionError("window fields need an explicit growth rate")
    monomial = field.to_basis("monomial")
    return max((c.degree + 2 * j for j, c in enumerate(monomial) if not c.is_zero), default=0)


def certify_polynomial_growth(
    field: PolyField,
    metric: MetricData,
    radii: Sequence[float],
    growth_class: str = "P_k",
    rate: float | None = None,
) -> GrowthCertificate:
    """Measure C with |u| ≤ C(1+R)^k on Q_R for every sampled R.

    Lattice fields default to the parabolic degree max_j(deg a_j + 2j) of their
    monomial-in-time coefficients; window fields need an explicit rate.
    """

    monomial = field.to_basis("monomial")
    if rate is None:
        rate = parabolic_degree(field)

    array = PolyField(monomial, "monomial", field.operator).coefficient_array(metric.window)
    constant = 0.0
    for radius in radii:
        mask = ball_mask(metric, radius)
        powers = np.asarray([float(radius) ** (2 * j) for j in range(len(monomial))])
        bound = float(np.max(np.abs(array[:, mask]).T @ powers))
        constant = max(constant, bound / (1.0 + radius) ** rate)
    return GrowthCertificate(rate=float(rate), constant=constant, base=metric.base, growth_class=growth_class)
