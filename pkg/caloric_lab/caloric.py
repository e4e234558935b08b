"""Space-time fields on windows: heat evolution, caloric residuals and cylinder sums."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from .errors import CoverageError, DomainError, IntegrationError, PreconditionError
from .graph import GraphWindow, VertexId
from .lattice import LatticeLaplacian, LatticePolynomial, binomial_in_time
from .metrics import MetricData, ball_mask
from .operators import VertexFunction, gamma_values, laplacian_matrix, laplacian_values

logger = logging.getLogger(__name__)

QUANTITIES = ("u2", "gamma", "dt2", "Dt2")
BASES = ("monomial", "binomial")
MODES = ("continuous", "discrete")
MODE_BASIS = {"continuous": "monomial", "discrete": "binomial"}
BLOWUP_FACTOR = 1e6
CALORIC_TOLERANCE = 1e-9
AGGREGATE_TOLERANCE = 1e-9

Coefficient = Union[LatticePolynomial, VertexFunction]

_T = sp.Symbol("t")


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """u(x, t) on the window for integer times −steps..0; row r holds time r − steps."""

    window: GraphWindow
    steps: int
    values: np.ndarray
    valid: np.ndarray

    @property
    def times(self) -> range:
        return range(-self.steps, 1)

    def row(self, t: int) -> int:
        if not -self.steps <= t <= 0:
            raise DomainError(f"time {t} outside [{-self.steps}, 0]")
        return t + self.steps

    def at(self, t: int) -> VertexFunction:
        r = self.row(t)
        return VertexFunction(self.window, np.where(self.valid[r], self.values[r], 0.0), defined=self.valid[r])

    def value(self, vertex: VertexId, t: int) -> float:
        return self.at(t)[vertex]

    def scaled(self, factor: float) -> "DiscreteField":
        return DiscreteField(self.window, self.steps, self.values * factor, self.valid)


def march_backward_discrete(
    window: GraphWindow,
    u0: VertexFunction,
    steps: int,
    required: Sequence[VertexId] | None = None,
) -> DiscreteField:
    """Solve u(·, t−1) = (I − Δ)u(·, t) backwards from the slice at t = 0.

    Each step loses the vertices whose neighbours were not all valid, so the
    valid region shrinks by one hop per step. ``required`` vertices (default:
    the base) must survive every step.
    """

    if steps < 0:
        raise PreconditionError("steps must be nonnegative")
    if u0.window.vertices != window.vertices or not u0.is_total:
        raise DomainError("initial slice must be defined on every window vertex")
    required_pos = np.asarray([window.position(v) for v in (required or (window.base,))], dtype=np.int64)

    n = len(window)
    values = np.full((steps + 1, n), np.nan)
    valid = np.zeros((steps + 1, n), dtype=bool)
    values[steps] = u0.values
    valid[steps] = True

    rows, cols, _ = window.edge_arrays
    for k in range(steps):
        r = steps - k
        current, ok = values[r], valid[r]
        blocked = np.bincount(rows, weights=(~ok[cols]).astype(float), minlength=n) > 0
        keep = ok & window.interior_mask & ~blocked
        lap = laplacian_values(window, np.where(ok, current, 0.0))
        values[r - 1] = np.where(keep, current - lap, np.nan)
        valid[r - 1] = keep
        if not np.all(keep[required_pos]):
            raise CoverageError(f"backward march leaves the window at t={-(k + 1)}; increase hops")
        logger.debug("March step t=%d: %d valid vertices", -(k + 1), int(keep.sum()))

    return DiscreteField(window=window, steps=steps, values=values, valid=valid)


@dataclass(frozen=True, eq=False)
class SampledField:
    window: GraphWindow
    times: np.ndarray
    values: np.ndarray

    def at(self, index: int) -> VertexFunction:
        return VertexFunction(self.window, self.values[index])

    def mass(self, index: int) -> float:
        return math.fsum(self.values[index] * self.window.measure_array)


def evolve_forward_continuous(window: GraphWindow, u0: VertexFunction, t_end: float, dt: float) -> SampledField:
    """Integrate ∂_t u = Δu forward with RK45, boundary values frozen."""

    if t_end < 0 or dt <= 0:
        raise PreconditionError("need t_end ≥ 0 and dt > 0")
    if u0.window.vertices != window.vertices or not u0.is_total:
        raise DomainError("initial data must be defined on every window vertex")

    steps = max(1, int(round(t_end / dt)))
    times = np.linspace(0.0, t_end, steps + 1)
    if t_end == 0:
        return SampledField(window, times[:1], u0.values[np.newaxis, :].copy())

    matrix = laplacian_matrix(window)
    solution = solve_ivp(
        lambda _t, y: matrix @ y,
        (0.0, t_end),
        u0.values,
        method="RK45",
        t_eval=times,
        max_step=dt,
        rtol=1e-10,
        atol=1e-12,
    )
    if not solution.success:
        raise IntegrationError(f"forward evolution failed: {solution.message}")
    values = solution.y.T
    initial = float(np.max(np.abs(u0.values)))
    if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > BLOWUP_FACTOR * max(initial, 1e-300):
        raise IntegrationError("forward evolution blew up")
    logger.info("Evolved %d vertices to t=%g in %d samples", len(window), t_end, len(times))
    return SampledField(window, times, values)


def basis_value(basis: str, t, i: int):
    if basis == "monomial":
        return t**i
    value = t**0
    for r in range(i):
        value *= -t - r
    return value / math.factorial(i)


def combine(coefficients: Sequence[Coefficient], weights: Sequence) -> Coefficient:
    total = coefficients[0] * weights[0]
    for coeff, weight in zip(coefficients[1:], weights[1:]):
        total = total + coeff * weight
    return total


@lru_cache(maxsize=None)
def _conversion(degree: int) -> Tuple[sp.Matrix, sp.Matrix]:
    """Rows of the first matrix expand C(−t, i) in powers of t; the second is its inverse."""

    matrix = sp.zeros(degree + 1, degree + 1)
    for i in range(degree + 1):
        poly = sp.Poly(binomial_in_time(_T, i), _T)
        for (power,), coeff in poly.terms():
            matrix[i, power] = coeff
    return matrix, matrix.inv()


@dataclass(frozen=True, eq=False)
class PolyField:
    """u(x, t) = Σ p_i(x) b_i(t) with b_i = t^i (monomial) or C(−t, i) (binomial).

    The basis also selects the heat equation the residual checks: monomial
    fields are continuous-time solutions, binomial fields discrete-time ones.
    """

    coefficients: Tuple[Coefficient, ...]
    basis: str = "monomial"
    operator: LatticeLaplacian | None = None

    def __post_init__(self) -> None:
        coefficients = tuple(self.coefficients)
        object.__setattr__(self, "coefficients", coefficients)
        if not coefficients:
            raise PreconditionError("a polynomial field needs at least one coefficient")
        if self.basis not in BASES:
            raise PreconditionError(f"unknown time basis '{self.basis}'")
        if all(isinstance(c, LatticePolynomial) for c in coefficients):
            dims = {c.dimension for c in coefficients}
            if len(dims) != 1:
                raise DomainError("coefficients live in different dimensions")
            if self.operator is None:
                object.__setattr__(self, "operator", LatticeLaplacian(dims.pop()))
        elif all(isinstance(c, VertexFunction) for c in coefficients):
            if len({c.window.vertices for c in coefficients}) != 1:
                raise DomainError("coefficients live on different windows")
        else:
            raise DomainError("coefficients must all be lattice polynomials or all vertex functions")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def mode(self) -> str:
        return "continuous" if self.basis == "monomial" else "discrete"

    @property
    def is_lattice(self) -> bool:
        return isinstance(self.coefficients[0], LatticePolynomial)

    @property
    def window(self) -> GraphWindow | None:
        return None if self.is_lattice else self.coefficients[0].window

    def _zero(self) -> Coefficient:
        first = self.coefficients[0]
        if isinstance(first, LatticePolynomial):
            return LatticePolynomial.zero(first.dimension)
        return VertexFunction.constant(first.window, 0.0)

    def _weight(self, value):
        return sp.Rational(value) if self.is_lattice else float(value)

    def time_weights(self, t) -> List:
        t = self._weight(t)
        return [basis_value(self.basis, t, i) for i in range(self.degree + 1)]

    def at(self, t) -> Coefficient:
        """The slice u(·, t)."""

        return combine(self.coefficients, self.time_weights(t))

    def on_window(self, window: GraphWindow) -> "PolyField":
        if not self.is_lattice:
            if self.window.vertices != window.vertices:
                raise DomainError("field lives on a different window")
            return self
        coords = window.coords_array
        coefficients = tuple(VertexFunction(window, c.evaluate(coords)) for c in self.coefficients)
        return PolyField(coefficients, self.basis)

    def coefficient_array(self, window: GraphWindow) -> np.ndarray:
        return np.vstack([c.values for c in self.on_window(window).coefficients])

    def to_basis(self, basis: str) -> Tuple[Coefficient, ...]:
        """Coefficients of the same function in the requested time basis."""

        if basis not in BASES:
            raise PreconditionError(f"unknown time basis '{basis}'")
        if basis == self.basis:
            return self.coefficients
        forward, inverse = _conversion(self.degree)
        matrix = forward if self.basis == "binomial" else inverse
        out = []
        for j in range(self.degree + 1):
            weights = [self._weight(matrix[i, j]) for i in range(self.degree + 1)]
            out.append(combine(self.coefficients, weights))
        return tuple(out)

    def scaled(self, factor: float) -> "PolyField":
        return PolyField(tuple(c * factor for c in self.coefficients), self.basis, self.operator)


def time_derivative(field: PolyField, kind: str | None = None) -> PolyField:
    """∂_t u (continuous) or D_t u (discrete) as a coefficient shift."""

    kind = kind or field.mode
    if kind == "continuous":
        coeffs = field.to_basis("monomial")
        shifted = [coeffs[j + 1] * (j + 1) for j in range(len(coeffs) - 1)]
        basis = "monomial"
    elif kind == "discrete":
        coeffs = field.to_basis("binomial")
        shifted = [-coeffs[j + 1] for j in range(len(coeffs) - 1)]
        basis = "binomial"
    else:
        raise PreconditionError(f"unknown time derivative '{kind}'")
    return PolyField(tuple(shifted) or (field._zero(),), basis, field.operator)


def _equation_factor(basis: str, i: int) -> int:
    return i + 1 if basis == "monomial" else -1


def equation_violations(field: PolyField, window: GraphWindow | None = None) -> List[float]:
    """Per-equation violation |Δp_i − c_i p_{i+1}| / |c_i| (|Δp_l| for the top).

    Lattice fields without a window are checked exactly on the coefficients;
    otherwise the check runs on the window interior.
    """

    l = field.degree
    if field.is_lattice and window is None:
        out = []
        for i, coeff in enumerate(field.coefficients):
            image = field.operator.apply(coeff)
            if i < l:
                factor = _equation_factor(field.basis, i)
                image = image - field.coefficients[i + 1] * factor
                out.append(float(image.max_abs_coefficient() / abs(factor)))
            else:
                out.append(float(image.max_abs_coefficient()))
        return out

    window = window or field.window
    array = field.coefficient_array(window)
    interior = window.interior_mask
    out = []
    for i in range(l + 1):
        image = laplacian_values(window, array[i])[interior]
        factor = 1
        if i < l:
            factor = _equation_factor(field.basis, i)
            image = image - factor * array[i + 1][interior]
        out.append(float(np.max(np.abs(image)) / abs(factor)) if image.size else 0.0)
    return out


def _grid_residual(field: DiscreteField) -> float:
    worst = 0.0
    for t in field.times[1:]:
        r = field.row(t)
        mask = field.valid[r - 1]
        if not np.any(mask):
            continue
        lap = laplacian_values(field.window, np.where(field.valid[r], field.values[r], 0.0))
        defect = field.values[r] - field.values[r - 1] - lap
        worst = max(worst, float(np.max(np.abs(defect[mask]))))
    return worst


def residual(field: DiscreteField | PolyField, window: GraphWindow | None = None) -> float:
    """Largest violation of the heat equation; 0 means exactly caloric."""

    if isinstance(field, DiscreteField):
        return _grid_residual(field)
    return max(equation_violations(field, window))


def field_scale(field: DiscreteField | PolyField, window: GraphWindow | None = None) -> float:
    if isinstance(field, DiscreteField):
        return float(np.max(np.abs(field.values[field.valid]))) if field.valid.any() else 0.0
    if field.is_lattice and window is None:
        return float(max(c.max_abs_coefficient() for c in field.coefficients))
    return float(np.max(np.abs(field.coefficient_array(window or field.window))))


def is_caloric(field: DiscreteField | PolyField, window: GraphWindow | None = None) -> bool:
    value = residual(field, window)
    if isinstance(field, PolyField) and field.is_lattice and window is None:
        return value == 0
    return value <= CALORIC_TOLERANCE * (1.0 + field_scale(field, window))


@dataclass(frozen=True)
class Cylinder:
    """Q_R = B_R × [−R², 0], or its integer-time version in discrete mode."""

    base: VertexId
    radius: float
    mode: str = "continuous"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise PreconditionError(f"unknown mode '{self.mode}'")
        if not self.radius > 0:
            raise PreconditionError(f"cylinder radius must be positive, got {self.radius}")
        if self.mode == "discrete" and float(self.radius) != int(self.radius):
            raise PreconditionError(f"discrete cylinders need an integer radius, got {self.radius}")

    @property
    def interval(self) -> Tuple:
        if self.mode == "discrete":
            return -int(self.radius) ** 2, 0
        return -sp.Rational(self.radius) ** 2, sp.Integer(0)


def _time_function(basis: str, i: int) -> sp.Expr:
    return _T**i if basis == "monomial" else binomial_in_time(_T, i)


@lru_cache(maxsize=256)
def _time_gram(basis: str, degree: int, start, end, mode: str) -> np.ndarray:
    """G_ij = ∫ b_i b_j dt (continuous) or Σ_t b_i b_j (discrete) over [start, end], exactly."""

    gram = np.zeros((degree + 1, degree + 1))
    for i in range(degree + 1):
        for j in range(i, degree + 1):
            integrand = sp.expand(_time_function(basis, i) * _time_function(basis, j))
            if mode == "continuous":
                value = sp.integrate(integrand, (_T, start, end))
            else:
                value = sp.summation(integrand, (_T, start, end))
            gram[i, j] = gram[j, i] = float(value)
    return gram


def _spatial_gram(window: GraphWindow, array: np.ndarray, quantity: str, mask: np.ndarray) -> np.ndarray:
    if quantity == "gamma":
        rows, cols, weights = window.edge_arrays
        keep = mask[rows]
        grads = array[:, cols[keep]] - array[:, rows[keep]]
        return 0.5 * (grads * weights[keep]) @ grads.T
    selected = array[:, mask]
    return (selected * window.measure_array[mask]) @ selected.T


def _check_window(window: GraphWindow, metric: MetricData) -> None:
    if metric.window.vertices != window.vertices:
        raise DomainError("metric was built on a different window")


def _poly_aggregate(field: PolyField, window, mask, quantity, start, end, mode) -> float:
    if quantity == "dt2":
        field, quantity = time_derivative(field, "continuous"), "u2"
    elif quantity == "Dt2":
        field, quantity = time_derivative(field, "discrete"), "u2"
    if mode == "continuous":
        start, end = sp.Rational(start), sp.Rational(end)
    array = field.coefficient_array(window)
    gram = _time_gram(field.basis, field.degree, start, end, mode)
    spatial = _spatial_gram(window, array, quantity, mask)
    value = float(np.sum(spatial * gram))
    scale = float(np.sum(np.abs(spatial) * np.abs(gram)))
    if value < -AGGREGATE_TOLERANCE * scale:
        raise PreconditionError(f"negative {quantity} aggregate {value:.6g}; a Gram matrix is not positive")
    return max(0.0, value)


def _grid_aggregate(field: DiscreteField, window, mask, quantity, start, end) -> float:
    if quantity == "dt2":
        raise PreconditionError("grid fields carry no continuous time derivative")
    first = start - 1 if quantity == "Dt2" else start
    if first < -field.steps:
        raise CoverageError(f"field covers times ≥ {-field.steps}, need {first}")
    rows, cols, _ = window.edge_arrays
    needed = mask
    if quantity == "gamma":
        needed = mask | (np.bincount(cols, weights=mask[rows].astype(float), minlength=len(window)) > 0)

    measure = window.measure_array[mask]
    totals = []
    for t in range(start, end + 1):
        r = field.row(t)
        if not np.all(field.valid[r][needed]) or (quantity == "Dt2" and not np.all(field.valid[r - 1][mask])):
            raise CoverageError(f"field is not valid on the cylinder at t={t}")
        current = field.values[r]
        if quantity == "u2":
            density = current[mask] ** 2
        elif quantity == "gamma":
            density = gamma_values(window, np.where(field.valid[r], current, 0.0))[mask]
        else:
            density = (current[mask] - field.values[r - 1][mask]) ** 2
        totals.append(math.fsum(density * measure))
    return math.fsum(totals)


def interval_aggregate(
    field: DiscreteField | PolyField,
    window: GraphWindow,
    metric: MetricData,
    quantity: str,
    radius: float,
    start,
    end,
    mode: str,
) -> float:
    """Σ_{x∈B_R} m_x of ``quantity`` integrated (or summed) over [start, end]."""

    if quantity not in QUANTITIES:
        raise PreconditionError(f"unknown quantity '{quantity}'")
    if mode not in MODES:
        raise PreconditionError(f"unknown mode '{mode}'")
    if start > end:
        raise PreconditionError(f"empty time interval [{start}, {end}]")
    _check_window(window, metric)
    mask = ball_mask(metric, radius)

    if mode == "discrete":
        if int(start) != start or int(end) != end:
            raise PreconditionError("discrete aggregates need integer time bounds")
        start, end = int(start), int(end)
    if isinstance(field, DiscreteField):
        if mode != "discrete":
            raise PreconditionError("grid fields aggregate only in discrete mode")
        return _grid_aggregate(field, window, mask, quantity, start, end)
    return _poly_aggregate(field, window, mask, quantity, start, end, mode)


def cylinder_aggregate(
    field: DiscreteField | PolyField,
    window: GraphWindow,
    metric: MetricData,
    quantity: str,
    cylinder: Cylinder,
) -> float:
    if cylinder.base != metric.base:
        raise PreconditionError("cylinder and metric use different base vertices")
    start, end = cylinder.interval
    return interval_aggregate(field, window, metric, quantity, cylinder.radius, start, end, cylinder.mode)
