"""Exact binomial calculus and discrete harmonic polynomials on ℤ^d.

Everything here runs over the rationals: ranks and kernel dimensions must not
depend on a floating point tolerance.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from math import comb
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np
import sympy as sp
from sympy.polys.domains import QQ
from sympy.polys.matrices import DomainMatrix

from . import settings
from .errors import DomainError, PreconditionError, ResourceError

logger = logging.getLogger(__name__)

Exponents = Tuple[int, ...]

_ALIASES = ("x", "y", "z")


def lattice_symbols(dimension: int) -> Tuple[sp.Symbol, ...]:
    return tuple(sp.Symbol(f"x{axis + 1}") for axis in range(dimension))


def binomial(n: int, i: int) -> sp.Rational:
    """n(n−1)⋯(n−i+1)/i!, zero for i < 0 and for 0 ≤ n < i."""

    if i < 0:
        return sp.Integer(0)
    numerator = sp.Integer(1)
    for r in range(i):
        numerator *= n - r
    return sp.Rational(numerator, sp.factorial(i))


def binomial_in_time(t: sp.Symbol, i: int) -> sp.Expr:
    """C(−t, i) as a polynomial in ``t``."""

    expr = sp.Integer(1)
    for r in range(i):
        expr *= -t - r
    return sp.expand(expr / sp.factorial(i))


def binomial_expansion(values: Sequence) -> Tuple:
    """Newton coefficients a_i = δ^i f(0) with f(n) = Σ a_i C(n, i) on the samples f(0..N−1)."""

    coefficients = []
    row = list(values)
    while row:
        coefficients.append(row[0])
        row = [b - a for a, b in zip(row, row[1:])]
    return tuple(coefficients)


def forward_difference_order(values: Sequence) -> int:
    """Smallest q with δ^q f ≡ 0 on the samples (an exhausted difference table counts as zero)."""

    row = list(values)
    order = 0
    while row and any(v != 0 for v in row):
        row = [b - a for a, b in zip(row, row[1:])]
        order += 1
    return order


def _exponents(dimension: int, total: int) -> Iterator[Exponents]:
    if dimension == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _exponents(dimension - 1, total - head):
            yield (head,) + tail


def monomials(dimension: int, degree: int) -> List[Exponents]:
    """All exponent tuples of total degree ≤ ``degree``, ordered by degree then lexicographically."""

    if degree < 0:
        return []
    count = comb(dimension + degree, dimension)
    if count > settings.MAX_MONOMIALS:
        raise ResourceError(
            f"{count} monomials in dimension {dimension} up to degree {degree} exceed the cap {settings.MAX_MONOMIALS}"
        )
    return [exps for total in range(degree + 1) for exps in _exponents(dimension, total)]


@dataclass(frozen=True)
class LatticePolynomial:
    """Sparse polynomial on ℤ^d with exact rational coefficients."""

    dimension: int
    terms: Mapping[Exponents, sp.Rational] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cleaned: Dict[Exponents, sp.Rational] = {}
        for exps, coeff in self.terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.dimension or min(exps, default=0) < 0:
                raise DomainError(f"exponent {exps} does not fit dimension {self.dimension}")
            value = sp.Rational(coeff)
            if value != 0:
                cleaned[exps] = cleaned.get(exps, sp.Integer(0)) + value
        object.__setattr__(self, "terms", {k: v for k, v in sorted(cleaned.items()) if v != 0})

    @classmethod
    def zero(cls, dimension: int) -> "LatticePolynomial":
        return cls(dimension, {})

    @classmethod
    def constant(cls, dimension: int, value) -> "LatticePolynomial":
        return cls(dimension, {(0,) * dimension: value})

    @classmethod
    def from_expr(cls, expr, dimension: int) -> "LatticePolynomial":
        """Parse a polynomial in ``x1..xd`` (``x``, ``y``, ``z`` accepted for the first axes)."""

        symbols = lattice_symbols(dimension)
        local = {f"x{axis + 1}": sym for axis, sym in enumerate(symbols)}
        local.update({alias: sym for alias, sym in zip(_ALIASES, symbols)})
        parsed = sp.sympify(expr, locals=local) if isinstance(expr, str) else sp.sympify(expr)
        extra = parsed.free_symbols - set(symbols)
        if extra:
            raise DomainError(f"unknown symbols {sorted(map(str, extra))} for dimension {dimension}")
        poly = sp.Poly(parsed, *symbols)
        terms = {}
        for exps, coeff in poly.terms():
            if not (coeff.is_Rational or coeff.is_Float):
                raise DomainError(f"coefficient {coeff} is not rational")
            terms[exps] = sp.nsimplify(coeff, rational=True) if coeff.is_Float else coeff
        return cls(dimension, terms)

    @property
    def degree(self) -> int:
        """Total degree; −1 for the zero polynomial."""

        return max((sum(exps) for exps in self.terms), default=-1)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def max_abs_coefficient(self) -> sp.Rational:
        return max((abs(c) for c in self.terms.values()), default=sp.Integer(0))

    def _check(self, other: "LatticePolynomial") -> None:
        if other.dimension != self.dimension:
            raise DomainError("polynomials live in different dimensions")

    def __add__(self, other: "LatticePolynomial") -> "LatticePolynomial":
        self._check(other)
        terms = dict(self.terms)
        for exps, coeff in other.terms.items():
            terms[exps] = terms.get(exps, sp.Integer(0)) + coeff
        return LatticePolynomial(self.dimension, terms)

    def __neg__(self) -> "LatticePolynomial":
        return self * -1

    def __sub__(self, other: "LatticePolynomial") -> "LatticePolynomial":
        return self + (-other)

    def __mul__(self, scalar) -> "LatticePolynomial":
        factor = sp.Rational(scalar)
        return LatticePolynomial(self.dimension, {k: v * factor for k, v in self.terms.items()})

    __rmul__ = __mul__

    def to_expr(self) -> sp.Expr:
        symbols = lattice_symbols(self.dimension)
        return sp.Add(*[coeff * sp.Mul(*[s**e for s, e in zip(symbols, exps)]) for exps, coeff in self.terms.items()])

    def __str__(self) -> str:
        return str(self.to_expr())

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        """Float values at the rows of an ``(n, d)`` integer coordinate array."""

        coords = np.asarray(coords, dtype=float).reshape(-1, self.dimension)
        out = np.zeros(coords.shape[0])
        for exps, coeff in self.terms.items():
            out += float(coeff) * np.prod(coords ** np.asarray(exps, dtype=float), axis=1)
        return out

    def evaluate_exact(self, point: Sequence[int]) -> sp.Rational:
        total = sp.Integer(0)
        for exps, coeff in self.terms.items():
            term = coeff
            for c, e in zip(point, exps):
                term *= sp.Integer(c) ** e
            total += term
        return total

    def vector(self, basis: Sequence[Exponents]) -> List[sp.Rational]:
        index = {exps: pos for pos, exps in enumerate(basis)}
        out = [sp.Integer(0)] * len(basis)
        for exps, coeff in self.terms.items():
            if exps not in index:
                raise DomainError(f"term {exps} outside the monomial basis")
            out[index[exps]] = coeff
        return out

    @classmethod
    def from_vector(cls, dimension: int, basis: Sequence[Exponents], vector: Sequence) -> "LatticePolynomial":
        return cls(dimension, {exps: value for exps, value in zip(basis, vector)})


@dataclass(frozen=True)
class LatticeLaplacian:
    """Constant-coefficient Laplacian on ℤ^d: scale · Σ_axis (f(x+e)+f(x−e)−2f(x)).

    ``scale`` is w/m, so unit ℤ^d has scale 1 and its normalized form 1/(2d).
    """

    dimension: int
    scale: sp.Rational = sp.Integer(1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale", sp.Rational(self.scale))
        if self.scale <= 0:
            raise DomainError("lattice Laplacian scale must be positive")

    def apply(self, poly: LatticePolynomial) -> LatticePolynomial:
        if poly.dimension != self.dimension:
            raise DomainError("polynomial dimension does not match the lattice")
        out: Dict[Exponents, sp.Rational] = defaultdict(lambda: sp.Integer(0))
        for exps, coeff in poly.terms.items():
            for axis, power in enumerate(exps):
                for drop in range(2, power + 1, 2):
                    lowered = list(exps)
                    lowered[axis] -= drop
                    out[tuple(lowered)] += 2 * coeff * binomial(power, drop) * self.scale
        return LatticePolynomial(self.dimension, out)

    def matrix(self, degree: int, rows_degree: int | None = None) -> sp.Matrix:
        """Exact matrix of Δ from degree ≤ ``degree`` into degree ≤ ``rows_degree`` (default degree − 2)."""

        cols = monomials(self.dimension, degree)
        rows = monomials(self.dimension, degree - 2 if rows_degree is None else rows_degree)
        row_index = {exps: pos for pos, exps in enumerate(rows)}
        matrix = sp.zeros(len(rows), len(cols))
        for col, exps in enumerate(cols):
            image = self.apply(LatticePolynomial(self.dimension, {exps: 1}))
            for target, coeff in image.terms.items():
                matrix[row_index[target], col] = coeff
        return matrix


def rref(matrix: sp.Matrix) -> Tuple[sp.Matrix, Tuple[int, ...]]:
    """Reduced row echelon form over QQ."""

    if matrix.rows == 0 or matrix.cols == 0:
        return matrix, ()
    reduced, pivots = DomainMatrix.from_Matrix(matrix).convert_to(QQ).rref()
    return reduced.to_Matrix(), tuple(pivots)


def exact_rank(matrix: sp.Matrix) -> int:
    return len(rref(matrix)[1])


def nullspace(matrix: sp.Matrix) -> List[List[sp.Rational]]:
    """Kernel basis read off the RREF: one vector per free column."""

    reduced, pivots = rref(matrix)
    free = [col for col in range(matrix.cols) if col not in pivots]
    basis = []
    for col in free:
        vector = [sp.Integer(0)] * matrix.cols
        vector[col] = sp.Integer(1)
        for row, pivot in enumerate(pivots):
            vector[pivot] = -reduced[row, col]
        basis.append(vector)
    return basis


@dataclass(frozen=True)
class HarmonicBasis:
    dimension: int
    degree: int
    polynomials: Tuple[LatticePolynomial, ...]

    @property
    def size(self) -> int:
        return len(self.polynomials)


def harmonic_polynomial_basis(dimension: int, degree: int, operator: LatticeLaplacian | None = None) -> HarmonicBasis:
    """Basis of {p : deg p ≤ degree, Δp ≡ 0 on ℤ^d}."""

    if dimension < 1 or degree < 0:
        raise PreconditionError("need dimension ≥ 1 and degree ≥ 0")
    operator = operator or LatticeLaplacian(dimension)
    basis = monomials(dimension, degree)
    if degree < 2:
        vectors = [[sp.Integer(int(i == j)) for j in range(len(basis))] for i in range(len(basis))]
    else:
        vectors = nullspace(operator.matrix(degree))
    polys = tuple(LatticePolynomial.from_vector(dimension, basis, v) for v in vectors)
    logger.debug("Harmonic space d=%d deg≤%d: %d of %d monomials", dimension, degree, len(polys), len(basis))
    return HarmonicBasis(dimension=dimension, degree=degree, polynomials=polys)


def solve_poisson(operator: LatticeLaplacian, rhs: LatticePolynomial) -> LatticePolynomial:
    """Solution of Δp = rhs of degree ≤ deg rhs + 2, orthogonal to the harmonic polynomials of that degree.

    The minimum-norm solution c = Lᵀ(LLᵀ)⁻¹f in monomial coefficients.
    """

    if rhs.is_zero:
        return LatticePolynomial.zero(operator.dimension)
    degree = rhs.degree + 2
    lap = operator.matrix(degree)
    target = sp.Matrix(rhs.vector(monomials(operator.dimension, degree - 2)))
    gram = lap * lap.T
    reduced, pivots = rref(gram.row_join(target))
    if pivots != tuple(range(gram.rows)):
        raise PreconditionError("Poisson system is singular")
    solution = lap.T * reduced[:, gram.cols]
    return LatticePolynomial.from_vector(operator.dimension, monomials(operator.dimension, degree), list(solution))
