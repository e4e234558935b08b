"""Pointwise discrete calculus on graph windows."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import DomainError, PreconditionError
from .graph import GraphWindow, VertexId


@dataclass(frozen=True, eq=False)
class VertexFunction:
    """Real values on the vertices of a window, aligned with ``window.vertices``.

    ``defined`` marks where the values are meaningful; operator outputs such as
    ``Δf`` are undefined on the boundary.
    """

    window: GraphWindow
    values: np.ndarray
    finite_support: bool = False
    defined: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.window),):
            raise DomainError(f"expected {len(self.window)} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        if self.finite_support and np.any(values[~self.window.interior_mask] != 0):
            raise PreconditionError("finite-support function is nonzero on the boundary")

    @classmethod
    def from_coords(cls, window: GraphWindow, fn: Callable[..., float]) -> "VertexFunction":
        return cls(window, np.asarray([fn(*row) for row in window.coords_array], dtype=float))

    @classmethod
    def from_mapping(cls, window: GraphWindow, mapping: Mapping[VertexId, float]) -> "VertexFunction":
        missing = [v for v in window.vertices if v not in mapping]
        if missing:
            raise DomainError(f"function is missing {len(missing)} window vertices, e.g. {missing[0]}")
        return cls(window, np.asarray([mapping[v] for v in window.vertices], dtype=float))

    @classmethod
    def constant(cls, window: GraphWindow, value: float) -> "VertexFunction":
        return cls(window, np.full(len(window), float(value)))

    @classmethod
    def indicator(cls, window: GraphWindow, vertex: VertexId) -> "VertexFunction":
        values = np.zeros(len(window))
        values[window.position(vertex)] = 1.0
        return cls(window, values)

    @property
    def defined_mask(self) -> np.ndarray:
        if self.defined is None:
            return np.ones(len(self.window), dtype=bool)
        return self.defined

    @property
    def is_total(self) -> bool:
        return self.defined is None or bool(np.all(self.defined))

    @property
    def support(self) -> frozenset:
        return frozenset(v for v, value in zip(self.window.vertices, self.values) if value != 0)

    def __getitem__(self, vertex: VertexId) -> float:
        pos = self.window.position(vertex)
        if not self.defined_mask[pos]:
            raise DomainError(f"function is undefined at vertex {vertex}")
        return float(self.values[pos])

    def with_finite_support(self) -> "VertexFunction":
        return replace(self, finite_support=True)

    def _combine(self, other: "VertexFunction | float", op) -> "VertexFunction":
        if isinstance(other, VertexFunction):
            if other.window.vertices != self.window.vertices:
                raise DomainError("functions live on different windows")
            defined = None
            if self.defined is not None or other.defined is not None:
                defined = self.defined_mask & other.defined_mask
            return VertexFunction(self.window, op(self.values, other.values), defined=defined)
        return VertexFunction(self.window, op(self.values, float(other)), defined=self.defined)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def max_abs(self) -> float:
        mask = self.defined_mask
        return float(np.max(np.abs(self.values[mask]))) if np.any(mask) else 0.0


def _require_total(window: GraphWindow, f: VertexFunction) -> None:
    if f.window.vertices != window.vertices:
        raise DomainError("function is not defined on this window")
    if not f.is_total:
        raise DomainError("function is missing values on some window vertices")


def laplacian_values(window: GraphWindow, values: np.ndarray) -> np.ndarray:
    """Raw Δ on an aligned value array; boundary entries come back as NaN."""

    rows, cols, weights = window.edge_arrays
    flux = np.bincount(rows, weights=weights * (values[cols] - values[rows]), minlength=len(window))
    out = flux / window.measure_array
    out[~window.interior_mask] = np.nan
    return out


def gamma_values(window: GraphWindow, values: np.ndarray, other: np.ndarray | None = None) -> np.ndarray:
    """Raw Γ(f, g); ``other`` defaults to ``values``. Boundary entries are NaN."""

    rows, cols, weights = window.edge_arrays
    grad = values[cols] - values[rows]
    grad_other = grad if other is None else other[cols] - other[rows]
    energy = np.bincount(rows, weights=weights * grad * grad_other, minlength=len(window))
    out = 0.5 * energy / window.measure_array
    out[~window.interior_mask] = np.nan
    return out


def laplacian_matrix(window: GraphWindow) -> sparse.csr_matrix:
    """Sparse Δ with zero rows on the boundary."""

    n = len(window)
    weights = window.weight_matrix()
    degree = np.asarray(weights.sum(axis=1)).ravel()
    scale = np.where(window.interior_mask, 1.0 / window.measure_array, 0.0)
    return (sparse.diags(scale) @ (weights - sparse.diags(degree))).tocsr()


def nabla(f: VertexFunction, x: VertexId, y: VertexId) -> float:
    return f[y] - f[x]


def laplacian_apply(window: GraphWindow, f: VertexFunction) -> VertexFunction:
    _require_total(window, f)
    return VertexFunction(window, laplacian_values(window, f.values), defined=window.interior_mask)


def gamma(window: GraphWindow, f: VertexFunction) -> VertexFunction:
    _require_total(window, f)
    return VertexFunction(window, gamma_values(window, f.values), defined=window.interior_mask)


def green_sides(window: GraphWindow, f: VertexFunction, g: VertexFunction) -> tuple[float, float]:
    """Both sides of Green's formula; ``g`` must vanish on the boundary."""

    _require_total(window, f)
    _require_total(window, g)
    if not g.finite_support:
        g = g.with_finite_support()

    rows, cols, weights = window.edge_arrays
    lhs = 0.5 * math.fsum(weights * (f.values[cols] - f.values[rows]) * (g.values[cols] - g.values[rows]))
    interior = window.interior_mask
    lap = laplacian_values(window, f.values)
    rhs = -math.fsum(lap[interior] * g.values[interior] * window.measure_array[interior])
    return lhs, rhs


def green_identity_residual(window: GraphWindow, f: VertexFunction, g: VertexFunction) -> float:
    lhs, rhs = green_sides(window, f, g)
    return abs(lhs - rhs)


def divergence_residual(window: GraphWindow, f: VertexFunction) -> float:
    """|Σ_interior Δf m| for ``f`` supported at least one hop inside the interior."""

    _require_total(window, f)
    rows, cols, _ = window.edge_arrays
    outside = ~window.interior_mask
    touches_boundary = np.bincount(rows, weights=outside[cols].astype(float), minlength=len(window)) > 0
    if np.any((f.values != 0) & (outside | touches_boundary)):
        raise PreconditionError("support must keep a one-hop buffer from the boundary")
    interior = window.interior_mask
    lap = laplacian_values(window, f.values)
    return abs(math.fsum(lap[interior] * window.measure_array[interior]))


@dataclass(frozen=True)
class TimeSeries:
    """Values on the contiguous integer times ``start .. start + len(values) - 1`` ≤ 0."""

    start: int
    values: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise PreconditionError("a time series needs at least one value")
        if self.end > 0:
            raise DomainError(f"time series must end at or before 0, ends at {self.end}")

    @classmethod
    def from_function(cls, fn: Callable[[int], float], start: int, end: int = 0) -> "TimeSeries":
        return cls(start, tuple(fn(t) for t in range(start, end + 1)))

    @property
    def end(self) -> int:
        return self.start + len(self.values) - 1

    def __contains__(self, t: object) -> bool:
        return isinstance(t, int) and self.start <= t <= self.end

    def __getitem__(self, t: int):
        if t not in self:
            raise DomainError(f"time {t} outside [{self.start}, {self.end}]")
        return self.values[t - self.start]


def dt_difference(series: TimeSeries, t: int):
    """D_t g(t) = g(t) − g(t−1)."""

    return series[t] - series[t - 1]


def dt_square_defect(series: TimeSeries, t: int):
    """D_t(g²)(t) − 2g(t)D_tg(t) + (D_tg(t))², identically zero."""

    current = series[t]
    step = dt_difference(series, t)
    square_step = current * current - series[t - 1] * series[t - 1]
    return square_step - 2 * current * step + step * step


def telescope_check(series: TimeSeries, a: int, b: int):
    if a > b:
        raise PreconditionError(f"empty range [{a}, {b}]")
    total = sum(dt_difference(series, t) for t in range(a, b + 1))
    return abs(total - (series[b] - series[a - 1]))


def pigeonhole_index(values: Sequence[float]) -> int:
    """Smallest index j with a_j ≤ mean(a)."""

    if len(values) == 0:
        raise PreconditionError("pigeonhole_index needs at least one value")
    exact = [Fraction(v) for v in values]
    total = sum(exact)
    n = len(exact)
    for index, value in enumerate(exact):
        if value * n <= total:
            return index
    raise AssertionError("mean inequality failed")  # unreachable
