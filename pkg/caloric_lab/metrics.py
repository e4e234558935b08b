"""Intrinsic metrics on windows: construction, checks, balls and cut-offs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Mapping, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import CoverageError, DomainError, PreconditionError
from .graph import Edge, GraphWindow, VertexId
from .operators import VertexFunction

logger = logging.getLogger(__name__)

SLACK_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class MetricData:
    """Distances from the base vertex plus per-edge lengths σ.

    ``distances`` is aligned with ``window.vertices``; ``edge_lengths`` holds
    both directions of every window edge.
    """

    window: GraphWindow
    base: VertexId
    distances: np.ndarray
    edge_lengths: Mapping[Edge, float]
    jump_size: float

    @cached_property
    def coverage(self) -> float:
        """Distance of the closest boundary vertex; balls strictly inside it are exact."""

        boundary = ~self.window.interior_mask
        if not np.any(boundary):
            return math.inf
        return float(np.min(self.distances[boundary]))

    def fits(self, radius: float) -> bool:
        return radius < self.coverage

    def distance(self, vertex: VertexId) -> float:
        return float(self.distances[self.window.position(vertex)])

    def length(self, x: VertexId, y: VertexId) -> float:
        try:
            return self.edge_lengths[(x, y)]
        except KeyError as exc:
            raise DomainError(f"no edge length for {x}-{y}") from exc

    @cached_property
    def edge_length_array(self) -> np.ndarray:
        """σ aligned with ``window.edge_arrays``."""

        rows, cols, _ = self.window.edge_arrays
        vertices = self.window.vertices
        return np.asarray(
            [self.length(vertices[r], vertices[c]) for r, c in zip(rows, cols)],
            dtype=float,
        )


def _shortest_paths(window: GraphWindow, lengths: Mapping[Edge, float], base: VertexId) -> np.ndarray:
    rows, cols, _ = window.edge_arrays
    vertices = window.vertices
    data = np.asarray([lengths[(vertices[r], vertices[c])] for r, c in zip(rows, cols)], dtype=float)
    n = len(window)
    graph = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    return csgraph.dijkstra(graph, directed=True, indices=window.position(base))


def _metric_from_lengths(window: GraphWindow, lengths: Dict[Edge, float], base: VertexId | None) -> MetricData:
    base = window.base if base is None else base
    distances = _shortest_paths(window, lengths, base)
    jump = max(lengths.values()) if lengths else 0.0
    return MetricData(window=window, base=base, distances=distances, edge_lengths=lengths, jump_size=jump)


def construct_path_metric(window: GraphWindow, base: VertexId | None = None) -> MetricData:
    """Path metric with σ_xy = min(√(m_x/D_x), √(m_y/D_y)), D_x the full weighted degree."""

    provider = window.provider
    scale = {v: math.sqrt(window.measures[v] / provider.degree(v)) for v in window.vertices}
    lengths = {(x, y): min(scale[x], scale[y]) for (x, y) in window.weights}
    metric = _metric_from_lengths(window, lengths, base)
    logger.info("Constructed path metric: jump size %.6g, coverage %.6g", metric.jump_size, metric.coverage)
    return metric


def explicit_metric(
    window: GraphWindow,
    length: float | Callable[[VertexId, VertexId], float],
    base: VertexId | None = None,
) -> MetricData:
    """Path metric from caller supplied edge lengths (a constant or a symmetric callable)."""

    lengths: Dict[Edge, float] = {}
    for (x, y) in window.weights:
        if x > y:
            continue
        value = float(length(x, y)) if callable(length) else float(length)
        if not value > 0:
            raise PreconditionError(f"edge length on {x}-{y} must be positive, got {value}")
        lengths[(x, y)] = lengths[(y, x)] = value
    return _metric_from_lengths(window, lengths, base)


@dataclass(frozen=True)
class IntrinsicReport:
    slacks: Mapping[VertexId, float]
    min_slack: float
    admissible: bool


def verify_intrinsic(window: GraphWindow, metric: MetricData) -> IntrinsicReport:
    """Slack m_x − Σ_y w_xy σ²_xy at every interior vertex."""

    slacks: Dict[VertexId, float] = {}
    for vertex in sorted(window.interior):
        load = math.fsum(weight * metric.length(vertex, other) ** 2 for other, weight in window.neighbors(vertex))
        slacks[vertex] = window.measures[vertex] - load
    min_slack = min(slacks.values()) if slacks else 0.0
    return IntrinsicReport(slacks=slacks, min_slack=min_slack, admissible=min_slack >= -SLACK_TOLERANCE)


def ball(metric: MetricData, radius: float) -> frozenset:
    """Closed ball B_R(x₀); raises when it could leak past the materialized interior."""

    if radius < 0:
        raise PreconditionError(f"radius must be nonnegative, got {radius}")
    if not metric.fits(radius):
        raise CoverageError(f"B_{radius:g} exceeds window coverage {metric.coverage:.6g}")
    inside = metric.distances <= radius
    return frozenset(v for v, flag in zip(metric.window.vertices, inside) if flag)


def ball_mask(metric: MetricData, radius: float) -> np.ndarray:
    ball(metric, radius)
    return metric.distances <= radius


def ball_measure(metric: MetricData, radius: float) -> float:
    mask = ball_mask(metric, radius)
    return math.fsum(metric.window.measure_array[mask])


@dataclass(frozen=True, eq=False)
class CutoffFunction:
    function: VertexFunction
    base: VertexId
    radius: float
    lipschitz_violation: float

    @property
    def values(self) -> np.ndarray:
        return self.function.values


def cutoff_eta(metric: MetricData, radius: float) -> CutoffFunction:
    """η_R = clip(2 − ρ/R, 0, 1) with the edgewise Lipschitz check |∇η| ≤ σ/R."""

    if radius <= 0:
        raise PreconditionError(f"cut-off radius must be positive, got {radius}")
    reach = 2 * radius + metric.jump_size
    if not metric.fits(reach):
        raise CoverageError(f"B_{reach:g} exceeds window coverage {metric.coverage:.6g}")

    values = np.clip(2.0 - metric.distances / radius, 0.0, 1.0)
    rows, cols, _ = metric.window.edge_arrays
    excess = np.abs(values[cols] - values[rows]) - metric.edge_length_array / radius
    violation = max(0.0, float(np.max(excess))) if excess.size else 0.0
    return CutoffFunction(
        function=VertexFunction(metric.window, values),
        base=metric.base,
        radius=radius,
        lipschitz_violation=violation,
    )


@dataclass(frozen=True)
class VolumeGrowthFit:
    radii: Tuple[float, ...]
    measures: Tuple[float, ...]
    exponent: float
    constant: float
    residuals: Tuple[float, ...]


def fit_volume_exponent(metric: MetricData, radii: Sequence[float]) -> VolumeGrowthFit:
    """Least-squares fit of log m(B_R) against log(1+R)."""

    if len(radii) < 3:
        raise PreconditionError("volume fit needs at least three radii")
    radii = tuple(sorted(float(r) for r in radii))
    measures = tuple(ball_measure(metric, r) for r in radii)
    xs = np.log1p(np.asarray(radii))
    ys = np.log(np.asarray(measures))
    slope, intercept = np.polyfit(xs, ys, 1)
    residuals = tuple(float(v) for v in ys - (slope * xs + intercept))
    if measures[0] == measures[-1]:
        logger.warning("Ball measure saturated at %.6g over radii %s", measures[-1], radii)
    return VolumeGrowthFit(
        radii=radii,
        measures=measures,
        exponent=float(slope),
        constant=float(np.exp(intercept)),
        residuals=residuals,
    )
