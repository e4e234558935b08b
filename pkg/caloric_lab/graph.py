"""Weighted graphs: lazy providers, finite windows and the experiment families."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ConfigError, DomainError, PreconditionError, StructuralError

logger = logging.getLogger(__name__)

VertexId = int
Edge = Tuple[VertexId, VertexId]

FAMILIES = ("lattice-zd", "weighted-line", "star", "normalized-wrap")
WEIGHT_RULES = ("constant", "radial-power")
MEASURE_RULES = ("constant", "counting", "normalized", "radial-power")

_AXIS_BITS = 32
_AXIS_MASK = (1 << _AXIS_BITS) - 1


def _zigzag(value: int) -> int:
    return 2 * value if value >= 0 else -2 * value - 1


def _unzigzag(value: int) -> int:
    return value // 2 if value % 2 == 0 else -(value + 1) // 2


def pack_coords(coords: Sequence[int]) -> VertexId:
    """Injectively pack lattice coordinates into a vertex id."""

    vid = 0
    for axis, coord in enumerate(coords):
        encoded = _zigzag(int(coord))
        if encoded > _AXIS_MASK:
            raise DomainError(f"coordinate {coord} exceeds the packable range")
        vid |= encoded << (_AXIS_BITS * axis)
    return vid


def unpack_coords(vid: VertexId, dimension: int) -> Tuple[int, ...]:
    return tuple(_unzigzag((vid >> (_AXIS_BITS * axis)) & _AXIS_MASK) for axis in range(dimension))


@dataclass(frozen=True)
class WeightRule:
    """Edge weight as a function of the edge's radial position."""

    rule: str = "constant"
    value: float = 1.0
    power: float = 0.0

    def evaluate(self, radius: int) -> float:
        if self.rule == "constant":
            return float(self.value)
        return float(self.value) * (1.0 + radius) ** self.power


@dataclass(frozen=True)
class MeasureRule:
    """Vertex measure: constant, counting, normalized or radial power law."""

    rule: str = "counting"
    value: float = 1.0
    power: float = 0.0


@dataclass(frozen=True)
class FamilyConfig:
    family: str = "lattice-zd"
    dimension: int = 1
    weights: WeightRule = WeightRule()
    measure: MeasureRule = MeasureRule()
    leaves: int = 4
    inner: "FamilyConfig | None" = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family '{self.family}'")
        if self.weights.rule not in WEIGHT_RULES:
            raise ConfigError(f"unknown weight rule '{self.weights.rule}'")
        if self.measure.rule not in MEASURE_RULES:
            raise ConfigError(f"unknown measure rule '{self.measure.rule}'")
        if self.dimension < 1:
            raise ConfigError("dimension must be at least 1")
        if self.family == "weighted-line" and self.dimension != 1:
            raise ConfigError("weighted-line is one dimensional")
        if self.family == "star" and self.leaves < 1:
            raise ConfigError("a star needs at least one leaf")
        if self.family == "normalized-wrap" and self.inner is None:
            raise ConfigError("normalized-wrap needs an inner family")

    @property
    def tag(self) -> str:
        """Short identifier used to label result rows."""

        if self.family == "normalized-wrap":
            return f"normalized({self.inner.tag})"  # type: ignore[union-attr]
        if self.family == "star":
            return f"star{self.leaves}"
        suffix = "" if self.weights.rule == "constant" else f"-w{self.weights.power:g}"
        if self.measure.rule == "normalized":
            suffix += "-norm"
        elif self.measure.rule == "radial-power":
            suffix += f"-m{self.measure.power:g}"
        return f"z{self.dimension}{suffix}"


class GraphProvider(ABC):
    """Lazy access to a locally finite weighted graph."""

    base: VertexId
    dimension: int

    @abstractmethod
    def neighbors(self, vertex: VertexId) -> List[Tuple[VertexId, float]]:
        """Return ``(neighbor, w_xy)`` pairs sorted by neighbor id."""

    @abstractmethod
    def measure(self, vertex: VertexId) -> float:
        """Return the vertex measure ``m_x``."""

    @abstractmethod
    def coords(self, vertex: VertexId) -> Tuple[int, ...]:
        """Return integer coordinates of the vertex."""

    @abstractmethod
    def radius(self, vertex: VertexId) -> int:
        """Combinatorial distance from the base used by radial rules."""

    def degree(self, vertex: VertexId) -> float:
        return sum(weight for _, weight in self.neighbors(vertex))


def _positive(value: float, what: str) -> float:
    if not value > 0:
        raise ConfigError(f"nonpositive {what}: {value}")
    return value


class _RuleProvider(GraphProvider):
    """Shared measure handling for the rule-driven families."""

    def __init__(self, weights: WeightRule, measure: MeasureRule):
        self.weights = weights
        self.measure_rule = measure

    def _edge_weight(self, x: VertexId, y: VertexId) -> float:
        weight = self.weights.evaluate(min(self.radius(x), self.radius(y)))
        return _positive(weight, f"weight on edge {self.coords(x)}-{self.coords(y)}")

    def measure(self, vertex: VertexId) -> float:
        rule = self.measure_rule
        if rule.rule == "counting":
            return 1.0
        if rule.rule == "constant":
            value = float(rule.value)
        elif rule.rule == "normalized":
            value = self.degree(vertex)
        else:
            value = float(rule.value) * (1.0 + self.radius(vertex)) ** rule.power
        return _positive(value, f"measure at vertex {self.coords(vertex)}")


class LatticeProvider(_RuleProvider):
    """ℤ^d with nearest-neighbour edges."""

    def __init__(self, dimension: int, weights: WeightRule, measure: MeasureRule):
        super().__init__(weights, measure)
        self.dimension = dimension
        self.base = pack_coords((0,) * dimension)

    def coords(self, vertex: VertexId) -> Tuple[int, ...]:
        return unpack_coords(vertex, self.dimension)

    def radius(self, vertex: VertexId) -> int:
        return sum(abs(c) for c in self.coords(vertex))

    def neighbors(self, vertex: VertexId) -> List[Tuple[VertexId, float]]:
        point = self.coords(vertex)
        result = []
        for axis in range(self.dimension):
            for step in (-1, 1):
                shifted = list(point)
                shifted[axis] += step
                other = pack_coords(shifted)
                result.append((other, self._edge_weight(vertex, other)))
        result.sort()
        return result


class StarProvider(_RuleProvider):
    """A centre (id 0) joined to ``leaves`` leaves (ids 1..n)."""

    dimension = 1

    def __init__(self, leaves: int, weights: WeightRule, measure: MeasureRule):
        super().__init__(weights, measure)
        self.leaves = leaves
        self.base = 0

    def _check(self, vertex: VertexId) -> None:
        if not 0 <= vertex <= self.leaves:
            raise DomainError(f"vertex {vertex} is not part of the star")

    def coords(self, vertex: VertexId) -> Tuple[int, ...]:
        self._check(vertex)
        return (vertex,)

    def radius(self, vertex: VertexId) -> int:
        self._check(vertex)
        return 0 if vertex == 0 else 1

    def neighbors(self, vertex: VertexId) -> List[Tuple[VertexId, float]]:
        self._check(vertex)
        if vertex == 0:
            return [(leaf, self._edge_weight(0, leaf)) for leaf in range(1, self.leaves + 1)]
        return [(0, self._edge_weight(vertex, 0))]


class NormalizedProvider(GraphProvider):
    """Wraps a provider and replaces the measure by ``m_x = Σ_y w_xy``."""

    def __init__(self, inner: GraphProvider):
        self.inner = inner
        self.base = inner.base
        self.dimension = inner.dimension

    def neighbors(self, vertex: VertexId) -> List[Tuple[VertexId, float]]:
        return self.inner.neighbors(vertex)

    def measure(self, vertex: VertexId) -> float:
        return _positive(self.inner.degree(vertex), f"measure at vertex {self.coords(vertex)}")

    def coords(self, vertex: VertexId) -> Tuple[int, ...]:
        return self.inner.coords(vertex)

    def radius(self, vertex: VertexId) -> int:
        return self.inner.radius(vertex)


def generate(config: FamilyConfig) -> GraphProvider:
    """Build the provider for a family configuration."""

    provider: GraphProvider
    if config.family == "normalized-wrap":
        provider = NormalizedProvider(generate(config.inner))  # type: ignore[arg-type]
    elif config.family == "star":
        provider = StarProvider(config.leaves, config.weights, config.measure)
    else:
        provider = LatticeProvider(config.dimension, config.weights, config.measure)

    # nonpositive rule outputs surface at the first vertex evaluated
    provider.measure(provider.base)
    provider.neighbors(provider.base)
    return provider


@dataclass(frozen=True)
class GraphWindow:
    """Finite materialization of a provider around a base vertex.

    ``weights`` holds both directions of every edge between window vertices.
    Every provider neighbour of an interior vertex lies in the window, so the
    Laplacian is exact on the interior.
    """

    vertices: Tuple[VertexId, ...]
    interior: frozenset
    boundary: frozenset
    weights: Mapping[Edge, float]
    measures: Mapping[VertexId, float]
    provider: GraphProvider
    base: VertexId
    hops: int

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, vertex: object) -> bool:
        return vertex in self.index

    @cached_property
    def index(self) -> Dict[VertexId, int]:
        return {vertex: pos for pos, vertex in enumerate(self.vertices)}

    def position(self, vertex: VertexId) -> int:
        try:
            return self.index[vertex]
        except KeyError as exc:
            raise DomainError(f"vertex {vertex} is outside the window") from exc

    @cached_property
    def adjacency(self) -> Dict[VertexId, Tuple[Tuple[VertexId, float], ...]]:
        adjacency: Dict[VertexId, List[Tuple[VertexId, float]]] = {v: [] for v in self.vertices}
        for (x, y), weight in self.weights.items():
            adjacency[x].append((y, weight))
        return {v: tuple(sorted(nbrs)) for v, nbrs in adjacency.items()}

    def neighbors(self, vertex: VertexId) -> Tuple[Tuple[VertexId, float], ...]:
        self.position(vertex)
        return self.adjacency[vertex]

    @cached_property
    def edge_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed edge list as ``(rows, cols, w)`` position arrays in sorted order."""

        rows, cols, data = [], [], []
        for vertex in self.vertices:
            row = self.index[vertex]
            for other, weight in self.adjacency[vertex]:
                rows.append(row)
                cols.append(self.index[other])
                data.append(weight)
        return (
            np.asarray(rows, dtype=np.int64),
            np.asarray(cols, dtype=np.int64),
            np.asarray(data, dtype=float),
        )

    @cached_property
    def measure_array(self) -> np.ndarray:
        return np.asarray([self.measures[v] for v in self.vertices], dtype=float)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return np.asarray([v in self.interior for v in self.vertices], dtype=bool)

    @cached_property
    def coords_array(self) -> np.ndarray:
        return np.asarray([self.provider.coords(v) for v in self.vertices], dtype=np.int64)

    def coords(self, vertex: VertexId) -> Tuple[int, ...]:
        return tuple(int(c) for c in self.coords_array[self.position(vertex)])

    def weight_matrix(self) -> sparse.csr_matrix:
        rows, cols, data = self.edge_arrays
        n = len(self.vertices)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def _checked_neighbors(provider: GraphProvider, vertex: VertexId) -> List[Tuple[VertexId, float]]:
    neighbors = provider.neighbors(vertex)
    seen = set()
    for other, _ in neighbors:
        if other == vertex:
            raise StructuralError(f"self-loop at vertex {vertex}")
        if other in seen:
            raise StructuralError(f"parallel edge {vertex}-{other}")
        seen.add(other)
    return neighbors


def build_window(provider: GraphProvider, base: VertexId | None = None, hops: int = 1) -> GraphWindow:
    """Materialize every vertex within ``hops + 1`` steps of ``base``."""

    if hops < 1:
        raise PreconditionError("hops must be at least 1")
    base = provider.base if base is None else base

    depth = {base: 0}
    lists: Dict[VertexId, List[Tuple[VertexId, float]]] = {}
    queue = deque([base])
    while queue:
        vertex = queue.popleft()
        lists[vertex] = _checked_neighbors(provider, vertex)
        if depth[vertex] > hops:
            continue
        for other, _ in lists[vertex]:
            if other not in depth:
                depth[other] = depth[vertex] + 1
                queue.append(other)

    weights: Dict[Edge, float] = {}
    for vertex, neighbors in lists.items():
        for other, weight in neighbors:
            if other in depth:
                weights[(vertex, other)] = weight
    for (x, y), weight in weights.items():
        back = weights.get((y, x))
        if back is None or back != weight:
            raise StructuralError(f"asymmetric weight on edge {x}-{y}: {weight} vs {back}")

    vertices = tuple(sorted(depth))
    window = GraphWindow(
        vertices=vertices,
        interior=frozenset(v for v, d in depth.items() if d <= hops),
        boundary=frozenset(v for v, d in depth.items() if d > hops),
        weights=weights,
        measures={v: provider.measure(v) for v in vertices},
        provider=provider,
        base=base,
        hops=hops,
    )
    components, _ = csgraph.connected_components(window.weight_matrix(), directed=False)
    if components != 1:
        raise StructuralError(f"window around {base} has {components} components")

    logger.info(
        "Materialized window: %d vertices (%d interior) at %d hops",
        len(vertices),
        len(window.interior),
        hops,
    )
    return window


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


def validate_graph(window: GraphWindow) -> List[Violation]:
    """Check the weighted-graph axioms on a window; violations are returned, not raised."""

    violations: List[Violation] = []
    vertex_set = set(window.vertices)

    if window.interior | window.boundary != vertex_set or window.interior & window.boundary:
        violations.append(Violation("partition", "interior and boundary do not partition the vertices"))

    for (x, y), weight in sorted(window.weights.items()):
        if x == y:
            violations.append(Violation("simplicity", f"self-loop at {x}"))
            continue
        if x > y and (y, x) in window.weights:
            continue
        back = window.weights.get((y, x))
        if back is None or back != weight:
            violations.append(Violation("symmetry", f"w[{x},{y}]={weight} but w[{y},{x}]={back}"))
        if not (weight > 0 and (back is None or back > 0)):
            violations.append(Violation("positivity", f"nonpositive weight on edge {x}-{y}"))

    for vertex in window.vertices:
        measure = window.measures.get(vertex, 0.0)
        if not (np.isfinite(measure) and measure > 0):
            violations.append(Violation("positivity", f"m[{vertex}]={measure}"))

    components, _ = csgraph.connected_components(window.weight_matrix(), directed=False)
    if components != 1:
        violations.append(Violation("connectivity", f"{components} connected components"))

    for vertex in sorted(window.interior):
        expected = {other for other, _ in window.provider.neighbors(vertex)}
        present = {other for other, _ in window.adjacency.get(vertex, ())}
        if expected != present:
            violations.append(Violation("interior-closure", f"neighbours of {vertex} missing from window"))

    return violations


def weighted_degree(window: GraphWindow, vertex: VertexId) -> float:
    """Deg(x) = Σ_y w_xy / m_x, with the sum taken over the provider's neighbours."""

    window.position(vertex)
    return window.provider.degree(vertex) / window.measures[vertex]


@dataclass(frozen=True)
class DegreeSummary:
    max_degree: float
    argmax: VertexId
    degrees: Mapping[VertexId, float]


def degree_summary(window: GraphWindow) -> DegreeSummary:
    degrees = {v: weighted_degree(window, v) for v in sorted(window.interior)}
    argmax = max(degrees, key=lambda v: (degrees[v], -v))
    return DegreeSummary(max_degree=degrees[argmax], argmax=argmax, degrees=degrees)


@dataclass(frozen=True)
class DegreeGrowth:
    points: Tuple[Tuple[int, float], ...]
    unbounded_trend: bool


def degree_growth(provider: GraphProvider, hops_list: Sequence[int], base: VertexId | None = None) -> DegreeGrowth:
    """Track max Deg over growing windows; a strictly increasing sequence flags an unbounded Laplacian."""

    points = []
    for hops in sorted(hops_list):
        summary = degree_summary(build_window(provider, base, hops))
        points.append((hops, summary.max_degree))
    maxima = [value for _, value in points]
    trend = len(maxima) > 1 and all(b > a for a, b in zip(maxima, maxima[1:]))
    return DegreeGrowth(points=tuple(points), unbounded_trend=trend)
