from __future__ import annotations

from dataclasses import replace
from typing import List, Tuple

import pytest  # type: ignore[import]

from caloric_lab.errors import ConfigError, DomainError, PreconditionError, StructuralError
from caloric_lab.graph import (
    FamilyConfig,
    GraphProvider,
    MeasureRule,
    WeightRule,
    build_window,
    degree_growth,
    degree_summary,
    generate,
    pack_coords,
    unpack_coords,
    validate_graph,
    weighted_degree,
)


def _window(hops: int = 3, **family):
    return build_window(generate(FamilyConfig(**family)), hops=hops)


@pytest.mark.parametrize("coords", [(0,), (5,), (-7,), (3, -4), (-1, 0, 2), (-(2**31), 2**31 - 1)])
def test_pack_coords_is_invertible(coords: Tuple[int, ...]) -> None:
    assert unpack_coords(pack_coords(coords), len(coords)) == coords


def test_pack_coords_rejects_out_of_range() -> None:
    with pytest.raises(DomainError):
        pack_coords((2**31,))


def test_line_window_has_interior_and_one_hop_boundary() -> None:
    window = _window(hops=3)
    assert len(window) == 9
    assert len(window.interior) == 7
    assert {window.provider.coords(v) for v in window.boundary} == {(-4,), (4,)}
    assert validate_graph(window) == []


def test_square_lattice_window_counts() -> None:
    window = _window(hops=2, dimension=2)
    assert len(window) == 25
    assert len(window.interior) == 13
    assert validate_graph(window) == []


def test_star_window_is_fully_interior() -> None:
    window = _window(hops=1, family="star", leaves=5)
    assert len(window) == 6
    assert window.boundary == frozenset()
    assert validate_graph(window) == []


def test_star_rejects_unknown_vertex() -> None:
    provider = generate(FamilyConfig(family="star", leaves=3))
    with pytest.raises(DomainError):
        provider.neighbors(4)


def test_weighted_line_has_growing_degree() -> None:
    window = _window(hops=4, family="weighted-line", weights=WeightRule("radial-power", 1.0, 1.0))
    origin = pack_coords((0,))
    assert window.weights[(origin, pack_coords((1,)))] == 1.0
    assert window.weights[(pack_coords((1,)), pack_coords((2,)))] == 2.0
    assert weighted_degree(window, pack_coords((3,))) == pytest.approx(7.0)
    assert weighted_degree(window, pack_coords((-3,))) == pytest.approx(7.0)
    assert weighted_degree(window, origin) == pytest.approx(2.0)
    assert weighted_degree(window, pack_coords((1,))) == pytest.approx(3.0)
    assert weighted_degree(window, pack_coords((-1,))) == pytest.approx(3.0)


def test_normalized_measure_has_unit_degree() -> None:
    inner = FamilyConfig(dimension=2, weights=WeightRule(value=2.5))
    window = _window(hops=2, family="normalized-wrap", inner=inner)
    summary = degree_summary(window)
    assert summary.max_degree == pytest.approx(1.0)
    assert all(value == pytest.approx(1.0) for value in summary.degrees.values())
    assert window.measures[window.base] == pytest.approx(10.0)


def test_degree_growth_flags_unbounded_family() -> None:
    unbounded = generate(FamilyConfig(family="weighted-line", weights=WeightRule("radial-power", 1.0, 1.0)))
    growth = degree_growth(unbounded, [2, 4, 8])
    assert [hops for hops, _ in growth.points] == [2, 4, 8]
    assert [value for _, value in growth.points] == pytest.approx([5.0, 9.0, 17.0])
    assert growth.unbounded_trend

    bounded = degree_growth(generate(FamilyConfig()), [2, 4, 8])
    assert not bounded.unbounded_trend


@pytest.mark.parametrize(
    "family, tag",
    [
        (FamilyConfig(), "z1"),
        (FamilyConfig(dimension=2, measure=MeasureRule("normalized")), "z2-norm"),
        (FamilyConfig(family="weighted-line", weights=WeightRule("radial-power", 1.0, 1.0)), "z1-w1"),
        (FamilyConfig(family="star", leaves=4), "star4"),
        (FamilyConfig(family="normalized-wrap", inner=FamilyConfig(dimension=2)), "normalized(z2)"),
    ],
)
def test_family_tags(family: FamilyConfig, tag: str) -> None:
    assert family.tag == tag


@pytest.mark.parametrize(
    "kwargs",
    [
        {"family": "torus"},
        {"family": "weighted-line", "dimension": 2},
        {"family": "normalized-wrap"},
        {"dimension": 0},
        {"weights": WeightRule(rule="random")},
    ],
)
def test_invalid_family_configs(kwargs) -> None:
    with pytest.raises(ConfigError):
        FamilyConfig(**kwargs)


def test_nonpositive_rules_are_rejected() -> None:
    with pytest.raises(ConfigError):
        generate(FamilyConfig(weights=WeightRule(value=-1.0)))
    with pytest.raises(ConfigError):
        generate(FamilyConfig(measure=MeasureRule("constant", 0.0)))


def test_zero_hops_is_rejected() -> None:
    with pytest.raises(PreconditionError):
        _window(hops=0)


class _LoopProvider(GraphProvider):
    """ℤ¹ with a self-loop at the origin or an asymmetric weight on (0, 1)."""

    dimension = 1

    def __init__(self, defect: str):
        self.defect = defect
        self.base = pack_coords((0,))

    def neighbors(self, vertex) -> List[Tuple[int, float]]:
        (x,) = self.coords(vertex)
        result = [(pack_coords((x - 1,)), 1.0), (pack_coords((x + 1,)), 1.0)]
        if self.defect == "loop" and x == 0:
            result.append((vertex, 1.0))
        if self.defect == "asymmetric" and x == 0:
            result = [(pack_coords((-1,)), 1.0), (pack_coords((1,)), 3.0)]
        return sorted(result)

    def measure(self, vertex) -> float:
        return 1.0

    def coords(self, vertex) -> Tuple[int, ...]:
        return unpack_coords(vertex, 1)

    def radius(self, vertex) -> int:
        return abs(self.coords(vertex)[0])


@pytest.mark.parametrize("defect, message", [("loop", "self-loop"), ("asymmetric", "asymmetric")])
def test_structural_defects_are_raised(defect: str, message: str) -> None:
    with pytest.raises(StructuralError) as excinfo:
        build_window(_LoopProvider(defect), hops=2)
    assert message in str(excinfo.value)


def test_validate_graph_reports_violations_without_raising() -> None:
    window = _window(hops=2)
    origin, right = pack_coords((0,)), pack_coords((1,))
    weights = dict(window.weights)
    weights[(origin, right)] = 2.0
    measures = dict(window.measures)
    measures[origin] = 0.0
    broken = replace(window, weights=weights, measures=measures)

    kinds = {violation.kind for violation in validate_graph(broken)}
    assert kinds == {"symmetry", "positivity"}
