"""Discrete heat-equation machinery on weighted graphs."""

from . import (  # noqa: F401
    caccioppoli,
    caloric,
    cli,
    errors,
    experiments,
    export,
    graph,
    lattice,
    loader,
    metrics,
    operators,
    render,
    settings,
    structure,
)

__all__ = [
    "caccioppoli",
    "caloric",
    "cli",
    "errors",
    "experiments",
    "export",
    "graph",
    "lattice",
    "loader",
    "metrics",
    "operators",
    "render",
    "settings",
    "structure",
]
