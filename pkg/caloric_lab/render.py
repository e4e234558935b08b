"""Template rendering helpers for run summaries."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape

from .experiments import RunReport

_TEMPLATES_DIR = Path(__file__).resolve().parent / "templates"


def _create_environment() -> Environment:
    loader = FileSystemLoader(str(_TEMPLATES_DIR))
    env = Environment(
        loader=loader,
        autoescape=select_autoescape(enabled_extensions=("html", "htm")),
        keep_trailing_newline=True,
    )
    env.filters["cell"] = format_cell
    return env



def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isnan(value):
            return "–"
        return f"{value:.6g}"
    return str(value)


_ENV = _create_environment()


def _table_context(name: str, frame) -> Dict[str, Any]:
    return {
        "name": name,
        "file": f"{name}.csv",
        "columns": [str(c) for c in frame.columns],
        "rows": frame.itertuples(index=False, name=None),
    }


def build_context(report: RunReport, *, extras: Dict[str, Any] | None = None) -> Dict[str, Any]:
    config = report.config
    tables: List[Dict[str, Any]] = [_table_context(name, frame) for name, frame in report.tables.items()]
    context = {
        "name": config.name,
        "experiment": config.experiment,
        "family": config.family.tag,
        "hops": config.hops,
        "seed": config.seed,
        "passed": report.passed,
        "checks": report.checks,
        "tables": tables,
        "timings": report.timings,
    }
    if extras:
        context.update(extras)
    return context


def render_markdown(template_name: str, context: Dict[str, Any]) -> str:
    template = _ENV.get_template(template_name)
    return template.render(**context)


def render_summary(report: RunReport) -> str:
    return render_markdown("summary.md", build_context(report))
