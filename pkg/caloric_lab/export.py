"""Emission of run artifacts: CSV tables, the Markdown summary and the config echo.

Every file is written to a temporary sibling first and renamed into place, and all
contents are rendered before the first write, so a failing run leaves no partial files.
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import pandas as pd
import yaml

from .experiments import RunReport
from .render import render_summary

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class RunArtifacts:
    tables: Dict[str, Path]
    summary: Path
    config: Path

    @property
    def paths(self) -> List[Path]:
        return [*self.tables.values(), self.summary, self.config]


def table_text(frame: pd.DataFrame) -> str:
    """CSV with a header row, `.` decimals and `\\n` line endings, independent of locale."""

    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def write_atomic(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w",
        encoding="utf-8",
        newline="",
        dir=path.parent,
        prefix=f".{path.name}.",
        delete=False,
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    return path


def write_table(frame: pd.DataFrame, path: Path) -> Path:
    return write_atomic(path, table_text(frame))


def write_run(report: RunReport, output_dir: Path) -> RunArtifacts:
    """Write every table, the summary and the config echo under ``output_dir``."""

    contents = {f"{name}.csv": table_text(frame) for name, frame in report.tables.items()}
    summary = render_summary(report)
    echo = yaml.safe_dump(report.config.raw, sort_keys=False, allow_unicode=True)

    tables = {name: write_atomic(output_dir / f"{name}.csv", contents[f"{name}.csv"]) for name in report.tables}
    artifacts = RunArtifacts(
        tables=tables,
        summary=write_atomic(output_dir / "summary.md", summary),
        config=write_atomic(output_dir / "config.yaml", echo),
    )
    logger.info("Wrote %d files to %s", len(artifacts.paths), output_dir)
    return artifacts
