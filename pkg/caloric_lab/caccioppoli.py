"""Both sides of the parabolic Caccioppoli inequalities, radius sweeps and baselines."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import settings
from .caloric import (
    Cylinder,
    DiscreteField,
    MODES,
    PolyField,
    cylinder_aggregate,
    is_caloric,
    time_derivative,
)
from .errors import CaloricLabError, ConfigError, CoverageError, PreconditionError, SweepError
from .graph import GraphWindow
from .metrics import MetricData, ball_mask, cutoff_eta
from .operators import gamma_values

logger = logging.getLogger(__name__)

BASELINE_COLUMNS = ["family", "mode", "R", "ratio"]
BASELINE_TOLERANCE = 0.05
MONOTONE_TOLERANCE = 0.05
RHS_FACTOR = 9


def _ratio(numerator: float, denominator: float) -> float:
    if numerator == 0:
        return 0.0
    if denominator == 0:
        return math.inf
    return numerator / denominator


@dataclass(frozen=True)
class CaccioppoliReport:
    radius: float
    mode: str
    gradient: float
    time: float
    rhs: float
    ratio: float
    gradient_stage: float
    time_stage: float


def _time_quantity(mode: str) -> str:
    return "dt2" if mode == "continuous" else "Dt2"


def _require_caloric(field: PolyField | DiscreteField, mode: str) -> None:
    if isinstance(field, PolyField) and field.mode != mode:
        raise PreconditionError(f"field solves the {field.mode} heat equation, not the {mode} one")
    if not is_caloric(field):
        raise PreconditionError(f"field is not caloric in {mode} mode")


def caccioppoli_report(
    field: PolyField | DiscreteField,
    window: GraphWindow,
    metric: MetricData,
    radius: float,
    mode: str,
) -> CaccioppoliReport:
    """R²ΣΓ(u) + R⁴Σ(∂_t u)² over Q_R against Σu² over Q_9R."""

    if mode not in MODES:
        raise PreconditionError(f"unknown mode '{mode}'")
    if mode == "continuous" and not isinstance(field, PolyField):
        raise PreconditionError("continuous reports need a polynomial field")
    if radius < metric.jump_size:
        raise PreconditionError(f"R={radius:g} is below the jump size {metric.jump_size:.6g}")
    if not metric.fits(RHS_FACTOR * radius):
        raise CoverageError(f"Q_{RHS_FACTOR * radius:g} exceeds window coverage {metric.coverage:.6g}")
    _require_caloric(field, mode)

    def aggregate(quantity: str, scale: float) -> float:
        return cylinder_aggregate(field, window, metric, quantity, Cylinder(metric.base, scale * radius, mode))

    gradient_raw = aggregate("gamma", 1)
    time_raw = aggregate(_time_quantity(mode), 1)
    rhs = aggregate("u2", RHS_FACTOR)
    gradient = radius**2 * gradient_raw
    time = radius**4 * time_raw

    report = CaccioppoliReport(
        radius=radius,
        mode=mode,
        gradient=gradient,
        time=time,
        rhs=rhs,
        ratio=_ratio(gradient + time, rhs),
        gradient_stage=_ratio(gradient, aggregate("u2", 3)),
        time_stage=_ratio(radius**2 * time_raw, aggregate("gamma", 3)),
    )
    logger.info("Caccioppoli R=%g (%s): ratio %.6g", radius, mode, report.ratio)
    return report


@dataclass(frozen=True)
class RatioSweep:
    mode: str
    reports: Tuple[CaccioppoliReport, ...]

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.reports), default=0.0)

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(r.ratio) for r in self.reports)

    @property
    def monotone_bounded(self) -> bool:
        """No ratio exceeds the one at the smallest radius by more than 5%."""

        if not self.reports:
            return True
        first = min(self.reports, key=lambda r: r.radius).ratio
        return self.bounded and self.max_ratio <= (1 + MONOTONE_TOLERANCE) * first

    def table(self, family: str) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "family": family,
                    "mode": r.mode,
                    "R": r.radius,
                    "gradient": r.gradient,
                    "time": r.time,
                    "rhs": r.rhs,
                    "ratio": r.ratio,
                    "gradient_stage": r.gradient_stage,
                    "time_stage": r.time_stage,
                }
                for r in self.reports
            ]
        )


def ratio_sweep(
    field: PolyField | DiscreteField,
    window: GraphWindow,
    metric: MetricData,
    radii: Sequence[float],
    mode: str,
    threads: int | None = None,
) -> RatioSweep:
    """One report per radius, computed on a thread pool; failures carry their radius."""

    def run(radius: float) -> CaccioppoliReport:
        try:
            return caccioppoli_report(field, window, metric, radius, mode)
        except CaloricLabError as exc:
            raise SweepError(radius, exc) from exc

    workers = threads or settings.THREADS
    with ThreadPoolExecutor(max_workers=workers) as pool:
        progress = tqdm(
            pool.map(run, radii),
            total=len(radii),
            desc=f"caccioppoli ({mode})",
            disable=not logger.isEnabledFor(logging.DEBUG),
        )
        reports = tuple(progress)
    return RatioSweep(mode=mode, reports=reports)


def _with_neighbors(window: GraphWindow, mask: np.ndarray) -> np.ndarray:
    rows, cols, _ = window.edge_arrays
    return mask | (np.bincount(cols, weights=mask[rows].astype(float), minlength=len(window)) > 0)


def _slice_values(field: PolyField | DiscreteField, window: GraphWindow, t, needed: np.ndarray) -> np.ndarray:
    if isinstance(field, DiscreteField):
        slice_ = field.at(t)
        if not np.all(slice_.defined_mask[needed]):
            raise CoverageError(f"field is not valid on the required region at t={t}")
        return slice_.values
    return field.on_window(window).at(t).values


@dataclass(frozen=True)
class CutoffEnergy:
    value: float
    bound: float


def _cutoff_energy_value(window: GraphWindow, values: np.ndarray, eta: np.ndarray) -> float:
    rows, cols, weights = window.edge_arrays
    return 0.5 * math.fsum(weights * (values[cols] - values[rows]) ** 2 * eta[rows] * eta[cols])


def cutoff_energy(
    field: PolyField | DiscreteField,
    window: GraphWindow,
    metric: MetricData,
    radius: float,
    t,
) -> CutoffEnergy:
    """h(t) = ½Σ w_xy |∇_xy u|² η(x)η(y), bounded by Σ_{B_2R} Γ(u) m."""

    eta = cutoff_eta(metric, radius).values
    mask = ball_mask(metric, 2 * radius)
    values = _slice_values(field, window, t, _with_neighbors(window, mask))
    bound = math.fsum(gamma_values(window, values)[mask] * window.measure_array[mask])
    return CutoffEnergy(value=_cutoff_energy_value(window, values, eta), bound=bound)


@dataclass(frozen=True)
class EnergySlack:
    mass: float
    energy: float


def energy_slack(
    field: PolyField | DiscreteField,
    window: GraphWindow,
    metric: MetricData,
    radius: float,
    t,
    mode: str,
) -> EnergySlack:
    """Slack of the two localized energy inequalities at time ``t``.

    mass:   −ΣΓ(u)η²m + (2/R²)Σ_{B_3R} u²m − ∂_t Σ η²u²m
    energy: −Σ(∂_t u)²η²m + (2/R²)Σ_{B_3R} Γ(u)m − ∂_t h
    Both are nonnegative for caloric fields and R ≥ s; discrete mode uses D_t.
    """

    if radius < metric.jump_size:
        raise PreconditionError(f"R={radius:g} is below the jump size {metric.jump_size:.6g}")
    if mode not in MODES:
        raise PreconditionError(f"unknown mode '{mode}'")
    if mode == "continuous" and not isinstance(field, PolyField):
        raise PreconditionError("continuous energy checks need a polynomial field")
    _require_caloric(field, mode)

    eta = cutoff_eta(metric, radius).values
    measure = window.measure_array
    outer = ball_mask(metric, 3 * radius)
    needed = _with_neighbors(window, outer)
    interior = window.interior_mask
    values = _slice_values(field, window, t, needed)
    gamma_now = np.where(interior, gamma_values(window, values), 0.0)

    if mode == "continuous":
        rate = time_derivative(field, "continuous").on_window(window).at(t).values
        rows, cols, weights = window.edge_arrays
        mass_change = 2 * math.fsum(eta**2 * values * rate * measure)
        energy_change = math.fsum(
            weights * (values[cols] - values[rows]) * (rate[cols] - rate[rows]) * eta[rows] * eta[cols]
        )
    else:
        previous = _slice_values(field, window, t - 1, needed)
        rate = values - previous
        mass_change = math.fsum(eta**2 * (values**2 - previous**2) * measure)
        energy_change = _cutoff_energy_value(window, values, eta) - _cutoff_energy_value(window, previous, eta)

    mass_bound = -math.fsum(gamma_now * eta**2 * measure) + 2 / radius**2 * math.fsum(values[outer] ** 2 * measure[outer])
    energy_bound = -math.fsum(rate**2 * eta**2 * measure) + 2 / radius**2 * math.fsum(
        gamma_now[outer] * measure[outer]
    )
    return EnergySlack(mass=mass_bound - mass_change, energy=energy_bound - energy_change)


def calibrate_baseline(sweeps: Mapping[str, RatioSweep]) -> pd.DataFrame:
    """Stage one: record every (family, mode, R, ratio) row of the calibration sweeps."""

    frames = [sweep.table(family)[BASELINE_COLUMNS] for family, sweep in sweeps.items()]
    if not frames:
        return pd.DataFrame(columns=BASELINE_COLUMNS)
    return pd.concat(frames, ignore_index=True).sort_values(["family", "mode", "R"], ignore_index=True)


def load_baseline(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise ConfigError(f"baseline file not found: {path}")
    frame = pd.read_csv(path)
    if list(frame.columns) != BASELINE_COLUMNS:
        raise ConfigError(f"baseline columns must be {BASELINE_COLUMNS}, got {list(frame.columns)}")
    return frame


@dataclass(frozen=True)
class BaselineComparison:
    rows: pd.DataFrame
    passed: bool


def compare_to_baseline(
    sweep: RatioSweep,
    baseline: pd.DataFrame,
    family: str,
    tolerance: float = BASELINE_TOLERANCE,
) -> BaselineComparison:
    """Stage two: every ratio must stay within (1 + tolerance) of its recorded value."""

    recorded = baseline[(baseline["family"] == family) & (baseline["mode"] == sweep.mode)]
    lookup = {float(r): float(v) for r, v in zip(recorded["R"], recorded["ratio"])}
    rows = []
    for report in sweep.reports:
        reference = lookup.get(float(report.radius), math.nan)
        within = not math.isnan(reference) and report.ratio <= (1 + tolerance) * reference
        rows.append(
            {
                "family": family,
                "mode": sweep.mode,
                "R": report.radius,
                "ratio": report.ratio,
                "baseline": reference,
                "within": within,
            }
        )
        if not within:
            logger.warning("R=%g ratio %.6g exceeds baseline %.6g", report.radius, report.ratio, reference)
    frame = pd.DataFrame(rows)
    return BaselineComparison(rows=frame, passed=bool(frame["within"].all()) if rows else True)
