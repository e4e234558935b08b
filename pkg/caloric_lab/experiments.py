"""Experiment runners: one function per experiment tag, each returning tables and checks."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd
import sympy as sp

from . import settings
from .caccioppoli import calibrate_baseline, compare_to_baseline, load_baseline, ratio_sweep
from .caloric import DiscreteField, PolyField, evolve_forward_continuous, march_backward_discrete, residual
from .errors import ConfigError
from .graph import FamilyConfig, GraphWindow, build_window, degree_growth, degree_summary, generate
from .lattice import LatticeLaplacian, LatticePolynomial, lattice_symbols
from .loader import ExperimentConfig
from .metrics import (
    MetricData,
    construct_path_metric,
    cutoff_eta,
    explicit_metric,
    fit_volume_exponent,
    verify_intrinsic,
)
from .operators import VertexFunction
from .structure import (
    assemble_ancient,
    default_times,
    dimension_bound_report,
    extract_coefficients,
    harmonic_extension,
    parabolic_degree,
    sample_slices,
    solve_hierarchy,
    solve_hierarchy_window,
    vanishing_order_check,
)

logger = logging.getLogger(__name__)

LIPSCHITZ_TOLERANCE = 1e-12
ROUNDTRIP_TOLERANCE = 1e-9

EXPLANATIONS: Dict[str, str] = {
    "verify-metric": (
        "Checks the intrinsic metric condition Σ_y w_xy σ²_xy ≤ m_x at every interior vertex and the "
        "edgewise Lipschitz bound |∇η_R| ≤ σ/R of the cut-off η_R = clip(2 − ρ/R, 0, 1). "
        "Tables: slacks.csv, cutoffs.csv, degree_growth.csv."
    ),
    "caccioppoli-sweep": (
        "Measures (R²ΣΓ(u) + R⁴Σ(∂_t u)²) over Q_R against Σu² over Q_9R for a caloric field and a "
        "list of radii, optionally against a recorded baseline (5% tolerance). "
        "Tables: caccioppoli.csv, baseline.csv."
    ),
    "dimension": (
        "Compares the polynomial-chain dimension of ancient solutions of growth ≤ 2k on ℤ^d with "
        "(k+1)·dim H_2k. Table: dimension.csv."
    ),
    "structure-roundtrip": (
        "Samples an assembled ancient solution at l+1 admissible times and recovers its coefficients "
        "through the time-basis Vandermonde system, exactly and in floating point; optionally checks "
        "that coefficients of index ≥ q vanish for 4q > 2k+α+2. Tables: roundtrip.csv, vanishing.csv."
    ),
    "volume-fit": (
        "Fits m(B_R) ≈ C(1+R)^α by least squares in log-log coordinates. Tables: volume.csv, fit.csv."
    ),
    "evolve": (
        "Integrates ∂_t u = Δu forward from an initial slice and compares with a reference solution "
        "on an inner region. Table: evolution.csv."
    ),
}


@dataclass(slots=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    """Result tables, pass/fail checks and timings of one experiment run."""

    config: ExperimentConfig
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    checks: List[Check] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def lattice_operator(family: FamilyConfig) -> LatticeLaplacian:
    """Exact Laplacian for constant-coefficient lattice families."""

    inner, normalized = family, False
    if family.family == "normalized-wrap":
        inner, normalized = family.inner, True
    if inner is None or inner.family != "lattice-zd" or inner.weights.rule != "constant":
        raise ConfigError("polynomial fields need a constant-coefficient lattice-zd family")
    weight = sp.Rational(inner.weights.value)
    rule = inner.measure.rule
    if normalized or rule == "normalized":
        measure = 2 * inner.dimension * weight
    elif rule == "counting":
        measure = sp.Integer(1)
    elif rule == "constant":
        measure = sp.Rational(inner.measure.value)
    else:
        raise ConfigError("polynomial fields need a constant measure")
    return LatticeLaplacian(inner.dimension, weight / measure)


def _parse(expr: str, dimension: int, *extra: sp.Symbol) -> Tuple[sp.Expr, Tuple[sp.Symbol, ...]]:
    symbols = lattice_symbols(dimension)
    local = {str(s): s for s in symbols + extra}
    local.update({alias: s for alias, s in zip(("x", "y", "z"), symbols)})
    try:
        return sp.sympify(expr, locals=local), symbols
    except (sp.SympifyError, TypeError) as exc:
        raise ConfigError(f"cannot parse expression '{expr}': {exc}") from exc


def vertex_function(window: GraphWindow, expr: str) -> VertexFunction:
    """Evaluate an expression in the lattice coordinates on every window vertex."""

    parsed, symbols = _parse(expr, window.provider.dimension)
    fn = sp.lambdify(symbols, parsed, "numpy")
    columns = window.coords_array.T.astype(float)
    values = np.broadcast_to(np.asarray(fn(*columns), dtype=float), (len(window),)).copy()
    return VertexFunction(window, values)


def build_window_for(config: ExperimentConfig) -> GraphWindow:
    return build_window(generate(config.family), hops=config.hops)


def build_metric(config: ExperimentConfig, window: GraphWindow) -> MetricData:
    if config.metric.kind == "explicit":
        return explicit_metric(window, config.metric.length)
    return construct_path_metric(window)


def build_field(config: ExperimentConfig, window: GraphWindow | None) -> PolyField | DiscreteField:
    """Materialize the configured field."""

    spec = config.field
    if spec is None:
        raise ConfigError(f"experiment '{config.experiment}' needs a field")

    built: PolyField | DiscreteField
    if spec.kind in ("chain", "polynomial"):
        operator = lattice_operator(config.family)
        dimension = operator.dimension
        if spec.kind == "chain":
            top = LatticePolynomial.from_expr(spec.top, dimension)
            built = assemble_ancient(solve_hierarchy(top, spec.length, spec.mode, operator))
        else:
            coefficients = tuple(LatticePolynomial.from_expr(c, dimension) for c in spec.coefficients)
            built = PolyField(coefficients, spec.basis, operator)
    elif spec.kind == "window-chain":
        top = harmonic_extension(window, vertex_function(window, spec.boundary))
        built = assemble_ancient(solve_hierarchy_window(window, top, spec.length, spec.mode))
    else:
        if spec.random:
            rng = np.random.default_rng(config.seed)
            initial = VertexFunction(window, rng.uniform(-1.0, 1.0, len(window)))
        else:
            initial = vertex_function(window, spec.initial)
        built = march_backward_discrete(window, initial, spec.steps)

    if spec.scale != 1.0:
        built = built.scaled(spec.scale)
    return built


def _coord_columns(window: GraphWindow, vertex) -> Dict[str, int]:
    return {f"x{axis + 1}": value for axis, value in enumerate(window.coords(vertex))}


def _run_verify_metric(config: ExperimentConfig, report: RunReport, threads: int) -> None:
    window = build_window_for(config)
    metric = build_metric(config, window)
    intrinsic = verify_intrinsic(window, metric)
    degrees = degree_summary(window)
    report.tables["slacks"] = pd.DataFrame(
        [
            {**_coord_columns(window, v), "degree": degrees.degrees[v], "measure": window.measures[v], "slack": s}
            for v, s in intrinsic.slacks.items()
        ]
    )
    report.checks.append(Check("intrinsic-metric", intrinsic.admissible, f"min slack {intrinsic.min_slack:.6g}"))

    rows = []
    for radius in config.params.get("radii", []):
        cutoff = cutoff_eta(metric, radius)
        rows.append({"R": radius, "lipschitz_violation": cutoff.lipschitz_violation})
        report.checks.append(
            Check(
                f"cutoff-lipschitz R={radius:g}",
                cutoff.lipschitz_violation <= LIPSCHITZ_TOLERANCE,
                f"max violation {cutoff.lipschitz_violation:.3g}",
            )
        )
    if rows:
        report.tables["cutoffs"] = pd.DataFrame(rows)

    hops_list = config.params.get("hops_list")
    if hops_list:
        growth = degree_growth(window.provider, hops_list)
        report.tables["degree_growth"] = pd.DataFrame(
            [{"hops": hops, "max_degree": value} for hops, value in growth.points]
        )
        logger.info("Max degree trend is %s", "increasing" if growth.unbounded_trend else "not increasing")


def _run_caccioppoli_sweep(config: ExperimentConfig, report: RunReport, threads: int) -> None:
    window = build_window_for(config)
    metric = build_metric(config, window)
    field = build_field(config, window)
    sweep = ratio_sweep(field, window, metric, config.params["radii"], config.params["mode"], threads)
    family_id = config.params.get("family_id", config.family.tag)
    report.tables["caccioppoli"] = sweep.table(family_id)
    report.checks.append(Check("finite-ratios", sweep.bounded, f"max ratio {sweep.max_ratio:.6g}"))
    first = min(sweep.reports, key=lambda r: r.radius)
    report.checks.append(
        Check("monotone-bounded", sweep.monotone_bounded, f"ratio at R={first.radius:g} is {first.ratio:.6g}")
    )

    baseline_path = config.params.get("baseline")
    if baseline_path:
        comparison = compare_to_baseline(sweep, load_baseline(_resolve(config, baseline_path)), family_id)
        report.tables["baseline"] = comparison.rows
        report.checks.append(Check("baseline", comparison.passed, f"family {family_id}"))


def _run_dimension(config: ExperimentConfig, report: RunReport, threads: int) -> None:
    rows = []
    for dimension in config.params["dimensions"]:
        for rate in config.params["rates"]:
            for mode in config.params.get("modes", ["continuous", "discrete"]):
                result = dimension_bound_report(dimension, rate, mode)
                rows.append(
                    {
                        "d": dimension,
                        "k": rate,
                        "mode": mode,
                        "dim_H": result.dim_harmonic,
                        "dim_P": result.dim_caloric,
                        "bound": result.bound,
                        "holds": result.holds,
                    }
                )
                report.checks.append(Check(f"dimension d={dimension} k={rate:g} {mode}", result.holds))
    report.tables["dimension"] = pd.DataFrame(rows)


def _run_structure_roundtrip(config: ExperimentConfig, report: RunReport, threads: int) -> None:
    if config.field is None or config.field.kind not in ("chain", "polynomial"):
        raise ConfigError("structure-roundtrip needs a chain or polynomial field")
    field = build_field(config, None)
    length, mode = field.degree, field.mode
    times = config.params.get("times") or default_times(length, mode)

    exact = extract_coefficients(sample_slices(field, times), times, length, mode, field.operator)
    rows = []
    for index, (found, expected) in enumerate(zip(exact.coefficients, field.coefficients)):
        error = float((found - expected).max_abs_coefficient())
        rows.append({"backend": "exact", "index": index, "error": error})
    report.checks.append(Check("roundtrip-exact", all(r["error"] == 0 for r in rows)))

    window = build_window_for(config)
    numeric_field = field.on_window(window)
    numeric = extract_coefficients(sample_slices(numeric_field, times), times, length, mode)
    worst = 0.0
    for index, (found, expected) in enumerate(zip(numeric.coefficients, numeric_field.coefficients)):
        error = float(np.max(np.abs(found.values - expected.values))) / max(1.0, expected.max_abs())
        worst = max(worst, error)
        rows.append({"backend": "float", "index": index, "error": error})
    report.checks.append(Check("roundtrip-float", worst <= ROUNDTRIP_TOLERANCE, f"max relative error {worst:.3g}"))
    report.tables["roundtrip"] = pd.DataFrame(rows)

    caloric_residual = residual(field)
    report.checks.append(Check("caloric-residual", caloric_residual == 0, f"residual {caloric_residual:.3g}"))

    if "alpha" in config.params:
        rate = config.params.get("rate", parabolic_degree(field))
        vanishing = vanishing_order_check(field, rate, config.params["alpha"])
        report.tables["vanishing"] = pd.DataFrame(
            [
                {
                    "k": rate,
                    "alpha": config.params["alpha"],
                    "q": vanishing.order,
                    "holds": vanishing.holds,
                    "offending": " ".join(str(i) for i in vanishing.offending),
                }
            ]
        )
        report.checks.append(Check("vanishing-order", vanishing.holds, f"q={vanishing.order}"))


def _run_volume_fit(config: ExperimentConfig, report: RunReport, threads: int) -> None:
    window = build_window_for(config)
    metric = build_metric(config, window)
    fit = fit_volume_exponent(metric, config.params["radii"])
    report.tables["volume"] = pd.DataFrame(
        {"R": fit.radii, "measure": fit.measures, "log_residual": fit.residuals}
    )
    report.tables["fit"] = pd.DataFrame([{"exponent": fit.exponent, "constant": fit.constant}])
    expected = config.params.get("expected_exponent")
    if expected:
        low, high = expected
        report.checks.append(Check("volume-exponent", low <= fit.exponent <= high, f"alpha {fit.exponent:.4f}"))
    else:
        report.checks.append(Check("volume-exponent", math.isfinite(fit.exponent), f"alpha {fit.exponent:.4f}"))


def _run_evolve(config: ExperimentConfig, report: RunReport, threads: int) -> None:
    spec = config.field
    if spec is None or spec.initial is None:
        raise ConfigError("evolve needs field.initial")
    window = build_window_for(config)
    initial = vertex_function(window, spec.initial)
    if spec.scale != 1.0:
        initial = initial * spec.scale
    sampled = evolve_forward_continuous(window, initial, config.params["t_end"], config.params["dt"])

    reference = config.params.get("reference")
    inner = None
    fn = None
    if reference is not None:
        t = sp.Symbol("t")
        parsed, symbols = _parse(str(reference), window.provider.dimension, t)
        fn = sp.lambdify(symbols + (t,), parsed * spec.scale, "numpy")
        within = config.params.get("compare_within", config.hops // 2)
        inner = np.asarray([window.provider.radius(v) <= within for v in window.vertices])

    rows = []
    worst = 0.0
    columns = window.coords_array.T.astype(float)
    for index, t_value in enumerate(sampled.times):
        row = {"t": float(t_value), "mass": sampled.mass(index)}
        if fn is not None:
            expected = np.broadcast_to(np.asarray(fn(*columns, float(t_value)), dtype=float), (len(window),))
            error = float(np.max(np.abs(sampled.values[index][inner] - expected[inner])))
            worst = max(worst, error)
            row["max_error"] = error
        rows.append(row)
    report.tables["evolution"] = pd.DataFrame(rows)
    if fn is not None:
        tolerance = config.params.get("tolerance", 1e-6)
        report.checks.append(Check("reference", worst <= tolerance, f"max error {worst:.3g}"))


RUNNERS: Dict[str, Callable[[ExperimentConfig, RunReport, int], None]] = {
    "verify-metric": _run_verify_metric,
    "caccioppoli-sweep": _run_caccioppoli_sweep,
    "dimension": _run_dimension,
    "structure-roundtrip": _run_structure_roundtrip,
    "volume-fit": _run_volume_fit,
    "evolve": _run_evolve,
}


def _resolve(config: ExperimentConfig, path: str) -> Path:
    candidate = Path(path)
    if candidate.is_absolute() or config.source_path is None:
        return candidate
    return config.source_path.parent / candidate


def run_experiment(config: ExperimentConfig, *, threads: int | None = None) -> RunReport:
    """Execute the tagged experiment and collect its tables and checks."""

    report = RunReport(config=config)
    runner = RUNNERS[config.experiment]
    logger.info("Running %s (%s)", config.name, config.experiment)
    started = time.perf_counter()
    runner(config, report, threads or settings.THREADS)
    report.timings[config.experiment] = time.perf_counter() - started
    logger.info(
        "Finished %s in %.2fs: %s",
        config.name,
        report.timings[config.experiment],
        "pass" if report.passed else "fail",
    )
    return report


def calibrate(config: ExperimentConfig, baseline_path: Path, *, threads: int | None = None) -> pd.DataFrame:
    """Run a caccioppoli-sweep config and merge its ratios into the baseline table."""

    if config.experiment != "caccioppoli-sweep":
        raise ConfigError("calibration needs a caccioppoli-sweep experiment")
    window = build_window_for(config)
    metric = build_metric(config, window)
    field = build_field(config, window)
    sweep = ratio_sweep(field, window, metric, config.params["radii"], config.params["mode"], threads)
    family_id = config.params.get("family_id", config.family.tag)
    fresh = calibrate_baseline({family_id: sweep})
    if baseline_path.exists():
        existing = load_baseline(baseline_path)
        keep = ~((existing["family"] == family_id) & (existing["mode"] == sweep.mode))
        fresh = pd.concat([existing[keep], fresh], ignore_index=True)
    return fresh.sort_values(["family", "mode", "R"], ignore_index=True)
