"""Differential verification of route analyses.

Every case is analysed twice, by a primary method family and by an
independent one. The pairs are compared metric by metric as signed percent
differences against the independent value and gated:

    |pd| <= 1  pass,   1 < |pd| <= 5  warn,   |pd| > 5  fail.

A suite passes when nothing fails and strictly more than half of the gated
records pass.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .geo_core import RoutePolyline, buffer_area, geodesic_length, ground_corrected_length, planar_length_mercator
from .netroute import ModalNetwork, TestCase, route_with_mode_priority
from .popgrid import (
    WHOLE_ROUTE,
    DensityResult,
    PopulationGrid,
    PopulationTriplet,
    area_weighted_extract,
    density_whole_route,
    load_grid,
)
from .route_io import read_kml

PASS, WARN, FAIL, UNDEFINED = "pass", "warn", "fail", "undefined"
PASS_LIMIT = 1.0
WARN_LIMIT = 5.0

METRIC_POPULATION = "population_average"
METRIC_DENSITY = "density"
METRIC_DISTANCE = "distance"
METRICS = (METRIC_DENSITY, METRIC_DISTANCE, METRIC_POPULATION)

CSV_COLUMNS = ("case_id", "metric", "candidate", "reference", "pct_diff", "gate")


class UndefinedComparisonError(ValueError):
    """Percent difference against a non-positive reference."""


class PairingError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisSettings:
    spacing_factor: float = 20.0
    subsample: int = 4

    def __post_init__(self) -> None:
        if self.spacing_factor < 10:
            raise ValueError("spacing factor must be >= 10 (spacing <= w/10)")
        if self.subsample < 2:
            raise ValueError("subsample factor must be >= 2")


@dataclass(frozen=True)
class AnalysisResult:
    case_id: str
    width: float
    population: PopulationTriplet
    density: DensityResult
    distance_planar_mercator: float
    distance_geodesic: float
    distance_ground_corrected: float
    method: str  # "primary" | "independent"

    def to_dict(self) -> dict:
        return asdict(self)


def _distances(route: RoutePolyline) -> tuple[float, float, float]:
    return planar_length_mercator(route), geodesic_length(route), ground_corrected_length(route)


def analyze_primary(
    case_id: str, route: RoutePolyline, w: float, grid: PopulationGrid, settings: AnalysisSettings = AnalysisSettings()
) -> AnalysisResult:
    """Centroid-rule population, quadrature buffer area, Mercator distance."""
    density = density_whole_route(grid, route, w, settings.spacing_factor)
    return AnalysisResult(case_id, w, density.population, density, *_distances(route), "primary")


def analyze_independent(
    case_id: str, route: RoutePolyline, w: float, grid: PopulationGrid, settings: AnalysisSettings = AnalysisSettings()
) -> AnalysisResult:
    """Area-weighted population over raster coverage, geodesic distance."""
    pop, area_m2 = area_weighted_extract(grid, route, w, settings.subsample)
    if area_m2 <= 0:
        # Buffer entirely off the raster: nothing to weigh, population is zero.
        area_m2 = buffer_area(route, w, w / settings.spacing_factor)
    density = DensityResult(WHOLE_ROUTE, pop.average / (area_m2 / 1e6), pop, area_m2 / 1e6)
    return AnalysisResult(case_id, w, pop, density, *_distances(route), "independent")


def analyze_route(case_id, route, w, grid, settings: AnalysisSettings = AnalysisSettings()):
    return (
        analyze_primary(case_id, route, w, grid, settings),
        analyze_independent(case_id, route, w, grid, settings),
    )


# ----------------------------------------------------------------------------
# Comparison
# ----------------------------------------------------------------------------


def percent_difference(candidate: float, reference: float) -> float:
    if not reference > 0:
        raise UndefinedComparisonError(f"reference value {reference} is not positive")
    return 100.0 * (candidate - reference) / reference


def gate(pd: float) -> str:
    if not math.isfinite(pd):
        raise ValueError(f"percent difference must be finite, got {pd}")
    a = abs(pd)
    if a <= PASS_LIMIT:
        return PASS
    if a <= WARN_LIMIT:
        return WARN
    return FAIL


@dataclass(frozen=True)
class ComparisonRecord:
    case_id: str
    metric: str
    candidate: float
    reference: float
    pct_diff: float | None
    gate: str

    @classmethod
    def build(cls, case_id: str, metric: str, candidate: float, reference: float) -> ComparisonRecord:
        try:
            pd = percent_difference(candidate, reference)
        except UndefinedComparisonError:
            return cls(case_id, metric, float(candidate), float(reference), None, UNDEFINED)
        return cls(case_id, metric, float(candidate), float(reference), pd, gate(pd))

    def csv_row(self) -> list[str]:
        return [
            self.case_id,
            self.metric,
            repr(self.candidate),
            repr(self.reference),
            "" if self.pct_diff is None else repr(self.pct_diff),
            self.gate,
        ]


def compare_case(case: TestCase | str, primary: AnalysisResult, independent: AnalysisResult) -> list[ComparisonRecord]:
    cid = case if isinstance(case, str) else case.id
    if primary.case_id != cid or independent.case_id != cid:
        raise PairingError(f"results for {primary.case_id}/{independent.case_id} paired with case {cid}")
    if primary.width != independent.width or (not isinstance(case, str) and case.width != primary.width):
        raise PairingError(f"case {cid}: buffer widths differ")
    return [
        ComparisonRecord.build(cid, METRIC_DENSITY, primary.density.density, independent.density.density),
        ComparisonRecord.build(cid, METRIC_DISTANCE, primary.distance_ground_corrected, independent.distance_geodesic),
        ComparisonRecord.build(cid, METRIC_POPULATION, primary.population.average, independent.population.average),
    ]


def suite_verdict(records: Iterable[ComparisonRecord]) -> tuple[str, float]:
    """(verdict, pass share) over records with a defined percent difference."""
    gates = [r.gate for r in records if r.gate != UNDEFINED]
    if not gates:
        return PASS, 0.0
    share = gates.count(PASS) / len(gates)
    ok = FAIL not in gates and share > 0.5
    return (PASS if ok else FAIL), share


@dataclass
class SuiteReport:
    records: list[ComparisonRecord]
    failures: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    n_cases: int = 0

    def __post_init__(self) -> None:
        self.records = sorted(self.records, key=lambda r: (r.case_id, r.metric))
        self.failures = sorted(self.failures, key=lambda f: f["id"])
        self.errors = sorted(self.errors, key=lambda e: e["id"])
        self.verdict, self.pass_share = suite_verdict(self.records)

    @property
    def vacuous(self) -> bool:
        return not any(r.gate != UNDEFINED for r in self.records)

    @property
    def exit_status(self) -> int:
        if self.vacuous:
            return 2
        return 0 if self.verdict == PASS else 1

    def metric_shares(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for m in sorted({r.metric for r in self.records}):
            gated = [r for r in self.records if r.metric == m and r.gate != UNDEFINED]
            out[m] = sum(r.gate == PASS for r in gated) / len(gated) if gated else None
        return out

    def gate_counts(self) -> dict[str, int]:
        counts = {PASS: 0, WARN: 0, FAIL: 0, UNDEFINED: 0}
        for r in self.records:
            counts[r.gate] += 1
        return counts

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(r.csv_row())
        return buf.getvalue()

    def summary(self, seed: int | None = None, config: dict | None = None) -> dict:
        return {
            "verdict": self.verdict,
            "vacuous": self.vacuous,
            "pass_share": self.pass_share,
            "per_metric_pass_share": self.metric_shares(),
            "counts": {
                "cases": self.n_cases,
                "analyzed": len({r.case_id for r in self.records}),
                "route_failures": len(self.failures),
                "errors": len(self.errors),
                "records": len(self.records),
                **self.gate_counts(),
            },
            "failures": self.failures,
            "errors": self.errors,
            "seed": seed,
            "config": config or {},
        }

    def to_json(self, seed: int | None = None, config: dict | None = None) -> str:
        return json.dumps(self.summary(seed, config), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir, seed: int | None = None, config: dict | None = None) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "report.csv")
        json_path = os.path.join(out_dir, "summary.json")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json(seed, config))
        return csv_path, json_path


# ----------------------------------------------------------------------------
# Suite runner
# ----------------------------------------------------------------------------


class _GridCache:
    def __init__(self, default: PopulationGrid | None, base_dir: str | None):
        self.default = default
        self.base_dir = base_dir or "."
        self._cache: dict[tuple[str, str], PopulationGrid] = {}

    def resolve(self, spec: dict | None) -> PopulationGrid:
        if spec is None:
            if self.default is None:
                raise FileNotFoundError("no population grid configured")
            return self.default
        day = os.path.join(self.base_dir, spec["day"])
        night = os.path.join(self.base_dir, spec["night"])
        key = (day, night)
        if key not in self._cache:
            self._cache[key] = load_grid(day, night)
        return self._cache[key]


def _resolve_geometry(
    case: TestCase, net: ModalNetwork | None, kml_dir: str | None, base_dir: str | None, routed: dict
) -> RoutePolyline:
    """A case's own KML wins; otherwise route it on the network."""
    if case.kml is not None:
        return read_kml(os.path.join(kml_dir or base_dir or "", case.kml)).route
    if net is not None:
        key = (case.origin, case.destination)
        if key not in routed:
            routed[key] = route_with_mode_priority(net, case.origin, case.destination)
        outcome = routed[key]
        if outcome.failed:
            raise LookupError(f"no route from {case.origin} to {case.destination}")
        return outcome.route
    raise FileNotFoundError(f"case {case.id}: no KML and no network to route on")


def run_suite(
    cases: Sequence[TestCase],
    grid: PopulationGrid | None = None,
    net: ModalNetwork | None = None,
    kml_dir: str | None = None,
    settings: AnalysisSettings = AnalysisSettings(),
    workers: int | None = None,
    base_dir: str | None = None,
) -> SuiteReport:
    """Analyse every routable case with both method families and compare.

    Route-generation failures are listed but never gated. Per-case problems
    (missing geometry or grid) become error entries; the suite always
    completes. ``base_dir`` anchors relative grid and KML paths in case
    entries; ``kml_dir``, when given, takes over for KML paths.
    """
    grids = _GridCache(grid, base_dir)
    failures = []
    errors = []
    jobs = []
    routed: dict = {}
    for case in cases:
        if case.failed:
            failures.append({"id": case.id, "origin": case.origin, "destination": case.destination})
            continue
        try:
            route = _resolve_geometry(case, net, kml_dir, base_dir, routed)
            case_grid = grids.resolve(case.grid)
        except Exception as exc:  # recorded per case, suite continues
            errors.append({"id": case.id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        jobs.append((case, route, case_grid))

    def work(job):
        case, route, case_grid = job
        try:
            primary, independent = analyze_route(case.id, route, case.width, case_grid, settings)
            return compare_case(case, primary, independent), None
        except Exception as exc:
            return None, {"id": case.id, "error": f"{type(exc).__name__}: {exc}"}

    records: list[ComparisonRecord] = []
    n_workers = workers or os.cpu_count() or 1
    if n_workers == 1 or len(jobs) <= 1:
        results = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(work, jobs))
    for recs, err in results:
        if err is not None:
            errors.append(err)
        else:
            records.extend(recs)
    return SuiteReport(records, failures, errors, n_cases=len(cases))
