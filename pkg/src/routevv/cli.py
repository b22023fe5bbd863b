"""Command line entry point: ``routevv <command>``.

Settings come from built-in defaults, then an optional JSON config file
(``--config``, or the path in ``$ROUTEVV_CONFIG``), then command-line flags.
Later sources win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from .geo_core import GeoDomainError
from .harness import AnalysisSettings, analyze_route, run_suite
from .netroute import (
    BUFFER_WIDTHS,
    DegenerateRouteError,
    ModalNetwork,
    NetworkSpec,
    TestCase,
    UnknownNodeError,
    case_id,
    generate_test_suite,
    mode_set_label,
    read_manifest,
    route_with_mode_priority,
    write_manifest,
)
from .popgrid import GridMismatchError, GridParseError, load_grid, save_grid
from .route_io import AberrationThresholds, KmlError, NetworkFileError, RouteDocument, read_kml, validate_geometry, write_kml

CONFIG_ENV = "ROUTEVV_CONFIG"


@dataclass
class RunConfig:
    day_grid: str | None = None
    night_grid: str | None = None
    nodes: str | None = None
    edges: str | None = None
    kml_dir: str | None = None
    manifest: str | None = None
    origins: list[str] = field(default_factory=list)
    destination: str | None = None
    out_dir: str = "routevv-out"
    widths: list[float] = field(default_factory=lambda: [800.0, 2500.0])
    spacing_factor: float = 20.0
    subsample: int = 4
    thresholds: AberrationThresholds = field(default_factory=AberrationThresholds)
    seed: int = 0
    workers: int | None = None

    def __post_init__(self) -> None:
        if isinstance(self.thresholds, dict):
            self.thresholds = AberrationThresholds(**self.thresholds)
        self.widths = [float(w) for w in self.widths]
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ValueError("buffer widths must be positive")
        if self.spacing_factor < 10:
            raise ValueError("spacing_factor must be >= 10 (spacing <= w/10)")
        if self.subsample < 2:
            raise ValueError("subsample must be >= 2")

    @property
    def settings(self) -> AnalysisSettings:
        return AnalysisSettings(self.spacing_factor, self.subsample)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        with open(path, encoding="utf-8") as fh:
            values = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        # Relative paths in a config file are relative to the file.
        base = os.path.dirname(os.path.abspath(path))
        for key in ("day_grid", "night_grid", "nodes", "edges", "kml_dir", "manifest"):
            if values.get(key) and not os.path.isabs(values[key]):
                values[key] = os.path.join(base, values[key])
        values["origins"] = [
            "@" + os.path.join(base, o[1:]) if o.startswith("@") and not os.path.isabs(o[1:]) else o
            for o in values.get("origins", [])
        ]
    cfg = RunConfig(**values)
    thr = {k: overrides.pop(k) for k in list(overrides) if k.startswith("thr_")}
    thr = {k[4:]: v for k, v in thr.items() if v is not None}
    if thr:
        cfg = replace(cfg, thresholds=replace(cfg.thresholds, **thr))
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


# ----------------------------------------------------------------------------
# Presentation
# ----------------------------------------------------------------------------


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(0), rounding=ROUND_HALF_UP))


def km(x_m: float) -> str:
    return f"{x_m / 1000:.3f}"


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _fail(msg: str, code: int = 2) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------


def cmd_route(cfg: RunConfig, origin: str, dest: str) -> int:
    if not (cfg.nodes and cfg.edges):
        return _fail("route needs --nodes and --edges")
    try:
        net = ModalNetwork.from_csv(cfg.nodes, cfg.edges)
        outcome = route_with_mode_priority(net, origin, dest)
    except (UnknownNodeError, DegenerateRouteError, NetworkFileError, OSError) as exc:
        return _fail(str(exc).strip("'\""))

    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest_path = os.path.join(cfg.out_dir, "manifest.jsonl")
    existing = read_manifest(manifest_path) if os.path.exists(manifest_path) else []
    modes = None
    kml_rel = None
    if outcome.failed:
        print(f"{origin} -> {dest}: FAILED, no route under any mode plan")
    else:
        modes = tuple(m for m in ("rail", "hh_truck", "barge") if m in outcome.mode_set)
        kml_rel = os.path.join("routes", f"{origin}-{dest}.kml")
        doc = RouteDocument(
            f"{origin}-{dest}",
            outcome.route,
            {"origin": origin, "destination": dest, "mode_plan": mode_set_label(modes)},
        )
        os.makedirs(os.path.join(cfg.out_dir, "routes"), exist_ok=True)
        write_kml(doc, os.path.join(cfg.out_dir, kml_rel))
        print(
            f"{origin} -> {dest}: {mode_set_label(modes)}, {outcome.route.n_segments} segments, "
            f"{km(outcome.path.length)} km -> {os.path.join(cfg.out_dir, kml_rel)}"
        )
    new = [TestCase(case_id(origin, w), origin, dest, w, modes, kml_rel) for w in cfg.widths]
    ids = {c.id for c in new}
    write_manifest(manifest_path, [c for c in existing if c.id not in ids] + new)
    return 0


def _load_cfg_grid(cfg: RunConfig):
    if not (cfg.day_grid and cfg.night_grid):
        raise FileNotFoundError("no population grid configured (--day/--night)")
    return load_grid(cfg.day_grid, cfg.night_grid)


def cmd_analyze(cfg: RunConfig, kml_path: str, as_json: bool = False) -> int:
    try:
        doc = read_kml(kml_path)
        grid = _load_cfg_grid(cfg)
        results = [analyze_route(doc.id, doc.route, w, grid, cfg.settings) for w in cfg.widths]
    except (KmlError, GeoDomainError, GridParseError, GridMismatchError, OSError) as exc:
        return _fail(f"{kml_path}: {exc}")

    if any(p.population.no_overlap for p, _ in results):
        print(f"warning: {doc.id}: route buffer does not overlap the population grid", file=sys.stderr)
    payload = {
        "route": doc.id,
        "kml": kml_path,
        "results": [{"primary": p.to_dict(), "independent": i.to_dict()} for p, i in results],
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    out_path = os.path.join(cfg.out_dir, f"analysis-{doc.id}.json")
    _write_json(out_path, payload)
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    header = f"{'width_m':>8} {'method':<12} {'day':>10} {'night':>10} {'average':>10} {'area_km2':>10} {'per_km2':>10} {'dist_km':>10}"
    print(f"route {doc.id}  ({doc.route.n_segments} segments)")
    print(header)
    for pair in results:
        for r in pair:
            dist = r.distance_ground_corrected if r.method == "primary" else r.distance_geodesic
            print(
                f"{r.width:>8.0f} {r.method:<12} {round_half_up(r.population.day):>10d} "
                f"{round_half_up(r.population.night):>10d} {round_half_up(r.population.average):>10d} "
                f"{r.density.area:>10.3f} {r.density.density:>10.1f} {km(dist):>10}"
            )
    print(f"-> {out_path}")
    return 0


def _read_origins(values: Sequence[str]) -> list[str]:
    out: list[str] = []
    for v in values:
        if v.startswith("@"):
            with open(v[1:], encoding="utf-8") as fh:
                out.extend(line.strip() for line in fh if line.strip() and not line.startswith("#"))
        else:
            out.extend(x for x in v.split(",") if x)
    return out


def cmd_suite(cfg: RunConfig) -> int:
    net = None
    try:
        if cfg.nodes and cfg.edges:
            net = ModalNetwork.from_csv(cfg.nodes, cfg.edges)
        grid = _load_cfg_grid(cfg) if (cfg.day_grid and cfg.night_grid) else None
    except (NetworkFileError, GridParseError, GridMismatchError, OSError, ValueError) as exc:
        return _fail(str(exc))

    base_dir = None
    kml_dir = cfg.kml_dir
    if cfg.manifest:
        try:
            cases = read_manifest(cfg.manifest)
        except (OSError, ValueError) as exc:
            return _fail(str(exc))
        base_dir = os.path.dirname(os.path.abspath(cfg.manifest))
    elif cfg.origins:
        if net is None or cfg.destination is None:
            return _fail("an origins list needs --nodes/--edges and --dest")
        try:
            origins = _read_origins(cfg.origins)
            suite = generate_test_suite(net, origins, cfg.destination, cfg.widths)
        except (UnknownNodeError, DegenerateRouteError, OSError, ValueError) as exc:
            return _fail(str(exc).strip("'\""))
        os.makedirs(os.path.join(cfg.out_dir, "routes"), exist_ok=True)
        cases = []
        for case, doc in suite:
            if doc is not None:
                rel = os.path.join("routes", f"{case.id}.kml")
                write_kml(doc, os.path.join(cfg.out_dir, rel))
                case = replace(case, kml=rel)
            cases.append(case)
        write_manifest(os.path.join(cfg.out_dir, "manifest.jsonl"), cases)
        base_dir = os.path.abspath(cfg.out_dir)
    else:
        return _fail("suite needs --manifest or --origins")

    report = run_suite(cases, grid, net, kml_dir, cfg.settings, cfg.workers, base_dir)
    report.write(cfg.out_dir, cfg.seed, cfg.to_dict())
    counts = report.summary()["counts"]
    print(
        f"suite: {counts['analyzed']} cases analysed, {counts['route_failures']} route failures, "
        f"{counts['errors']} errors; records pass/warn/fail = {counts['pass']}/{counts['warn']}/{counts['fail']}; "
        f"pass share {report.pass_share:.1%}; verdict {report.verdict.upper()}"
        + (" (vacuous)" if report.vacuous else "")
    )
    for err in report.errors:
        print(f"  error {err['id']}: {err['error']}", file=sys.stderr)
    return report.exit_status


def cmd_validate(cfg: RunConfig, kml_path: str, as_json: bool = False, write_out: bool = False) -> int:
    try:
        doc = read_kml(kml_path)
    except (KmlError, GeoDomainError, OSError) as exc:
        return _fail(f"{kml_path}: {exc}")
    found = validate_geometry(doc.route, cfg.thresholds)
    payload = {
        "route": doc.id,
        "kml": kml_path,
        "aberrations": [a.to_dict() for a in found],
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    if write_out:
        _write_json(os.path.join(cfg.out_dir, f"validate-{doc.id}.json"), payload)
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"{doc.id}: {len(found)} aberration(s)")
        for a in found:
            where = "vertex" if len(a.location) == 1 else "segments"
            loc = ",".join(str(i) for i in a.location)
            unit = "deg" if a.kind == "spike" else "m"
            print(f"  {a.kind:<18} {where} {loc:<10} {a.measure:.3f} {unit}")
    return 1 if found else 0


def cmd_gen_network(cfg: RunConfig, n_nodes: int, n_origins: int, with_grid: bool) -> int:
    from .synth import demo_suite

    demo = demo_suite(cfg.seed, n_origins, NetworkSpec(n_nodes=n_nodes))
    os.makedirs(cfg.out_dir, exist_ok=True)
    nodes_path = os.path.join(cfg.out_dir, "nodes.csv")
    edges_path = os.path.join(cfg.out_dir, "edges.csv")
    demo.network.to_csv(nodes_path, edges_path)
    with open(os.path.join(cfg.out_dir, "origins.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(demo.origins) + "\n")
    suite_cfg = {
        "nodes": "nodes.csv",
        "edges": "edges.csv",
        "origins": ["@origins.txt"],
        "destination": demo.destination,
        "seed": cfg.seed,
    }
    if with_grid:
        save_grid(demo.grid, os.path.join(cfg.out_dir, "day.asc"), os.path.join(cfg.out_dir, "night.asc"))
        suite_cfg.update(day_grid="day.asc", night_grid="night.asc")
    _write_json(os.path.join(cfg.out_dir, "config.json"), suite_cfg)
    print(
        f"network: {len(demo.network.nodes)} nodes, {len(demo.network.edges)} edges; "
        f"{len(demo.origins)} origins -> {demo.destination}; written to {cfg.out_dir}"
    )
    return 0


# ----------------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--seed", type=int)


def _data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--day", dest="day_grid", help="day population ASCII grid")
    p.add_argument("--night", dest="night_grid", help="night population ASCII grid")
    p.add_argument("--width", dest="widths", type=float, action="append", help="buffer width in m (repeatable)")
    p.add_argument("--spacing-factor", type=float, help="buffer-area quadrature spacing = w / factor (>= 10)")
    p.add_argument("--subsample", type=int, help="k for k x k area-weighted sub-sampling")


def _network(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nodes", help="nodes.csv")
    p.add_argument("--edges", help="edges.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="routevv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("route", help="route one origin-destination pair with the mode ladder")
    _common(p)
    _network(p)
    p.add_argument("--width", dest="widths", type=float, action="append")
    p.add_argument("--origin", required=True)
    p.add_argument("--dest", dest="destination", required=True)

    p = sub.add_parser("analyze", help="buffer population, density and distance for one KML route")
    _common(p)
    _data(p)
    p.add_argument("kml")
    p.add_argument("--json", action="store_true", help="print JSON instead of the table")

    p = sub.add_parser("suite", help="run a differential-verification suite")
    _common(p)
    _data(p)
    _network(p)
    p.add_argument("--manifest", help="suite manifest (JSON lines)")
    p.add_argument("--kml-dir", help="directory that manifest KML paths are relative to")
    p.add_argument("--origins", action="append", help="comma-separated origin ids or @file")
    p.add_argument("--dest", dest="destination")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("validate", help="list geometry aberrations in a KML route")
    _common(p)
    p.add_argument("kml")
    p.add_argument("--json", action="store_true")
    p.add_argument("--dup-m", dest="thr_duplicate_m", type=float)
    p.add_argument("--spike-deg", dest="thr_spike_turn_deg", type=float)
    p.add_argument("--spike-leg-m", dest="thr_spike_leg_m", type=float)
    p.add_argument("--jump-m", dest="thr_jump_m", type=float)

    p = sub.add_parser("gen-network", help="write a seeded synthetic network (and grid)")
    _common(p)
    p.add_argument("--nodes", dest="n_nodes", type=int, default=NetworkSpec().n_nodes)
    p.add_argument("--origins", dest="n_origins", type=int, default=100)
    p.add_argument("--with-grid", action="store_true")
    return parser


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    overrides = {k: v for k, v in opts.items() if k in _CONFIG_KEYS or k.startswith("thr_")}
    try:
        cfg = load_config(opts.get("config"), overrides)
    except (OSError, ValueError, TypeError) as exc:
        return _fail(f"config: {exc}")
    if args.command in ("route", "suite") and not set(cfg.widths) <= set(BUFFER_WIDTHS):
        return _fail(f"suite buffer widths must be drawn from {BUFFER_WIDTHS}, got {cfg.widths}")

    if args.command == "route":
        return cmd_route(cfg, args.origin, cfg.destination)
    if args.command == "analyze":
        return cmd_analyze(cfg, args.kml, args.json)
    if args.command == "suite":
        return cmd_suite(cfg)
    if args.command == "validate":
        return cmd_validate(cfg, args.kml, args.json, write_out=opts.get("out_dir") is not None)
    if args.command == "gen-network":
        return cmd_gen_network(cfg, args.n_nodes, args.n_origins, args.with_grid)
    return 2


if __name__ == "__main__":
    sys.exit(main())
