"""``twinvanet`` command line.

Exit codes: 0 success, 1 validation/usage error, 2 runtime or I/O error,
3 a ``--check-paper`` assertion failed. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time

from . import __version__
from .clustering import build_features, compute_centroids, read_poi_table, write_cluster_file, write_poi_table
from .config import AppConfig, apply_overrides, default_toml, load_config
from .geocode import GeocodeError
from .kpi import (KpiReport, SweepError, check_paper, emit_latency_series, emit_report_csv, emit_table,
                  parse_report_csv, sweep)
from .pipeline import StageError, clean_records, cluster_features, make_geocoder, pipeline
from .trajectory import ParseError, read_records, serialize_records
from .twin_sim import ConfigError, latency_kpi, computation_speed, run_scenario

log = logging.getLogger("twinvanet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


class KeyValueFormatter(logging.Formatter):
    def format(self, record):
        ts = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(record.created))
        return f"{ts} level={record.levelname} logger={record.name} msg={record.getMessage()}"


def setup_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def build_parser() -> Parser:
    p = Parser(prog="twinvanet", description="POI extraction from taxi trajectories and V2X digital-twin latency simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp):
        sp.add_argument("--config", help="TOML config file; flags override its values")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        return sp

    sp = common(sub.add_parser("ingest", help="parse, filter and de-outlier trajectories"))
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--strict", action="store_true", default=None)
    sp.add_argument("--start", help="keep records at or after this UTC instant")
    sp.add_argument("--end", help="keep records before this UTC instant")
    sp.add_argument("--gap", type=float, dest="gap_threshold")

    for name, help_ in (("cluster", "cluster cleaned trajectories into POIs"),
                        ("pipeline", "ingest, cluster and geocode in one go")):
        sp = common(sub.add_parser(name, help=help_))
        sp.add_argument("--in", dest="input", required=True)
        sp.add_argument("--out", required=True, help="POI table")
        sp.add_argument("--cells-out", help="per-cell cluster labels")
        sp.add_argument("--manifest", help="run manifest (JSON)")
        sp.add_argument("--k", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--resolution", type=int, dest="cell_resolution")
        sp.add_argument("--method", choices=["kmeans", "som"])
        if name == "pipeline":
            add_geocode_flags(sp)

    sp = common(sub.add_parser("geocode", help="resolve POI centroids to addresses"))
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    add_geocode_flags(sp)

    sp = common(sub.add_parser("simulate", help="run one scenario"))
    sp.add_argument("--deployment", choices=["physical", "edge", "cloud", "hybrid"])
    sp.add_argument("--link", choices=["wifi", "cellular"])
    sp.add_argument("--n", type=int, dest="n_vehicles")
    sp.add_argument("--duration", type=float, dest="sim_duration")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="metrics CSV (default stdout)")

    sp = common(sub.add_parser("sweep", help="deployment x link x n sweep"))
    sp.add_argument("--out", help="report CSV (default stdout)")
    sp.add_argument("--markdown", help="write the computation-speed table here")
    sp.add_argument("--series-dir", help="write per-series latency CSVs here")
    sp.add_argument("--n-list", type=lambda s: [int(x) for x in s.split(",")], dest="n_list")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--check-paper", action="store_true")

    sp = common(sub.add_parser("report", help="render a sweep report"))
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    sp.add_argument("--series-dir")
    sp.add_argument("--check-paper", action="store_true")

    common(sub.add_parser("config", help="print a config file with every default"))
    return p


def add_geocode_flags(sp):
    sp.add_argument("--stub", help="offline provider table: lines of lat,lon,display_name")
    sp.add_argument("--cache", help="append-only geocode cache file")
    sp.add_argument("--offline", action="store_true", default=None, help="forbid all network use")
    sp.add_argument("--user-agent")
    sp.add_argument("--url", help="Nominatim base URL (default $TWINVANET_GEOCODE_URL or the public host)")
    sp.add_argument("--zoom", type=int)


def overrides(args, names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


def resolve_config(args) -> AppConfig:
    cfg = load_config(args.config)
    cfg.ingest = apply_overrides(cfg.ingest, "ingest", overrides(args, ["strict", "start", "end", "gap_threshold"]))
    cfg.cluster = apply_overrides(cfg.cluster, "cluster",
                                  overrides(args, ["k", "seed", "cell_resolution", "method"]))
    cfg.geocode = apply_overrides(cfg.geocode, "geocode", {
        **overrides(args, ["stub", "cache", "offline", "url", "zoom"]),
        **({"user_agent": args.user_agent} if getattr(args, "user_agent", None) else {}),
    })
    cfg.scenario = apply_overrides(cfg.scenario, "scenario",
                                   overrides(args, ["deployment", "link", "n_vehicles", "sim_duration", "seed"]))
    cfg.sweep = apply_overrides(cfg.sweep, "sweep", overrides(args, ["n_list", "workers"]))
    cfg.scenario.validate()
    return cfg


def write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def report_checks(checks) -> bool:
    ok = True
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'} {c.name} {c.detail}".rstrip(), file=sys.stderr)
        ok &= c.ok
    return ok


def cmd_ingest(args, cfg):
    parsed = read_records(args.input, strict=cfg.ingest.strict)
    counts = {"rows": parsed.rows, "rejected_rows": len(parsed.errors)}
    records = clean_records(parsed.records, cfg.ingest, counts)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        serialize_records(records, fh)
    log.info("ingest " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_cluster(args, cfg):
    parsed = read_records(args.input, strict=cfg.ingest.strict)
    features = build_features(parsed.records, cfg.cluster.cell_resolution)
    if not features:
        raise StageError("features", "input has no records")
    km, som = cluster_features(features, cfg.cluster)
    labels = km.assignments if cfg.cluster.method == "kmeans" else som.predict(features)
    write_poi_table(args.out, compute_centroids(labels, features))
    if args.cells_out:
        write_cluster_file(args.cells_out, features, km.assignments, som.predict(features))
    return EXIT_OK


def cmd_pipeline(args, cfg):
    res = pipeline(args.input, cfg.ingest, cfg.cluster, cfg.geocode, poi_out=args.out,
                   cells_out=args.cells_out, manifest_out=args.manifest)
    for label, why in res.geocode_failures.items():
        log.warning("unresolved label=%d reason=%s", label, why)
    return EXIT_OK


def cmd_geocode(args, cfg):
    from .geocode import annotate_pois

    client = make_geocoder(cfg.geocode)
    if client is None:
        raise UsageError("live geocoding needs --user-agent (or use --stub / --offline with --cache)")
    res = annotate_pois(read_poi_table(args.input), client)
    write_poi_table(args.out, res.clusters)
    log.info("geocode resolved=%d unresolved=%d provider_calls=%d", res.resolved, len(res.failures),
             client.provider_calls)
    return EXIT_OK


def cmd_simulate(args, cfg):
    sc = cfg.scenario
    m = run_scenario(sc)
    lat = latency_kpi(m) if m.delivered else float("nan")
    rep = KpiReport()
    from .kpi import KpiRow
    rep.add(KpiRow(sc.deployment.value, sc.link.value, sc.n_vehicles, lat, m.percentile(95), m.generated,
                   m.delivered, m.dropped, computation_speed(sc.deployment, sc.n_vehicles, sc)))
    write_text(args.out, emit_report_csv(rep))
    log.info("simulate in_flight=%d busy=%s", m.in_flight, m.busy_time)
    return EXIT_OK


def cmd_sweep(args, cfg):
    s = cfg.sweep
    report = sweep(s.deployments, s.links, s.n_list, cfg.scenario, workers=s.workers)
    write_text(args.out, emit_report_csv(report))
    if args.markdown:
        write_text(args.markdown, emit_table(report, "markdown"))
    if args.series_dir:
        emit_latency_series(report, args.series_dir)
    if args.check_paper and not report_checks(check_paper(report, cfg.scenario)):
        return EXIT_CHECK
    return EXIT_OK


def cmd_report(args, cfg):
    with open(args.input, encoding="utf-8") as fh:
        report = parse_report_csv(fh.read())
    write_text(None, emit_table(report, args.format))
    if args.series_dir:
        emit_latency_series(report, args.series_dir)
    if args.check_paper and not report_checks(check_paper(report, cfg.scenario)):
        return EXIT_CHECK
    return EXIT_OK


def cmd_config(args, cfg):
    write_text(None, default_toml())
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "cluster": cmd_cluster, "pipeline": cmd_pipeline, "geocode": cmd_geocode,
    "simulate": cmd_simulate, "sweep": cmd_sweep, "report": cmd_report, "config": cmd_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging(args.verbose)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ParseError, UsageError, csv.Error) as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except (OSError, StageError, SweepError, GeocodeError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
