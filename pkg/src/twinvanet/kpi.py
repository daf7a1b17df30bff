"""Deployment x link x fleet-size sweeps, Table-II style tables and latency series."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .twin_sim import (Deployment, LinkKind, ScenarioConfig, computation_speed, latency_kpi, run_scenario)

DEFAULT_N = (40, 80, 120, 160, 200, 240, 300)
TABLE_N = (40, 80, 120, 160, 200)

# Published reference computation speeds (computations per sec) by deployment column and n
PAPER_SPEED = {
    "physical": {40: 11.210762, 80: 5.605381166, 120: 3.736920777, 160: 2.802690583, 200: 2.242152466},
    "cloud": {40: 112.10762, 80: 56.05381166, 120: 37.369207, 160: 28.02690583, 200: 22.42152466},
    "edge_hybrid": {40: 33.632287, 80: 33.01, 120: 32.2577, 160: 33.632287, 200: 33.632287},
}
EDGE_REL_TOL = 0.045
RATIO_BAND = (1.65, 1.75)
# (series, n) -> quoted mean latency in seconds
LATENCY_ANCHORS = {
    "cloud_edge_cellular": {40: 2.0637, 300: 15.0469},
    "wifi_hybrid": {160: 8.07168, 300: 13.05},
}
ANCHOR_FACTOR = 3.0

CSV_HEADER = ["deployment", "link", "n_vehicles", "mean_latency_s", "p95_latency_s",
              "generated", "delivered", "dropped", "comp_speed_analytic"]


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class KpiRow:
    deployment: str
    link: str
    n: int
    mean_latency: float
    p95_latency: float
    generated: int
    delivered: int
    dropped: int
    comp_speed: float

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.deployment, self.link, self.n)


@dataclass
class KpiReport:
    rows: dict[tuple[str, str, int], KpiRow] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, row: KpiRow) -> None:
        if row.key in self.rows:
            raise SweepError(f"duplicate sweep cell {row.key}")
        self.rows[row.key] = row

    def __len__(self):
        return len(self.rows)

    def sorted_rows(self) -> list[KpiRow]:
        order = {d.value: i for i, d in enumerate(Deployment)}
        return sorted(self.rows.values(), key=lambda r: (order.get(r.deployment, 99), r.link, r.n))

    def pairs(self) -> list[tuple[str, str]]:
        seen = []
        for r in self.sorted_rows():
            if (r.deployment, r.link) not in seen:
                seen.append((r.deployment, r.link))
        return seen

    def series(self, deployment: str, link: str) -> list[tuple[int, float]]:
        return sorted((r.n, r.mean_latency) for r in self.rows.values()
                      if r.deployment == deployment and r.link == link)

    def latency(self, deployment: str, link: str, n: int) -> float:
        return self.rows[(deployment, link, n)].mean_latency


def grid_cells(deployments: Iterable, links: Iterable, n_list: Iterable[int]) -> list[tuple[str, str, int]]:
    """Expand the sweep grid; the physical network only exists on WiFi."""
    cells = []
    for d in deployments:
        d = Deployment(d)
        for l in links:
            l = LinkKind(l)
            if d is Deployment.PHYSICAL:
                l = LinkKind.WIFI
            for n in n_list:
                cell = (d.value, l.value, int(n))
                if cell not in cells:
                    cells.append(cell)
    return cells


def stable_hash(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()


def _run_cell(args) -> KpiRow:
    cell, base = args
    d, l, n = cell
    cfg = base.with_(deployment=d, link=l, n_vehicles=n)
    try:
        m = run_scenario(cfg)
        mean = latency_kpi(m) if m.delivered else math.nan
    except Exception as exc:
        raise SweepError(f"sweep cell deployment={d} link={l} n={n} failed: {exc}") from exc
    return KpiRow(d, l, n, mean, m.percentile(95), m.generated, m.delivered, m.dropped,
                  computation_speed(d, n, cfg))


def sweep(deployments=tuple(Deployment), links=tuple(LinkKind), n_list: Sequence[int] = DEFAULT_N,
          base_config: ScenarioConfig | None = None, workers: int = 1) -> KpiReport:
    """Run every grid cell and merge the rows in grid order.

    All cells share the base seed, so a vehicle's beacon phase is identical
    across cells and comparisons between deployments are paired.
    """
    base = (base_config or ScenarioConfig()).validate()
    cells = grid_cells(deployments, links, n_list)
    if not cells:
        raise SweepError("empty sweep grid")
    jobs = [(c, base) for c in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    from . import __version__
    report = KpiReport(provenance={
        "config_hash": stable_hash(base.as_dict(), cells)[:16],
        "seed": base.seed,
        "tool_version": __version__,
    })
    for r in rows:
        report.add(r)
    return report


# -- rendering -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def speed_table(report: KpiReport) -> list[tuple[int, float | None, float | None, float | None]]:
    if not report.rows:
        raise SweepError("empty sweep")
    by_n: dict[int, dict[str, float]] = {}
    for r in report.rows.values():
        col = "edge_hybrid" if r.deployment in ("edge", "hybrid") else r.deployment
        by_n.setdefault(r.n, {})[col] = r.comp_speed
    return [(n, c.get("physical"), c.get("cloud"), c.get("edge_hybrid")) for n, c in sorted(by_n.items())]


def emit_table(report: KpiReport, fmt: str = "markdown") -> str:
    table = speed_table(report)
    header = ["n", "physical", "cloud", "edge_hybrid"]
    body = [[str(n)] + [_fmt(v) for v in vals] for n, *vals in table]
    if fmt == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        return out.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(row) + " |" for row in body]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def parse_table(text: str) -> list[tuple[int, float | None, float | None, float | None]]:
    """Inverse of ``emit_table`` for either format."""
    lines = [l for l in text.splitlines() if l.strip()]
    if lines and lines[0].startswith("|"):
        rows = [[c.strip() for c in l.strip("|").split("|")] for l in lines[2:]]
    else:
        rows = list(csv.reader(lines[1:]))
    return [(int(r[0]),) + tuple(float(c) if c else None for c in r[1:]) for r in rows]


def emit_report_csv(report: KpiReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.sorted_rows():
        w.writerow([r.deployment, r.link, r.n, _fmt(r.mean_latency), _fmt(r.p95_latency),
                    r.generated, r.delivered, r.dropped, _fmt(r.comp_speed)])
    return out.getvalue()


def parse_report_csv(text: str) -> KpiReport:
    report = KpiReport()
    for row in csv.DictReader(io.StringIO(text)):
        f = lambda k: float(row[k]) if row[k] else math.nan
        report.add(KpiRow(row["deployment"], row["link"], int(row["n_vehicles"]), f("mean_latency_s"),
                          f("p95_latency_s"), int(row["generated"]), int(row["delivered"]),
                          int(row["dropped"]), f("comp_speed_analytic")))
    return report


def emit_latency_series(report: KpiReport, out_dir=None) -> dict[tuple[str, str], str]:
    """One ``n,mean_latency_s`` CSV per deployment-link pair, ascending n."""
    docs = {}
    for d, l in report.pairs():
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n", "mean_latency_s"])
        for n, lat in report.series(d, l):
            w.writerow([n, _fmt(lat)])
        docs[(d, l)] = out.getvalue()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for (d, l), text in docs.items():
            with open(os.path.join(out_dir, f"latency_{d}_{l}.csv"), "w", encoding="utf-8") as fh:
                fh.write(text)
    return docs


# -- paper-reproduction checks -------------------------------------------------

@dataclass
class Check:
    name: str
    ok: bool
    detail: str


def _same_sig(a: float, b: float, sig: int = 6) -> bool:
    return float(f"{a:.{sig}g}") == float(f"{b:.{sig}g}")


def speed_checks(config: ScenarioConfig | None = None) -> list[Check]:
    cfg = config or ScenarioConfig()
    out = []
    for n in TABLE_N:
        for col, dep in (("physical", "physical"), ("cloud", "cloud"), ("edge_hybrid", "edge")):
            got = computation_speed(dep, n, cfg)
            want = PAPER_SPEED[col][n]
            ok = (abs(got - want) / want <= EDGE_REL_TOL) if col == "edge_hybrid" else _same_sig(got, want)
            out.append(Check(f"table2 {col} n={n}", ok, f"model={got:.6f} paper={want}"))
    ratio = computation_speed("cloud", 80, cfg) / computation_speed("edge", 80, cfg)
    out.append(Check("cloud/edge speed ratio n=80", RATIO_BAND[0] <= ratio <= RATIO_BAND[1], f"ratio={ratio:.4f}"))
    return out


def latency_checks(report: KpiReport) -> list[Check]:
    out = []
    physical = dict(report.series("physical", "wifi"))
    for d, l in report.pairs():
        s = report.series(d, l)
        mono = all(b[1] >= a[1] for a, b in zip(s, s[1:]))
        out.append(Check(f"monotone {d}/{l}", mono, " ".join(f"{n}:{v:.3f}" for n, v in s)))
        if d != "physical" and physical:
            dom = all(v <= physical[n] for n, v in s if n in physical)
            out.append(Check(f"dominance {d}/{l} <= physical", dom, ""))
    for d in ("edge", "cloud", "hybrid"):
        cell, wifi = dict(report.series(d, "cellular")), dict(report.series(d, "wifi"))
        if cell and wifi:
            ok = all(cell[n] <= wifi[n] for n in cell if n in wifi)
            out.append(Check(f"link order {d} cellular <= wifi", ok, ""))
    return out


def anchor_series() -> dict[str, list[tuple[str, str, Sequence[int]]]]:
    """Which simulated series answer to which quoted anchor group.

    Edge (cellular) only answers at 40 vehicles: past the 40-vehicle RSU
    capacity its surviving traffic is that of 40 vehicles.
    """
    return {
        "cloud_edge_cellular": [("cloud", "cellular", (40, 300)), ("cloud", "wifi", (40, 300)),
                                ("edge", "cellular", (40,))],
        "wifi_hybrid": [("edge", "wifi", (160, 300)), ("hybrid", "wifi", (160, 300)),
                        ("hybrid", "cellular", (160, 300))],
    }


def anchor_checks(report: KpiReport) -> list[Check]:
    out = []
    for group, members in anchor_series().items():
        for d, l, ns in members:
            for n in ns:
                if (d, l, n) not in report.rows:
                    continue
                want = LATENCY_ANCHORS[group][n]
                got = report.latency(d, l, n)
                ok = want / ANCHOR_FACTOR <= got <= want * ANCHOR_FACTOR
                out.append(Check(f"anchor {d}/{l} n={n}", ok, f"sim={got:.4f} quoted={want}"))
    return out


def check_paper(report: KpiReport | None = None, config: ScenarioConfig | None = None) -> list[Check]:
    checks = speed_checks(config)
    if report is not None and report.rows:
        checks += latency_checks(report) + anchor_checks(report)
    return checks
