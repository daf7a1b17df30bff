"""Run the deployment x link x n sweep and write the report, speed table and latency series.

    python scripts/run_sweep.py --out-dir results/sweep
"""

import argparse
import os
import sys
import time

from twinvanet.kpi import check_paper, emit_latency_series, emit_report_csv, emit_table, sweep
from twinvanet.twin_sim import ScenarioConfig


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="results/sweep")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    os.makedirs(args.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    report = sweep(base_config=ScenarioConfig(seed=args.seed), workers=args.workers)
    elapsed = time.perf_counter() - t0

    with open(os.path.join(args.out_dir, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(emit_report_csv(report))
    table = emit_table(report, "markdown")
    with open(os.path.join(args.out_dir, "speed_table.md"), "w", encoding="utf-8") as fh:
        fh.write(table)
    emit_latency_series(report, os.path.join(args.out_dir, "series"))

    print(table)
    print(f"{'deployment':<10} {'link':<9} " + " ".join(f"{n:>8}" for n, _ in report.series("physical", "wifi")))
    for d, l in report.pairs():
        print(f"{d:<10} {l:<9} " + " ".join(f"{v:8.3f}" for _, v in report.series(d, l)))
    failed = [c for c in check_paper(report) if not c.ok]
    for c in failed:
        print(f"FAIL {c.name} {c.detail}", file=sys.stderr)
    print(f"\n{len(report)} cells in {elapsed:.2f}s, {len(failed)} failed checks")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
