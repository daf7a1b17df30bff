import math

import pytest

from twinvanet.kpi import (DEFAULT_N, KpiReport, KpiRow, SweepError, TABLE_N, check_paper, emit_latency_series,
                           emit_report_csv, emit_table, grid_cells, parse_report_csv, parse_table, sweep)
from twinvanet.twin_sim import ScenarioConfig


@pytest.fixture(scope="module")
def full():
    return sweep()


@pytest.fixture(scope="module")
def table_sweep():
    return sweep(("physical", "cloud", "edge"), ("wifi",), TABLE_N)


def test_grid_cardinality(table_sweep):
    assert len(table_sweep) == 15
    assert sorted(table_sweep.rows) == sorted(grid_cells(("physical", "cloud", "edge"), ("wifi",), TABLE_N))


def test_physical_cellular_folded_into_wifi():
    cells = grid_cells(("physical", "cloud"), ("wifi", "cellular"), (40,))
    assert cells == [("physical", "wifi", 40), ("cloud", "wifi", 40), ("cloud", "cellular", 40)]


def test_rerun_is_byte_identical(table_sweep):
    again = sweep(("physical", "cloud", "edge"), ("wifi",), TABLE_N)
    assert emit_report_csv(again) == emit_report_csv(table_sweep)
    assert again.provenance == table_sweep.provenance


def test_parallel_matches_serial(table_sweep):
    par = sweep(("physical", "cloud", "edge"), ("wifi",), TABLE_N, workers=2)
    assert emit_report_csv(par) == emit_report_csv(table_sweep)


def test_adding_cells_keeps_existing(table_sweep):
    bigger = sweep(("physical", "cloud", "edge"), ("wifi",), TABLE_N + (240,))
    for key, row in table_sweep.rows.items():
        assert bigger.rows[key] == row


def test_markdown_body_rows(table_sweep):
    md = emit_table(table_sweep, "markdown")
    lines = md.strip().splitlines()
    assert lines[0] == "| n | physical | cloud | edge_hybrid |"
    assert len(lines) == 2 + 5


def test_table_values(table_sweep):
    rows = {r[0]: r[1:] for r in parse_table(emit_table(table_sweep, "csv"))}
    assert rows[40] == (11.210762, 112.107623, 33.632287)
    assert rows[200] == (2.242152, 22.421525, 33.632287)


def test_empty_sweep_error():
    with pytest.raises(SweepError, match="empty sweep"):
        emit_table(KpiReport(), "markdown")
    with pytest.raises(SweepError):
        sweep((), ("wifi",), (40,))


def test_csv_and_markdown_agree(table_sweep):
    assert parse_table(emit_table(table_sweep, "csv")) == parse_table(emit_table(table_sweep, "markdown"))


def test_table_round_trip_at_6_decimals(table_sweep):
    parsed = parse_table(emit_table(table_sweep, "csv"))
    for n, *vals in parsed:
        for col, v in zip(("physical", "cloud", "edge"), vals):
            assert v == round(table_sweep.rows[(col, "wifi", n)].comp_speed, 6)


def test_report_csv_round_trip(table_sweep):
    text = emit_report_csv(table_sweep)
    assert emit_report_csv(parse_report_csv(text)) == text


def test_duplicate_cell_rejected():
    r = KpiReport()
    row = KpiRow("cloud", "wifi", 40, 1.0, 1.0, 40, 40, 0, 112.0)
    r.add(row)
    with pytest.raises(SweepError):
        r.add(row)


def test_latency_series(full, tmp_path):
    docs = emit_latency_series(full, tmp_path)
    assert len(docs) == 7
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(f"latency_{d}_{l}.csv" for d, l in docs)
    for text in docs.values():
        lines = text.strip().splitlines()
        assert lines[0] == "n,mean_latency_s" and len(lines) == 1 + len(DEFAULT_N)
        ns = [int(l.split(",")[0]) for l in lines[1:]]
        assert all(a < b for a, b in zip(ns, ns[1:]))


def test_completeness(full):
    assert sorted(full.rows) == sorted(grid_cells(("physical", "edge", "cloud", "hybrid"),
                                                  ("wifi", "cellular"), DEFAULT_N))
    assert all(not math.isnan(r.mean_latency) for r in full.rows.values())


def test_physical_dominates_every_series(full):
    phys = dict(full.series("physical", "wifi"))
    for d, l in full.pairs():
        assert all(v <= phys[n] for n, v in full.series(d, l))


def test_all_paper_checks_pass(full):
    failed = [c for c in check_paper(full) if not c.ok]
    assert failed == []


def test_corrupted_crypto_fails_speed_checks():
    bad = ScenarioConfig(crypto_time=0.003)
    assert any(not c.ok for c in check_paper(None, bad))
