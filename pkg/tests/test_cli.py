import hashlib
import json

import pytest

from twinvanet.cli import main
from twinvanet.config import AppConfig, ConfigError, apply_overrides, default_toml, load_config
from twinvanet.synthetic import make_hotspot_trajectories
from twinvanet.trajectory import serialize_records


@pytest.fixture(scope="module")
def traj(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "traj.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        serialize_records(make_hotspot_trajectories().records, fh)
    return path


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_sweep_happy_path(tmp_path):
    out, md = tmp_path / "r.csv", tmp_path / "t.md"
    assert main(["sweep", "--out", str(out), "--markdown", str(md), "--series-dir", str(tmp_path / "s"),
                 "--check-paper"]) == 0
    assert out.read_text().startswith("deployment,link,n_vehicles")
    assert len(list((tmp_path / "s").iterdir())) == 7


def test_check_paper_fails_on_bad_crypto(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[scenario]\ncrypto_time = 0.003\n")
    rc = main(["sweep", "--config", str(cfg), "--n-list", "40,80", "--out", str(tmp_path / "r.csv"),
               "--check-paper"])
    assert rc == 3
    assert "FAIL table2" in capsys.readouterr().err


def test_report_renders_saved_sweep(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["sweep", "--n-list", "40,80,120,160,200", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--in", str(out), "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "40,11.210762,112.107623,33.632287"


def test_simulate(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["simulate", "--deployment", "cloud", "--link", "cellular", "--n", "1", "--duration", "1.0",
                 "--out", str(out)]) == 0
    row = out.read_text().splitlines()[1].split(",")
    assert row[:3] == ["cloud", "cellular", "1"] and float(row[3]) == pytest.approx(0.1002478, abs=1e-6)


def test_simulate_invalid_combination():
    assert main(["simulate", "--deployment", "physical", "--link", "cellular"]) == 1


def test_unknown_flag_is_usage_error():
    assert main(["sweep", "--frobnicate"]) == 1


def test_cluster_deterministic(traj, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["cluster", "--in", str(traj), "--out", str(p), "--k", "3", "--seed", "7"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_ingest_drops_noise(traj, tmp_path):
    out = tmp_path / "clean.csv"
    assert main(["ingest", "--in", str(traj), "--out", str(out)]) == 0
    text = out.read_text()
    assert "OUTLIER" not in text and ",41.0," not in text


def test_pipeline_offline_with_stub(traj, tmp_path):
    stub = tmp_path / "stub.txt"
    stub.write_text("# nothing resolvable\n")
    before = digest(traj)
    out, man = tmp_path / "poi.csv", tmp_path / "m.json"
    rc = main(["pipeline", "--in", str(traj), "--out", str(out), "--k", "3", "--stub", str(stub), "--offline",
               "--manifest", str(man), "--cells-out", str(tmp_path / "cells.csv")])
    assert rc == 0
    manifest = json.loads(man.read_text())
    assert manifest["counts"]["pois"] == 3 and manifest["counts"]["geocoded"] == 0
    assert digest(traj) == before


def test_pipeline_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["pipeline", "--in", str(empty), "--out", str(tmp_path / "p.csv"), "--offline"]) == 2
    assert "stage features failed" in capsys.readouterr().err


def test_missing_input_is_runtime_error(tmp_path):
    assert main(["cluster", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "p.csv")]) == 2


def test_geocode_needs_provider(tmp_path):
    poi = tmp_path / "poi.csv"
    poi.write_text("")
    assert main(["geocode", "--in", str(poi), "--out", str(tmp_path / "o.csv")]) == 1


def test_config_round_trip(tmp_path, capsys):
    assert main(["config"]) == 0
    path = tmp_path / "c.toml"
    path.write_text(capsys.readouterr().out)
    assert load_config(path) == AppConfig()
    assert default_toml() == path.read_text()


def test_config_unknown_key(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[cluster]\nkk = 3\n")
    with pytest.raises(ConfigError):
        load_config(path)
    assert main(["sweep", "--config", str(path)]) == 1


def test_override_type_checked():
    with pytest.raises(ConfigError):
        apply_overrides(AppConfig().cluster, "cluster", {"k": "three"})
