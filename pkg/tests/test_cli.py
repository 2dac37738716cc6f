import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from decoy4.cli import CSV_COLUMNS, ConfigError, main, parse_config, parse_grid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_parse_config_comments_and_errors():
    cfg = parse_config("# header\nmu = 0.5  # signal\n\nn_pulses=1e9\n")
    assert cfg == {"mu": "0.5", "n_pulses": "1e9"}
    with pytest.raises(ConfigError):
        parse_config("mu 0.5\n")
    with pytest.raises(ConfigError):
        parse_config("unknown_key = 1\n")


def test_parse_grid():
    assert parse_grid("0:100:10") == [float(x) for x in range(0, 101, 10)]
    assert parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("1e-5:1e-3:log") == pytest.approx([1e-5, 10**-4.5, 1e-4, 10**-3.5, 1e-3])
    assert len(parse_grid("1e-5:1e-3:log3")) == 3
    assert parse_grid("20,60,100") == [20.0, 60.0, 100.0]
    with pytest.raises(ConfigError):
        parse_grid("0:1e-3:log")


def test_evaluate_reference_point(tmp_path):
    out = tmp_path / "four.csv"
    assert main(["evaluate", "--config", str(CONFIGS / "opt100_four.cfg"), "--distance", "100",
                 "-o", str(out)]) == 0
    (row,) = read_rows(out)
    assert list(row) == CSV_COLUMNS
    assert float(row["R"]) == pytest.approx(1.53e-5, rel=0.2)
    assert row["protocol"] == "four" and row["feasible"] == "true"
    manifest = json.loads((tmp_path / "four.manifest.json").read_text())
    assert manifest["system"]["length_km"] == 100.0
    assert manifest["security"]["four"]["error_terms"] == 17
    assert "version" in manifest


def test_evaluate_three_and_infeasible_distance(tmp_path):
    out = tmp_path / "three.csv"
    argv = ["evaluate", "--config", str(CONFIGS / "opt100_three.cfg"), "--distance", "300",
            "-o", str(out)]
    assert main(argv) == 0
    (row,) = read_rows(out)
    assert float(row["R"]) == 0.0 and row["l"] == "0"


def test_missing_config_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--config", str(tmp_path / "nope.cfg")])
    assert exc.value.code != 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("protocol = four\nmu = 0.5\n")
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--config", str(bad)])
    assert exc.value.code != 0


def test_invalid_physics_reports_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(
        "protocol = four\nmu = 0.1\nv1 = 0.2\nv2 = 0.3\np_mu = 0.2\np_v1 = 0.2\np_v2 = 0.2\np_z = 0.5\n"
    )
    assert main(["evaluate", "--config", str(bad)]) == 2
    assert "invalid parameters" in capsys.readouterr().err


def test_scan_is_byte_identical(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("restarts = 2\n")
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        argv = ["scan", "--config", str(cfg), "--protocol", "both", "--distances", "0:50:50",
                "--omega", "1e-4,2e-4", "--seed", "3", "-o", str(out)]
        assert main(argv) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    rows = read_rows(tmp_path / "a.csv")
    keys = [(r["protocol"], float(r["distance_km"]), float(r["omega"])) for r in rows]
    assert keys == sorted(keys) and len(rows) == 8
    assert b"\r\n" in outputs[0]
    for r in rows:
        assert float(r["R"]) > 0
        assert repr(float(r["mu"])) == r["mu"]


def test_optimize_both_protocols(tmp_path):
    out = tmp_path / "opt.csv"
    cfg = tmp_path / "small.cfg"
    cfg.write_text("restarts = 3\n")
    assert main(["optimize", "--config", str(cfg), "--protocol", "both", "--distance", "100",
                 "-o", str(out)]) == 0
    rows = {r["protocol"]: r for r in read_rows(out)}
    assert float(rows["four"]["R"]) > float(rows["three"]["R"]) > 0
    assert float(rows["four"]["p_z"]) > float(rows["three"]["p_z"])


def test_mc_validate(tmp_path):
    out = tmp_path / "mc.csv"
    argv = ["mc-validate", "--config", str(CONFIGS / "mc_small.cfg"), "--trials", "30",
            "--seed", "1", "-o", str(out)]
    assert main(argv) == 0
    rows = read_rows(out)
    assert {r["bound"] for r in rows} == {"s_z0", "s_z1", "s_x1", "v_x1", "e1_pz"}
    assert all(r["passed"] == "true" for r in rows)


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "decoy4", "evaluate", "--config",
         str(CONFIGS / "opt100_three.cfg")],
        capture_output=True, text=True, check=True,
    )
    rows = list(csv.DictReader(proc.stdout.splitlines()))
    assert float(rows[0]["R"]) == pytest.approx(9.58e-6, rel=0.2)
