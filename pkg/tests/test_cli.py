import hashlib
import json
import subprocess
import sys

import pytest

from seplab import cli
from seplab import gaussian as ga


def run_in(tmp_path, *argv):
    return cli.run([*argv, "--out", str(tmp_path)])


def csv_digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_gibbs_verify_passes(tmp_path, capsys):
    assert run_in(tmp_path, "gibbs", "verify", "--model", "cluster1d_4", "--p", "0.3") == 0
    assert capsys.readouterr().out.startswith("PASS maxdev")
    text = (tmp_path / "gibbs_verify.csv").read_text()
    assert text.startswith("# command: gibbs verify")


def test_manifest_fields(tmp_path):
    run_in(tmp_path, "double", "cj-check", "--seed", "9")
    man = json.loads((tmp_path / "double_cj_check.manifest.json").read_text())
    for key in ("command", "argv", "config", "master_seed", "task_seeds", "version",
                "wall_clock_s", "outputs"):
        assert key in man
    assert man["master_seed"] == 9
    assert man["outputs"]["double_cj_check.csv"] == csv_digest(tmp_path / "double_cj_check.csv")


@pytest.mark.parametrize("argv", [
    ["pwave", "cda", "--trials", "3", "--modes", "3", "--route-L", "4"],
    ["cluster", "--dim", "1", "--sizes", "3"],
    ["rbim", "corr", "--L", "4", "--samples", "4", "--therm", "20", "--meas", "40"],
])
def test_deterministic_bytes(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_in(a, *argv) == 0
    assert run_in(b, *argv) == 0
    name = next(a.glob("*.csv")).name
    assert csv_digest(a / name) == csv_digest(b / name)


def test_manifest_round_trip(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run_in(first, "pwave", "pairing", "--L", "16", "--p", "0.1", "--seed", "3") == 0
    manifest = first / "pwave_pairing.manifest.json"
    assert run_in(second, "pwave", "pairing", "--config", str(manifest), "--seed", "3") == 0
    assert csv_digest(first / "pwave_pairing.csv") == csv_digest(second / "pwave_pairing.csv")


def test_manifest_for_other_command_rejected(tmp_path):
    run_in(tmp_path, "selftest")
    assert run_in(tmp_path, "pwave", "pairing",
                  "--config", str(tmp_path / "selftest.manifest.json")) == 2


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert run_in(tmp_path, "selftest", "--config", str(tmp_path / "nope.json")) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run_in(tmp_path, "pwave", "pairing", "--config", str(cfg)) == 2


def test_bad_value_type(tmp_path):
    assert run_in(tmp_path, "pwave", "pairing", "--L", "twelve") == 2


def test_bad_grid(tmp_path):
    with pytest.raises(cli.SchemaError):
        cli.parse_grid("0.1:0.2")
    assert cli.parse_grid("0.08:0.14:7")[-1] == pytest.approx(0.14)
    assert cli.parse_grid("0.1,0.2") == [0.1, 0.2]


def test_resource_cap_exit(tmp_path, capsys):
    assert run_in(tmp_path, "cluster", "--dim", "3", "--sizes", "2") == 2
    assert "rpgm" in capsys.readouterr().err


def test_out_of_range_rate_exit(tmp_path):
    assert run_in(tmp_path, "gibbs", "verify", "--p", "0.7") == 2


def test_strict_promotes_missing_crossing(tmp_path):
    argv = ["rbim", "scan", "--grid", "0.3,0.4", "--L", "4", "8", "--samples", "4",
            "--therm", "20", "--meas", "40", "--boot", "10"]
    assert run_in(tmp_path, *argv) == 0
    assert run_in(tmp_path, *argv, "--strict") == 3


def test_selftest_green(tmp_path, capsys):
    assert run_in(tmp_path, "selftest") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_selftest_catches_mutated_prefactor(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(ga, "MODULAR_PREFACTOR", -1.1)
    assert run_in(tmp_path, "selftest") == 1
    out = capsys.readouterr().out
    failing = [line for line in out.splitlines() if line.startswith("FAIL")]
    assert failing == [line for line in failing if "gaussian.modular_commutator" in line]
    assert len(failing) == 1


def test_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "seplab.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for word in ("gibbs", "cluster", "rbim", "rpgm", "pwave", "double", "selftest"):
        assert word in res.stdout


def test_no_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.run([])
    assert exc.value.code == 2
