import math
import subprocess
import sys

import numpy as np
import pytest

from smallbody.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, ConfigError, main, parse_config
from smallbody.grid import read_snapshot
from smallbody.rigid_body import parse_log_record


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParse:
    def test_expressions_and_tuples(self, tmp_path):
        p = write(tmp_path, "L = 2*pi\nN = 16\ndt = 0.01\nbody_center = (0, L/4, 0)\nepsilon = L/8\n")
        cfg = parse_config(p)
        assert cfg.sim.body_center == (0.0, math.pi / 2, 0.0)
        assert cfg.sim.epsilon == pytest.approx(math.pi / 4)

    def test_unknown_key_names_line(self, tmp_path):
        p = write(tmp_path, "N = 16\nviscosity = 0.1\n")
        with pytest.raises(ConfigError, match=r"run.cfg:2: viscosity: unknown key"):
            parse_config(p)

    def test_negative_dt(self, tmp_path):
        p = write(tmp_path, "dt = -0.1\n")
        with pytest.raises(ConfigError, match=r"run.cfg:1: dt: must be positive"):
            parse_config(p)

    def test_bad_number(self, tmp_path):
        p = write(tmp_path, "nu = fast\n")
        with pytest.raises(ConfigError, match="nu: bad value"):
            parse_config(p)

    def test_no_code_execution(self, tmp_path):
        p = write(tmp_path, "nu = __import__('os').getcwd()\n")
        with pytest.raises(ConfigError):
            parse_config(p)

    def test_override_wins_and_is_echoed(self, tmp_path):
        p = write(tmp_path, "N = 32\nepsilon = L/8\n")
        cfg = parse_config(p, ["epsilon=L/16"])
        assert cfg.sim.epsilon == pytest.approx(2 * math.pi / 16)
        assert cfg.lines["epsilon"] == "--set #1"
        assert f"epsilon = {2 * math.pi / 16:.17e}" in cfg.echo()

    def test_override_error_names_source(self):
        with pytest.raises(ConfigError, match=r"--set #1: N:"):
            parse_config(None, ["N=15"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "absent.cfg")


class TestMain:
    def test_config_error_exit(self, tmp_path, capsys):
        p = write(tmp_path, "dt = -0.1\n")
        assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "dt" in capsys.readouterr().err

    def test_simulate_zero_horizon(self, tmp_path):
        out = tmp_path / "o"
        code = main(["simulate", "--set", "N=16", "--set", "T=0", "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "snapshot_0000.dat").exists() and (out / "energy.dat").exists()
        assert read_snapshot(out / "snapshot_0000.dat").grid.N == 16
        assert (out / "failures.txt").read_text() == ""

    def test_simulate_with_body(self, tmp_path):
        out = tmp_path / "o"
        args = ["simulate", "--out", str(out), "--set", "N=32", "--set", "dt=0.02", "--set", "T=0.06"]
        args += ["--set", "epsilon=L/8", "--set", "initial_field_id=taylor_green_bump", "--set", "body_center=0,L/4,0"]
        assert main(args) == EXIT_OK
        rows = (out / "trajectory.log").read_text().splitlines()
        assert len(rows) == 4 and parse_log_record(rows[-1])["t"] == pytest.approx(0.06)
        checks = (out / "checks.txt").read_text()
        assert "check=energy pass=true" in checks and "check=momentum pass=true" in checks

    def test_provenance_separate_from_results(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["simulate", "--set", "N=16", "--set", "T=0.04", "--set", "dt=0.02", "--out", str(out), "--seed", "5"])
            outs.append(out)
        assert (outs[0] / "energy.dat").read_bytes() == (outs[1] / "energy.dat").read_bytes()
        prov = (outs[0] / "provenance.txt").read_text()
        assert "# seed 5" in prov and "# command simulate" in prov

    def test_verify_stream(self, tmp_path):
        out = tmp_path / "o"
        assert main(["verify-stream", "--set", "N=32", "--out", str(out)]) == EXIT_OK
        assert (out / "stream_report.txt").read_text().startswith("R=")

    def test_verify_cutoff_small_grid(self, tmp_path):
        out = tmp_path / "o"
        code = main(["verify-cutoff", "--set", "cutoff_N=64", "--set", "epsilons=L/8,L/16,L/24,L/32", "--out", str(out)])
        assert code in (EXIT_OK, EXIT_CHECK)
        rows = (out / "cutoff_scaling.txt").read_text().splitlines()
        assert len(rows) == 12 and all(r.startswith("quantity=") for r in rows)
        assert np.loadtxt(out / "testfn_bound_ratios.dat").shape == (4, 2)

    def test_bad_jobs(self, tmp_path):
        assert main(["simulate", "--jobs", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "smallbody", "simulate", "--set", "T=0", "--set", "N=8", "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "PASS energy" in res.stdout
