import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from rabisense import cli
from rabisense.dynamics import TRAJECTORY_COLUMNS
from rabisense.metrology import SWEEP_COLUMNS

QUICK = """
[physics]
angular_convention = plain
gamma_khz = 5.0
{extra}
[numerics]
fock_dim = {fock}
"""


@pytest.fixture
def quick_config(tmp_path):
    def make(extra="", fock=16, name="quick.ini"):
        p = tmp_path / name
        p.write_text(QUICK.format(extra=extra, fock=fock))
        return str(p)

    return make


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_evolve_to_stdout(quick_config, capsys):
    code, out, err = run(["evolve", "--config", quick_config(), "--out", "-"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == 401
    assert err == ""


def test_demkov_without_force(quick_config, capsys):
    code, out, _ = run(["demkov", "--config", quick_config()], capsys)
    assert code == 0
    data = rows(out)
    assert len(data) == 1
    assert float(data[0]["sx_mean"]) == pytest.approx(0.0, abs=1e-9)
    assert float(data[0]["kappa"]) == 0.0


def test_spin_force(capsys):
    code, out, _ = run(["spin-force"], capsys)
    assert code == 0
    assert float(rows(out)[0]["force_yN"]) == pytest.approx(9.0, rel=0.05)


def test_sensitivity_closed_form(tmp_path, capsys):
    cfg = tmp_path / "s.ini"
    cfg.write_text("[physics]\nangular_convention = plain\nomega_khz = 45\n")
    # gamma in kHz so that 14/gamma spans 30 ms and 100 ms
    code, out, _ = run(["sensitivity", "--config", str(cfg), "--from", str(14 / 30), "--to", "0.14", "--points", "2"], capsys)
    assert code == 0
    data = rows(out)
    assert [float(r["t_final_ms"]) for r in data] == pytest.approx([30.0, 100.0])
    assert math.isnan(float(data[0]["fmin_numeric_yN"]))
    sens = [float(r["sensitivity_yN_rtHz"]) for r in data]
    assert sens[1] < sens[0]


def test_spectrum_rows(quick_config, capsys):
    code, out, _ = run(["spectrum", "--config", quick_config(), "--points", "7", "--levels", "5"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "t_ms,E0,E1,E2,E3,E4,delta_gap,delta_ge,epsilon"
    assert len(lines) == 8


def test_unknown_key_is_validation_error(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[physics]\nomega = 3\n")
    code, out, err = run(["demkov", "--config", str(p)], capsys)
    assert code == 1
    assert out == ""
    assert "omega" in err


def test_bad_arguments(capsys):
    assert run(["frobnicate"], capsys)[0] == 1
    assert run(["evolve", "--engine", "magic"], capsys)[0] == 1
    code, out, err = run(["sweep-force"], capsys)
    assert code == 1 and out == "" and "--from" in err
    assert run(["sweep-force", "--from", "0", "--to", "1", "--workers", "0"], capsys)[0] == 1


def test_invalid_file_output_leaves_nothing(tmp_path, capsys):
    target = tmp_path / "out.csv"
    code, _, _ = run(["sweep-gamma", "--out", str(target)], capsys)
    assert code == 1
    assert not target.exists()


def test_numerical_failure_exit_code(quick_config, capsys):
    code, out, err = run(["evolve", "--config", quick_config(fock=3)], capsys)
    assert code == 2
    assert out == ""
    assert "TruncationError" in err


def test_partial_sweep_still_written(quick_config, tmp_path, capsys):
    target = tmp_path / "force.csv"
    argv = ["sweep-force", "--config", quick_config(fock=12), "--from", "0", "--to", "20000", "--points", "2"]
    code, out, err = run(argv + ["--out", str(target)], capsys)
    assert code == 2
    assert out == ""
    data = rows(target.read_text())
    assert list(data[0]) == list(SWEEP_COLUMNS)
    assert [r["error"] == "" for r in data] == [True, False]
    assert (tmp_path / "force.csv.manifest.ini").exists()


def test_manifest_reproduces_csv(quick_config, tmp_path, capsys):
    first = tmp_path / "a.csv"
    extra = "force_yN = 3.0"
    argv = ["sweep-gamma", "--from", "4", "--to", "6", "--points", "2"]
    assert run(argv + ["--config", quick_config(extra, fock=12), "--out", str(first)], capsys)[0] == 0
    manifest = tmp_path / "a.csv.manifest.ini"
    text = manifest.read_text()
    assert "angular_convention = plain" in text and "z0_m" in text
    second = tmp_path / "b.csv"
    assert run(argv + ["--config", str(manifest), "--out", str(second)], capsys)[0] == 0
    assert first.read_bytes() == second.read_bytes()


def test_explicit_manifest_for_stdout(quick_config, tmp_path, capsys):
    m = tmp_path / "run.ini"
    code, out, _ = run(["demkov", "--config", quick_config(), "--manifest", str(m)], capsys)
    assert code == 0 and out.startswith("kappa,")
    assert "command = demkov" in m.read_text()


def test_module_entry_point_streams(quick_config):
    proc = subprocess.run(
        [sys.executable, "-m", "rabisense", "demkov", "--config", quick_config()],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].startswith("kappa,")
    assert len(proc.stdout.splitlines()) == 2
    assert proc.stderr == ""


@pytest.mark.slow
def test_heating_sweep_monotone(tmp_path, capsys):
    cfg = tmp_path / "heating.ini"
    # reference parameters at gamma = 1.4 with the force set for unit SNR
    cfg.write_text("[physics]\nangular_convention = plain\ngamma_khz = 1.4\nforce_yN = 17.144\n")
    code, out, _ = run(["sweep-heating", "--config", str(cfg), "--from", "0", "--to", "0.2", "--points", "5"], capsys)
    assert code == 0
    data = rows(out)
    assert len(data) == 5
    snr = np.array([float(r["snr_sx"]) for r in data])
    assert np.all(np.diff(snr) <= 0)
