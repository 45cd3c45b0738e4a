import json
import subprocess
import sys

import pytest

from modcal.cli import main


def write_cfg(tmp_path, extra=""):
    p = tmp_path / "exp.cfg"
    p.write_text(
        "datasets = hetero:n=200\n"
        "base_kinds = point\n"
        "seeds = 0\n"
        "hidden = 4\n"
        "epochs = 20\n"
        f"output_dir = {tmp_path / 'out'}\n" + extra
    )
    return p


def test_run_success(tmp_path, capsys):
    assert main(["run", "--config", str(write_cfg(tmp_path))]) == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert "report.csv" in capsys.readouterr().out


def test_run_cell_failure_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, "interpolators = naf\nnaf.strict = true\n"
                              "naf.hidden_units = 2\nnaf.max_iters = 3\n")
    assert main(["run", "--config", str(cfg)]) == 2


@pytest.mark.parametrize("text", ["bogus = 1\n", "base_kinds = point\nscores = zscore\n"])
def test_config_error_exit_code(tmp_path, text, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    assert main(["run", "--config", str(p)]) == 1
    assert "config error" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 1


def test_intervals(tmp_path, capsys):
    assert main(["intervals", "--config", str(write_cfg(tmp_path)), "--level", "0.8"]) == 0
    assert "conf.cov" in capsys.readouterr().out
    assert (tmp_path / "out" / "intervals.csv").exists()


def test_intervals_bad_level(tmp_path):
    assert main(["intervals", "--config", str(write_cfg(tmp_path)), "--level", "1.2"]) == 1


def test_check_subset(tmp_path, capsys):
    assert main(["check", "--config", str(write_cfg(tmp_path)), "--only", "7,8"]) == 0
    assert "2/2 criteria passed" in capsys.readouterr().out
    assert (tmp_path / "out" / "acceptance.txt").exists()


def test_check_unknown_criterion(tmp_path):
    assert main(["check", "--config", str(write_cfg(tmp_path)), "--only", "42"]) == 1


def test_datasets_list(capsys):
    assert main(["datasets", "list"]) == 0
    out = capsys.readouterr().out
    for name in ("linear-gauss", "hetero", "skew"):
        assert name in out


def test_help_documents_keys():
    out = subprocess.run([sys.executable, "-m", "modcal.cli", "run", "--help"],
                         capture_output=True, text=True, check=True).stdout
    assert "naf.target_accuracy" in out and "CALIB_THREADS" in out


def test_console_script_determinism(tmp_path):
    cfg = write_cfg(tmp_path)
    blobs = []
    for _ in range(2):
        subprocess.run([sys.executable, "-m", "modcal.cli", "run", "--config", str(cfg)],
                       check=True, capture_output=True)
        blobs.append((tmp_path / "out" / "report.json").read_bytes())
    assert blobs[0] == blobs[1]
    assert json.loads(blobs[0])["rows"][0]["seed"] == 0
