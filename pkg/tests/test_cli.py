import csv
import json

import pytest

from expbergman.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from expbergman.config import OUTPUT_ENV, TASKS, RunConfig, list_families, run, strip_timestamp
from expbergman.errors import ConfigError
from expbergman.measures import CANONICAL_NAMES

SMALL = """\
[run]
tasks = membership, kernel-verify, toeplitz, tail
seed = 3
output_dir = {out}

[kernel]
n_basis = 128

[measures]
names = atom_cluster, uniform

[checks]
dim = 100
"""


@pytest.fixture(autouse=True)
def no_env_override(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_membership_report(tmp_path):
    cfg = write_config(tmp_path, f"[run]\ntasks = membership\noutput_dir = {tmp_path / 'out'}\n")
    assert main(["run", str(cfg)]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["results"]["membership"]["min_laplacian"] >= 4
    assert all(a["invariant"] for a in rep["assertions"])


def test_empty_task_list(tmp_path):
    cfg = write_config(tmp_path, f"[run]\noutput_dir = {tmp_path / 'out'}\n")
    assert main(["run", str(cfg)]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["results"] == {} and rep["assertions"] == [] and rep["passed"]


def test_run_is_deterministic(tmp_path):
    texts = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        cfg = RunConfig.from_text(SMALL.format(out=tmp_path / "shared"))
        cfg.output_dir = str(out)
        run(cfg)
        texts.append((out / "report.json").read_text())
    assert strip_timestamp(texts[0]) == strip_timestamp(texts[1])
    for name in ("eigenvalues_uniform.csv", "moments.csv"):
        assert (tmp_path / "out0" / name).read_bytes() == (tmp_path / "out1" / name).read_bytes()


def test_env_overrides_output_dir(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, f"[run]\ntasks = membership\noutput_dir = {tmp_path / 'a'}\n")
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "b"))
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (tmp_path / "b" / "report.json").exists()
    assert not (tmp_path / "a").exists()


@pytest.mark.parametrize("text, needle", [
    ("[run]\ntasks = membership, bogus\n", "bogus"),
    ("[weight]\nA = one\n", "A"),
    ("[weight]\nalpha = -1\n", "alpha"),
    ("[lattice]\nwidth = 3\n", "width"),
    ("[nowhere]\nx = 1\n", "nowhere"),
    ("[checks]\nratio_window = -1\n", "ratio_window"),
    ("[measures]\nnames = uniform, spiky\n", "spiky"),
    ("not an ini file\n", "run.ini"),
])
def test_config_errors(tmp_path, capsys, text, needle):
    cfg = write_config(tmp_path, text)
    with pytest.raises(ConfigError, match=needle):
        RunConfig.from_file(cfg)
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.ini")]) == EXIT_CONFIG


def test_numerical_error_exit(tmp_path, capsys):
    # 200 basis functions cannot resolve the kernel at an atom this close to r_max
    (tmp_path / "edge.csv").write_text("re,im,mass\n0.94,0.0,1.0\n")
    text = (f"[run]\ntasks = toeplitz\noutput_dir = {tmp_path / 'out'}\n"
            "[measures]\nnames = atom_cluster\natoms_csv = edge.csv\n")
    assert main(["run", str(write_config(tmp_path, text))]) == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "task toeplitz" in err and "TruncationError" in err
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["error"]["task"] == "toeplitz"


def test_assertion_failure_exit(tmp_path, capsys):
    # a window of 1 cannot hold three distinct quantities
    text = (f"[run]\ntasks = carleson\noutput_dir = {tmp_path / 'out'}\n"
            "[measures]\nnames = atom_cluster\n[checks]\nratio_window = 1\n")
    assert main(["run", str(write_config(tmp_path, text))]) == EXIT_ASSERT
    assert "FAIL carleson.atom_cluster.window" in capsys.readouterr().out
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["passed"] is False


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    cat = json.loads(capsys.readouterr().out)
    assert cat == json.loads(json.dumps(list_families()))
    assert "EXP" in cat["weight_families"] and "FLAT-oracle" in cat["weight_families"]
    assert cat["canonical_measures"] == list(CANONICAL_NAMES) and len(CANONICAL_NAMES) == 5
    assert cat["tasks"] == list(TASKS)


def test_export_lattice_formats(tmp_path):
    out_csv, out_json = tmp_path / "lat.csv", tmp_path / "lat.json"
    assert main(["export-lattice", "--r", "1.0", "--s", "0.9", "-o", str(out_csv)]) == EXIT_OK
    assert main(["export-lattice", "--r", "1.0", "--s", "0.9", "-o", str(out_json)]) == EXIT_OK
    with open(out_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    doc = json.loads(out_json.read_text())
    assert len(rows) == len(doc["points"]) > 0
    assert float(rows[5]["rho"]) == doc["points"][5]["rho"]
    assert doc["multiplicity"] >= 1


def test_export_kernel_formats(tmp_path):
    out_csv, out_json = tmp_path / "k.csv", tmp_path / "k.txt"
    assert main(["export-kernel", "--n-basis", "64", "-o", str(out_csv)]) == EXIT_OK
    assert main(["export-kernel", "--n-basis", "64", "--format", "json",
                 "-o", str(out_json)]) == EXIT_OK
    with open(out_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    doc = json.loads(out_json.read_text())
    assert [float(r["log_h"]) for r in rows] == doc["log_h"]
    assert doc["n_basis"] == 64


def test_export_flat_kernel(tmp_path):
    out = tmp_path / "flat.json"
    assert main(["export-kernel", "--family", "flat", "--r-max", "1", "--n-basis", "16",
                 "-o", str(out)]) == EXIT_OK
    lh = json.loads(out.read_text())["log_h"]
    assert lh[3] == pytest.approx(-1.3862943611198906, rel=1e-12)


def test_export_config_error(tmp_path):
    assert main(["export-kernel", "--alpha", "-1", "-o", str(tmp_path / "k.csv")]) == EXIT_CONFIG
