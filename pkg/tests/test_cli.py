import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import ode2
from daemor.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, main
from daemor.core import DescriptorSystem
from daemor.model_io import generate_synthetic, save_system


def first_order_dir(tmp_path):
    s = DescriptorSystem(np.eye(1), -np.eye(1), np.ones((1, 1)), np.ones((1, 1)))
    return save_system(s, tmp_path / "first").parent


@pytest.fixture
def stokes_dir(tmp_path):
    s = generate_synthetic("stokes-index2", 0, n1=40, n2=8)
    return save_system(s, tmp_path / "stokes").parent


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestReduce:
    def test_irka_index2_then_verify(self, stokes_dir, tmp_path, capsys):
        out = tmp_path / "red"
        assert main(["reduce", str(stokes_dir), "--method", "irka-index2", "-r", "4",
                     "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["converged"] and rep["interpolation"]["passed"]
        assert rep["reduced_order"] == 4
        capsys.readouterr()
        assert main(["verify", str(stokes_dir), str(out), "--optimality"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["passed"] and doc["optimality"]["passed"]

    def test_not_converged(self, stokes_dir, tmp_path):
        out = tmp_path / "red"
        code = main(["reduce", str(stokes_dir), "--method", "irka-index2", "-r", "4",
                     "--max-iter", "1", "--out", str(out)])
        assert code == EXIT_NOT_CONVERGED
        assert (out / "model.json").exists()
        assert json.loads((out / "report.json").read_text())["converged"] is False

    def test_structure_mismatch(self, stokes_dir, tmp_path, capsys):
        code = main(["reduce", str(stokes_dir), "--method", "index1", "-r", "2",
                     "--out", str(tmp_path / "x")])
        assert code == EXIT_ERROR
        assert "method/structure mismatch" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["reduce", str(tmp_path / "none"), "--method", "dae", "-r", "1",
                     "--out", str(tmp_path / "x")]) == EXIT_ERROR

    def test_shift_file(self, tmp_path):
        sysdir = save_system(ode2(), tmp_path / "ode2").parent
        shifts = tmp_path / "shifts.json"
        shifts.write_text(json.dumps({"points": [[1.0, 0.0]], "right_dirs": [[[1.0, 0.0], [0.0, 0.0]]],
                                      "left_dirs": [[[1.0, 0.0], [0.0, 0.0]]]}))
        out = tmp_path / "red"
        assert main(["reduce", str(sysdir), "--method", "dae", "-r", "1", "--shifts", str(shifts),
                     "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["shifts"]["points"] == [[1.0, 0.0]]

    def test_deterministic_outputs(self, stokes_dir, tmp_path):
        texts = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            main(["reduce", str(stokes_dir), "--method", "index2", "-r", "3", "--out", str(out)])
            texts.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert texts[0] == texts[1]

    def test_threads_same_result(self, stokes_dir, tmp_path):
        outs = []
        for t in ("1", "4"):
            out = tmp_path / f"t{t}"
            main(["--threads", t, "reduce", str(stokes_dir), "--method", "index2", "-r", "5",
                  "--out", str(out)])
            outs.append((out / "A.mtx").read_bytes())
        assert outs[0] == outs[1]


class TestBode:
    def test_first_order_row(self, tmp_path):
        d = first_order_dir(tmp_path)
        out = tmp_path / "b.csv"
        assert main(["bode", str(d), "--wmin", "0.1", "--wmax", "10", "--npts", "3",
                     "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert rows[0] == ["omega", "abs_G_1_1"]
        assert rows[2] == ["1.0", "0.7071067811865476"]

    def test_full_vs_itself(self, tmp_path):
        sysdir = first_order_dir(tmp_path)
        red = tmp_path / "red"
        main(["reduce", str(sysdir), "--method", "dae", "-r", "1", "--out", str(red)])
        out = tmp_path / "b.csv"
        main(["bode", str(sysdir), "--reduced", str(red), "--npts", "20", "--out", str(out)])
        rows = read_csv(out)
        assert rows[0][:4] == ["omega", "abs_G_1_1", "abs_Gr_1_1", "abs_err_1_1"]
        errs = [float(x) for r in rows[1:] for i, x in enumerate(r) if rows[0][i].startswith("abs_err")]
        assert max(errs) <= 1e-15

    def test_byte_identical(self, tmp_path):
        d = first_order_dir(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["bode", str(d), "--out", str(a)])
        main(["bode", str(d), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestVerify:
    def test_failure_exit(self, tmp_path, capsys):
        sysdir = save_system(ode2(), tmp_path / "ode2").parent
        other = save_system(DescriptorSystem(np.eye(2), -2 * np.eye(2), np.eye(2), np.eye(2)),
                            tmp_path / "other").parent
        red = tmp_path / "red"
        main(["reduce", str(other), "--method", "dae", "-r", "2", "--out", str(red)])
        capsys.readouterr()
        assert main(["verify", str(sysdir), str(red)]) == EXIT_ERROR
        assert json.loads(capsys.readouterr().out)["passed"] is False


class TestInfo:
    def test_ode(self, tmp_path, capsys):
        sysdir = save_system(ode2(), tmp_path / "ode2").parent
        assert main(["info", str(sysdir), "--json"]) == EXIT_OK
        info = json.loads(capsys.readouterr().out)
        assert info["spectral"]["index"] == 0 and info["spectral"]["n_f"] == 2

    def test_text_output(self, stokes_dir, capsys):
        assert main(["info", str(stokes_dir)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "spectral.index: 2" in out
        assert "structure.kind: index2" in out

    def test_dense_limit(self, stokes_dir, capsys, monkeypatch):
        monkeypatch.setenv("DAEMOR_DENSE_LIMIT", "10")
        assert main(["info", str(stokes_dir), "--json"]) == EXIT_OK
        assert "spectral analysis skipped" in json.loads(capsys.readouterr().out)["spectral"]

    def test_reduced_model(self, stokes_dir, tmp_path, capsys):
        red = tmp_path / "red"
        main(["reduce", str(stokes_dir), "--method", "index2", "-r", "3", "--out", str(red)])
        capsys.readouterr()
        main(["info", str(red), "--json"])
        assert json.loads(capsys.readouterr().out)["method"] == "index2"


class TestGenerate:
    def test_params_and_console_script(self, tmp_path):
        out = tmp_path / "g"
        proc = subprocess.run([sys.executable, "-m", "daemor.cli", "generate", "stokes-index2",
                               "-p", "n1=12", "-p", "n2=3", "-p", "b2=false", "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        doc = json.loads((out / "manifest.json").read_text())
        assert doc["structure"] == {"kind": "index2", "n1": 12, "n2": 3}
        assert doc["metadata"]["params"]["b2"] is False

    def test_bad_param(self, tmp_path, capsys):
        assert main(["generate", "ode", "-p", "colour=1", "--out", str(tmp_path / "x")]) == EXIT_ERROR
