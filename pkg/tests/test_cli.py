import csv
import io
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest

from verisparse.cli import (BENCH_FIELDS, EXIT_FAILED, EXIT_INPUT, EXIT_OK, InputError, RunConfig,
                            bench_methods, main)
from verisparse.generators import constructed_spectrum
from verisparse.sparse import SparseMatrix, mm_write
from verisparse.verify import Certificate, check_certificate


def schema(name):
    return json.loads(resources.files("verisparse").joinpath(f"schemas/{name}.schema.json").read_text())


@pytest.fixture
def identity_file(tmp_path):
    p = tmp_path / "identity.mtx"
    mm_write(SparseMatrix.identity(4), str(p))
    return p


@pytest.fixture
def singular_file(tmp_path):
    p = tmp_path / "singular.mtx"
    mm_write(SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]]), str(p))
    return p


def test_verify_identity(identity_file, tmp_path, capsys):
    out = tmp_path / "cert.json"
    assert main(["verify", "--input", str(identity_file), "--out", str(out)]) == EXIT_OK
    d = json.loads(out.read_text())
    jsonschema.validate(d, schema("certificate"))
    assert d["status"] == "verified" and d["delta"] == 0.5 and d["rho"] == 0.0
    assert "delta: 0.5" in capsys.readouterr().out
    a = SparseMatrix.identity(4)
    assert check_certificate(a, Certificate.from_json(d))


def test_solve_identity(identity_file, tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", "--input", str(identity_file), "--out", str(out)]) == EXIT_OK
    d = json.loads(out.read_text())
    jsonschema.validate(d, schema("solution"))
    assert np.allclose(d["mid"], 1.0, rtol=0, atol=2.0 ** -50)
    assert max(d["rad"]) <= 2.0 ** -50
    assert d["converged"] and d["certificate"]["delta"] == 0.5


def test_solve_with_rhs_files(identity_file, tmp_path, capsys):
    txt = tmp_path / "b.txt"
    txt.write_text("1 2 3 4\n")
    assert main(["solve", "--input", str(identity_file), "--rhs", str(txt), "--method", "lu"]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["method"] == "lu" and np.allclose(d["mid"], [1, 2, 3, 4])
    mm = tmp_path / "b.mtx"
    mm.write_text("%%MatrixMarket matrix array real general\n4 1\n1\n2\n3\n4\n")
    assert main(["solve", "--input", str(identity_file), "--rhs", str(mm)]) == EXIT_OK


def test_singular(singular_file, tmp_path):
    out = tmp_path / "cert.json"
    assert main(["verify", "--input", str(singular_file), "--out", str(out)]) == EXIT_FAILED
    d = json.loads(out.read_text())
    assert d["status"] != "verified"
    jsonschema.validate(d, schema("certificate"))
    assert main(["solve", "--input", str(singular_file)]) == EXIT_FAILED


@pytest.mark.parametrize("argv", [
    ["verify", "--input", "/nonexistent/a.mtx"],
    ["verify"],
    ["frobnicate"],
    ["verify", "--input", "x.mtx", "--theta-fraction", "1.5"],
    ["solve", "--input", "x.mtx", "--method", "qr"],
])
def test_input_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "x.mtx").write_text("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n")
    assert main(argv) == EXIT_INPUT


def test_malformed_and_mismatch(identity_file, tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
    assert main(["verify", "--input", str(bad)]) == EXIT_INPUT
    rect = tmp_path / "rect.mtx"
    mm_write(SparseMatrix.from_dense(np.ones((2, 3))), str(rect))
    assert main(["verify", "--input", str(rect)]) == EXIT_INPUT
    b = tmp_path / "b.txt"
    b.write_text("1 2 3\n")
    assert main(["solve", "--input", str(identity_file), "--rhs", str(b)]) == EXIT_INPUT


def test_config_validation():
    with pytest.raises(InputError):
        RunConfig(command="bench", count=-1)
    assert RunConfig(command="bench").size == 100


def test_info(identity_file, capsys):
    assert main(["info", "--input", str(identity_file)]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["symmetric"] and d["nrows"] == 4 and len(d["sha256"]) == 64


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_bench_generated(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--count", "5", "--size", "40", "--seed", "3", "--out", str(out), "--no-timing"]) == EXIT_OK
    rows = read_csv(out)
    assert list(rows[0].keys()) == list(BENCH_FIELDS)
    methods = bench_methods()
    assert len(methods) == 15
    assert len(rows) == 5 * len(methods)
    worst = [r for r in rows if r["matrix"].endswith("cond1e+10")]
    by = {r["method"]: r for r in worst}
    assert by["normal_eq"]["success"] == "False"
    assert by["proposed_p00"]["success"] == "True"
    assert float(by["proposed_p00"]["sigma_lower"]) > 0
    again = tmp_path / "again.csv"
    main(["bench", "--count", "5", "--size", "40", "--seed", "3", "--out", str(again), "--no-timing"])
    assert again.read_bytes() == out.read_bytes()


def test_bench_directory(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    rng = np.random.default_rng(1)
    a, _ = constructed_spectrum(20, 1e3, rng)
    mm_write(a, str(corpus / "good.mtx"))
    (corpus / "broken.mtx").write_text("not a matrix\n")
    out = tmp_path / "b.csv"
    assert main(["bench", "--input", str(corpus), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    broken = [r for r in rows if r["matrix"] == "broken"]
    assert broken and all(r["success"] == "False" for r in broken)
    good = [r for r in rows if r["matrix"] == "good"]
    assert len(good) == 15 and all(r["elapsed"] for r in good)


def test_bench_empty_corpus(tmp_path):
    (tmp_path / "empty").mkdir()
    out = tmp_path / "b.csv"
    assert main(["bench", "--input", str(tmp_path / "empty"), "--out", str(out)]) == EXIT_OK
    assert out.read_text().strip() == ",".join(BENCH_FIELDS)


def test_module_entry_point(identity_file):
    r = subprocess.run([sys.executable, "-m", "verisparse", "verify", "--input", str(identity_file)],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0 and "status: verified" in r.stdout
    r = subprocess.run([sys.executable, "-m", "verisparse", "--help"], capture_output=True, text=True, timeout=120)
    assert r.returncode == 0
