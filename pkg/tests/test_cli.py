import json
import subprocess
import sys

import pytest

from lpforge.cli import main


def run_cli(args, cwd):
    proc = subprocess.run([sys.executable, "-m", "lpforge.cli", *args],
                          capture_output=True, text=True, cwd=cwd)
    return proc


@pytest.fixture
def flow_files(tmp_path):
    rc = main(["gen", "flow", "--paper-instance", "-o",
               str(tmp_path / "flow")])
    assert rc == 0
    return tmp_path


def test_instantiate_algorithms_identical(flow_files, capsys):
    base = str(flow_files / "flow")
    for algo in ("efficient", "exhaustive"):
        rc = main(["instantiate", base + ".glir.json", base + ".data.json",
                   "--algorithm", algo, "--dense-columns",
                   "-o", base + f".{algo}.lp"])
        assert rc == 0
    eff = (flow_files / "flow.efficient.lp").read_bytes()
    exh = (flow_files / "flow.exhaustive.lp").read_bytes()
    assert eff == exh


def test_instantiate_threads_identical(flow_files):
    base = str(flow_files / "flow")
    for tag, threads in (("t1", "1"), ("t4", "4")):
        rc = main(["instantiate", base + ".glir.json", base + ".data.json",
                   "--threads", threads, "-o", base + f".{tag}.lp"])
        assert rc == 0
    assert (flow_files / "flow.t1.lp").read_bytes() == \
        (flow_files / "flow.t4.lp").read_bytes()


def test_instantiate_timing_json_on_stderr(flow_files, tmp_path):
    base = str(flow_files / "flow")
    proc = run_cli(["instantiate", base + ".glir.json", base + ".data.json",
                    "-o", str(tmp_path / "o.lp")], cwd=str(tmp_path))
    assert proc.returncode == 0
    doc = json.loads(proc.stderr.strip().splitlines()[-1])
    for key in ("parse_s", "normalize_s", "instantiate_s", "emit_s", "nnz"):
        assert key in doc


def test_missing_data_file_exit_2(flow_files, tmp_path):
    base = str(flow_files / "flow")
    proc = run_cli(["instantiate", base + ".glir.json",
                    str(tmp_path / "nope.json")], cwd=str(tmp_path))
    assert proc.returncode == 2


def test_invalid_model_exit_1(tmp_path):
    bad_ir = tmp_path / "bad.glir.json"
    good = (tmp_path / "flow.glir.json")
    assert main(["gen", "flow", "--paper-instance",
                 "-o", str(tmp_path / "flow")]) == 0
    doc = json.loads(good.read_text())
    doc["constraints"][0]["sign"] = "<"
    bad_ir.write_text(json.dumps(doc))
    proc = run_cli(["instantiate", str(bad_ir),
                    str(tmp_path / "flow.data.json")], cwd=str(tmp_path))
    assert proc.returncode == 1


def test_unknown_bench_suite_exit_1(tmp_path):
    proc = run_cli(["bench", "nope"], cwd=str(tmp_path))
    assert proc.returncode == 1


def test_bench_csv_shape(tmp_path, capsys):
    rc = main(["bench", "flow", "--sizes", "200,400", "--repeat", "1",
               "--threads", "1"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "suite,size,algorithm,threads,median_s,rows,nnz"
    assert len(lines) == 3  # one row per (size, algorithm, threads)


@pytest.fixture
def prod_files(tmp_path):
    rc = main(["gen", "production", "--periods", "8", "--items", "4",
               "--seed", "3", "-o", str(tmp_path / "prod")])
    assert rc == 0
    return tmp_path


def test_decompose_manifest_and_monotone_fine_tune(prod_files, capsys):
    base = str(prod_files / "prod")
    rc = main(["decompose", base + ".glir.json", base + ".data.json",
               base + ".seq.json", "--method", "gfrh", "--h", "4",
               "--fine-tune-k", "4", "--baseline",
               "--manifest-out", base + ".manifest.json",
               "--solution-out", base + ".sol"])
    assert rc == 0
    capsys.readouterr()
    doc = json.loads((prod_files / "prod.manifest.json").read_text())
    assert doc["method"] == "gfrh"
    assert doc["master"] is not None
    assert len([h for h in doc["horizons"] if "horizon" in h]) == 4
    assert doc["objective"] <= doc["pre_fine_tune_objective"] + 1e-9
    assert doc["gap"] >= -1e-9
    assert doc["audit_violation"] <= 1e-7
    sol_lines = (prod_files / "prod.sol").read_text().splitlines()
    assert all(len(l.split()) == 2 for l in sol_lines)


def test_decompose_h1_matches_solve(prod_files, capsys):
    base = str(prod_files / "prod")
    rc = main(["solve", base + ".glir.json", base + ".data.json",
               "--solution-out", base + ".whole.sol"])
    assert rc == 0
    whole = json.loads(capsys.readouterr().out.strip())
    rc = main(["decompose", base + ".glir.json", base + ".data.json",
               base + ".seq.json", "--method", "rh", "--h", "1",
               "--manifest-out", base + ".m1.json",
               "--solution-out", base + ".rh1.sol"])
    assert rc == 0
    capsys.readouterr()
    doc = json.loads((prod_files / "prod.m1.json").read_text())
    assert doc["objective"] == pytest.approx(whole["objective"], rel=1e-9)


def test_gen_writes_all_documents(prod_files):
    for suffix in (".glir.json", ".data.json", ".seq.json"):
        assert (prod_files / ("prod" + suffix)).exists()
