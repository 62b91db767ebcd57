import csv
import json

import numpy as np
import pytest

from mixforge import io as mio
from mixforge.cli import main, parse_grid, thread_count
from mixforge.control import ControlPulse, HamiltonianModel, build_ensemble, grape_optimize
from mixforge.exceptions import SchemaError
from mixforge.pauli import rotation
from mixforge.rb import RBConfig, acorn_sources, run_rb
from mixforge.synthesis import acorn_ensemble, solve_sparse

XHALF = rotation("X", np.pi / 2)
ONE = HamiltonianModel.one_qubit()


@pytest.fixture
def run(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)

    def _run(*argv):
        code = main([str(a) for a in argv])
        out = capsys.readouterr()
        return code, out.out, out.err

    return _run


@pytest.fixture(scope="module")
def small_ensemble_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("ens") / "e.json"
    assert main(["gen-ensemble", "--model", "1q", "--count", "20", "--seed", "7", "--out", str(path)]) == 0
    return path


def reread(path):
    text = path.read_text()
    assert mio.dumps(mio.to_doc(mio.load(path))) == text


def test_round_trips_are_byte_identical(tmp_path, small_ensemble_file):
    reread(small_ensemble_file)
    ens = acorn_ensemble()
    mio.save(ens, tmp_path / "acorn.json")
    reread(tmp_path / "acorn.json")
    w = solve_sparse(mio.load(small_ensemble_file), 1e-4)
    mio.save(w, tmp_path / "w.json")
    reread(tmp_path / "w.json")
    res = run_rb(RBConfig(acorn_sources([0.25] * 4)["mqg"], lengths=(2, 8), sequences_per_length=2,
                          shots_per_sequence=20, seed=1))
    mio.save(res, tmp_path / "rb.json")
    reread(tmp_path / "rb.json")


def test_ensemble_file_contents(small_ensemble_file):
    doc = json.loads(small_ensemble_file.read_text())
    assert doc["schema_version"] == 1 and doc["dimension"] == 2
    assert set(doc["metadata"]) >= {"seed", "algorithm", "floor", "timestamp"}
    m = doc["members"][0]
    assert set(m) == {"id", "pulse", "ptm", "generator", "derivatives", "fidelity_at_nominal"}
    assert set(m["derivatives"]) == {"delta", "epsilon"}
    ens = mio.load(small_ensemble_file)
    assert ens.size == 20
    assert ens.members[0].pulse.n_steps == 25


def test_schema_rejection(tmp_path, run):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 2, "kind": "weights"}))
    with pytest.raises(SchemaError):
        mio.load(bad)
    code, _, err = run("eval", "--builtin", "paper-acorn", "--weights", bad)
    assert code == 2 and "schema_version" in err
    with pytest.raises(SchemaError):
        mio.loads("{not json")
    with pytest.raises(SchemaError):
        mio.ensemble_from_doc({"schema_version": 1, "kind": "weights"})


def test_atomic_write_leaves_no_temp_files(tmp_path):
    mio.write_atomic(tmp_path / "a.txt", "hello\n")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


def test_gen_ensemble_is_idempotent(tmp_path, run, small_ensemble_file):
    code, _, _ = run("gen-ensemble", "--count", "20", "--seed", "7", "--out", "again.json")
    assert code == 0
    assert (tmp_path / "again.json").read_bytes() == small_ensemble_file.read_bytes()


def test_single_member_reduces_every_program(run):
    assert run("gen-ensemble", "--count", "1", "--seed", "3", "--out", "one.json")[0] == 0
    for program in ("generator-exact", "pauli-exact", "robust", "agi-weighted", "sparse"):
        code, _, _ = run("synth", "--ensemble", "one.json", "--program", program, "--out", "w.json")
        assert code in (0, 4)
        assert mio.load("w.json").w.tolist() == [1.0]


def test_generation_shortfall_exit_code(run):
    with pytest.warns(UserWarning, match="missed the fidelity floor"):
        code, _, _ = run("gen-ensemble", "--count", "10", "--seed", "7", "--max-iter", "5",
                         "--out", "short.json")
    assert code == 3
    assert 0 < mio.load("short.json").size < 10


def test_two_qubit_family_is_deterministic(tmp_path, run):
    run("gen-ensemble", "--model", "2q", "--count", "6", "--seed", "7", "--out", "a.json")
    run("gen-ensemble", "--model", "2q", "--count", "6", "--seed", "7", "--out", "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert mio.load("a.json").dim == 16


def test_synth_builtin_programs(run):
    code, _, _ = run("synth", "--builtin", "paper-acorn", "--program", "pauli-exact", "--out", "p.json")
    assert code == 0 and mio.load("p.json").residual <= 1e-9
    run("synth", "--builtin", "paper-acorn", "--program", "sparse", "--lambda", "0", "--out", "s.json")
    run("synth", "--builtin", "paper-acorn", "--program", "generator-exact", "--out", "g.json")
    assert abs(mio.load("s.json").residual - mio.load("g.json").residual) <= 1e-8


def test_synth_robust_reports_combined_residual(run, small_ensemble_file):
    code, out, _ = run("synth", "--ensemble", small_ensemble_file, "--program", "robust",
                       "--params", "delta,epsilon", "--out", "r.json")
    w = mio.load("r.json")
    assert code == (0 if w.metadata["cancellation"] <= 1e-9 else 4)
    assert w.metadata["parameters"] == ["delta", "epsilon"]
    assert "robust: residual" in out


def test_synth_infeasible_names_fallback(run):
    run("gen-ensemble", "--count", "1", "--seed", "3", "--out", "one.json")
    code, _, err = run("synth", "--ensemble", "one.json", "--program", "agi-constrained")
    assert code == 5
    assert "agi-weighted" in err


def test_sweep_perfect_gate(tmp_path, run):
    ens = build_ensemble([ControlPulse(np.tile([0.25, 0.0], (25, 1)), np.pi / 25)], XHALF, ONE, ids=["ideal"])
    mio.write_atomic(tmp_path / "ideal.json", mio.dumps(mio.ensemble_to_doc(ens, ONE)))
    code, _, _ = run("sweep", "--ensemble", "ideal.json", "--grid", "0", "--members", "all", "--out", "s.csv")
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 1
    assert rows[0]["source_id"] == "ideal"
    assert float(rows[0]["param_value"]) == 0.0
    assert abs(float(rows[0]["agi"])) <= 1e-15 and abs(float(rows[0]["diamond"])) <= 1e-7


def test_sweep_sources_and_columns(tmp_path, run, small_ensemble_file):
    run("synth", "--ensemble", small_ensemble_file, "--program", "generator-exact", "--out", "g.json")
    code, _, _ = run("sweep", "--ensemble", small_ensemble_file, "--grid=-0.01:0.01:3",
                     "--members", "0,1", "--weights", "g.json", "--out", "s.csv")
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert list(rows[0]) == ["param_value", "source_id", "agi", "diamond"]
    assert len(rows) == 9
    assert {r["source_id"] for r in rows} == {"0", "1", "g"}


def test_parse_grid():
    np.testing.assert_allclose(parse_grid("-1:1:5"), [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(parse_grid("0.1,0.2"), [0.1, 0.2])
    with pytest.raises(SchemaError):
        parse_grid("0.2,0.1")


def test_rb_commands(tmp_path, run):
    code, out, _ = run("rb", "--source", "calibrated", "--depol", "0.04", "--seed", "1", "--out", "cal.json")
    assert code == 0 and "r = " in out
    assert mio.load("cal.json").r == pytest.approx(0.02, rel=0.1)
    assert (tmp_path / "cal.csv").read_text().startswith("length,sequence_id,survival,shots\n")
    run("synth", "--builtin", "paper-acorn", "--program", "pauli-exact", "--out", "w.json")
    run("rb", "--source", "builtin:pulse4", "--seed", "1", "--out", "p4.json")
    run("rb", "--source", "mqg:w.json", "--seed", "1", "--out", "mqg.json")
    assert mio.load("mqg.json").r < mio.load("p4.json").r
    code, _, _ = run("rb", "--shots", "1", "--seqs", "1", "--lengths", "2", "--out", "tiny.json")
    assert code == 0 and json.loads((tmp_path / "tiny.json").read_text())["kind"] == "rb_result"
    code, _, _ = run("rb", "--source", "builtin:pulse9")
    assert code == 2

    code, out, _ = run("report", "p4.json", "mqg.json", "--out", "rep.json")
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert code == 0 and rep["pass"]
    assert [c["name"] for c in rep["checks"]] == ["rb_order:mqg<pulse4"]


def test_report_edge_cases(tmp_path, run):
    code, _, _ = run("report", "--out", "empty.json")
    rep = json.loads((tmp_path / "empty.json").read_text())
    assert code == 0 and rep["files"] == {} and rep["checks"] == []
    code, _, _ = run("report", "missing.json", "--out", "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    assert code != 0 and "error" in rep["files"]["missing.json"]


def test_eval_and_convexity_batch(tmp_path, run):
    run("synth", "--builtin", "paper-acorn", "--program", "pauli-exact", "--out", "w.json")
    code, _, _ = run("eval", "--builtin", "paper-acorn", "--weights", "w.json", "--convexity", "10",
                     "--out", "m.json")
    assert code == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["convexity"] == {"trials": 10, "passed": 10, "pass": True}
    assert doc["mixture"]["offdiag_max"] <= 1e-8
    assert all(m["diamond"] > doc["mixture"]["diamond"] for m in doc["members"])
    code, _, _ = run("report", "m.json", "--out", "rep.json")
    assert code == 0


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("MIXFORGE_THREADS", "2")
    assert thread_count(8) == 2
    monkeypatch.delenv("MIXFORGE_THREADS")
    assert thread_count(3) == 3


def test_parallel_generation_matches_serial(tmp_path, run, monkeypatch, small_ensemble_file):
    monkeypatch.setenv("MIXFORGE_THREADS", "2")
    code, _, _ = run("gen-ensemble", "--count", "20", "--seed", "7", "--threads", "2", "--out", "par.json")
    assert code == 0
    assert (tmp_path / "par.json").read_bytes() == small_ensemble_file.read_bytes()
