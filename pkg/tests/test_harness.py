import csv

import numpy as np
import pytest

from richards_lab import ConfigError, MismatchedProblem, NoConvergence
from richards_lab import harness
from richards_lab.harness import ExperimentConfig


def small_fdm(tmp_path, name="a", **kw):
    return ExperimentConfig(problem="fdm1d_generic", nz=20, out=str(tmp_path / name), **kw)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# comment\nproblem = fdm1d_generic\nL = 0.7  # inline\naa_enabled = yes\nK = 6\n")
    cfg = ExperimentConfig.from_file(path, {"L": 0.9, "nz": None})
    assert cfg.problem == "fdm1d_generic" and cfg.L == 0.9 and cfg.aa_enabled and cfg.K == 6
    assert cfg.nz == 40


@pytest.mark.parametrize("mapping", [
    {"problem": "nope"},
    {"scheme": "newton", "problem": "fdm1d_generic"},
    {"K": "4"},
    {"epsilon": "0"},
    {"L": "-1"},
    {"unknown_key": "1"},
    {"K": "three"},
    {"problem": "coupled_manufactured", "aa_enabled": "true"},
])
def test_config_validation(mapping):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(mapping)


def test_problem_defaults():
    assert ExperimentConfig(problem="benchmark2d").L == 0.15
    assert ExperimentConfig(problem="fdm1d_generic").L == 0.5
    cfg = ExperimentConfig(problem="coupled_manufactured")
    assert cfg.L == 100.0 and cfg.epsilon == 1e-6 and cfg.T == 1.0


def test_checkpoints():
    assert harness.checkpoint_steps(3) == (1, 2, 3)
    assert harness.checkpoint_steps(9) == (3, 6, 9)


def test_run_writes_all_files_and_is_deterministic(tmp_path):
    rec_a = harness.run(small_fdm(tmp_path, "a"))
    rec_b = harness.run(small_fdm(tmp_path, "b"))
    for name in ("corrections.csv", "orders.csv", "solution.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "run.meta").exists()
    meta = (tmp_path / "a" / "run.meta").read_text()
    assert "norm = l2_scaled" in meta and "numpy =" in meta
    # sequences recorded at k = 3, 6, 9 have exactly those steps' iteration counts
    assert rec_a.checkpoint_steps == (3, 6, 9)
    counts = [rec_a.iterations[k - 1] for k in rec_a.checkpoint_steps]
    assert [len(s) for s in rec_a.sequences] == counts
    assert len(rec_a.reports) == len(rec_a.sequences)
    assert rec_a.total_iterations == rec_b.total_iterations
    assert not list((tmp_path / "a").glob("*.tmp"))


def test_csv_round_trip_is_exact(tmp_path):
    rec = harness.run(small_fdm(tmp_path))
    seqs = harness.read_corrections(tmp_path / "a" / "corrections.csv")
    assert len(seqs) == 3
    for orig, back in zip(rec.sequences, seqs):
        assert np.array_equal(orig.values, back.values)
    with open(tmp_path / "a" / "orders.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["verdict"] for r in rows} == {"C_order"}
    assert rows[0].keys() == {"label", "s", "p_Q", "p_R", "Q_p", "verdict"}


def test_reanalyse_reproduces_orders(tmp_path):
    harness.run(small_fdm(tmp_path))
    out = tmp_path / "again.csv"
    harness.reanalyse(tmp_path / "a" / "corrections.csv", out)
    original = (tmp_path / "a" / "orders.csv").read_text().splitlines()[1:]
    redone = out.read_text().splitlines()[1:]
    # labels differ in the scheme suffix only; the numbers must agree
    assert [r.split(",", 1)[1] for r in original] == [r.split(",", 1)[1] for r in redone]


def test_no_convergence_keeps_partial_record(tmp_path):
    cfg = small_fdm(tmp_path, max_iters=5)
    with pytest.raises(NoConvergence) as info:
        harness.run(cfg)
    record = info.value.record
    assert record.sequences and len(record.sequences[-1]) == 5


def test_compare(tmp_path):
    rec = harness.run(small_fdm(tmp_path), write=False)
    rows = harness.compare([rec, rec])
    assert rows[1].iteration_ratio == 1.0 and rows[1].tail_q1_ratio == 1.0
    other = harness.run(ExperimentConfig(problem="benchmark2d", nx=8, ny=8), write=False)
    with pytest.raises(MismatchedProblem):
        harness.compare([rec, other])
    with pytest.raises(MismatchedProblem):
        harness.compare([rec])
    assert len(harness.compare([rec, other], cross_problem=True)) == 2


def test_newton_beats_lscheme_on_benchmark():
    newton = harness.run(ExperimentConfig(problem="benchmark2d", scheme="newton", nx=8, ny=8),
                         write=False)
    lscheme = harness.run(ExperimentConfig(problem="benchmark2d", nx=8, ny=8), write=False)
    rows = harness.compare([newton, lscheme])
    assert rows[0].iterations < rows[1].iterations
    assert rows[0].p_final > rows[1].p_final


def test_coupled_run_writes_table(tmp_path):
    cfg = ExperimentConfig(problem="coupled_manufactured", nz=10, out=str(tmp_path / "c"))
    rec = harness.run(cfg)
    with open(tmp_path / "c" / "table1.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert rows[0]["eoc_psi"] == "nan"
    assert all(r["eoc_psi"] != "nan" and r["eoc_c"] != "nan" for r in rows[1:])
    assert {s.meta["checkpoint"] for s in rec.sequences} == {
        "T/3/psi", "T/3/c", "2T/3/psi", "2T/3/c", "T/psi", "T/c"}


def test_fmt_has_17_digits():
    assert harness.fmt(0.1) == "0.10000000000000001"
    assert float(harness.fmt(np.pi)) == np.pi
    assert harness.fmt(float("nan")) == "nan"
