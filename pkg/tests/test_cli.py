import json

import numpy as np
import pytest

from ccmole.cc.ccsd import load_amplitudes, mp2_amplitudes, mp2_energy
from ccmole.cc.fcidump import load_fcidump, write_fcidump
from ccmole.cc.fci import fci_oracle
from ccmole.cc.integrals import generate_synthetic
from ccmole.cli import EXIT_CHECK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from ccmole.fixtures import BENCH_FIXTURES, TWO_ELECTRON_FIXTURES, fixture_set
from ccmole.model.config import DESK
from ccmole.training import save_checkpoint, zero_checkpoint


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def report(capsys, *argv):
    code = main(["--json", "-", *[str(a) for a in argv]])
    text = capsys.readouterr().out
    return code, json.loads(text[text.index("\n{") + 1 :] if not text.startswith("{") else text)


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    assert main(["gen-fixtures", "--spec", "train:6:2:0.1", "--seed", "5", "--out", str(d)]) == EXIT_OK
    return d


@pytest.fixture
def fcidump(tmp_path):
    p = tmp_path / "a.fcidump"
    write_fcidump(generate_synthetic(2, 6, 2, 0.2), p)
    return p


# -- engine commands ----------------------------------------------------------------------


def test_mp2_matches_library(capsys, fcidump):
    code, doc = report(capsys, "mp2", fcidump)
    assert code == EXIT_OK
    assert doc["outputs"]["correlation_energy"] == mp2_energy(load_fcidump(fcidump))
    assert set(doc) >= {"command", "inputs", "config_hash", "outputs", "timings_ms", "version"}


def test_mp2_zero_coupling(capsys, tmp_path):
    p = tmp_path / "z.fcidump"
    write_fcidump(generate_synthetic(1, 5, 2, 0.0), p)
    code, doc = report(capsys, "mp2", p)
    assert doc["outputs"]["correlation_energy"] == 0.0


def test_ccsd_two_electron_matches_fci(capsys, tmp_path):
    p = tmp_path / "t.fcidump"
    ints = TWO_ELECTRON_FIXTURES[1].build()
    write_fcidump(ints, p)
    code, doc = report(capsys, "ccsd", p, "--tol", "1e-12", "--max-iter", "500")
    assert code == EXIT_OK and doc["outputs"]["converged"]
    assert doc["outputs"]["total_energy"] == pytest.approx(fci_oracle(ints), abs=1e-9)


def test_ccsd_guess_file_and_max_iter_zero(capsys, tmp_path, fcidump):
    amps = tmp_path / "t.json"
    assert run(capsys, "ccsd", fcidump, "--tol", "1e-11", "--out", amps)[0] == EXIT_OK
    code, doc = report(capsys, "ccsd", fcidump, "--guess", "file", "--guess-file", amps)
    assert code == EXIT_OK and doc["outputs"]["iterations"] <= 1
    code, doc = report(capsys, "ccsd", fcidump, "--max-iter", "0")
    assert code == EXIT_NUMERICAL
    assert doc["outputs"]["iterations"] == 0 and not doc["outputs"]["converged"]


def test_ccsd_divergence_exit_code(capsys, tmp_path):
    p = tmp_path / "d.fcidump"
    write_fcidump(generate_synthetic(3, 6, 2, 3.0), p)
    assert run(capsys, "ccsd", p, "--max-iter", "200")[0] == EXIT_NUMERICAL


@pytest.mark.parametrize(
    "argv",
    [
        ["mp2", "missing.fcidump"],
        ["ccsd", "{f}", "--guess", "file"],
        ["ccsd", "{f}", "--tol", "-1"],
        ["ccsd", "{f}", "--guess", "file", "--guess-file", "missing.json"],
    ],
)
def test_input_errors(capsys, fcidump, argv):
    code, _, err = run(capsys, *[a.format(f=fcidump) for a in argv])
    assert code == EXIT_INPUT and err.startswith("error:")


def test_parse_error_is_input_error(capsys, tmp_path):
    p = tmp_path / "bad.fcidump"
    p.write_text("&FCI NORB=2,NELEC=3,MS2=1,\n&END\n")
    assert run(capsys, "mp2", p)[0] == EXIT_INPUT


def test_thread_env_is_validated(capsys, fcidump, monkeypatch):
    monkeypatch.setenv("CCMOLE_NUM_THREADS", "zero")
    assert run(capsys, "mp2", fcidump)[0] == EXIT_INPUT
    monkeypatch.setenv("CCMOLE_NUM_THREADS", "1")
    assert run(capsys, "mp2", fcidump)[0] == EXIT_OK


# -- model commands --------------------------------------------------------------------------


def test_predict_with_zero_checkpoint_is_mp2(capsys, tmp_path, train_dir):
    ck = tmp_path / "zero.json"
    save_checkpoint(zero_checkpoint(DESK), ck)
    out = tmp_path / "pred.json"
    sysf, fd = train_dir / "synthetic-5.molsys.json", train_dir / "synthetic-5.fcidump"
    assert run(capsys, "predict", sysf, fd, ck, "--out", out)[0] == EXIT_OK
    t = load_amplitudes(out)
    assert not np.any(t.t1)
    np.testing.assert_array_equal(t.t2, mp2_amplitudes(load_fcidump(fd)).t2)
    # the prediction is a valid warm start for the solver
    code, doc = report(capsys, "ccsd", fd, "--guess", "file", "--guess-file", out)
    assert code == EXIT_OK and doc["outputs"]["converged"]


def test_predict_errors(capsys, tmp_path, train_dir):
    sysf, fd = train_dir / "synthetic-5.molsys.json", train_dir / "synthetic-5.fcidump"
    assert run(capsys, "predict", sysf, fd, tmp_path / "none.json")[0] == EXIT_INPUT
    ck = tmp_path / "zero.json"
    save_checkpoint(zero_checkpoint(DESK), ck)
    other = tmp_path / "o.fcidump"
    write_fcidump(generate_synthetic(1, 7, 2, 0.1), other)
    assert run(capsys, "predict", sysf, other, ck)[0] == EXIT_INPUT


def test_train_and_resume(capsys, tmp_path, train_dir):
    manifest = train_dir / "manifest.json"
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    log = tmp_path / "log.jsonl"
    code, doc = report(capsys, "train", manifest, "--steps", "4", "--out", a, "--log", log)
    assert code == EXIT_OK and doc["outputs"]["steps"] == 4
    assert len(log.read_text().splitlines()) == 4
    assert run(capsys, "train", manifest, "--steps", "2", "--out", b)[0] == EXIT_OK
    assert run(capsys, "train", manifest, "--steps", "4", "--resume", b, "--out", b)[0] == EXIT_OK
    assert json.loads(a.read_text())["params"] == json.loads(b.read_text())["params"]


def test_train_rejects_empty_manifest(capsys, tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"format": "manifest/1", "samples": []}))
    assert run(capsys, "train", m, "--out", tmp_path / "c.json")[0] == EXIT_INPUT
    m.write_text("{}")
    assert run(capsys, "train", m, "--out", tmp_path / "c.json")[0] == EXIT_INPUT


def test_train_config_overrides(capsys, tmp_path, train_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"lr": 1e-3}, "model": {"n_layers": 1}}))
    code, doc = report(capsys, "train", train_dir / "manifest.json", "--config", cfg, "--steps", "1", "--out", tmp_path / "c.json")
    assert code == EXIT_OK
    cfg.write_text(json.dumps({"model": {"bogus": 1}}))
    assert run(capsys, "train", train_dir / "manifest.json", "--config", cfg, "--out", tmp_path / "c.json")[0] == EXIT_INPUT


def test_equiv_check_untrained_passes_and_negative_control_fails(capsys, train_dir):
    sysf, fd = train_dir / "synthetic-5.molsys.json", train_dir / "synthetic-5.fcidump"
    code, doc = report(capsys, "equiv-check", sysf, fd, "--trials", "2")
    assert code == EXIT_OK
    assert {c["name"] for c in doc["checks"]} == {"rotation", "sign", "permutation", "pair-exchange", "size-extensivity"}
    code, doc = report(capsys, "equiv-check", sysf, fd, "--trials", "2", "--debug-even-monomial")
    assert code == EXIT_CHECK
    assert not next(c for c in doc["checks"] if c["name"] == "sign")["passed"]
    code, doc = report(capsys, "equiv-check", sysf, fd, "--trials", "0")
    assert code == EXIT_OK and doc["checks"] == []


# -- benchmarks and fixtures -------------------------------------------------------------------


def test_cycle_bench_without_noise_converges_immediately(capsys):
    code, doc = report(capsys, "cycle-bench", "--noise", "0")
    assert code == EXIT_OK
    rows = doc["outputs"]["rows"]
    assert len(rows) == 10 and all(r["warm_iterations"] <= 1 for r in rows)
    assert set(doc["outputs"]) >= {"mp2_average_cycles", "warm_average_cycles", "mp2_not_converged", "warm_not_converged", "warm_wins"}


def test_cycle_bench_rejects_unknown_set(capsys):
    assert run(capsys, "cycle-bench", "--fixtures", "qm7")[0] == EXIT_INPUT


def test_bench_scaling_report(capsys):
    code, doc = report(capsys, "bench-scaling", "--sizes", "6,8,10", "--reps", "1", "--model", "tiny")
    out = doc["outputs"]
    assert code == EXIT_OK
    assert len(out["residual_seconds"]) == 3 and all(t > 0 for t in out["residual_seconds"])
    assert "model_slope" in out
    with pytest.raises(SystemExit):
        main(["bench-scaling", "--sizes", "a,b"])


def test_gen_fixtures_is_deterministic_and_reloads(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "gen-fixtures", "--spec", "all", "--out", tmp_path / d)[0] == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 14
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert load_fcidump(tmp_path / "a" / name).n_orb in (4, 5, 6, 8, 12)


def test_gen_fixtures_two_electron_subset_matches_fci(capsys, tmp_path):
    assert run(capsys, "gen-fixtures", "--spec", "two-electron", "--out", tmp_path)[0] == EXIT_OK
    for f in TWO_ELECTRON_FIXTURES:
        p = tmp_path / f"{f.name}.fcidump"
        code, doc = report(capsys, "ccsd", p, "--tol", "1e-12", "--max-iter", "500")
        assert doc["outputs"]["total_energy"] == pytest.approx(fci_oracle(load_fcidump(p)), abs=1e-9)


def test_gen_fixtures_bad_spec(capsys, tmp_path):
    assert run(capsys, "gen-fixtures", "--spec", "8:2", "--out", tmp_path)[0] == EXIT_INPUT
    assert run(capsys, "gen-fixtures", "--spec", "8:8:0.1", "--out", tmp_path)[0] == EXIT_INPUT


def test_fixture_grid():
    assert [(f.n_orb, f.n_occ, f.coupling) for f in BENCH_FIXTURES[:3]] == [(8, 1, 0.05), (12, 2, 0.1), (8, 3, 0.2)]
    assert all(f.n_occ == 1 and f.n_orb <= 6 for f in TWO_ELECTRON_FIXTURES)
    assert len(fixture_set("all")) == 14
