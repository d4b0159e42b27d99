import json

import numpy as np
import pytest

from gnp.bench import read_records
from gnp.checkpoint import load_checkpoint
from gnp.cli import build_parser, main
from gnp.gnn import GnnDims, init_params
from gnp.sparse import CsrMatrix, read_matrix_market, write_matrix_market

TINY = ["--layers", "2", "--dim", "4", "--hidden", "6", "--arnoldi", "6"]


def test_defaults_match_reference_hyperparameters():
    a = build_parser().parse_args(["train", "--matrix", "a", "--out", "b"])
    assert (a.steps, a.batch, a.lr, a.arnoldi, a.layers, a.dim, a.hidden, a.seed) == (2000, 16, 1e-3, 40, 8, 16, 32, 0)
    s = build_parser().parse_args(["solve", "--matrix", "a", "--precond", "none"])
    assert (s.rtol, s.maxiters, s.restart) == (1e-8, 100, 10)


def test_gen_both_kinds(tmp_path):
    assert main(["gen", "convdiff", "--grid", "5", "--out", str(tmp_path / "c.mtx")]) == 0
    assert read_matrix_market(tmp_path / "c.mtx").n == 25
    assert main(["gen", "perturbed", "--n", "30", "--out", str(tmp_path / "p.mtx")]) == 0
    assert read_matrix_market(tmp_path / "p.mtx").n == 30


def test_train_deterministic_and_zero_steps(tmp_path):
    mtx = tmp_path / "a.mtx"
    main(["gen", "convdiff", "--grid", "4", "--out", str(mtx)])
    outs = []
    for k in range(2):
        out = tmp_path / f"a{k}.ckpt"
        assert main(["train", "--matrix", str(mtx), "--out", str(out), "--steps", "5", "--seed", "0", *TINY]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    z = tmp_path / "z.ckpt"
    assert main(["train", "--matrix", str(mtx), "--out", str(z), "--steps", "0", "--seed", "3", *TINY]) == 0
    params, dims, _ = load_checkpoint(z.read_bytes())
    assert dims == GnnDims(d=4, hidden=6, L=2)
    seeds = np.random.SeedSequence(3).spawn(4)
    assert params.equals(init_params(dims, np.random.default_rng(seeds[0])))


def test_solve_identity(tmp_path, capsys):
    mtx = tmp_path / "eye.mtx"
    write_matrix_market(CsrMatrix.identity(4), mtx)
    hist = tmp_path / "h.json"
    assert main(["solve", "--matrix", str(mtx), "--precond", "none", "--history", str(hist)]) == 0
    assert "converged iterations=1" in capsys.readouterr().out
    rec = json.loads(hist.read_text())
    assert rec["status"] == "converged"
    assert main(["solve", "--matrix", str(mtx), "--precond", "jacobi"]) == 0
    assert (tmp_path / "eye.jacobi.history.json").exists()


def test_solve_with_model(tmp_path, capsys):
    mtx = tmp_path / "a.mtx"
    main(["gen", "convdiff", "--grid", "4", "--out", str(mtx)])
    ck = tmp_path / "a.ckpt"
    main(["train", "--matrix", str(mtx), "--out", str(ck), "--steps", "3", *TINY])
    assert main(["solve", "--matrix", str(mtx), "--precond", "gnp", "--model", str(ck)]) == 0


def test_solve_gnp_without_model_is_usage_error(tmp_path, capsys):
    assert main(["solve", "--matrix", str(tmp_path / "x.mtx"), "--precond", "gnp"]) == 2
    assert "--model" in capsys.readouterr().err


def test_solve_construction_failure(tmp_path, capsys):
    mtx = tmp_path / "z.mtx"
    write_matrix_market(CsrMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]]), mtx)
    assert main(["solve", "--matrix", str(mtx), "--precond", "ilu0"]) == 1
    assert "construction_failure" in capsys.readouterr().out


def test_missing_matrix_is_error(tmp_path):
    assert main(["solve", "--matrix", str(tmp_path / "nope.mtx"), "--precond", "none"]) == 1


def test_bench_and_report(tmp_path, capsys):
    lines = []
    for i, grid in enumerate((4, 5)):
        main(["gen", "convdiff", "--grid", str(grid), "--out", str(tmp_path / f"m{i}.mtx")])
        lines.append(f"m{i}\tm{i}.mtx")
    (tmp_path / "man.tsv").write_text("\n".join(lines) + "\n")
    recs = tmp_path / "r.jsonl"
    assert main(["bench", "--manifest", str(tmp_path / "man.tsv"), "--out", str(recs),
                 "--preconds", "none,jacobi,ilu0"]) == 0
    assert len(recs.read_text().splitlines()) == 6
    rep_path = tmp_path / "rep.json"
    assert main(["report", "--records", str(recs), "--out", str(rep_path),
                 "--csv", str(tmp_path / "m.csv"), "--history-csv", str(tmp_path / "h.csv")]) == 0
    rep = json.loads(rep_path.read_text())
    assert sum(rep["best_iter"].values()) == rep["n_with_success"] == 2
    assert (tmp_path / "m.csv").exists() and (tmp_path / "h.csv").exists()
    assert len(read_records(recs)) == 6


def test_bench_unknown_preconditioner(tmp_path):
    write_matrix_market(CsrMatrix.identity(3), tmp_path / "e.mtx")
    (tmp_path / "man.tsv").write_text("e\te.mtx\n")
    assert main(["bench", "--manifest", str(tmp_path / "man.tsv"), "--out", str(tmp_path / "r"),
                 "--preconds", "none,bogus"]) == 2


def test_report_empty_records(tmp_path):
    (tmp_path / "empty.jsonl").write_text("")
    assert main(["report", "--records", str(tmp_path / "empty.jsonl"), "--out", str(tmp_path / "o.json")]) != 0


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
