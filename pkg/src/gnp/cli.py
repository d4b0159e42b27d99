"""Command-line entry points: gen, train, solve, bench, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .baselines import PRECONDITIONERS
from .checkpoint import CheckpointError, MatrixMeta, save_checkpoint
from .generators import convection_diffusion_2d, random_perturbed_diagonal
from .gnn import GnnDims
from .krylov import SolveConfig
from .sparse import MatrixMarketError, normalize, read_matrix_market, write_matrix_market
from .training import TrainConfig, train_preconditioner

log = logging.getLogger("gnp")


def _add_train_flags(p):
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--spectral", type=int, default=8, help="spectral pairs per batch")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--arnoldi", type=int, default=40, help="Arnoldi steps for spectral sampling")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)


def _add_solve_flags(p):
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--maxiters", type=int, default=100)
    p.add_argument("--restart", type=int, default=10)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lr=args.lr, steps=args.steps, batch=args.batch, spectral_count=args.spectral,
        arnoldi_m=args.arnoldi, seed=args.seed, monitor_batch=args.batch,
        dims=GnnDims(d=args.dim, hidden=args.hidden, L=args.layers),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic test matrix")
    g.add_argument("kind", choices=["convdiff", "perturbed"])
    g.add_argument("--out", required=True)
    g.add_argument("--grid", type=int, default=32, help="convdiff: interior nodes per side")
    g.add_argument("--convection", type=float, nargs=2, default=(20.0, 10.0))
    g.add_argument("--n", type=int, default=1000, help="perturbed: dimension")
    g.add_argument("--nnz-per-row", type=int, default=4)
    g.add_argument("--perturbation", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a graph neural preconditioner")
    t.add_argument("--matrix", required=True)
    t.add_argument("--out", required=True)
    _add_train_flags(t)

    s = sub.add_parser("solve", help="solve A x = A 1 with FGMRES")
    s.add_argument("--matrix", required=True)
    s.add_argument("--precond", required=True, choices=PRECONDITIONERS)
    s.add_argument("--model", help="checkpoint (required for gnp)")
    s.add_argument("--history", help="convergence record JSON (default: <matrix>.<precond>.history.json)")
    _add_solve_flags(s)

    b = sub.add_parser("bench", help="run preconditioners over a manifest")
    b.add_argument("--manifest", required=True)
    b.add_argument("--out", required=True, help="RunRecord JSON lines")
    b.add_argument("--preconds", default="none,jacobi,gmres,ilu0,gnp")
    b.add_argument("--no-timeout-run", action="store_true", help="skip the timeout-mode rerun")
    b.add_argument("--timeout", type=float, help="time budget when a single preconditioner runs")
    b.add_argument("--jobs", type=int, default=1)
    _add_solve_flags(b)
    _add_train_flags(b)

    r = sub.add_parser("report", help="aggregate RunRecord lines")
    r.add_argument("--records", required=True)
    r.add_argument("--out", required=True, help="AggregateReport JSON")
    r.add_argument("--csv", help="per-run metrics CSV")
    r.add_argument("--history-csv", help="long-format convergence curves CSV")
    return parser


def cmd_gen(args) -> int:
    if args.kind == "convdiff":
        A = convection_diffusion_2d(args.grid, tuple(args.convection))
        note = f"convection-diffusion grid={args.grid} convection={tuple(args.convection)}"
    else:
        A = random_perturbed_diagonal(args.n, args.nnz_per_row, args.perturbation, seed=args.seed)
        note = f"perturbed diagonal n={args.n} nnz_per_row={args.nnz_per_row} seed={args.seed}"
    write_matrix_market(A, args.out, comment=note)
    print(f"wrote {args.out}: n={A.n} nnz={A.nnz}")
    return 0


def cmd_train(args) -> int:
    A = normalize(read_matrix_market(args.matrix))
    cfg = _train_config(args)
    params, hist = train_preconditioner(A, cfg)
    Path(args.out).write_bytes(save_checkpoint(params, cfg.dims, MatrixMeta.of(A)))
    final = hist.monitor_loss[-1]
    print(f"final monitor loss {final:.6e}  best {hist.best_monitor_loss:.6e} at step {hist.best_step}"
          f"  ({hist.seconds:.1f}s)")
    return 0


def cmd_solve(args) -> int:
    if args.precond == "gnp" and not args.model:
        print("gnp: error: --precond gnp requires --model", file=sys.stderr)
        return 2
    A = normalize(read_matrix_market(args.matrix))
    spec = bench.PrecondSpec(args.precond, {"checkpoint": args.model} if args.model else {})
    cfg = SolveConfig(rtol=args.rtol, maxiters=args.maxiters, restart=args.restart)
    rec = bench.run_single(A, spec, cfg, "maxiters", matrix_id=Path(args.matrix).stem)
    history = args.history or str(Path(args.matrix).with_suffix(f".{args.precond}.history.json"))
    Path(history).write_text(rec.to_json() + "\n")
    if rec.status == bench.CONSTRUCTION_FAILURE:
        print(f"{rec.status}: {rec.error}")
        return 1
    iters = rec.history.iterations[-1]
    print(f"{rec.status} iterations={iters} relres={rec.final_relres:.3e} iter_auc={rec.iter_auc:.4f}")
    return 0


def cmd_bench(args) -> int:
    manifest = bench.Manifest.load(args.manifest)
    cfg = SolveConfig(rtol=args.rtol, maxiters=args.maxiters, restart=args.restart)
    specs = []
    for name in (s.strip() for s in args.preconds.split(",") if s.strip()):
        if name not in PRECONDITIONERS:
            print(f"gnp: error: unknown preconditioner {name!r}", file=sys.stderr)
            return 2
        specs.append(bench.PrecondSpec(name, {"train": _train_config(args)} if name == "gnp" else {}))
    records = bench.run_suite(manifest, specs, cfg, time_mode=not args.no_timeout_run,
                              timeout_budget=args.timeout, jobs=args.jobs)
    bench.write_records(records, args.out)
    n_fail = sum(r.failed for r in records)
    print(f"wrote {len(records)} records to {args.out} ({n_fail} failed)")
    return 0


def cmd_report(args) -> int:
    records = bench.read_records(args.records)
    if not records:
        print(f"gnp: error: no records in {args.records}", file=sys.stderr)
        return 1
    report = bench.aggregate(records)
    Path(args.out).write_text(report.to_json() + "\n")
    if args.csv:
        bench.write_metrics_csv(records, args.csv)
    if args.history_csv:
        bench.write_history_csv(records, args.history_csv)
    print(json.dumps({"best_iter": report.best_iter, "best_time": report.best_time}))
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "solve": cmd_solve, "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, MatrixMarketError, CheckpointError, ValueError) as exc:
        print(f"gnp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
