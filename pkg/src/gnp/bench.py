"""Benchmark harness: convergence metrics, failure accounting and aggregation.

Two stopping regimes are used per matrix. The ``maxiters`` run caps the
number of outer iterations and feeds Iter-AUC; the ``timeout`` run disables
the iteration cap, uses the largest solve time seen in the ``maxiters`` runs
as a wall-clock budget, and feeds Time-AUC.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .baselines import ConstructionError, identity_build, ilu0_build, inner_gmres_build, jacobi_build
from .krylov import ConvergenceHistory, SolveConfig, fgmres_solve
from .sparse import CsrMatrix, normalize, read_matrix_market, spmv

__all__ = [
    "iter_auc",
    "time_auc",
    "PrecondSpec",
    "RunRecord",
    "AggregateReport",
    "Manifest",
    "build_preconditioner",
    "run_single",
    "run_suite",
    "aggregate",
    "write_records",
    "read_records",
    "write_metrics_csv",
    "write_history_csv",
    "CONSTRUCTION_FAILURE",
]

CONSTRUCTION_FAILURE = "construction_failure"
SOLUTION_FAILURE = "solution_failure"
FAILED = (CONSTRUCTION_FAILURE, SOLUTION_FAILURE)
LOG_FLOOR = 1e-300
PERCENTILES = (25, 50, 75, 100)


# -- metrics ------------------------------------------------------------------


def _log_excess(relres, rtol):
    r = np.maximum(np.asarray(relres, dtype=np.float64), LOG_FLOOR)
    return np.log10(r) - math.log10(rtol)


def iter_auc(history, rtol: float = 1e-8) -> float:
    """``sum_{i=0}^{iters} (log10 r_i - log10 rtol)``.

    ``history`` is a :class:`ConvergenceHistory` or a sequence of relative
    residuals starting at iteration 0.
    """
    relres = history.relres if isinstance(history, ConvergenceHistory) else history
    if len(relres) == 0:
        raise ValueError("empty history")
    return float(np.sum(_log_excess(relres, rtol)))


def time_auc(history, rtol: float = 1e-8, times=None) -> float:
    """``sum_{i>=1} (log10 r_i - log10 rtol) (t_i - t_{i-1})``.

    Each interval is weighted by the residual at its right end. A single
    entry gives 0.
    """
    if isinstance(history, ConvergenceHistory):
        relres, times = history.relres, history.times
    else:
        relres = history
        if times is None:
            raise ValueError("times are required with a plain residual sequence")
    relres = np.asarray(relres, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if relres.shape != times.shape:
        raise ValueError("relres and times must have equal length")
    if relres.size < 2:
        return 0.0
    return float(np.sum(_log_excess(relres[1:], rtol) * np.diff(times)))


# -- records ------------------------------------------------------------------


@dataclass
class RunRecord:
    matrix_id: str
    precond: str
    status: str
    history: Optional[ConvergenceHistory]
    iter_auc: Optional[float]
    time_auc: Optional[float]
    final_relres: Optional[float]
    construct_secs: float
    solve_secs: float
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.status in FAILED

    def to_dict(self) -> dict:
        d = asdict(self)
        d["history"] = None if self.history is None else [list(e) for e in self.history.entries]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        if d.get("history") is not None:
            d["history"] = ConvergenceHistory.from_entries(d["history"])
        return cls(**d)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls.from_dict(json.loads(line))


def write_records(records: Iterable[RunRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_records(path) -> list[RunRecord]:
    with open(path) as fh:
        return [RunRecord.from_json(line) for line in fh if line.strip()]


# -- preconditioner construction ----------------------------------------------


@dataclass
class PrecondSpec:
    """A preconditioner name plus build options.

    ``gnp`` takes either ``checkpoint`` (path to a saved model) or
    ``train`` (a :class:`~gnp.training.TrainConfig`); ``gmres`` takes
    ``inner_iters`` and ``inner_tol``.
    """

    name: str
    options: dict = field(default_factory=dict)

    @classmethod
    def coerce(cls, spec) -> "PrecondSpec":
        return spec if isinstance(spec, PrecondSpec) else cls(str(spec))


def build_preconditioner(spec, A: CsrMatrix):
    """Build the operator for ``spec`` on the (prescaled) matrix ``A``.

    Returns None for ``"none"``.
    """
    spec = PrecondSpec.coerce(spec)
    opts = spec.options
    if spec.name == "none":
        return None
    if spec.name == "jacobi":
        return jacobi_build(A)
    if spec.name == "gmres":
        return inner_gmres_build(A, opts.get("inner_iters", 10), opts.get("inner_tol", 1e-6))
    if spec.name == "ilu0":
        return ilu0_build(A)
    if spec.name == "gnp":
        from .checkpoint import load_checkpoint
        from .gnn import apply_preconditioner
        from .training import TrainConfig, train_preconditioner

        if "checkpoint" in opts:
            params, _, _ = load_checkpoint(Path(opts["checkpoint"]).read_bytes(), matrix=A)
        else:
            params, _ = train_preconditioner(A, opts.get("train", TrainConfig()))
        return apply_preconditioner(params, normalize(A))
    raise ValueError(f"unknown preconditioner {spec.name!r}")


def _build_timed(spec, A):
    t0 = time.perf_counter()
    try:
        op = build_preconditioner(spec, A)
    except (ConstructionError, ArithmeticError, ValueError, OSError, np.linalg.LinAlgError, RuntimeError) as exc:
        return None, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"
    return op, time.perf_counter() - t0, None


def _mode_config(cfg: SolveConfig, mode: str) -> SolveConfig:
    if mode == "maxiters":
        return cfg
    if mode == "timeout":
        if cfg.timeout_secs is None:
            raise ValueError("timeout mode needs cfg.timeout_secs")
        return SolveConfig(rtol=cfg.rtol, maxiters=None, restart=cfg.restart, timeout_secs=cfg.timeout_secs)
    raise ValueError(f"unknown mode {mode!r}")


def _solve_record(matrix_id, name, A, op, construct_secs, cfg, b):
    t0 = time.perf_counter()
    try:
        out = fgmres_solve(A, b, op, None, cfg)
    except (ArithmeticError, ValueError, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        return RunRecord(matrix_id, name, SOLUTION_FAILURE, None, None, None, None,
                         construct_secs, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    secs = time.perf_counter() - t0
    h = out.history
    return RunRecord(
        matrix_id=matrix_id,
        precond=name,
        status=out.status,
        history=h,
        iter_auc=iter_auc(h, cfg.rtol),
        time_auc=time_auc(h, cfg.rtol),
        final_relres=h.relres[-1],
        construct_secs=construct_secs,
        solve_secs=secs,
    )


def run_single(matrix: CsrMatrix, precond_spec, cfg: SolveConfig = SolveConfig(), mode: str = "maxiters",
               matrix_id: str = "matrix") -> RunRecord:
    """Build one preconditioner and solve ``A x = A 1`` from ``x0 = 0``.

    ``matrix`` must already be prescaled. Failures are recorded in the
    returned status; nothing is raised.
    """
    spec = PrecondSpec.coerce(precond_spec)
    solve_cfg = _mode_config(cfg, mode)
    b = spmv(matrix, np.ones(matrix.n))
    op, csecs, err = _build_timed(spec, matrix)
    if err is not None:
        return RunRecord(matrix_id, spec.name, CONSTRUCTION_FAILURE, None, None, None, None, csecs, 0.0, err)
    return _solve_record(matrix_id, spec.name, matrix, op, csecs, solve_cfg, b)


# -- suite ----------------------------------------------------------------


@dataclass
class Manifest:
    entries: list  # (matrix_id, path)

    @classmethod
    def parse(cls, text: str, base_dir=".") -> "Manifest":
        entries, seen = [], set()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = raw.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"manifest line {lineno}: expected 'id<TAB>path'")
            mid, path = parts[0].strip(), parts[1].strip()
            if mid in seen:
                raise ValueError(f"manifest line {lineno}: duplicate id {mid!r}")
            seen.add(mid)
            p = Path(path)
            entries.append((mid, str(p if p.is_absolute() else Path(base_dir) / p)))
        return cls(entries)

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        m = cls.parse(path.read_text(), base_dir=path.parent)
        for mid, p in m.entries:
            if not os.access(p, os.R_OK):
                raise FileNotFoundError(f"manifest entry {mid!r}: cannot read {p}")
        return m


def _run_matrix(matrix_id, source, preconds, cfg, time_mode, timeout_budget):
    try:
        A = source if isinstance(source, CsrMatrix) else read_matrix_market(source)
        A = normalize(A)
    except (OSError, ValueError) as exc:
        return [RunRecord(matrix_id, PrecondSpec.coerce(s).name, CONSTRUCTION_FAILURE, None, None, None,
                          None, 0.0, 0.0, f"{type(exc).__name__}: {exc}") for s in preconds]
    b = spmv(A, np.ones(A.n))
    specs = [PrecondSpec.coerce(s) for s in preconds]
    built = [_build_timed(s, A) for s in specs]
    records = []
    for s, (op, csecs, err) in zip(specs, built):
        if err is not None:
            records.append(RunRecord(matrix_id, s.name, CONSTRUCTION_FAILURE, None, None, None, None, csecs, 0.0, err))
        else:
            records.append(_solve_record(matrix_id, s.name, A, op, csecs, cfg, b))
    if time_mode:
        solved = [r.solve_secs for r in records if not r.failed]
        budget = timeout_budget if len(specs) == 1 and timeout_budget else (max(solved) if solved else None)
        if budget:
            tcfg = SolveConfig(rtol=cfg.rtol, maxiters=None, restart=cfg.restart, timeout_secs=budget)
            for i, (rec, (op, csecs, err)) in enumerate(zip(records, built)):
                if err is not None or rec.status == CONSTRUCTION_FAILURE:
                    continue
                trec = _solve_record(matrix_id, rec.precond, A, op, csecs, tcfg, b)
                rec.time_auc = trec.time_auc if trec.history is not None else None
    return records


def run_suite(manifest, preconds: Sequence, cfg: SolveConfig = SolveConfig(), time_mode: bool = True,
              timeout_budget: Optional[float] = None, jobs: int = 1) -> list[RunRecord]:
    """Run every preconditioner on every manifest matrix.

    One record per (matrix, preconditioner). ``iter_auc`` comes from the
    ``maxiters`` run; with ``time_mode`` the ``time_auc`` field is replaced by
    the value from the ``timeout`` run.
    """
    entries = manifest.entries if isinstance(manifest, Manifest) else list(manifest)
    if not entries:
        raise ValueError("empty manifest")
    args = [(mid, src, list(preconds), cfg, time_mode, timeout_budget) for mid, src in entries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_matrix, *zip(*args)))
    else:
        results = [_run_matrix(*a) for a in args]
    return [rec for recs in results for rec in recs]


# -- aggregation ----------------------------------------------------------------


@dataclass
class AggregateReport:
    preconds: list
    best_iter: dict
    best_time: dict
    failures: dict
    ratio_percentiles_iter: dict
    ratio_percentiles_time: dict
    n_matrices: int
    n_with_success: int
    per_matrix: list = field(default_factory=list)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(asdict(self), indent=indent)


def _percentiles(values) -> dict:
    if not values:
        return {}
    arr = np.asarray(values, dtype=np.float64)
    return {f"{q}%": float(np.percentile(arr, q, method="lower")) for q in PERCENTILES}


def _best(recs, key):
    ok = [r for r in recs if not r.failed and getattr(r, key) is not None and math.isfinite(getattr(r, key))]
    return sorted(ok, key=lambda r: getattr(r, key))


def aggregate(records: Sequence[RunRecord], gnp_name: str = "gnp") -> AggregateReport:
    """Best-preconditioner counts, failure table and GNP margin percentiles.

    The margin is the final residual of the runner-up divided by that of GNP,
    over matrices where GNP is best. Percentiles use the lower (nearest-rank)
    convention.
    """
    if not records:
        raise ValueError("no records to aggregate")
    preconds = list(dict.fromkeys(r.precond for r in records))
    by_matrix: dict[str, list] = {}
    for r in records:
        by_matrix.setdefault(r.matrix_id, []).append(r)
    best_iter = {p: 0 for p in preconds}
    best_time = {p: 0 for p in preconds}
    failures = {p: {CONSTRUCTION_FAILURE: 0, SOLUTION_FAILURE: 0} for p in preconds}
    ratios_iter, ratios_time, per_matrix = [], [], []
    n_success = 0
    for r in records:
        if r.failed:
            failures[r.precond][r.status] += 1
    for mid, recs in by_matrix.items():
        row = {"matrix_id": mid, "best_iter": None, "best_time": None}
        if any(not r.failed for r in recs):
            n_success += 1
        for key, counts, ratios, label in (("iter_auc", best_iter, ratios_iter, "best_iter"),
                                           ("time_auc", best_time, ratios_time, "best_time")):
            ranked = _best(recs, key)
            if not ranked:
                continue
            counts[ranked[0].precond] += 1
            row[label] = ranked[0].precond
            if ranked[0].precond == gnp_name and len(ranked) > 1:
                g = max(ranked[0].final_relres, LOG_FLOOR)
                ratios.append(ranked[1].final_relres / g)
        per_matrix.append(row)
    return AggregateReport(
        preconds=preconds,
        best_iter=best_iter,
        best_time=best_time,
        failures=failures,
        ratio_percentiles_iter=_percentiles(ratios_iter),
        ratio_percentiles_time=_percentiles(ratios_time),
        n_matrices=len(by_matrix),
        n_with_success=n_success,
        per_matrix=per_matrix,
    )


def write_metrics_csv(records: Sequence[RunRecord], path) -> None:
    cols = ["matrix_id", "precond", "status", "iter_auc", "time_auc", "final_relres", "construct_secs", "solve_secs"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            w.writerow([getattr(r, c) if getattr(r, c) is not None else "" for c in cols])


def write_history_csv(records: Sequence[RunRecord], path) -> None:
    """Long-format convergence curves: one row per (run, iteration)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["matrix_id", "precond", "iteration", "time", "relres"])
        for r in records:
            if r.history is None:
                continue
            for i, rel, t in r.history.entries:
                w.writerow([r.matrix_id, r.precond, i, repr(t), repr(rel)])
