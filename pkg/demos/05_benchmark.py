"""
Benchmarking preconditioners over a matrix collection
=====================================================

Write a few generated matrices and a manifest, run every classical
preconditioner in both stopping regimes, and aggregate the results.
"""

import tempfile
from pathlib import Path

import numpy as np

from gnp.bench import Manifest, aggregate, run_suite, write_metrics_csv
from gnp.generators import convection_diffusion_2d, random_perturbed_diagonal
from gnp.krylov import SolveConfig
from gnp.sparse import CsrMatrix, write_matrix_market

work = Path(tempfile.mkdtemp())
shift = np.roll(np.eye(40), 1, axis=1)
matrices = {
    "convdiff16": convection_diffusion_2d(16),
    "convdiff24": convection_diffusion_2d(24, convection=(60.0, 30.0)),
    "perturbed": random_perturbed_diagonal(400, perturbation=2.0, seed=1),
    # nonsingular with an empty diagonal: ILU(0) fails to construct
    "cyclic": CsrMatrix.from_dense(np.diag(np.linspace(1.0, 2.0, 40)) @ shift + 0.3 * shift @ shift),
}
lines = []
for mid, A in matrices.items():
    write_matrix_market(A, work / f"{mid}.mtx")
    lines.append(f"{mid}\t{mid}.mtx")
(work / "manifest.tsv").write_text("\n".join(lines) + "\n")

records = run_suite(Manifest.load(work / "manifest.tsv"), ["none", "jacobi", "gmres", "ilu0"],
                    SolveConfig(rtol=1e-8, maxiters=100, restart=10))
for r in records:
    auc = "-" if r.iter_auc is None else f"{r.iter_auc:7.1f}"
    print(f"{r.matrix_id:11s} {r.precond:7s} {r.status:21s} Iter-AUC {auc}")

report = aggregate(records)
print("best by Iter-AUC:", report.best_iter)
print("best by Time-AUC:", report.best_time)
print("failures:", report.failures)
write_metrics_csv(records, work / "metrics.csv")
print("metrics written to", work / "metrics.csv")
