"""
Flexible GMRES with classical preconditioners
=============================================

Solve ``A x = A 1`` with restarted FGMRES and compare no preconditioning,
Jacobi, an inner GMRES solve, and ILU(0).
"""

import numpy as np

from gnp.baselines import identity_build, ilu0_build, inner_gmres_build, jacobi_build
from gnp.bench import iter_auc
from gnp.generators import convection_diffusion_2d
from gnp.krylov import SolveConfig, fgmres_solve, residual_projection_check
from gnp.sparse import normalize, spmv

A = normalize(convection_diffusion_2d(24))
b = spmv(A, np.ones(A.n))
cfg = SolveConfig(rtol=1e-8, maxiters=100, restart=10)

# the diagonal is constant, so Jacobi is only a rescaling here and matches "none"

ops = {
    "none": identity_build(),
    "jacobi": jacobi_build(A),
    "gmres": inner_gmres_build(A, inner_iters=10),
    "ilu0": ilu0_build(A),
}
for name, M in ops.items():
    out = fgmres_solve(A, b, M, None, cfg)
    print(f"{name:7s} {out.status:10s} iterations {out.iterations:3d}  "
          f"relres {out.final_relres:.2e}  Iter-AUC {iter_auc(out.history, cfg.rtol):7.1f}")

# in one unrestarted cycle the residual is r0 minus its projection onto range(A Z)
short = SolveConfig(rtol=1e-15, maxiters=15, restart=15)
out = fgmres_solve(A, b, ops["jacobi"], None, short)
c = out.last_cycle
gap = residual_projection_check(A, c.Z, c.r0, b - spmv(A, out.x))
print(f"projection identity holds to {gap / np.linalg.norm(b):.1e} (relative)")
