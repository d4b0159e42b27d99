"""
Training a graph neural preconditioner
======================================

Train the network on one matrix, use it inside FGMRES, and save a
checkpoint. The demo uses a small grid and few steps so it runs in under a
minute; pass a step count on the command line for a longer run.
"""

import sys

import numpy as np

from gnp.checkpoint import load_checkpoint, save_checkpoint
from gnp.generators import convection_diffusion_2d
from gnp.gnn import apply_preconditioner
from gnp.krylov import SolveConfig, fgmres_solve
from gnp.sparse import normalize, spmv
from gnp.training import TrainConfig, train_preconditioner

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
A = normalize(convection_diffusion_2d(16))
b = spmv(A, np.ones(A.n))



def progress(step, loss, monitor):
    if step % 100 == 0:
        print(f"step {step:4d}  train {loss:.3e}  monitor {monitor:.3e}")


cfg = TrainConfig(steps=steps, seed=0)
params, hist = train_preconditioner(A, cfg, progress=progress)
print(f"monitor loss {hist.initial_monitor_loss:.3e} -> {hist.best_monitor_loss:.3e} "
      f"(best step {hist.best_step}, {hist.seconds:.1f}s)")

solve = SolveConfig(rtol=1e-8, maxiters=100, restart=10)
plain = fgmres_solve(A, b, None, None, solve)
gnp = fgmres_solve(A, b, apply_preconditioner(params, A), None, solve)
print(f"none: {plain.status} after {plain.iterations}, relres {plain.final_relres:.2e}")
print(f"gnp:  {gnp.status} after {gnp.iterations}, relres {gnp.final_relres:.2e}")

# the preconditioner is scale-equivariant: M(a b) = a M(b) for a > 0
M = apply_preconditioner(params, A)
print("equivariance gap:", np.linalg.norm(M.apply(1e3 * b) - 1e3 * M.apply(b)) / np.linalg.norm(1e3 * M.apply(b)))

# checkpoints are exact
blob = save_checkpoint(params, cfg.dims, A)
restored, _, _ = load_checkpoint(blob, A)
print(f"checkpoint {len(blob)} bytes, restores exactly: {restored.equals(params)}")
