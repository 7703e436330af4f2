"""
Euler discretization of an optimal control problem
==================================================

Errors of the discrete optimality system shrink like 1/N.
"""

import numpy as np

from subreg import fixtures
from subreg.ocp import convergence_experiment

Ns = [8, 16, 32, 64]
study = convergence_experiment(fixtures.f8(), Ns, N_ref=1024)
print("fitted order:", round(study.fitted_order, 3))
for N, e, w in zip(Ns, study.errors, study.w_norms):
    print(f"  N={N:4d}  error={e:.4e}  error*N={e * N:.3f}  ||w_N||={w:.4f}")

# Without the control bound the problem has a closed-form solution.
lq = convergence_experiment(fixtures.lq_ocp(), Ns, N_ref=1024, exact=fixtures.lq_exact())
print("LQ errors vs fine grid :", np.round(lq.errors, 5))
print("LQ errors vs closed form:", np.round(lq.exact_errors, 5))
