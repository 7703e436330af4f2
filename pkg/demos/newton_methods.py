"""
Newton-type methods on generalized equations
============================================

Josephy-Newton, semismooth Newton and Broyden's method on a box-constrained
variational inequality whose solution sits on the boundary.
"""

import numpy as np

from subreg import fixtures
from subreg.solvers import broyden_inexact_newton, josephy_newton, semismooth_newton

fx = {f.name: f for f in fixtures.newton_fixtures()}["box-vi"]
print("reference solution:", fx.ge.reference_point)

# Josephy-Newton solves one affine VI per step; errors square each time.
rep = josephy_newton(fx.ge, fx.x0)
for k, e in enumerate(rep.errors_to_reference):
    print(f"  josephy  k={k}  error={e:.3e}")
print("fitted order:", round(rep.order_fit, 3))

# Semismooth Newton on the natural map only needs linear solves.
rep = semismooth_newton(fx.ge, fx.x0)
print("semismooth iterations:", rep.iterations, "final x:", rep.x)

# Broyden starts from the Jacobian at x0 and never recomputes it.
# The Dennis-More quotient measures how well B_k matches Df on the steps.
B0 = fx.ge.smooth.jacobian(fx.x0)
rep = broyden_inexact_newton(fx.ge, fx.x0, B0)
print("broyden order:", round(rep.order_fit, 3))
print("Dennis-More quotients:", np.array2string(np.array(rep.dennis_more_trace), precision=2))

# The iterate log is plain CSV.
print(rep.to_csv())
