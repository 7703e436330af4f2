"""
How far is a problem from losing regularity?
============================================

For a linear map the distance is the smallest singular value.  For a
variational inequality over a cone K it is the smallest Rayleigh quotient
of A on K.
"""

import numpy as np

from subreg.polyhedral import Polyhedron, polyhedral_cone
from subreg.regularity import radius_linear, radius_variational

A = np.array([[3.0, 1.0], [0.0, 0.5], [1.0, 1.0]])
sigma, B = radius_linear(A)
print("radius:", sigma, " singular values:", np.linalg.svd(A, compute_uv=False))
print("A + B is singular:", np.linalg.svd(A + B, compute_uv=False)[-1] < 1e-12)

S = np.array([[2.0, 1.5], [1.5, 2.0]])
print("K = R^2:", radius_variational(S, Polyhedron.whole_space(2))[0], "= lambda_min", np.linalg.eigvalsh(S)[0])
orthant = polyhedral_cone(2, A=-np.eye(2))
# the lambda_min eigenvector (1, -1) leaves the quadrant; the minimum moves to an axis
print("K = R_+^2:", radius_variational(S, orthant)[0])
