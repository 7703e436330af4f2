"""
Strong subregularity: a small gallery
=====================================

Sampled moduli next to the exact derivative criteria.
"""

import numpy as np

from subreg import fixtures
from subreg.geq import ZeroMap
from subreg.regularity import (
    coderivative_inner_norm_pieces,
    displacement_rate_sample,
    graphical_derivative_outer_norm,
    linear_map_moduli,
    q_subreg_estimate,
)

radii = (1e-1, 1e-2, 1e-3)

# F(x) = {-x, x}: strongly subregular with modulus 1, although the inverse
# Frechet coderivative is unbounded.
ge = fixtures.minus_x_x()
print("minus-x-x sampled modulus:", displacement_rate_sample(ge, radii).value)
pieces = fixtures.minus_x_x_pieces()
print("  graphical derivative outer norm:", graphical_derivative_outer_norm(pieces, ZeroMap(), [0.0], [0.0]))
print("  coderivative inner norm:", coderivative_inner_norm_pieces(pieces))

# Isolated graph points 1/k accumulating at 0: the rate collapses.
print("isolated points modulus:", displacement_rate_sample(fixtures.isolated_points_graph(), radii).value)

# x -> x^3 is not subregular with q = 1 but is with q = 1/3.
cube = fixtures.cube()
for q in (1.0, 1.0 / 3.0):
    print(f"cube, q={q:.3f}:", q_subreg_estimate(cube, q, radii).value)

# diag(1, 1/2, ..., 1/N) from linf to l2 has modulus N.
for N in (5, 10, 50):
    lin = linear_map_moduli(fixtures.ell_infty_diag(N), "linf", "l2")
    print(f"diag N={N}: modulus {lin.subreg_modulus:g}, chain consistent {lin.consistent()}")

# A calm perturbation keeps the modulus below kappa / (1 - kappa mu).
inst = fixtures.sine_perturbation()
est = displacement_rate_sample(inst.ge_sum, radii)
print(f"x + 0.4 sin x: modulus {est.value:.4f}, bound {inst.kappa / (1 - inst.kappa * inst.mu):.4f}")
print("finite:", np.isfinite(est.value))
