"""
KKT systems: constraint qualification, SOSC and subregularity
=============================================================

Strict MFCQ together with SOSC is equivalent to strong subregularity of the
KKT mapping at a local minimizer.  Three fixtures show the pattern.
"""

from subreg import fixtures
from subreg.nlp import theorem_nlp_equivalence

for make in (fixtures.f7, fixtures.duplicated_constraint, fixtures.indefinite_hessian):
    prob, pt = make()
    v = theorem_nlp_equivalence(prob, pt)
    print(f"{prob.name:>11}: smf={v['smf']!s:5} sosc={v['sosc']!s:5} "
          f"subreg={v['subreg']!s:5} local_min={v['local_min']!s:5} consistent={v['consistent']}")

# The duplicated constraint breaks multiplier uniqueness, so the KKT map
# loses subregularity although the point is a strict minimizer.
# At the indefinite point the KKT map is still subregular, but the point
# is a maximizer, so the equivalence says nothing there.
