"""Tour of the Heisenberg group and of the three-field example in the plane y = 0.

Run with ``python demos/walkthrough.py``.  Everything printed here is exact
except the distance estimates at the end.
"""
import numpy as np

from ccgeom.flows import exp_combination
from ccgeom.freelift import lift_system
from ccgeom.grading import nilpotentize, structure_constants
from ccgeom.quasimetric import rho_estimate
from ccgeom.spacefile import catalog_system, print_space
from ccgeom.structure import adapted_frame, classify_point, filtration_dims


def show_point(sys, p):
    snap = filtration_dims(sys, p)
    print(f"  {p}: dims {snap.dims}, {classify_point(sys, p).value}")


heis = catalog_system("heisenberg-1")
print(print_space(heis))
print("filtration")
show_point(heis, (0, 0, 0))

na = nilpotentize(heis, heis.anchor)
print("privileged chart:", [str(p) for p in na.chart.forward_polys])
print("structure constants:", structure_constants(na).table())

# distance from the origin to exp(xX + yY + tT)(0) is max(|x|, |y|, sqrt|t|)
c = np.array([0.3, -0.2, 0.5])
w = exp_combination(c, heis.generators, np.zeros(3)).endpoint
est = rho_estimate(heis, np.zeros(3), w)
print(f"rho(0, {np.round(w, 4)}) = {est.value:.6f} ({est.status}); closed form {max(0.3, 0.2, 0.5 ** 0.5):.6f}")

ex3 = catalog_system("example3-unit")
print()
print(print_space(ex3))
print("filtration: X2 and X3 coincide on y = 0, so H1 drops rank there")
for p in [(0, 0, 0), (1, 0, -2), (0, 1, 0), (0, -1, 3)]:
    show_point(ex3, p)
print("adapted frame at the origin:", [ex3.label_of(cw.word) for cw in adapted_frame(ex3, (0, 0, 0)).words])

na = nilpotentize(ex3, (0, 0, 0))
for word in [(0,), (1,), (2,)]:
    print(f"  hat {ex3.label_of(word)} = {na.hat(word)}")

ls = lift_system(ex3, (0, 0, 0))
print(f"lift: dimension {ls.base.dim} -> {ls.lifted.dim}, "
      f"lifted anchor is {classify_point(ls.lifted, ls.lifted.anchor).value}")
