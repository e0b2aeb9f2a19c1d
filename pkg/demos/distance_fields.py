"""
Intrinsic distances on a lattice
================================

Graph distances for a few coefficient fields, checked against closed forms.
"""

import math

import numpy as np

from iml import DiffusionField, ScalarField, build_grid, distance_1d_exact, distance_field, geodesic

# A = c I rescales Euclidean length by 1/sqrt(c); axis pairs are exact and
# the 16-neighbour stencil overestimates other directions by under 2.8%
g = build_grid(2, (0.0, 1.0), 129)
src = g.node_index((0, 0))
r = np.linalg.norm(g.points, axis=1)
for c in (0.25, 1.0, 4.0):
    d = distance_field(DiffusionField.from_scale(g, c), src)
    worst = (d.flat[1:] * math.sqrt(c) / r[1:]).max()
    print(f"c={c:4}: d((0,0),(1,0)) = {d[g.node_index((128, 0))]:.12f}, "
          f"worst inflation {worst:.4f}")

# 1-D coefficient a(s) = (1+s)^2 along a thin strip: the exact distance is ln 2
exact = distance_1d_exact(lambda s: (1 + s) ** 2, 0.0, 1.0)
for res in (65, 257, 1025):
    strip = build_grid(2, [(0.0, 1.0), (0.0, 2.0 / (res - 1))], (res, 3))
    A = DiffusionField.from_function(strip, lambda a, b: (1 + a) ** 2)
    d = distance_field(A, strip.node_index((0, 1)))[strip.node_index((res - 1, 1))]
    print(f"strip {res:5d}: {d:.8f} vs ln 2 = {exact:.8f}")

# a slow disk in the middle bends the geodesic around it
g = build_grid(2, (0.0, 1.0), 81)
slow = ScalarField.from_function(
    g, lambda x, y: np.where((x - 0.5) ** 2 + (y - 0.5) ** 2 < 0.04, 0.01, 1.0))
A = DiffusionField.from_scale(g, slow.values)
df = distance_field(A, g.node_index((0, 40)))
path = geodesic(df, g.node_index((80, 40)))
print(f"geodesic: {len(path.nodes)} nodes, length {df[g.node_index((80, 40))]:.4f}, "
      f"closest approach to the disk centre {np.linalg.norm(path.points - 0.5, axis=1).min():.3f}")
