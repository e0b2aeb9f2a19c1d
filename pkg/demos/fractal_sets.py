"""
Fat Cantor sets and carpets
===========================

Finite-depth constructions with exact rational geometry, and their rasters.
"""

from fractions import Fraction

from iml import GapSequence, build_grid, cantor_build, carpet_build, n_close_cells

# a_j = 3^-j keeps the Cantor set fat: the measure tends to a positive limit
for depth in (1, 2, 4, 8):
    C = cantor_build(GapSequence.geometric(Fraction(1, 3), depth), depth)
    print(f"cantor depth {depth}: {len(C.intervals)} intervals, measure {float(C.measure):.6f}")

# constant a = 1/3 is the classical carpet; its measure (8/9)^m goes to zero
for depth in (1, 2, 3):
    S = carpet_build(GapSequence.constant(Fraction(1, 3), depth, "sierpinski"), 2, depth)
    print(f"carpet depth {depth}: {len(S.retained)} cells, measure {S.measure}")

# rasterising needs a grid aligned with the deepest cells
S = carpet_build(GapSequence.constant(Fraction(1, 3), 2, "sierpinski"), 2, 2)
g = build_grid(2, (0.0, 1.0), 82)
E = S.rasterize(g)
print(f"depth-2 carpet on 82^2 nodes: {E.values.mean():.4f} of nodes inside")
for row in E.values[::3, ::3].T:
    print("".join("#" if v > 0.5 else "." for v in row))

# cells within N steps of the central removed cube
mixed = carpet_build(GapSequence((Fraction(1, 5), Fraction(1, 3)), "sierpinski"), 2, 2)
for N in (1, 2):
    print(f"N={N}: {len(n_close_cells(mixed, N, 1).cells)} close cells at level 1")
