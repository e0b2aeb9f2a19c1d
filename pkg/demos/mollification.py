"""
Norris mollification of a carpet coefficient
============================================

Smoothing 1/(1 - delta 1_E) at scale t keeps the weight in [1, 1/(1-delta)],
and the induced distances settle as t shrinks.
"""

from fractions import Fraction

from iml import GapSequence, build_grid, carpet_build, norris_mollify
from iml.metric import mollified_distance_sweep

S = carpet_build(GapSequence.constant(Fraction(1, 3), 2, "sierpinski"), 2, 2)
for res in (82, 163):
    g = build_grid(2, (0.0, 1.0), res)
    E = S.rasterize(g)
    pair = (g.nearest_node((0.0, 0.5)), g.nearest_node((1.0, 0.5)))
    rows = mollified_distance_sweep(E, 0.5, [8 * g.h, 4 * g.h, 2 * g.h], pair)
    weight, _ = norris_mollify(E, 0.5, 2 * g.h)
    ds = ", ".join(f"{d:.4f}" for _, d in rows)
    print(f"{res} nodes: d_t = {ds}; weight in [{weight.values.min():.3f}, {weight.values.max():.3f}]")
