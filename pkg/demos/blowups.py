"""
Blow-ups and the rescaling identity
===================================

Rescaled functions (u(x + r y) - u(x)) / r flatten to a linear map at
differentiability points; the fitted slope satisfies H(x, e) = Lip^2.
"""

import numpy as np

from iml import blowup_report, rescale_identity_check
from iml.experiments import aronsson

radii = 2.0 ** -np.arange(2, 7)
rep = blowup_report(aronsson, lambda p: np.ones(len(p)), (1.0, 1.0), radii)
for row in rep.rows:
    print(f"r={row['r']:.5f} e=({row['e'][0]:.5f}, {row['e'][1]:.5f}) "
          f"residual={row['residual']:.4f} H={row['H']:.4f} Lip^2={row['lip2']:.4f}")
print(f"data supports {rep.supports}")

# d_A(x + r y, x + r z) = r d_j(y, z) for the rescaled coefficient
pairs = [((0.0, 0.0), (1.0, 0.0)), ((-1.0, -1.0), (1.0, 0.5))]
chk = rescale_identity_check(lambda p: 1 + (p ** 2).sum(axis=1), (0.3, 0.2), 0.125, pairs)
print(f"rescaling identity, conformal A: max relative error {chk.max_rel_error:.1e}")
