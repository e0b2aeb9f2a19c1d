"""Intrinsic metrics, Lipschitz constants and AMLE solvers for rough diffusion matrices."""

from .errors import (ConfigurationError, ConvergenceError, EllipticityError, IMLError,
                     ResolutionError, UnreachableError, ValidationError)
from .fields import (DiffusionField, GridDomain, ScalarField, VectorField, build_grid,
                     check_ellipticity, gradient_central, norris_mollify)
from .fractal import GapSequence, carpet_build, cantor_build, n_close_cells
from .metric import (DistanceField, StencilGraph, bellman_ford, distance_1d_exact,
                     distance_field, geodesic)
from .lipschitz import coincidence_report, hamiltonian_field, local_lip, pointwise_lip, wusc_probe
from .amle import AmleProblem, AmleSolution, amle_solve, ball_extrema, slope_ops
from .blowup import blowup_report, blowup_sequence, linear_fit, rescale, rescale_identity_check

__version__ = "0.1.0"
