"""Blow-ups ``u_j(y) = (u(x + r_j y) - u(x)) / r_j`` and linear fits.

The reference window is the cube ``[-1, 1]^n`` sampled at ``window_res``
nodes per axis; fits use the nodes of the closed unit ball inside it.
Source fields are read with multilinear interpolation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ValidationError
from .fields import DiffusionField, ScalarField, build_grid, gradient_central
from .io import write_rows_csv
from .lipschitz import pointwise_lip
from .metric import DEFAULT_STENCIL, StencilGraph

WINDOW_RES = 33


class RescalingWarning(UserWarning):
    """Rescaled and physical grids do not nest; distances carry interpolation slack."""


def _sampler(u):
    """Callable ``points (N, n) -> values`` for a field, solution or function."""
    u = getattr(u, "u", u)
    if isinstance(u, ScalarField):
        interp = RegularGridInterpolator(u.grid.axes, u.values, method="linear",
                                         bounds_error=True)
        return interp, u.grid
    if callable(u):
        return (lambda pts: np.asarray(u(*np.asarray(pts).T), dtype=float)), None
    raise ValidationError("u must be a ScalarField, an AmleSolution or a callable")


def _inside(grid, pts):
    lo = np.array([b[0] for b in grid.bounds])
    hi = np.array([b[1] for b in grid.bounds])
    slack = 1e-12 * grid.h
    return np.all((pts >= lo - slack) & (pts <= hi + slack), axis=1)


def coefficient_at(A, pts):
    """Matrices ``A(p)`` at arbitrary points, shape ``(N, n, n)``.

    ``A`` is a :class:`DiffusionField` (entries interpolated multilinearly)
    or a callable returning either scales ``(N,)`` or matrices.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[1]
    if isinstance(A, DiffusionField):
        M = A.matrices.reshape(tuple(A.grid.shape) + (n * n,))
        interp = RegularGridInterpolator(A.grid.axes, M, method="linear", bounds_error=True)
        return interp(pts).reshape(-1, n, n)
    vals = np.asarray(A(pts), dtype=float)
    if vals.ndim == 1:
        return vals[:, None, None] * np.eye(n)
    return vals.reshape(-1, n, n)


def _field_on(A, grid, pts):
    """Diffusion field on ``grid`` sampled at physical points ``pts``."""
    if not isinstance(A, DiffusionField):
        vals = np.asarray(A(np.asarray(pts, dtype=float)), dtype=float)
        if vals.ndim == 1:
            return DiffusionField.from_scale(grid, vals.reshape(grid.shape))
    n = grid.dim
    return DiffusionField.from_matrices(
        grid, coefficient_at(A, pts).reshape(tuple(grid.shape) + (n, n)))


@dataclass(frozen=True)
class RescaledField:
    radius: float
    window: object
    u: ScalarField
    A: DiffusionField | None


@dataclass
class BlowupSequence:
    center: np.ndarray
    radii: np.ndarray
    members: list = field(default_factory=list)


def rescale(u, x, r, A=None, window_res=WINDOW_RES):
    """Recentred blow-up of ``u`` (and ``A``) at ``x`` and scale ``r``."""
    sample, grid = _sampler(u)
    x = np.asarray(x, dtype=float)
    n = x.size
    W = build_grid(n, (-1.0, 1.0), window_res)
    pts = x + r * W.points
    if grid is not None and not np.all(_inside(grid, np.vstack([pts, x]))):
        raise ValidationError(f"window of radius {r:g} around {x.tolist()} escapes the domain")
    u0 = float(sample(x[None, :])[0])
    vals = (sample(pts) - u0) / r
    vals[np.all(W.points == 0, axis=1)] = 0.0
    Aj = None
    if A is not None:
        Aj = _field_on(A, W, pts)
    return RescaledField(float(r), W, ScalarField(W, vals.reshape(W.shape)), Aj)


def blowup_sequence(u, x, radii, A=None, window_res=WINDOW_RES):
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0) or np.any(radii <= 0):
        raise ValidationError("blow-up radii must be positive and strictly decreasing")
    seq = BlowupSequence(np.asarray(x, dtype=float), radii)
    seq.members = [rescale(u, x, r, A, window_res) for r in radii]
    return seq


@dataclass(frozen=True)
class LinearFit:
    e: np.ndarray
    residual: float
    nodes: int


def linear_fit(uj, radius=1.0):
    """Least-squares ``y -> <e, y>`` through the origin on ``|y| <= radius``."""
    uj = getattr(uj, "u", uj)
    W = uj.grid
    pts = W.points
    sel = np.linalg.norm(pts, axis=1) <= radius + 1e-12
    Y, v = pts[sel], uj.flat[sel]
    if sel.sum() < 2 * W.dim + 2:
        raise ValidationError(f"fit window holds {int(sel.sum())} nodes; need {2 * W.dim + 2}")
    if np.linalg.matrix_rank(Y) < W.dim:
        raise ValidationError("fit window is degenerate")
    e, *_ = np.linalg.lstsq(Y, v, rcond=None)
    return LinearFit(e, float(np.abs(v - Y @ e).max()), int(sel.sum()))


@dataclass(frozen=True)
class IdentityCheck:
    max_rel_error: float
    nested: bool
    slack: float
    rows: list


def rescale_identity_check(A, x, r, pairs, window_res=WINDOW_RES, fine_factor=1,
                           stencil=DEFAULT_STENCIL):
    """Compare ``r d_j(y, z)`` with ``d_A(x + r y, x + r z)``.

    ``A`` is a callable (scales or matrices at points). ``d_j`` lives on the
    window grid with ``A_j(y) = A(x + r y)``; ``d_A`` on the physical grid
    spanning ``x + r [-1, 1]^n`` with ``fine_factor`` times finer spacing.
    Integer factors nest the grids; otherwise endpoints snap to the nearest
    physical node and a :class:`RescalingWarning` reports the slack bound.
    ``pairs`` are ``(y, z)`` window points, which must be window nodes.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    W = build_grid(n, (-1.0, 1.0), window_res)
    fine_res = (window_res - 1) * fine_factor + 1
    nested = float(fine_factor).is_integer() and fine_factor >= 1
    if not nested:
        fine_res = int(round(fine_res))
    P = build_grid(n, [(c - r, c + r) for c in x], fine_res)
    Aj = _field_on(A, W, x + r * W.points)
    Ap = _field_on(A, P, P.points)
    gW, gP = StencilGraph(Aj, stencil), StencilGraph(Ap, stencil)
    slack = 0.0
    rows = []
    worst = 0.0
    for y, z in pairs:
        y, z = np.asarray(y, float), np.asarray(z, float)
        iy, iz = W.nearest_node(y), W.nearest_node(z)
        if max(np.abs(W.coordinates(iy) - y).max(), np.abs(W.coordinates(iz) - z).max()) > 1e-12:
            raise ValidationError("pair endpoints must be window nodes")
        py, pz = P.nearest_node(x + r * y), P.nearest_node(x + r * z)
        off = (np.linalg.norm(P.coordinates(py) - (x + r * y))
               + np.linalg.norm(P.coordinates(pz) - (x + r * z)))
        slack = max(slack, off * np.sqrt(Ap.lambda_max))
        dj = gW.shortest_paths([iy])[0][iz]
        dA = gP.shortest_paths([py])[0][pz]
        rel = abs(r * dj - dA) / dA if dA > 0 else abs(r * dj)
        worst = max(worst, rel)
        rows.append((y.tolist(), z.tolist(), float(r * dj), float(dA), float(rel)))
    if not nested or slack > 1e-12 * r:
        warnings.warn(f"grids do not nest; endpoint slack bound {slack:.3e}", RescalingWarning)
    return IdentityCheck(float(worst), bool(nested and slack <= 1e-12 * r), float(slack), rows)


@dataclass
class BlowupReport:
    center: np.ndarray
    rows: list
    supports: str

    HEADER = ["r", "e", "residual", "best_residual", "H", "lip", "lip2"]

    def write_csv(self, path):
        n = len(self.center)
        header = ["r"] + [f"e{i + 1}" for i in range(n)] + self.HEADER[2:]
        rows = [[r["r"], *r["e"], r["residual"], r["best_residual"], r["H"], r["lip"], r["lip2"]]
                for r in self.rows]
        return write_rows_csv(path, header, rows)

    @property
    def best_residuals(self):
        return np.array([r["best_residual"] for r in self.rows])


def _local_lip(u, A, x, r_min, window_res):
    """Pointwise Lipschitz estimate at ``x`` on a patch matching the finest window."""
    sample, grid = _sampler(u)
    if grid is not None:
        node = grid.nearest_node(x)
        if isinstance(A, DiffusionField) and A.grid == grid:
            coef = A
        else:
            coef = _field_on(A, grid, grid.points)
        h = grid.h
        radii = h * np.array([2.0, 3.0, 4.0, 6.0])
        return pointwise_lip(u.u if hasattr(u, "u") else u, StencilGraph(coef), node, radii).limsup
    n = len(x)
    P = build_grid(n, [(c - r_min, c + r_min) for c in x], window_res)
    vals = ScalarField(P, sample(P.points).reshape(P.shape))
    coef = _field_on(A, P, P.points)
    radii = P.h * np.array([2.0, 3.0, 4.0, 6.0])
    return pointwise_lip(vals, StencilGraph(coef), P.nearest_node(x), radii).limsup


def blowup_report(u, A, x, radii, window_res=WINDOW_RES):
    """Per-scale fitted gradient, residual, ``H(x, e)`` and ``Lip`` at ``x``.

    ``supports`` names the relation (``H = Lip^2`` or ``H = Lip``) that the
    finest scale matches more closely.
    """
    x = np.asarray(x, dtype=float)
    seq = blowup_sequence(u, x, radii, None, window_res)
    Ax = coefficient_at(A, x[None, :])[0]
    lip = _local_lip(u, A, x, float(seq.radii[-1]), window_res)
    rows, best = [], np.inf
    for m in seq.members:
        fit = linear_fit(m.u)
        best = min(best, fit.residual)
        H = float(fit.e @ Ax @ fit.e)
        rows.append({"r": m.radius, "e": fit.e.tolist(), "residual": fit.residual,
                     "best_residual": best, "H": H, "lip": lip, "lip2": lip ** 2})
    last = rows[-1]
    supports = ("H = Lip^2" if abs(last["H"] - last["lip2"]) <= abs(last["H"] - last["lip"])
                else "H = Lip")
    return BlowupReport(x, rows, supports)


def fit_consistency(u, x, r, window_res=WINDOW_RES):
    """``(e, central gradient at the nearest node)`` for smooth-input checks."""
    sample, grid = _sampler(u)
    if grid is None:
        raise ValidationError("fit consistency needs a gridded field")
    fit = linear_fit(rescale(u, x, r, window_res=window_res).u)
    g = gradient_central(getattr(u, "u", u)).values.reshape(-1, grid.dim)[grid.nearest_node(x)]
    return fit.e, g
