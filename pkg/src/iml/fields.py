"""Lattice domains, nodal fields and diffusion-matrix fields.

Every field stores its values as an array shaped like the grid
(``grid.shape``, C order), so the flat node index of a multi-index is
``np.ravel_multi_index(idx, grid.shape)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, EllipticityError, ResolutionError, ValidationError

SYMMETRY_TOL = 1e-12
MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class GridDomain:
    """Uniform axis-aligned lattice over a closed box."""

    dim: int
    bounds: tuple
    resolution: tuple

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dim must be 1, 2 or 3, got {self.dim}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        resolution = tuple(int(r) for r in self.resolution)
        if len(bounds) != self.dim or len(resolution) != self.dim:
            raise ConfigurationError("bounds and resolution must have one entry per axis")
        for axis, ((lo, hi), res) in enumerate(zip(bounds, resolution)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
                raise ConfigurationError(f"degenerate bounds on axis {axis}: [{lo}, {hi}]")
            if res < 2:
                raise ConfigurationError(f"resolution on axis {axis} must be >= 2, got {res}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", resolution)

    @property
    def shape(self):
        return self.resolution

    @property
    def size(self):
        return int(np.prod(self.resolution))

    @cached_property
    def spacing(self):
        return tuple((hi - lo) / (res - 1) for (lo, hi), res in zip(self.bounds, self.resolution))

    @property
    def h(self):
        """Largest per-axis spacing (all spacings coincide on square lattices)."""
        return max(self.spacing)

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @cached_property
    def axes(self):
        """Per-axis node coordinates, ``lo + i * spacing``."""
        return tuple(lo + np.arange(res) * h
                     for (lo, _), res, h in zip(self.bounds, self.resolution, self.spacing))

    def mesh(self):
        """Coordinate arrays, one per axis, each shaped like the grid."""
        return np.meshgrid(*self.axes, indexing="ij")

    @cached_property
    def points(self):
        """All node coordinates as a ``(size, dim)`` array in node order."""
        return np.stack([c.ravel() for c in self.mesh()], axis=1)

    def node_index(self, multi_index):
        return int(np.ravel_multi_index(tuple(int(i) for i in multi_index), self.shape))

    def multi_index(self, node):
        return tuple(int(i) for i in np.unravel_index(int(node), self.shape))

    def coordinates(self, node):
        idx = self.multi_index(node)
        return np.array([self.axes[a][i] for a, i in enumerate(idx)])

    def nearest_node(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = [int(np.clip(np.rint((p - lo) / h), 0, res - 1))
               for p, (lo, _), h, res in zip(point, self.bounds, self.spacing, self.resolution)]
        return self.node_index(idx)

    def boundary_mask(self):
        """Nodes on the faces of the box."""
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[axis] = 0
            mask[tuple(sl)] = True
            sl[axis] = -1
            mask[tuple(sl)] = True
        return mask


def build_grid(dim, bounds, resolution):
    """Build a :class:`GridDomain`; scalars broadcast to every axis.

    >>> build_grid(2, (0.0, 1.0), 9).size
    81
    """
    if np.ndim(bounds) == 1:
        bounds = [tuple(bounds)] * dim
    if np.ndim(resolution) == 0:
        resolution = [resolution] * dim
    return GridDomain(dim, tuple(tuple(b) for b in bounds), tuple(resolution))


def _check_values(grid, values, trailing=()):
    values = np.asarray(values, dtype=float)
    expected = tuple(grid.shape) + tuple(trailing)
    if values.shape != expected:
        if values.size == int(np.prod(expected)):
            values = values.reshape(expected)
        else:
            raise ValidationError(f"field has shape {values.shape}, grid expects {expected}")
    if not np.all(np.isfinite(values)):
        raise ValidationError("field values must be finite")
    values = values.copy()
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values))

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(x1, ..., xn)`` (vectorised over coordinate arrays)."""
        vals = np.broadcast_to(np.asarray(func(*grid.mesh()), dtype=float), grid.shape)
        return cls(grid, vals)

    @property
    def flat(self):
        return self.values.reshape(-1)

    def __getitem__(self, node):
        return float(self.flat[node])


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, (self.grid.dim,)))

    def norm(self):
        return ScalarField(self.grid, np.linalg.norm(self.values, axis=-1))


@dataclass(frozen=True)
class EllipticityReport:
    lambda_max: float
    worst_node: int
    passed: bool
    message: str = ""


def check_ellipticity(A, grid=None):
    """Smallest ``lam >= 1`` with ``|xi|^2/lam <= <A xi, xi> <= lam |xi|^2`` at every node.

    ``A`` is a :class:`DiffusionField` or a raw ``(*shape, n, n)`` matrix array.
    Asymmetric input raises :class:`ValidationError`; non-positive-definite
    input returns a failing report naming the node.
    """
    mats = A.matrices if isinstance(A, DiffusionField) else np.asarray(A, dtype=float)
    n = mats.shape[-1]
    flat = mats.reshape(-1, n, n)
    asym = np.abs(flat - np.swapaxes(flat, 1, 2)).max(axis=(1, 2))
    bad = np.flatnonzero(asym > SYMMETRY_TOL)
    if bad.size:
        raise ValidationError(f"matrix at node {int(bad[0])} is not symmetric "
                              f"(asymmetry {asym[bad[0]]:.3g})")
    eig = np.linalg.eigvalsh(flat)
    lo, hi = eig[:, 0], eig[:, -1]
    nonpos = np.flatnonzero(lo <= MIN_EIGENVALUE)
    if nonpos.size:
        node = int(nonpos[np.argmin(lo[nonpos])])
        return EllipticityReport(np.inf, node, False,
                                 f"node {node} has eigenvalue {lo[node]:.3g}")
    per_node = np.maximum(np.maximum(hi, 1.0 / lo), 1.0)
    worst = int(np.argmax(per_node))
    return EllipticityReport(float(per_node[worst]), worst, True)


@dataclass(frozen=True, eq=False)
class DiffusionField:
    """Symmetric positive-definite matrix per node.

    Build through :meth:`conformal`, :meth:`identity`, :meth:`from_matrices`
    or :meth:`indicator`. ``scale`` is set for conformal fields ``a(x) I``.
    """

    grid: GridDomain
    matrices: np.ndarray
    scale: np.ndarray | None = None
    lambda_max: float = field(init=False)

    def __post_init__(self):
        n = self.grid.dim
        mats = np.asarray(self.matrices, dtype=float).reshape(tuple(self.grid.shape) + (n, n))
        if not np.all(np.isfinite(mats)):
            raise ValidationError("diffusion matrices must be finite")
        report = check_ellipticity(mats)
        if not report.passed:
            raise EllipticityError(report.message)
        mats = mats.copy()
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "lambda_max", report.lambda_max)
        if self.scale is not None:
            scale = _check_values(self.grid, self.scale)
            object.__setattr__(self, "scale", scale)

    @property
    def conformal(self):
        return self.scale is not None

    @classmethod
    def from_scale(cls, grid, scale):
        """Conformal field ``a(x) I`` from nodal values ``a``."""
        scale = np.broadcast_to(np.asarray(scale, dtype=float), grid.shape)
        if np.any(scale <= MIN_EIGENVALUE):
            node = int(np.argmin(scale.reshape(-1)))
            raise EllipticityError(f"node {node} has nonpositive coefficient {scale.flat[node]:.3g}")
        mats = scale[..., None, None] * np.eye(grid.dim)
        return cls(grid, mats, scale=scale)

    @classmethod
    def identity(cls, grid):
        return cls.from_scale(grid, np.ones(grid.shape))

    @classmethod
    def from_function(cls, grid, func):
        """Conformal field with coefficient ``func(x1, ..., xn)``."""
        return cls.from_scale(grid, np.broadcast_to(func(*grid.mesh()), grid.shape))

    @classmethod
    def from_matrices(cls, grid, matrices):
        return cls(grid, matrices)

    @classmethod
    def indicator(cls, E, delta):
        """``(1 - delta 1_E) I`` for an indicator field ``E``."""
        if not 0.0 < delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
        ind = np.asarray(E.values) > 0.5
        return cls.from_scale(E.grid, np.where(ind, 1.0 - delta, 1.0))

    @cached_property
    def inverse(self):
        """Per-node inverse matrices via symmetric eigendecomposition."""
        if self.conformal:
            return (1.0 / self.scale)[..., None, None] * np.eye(self.grid.dim)
        w, V = np.linalg.eigh(self.matrices)
        if np.any(w <= MIN_EIGENVALUE):
            raise EllipticityError("singular diffusion matrix")
        return np.einsum("...ik,...k,...jk->...ij", V, 1.0 / w, V)

    def quadratic(self, xi):
        """``<A(x) xi, xi>`` at every node for a fixed vector ``xi``."""
        xi = np.asarray(xi, dtype=float)
        return np.einsum("...ij,i,j->...", self.matrices, xi, xi)

    def inverse_quadratic(self, v):
        """``<A(x)^{-1} v, v>`` at every node for a fixed displacement ``v``."""
        v = np.asarray(v, dtype=float)
        if self.conformal:
            return float(v @ v) / self.scale
        return np.einsum("...ij,i,j->...", self.inverse, v, v)

    def hamiltonian(self, grad):
        """``<A(x) g(x), g(x)>`` for a gradient array of shape ``(*shape, n)``."""
        return np.einsum("...i,...ij,...j->...", grad, self.matrices, grad)

    def subgrid(self, grid, index_slices):
        """Restriction to a sub-box given by per-axis slices."""
        sl = tuple(index_slices)
        if self.conformal:
            return DiffusionField.from_scale(grid, self.scale[sl])
        return DiffusionField(grid, self.matrices[sl])


def gradient_central(u):
    """Central differences inside, one-sided first-order differences on faces."""
    grid = u.grid
    if min(grid.shape) < 3:
        raise ResolutionError("gradient_central needs at least 3 nodes per axis")
    parts = np.gradient(u.values, *grid.spacing, edge_order=1)
    if grid.dim == 1:
        parts = [parts]
    return VectorField(grid, np.stack(parts, axis=-1))


@dataclass(frozen=True)
class Mollifier:
    """Discrete bump ``Phi_t`` on a lattice with spacing ``spacing``.

    The profile is ``c exp(-1/(1 - |x/2|^2))`` on ``|x| < 2``; ``c`` is fixed
    so that the lattice sum ``sum(Phi_t) * prod(spacing)`` equals one.
    """

    t: float
    spacing: tuple

    def __post_init__(self):
        if self.t <= 0:
            raise ConfigurationError("mollifier scale must be positive")
        if self.t < 2 * max(self.spacing) * (1 - 1e-12):
            raise ResolutionError(f"mollifier scale t={self.t:g} below 2h={2 * max(self.spacing):g}")

    @staticmethod
    def profile(x):
        """Unnormalised bump of radius 2 evaluated at ``|x|`` values."""
        s = 1.0 - (np.asarray(x, dtype=float) / 2.0) ** 2
        out = np.zeros_like(s)
        inside = s > 0
        out[inside] = np.exp(-1.0 / s[inside])
        return out

    @cached_property
    def _raw(self):
        radius = [int(np.ceil(2 * self.t / h)) for h in self.spacing]
        offs = np.meshgrid(*[np.arange(-r, r + 1) * h for r, h in zip(radius, self.spacing)],
                           indexing="ij")
        dist = np.sqrt(sum(o ** 2 for o in offs)) / self.t
        bump = self.profile(dist)
        cell = float(np.prod(self.spacing))
        n = len(self.spacing)
        mass = bump.sum() * cell / self.t ** n
        return bump, 1.0 / mass

    @property
    def constant(self):
        """Normalising constant ``c`` of the profile."""
        return self._raw[1]

    @cached_property
    def weights(self):
        """Lattice weights ``Phi_t(k h) * h^n``; they sum to one."""
        bump, c = self._raw
        n = len(self.spacing)
        w = c * bump * float(np.prod(self.spacing)) / self.t ** n
        w.setflags(write=False)
        return w

    def peak(self):
        """Maximum of the normalised profile ``Phi`` (not ``Phi_t``)."""
        return self.constant * np.exp(-1.0)


def norris_mollify(E, delta, t):
    """Mollified weight ``Phi_t * 1/(1 - delta 1_E)`` and ``A_t = weight^{-1} I``.

    The kernel is truncated at radius ``2t`` and renormalised over the nodes
    that fall inside the grid, so near the faces the weight is a local mean of
    in-grid values. The result is clipped to ``[1, 1/(1-delta)]`` to absorb
    round-off.
    """
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    grid = E.grid
    moll = Mollifier(float(t), grid.spacing)
    f = np.where(np.asarray(E.values) > 0.5, 1.0 / (1.0 - delta), 1.0)
    num = ndimage.correlate(f, moll.weights, mode="constant", cval=0.0)
    den = ndimage.correlate(np.ones_like(f), moll.weights, mode="constant", cval=0.0)
    weight = np.clip(num / den, 1.0, 1.0 / (1.0 - delta))
    return ScalarField(grid, weight), DiffusionField.from_scale(grid, 1.0 / weight)
