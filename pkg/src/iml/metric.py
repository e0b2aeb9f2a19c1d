"""Intrinsic distances as shortest paths on a weighted lattice graph.

An edge from node ``x`` along displacement ``v`` costs the trapezoid value
``(q(x) + q(x+v)) / 2`` with ``q(y) = sqrt(<A(y)^{-1} v, v>)``, i.e. the
Riemannian length of the segment for the metric tensor ``A^{-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from . import _graph
from .errors import ConfigurationError, ResolutionError, UnreachableError, ValidationError
from .fields import DiffusionField, ScalarField, norris_mollify

DEFAULT_STENCIL = 16

# Worst-case ratio of uniform-weight graph length to Euclidean length (2-D).
STENCIL_INFLATION = {4: math.sqrt(2.0), 8: 1.0 / math.cos(math.pi / 8),
                     16: 1.0 / math.cos(math.atan(0.5) / 2), 32: 1.0 / math.cos(math.atan(1 / 3) / 2)}


def stencil_offsets(dim, order=DEFAULT_STENCIL):
    """Integer offsets of the neighbour stencil.

    ``4``: axis neighbours; ``8``: the full ``{-1,0,1}^n`` shell; ``16`` and
    ``32``: primitive vectors of max-norm at most 2 resp. 3 (knight moves and
    their longer analogues). In 1-D every order reduces to ``+-1``.
    """
    if order not in STENCIL_INFLATION:
        raise ConfigurationError(f"unknown stencil order {order}; use one of {sorted(STENCIL_INFLATION)}")
    if dim == 1:
        return np.array([[-1], [1]])
    reach = {4: 1, 8: 1, 16: 2, 32: 3}[order]
    offs = []
    for v in product(range(-reach, reach + 1), repeat=dim):
        if not any(v):
            continue
        if order == 4 and sum(abs(c) for c in v) != 1:
            continue
        if math.gcd(*[abs(c) for c in v]) != 1:
            continue
        offs.append(v)
    return np.array(sorted(offs), dtype=np.int64)


def stencil_inflation(dim, order):
    """Bound on graph length / Euclidean length for uniform weights."""
    if dim == 1:
        return 1.0
    if dim == 2:
        return STENCIL_INFLATION[order]
    # 3-D: the graph norm is attained on the faces of the hull of v/|v|;
    # evaluate it on a dense direction sample and pad by one percent.
    from scipy.optimize import linprog
    offs = stencil_offsets(dim, order).astype(float)
    lens = np.linalg.norm(offs, axis=1)
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(400, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    worst = 1.0
    for w in dirs:
        res = linprog(lens, A_eq=offs.T, b_eq=w, bounds=(0, None), method="highs")
        worst = max(worst, res.fun)
    return worst * 1.01


@dataclass(frozen=True, eq=False)
class StencilGraph:
    """Lattice graph with Riemannian edge weights for a diffusion field."""

    coefficient: DiffusionField
    order: int = DEFAULT_STENCIL

    @property
    def grid(self):
        return self.coefficient.grid

    @cached_property
    def offsets(self):
        return stencil_offsets(self.grid.dim, self.order)

    @cached_property
    def displacements(self):
        return self.offsets * np.asarray(self.grid.spacing)

    @cached_property
    def _padded(self):
        dim = self.grid.dim
        shape3 = np.ones(3, dtype=np.int64)
        shape3[:dim] = self.grid.shape
        off3 = np.zeros((len(self.offsets), 3), dtype=np.int64)
        off3[:, :dim] = self.offsets
        return shape3, off3

    @cached_property
    def weights(self):
        """``(K, N)`` edge lengths; ``inf`` where the neighbour is off-grid."""
        grid = self.grid
        A = self.coefficient
        W = np.full((len(self.offsets),) + tuple(grid.shape), np.inf)
        for k, (off, v) in enumerate(zip(self.offsets, self.displacements)):
            q = np.sqrt(A.inverse_quadratic(v))
            src, dst = [], []
            for o, n in zip(off, grid.shape):
                src.append(slice(max(0, -o), n - max(0, o)))
                dst.append(slice(max(0, o), n - max(0, -o)))
            src, dst = tuple(src), tuple(dst)
            W[(k,) + src] = 0.5 * (q[src] + q[dst])
        W = W.reshape(len(self.offsets), -1)
        W.setflags(write=False)
        return W

    def neighbor(self, node, k):
        idx = np.array(self.grid.multi_index(node)) + self.offsets[k]
        if np.any(idx < 0) or np.any(idx >= np.array(self.grid.shape)):
            return -1
        return self.grid.node_index(idx)

    def edges(self):
        """Iterate ``(i, j, w)`` over all directed edges."""
        W = self.weights
        for k in range(len(self.offsets)):
            for i in np.flatnonzero(np.isfinite(W[k])):
                yield int(i), self.neighbor(i, k), float(W[k, i])

    def shortest_paths(self, sources, init=None, max_dist=np.inf):
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        init = np.zeros(len(sources)) if init is None else np.asarray(init, dtype=float)
        shape3, off3 = self._padded
        return _graph.dijkstra(sources, init, self.weights, off3, shape3, float(max_dist))

    def balls(self, centers, radii):
        """Closed metric balls as CSR arrays ``(indptr, nodes, dists)``."""
        centers = np.atleast_1d(np.asarray(centers, dtype=np.int64))
        radii = np.broadcast_to(np.asarray(radii, dtype=float), centers.shape).copy()
        shape3, off3 = self._padded
        return _graph.balls_csr(centers, radii, self.weights, off3, shape3)

    def cable_balls(self, centers, radii, keep=None):
        """Balls of the metric graph (edges as segments): CSR ``(indptr, a, b, t)``.

        Candidate ``p`` of ball ``c`` is the point ``(1 - t) x_a + t x_b``;
        edges into nodes outside ``keep`` are dropped.
        """
        centers = np.atleast_1d(np.asarray(centers, dtype=np.int64))
        radii = np.broadcast_to(np.asarray(radii, dtype=float), centers.shape).copy()
        keep = (np.ones(self.grid.size, dtype=bool) if keep is None
                else np.asarray(keep, dtype=bool).reshape(-1))
        shape3, off3 = self._padded
        return _graph.cable_balls(centers, radii, self.weights, off3, shape3, keep)

    def ball(self, center, radius):
        indptr, nodes, dists = self.balls([center], [radius])
        return nodes, dists


def edge_length(A, node, v):
    """Trapezoid Riemannian length of the straight edge ``x -> x + v``.

    ``v`` is an integer lattice offset; the neighbour must lie on the grid.
    """
    grid = A.grid
    off = np.asarray(v, dtype=int)
    idx = np.array(grid.multi_index(node)) + off
    if np.any(idx < 0) or np.any(idx >= np.array(grid.shape)):
        raise ValidationError(f"edge from node {node} along {tuple(off)} leaves the grid")
    disp = off * np.asarray(grid.spacing)
    q = np.sqrt(A.inverse_quadratic(disp)).reshape(-1)
    return 0.5 * (q[node] + q[grid.node_index(idx)])


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Single-source distances ``d_A(source, .)`` with predecessor links."""

    graph: StencilGraph
    source: int
    values: np.ndarray
    predecessor: np.ndarray

    @property
    def grid(self):
        return self.graph.grid

    @property
    def coefficient(self):
        return self.graph.coefficient

    @property
    def flat(self):
        return self.values.reshape(-1)

    @property
    def unreachable(self):
        return ~np.isfinite(self.values)

    def __getitem__(self, node):
        return float(self.flat[node])

    def as_scalar_field(self):
        if np.any(self.unreachable):
            raise UnreachableError("distance field has unreachable nodes")
        return ScalarField(self.grid, self.values)


def distance_field(A, source, stencil=DEFAULT_STENCIL, graph=None):
    """Exact single-source shortest paths (label setting, ``(d, node)`` tie-break)."""
    graph = StencilGraph(A, stencil) if graph is None else graph
    dist, pred = graph.shortest_paths([source])
    dist = dist.reshape(graph.grid.shape)
    dist.setflags(write=False)
    return DistanceField(graph, int(source), dist, pred)


def bellman_ford(graph, source):
    """Brute-force relaxation over the explicit edge list (test oracle)."""
    n = graph.grid.size
    dist = [math.inf] * n
    dist[source] = 0.0
    edges = list(graph.edges())
    for _ in range(n):
        changed = False
        for i, j, w in edges:
            if dist[i] + w < dist[j]:
                dist[j] = dist[i] + w
                changed = True
        if not changed:
            break
    return np.array(dist)


def distance_1d_exact(a, x, y):
    """``|int_x^y a(s)^{-1/2} ds|`` by adaptive quadrature."""
    lo, hi = (x, y) if x <= y else (y, x)
    if lo == hi:
        return 0.0

    def density(s):
        val = a(s)
        if not val > 0:
            raise ValidationError(f"coefficient must be positive, got {val} at s={s}")
        return val ** -0.5

    value, _ = integrate.quad(density, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-12)
    return value


@dataclass(frozen=True)
class Polyline:
    """Ordered lattice path; ``points`` are node coordinates."""

    nodes: np.ndarray
    points: np.ndarray

    @property
    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def length(self):
        return float(self.segment_lengths.sum())

    def at(self, s):
        """Constant-speed parametrisation on ``[0, 1]``."""
        seg = self.segment_lengths
        if seg.size == 0 or seg.sum() == 0:
            return np.repeat(self.points[:1], np.size(s), axis=0)
        cum = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.stack([np.interp(s, cum, self.points[:, a]) for a in range(self.points.shape[1])],
                        axis=1)


def geodesic(df, target):
    """Backtrack predecessor links from ``target`` to the source."""
    target = int(target)
    if not np.isfinite(df.flat[target]):
        raise UnreachableError(f"node {target} is not reachable from {df.source}")
    path = [target]
    while path[-1] != df.source:
        nxt = int(df.predecessor[path[-1]])
        if nxt < 0:
            raise UnreachableError(f"broken predecessor chain at node {path[-1]}")
        path.append(nxt)
    nodes = np.array(path[::-1], dtype=np.int64)
    return Polyline(nodes, df.grid.points[nodes])


def path_length(graph, polyline):
    """Sum of graph edge weights along consecutive polyline nodes."""
    total = 0.0
    offs = {tuple(o): k for k, o in enumerate(graph.offsets)}
    grid = graph.grid
    for a, b in zip(polyline.nodes[:-1], polyline.nodes[1:]):
        step = tuple(np.array(grid.multi_index(b)) - np.array(grid.multi_index(a)))
        total += float(graph.weights[offs[step], a])
    return total


def curve_energy(weight, polyline, subdivisions=1):
    """Energy ``int_0^1 w |g'|^2 ds`` and length ``int_0^1 sqrt(w) |g'| ds``.

    Constant-speed parametrisation; each segment is integrated by the
    composite trapezoid rule with ``subdivisions`` panels and ``w`` read by
    multilinear interpolation. Both integrals use the same positive
    quadrature, so ``length**2 <= energy`` holds exactly up to round-off.
    """
    seg = polyline.segment_lengths
    total = seg.sum()
    if total == 0:
        return 0.0, 0.0
    interp = RegularGridInterpolator(weight.grid.axes, weight.values, method="linear")
    int_w = 0.0
    int_sqrt = 0.0
    tt = np.linspace(0.0, 1.0, subdivisions + 1)
    tw = np.full(subdivisions + 1, 1.0 / subdivisions)
    tw[[0, -1]] *= 0.5
    for p, q, ell in zip(polyline.points[:-1], polyline.points[1:], seg):
        if ell == 0:
            continue
        pts = p[None, :] + tt[:, None] * (q - p)[None, :]
        w = interp(pts)
        int_w += ell * float(tw @ w)
        int_sqrt += ell * float(tw @ np.sqrt(w))
    return total * int_w, int_sqrt


@dataclass(frozen=True)
class RatioField:
    """Nodewise ``d / d'`` (``nan`` at the source) with summary quantiles."""

    grid: object
    values: np.ndarray
    quantiles: dict


def ratio_field(df, df_other, qs=(0.0, 0.05, 0.5, 0.95, 1.0)):
    if df.grid != df_other.grid:
        raise ValidationError("distance fields live on different grids")
    if df.source != df_other.source:
        raise ValidationError("distance fields have different sources")
    num = np.asarray(df.values, dtype=float)
    den = np.asarray(df_other.values, dtype=float)
    ratio = np.full(num.shape, np.nan)
    ok = (den > 0) & np.isfinite(num) & np.isfinite(den)
    ratio[ok] = num[ok] / den[ok]
    ratio.reshape(-1)[df.source] = np.nan
    finite = ratio[np.isfinite(ratio)]
    quant = {float(q): float(np.quantile(finite, q)) for q in qs} if finite.size else {}
    return RatioField(df.grid, ratio, quant)


def mollified_distance_sweep(E, delta, t_list, pair, stencil=DEFAULT_STENCIL):
    """Distances under Norris-mollified coefficients for each scale in ``t_list``.

    Returns rows ``(t, d_t)`` in the given order.
    """
    t_list = [float(t) for t in t_list]
    if any(b >= a for a, b in zip(t_list, t_list[1:])):
        raise ConfigurationError("t_list must be strictly decreasing")
    h = E.grid.h
    x, y = (int(p) for p in pair)
    rows = []
    for t in t_list:
        if t < 2 * h * (1 - 1e-12):
            raise ResolutionError(f"mollifier scale t={t:g} below 2h={2 * h:g}")
        _, A_t = norris_mollify(E, delta, t)
        dist, _ = StencilGraph(A_t, stencil).shortest_paths([x])
        rows.append((t, float(dist[y])))
    return rows
