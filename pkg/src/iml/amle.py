"""Absolutely minimizing Lipschitz extensions in the intrinsic metric.

The solver iterates ``u <- (u^r + u_r) / 2`` on interior nodes, where ``u^r``
and ``u_r`` are extrema over closed metric balls of the lattice graph. Near
the boundary the ball radius shrinks to the distance to the boundary, so
balls never leave the closed domain. Fixed points are then audited with
cone comparison, boundary-Lipschitz and slope-monotonicity checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _graph
from .errors import ConvergenceError, ResolutionError, ValidationError
from .fields import ScalarField
from .io import write_field_csv, write_pgm
from .lipschitz import pointwise_lip
from .metric import DEFAULT_STENCIL, StencilGraph

DEFAULT_TOL = 1e-9
MAX_ITER = 10 ** 6
MONOTONE_TOL = 1e-6
EXHAUSTIVE_LIMIT = 33 * 33


def _graph_of(metric):
    if isinstance(metric, StencilGraph):
        return metric
    return StencilGraph(metric, DEFAULT_STENCIL)


def _flat(u):
    if isinstance(u, ScalarField):
        return u.flat
    return np.asarray(u, dtype=float).reshape(-1)


def _mask(grid, m):
    m = np.asarray(m, dtype=bool)
    if m.shape != tuple(grid.shape) and m.shape != (grid.size,):
        raise ValidationError(f"mask shape {m.shape} does not match grid {grid.shape}")
    return m.reshape(-1)


def grid_boundary(grid, closure):
    """Nodes of ``closure`` on a grid face or with an axis neighbour outside it."""
    closure = _mask(grid, closure).reshape(grid.shape)
    pad = np.pad(closure, 1, constant_values=False)
    edge = np.zeros_like(closure)
    core = tuple(slice(1, -1) for _ in range(grid.dim))
    for ax in range(grid.dim):
        for step in (-1, 1):
            edge |= ~np.roll(pad, step, axis=ax)[core]
    return (closure & edge).reshape(-1)


def _filter_csr(indptr, nodes, dists, keep):
    ok = keep[nodes]
    counts = np.add.reduceat(ok.astype(np.int64), indptr[:-1]) if len(nodes) else np.zeros(0, int)
    counts = np.where(np.diff(indptr) > 0, counts, 0)
    new_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return new_ptr, nodes[ok], dists[ok]


def _segment_extrema(vals, indptr, dists, r):
    inside = dists <= r
    hi = np.where(inside, vals, -np.inf)
    lo = np.where(inside, vals, np.inf)
    starts = indptr[:-1]
    return np.maximum.reduceat(hi, starts), np.minimum.reduceat(lo, starts)


# --- McShane envelopes ---------------------------------------------------

def _source_distances(graph, sources):
    return np.stack([graph.shortest_paths([s])[0] for s in sources])


def _two_point(vals, D):
    dv = np.abs(vals[:, None] - vals[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = np.where(D > 0, dv / D, 0.0)
    i, j = np.unravel_index(np.argmax(Q), Q.shape)
    return float(Q[i, j]), int(i), int(j)


def _envelope_inputs(f, S, graph):
    S = np.asarray(S, dtype=np.int64).reshape(-1)
    if S.size == 0:
        raise ValidationError("McShane extension needs a nonempty data set")
    vals = _flat(f)
    fv = vals[S] if vals.size == graph.grid.size else np.asarray(vals, float)
    if not np.all(np.isfinite(fv)):
        raise ValidationError("McShane data must be finite")
    return S, fv


def _check_L(S, fv, D, L):
    lip, i, j = _two_point(fv, D[:, S])
    if L < lip * (1 - 1e-12):
        raise ValidationError(
            f"L={L:.6g} is below Lip(f, S)={lip:.6g}: violated by nodes {S[i]} and {S[j]}")
    return lip


def mcshane_upper(f, S, L, metric, distances=None):
    """``inf_z [f(z) + L d(z, .)]`` over the data nodes ``S``.

    ``f`` is either a full nodal field or the values on ``S`` in order.
    """
    graph = _graph_of(metric)
    S, fv = _envelope_inputs(f, S, graph)
    D = _source_distances(graph, S) if distances is None else distances
    _check_L(S, fv, D, L)
    return ScalarField(graph.grid, (fv[:, None] + L * D).min(axis=0).reshape(graph.grid.shape))


def mcshane_lower(f, S, L, metric, distances=None):
    """``sup_z [f(z) - L d(z, .)]``; the symmetric partner of :func:`mcshane_upper`."""
    graph = _graph_of(metric)
    S, fv = _envelope_inputs(f, S, graph)
    D = _source_distances(graph, S) if distances is None else distances
    _check_L(S, fv, D, L)
    return ScalarField(graph.grid, (fv[:, None] - L * D).max(axis=0).reshape(graph.grid.shape))


# --- ball extrema and slopes ---------------------------------------------

@dataclass(frozen=True)
class BallExtrema:
    upper: ScalarField
    lower: ScalarField
    usable: np.ndarray  # nodes whose ball stays inside the closed domain


def _min_edge(graph):
    w = graph.weights
    return float(w[np.isfinite(w)].min())


def _extrema(vals, graph, centers, r, keep, cable):
    if cable:
        indptr, a, b, t = graph.cable_balls(centers, np.full(len(centers), float(r)), keep)
        return _graph.cable_reduce(vals, indptr, a, b, t)
    indptr, nodes, dists = graph.balls(centers, np.full(len(centers), float(r)))
    if not keep.all():
        indptr, nodes, dists = _filter_csr(indptr, nodes, dists, keep)
    return _segment_extrema(vals[nodes], indptr, dists, r)


def ball_extrema(u, metric, r, closure=None, cable=True):
    """Sup and inf of ``u`` over closed metric balls of radius ``r``.

    With ``cable=True`` (the default) edges count as segments carrying the
    linear interpolant of ``u``, so points at exactly distance ``r`` take
    part; ``cable=False`` restricts to lattice nodes.
    """
    graph = _graph_of(metric)
    grid = graph.grid
    if r < _min_edge(graph):
        raise ResolutionError(f"r={r:.3g} is below the shortest edge {_min_edge(graph):.3g}; "
                              "balls would hold only their centre")
    closure = np.ones(grid.size, bool) if closure is None else _mask(grid, closure)
    centers = np.arange(grid.size, dtype=np.int64)
    hi, lo = _extrema(_flat(u), graph, centers, r, closure, cable)
    dB, _ = graph.shortest_paths(np.flatnonzero(grid_boundary(grid, closure)))
    usable = closure & (dB >= r)
    return BallExtrema(ScalarField(grid, hi.reshape(grid.shape)),
                       ScalarField(grid, lo.reshape(grid.shape)),
                       usable.reshape(grid.shape))


def slope_ops(u, metric, r, closure=None, cable=True):
    """``S_r^+ = (u^r - u) / r`` and ``S_r^- = (u - u_r) / r``."""
    ext = ball_extrema(u, metric, r, closure, cable)
    vals = _flat(u).reshape(ext.upper.grid.shape)
    return (ScalarField(ext.upper.grid, (ext.upper.values - vals) / r),
            ScalarField(ext.upper.grid, (vals - ext.lower.values) / r))


# --- problem and solver --------------------------------------------------

@dataclass(eq=False)
class AmleProblem:
    """Dirichlet problem on the node set ``closure`` (defaults to the grid).

    Only the values of ``f`` on the boundary nodes are used.
    """

    A: object
    f: object
    closure: object = None
    r: float | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = MAX_ITER
    stencil: int = DEFAULT_STENCIL

    def __post_init__(self):
        grid = self.A.grid
        self.closure = (np.ones(grid.size, bool) if self.closure is None
                        else _mask(grid, self.closure).copy())
        f = _flat(self.f)
        if f.size != grid.size:
            raise ValidationError("boundary data must be a nodal field on the grid")
        self.boundary = grid_boundary(grid, self.closure)
        if not self.boundary.any():
            raise ValidationError("domain has no boundary nodes")
        if not np.all(np.isfinite(f[self.boundary])):
            raise ValidationError("boundary data must be finite on the boundary")
        self.interior = self.closure & ~self.boundary
        floor = 3 * grid.h * math.sqrt(self.A.lambda_max)
        if self.r is None:
            pts = grid.points[self.closure]
            diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
            self.r = max(floor, diam / 32)
        elif self.r < floor * (1 - 1e-12):
            raise ResolutionError(f"r={self.r:.4g} is below 3h*sqrt(lambda)={floor:.4g}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValidationError("tolerance must be positive and the iteration cap at least 1")

    @property
    def grid(self):
        return self.A.grid

    @property
    def data(self):
        return _flat(self.f)


@dataclass(frozen=True)
class Cone:
    """``b + a d(., x0)`` from a distance field sourced at the apex."""

    apex: int
    slope: float
    offset: float
    values: np.ndarray


def cone(distance, slope, offset):
    return Cone(int(distance.source), float(slope), float(offset),
                offset + slope * distance.flat)


@dataclass(eq=False)
class AmleSolution:
    problem: AmleProblem
    u: ScalarField
    iterations: int
    final_update: float
    history: np.ndarray
    lower: ScalarField
    upper: ScalarField
    certification: list = field(default_factory=list)

    def certify(self, V, radii=None, apex_stride=None):
        """Run all three certificates on the nested node set ``V``."""
        graph = StencilGraph(self.problem.A, self.problem.stencil)
        cert = [cone_comparison_check(self.u, V, graph, apex_stride=apex_stride),
                boundary_lip_check(self.u, V, graph)]
        if radii is None:
            h = self.u.grid.h
            radii = h * np.array([2.0, 3.0, 4.0, 6.0, 8.0])
        cert.append(slope_monotonicity_check(self.u, graph, radii, closure=self.problem.closure))
        self.certification = cert
        return cert

    def certification_json(self, path=None):
        text = json.dumps([c.as_dict() for c in self.certification], indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def write_csv(self, path):
        return write_field_csv(self.u, path, name="u")

    def write_pgm(self, path):
        return write_pgm(self.u, path)


def initial_guess(problem, graph=None):
    """Average of the McShane envelopes with ``L = Lip(f, boundary)``."""
    graph = StencilGraph(problem.A, problem.stencil) if graph is None else graph
    S = np.flatnonzero(problem.boundary)
    D = _source_distances(graph, S)
    L, _, _ = _two_point(problem.data[S], D[:, S])
    up = mcshane_upper(problem.data, S, L, graph, distances=D)
    lo = mcshane_lower(problem.data, S, L, graph, distances=D)
    return up, lo


def _solver_balls(problem, graph):
    interior = np.flatnonzero(problem.interior).astype(np.int64)
    dB, _ = graph.shortest_paths(np.flatnonzero(problem.boundary))
    radii = np.minimum(problem.r, dB[interior])
    return (interior,) + graph.cable_balls(interior, radii, problem.closure)


def amle_solve(problem, init="mean", history_every=100):
    """Fixed point of the metric-ball midrange update.

    ``init`` is ``"mean"``, ``"upper"``, ``"lower"`` or a nodal array;
    boundary values are always reset to the data.
    """
    grid = problem.grid
    graph = StencilGraph(problem.A, problem.stencil)
    up, lo = initial_guess(problem, graph)
    if isinstance(init, str):
        choices = {"mean": 0.5 * (up.flat + lo.flat), "upper": up.flat, "lower": lo.flat}
        if init not in choices:
            raise ValidationError(f"unknown initialisation {init!r}")
        u0 = choices[init].copy()
    else:
        u0 = _flat(init).astype(float).copy()
    u0[problem.boundary] = problem.data[problem.boundary]
    u0[~problem.closure] = 0.0
    interior, indptr, a, b, t = _solver_balls(problem, graph)
    u, sweeps, change, hist = _graph.cable_iterate(
        u0, interior, indptr, a, b, t, float(problem.tol), int(problem.max_iter),
        int(history_every))
    if change > problem.tol:
        raise ConvergenceError(
            f"no convergence after {sweeps} sweeps: last update {change:.3e} > {problem.tol:.1e}",
            history=list(hist))
    return AmleSolution(problem, ScalarField(grid, u.reshape(grid.shape)), int(sweeps),
                        float(change), hist, lo, up)


# --- certificates --------------------------------------------------------

@dataclass
class Certificate:
    check: str
    margin: float
    passed: bool
    witness: int | None = None
    detail: dict = field(default_factory=dict)

    def as_dict(self):
        return {"check": self.check, "margin": self.margin, "passed": self.passed,
                "witness": self.witness, "detail": self.detail}


def _all_pair_distances(graph, nodes, sample, seed=0):
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) > sample:
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(len(nodes), sample, replace=False))
    else:
        rows = np.arange(len(nodes))
    D = np.stack([graph.shortest_paths([nodes[i]])[0][nodes] for i in rows])
    return rows, D


def _two_point_on(vals, graph, nodes, sample=EXHAUSTIVE_LIMIT):
    rows, D = _all_pair_distances(graph, nodes, sample)
    dv = np.abs(vals[nodes][rows][:, None] - vals[nodes][None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = np.where(D > 0, dv / D, 0.0)
    i, j = np.unravel_index(np.argmax(Q), Q.shape)
    return float(Q[i, j]), (int(nodes[rows[i]]), int(nodes[j]))


def _split(grid, V):
    V = _mask(grid, V)
    dV = grid_boundary(grid, V)
    return V & ~dV, dV


def boundary_lip_check(u, V, metric, rel_tol=0.05):
    """Two-point constants on the closed set ``V`` and on its boundary layer."""
    graph = _graph_of(metric)
    vals = _flat(u)
    inner, dV = _split(graph.grid, V)
    closure = np.flatnonzero(inner | dV)
    lip_v, pair_v = _two_point_on(vals, graph, closure)
    lip_b, pair_b = _two_point_on(vals, graph, np.flatnonzero(dV))
    margin = lip_v - lip_b
    passed = abs(margin) <= rel_tol * lip_b + 1e-12
    return Certificate("boundary-lip", float(margin), bool(passed),
                       None if passed else pair_v[0],
                       {"lip_V": lip_v, "lip_boundary": lip_b, "pair_V": list(pair_v),
                        "pair_boundary": list(pair_b), "rel_tol": rel_tol})


def cone_comparison_check(u, V, metric, apexes=None, slopes=None, apex_stride=None,
                          tol=MONOTONE_TOL):
    """Comparison with tight cones from above and below on ``V``.

    For each apex ``x0`` outside ``V`` and slope ``a`` the offset ``b`` is
    chosen so that ``u <= b + a d(., x0)`` (resp. ``u >= b - a d``) holds on
    the boundary layer with equality; the margin is how far the same bound
    holds on the inner nodes.
    """
    graph = _graph_of(metric)
    grid = graph.grid
    vals = _flat(u)
    Vm = _mask(grid, V)
    inner, dV = _split(grid, V)
    if apexes is None:
        stride = apex_stride or max(1, (min(grid.shape) - 1) // 8)
        idx = np.indices(grid.shape).reshape(grid.dim, -1)
        coarse = np.all(idx % stride == 0, axis=0)
        apexes = np.flatnonzero(coarse & ~Vm)
    apexes = np.asarray(apexes, dtype=np.int64)
    if np.any(Vm[apexes]):
        bad = int(apexes[np.flatnonzero(Vm[apexes])[0]])
        raise ValidationError(f"cone apex {bad} lies inside V")
    if slopes is None:
        s = boundary_lip_check(u, V, graph).detail["lip_boundary"]
        slopes = [0.5 * s, s, 2.0 * s]
    worst, witness, worst_cone = np.inf, None, None
    checked = 0
    for x0 in apexes:
        d0, _ = graph.shortest_paths([int(x0)])
        for a in slopes:
            b_up = np.max(vals[dV] - a * d0[dV])
            gap = (b_up + a * d0 - vals)[inner]
            b_lo = np.min(vals[dV] + a * d0[dV])
            gap2 = (vals + a * d0 - b_lo)[inner]
            checked += 2
            for g, side, b in ((gap, "above", b_up), (gap2, "below", b_lo)):
                k = int(np.argmin(g))
                if g[k] < worst:
                    worst = float(g[k])
                    witness = int(np.flatnonzero(inner)[k])
                    worst_cone = {"apex": int(x0), "slope": float(a), "offset": float(b),
                                  "side": side}
    passed = worst >= -tol
    return Certificate("cone-comparison", worst, bool(passed), None if passed else witness,
                       {"cones": checked, "worst_cone": worst_cone, "tol": tol})


def comparison_principle_check(u, v, closure, boundary=None):
    """``(max over closure of u - v, max over the boundary, difference)``."""
    grid = u.grid
    closure = _mask(grid, closure)
    boundary = grid_boundary(grid, closure) if boundary is None else _mask(grid, boundary)
    w = _flat(u) - _flat(v)
    inner = float(w[closure].max())
    edge = float(w[boundary].max())
    return inner, edge, inner - edge


def slope_monotonicity_check(u, metric, radii, closure=None, nodes=None, tol=MONOTONE_TOL,
                             lip_nodes=32, cable=True):
    """``S_r^+`` and ``S_r^-`` nondecreasing in ``r`` at nodes whose largest
    ball stays inside the domain; also compares the finest ``S_r^+`` with
    the pointwise Lipschitz estimate on a fixed sample."""
    graph = _graph_of(metric)
    grid = graph.grid
    vals = _flat(u)
    radii = np.sort(np.asarray(radii, dtype=float))
    closure = np.ones(grid.size, bool) if closure is None else _mask(grid, closure)
    if nodes is None:
        dB, _ = graph.shortest_paths(np.flatnonzero(grid_boundary(grid, closure)))
        nodes = np.flatnonzero(closure & (dB >= radii[-1]))
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ResolutionError("no node has its largest ball inside the domain")
    Sp, Sm = [], []
    for r in radii:
        hi, lo = _extrema(vals, graph, nodes, r, closure, cable)
        Sp.append((hi - vals[nodes]) / r)
        Sm.append((vals[nodes] - lo) / r)
    Sp, Sm = np.array(Sp), np.array(Sm)
    mono = np.all(np.diff(Sp, axis=0) >= -tol, axis=0) & np.all(np.diff(Sm, axis=0) >= -tol, axis=0)
    frac = float(mono.mean())
    rng = np.random.default_rng(0)
    pick = np.sort(rng.choice(len(nodes), min(lip_nodes, len(nodes)), replace=False))
    gaps = []
    for i in pick:
        est = pointwise_lip(vals, graph, nodes[i], radii)
        gaps.append(abs(Sp[0, i] - est.limsup))
    witness = None if mono.all() else int(nodes[np.flatnonzero(~mono)[0]])
    return Certificate("slope-monotonicity", frac, bool(frac >= 0.99), witness,
                       {"nodes": int(len(nodes)), "radii": radii.tolist(), "tol": tol,
                        "lip_gap_median": float(np.median(gaps)),
                        "lip_gap_max": float(np.max(gaps))})
