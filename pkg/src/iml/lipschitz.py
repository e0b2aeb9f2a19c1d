"""Pointwise and local Lipschitz constants in the intrinsic metric.

Estimators work on closed metric balls of the lattice graph. A radius is
usable when its ball holds at least :data:`MIN_BALL_NODES` nodes; limits are
read off as the maximum over the finest :data:`FINEST` usable radii.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError
from .fields import ScalarField, gradient_central
from .metric import DEFAULT_STENCIL, StencilGraph, stencil_inflation

MIN_BALL_NODES = 8
FINEST = 3


def _graph(metric):
    return metric if isinstance(metric, StencilGraph) else StencilGraph(metric, DEFAULT_STENCIL)


def _extrapolate(radii, values, usable):
    idx = [i for i in np.argsort(radii) if usable[i]][:FINEST]
    if not idx:
        raise ResolutionError("no usable radius: every metric ball holds fewer than "
                              f"{MIN_BALL_NODES} nodes")
    return float(max(values[i] for i in idx))


@dataclass(frozen=True)
class LipEstimate:
    center: int
    radii: np.ndarray
    ratios: np.ndarray
    counts: np.ndarray
    limsup: float


@dataclass(frozen=True)
class LocalLipEstimate:
    center: int
    radii: np.ndarray
    constants: np.ndarray
    counts: np.ndarray
    limit: float


def pointwise_lip(u, metric, x, radii):
    """``sup |u(y) - u(x)| / d(x, y)`` over each punctured ball, then the limsup rule."""
    graph = _graph(metric)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    nodes, d = graph.ball(int(x), radii[0])
    vals = u.flat if isinstance(u, ScalarField) else np.asarray(u).reshape(-1)
    diff = np.abs(vals[nodes] - vals[int(x)])
    ratios, counts = [], []
    for r in radii:
        inside = d <= r
        punct = inside & (d > 0)
        counts.append(int(inside.sum()))
        ratios.append(float((diff[punct] / d[punct]).max()) if punct.any() else 0.0)
    counts = np.array(counts)
    ratios = np.array(ratios)
    return LipEstimate(int(x), radii, ratios, counts,
                       _extrapolate(radii, ratios, counts >= MIN_BALL_NODES))


def _pair_distances(graph, nodes, reach):
    """Dense intrinsic distances between ``nodes`` (paths may leave the set)."""
    indptr, nb, dist = graph.balls(nodes, np.full(len(nodes), reach))
    pos = {int(n): i for i, n in enumerate(nodes)}
    D = np.full((len(nodes), len(nodes)), np.inf)
    for i in range(len(nodes)):
        for p in range(indptr[i], indptr[i + 1]):
            j = pos.get(int(nb[p]))
            if j is not None:
                D[i, j] = dist[p]
    return np.minimum(D, D.T)


def local_lip(u, metric, x, radii):
    """Two-point constants ``Lip(u, B(x, r))`` over shrinking balls."""
    graph = _graph(metric)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    nodes, d = graph.ball(int(x), radii[0])
    D = _pair_distances(graph, nodes, 2 * radii[0])
    vals = u.flat if isinstance(u, ScalarField) else np.asarray(u).reshape(-1)
    dv = np.abs(vals[nodes][:, None] - vals[nodes][None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = np.where(D > 0, dv / D, 0.0)
    consts, counts = [], []
    for r in radii:
        inside = d <= r
        counts.append(int(inside.sum()))
        consts.append(float(Q[np.ix_(inside, inside)].max()) if inside.sum() > 1 else 0.0)
    counts = np.array(counts)
    consts = np.array(consts)
    return LocalLipEstimate(int(x), radii, consts, counts,
                            _extrapolate(radii, consts, counts >= MIN_BALL_NODES))


def hamiltonian_field(A, u):
    """``H(x, grad u(x)) = <A grad u, grad u>`` with central gradients."""
    grad = gradient_central(u).values
    return ScalarField(u.grid, A.hamiltonian(grad))


@dataclass
class CoincidenceReport:
    """Per-node ``(H, Lip^2, |Du|^2)`` triples with per-class ratio quantiles."""

    nodes: np.ndarray
    classes: list
    H: np.ndarray
    lip2: np.ndarray
    du2: np.ndarray
    slack: float
    summary: dict = field(default_factory=dict)

    def rows(self):
        return [(int(n), c, float(h), float(a), float(b))
                for n, c, h, a, b in zip(self.nodes, self.classes, self.H, self.lip2, self.du2)]

    def chain_fraction(self, cls=None):
        """Share of nodes with ``H <= slack^2 Lip^2 <= slack^2 |Du|^2`` (round-off tolerant)."""
        sel = np.ones(len(self.nodes), bool) if cls is None else np.array([c == cls for c in self.classes])
        if not sel.any():
            return float("nan")
        s2 = self.slack ** 2
        tol = 1e-12
        ok = (self.H[sel] <= s2 * self.lip2[sel] + tol) & (self.lip2[sel] <= self.du2[sel] + tol)
        return float(ok.mean())


def coincidence_report(A, u, node_classes, radii, stencil=DEFAULT_STENCIL,
                       max_per_class=200, seed=0):
    """Compare ``H`` with squared pointwise and local Lipschitz estimates.

    ``node_classes`` maps a class name to a boolean node mask; at most
    ``max_per_class`` nodes per class are sampled with a fixed seed.
    """
    graph = StencilGraph(A, stencil)
    Hf = hamiltonian_field(A, u).flat
    rng = np.random.default_rng(seed)
    nodes, classes = [], []
    for name in sorted(node_classes):
        idx = np.flatnonzero(np.asarray(node_classes[name]).reshape(-1))
        if len(idx) > max_per_class:
            idx = np.sort(rng.choice(idx, max_per_class, replace=False))
        nodes.extend(int(i) for i in idx)
        classes.extend([name] * len(idx))
    nodes = np.array(nodes, dtype=np.int64)
    lip2 = np.empty(len(nodes))
    du2 = np.empty(len(nodes))
    for i, x in enumerate(nodes):
        lip2[i] = pointwise_lip(u, graph, x, radii).limsup ** 2
        du2[i] = local_lip(u, graph, x, radii).limit ** 2
    H = Hf[nodes]
    report = CoincidenceReport(nodes, classes, H, lip2, du2,
                               stencil_inflation(A.grid.dim, stencil))
    for name in sorted(set(classes)):
        sel = np.array([c == name for c in classes]) & (H > 0)
        if not sel.any():
            continue
        r1 = lip2[sel] / H[sel]
        r2 = du2[sel] / H[sel]
        report.summary[name] = {
            "count": int(sel.sum()),
            "lip2_over_H_median": float(np.median(r1)),
            "lip2_over_H_p95": float(np.quantile(r1, 0.95)),
            "du2_over_H_median": float(np.median(r2)),
            "du2_over_H_p95": float(np.quantile(r2, 0.95)),
            "chain_fraction": report.chain_fraction(name),
        }
    return report


@dataclass(frozen=True)
class WuscVerdict:
    value: float
    radii: np.ndarray
    limsups: np.ndarray
    limsup: float
    wusc: bool


def wusc_probe(f, x, excluded=None, radii=None, tol=1e-12):
    """Compare ``f(x)`` with the sup of ``f`` over shrinking punctured Euclidean
    neighbourhoods that skip ``excluded`` nodes.

    The limsup is the linear extrapolation to ``r = 0`` of the sups at the two
    finest radii, so a continuous ``f`` is not penalised for its slope over
    the finest ball; piecewise constant data (equal sups) is read exactly.
    """
    grid = f.grid
    vals = f.flat
    pts = grid.points
    x = int(x)
    if radii is None:
        radii = grid.h * np.array([8.0, 4.0, 2.0])
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    keep = np.ones(grid.size, bool)
    if excluded is not None:
        keep &= ~np.asarray(excluded, bool).reshape(-1)
    keep[x] = False
    dist = np.linalg.norm(pts - pts[x], axis=1)
    sups = []
    for r in radii:
        sel = keep & (dist <= r + 1e-12 * grid.h)
        sups.append(float(vals[sel].max()) if sel.any() else -np.inf)
    sups = np.array(sups)
    limsup = float(sups[-1])
    if len(radii) > 1 and np.all(np.isfinite(sups[-2:])):
        r1, r2 = radii[-1], radii[-2]
        limsup -= float((sups[-2] - sups[-1]) * r1 / (r2 - r1))
    return WuscVerdict(float(vals[x]), radii, sups, limsup, bool(vals[x] >= limsup - tol))
