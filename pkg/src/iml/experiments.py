"""Config-driven studies that bind the library into reproducible runs.

Every run writes into a fresh directory ``<root>/<id>-<confighash>-<n>``
and finishes with ``summary.json``: headline numbers, pass flags, the
refinement trend and a sha256 for each emitted file. CSV outputs depend
only on the config, so repeated runs are byte-identical.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import ndimage

from .amle import AmleProblem, amle_solve, comparison_principle_check
from .blowup import blowup_report, rescale_identity_check
from .errors import ConfigurationError
from .fields import (DiffusionField, ScalarField, build_grid, gradient_central,
                     norris_mollify)
from .fractal import GapSequence, cantor_build, carpet_build
from .io import write_pgm, write_rows_csv
from .lipschitz import coincidence_report, hamiltonian_field, pointwise_lip
from .metric import (STENCIL_INFLATION, StencilGraph, curve_energy, distance_field, geodesic,
                     mollified_distance_sweep)

DEFAULT_ROOT = "iml-runs"
SECTIONS = ("grid", "fractal", "solver", "params")


def _frac(x):
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10 ** 6)


@dataclass
class ExperimentConfig:
    experiment: str
    grid: dict = field(default_factory=dict)
    fractal: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "experiment" not in data:
            raise ConfigurationError("config must be a JSON object with an 'experiment' key")
        extra = set(data) - {"experiment", "output", *SECTIONS}
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        for s in SECTIONS:
            if not isinstance(data.get(s, {}), dict):
                raise ConfigurationError(f"config section '{s}' must be an object")
        return cls(data["experiment"], *(dict(data.get(s, {})) for s in SECTIONS),
                   output=data.get("output"))

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self):
        out = {"experiment": self.experiment}
        out.update({s: getattr(self, s) for s in SECTIONS})
        if self.output is not None:
            out["output"] = self.output
        return out

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:10]

    def resolved(self):
        """Config with the experiment defaults filled in; unknown keys rejected."""
        entry = REGISTRY.get(self.experiment)
        if entry is None:
            raise ConfigurationError(
                f"unknown experiment {self.experiment!r}; choose from {sorted(REGISTRY)}")
        merged = {}
        for s in SECTIONS:
            base = copy.deepcopy(entry.defaults.get(s, {}))
            unknown = set(getattr(self, s)) - set(base)
            if unknown:
                raise ConfigurationError(
                    f"{self.experiment}: unknown {s} keys {sorted(unknown)}; "
                    f"allowed {sorted(base)}")
            base.update(getattr(self, s))
            merged[s] = base
        return merged


@dataclass
class ExperimentResult:
    experiment: str
    run_dir: Path
    tables: dict
    fields: dict
    summary: dict

    @property
    def checks(self):
        return self.summary["checks"]

    @property
    def passed(self):
        return all(self.checks.values())


class _Run:
    def __init__(self, run_dir):
        self.dir = Path(run_dir)
        self.tables = {}
        self.fields = {}

    def table(self, name, header, rows):
        self.tables[name] = write_rows_csv(self.dir / f"{name}.csv", header, rows)

    def pgm(self, name, f):
        self.fields[name] = write_pgm(f, self.dir / f"{name}.pgm")


@dataclass(frozen=True)
class _Experiment:
    func: object
    summary: str
    defaults: dict


REGISTRY = {}


def _register(name, summary, defaults):
    def deco(func):
        REGISTRY[name] = _Experiment(func, summary, defaults)
        return func
    return deco


def list_experiments():
    return [(k, REGISTRY[k].summary) for k in sorted(REGISTRY)]


def _check_common(cfg):
    g, f, s = cfg["grid"], cfg["fractal"], cfg["solver"]
    for key in ("resolutions",):
        if key in g:
            res = g[key]
            if not res or any(int(r) < 3 for r in res):
                raise ConfigurationError(f"grid.resolutions must be integers >= 3, got {res}")
    if "resolution" in g and int(g["resolution"]) < 3:
        raise ConfigurationError(f"grid.resolution must be >= 3, got {g['resolution']}")
    if "delta" in f and not 0 < float(f["delta"]) < 1:
        raise ConfigurationError(f"fractal.delta must lie in (0, 1), got {f['delta']}")
    if "stencil" in s and int(s["stencil"]) not in STENCIL_INFLATION:
        raise ConfigurationError(f"solver.stencil must be one of {sorted(STENCIL_INFLATION)}")
    if "tol" in s and not float(s["tol"]) > 0:
        raise ConfigurationError("solver.tol must be positive")


def validate(config):
    """Resolve defaults and check parameter ranges without running anything."""
    cfg = config.resolved()
    _check_common(cfg)
    f = cfg["fractal"]
    if "gap" in f:
        flavor = "sierpinski" if config.experiment in _CARPET else "cantor"
        depth = max(f.get("depths", [f.get("depth", 1)]))
        GapSequence.constant(_frac(f["gap"]), depth, flavor)
    if "q" in f:
        GapSequence.geometric(_frac(f["q"]), int(f["depth"]))
    if config.experiment in _CARPET:
        depth = max(f.get("depths", [f.get("depth", 1)]))
        carpet = carpet_build(GapSequence.constant(_frac(f["gap"]), depth, "sierpinski"),
                              2, depth)
        g = cfg["grid"]
        for res in g.get("resolutions", [g.get("resolution")]):
            carpet.check_alignment(build_grid(2, (0.0, 1.0), int(res)))
    return cfg


def output_root(config):
    env = os.environ.get("IML_OUT")
    if env:
        return Path(env)
    return Path(config.output) if config.output else Path(DEFAULT_ROOT)


def _fresh_dir(root, stem):
    root.mkdir(parents=True, exist_ok=True)
    n = 1
    while True:
        d = root / f"{stem}-{n}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            n += 1


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


def run(config):
    """Execute one experiment and return its :class:`ExperimentResult`."""
    cfg = validate(config)
    entry = REGISTRY[config.experiment]
    run_dir = _fresh_dir(output_root(config), f"{config.experiment}-{config.digest()}")
    out = _Run(run_dir)
    t0 = time.perf_counter()
    body = entry.func(cfg, out)
    elapsed = time.perf_counter() - t0
    files = {p.name: _sha256(p) for p in [*out.tables.values(), *out.fields.values()]}
    for p in out.fields.values():
        side = p.with_name(p.name + ".txt")
        files[side.name] = _sha256(side)
    summary = {
        "experiment": config.experiment,
        "claim": entry.summary,
        "config": cfg,
        "headline": body["headline"],
        "checks": body["checks"],
        "passed": all(body["checks"].values()),
        "trend": body["trend"],
        "exploratory": body.get("exploratory", False),
        "runtime_seconds": round(elapsed, 3),
        "files": dict(sorted(files.items())),
    }
    summary = _jsonable(summary)
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return ExperimentResult(config.experiment, run_dir, dict(out.tables), dict(out.fields),
                            summary)


# --- experiment bodies ---------------------------------------------------

def _trend(out, header, rows):
    out.table("trend", header, rows)
    return [dict(zip(header, r)) for r in rows]


def cantor_corner(q, depth):
    """Right endpoint of the first depth-``depth`` interval of ``C_a`` with ``a_j = q^j``."""
    C = cantor_build(GapSequence.geometric(_frac(q), depth), depth)
    left, length = C.intervals[0]
    return C, left + length


@_register("cantor-line",
           "Fat Cantor coefficient: graph distance along e1 from a Cantor node tends to "
           "the Euclidean one, so Lip^2 / H stays near 1/(1-delta) there",
           {"grid": {"resolutions": [65, 129, 257], "window": 0.014},
            "fractal": {"q": "1/3", "depth": 4, "delta": 0.5},
            "solver": {"stencil": 16},
            "params": {"lip_radii_h": [64, 48, 32], "max_ratio": 1.06, "min_lip2_over_h": 1.7}})
def cantor_line(cfg, out):
    g, f, s, p = cfg["grid"], cfg["fractal"], cfg["solver"], cfg["params"]
    C, corner = cantor_corner(f["q"], int(f["depth"]))
    x = float(corner)
    W = float(g["window"])
    delta = float(f["delta"])
    rows, trend = [], []
    lip2_h = None
    for res in g["resolutions"]:
        res = int(res)
        if res % 2 == 0:
            raise ConfigurationError(f"cantor-line needs odd resolutions so x is a node, got {res}")
        grid = build_grid(2, [(x - W / 2, x + W / 2)] * 2, res)
        E = C.rasterize(grid)
        A = DiffusionField.indicator(E, delta)
        graph = StencilGraph(A, int(s["stencil"]))
        src = grid.node_index(((res - 1) // 2, (res - 1) // 2))
        dist, _ = graph.shortest_paths([src])
        for k in range(1, (res - 1) // 2 + 1):
            y = grid.node_index(((res - 1) // 2 + k, (res - 1) // 2))
            rows.append((res, k, k * grid.h, float(dist[y]), float(dist[y] / (k * grid.h))))
        k4 = (res - 1) // 4
        y4 = grid.node_index(((res - 1) // 2 + k4, (res - 1) // 2))
        ratio = float(dist[y4] / (k4 * grid.h))
        u = ScalarField.from_function(grid, lambda a, b: a)
        H = hamiltonian_field(A, u).flat[src]
        radii = grid.h * np.asarray(p["lip_radii_h"], dtype=float)
        lip = pointwise_lip(u, graph, src, radii).limsup
        lip2_h = lip ** 2 / H
        trend.append((res, grid.h, W / 4, ratio, lip, float(H), lip2_h))
        last = (grid, E, dist)
    out.table("cantor_line", ["resolution", "k", "distance_euclid", "distance_graph", "ratio"],
              rows)
    grid, E, dist = last
    out.pgm("indicator", E)
    out.pgm("distance", ScalarField(grid, dist.reshape(grid.shape)))
    ratios = [t[3] for t in trend]
    checks = {
        "ratio_strictly_decreasing": bool(all(b < a for a, b in zip(ratios, ratios[1:]))),
        "ratio_finest_below_max": bool(ratios[-1] <= float(p["max_ratio"])),
        "lip2_over_H_at_cantor_node": bool(lip2_h >= float(p["min_lip2_over_h"])),
    }
    trend = _trend(out, ["resolution", "h", "s", "ratio", "lip", "H", "lip2_over_H"], trend)
    return {"headline": {"cantor_node": [x, x], "ratios": ratios, "lip2_over_H": lip2_h,
                         "target": 1 / (1 - delta)},
            "checks": checks, "trend": trend}


_CARPET = {"carpet-coincidence", "mollify-sweep", "non-c1-probe"}


def carpet_good_node(grid, carpet):
    """Node of the precarpet farthest from every removed cube (faces of the square excluded)."""
    inside = carpet.rasterize(grid).values > 0.5
    gap = ndimage.distance_transform_edt(inside) * grid.h
    for ax in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[ax] = [0, -1]
        gap[tuple(idx)] = 0.0
    i = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return grid.node_index(i), float(gap[i])


@_register("carpet-coincidence",
           "Carpet coefficient: near a node far from every removed cube the small-ball "
           "ratio d/|x-y| approaches 1/sqrt(1-delta) as the precarpet deepens",
           {"grid": {"resolution": 244, "coincidence_resolution": 82},
            "fractal": {"gap": "1/3", "depths": [1, 2, 3], "delta": 0.75},
            "solver": {"stencil": 16},
            "params": {"ring_fractions": [0.25, 0.5, 0.75], "min_ratio": 1.45,
                       "coincidence_radii_h": [2, 3, 4], "max_per_class": 60}})
def carpet_coincidence(cfg, out):
    g, f, s, p = cfg["grid"], cfg["fractal"], cfg["solver"], cfg["params"]
    depths = [int(m) for m in f["depths"]]
    delta = float(f["delta"])
    grid = build_grid(2, (0.0, 1.0), int(g["resolution"]))
    deepest = carpet_build(GapSequence.constant(_frac(f["gap"]), max(depths), "sierpinski"),
                           2, max(depths))
    deepest.check_alignment(grid)
    x, clearance = carpet_good_node(grid, deepest)
    r = np.linalg.norm(grid.points - grid.coordinates(x), axis=1)
    rows, trend = [], []
    for m in depths:
        carpet = carpet_build(GapSequence.constant(_frac(f["gap"]), m, "sierpinski"), 2, m)
        A = DiffusionField.indicator(carpet.rasterize(grid), delta)
        dist, _ = StencilGraph(A, int(s["stencil"])).shortest_paths([x])
        per_ring = []
        for frac in p["ring_fractions"]:
            rad = clearance * float(frac)
            ring = (r >= rad) & (r < rad + 1.5 * grid.h)
            ratio = float((dist[ring] / r[ring]).min())
            rows.append((m, float(frac), rad, int(ring.sum()), ratio))
            per_ring.append(ratio)
        trend.append((m, *per_ring))
    out.table("carpet_ratio", ["depth", "ring_fraction", "radius", "ring_nodes", "min_ratio"],
              rows)
    small = [t[1] for t in trend]
    # coincidence classes at the deepest level on a coarser grid
    cg = build_grid(2, (0.0, 1.0), int(g["coincidence_resolution"]))
    deepest.check_alignment(cg)
    E = deepest.rasterize(cg)
    A = DiffusionField.indicator(E, delta)
    u = ScalarField.from_function(cg, lambda a, b: a + 0.5 * b)
    # radii count lattice steps on the carpet, where one step has length h/sqrt(1-delta)
    radii = cg.h / np.sqrt(1 - delta) * np.asarray(p["coincidence_radii_h"], dtype=float)
    collar = deepest.face_collar(cg, width=1)
    interior = np.zeros(cg.shape, bool)
    interior[4:-4, 4:-4] = True
    onE = (E.values > 0.5) & interior
    classes = {"carpet": onE & ~collar, "hole": ~(E.values > 0.5) & interior & ~collar,
               "collar": collar & interior}
    rep = coincidence_report(A, u, classes, radii, int(s["stencil"]),
                             max_per_class=int(p["max_per_class"]))
    out.table("coincidence", ["node", "class", "H", "lip2", "du2"], rep.rows())
    out.pgm("indicator", E)
    checks = {
        "ratio_increases_with_depth": bool(all(b > a for a, b in zip(small, small[1:]))),
        "ratio_deepest_above_min": bool(small[-1] > float(p["min_ratio"])),
    }
    trend = _trend(out, ["depth"] + [f"ring_{fr}" for fr in p["ring_fractions"]], trend)
    return {"headline": {"node": grid.coordinates(x).tolist(), "clearance": clearance,
                         "small_ring_ratios": small, "target": 1 / np.sqrt(1 - delta),
                         "coincidence": rep.summary},
            "checks": checks, "trend": trend}


@_register("eikonal",
           "Graph distance from the centre solves the eikonal equation H(x, grad d) = 1 "
           "up to a residual that shrinks under refinement",
           {"grid": {"resolutions": [129, 257], "length": 6.283185307179586},
            "solver": {"stencil": 32},
            "params": {"amplitude": 0.5, "exclude_h": 4, "thresholds": [0.08, 0.05]}})
def eikonal(cfg, out):
    g, s, p = cfg["grid"], cfg["solver"], cfg["params"]
    L = float(g["length"])
    amp = float(p["amplitude"])
    trend = []
    for res in g["resolutions"]:
        grid = build_grid(2, (0.0, L), int(res))
        A = DiffusionField.from_function(grid, lambda a, b: 1 + amp * np.sin(a))
        src = grid.nearest_node((L / 2, L / 2))
        df = distance_field(A, src, int(s["stencil"]))
        H = hamiltonian_field(A, df.as_scalar_field()).flat
        far = np.linalg.norm(grid.points - grid.coordinates(src), axis=1) >= float(p["exclude_h"]) * grid.h
        resid = np.abs(H[far] - 1)
        trend.append((int(res), grid.h, float(np.median(resid)), float(np.quantile(resid, 0.95))))
        last = (grid, df, H)
    grid, df, H = last
    out.pgm("distance", df.as_scalar_field())
    out.pgm("residual", ScalarField(grid, np.abs(H - 1).reshape(grid.shape)))
    med = [t[2] for t in trend]
    thr = [float(t) for t in p["thresholds"]]
    checks = {f"median_below_{t}_at_{row[0]}": bool(row[2] <= t) for row, t in zip(trend, thr)}
    checks["median_decreasing"] = bool(all(b < a for a, b in zip(med, med[1:])))
    trend = _trend(out, ["resolution", "h", "median_residual", "p95_residual"], trend)
    return {"headline": {"median_residual": med}, "checks": checks, "trend": trend}


def _boundary_data(kind, grid):
    if kind == "affine":
        return ScalarField.from_function(grid, lambda a, b: a)
    if kind == "aronsson":
        return ScalarField.from_function(
            grid, lambda a, b: np.abs(a - 0.5) ** (4 / 3) - np.abs(b - 0.5) ** (4 / 3))
    if kind == "cone":
        return ScalarField.from_function(grid, lambda a, b: np.hypot(a + 0.25, b + 0.25))
    raise ConfigurationError(f"unknown boundary data {kind!r}; use affine, aronsson or cone")


def _coefficient(kind, grid):
    if kind == "identity":
        return DiffusionField.identity(grid)
    if kind == "conformal":
        return DiffusionField.from_function(grid, lambda a, b: 1 + 0.5 * np.sin(3 * a) * np.cos(2 * b))
    raise ConfigurationError(f"unknown coefficient {kind!r}; use identity or conformal")


@_register("amle-uniqueness",
           "Midrange fixed points do not depend on the initial guess, are ordered like "
           "their boundary data and pass the cone, boundary-Lip and slope audits",
           {"grid": {"resolutions": [33, 65]},
            "solver": {"stencil": 16, "tol": 1e-9, "r": None},
            "params": {"data": "affine", "coefficient": "identity", "shift": 0.1,
                       "affine_tol": 1e-3, "init_tol": 1e-6, "certify": True}})
def amle_uniqueness(cfg, out):
    g, s, p = cfg["grid"], cfg["solver"], cfg["params"]
    trend, cert_rows = [], []
    checks = {}
    for res in g["resolutions"]:
        grid = build_grid(2, (0.0, 1.0), int(res))
        A = _coefficient(p["coefficient"], grid)
        f = _boundary_data(p["data"], grid)
        prob = AmleProblem(A, f, r=s["r"], tol=float(s["tol"]), stencil=int(s["stencil"]))
        t0 = time.perf_counter()
        up = amle_solve(prob, "upper")
        lo = amle_solve(prob, "lower")
        secs = time.perf_counter() - t0
        gap = float(np.abs(up.u.flat - lo.u.flat).max())
        sandwich = float(max((up.u.flat - up.upper.flat).max(), (up.lower.flat - up.u.flat).max()))
        g_shift = ScalarField(grid, f.values + float(p["shift"]) * (1 + grid.mesh()[1]))
        ug = amle_solve(AmleProblem(A, g_shift, r=s["r"], tol=float(s["tol"]),
                                    stencil=int(s["stencil"])))
        inner, edge, diff = comparison_principle_check(up.u, ug.u, np.ones(grid.size, bool))
        err = float(np.abs(up.u.flat - f.flat).max()) if p["data"] == "affine" else float("nan")
        trend.append((int(res), grid.h, prob.r, up.iterations, gap, err, sandwich, diff))
        checks[f"init_agreement_{res}"] = bool(gap <= float(p["init_tol"]))
        checks[f"comparison_{res}"] = bool(diff <= 1e-6)
        if p["data"] == "affine":
            checks[f"affine_error_{res}"] = bool(err <= float(p["affine_tol"]))
        if p["certify"]:
            V = np.zeros(grid.shape, bool)
            q = (int(res) - 1) // 4
            V[q:-q, q:-q] = True
            for c in up.certify(V):
                checks[f"{c.check}_{res}"] = c.passed
                cert_rows.append((int(res), c.check, c.margin, c.passed,
                                  -1 if c.witness is None else c.witness))
        last = (grid, up)
        del secs
    grid, up = last
    out.pgm("solution", up.u)
    if cert_rows:
        out.table("certification", ["resolution", "check", "margin", "passed", "witness"],
                  cert_rows)
    trend = _trend(out, ["resolution", "h", "r", "sweeps", "init_gap", "affine_error",
                         "sandwich_violation", "comparison_excess"], trend)
    return {"headline": {"init_gap": [t["init_gap"] for t in trend],
                         "certification": up.certification and [c.as_dict() for c in up.certification]},
            "checks": checks, "trend": trend}


def _line_budget(grad_norm, grid):
    """Trapezoid integral of ``|grad u|`` along every horizontal grid line."""
    return np.trapz(grad_norm, dx=grid.spacing[0], axis=0)


@_register("non-c1-probe",
           "Exploratory: the minimizer for data x1 under a carpet coefficient keeps "
           "|grad u| <= Lip(f)/(1-delta) yet must spend a unit budget along every line",
           {"grid": {"resolution": 82},
            "fractal": {"gap": "1/3", "depth": 2, "delta": 0.5},
            "solver": {"stencil": 16, "tol": 1e-9, "r": None},
            "params": {"bound_slack": 0.06, "budget_slack": 0.05}})
def non_c1_probe(cfg, out):
    g, f, s, p = cfg["grid"], cfg["fractal"], cfg["solver"], cfg["params"]
    if int(f["depth"]) < 2:
        raise ConfigurationError("non-c1-probe needs carpet depth >= 2")
    delta = float(f["delta"])
    grid = build_grid(2, (0.0, 1.0), int(g["resolution"]))
    carpet = carpet_build(GapSequence.constant(_frac(f["gap"]), int(f["depth"]), "sierpinski"),
                          2, int(f["depth"]))
    carpet.check_alignment(grid)
    E = carpet.rasterize(grid)
    A = DiffusionField.indicator(E, delta)
    data = ScalarField.from_function(grid, lambda a, b: a)
    sol = amle_solve(AmleProblem(A, data, r=s["r"], tol=float(s["tol"]),
                                 stencil=int(s["stencil"])))
    gn = gradient_central(sol.u).norm().values
    onE = E.values > 0.5
    collar = carpet.face_collar(grid, width=1)
    qs = [0.05, 0.25, 0.5, 0.75, 0.95]
    rows = []
    for name, mask in (("on_carpet", onE & ~collar), ("off_carpet", ~onE & ~collar),
                       ("collar", collar)):
        vals = gn[mask]
        rows.append((name, int(mask.sum()), *[float(np.quantile(vals, q)) for q in qs]))
    out.table("gradient_quantiles", ["class", "nodes"] + [f"q{q}" for q in qs], rows)
    budget = _line_budget(gn, grid)
    out.table("line_budget", ["x2", "integral_grad_norm"],
              [(float(y), float(b)) for y, b in zip(grid.axes[1], budget)])
    out.pgm("solution", sol.u)
    out.pgm("grad_norm", ScalarField(grid, gn))
    bound = (1 + float(p["bound_slack"])) / (1 - delta)
    checks = {
        "gradient_bound": bool(gn.max() <= bound),
        "line_budget": bool(budget.min() >= 1 - float(p["budget_slack"])),
        "on_carpet_gradient_positive": bool(rows[0][2] > 0),
    }
    trend = _trend(out, ["resolution", "h", "max_grad", "min_budget", "on_carpet_median"],
                   [(int(g["resolution"]), grid.h, float(gn.max()), float(budget.min()),
                     rows[0][4])])
    return {"headline": {"max_grad": float(gn.max()), "bound": bound,
                         "min_line_budget": float(budget.min()), "sweeps": sol.iterations},
            "checks": checks, "trend": trend, "exploratory": True}


def aronsson(x, y):
    """``x^{4/3} - y^{4/3}`` extended oddly in each variable."""
    return np.sign(x) * np.abs(x) ** (4 / 3) - np.sign(y) * np.abs(y) ** (4 / 3)


@_register("blowup",
           "Rescalings of a differentiable minimizer converge to a linear map with "
           "H(x, e) matching the squared pointwise Lipschitz constant; distances rescale exactly",
           {"grid": {"window_res": 33},
            "params": {"center": [1.0, 1.0], "j": [2, 3, 4, 5, 6], "max_residual": 0.05,
                       "e_rel_tol": 0.05, "identity_center": [0.3, 0.2],
                       "identity_radius": 0.125}})
def blowup(cfg, out):
    g, p = cfg["grid"], cfg["params"]
    x = np.asarray(p["center"], dtype=float)
    radii = 2.0 ** -np.asarray(p["j"], dtype=float)
    rep = blowup_report(aronsson, lambda pts: np.ones(len(pts)), x, radii,
                        int(g["window_res"]))
    rep.write_csv(out.dir / "blowup.csv")
    out.tables["blowup"] = out.dir / "blowup.csv"
    exact = np.array([4 / 3 * np.cbrt(x[0]), -4 / 3 * np.cbrt(x[1])])
    e = np.asarray(rep.rows[-1]["e"])
    best = rep.best_residuals
    pairs = [((0.0, 0.0), (1.0, 0.0)), ((-1.0, -1.0), (1.0, 0.5)), ((0.25, -0.5), (0.0, 1.0))]
    c = float(p["identity_radius"])
    xi = np.asarray(p["identity_center"], dtype=float)
    const = rescale_identity_check(lambda pts: np.full(len(pts), 2.0), xi, c, pairs,
                                   int(g["window_res"]))
    conf = rescale_identity_check(lambda pts: 1 + (pts ** 2).sum(axis=1), xi, c, pairs,
                                  int(g["window_res"]))
    out.table("rescale_identity", ["coefficient", "y", "z", "r_dj", "dA", "rel_error"],
              [(name, str(row[0]), str(row[1]), row[2], row[3], row[4])
               for name, chk in (("constant", const), ("conformal", conf)) for row in chk.rows])
    checks = {
        "best_residual_decreasing": bool(np.all(np.diff(best) < 0)),
        "final_residual": bool(best[-1] <= float(p["max_residual"])),
        "gradient_match": bool(np.linalg.norm(e - exact) <= float(p["e_rel_tol"]) * np.linalg.norm(exact)),
        "identity_constant_exact": bool(const.max_rel_error == 0.0),
        "identity_conformal": bool(conf.max_rel_error <= 1e-12),
    }
    trend = _trend(out, ["r", "residual", "best_residual", "H", "lip2"],
                   [(r["r"], r["residual"], r["best_residual"], r["H"], r["lip2"])
                    for r in rep.rows])
    return {"headline": {"e": e.tolist(), "exact": exact.tolist(), "supports": rep.supports,
                         "identity_errors": [const.max_rel_error, conf.max_rel_error]},
            "checks": checks, "trend": trend}


@_register("mollify-sweep",
           "Distances under mollified carpet coefficients settle as the mollifier "
           "scale shrinks, with the weight pinned between 1 and 1/(1-delta)",
           {"grid": {"resolutions": [82, 163, 325]},
            "fractal": {"gap": "1/3", "depth": 2, "delta": 0.5},
            "solver": {"stencil": 16},
            "params": {"t_h": [8, 4, 2], "pair": [[0.0, 0.5], [1.0, 0.5]],
                       "max_variation": 0.02}})
def mollify_sweep(cfg, out):
    g, f, s, p = cfg["grid"], cfg["fractal"], cfg["solver"], cfg["params"]
    delta = float(f["delta"])
    carpet = carpet_build(GapSequence.constant(_frac(f["gap"]), int(f["depth"]), "sierpinski"),
                          2, int(f["depth"]))
    rows, trend, energy_rows = [], [], []
    bounds_ok = True
    for res in g["resolutions"]:
        grid = build_grid(2, (0.0, 1.0), int(res))
        carpet.check_alignment(grid)
        E = carpet.rasterize(grid)
        a, b = (grid.nearest_node(q) for q in p["pair"])
        ts = [float(k) * grid.h for k in p["t_h"]]
        sweep = mollified_distance_sweep(E, delta, ts, (a, b), int(s["stencil"]))
        for t, d in sweep:
            weight, A_t = norris_mollify(E, delta, t)
            lo, hi = float(weight.values.min()), float(weight.values.max())
            bounds_ok &= lo >= 1.0 and hi <= 1.0 / (1.0 - delta)
            rows.append((int(res), t, d, lo, hi))
        ds = [d for _, d in sweep]
        trend.append((int(res), grid.h, *ds, (max(ds) - min(ds)) / min(ds)))
        weight, A_t = norris_mollify(E, delta, ts[-1])
        df = distance_field(A_t, a, int(s["stencil"]))
        path = geodesic(df, b)
        energy, length = curve_energy(weight, path, subdivisions=4)
        energy_rows.append((int(res), ts[-1], ds[-1], length, energy))
        last = (E, weight)
    out.table("mollified_distance", ["resolution", "t", "distance", "weight_min", "weight_max"],
              rows)
    out.table("geodesic_energy", ["resolution", "t", "distance", "curve_length",
                                  "curve_energy"], energy_rows)
    E, weight = last
    out.pgm("indicator", E)
    out.pgm("weight", weight)
    variation = trend[-1][-1]
    checks = {"weight_bounds": bool(bounds_ok),
              "variation_finest": bool(variation <= float(p["max_variation"]))}
    header = ["resolution", "h"] + [f"d_{k}h" for k in p["t_h"]] + ["variation"]
    trend = _trend(out, header, trend)
    return {"headline": {"variation": [t["variation"] for t in trend]},
            "checks": checks, "trend": trend}
