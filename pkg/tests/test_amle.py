import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iml.amle import (AmleProblem, amle_solve, ball_extrema, boundary_lip_check, cone,
                      cone_comparison_check, comparison_principle_check, grid_boundary,
                      mcshane_lower, mcshane_upper, slope_monotonicity_check, slope_ops)
from iml.errors import ConvergenceError, ResolutionError, ValidationError
from iml.fields import DiffusionField, ScalarField, build_grid
from iml.lipschitz import hamiltonian_field, pointwise_lip
from iml.metric import STENCIL_INFLATION, StencilGraph, distance_field

SLACK = STENCIL_INFLATION[16]


@pytest.fixture(scope="module")
def plane():
    g = build_grid(2, (0.0, 1.0), 21)
    A = DiffusionField.identity(g)
    return g, A, StencilGraph(A)


def _square(g, lo, hi):
    X, Y = g.mesh()
    return (X >= lo - 1e-12) & (X <= hi + 1e-12) & (Y >= lo - 1e-12) & (Y <= hi + 1e-12)


# --- McShane ---------------------------------------------------------------

def test_mcshane_single_point(plane):
    g, A, graph = plane
    z = g.node_index((5, 7))
    up = mcshane_upper([3.0], [z], 2.0, graph)
    assert np.allclose(up.flat, 3.0 + 2.0 * distance_field(A, z).flat, atol=1e-14)


def test_mcshane_two_points(plane):
    g, _, graph = plane
    S = [g.node_index((0, 0)), g.node_index((20, 0))]
    mid = g.node_index((10, 0))
    up = mcshane_upper([0.0, 1.0], S, 1.0, graph)
    lo = mcshane_lower([0.0, 1.0], S, 1.0, graph)
    assert up[mid] == pytest.approx(0.5) and lo[mid] == pytest.approx(0.5)


def test_mcshane_rejects_small_l(plane):
    g, _, graph = plane
    S = [g.node_index((0, 0)), g.node_index((20, 0))]
    with pytest.raises(ValidationError, match=f"{S[0]} and {S[1]}"):
        mcshane_upper([0.0, 1.0], S, 0.5, graph)


@given(st.integers(0, 10 ** 6))
def test_mcshane_envelopes(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(2, (0.0, 1.0), 9)
    A = DiffusionField.from_scale(g, rng.uniform(0.5, 2.0, g.shape))
    graph = StencilGraph(A)
    S = rng.choice(g.size, 6, replace=False)
    fv = rng.normal(size=6)
    D = np.stack([graph.shortest_paths([s])[0] for s in S])
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.nanmax(np.abs(fv[:, None] - fv[None, :]) / D[:, S])
    up = mcshane_upper(fv, S, L, graph)
    lo = mcshane_lower(fv, S, L, graph)
    assert np.all(lo.flat <= up.flat + 1e-12)
    assert np.allclose(up.flat[S], fv) and np.allclose(lo.flat[S], fv)
    full = np.stack([graph.shortest_paths([i])[0] for i in range(g.size)])
    for env in (up, lo):
        dv = np.abs(env.flat[:, None] - env.flat[None, :])
        assert np.all(dv <= L * full + 1e-9)


# --- ball extrema and slopes ------------------------------------------------

def test_ball_extrema_affine_and_constant(plane):
    g, A, graph = plane
    u = ScalarField.from_function(g, lambda x, y: x)
    ext = ball_extrema(u, graph, 0.1)
    ok = ext.usable
    assert np.allclose((ext.upper.values - u.values)[ok], 0.1, atol=0.1 * (1 - 1 / SLACK))
    assert np.allclose((u.values - ext.lower.values)[ok], 0.1, atol=0.1 * (1 - 1 / SLACK))
    c = ScalarField(g, np.full(g.shape, 1.5))
    ext = ball_extrema(c, graph, 0.1)
    assert np.all(ext.upper.values == 1.5) and np.all(ext.lower.values == 1.5)


def test_ball_extrema_of_distance(plane):
    g, A, graph = plane
    d = distance_field(A, 0).as_scalar_field()
    ext = ball_extrema(d, graph, 0.1)
    X, Y = g.mesh()
    away = ext.usable & (np.hypot(X, Y) > 0.2)
    assert np.allclose(ext.upper.values[away], d.values[away] + 0.1, atol=1e-12)


def test_ball_extrema_resolution_error(plane):
    g, _, graph = plane
    with pytest.raises(ResolutionError):
        ball_extrema(ScalarField(g, np.zeros(g.shape)), graph, 0.5 * g.h)


def test_slope_examples(plane):
    g, A, graph = plane
    r = 3 * g.h
    sp, sm = slope_ops(ScalarField.from_function(g, lambda x, y: x), graph, r)
    inner = (slice(3, -3), slice(3, -3))
    assert np.all(sp.values[inner] >= 1 / SLACK - 1e-12) and np.all(sp.values[inner] <= 1 + 1e-12)
    sp, sm = slope_ops(ScalarField(g, np.ones(g.shape)), graph, r)
    assert np.all(sp.values == 0) and np.all(sm.values == 0)
    sp, _ = slope_ops(distance_field(A, 0).as_scalar_field(), graph, r)
    assert np.allclose(sp.values[5:-4, 5:-4], 1.0, atol=1e-12)


@given(st.integers(0, 10 ** 6))
def test_update_monotone(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(2, (0.0, 1.0), 11)
    graph = StencilGraph(DiffusionField.from_scale(g, rng.uniform(0.5, 2.0, g.shape)))
    u = rng.normal(size=g.shape)
    v = u + rng.uniform(0.0, 1.0, g.shape)

    def step(w):
        ext = ball_extrema(ScalarField(g, w), graph, 2.5 * g.h)
        return 0.5 * (ext.upper.values + ext.lower.values)

    assert np.all(step(u) <= step(v) + 1e-12)


# --- solver -------------------------------------------------------------------

def test_problem_validation(plane):
    g, A, _ = plane
    f = ScalarField.from_function(g, lambda x, y: x)
    p = AmleProblem(A, f)
    assert p.r == pytest.approx(max(3 * g.h, np.sqrt(2) / 32))
    assert p.boundary.sum() == 4 * 20 and p.interior.sum() == 19 * 19
    with pytest.raises(ResolutionError):
        AmleProblem(A, f, r=g.h)
    with pytest.raises(ValidationError):
        AmleProblem(A, f, closure=np.zeros(g.shape, bool))


def test_affine_exact(plane):
    g, A, _ = plane
    f = ScalarField.from_function(g, lambda x, y: x)
    sol = amle_solve(AmleProblem(A, f))
    assert np.abs(sol.u.values - f.values).max() <= 1e-12


def test_oblique_affine_first_order():
    # long stencil edges are cut at the grid faces, so oblique planes carry an O(h) layer error
    errs = []
    for res in (21, 41):
        g = build_grid(2, (0.0, 1.0), res)
        f = ScalarField.from_function(g, lambda x, y: 0.3 * x - 0.7 * y)
        sol = amle_solve(AmleProblem(DiffusionField.identity(g), f))
        errs.append(np.abs(sol.u.values - f.values).max())
    assert errs[1] < 0.6 * errs[0] and errs[0] < 0.2 * g.h * 2


def test_cone_data_recovered():
    g = build_grid(2, (0.0, 1.0), 41)
    A = DiffusionField.identity(g)
    d = distance_field(A, 0)
    closure = _square(g, 0.25, 1.0)
    sol = amle_solve(AmleProblem(A, ScalarField(g, 2.0 + 1.5 * d.values), closure=closure))
    assert np.abs(sol.u.values - (2.0 + 1.5 * d.values))[closure].max() <= 1e-9


@pytest.fixture(scope="module")
def aronsson33():
    g = build_grid(2, (0.0, 1.0), 33)
    A = DiffusionField.identity(g)
    f = ScalarField.from_function(g, lambda x, y: np.abs(x - 0.5) ** (4 / 3) - np.abs(y - 0.5) ** (4 / 3))
    return AmleProblem(A, f)


def test_initialisations_agree(aronsson33):
    up = amle_solve(aronsson33, "upper")
    lo = amle_solve(aronsson33, "lower")
    assert np.abs(up.u.values - lo.u.values).max() <= 1e-6


def test_sandwich_and_boundary(aronsson33):
    sol = amle_solve(aronsson33)
    assert np.all(sol.lower.flat <= sol.u.flat) and np.all(sol.u.flat <= sol.upper.flat)
    b = aronsson33.boundary
    assert np.array_equal(sol.u.flat[b], aronsson33.data[b])
    assert sol.final_update <= aronsson33.tol


def test_deterministic(aronsson33):
    a, b = amle_solve(aronsson33), amle_solve(aronsson33)
    assert np.array_equal(a.u.values, b.u.values) and a.iterations == b.iterations


def test_convergence_error_has_history(aronsson33):
    p = AmleProblem(aronsson33.A, aronsson33.f, max_iter=20)
    with pytest.raises(ConvergenceError) as info:
        amle_solve(p, history_every=4)
    hist = info.value.history
    assert len(hist) >= 5 and hist[-1] > p.tol


def test_comparison_principle(aronsson33):
    g = aronsson33.grid
    full = np.ones(g.size, bool)
    u = amle_solve(aronsson33).u
    assert comparison_principle_check(u, u, full) == (0.0, 0.0, 0.0)
    v = ScalarField(g, u.values + 0.3)
    inner, edge, diff = comparison_principle_check(u, v, full)
    assert inner == pytest.approx(-0.3) and edge == pytest.approx(-0.3)
    X, Y = g.mesh()
    gdata = ScalarField(g, aronsson33.f.values + 0.2 * (1 + np.sin(5 * X) ** 2))
    ug = amle_solve(AmleProblem(aronsson33.A, gdata)).u
    _, _, diff = comparison_principle_check(u, ug, full)
    assert diff <= 1e-6


# --- certificates ---------------------------------------------------------------

def test_cone_check_passes_on_affine_and_cone(plane):
    g, A, graph = plane
    V = _square(g, 0.25, 0.75)
    aff = cone_comparison_check(ScalarField.from_function(g, lambda x, y: x - y), V, graph)
    assert aff.passed and aff.margin >= -1e-9
    c = cone(distance_field(A, 0), 1.0, 0.5)
    cert = cone_comparison_check(ScalarField(g, c.values), V, graph)
    assert cert.passed


def test_cone_check_catches_square(plane):
    g, _, graph = plane
    V = _square(g, 0.25, 0.75)
    cert = cone_comparison_check(ScalarField.from_function(g, lambda x, y: x ** 2), V, graph)
    assert not cert.passed and cert.margin < 0
    assert V.reshape(-1)[cert.witness]


def test_cone_check_rejects_inner_apex(plane):
    g, _, graph = plane
    V = _square(g, 0.25, 0.75)
    with pytest.raises(ValidationError):
        cone_comparison_check(ScalarField(g, np.zeros(g.shape)), V, graph,
                              apexes=[g.node_index((10, 10))])


def test_boundary_lip_examples(plane):
    g, _, graph = plane
    # on a square the steepest slope of x^2 sits on a face, so use a diamond
    X, Y = g.mesh()
    V = np.abs(X - 0.5) + np.abs(Y - 0.5) <= 0.25 + 1e-12
    sq = boundary_lip_check(ScalarField.from_function(g, lambda x, y: x ** 2), V, graph)
    assert sq.detail["lip_V"] > sq.detail["lip_boundary"] and sq.margin > 0
    const = boundary_lip_check(ScalarField(g, np.ones(g.shape)), V, graph)
    assert const.margin == 0.0 and const.passed


def test_certify_affine_solution(plane):
    g, A, _ = plane
    sol = amle_solve(AmleProblem(A, ScalarField.from_function(g, lambda x, y: x)))
    certs = sol.certify(_square(g, 0.25, 0.75))
    assert all(c.passed for c in certs)
    data = json.loads(sol.certification_json())
    assert [d["check"] for d in data] == ["cone-comparison", "boundary-lip", "slope-monotonicity"]


def test_slope_monotone_on_cone(plane):
    g, A, graph = plane
    d = distance_field(A, 0).as_scalar_field()
    X, Y = g.mesh()
    nodes = np.flatnonzero(((np.hypot(X, Y) > 0.45) & (X < 0.8) & (Y < 0.8)).reshape(-1))
    cert = slope_monotonicity_check(d, graph, g.h * np.array([2.0, 3.0, 4.0]), nodes=nodes)
    assert cert.passed and cert.margin == 1.0


def test_esssup_identity_surrogate(plane):
    # on a metric ball, max sqrt(H) and max pointwise Lip agree up to stencil slack
    g, A, graph = plane
    u = ScalarField.from_function(g, lambda x, y: 0.5 * x ** 2 + y)
    H = hamiltonian_field(A, u).flat
    centre = g.node_index((10, 10))
    nodes, _ = graph.ball(centre, 0.2)
    radii = g.h * np.array([2.0, 3.0, 4.0])
    lips = [pointwise_lip(u, graph, x, radii).limsup for x in nodes]
    a, b = np.sqrt(H[nodes]).max(), max(lips)
    assert abs(a - b) <= (SLACK - 1) * a + 4 * g.h


def test_exports(tmp_path, plane):
    g, A, _ = plane
    sol = amle_solve(AmleProblem(A, ScalarField.from_function(g, lambda x, y: y)))
    assert sol.write_csv(tmp_path / "u.csv").exists()
    assert sol.write_pgm(tmp_path / "u.pgm").exists()
    sol.certify(_square(g, 0.25, 0.75))
    sol.certification_json(tmp_path / "cert.json")
    assert json.loads((tmp_path / "cert.json").read_text())[0]["passed"]


def test_grid_boundary_of_subset(plane):
    g, _, _ = plane
    V = _square(g, 0.25, 0.75)
    b = grid_boundary(g, V)
    assert b.sum() == 4 * 10 and np.all(V.reshape(-1)[b])
