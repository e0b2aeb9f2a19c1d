import warnings

import numpy as np
import pytest

from iml.amle import AmleProblem, amle_solve
from iml.blowup import (RescalingWarning, blowup_report, blowup_sequence, fit_consistency,
                        linear_fit, rescale, rescale_identity_check)
from iml.errors import ValidationError
from iml.experiments import aronsson
from iml.fields import DiffusionField, ScalarField, build_grid
from iml.metric import STENCIL_INFLATION, distance_field

SLACK = STENCIL_INFLATION[16]


@pytest.fixture(scope="module")
def unit65():
    return build_grid(2, (0.0, 1.0), 65)


def test_rescale_examples(unit65):
    g = unit65
    x = (0.5, 0.5)
    # window nodes coincide with grid nodes, so interpolation is exact
    for r in (0.5, 0.25):
        lin = rescale(ScalarField.from_function(g, lambda a, b: a), x, r)
        assert np.allclose(lin.u.values, lin.window.mesh()[0], atol=1e-12)
        sq = rescale(ScalarField.from_function(g, lambda a, b: (a - 0.5) ** 2), x, r)
        assert np.allclose(sq.u.values, r * lin.window.mesh()[0] ** 2, atol=1e-12)
        c = rescale(ScalarField(g, np.full(g.shape, 7.0)), x, r)
        assert np.all(c.u.values == 0.0)
    assert lin.u.values[16, 16] == 0.0


def test_rescale_window_escapes(unit65):
    with pytest.raises(ValidationError):
        rescale(ScalarField(unit65, np.zeros(unit65.shape)), (0.1, 0.5), 0.2)


def test_sequence_needs_decreasing_radii(unit65):
    u = ScalarField(unit65, np.zeros(unit65.shape))
    with pytest.raises(ValidationError):
        blowup_sequence(u, (0.5, 0.5), [0.1, 0.2])
    seq = blowup_sequence(u, (0.5, 0.5), [0.2, 0.1], A=DiffusionField.identity(unit65))
    assert len(seq.members) == 2 and seq.members[1].A.lambda_max == 1.0


def test_linear_fit_examples():
    W = build_grid(2, (-1.0, 1.0), 33)
    fit = linear_fit(ScalarField.from_function(W, lambda a, b: 2 * a))
    assert np.allclose(fit.e, [2.0, 0.0], atol=1e-12) and fit.residual <= 1e-12
    with pytest.raises(ValidationError):
        linear_fit(ScalarField(build_grid(2, (-1.0, 1.0), 3), np.zeros((3, 3))))


def test_aronsson_blowup_off_axis_point():
    errs, res = [], []
    for r in (2.0 ** -6, 2.0 ** -9):
        fit = linear_fit(rescale(aronsson, (1.0, 0.0), r).u)
        errs.append(np.linalg.norm(fit.e - [4 / 3, 0.0]))
        res.append(fit.residual)
    # both decay like r^(1/3): three halvings give a factor of 2
    assert errs[1] / errs[0] == pytest.approx(0.5, rel=0.05)
    assert res[1] / res[0] == pytest.approx(0.5, rel=0.1)
    assert errs[1] < 2.0 ** -3


def test_aronsson_blowup_at_origin():
    # the function is 4/3-homogeneous, so u_j = r^(1/3) u on the window
    base = linear_fit(rescale(aronsson, (0.0, 0.0), 1.0).u)
    for r in (0.25, 0.03125):
        fit = linear_fit(rescale(aronsson, (0.0, 0.0), r).u)
        assert np.allclose(fit.e, r ** (1 / 3) * base.e, atol=1e-12)
        assert fit.residual == pytest.approx(r ** (1 / 3) * base.residual, rel=1e-9)


def test_rescale_identity_exact():
    pairs = [((0.0, 0.0), (1.0, 0.0)), ((-1.0, -0.5), (0.75, 1.0))]
    const = rescale_identity_check(lambda p: np.full(len(p), 3.0), (0.3, 0.2), 0.125, pairs)
    assert const.max_rel_error == 0.0 and const.nested
    conf = rescale_identity_check(lambda p: 1 + (p ** 2).sum(axis=1), (0.3, 0.2), 0.125, pairs)
    assert conf.max_rel_error <= 1e-12


def test_rescale_identity_non_nesting_warns():
    pairs = [((0.0, 0.0), (1.0, 0.0))]
    with pytest.warns(RescalingWarning):
        chk = rescale_identity_check(lambda p: 1 + (p ** 2).sum(axis=1), (0.3, 0.2), 0.1, pairs,
                                     window_res=17, fine_factor=1.5)
    assert not chk.nested
    # the error stays within the reported endpoint slack relative to the distance
    r_dj, dA = chk.rows[0][2], chk.rows[0][3]
    assert abs(r_dj - dA) <= chk.slack + 0.05 * dA


def test_report_affine(unit65):
    g = unit65
    u = ScalarField.from_function(g, lambda a, b: a)
    rep = blowup_report(u, DiffusionField.identity(g), (0.5, 0.5), [0.25, 0.125, 0.0625])
    for row in rep.rows:
        assert np.allclose(row["e"], [1.0, 0.0], atol=1e-12) and row["residual"] <= 1e-12
        assert row["H"] == pytest.approx(1.0)
        assert 1 / SLACK <= row["lip"] <= 1.0 + 1e-12


def test_report_cone_solution():
    g = build_grid(2, (0.0, 1.0), 65)
    A = DiffusionField.identity(g)
    d = distance_field(A, 0)
    X, Y = g.mesh()
    closure = (X >= 0.25 - 1e-12) & (Y >= 0.25 - 1e-12)
    sol = amle_solve(AmleProblem(A, ScalarField(g, 2.0 * d.values), closure=closure))
    x = np.array([0.625, 0.5])
    rep = blowup_report(sol, A, x, [4 * g.h, 2 * g.h, g.h])
    e = np.asarray(rep.rows[-1]["e"])
    direction = x / np.linalg.norm(x)
    assert e @ direction / np.linalg.norm(e) >= 0.99
    # polygonal norm sits between the Euclidean norm and SLACK times it
    assert 2.0 / SLACK <= np.linalg.norm(e) <= 2.0 * SLACK


def test_running_best_nonincreasing(unit65):
    g = unit65
    u = ScalarField.from_function(g, lambda a, b: np.abs(a - 0.5) + 0.2 * b)
    rep = blowup_report(u, DiffusionField.identity(g), (0.5, 0.5), [0.25, 0.125, 0.0625, 0.03125])
    assert np.all(np.diff(rep.best_residuals) <= 0)


def test_report_csv(tmp_path):
    rep = blowup_report(aronsson, lambda p: np.ones(len(p)), (1.0, 1.0), [0.25, 0.125])
    text = rep.write_csv(tmp_path / "b.csv").read_text().splitlines()
    assert text[0] == "r,e1,e2,residual,best_residual,H,lip,lip2" and len(text) == 3
    assert rep.supports in ("H = Lip^2", "H = Lip")


def test_fit_consistency(unit65):
    g = unit65
    u = ScalarField.from_function(g, lambda a, b: np.sin(a) + a * b)
    e, grad = fit_consistency(u, (0.5, 0.5), 2 * g.h)
    assert np.allclose(e, grad, atol=g.h ** 2 + 4 * g.h * 1.0)
    assert np.allclose(e, [np.cos(0.5) + 0.5, 0.5], atol=0.02)
