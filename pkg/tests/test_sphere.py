import warnings

import numpy as np
import pytest

from yamabe_oc.discretization import build_symmetric_sphere
from yamabe_oc.sphere import (
    ResolutionWarning,
    bubble,
    half_width,
    obstacle_sobolev_check,
    resolves,
    sobolev_margin,
    sphere_constant,
    verify_sphere_theorem,
    write_profiles,
    yamabe_residual,
)


@pytest.fixture(scope="module")
def s3_1024():
    return build_symmetric_sphere(3, 1024)


def test_unit_dilation_is_constant(s3_64):
    np.testing.assert_allclose(bubble(s3_64, 1.0), 1.0, rtol=1e-15)


def test_bubble_inversion_symmetry(s3_64):
    # lambda -> 1/lambda moves the concentration to the opposite pole
    np.testing.assert_allclose(bubble(s3_64, 3.0), bubble(s3_64, 1 / 3.0, pole_sign=-1), rtol=1e-13)


def test_bubble_volume_is_conformally_invariant(s3_1024):
    # ||u||_{2*}^{2*} is the volume of the pulled-back metric, which is Vol(S^3)
    for lam in (2.0, 5.0):
        u = bubble(s3_1024, lam)
        assert s3_1024.volume_weights @ u**6 == pytest.approx(2 * np.pi**2, rel=1e-3)


def test_half_width():
    assert half_width(1.0) == np.pi
    lam = 5.0
    th = half_width(lam)
    psi = 2 * lam / ((1 + lam**2) + (1 - lam**2) * np.cos(th))
    assert psi == pytest.approx(lam / 2, rel=1e-12)


def test_unresolved_bubble_warns(s3_64):
    assert not resolves(s3_64, 200.0)
    with pytest.warns(ResolutionWarning):
        bubble(s3_64, 200.0)


def test_sphere_constant_closed_form(s3_1024):
    c = sphere_constant(s3_1024)
    assert c["closed_form"] == pytest.approx(6 * (2 * np.pi**2) ** (2 / 3), rel=1e-15)
    assert c["estimate"] == pytest.approx(c["closed_form"], rel=1e-10)


def test_yamabe_residual_decreases_with_refinement():
    res = []
    for N in (256, 512, 1024):
        S = build_symmetric_sphere(3, N)
        res.append(yamabe_residual(S, bubble(S, 2.0)))
    assert res[0] > res[1] > res[2]


@pytest.mark.parametrize("lam", [1.0, 2.0])
def test_theorem_clauses(s3_1024, lam):
    rep = verify_sphere_theorem(s3_1024, lam)
    assert rep["pass"], rep["clauses"]


def test_non_bubble_fails_curvature_clause(s3_1024):
    rep = verify_sphere_theorem(s3_1024, 2.0)
    assert rep["clauses"]["fixed_point"]["pass"]
    u = 1 + 0.5 * np.cos(s3_1024.nodes)
    chk = obstacle_sobolev_check(s3_1024, u, sphere_constant(s3_1024)["estimate"], sobolev_margin(s3_1024))
    assert chk["holds"] and not chk["equality"] and chk["curvature_rel_dev"] > 1e-2


def test_margin_positive(s3_1024):
    m = sobolev_margin(s3_1024)
    assert 1e-9 <= m < 1e-3


def test_sobolev_check_needs_estimate(s3_64):
    with pytest.raises(ValueError):
        obstacle_sobolev_check(s3_64, np.ones(64), None, 1e-6)


def test_profiles_csv(s3_64, tmp_path):
    write_profiles(tmp_path / "p.csv", s3_64, {"one": np.ones(64)})
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "theta,one" and len(lines) == 65


def test_matrix_structure_rejected(toy):
    with pytest.raises(ValueError):
        bubble(toy, 2.0)
