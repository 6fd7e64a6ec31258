import numpy as np
import pytest

from yamabe_oc.conformal import deform, discrete_scalar_curvature
from yamabe_oc.discretization import energy, lq_norm
from yamabe_oc.functionals import eval_I, eval_J
from yamabe_oc.obstacle import solve_obstacle
from yamabe_oc.sampling import sample_positive_field


def test_identity_deformation(s3_512):
    Sw = deform(s3_512, np.ones(512))
    assert abs(Sw.operator - s3_512.operator).max() == 0
    np.testing.assert_array_equal(Sw.volume_weights, s3_512.volume_weights)


def test_energy_and_norm_transport(s3_512):
    w = sample_positive_field(s3_512, 21)
    u = sample_positive_field(s3_512, 22)
    Sw = deform(s3_512, w)
    # the stiffness entries are O(1/h), so the quadratic form cancels about three digits
    assert energy(Sw, u, u) == pytest.approx(energy(s3_512, w * u, w * u), rel=1e-11)
    assert lq_norm(Sw, u, 6) == pytest.approx(lq_norm(s3_512, w * u, 6), rel=1e-13)
    assert eval_J(Sw, u, 5) == pytest.approx(eval_J(s3_512, w * u, 5), rel=1e-12)


def test_admissibility_inherited(s3_512):
    Sw = deform(s3_512, sample_positive_field(s3_512, 23))
    assert Sw.admissibility()["admissible"]
    assert Sw.kind == "deformed-sphere"


def test_obstacle_covariance(s3_512):
    w = sample_positive_field(s3_512, 24, roughness=1.0)
    u = sample_positive_field(s3_512, 25, roughness=1.0)
    Sw = deform(s3_512, w)
    tw = solve_obstacle(Sw, u).value
    t = solve_obstacle(s3_512, w * u).value
    assert np.abs(tw - t / w).max() <= 1e-9 * np.abs(tw).max()
    assert eval_I(Sw, u, 5) == pytest.approx(eval_I(s3_512, w * u, 5), rel=1e-9)


def test_curvature_of_round_metric(s3_512):
    rep = discrete_scalar_curvature(s3_512, np.ones(512))
    np.testing.assert_allclose(rep.values, 6.0, rtol=1e-10)
    assert rep.rel_dev < 1e-10


def test_curvature_of_deformed_constant(s3_512):
    # R of g_w measured on S_w at u=1 equals R of g at w; (Au)_i cancels O(1/h^2) terms
    w = sample_positive_field(s3_512, 26)
    Sw = deform(s3_512, w)
    np.testing.assert_allclose(
        discrete_scalar_curvature(Sw, np.ones(512)).values, discrete_scalar_curvature(s3_512, w).values, rtol=1e-8
    )


def test_non_bubble_has_varying_curvature(s3_512):
    u = 1 + 0.5 * np.cos(s3_512.nodes)
    assert discrete_scalar_curvature(s3_512, u).rel_dev > 0.05
