import numpy as np
import pytest
import scipy.linalg

from yamabe_oc.minimize import (
    MinimizeOptions,
    continuation_schedule,
    continue_to_critical,
    cross_verify_minimizers,
    el_residual,
    minimize_I,
    minimize_J,
)
from yamabe_oc.sampling import sample_positive_field


def smallest_generalized_eigenvalue(S):
    a = S.operator.toarray()
    return scipy.linalg.eigh(a, np.diag(S.volume_weights), eigvals_only=True, subset_by_index=[0, 0])[0]


@pytest.mark.parametrize("name", ["s3_512", "toy"])
def test_p1_matches_eigensolver(name, request):
    S = request.getfixturevalue(name)
    rep = minimize_J(S, 1.0)
    assert rep.converged
    assert rep.value == pytest.approx(smallest_generalized_eigenvalue(S), rel=1e-8)


def test_p1_deformed_matches_eigensolver(s3_512):
    from yamabe_oc.conformal import deform

    Sw = deform(s3_512, sample_positive_field(s3_512, 31, roughness=1.0))
    rep = minimize_J(Sw, 1.0)
    assert rep.value == pytest.approx(smallest_generalized_eigenvalue(Sw), rel=1e-8)


def test_subcritical_minimizer_is_constant_on_sphere(s3_512):
    rep = minimize_J(s3_512, 2.0)
    one = np.ones(512)
    from yamabe_oc.functionals import eval_J

    assert rep.value == pytest.approx(eval_J(s3_512, one, 2.0), rel=1e-10)
    assert rep.el_residual <= 1e-8 and rep.fix_residual <= 1e-8
    assert rep.descent_violations == 0


def test_iterates_are_fixed_points(s3_512):
    rep = minimize_J(s3_512, 2.0, MinimizeOptions(restarts=1))
    assert max(row[3] for row in rep.trace) <= 1e-8


def test_objective_monotone_along_trace(s3_512):
    rep = minimize_J(s3_512, 3.0, MinimizeOptions(restarts=1, roughness=1.0))
    vals = [row[1] for row in rep.trace]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


def test_critical_requires_continuation(s3_64):
    with pytest.raises(ValueError):
        minimize_J(s3_64, 5.0)


def test_schedule():
    from yamabe_oc.discretization import build_symmetric_sphere

    S = build_symmetric_sphere(3, 16)
    sched = continuation_schedule(S, 4)
    assert sched == [4.5, 4.75, 4.875, 4.9375, 5.0]


def test_continuation_reaches_constant(s3_512):
    rep = continue_to_critical(s3_512)
    y = 6 * (2 * np.pi**2) ** (2 / 3)
    assert rep.value == pytest.approx(y, rel=1e-9)
    assert rep.curvature_rel_dev <= 1e-3
    assert len(rep.levels) == 9


def test_I_minimizer_and_cross_verification(s3_512):
    opts = MinimizeOptions()
    rj = minimize_J(s3_512, 2.0, opts)
    ri = minimize_I(s3_512, 2.0, opts)
    cv = cross_verify_minimizers(s3_512, 2.0, opts, rj, ri)
    assert cv["pass"], cv["residuals"]


def test_el_residual_scale_free(s3_64):
    u = sample_positive_field(s3_64, 3)
    assert el_residual(s3_64, u, 2.0) == pytest.approx(el_residual(s3_64, 5 * u, 2.0), rel=1e-10)
    assert el_residual(s3_64, np.ones(64), 2.0) < 1e-12


def test_trace_csv(s3_64, tmp_path):
    rep = minimize_J(s3_64, 2.0, MinimizeOptions(restarts=1))
    rep.write_trace(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,J_p,el_residual,fix_residual"
    assert len(lines) == len(rep.trace) + 1
    assert "field" not in rep.to_dict(with_field=False)
