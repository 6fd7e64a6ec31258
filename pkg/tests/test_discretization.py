import numpy as np
import pytest
import scipy.integrate
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from yamabe_oc.discretization import (
    ConformalStructure,
    InadmissibleError,
    StructureError,
    build_from_matrices,
    build_symmetric_sphere,
    check_admissible,
    energy,
    lq_norm,
    read_sparse,
    read_vector,
    sphere_area,
    sphere_volume,
    write_structure,
)


def test_sphere_areas_closed_form():
    assert sphere_area(1) == pytest.approx(2 * np.pi, rel=1e-15)
    assert sphere_area(2) == pytest.approx(4 * np.pi, rel=1e-15)
    assert sphere_volume(3) == pytest.approx(2 * np.pi**2, rel=1e-15)
    assert sphere_volume(4) == pytest.approx(8 * np.pi**2 / 3, rel=1e-15)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_lumped_volume_matches_independent_quadrature(n):
    S = build_symmetric_sphere(n, 200)
    ref, _ = scipy.integrate.quad(lambda t: np.sin(t) ** (n - 1), 0, np.pi, epsabs=0, epsrel=1e-13, limit=200)
    assert S.volume == pytest.approx(sphere_area(n - 1) * ref, rel=1e-12)


def test_stiffness_annihilates_constants(s3_512):
    one = np.ones(s3_512.node_count)
    k1 = s3_512.stiffness @ one
    assert np.abs(k1).max() <= 1e-12 * abs(s3_512.stiffness).max()
    scale = abs(s3_512.operator).max()
    np.testing.assert_allclose(s3_512.operator @ one, s3_512.curvature_mass @ one, rtol=0, atol=1e-12 * scale)


def test_energy_of_constant_is_total_curvature():
    S3 = build_symmetric_sphere(3, 256)
    assert energy(S3, np.ones(256), np.ones(256)) == pytest.approx(6 * 2 * np.pi**2, rel=1e-12)
    S4 = build_symmetric_sphere(4, 256)
    assert energy(S4, np.ones(256), np.ones(256)) == pytest.approx(12 * 8 * np.pi**2 / 3, rel=1e-12)


def test_energy_symmetric_and_bilinear(s3_64, rng):
    u = rng.uniform(0.5, 2, 64)
    v = rng.uniform(0.5, 2, 64)
    assert energy(s3_64, u, v) == pytest.approx(energy(s3_64, v, u), rel=1e-15)
    one = np.ones(64)
    assert energy(s3_64, 3 * one, 3 * one) == pytest.approx(9 * energy(s3_64, one, one), rel=1e-14)


def test_energy_length_mismatch(s3_64):
    with pytest.raises(ValueError, match="length mismatch"):
        energy(s3_64, np.ones(63), np.ones(64))


def test_lq_norm_values(s3_512, rng):
    one = np.ones(512)
    assert lq_norm(s3_512, one, 6) == pytest.approx((2 * np.pi**2) ** (1 / 6), rel=1e-12)
    u = rng.uniform(0.1, 3, 512)
    assert lq_norm(s3_512, 2.5 * u, 4) == pytest.approx(2.5 * lq_norm(s3_512, u, 4), rel=1e-14)
    assert lq_norm(s3_512, u, 2) == pytest.approx(np.sqrt(u @ (s3_512.volume_weights * u)), rel=1e-14)
    with pytest.raises(ValueError):
        lq_norm(s3_512, u, 7)
    with pytest.raises(ValueError):
        lq_norm(s3_512, u, 1.5)


def test_lq_norm_no_overflow(s3_64):
    u = np.full(64, 1e300)
    assert np.isfinite(lq_norm(s3_64, u, 6))


@pytest.mark.parametrize("n,N", [(2, 64), (3, 7)])
def test_builder_rejects_bad_parameters(n, N):
    with pytest.raises(StructureError):
        build_symmetric_sphere(n, N)


def test_toy_ingestion(toy, data_dir, tmp_path):
    assert toy.node_count == 4
    write_structure(toy, tmp_path / "k.txt", tmp_path / "m.txt", tmp_path / "r.txt")
    again = build_from_matrices(tmp_path / "k.txt", tmp_path / "m.txt", tmp_path / "r.txt", 3)
    assert (again.stiffness != toy.stiffness).nnz == 0
    assert (again.curvature_mass != toy.curvature_mass).nnz == 0
    np.testing.assert_array_equal(again.volume_weights, toy.volume_weights)


def test_sphere_round_trip_is_bit_exact(s3_64, tmp_path):
    write_structure(s3_64, tmp_path / "k.txt", tmp_path / "m.txt", tmp_path / "r.txt")
    assert (read_sparse(tmp_path / "k.txt") != s3_64.stiffness).nnz == 0
    np.testing.assert_array_equal(read_vector(tmp_path / "r.txt"), s3_64.volume_weights)


def test_zero_weight_rejected(data_dir):
    with pytest.raises(StructureError, match="nonpositive volume weight"):
        build_from_matrices(
            data_dir / "toy_stiffness.txt", data_dir / "toy_curvature_mass.txt", data_dir / "toy_weights_zero.txt", 3
        )


def test_asymmetric_rejected(data_dir):
    with pytest.raises(StructureError, match="asymmetric form"):
        build_from_matrices(
            data_dir / "toy_stiffness_asym.txt", data_dir / "toy_curvature_mass.txt", data_dir / "toy_weights.txt", 3
        )


def test_dimension_mismatch():
    with pytest.raises(StructureError, match="dimension mismatch"):
        ConformalStructure(3, sp.eye(3), sp.eye(3), np.ones(4))


def test_bad_header(tmp_path):
    (tmp_path / "k.txt").write_text("sparse 3\n0 0 1\n")
    with pytest.raises(StructureError):
        read_sparse(tmp_path / "k.txt")


def test_admissibility(s3_512):
    rep = check_admissible(s3_512)
    assert rep["admissible"] and rep["min_eigenvalue"] > 0


def test_identity_toy_min_eigenvalue_is_one():
    S = ConformalStructure(3, sp.csr_matrix((2, 2)), sp.eye(2), np.ones(2))
    assert check_admissible(S)["min_eigenvalue"] == pytest.approx(1.0, rel=1e-14)


def test_negative_curvature_inadmissible():
    base = build_symmetric_sphere(3, 64)
    m = base.curvature_mass / 6.0
    bad = ConformalStructure(3, base.stiffness, -50.0 * m, base.volume_weights)
    rep = check_admissible(bad)
    assert not rep["admissible"]
    one = np.ones(64)
    assert rep["min_eigenvalue"] <= energy(bad, one, one) / (one @ one)
    with pytest.raises(InadmissibleError):
        bad.require_admissible()


def test_sparse_eigen_path_agrees_with_dense():
    S = build_symmetric_sphere(3, 3500)
    sparse = check_admissible(S)
    import scipy.linalg

    dense = scipy.linalg.eigh(S.operator.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
    assert sparse["min_eigenvalue"] == pytest.approx(dense, rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 20.0), min_size=64, max_size=64))
def test_energy_bounded_below_by_min_eigenvalue(values):
    S = build_symmetric_sphere(3, 64)
    u = np.array(values)
    lam = S.admissibility()["min_eigenvalue"]
    assert energy(S, u, u) >= lam * (u @ u) * (1 - 1e-12)
