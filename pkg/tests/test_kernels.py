import numpy as np
import pytest
import scipy.sparse as sp

from yamabe_oc import _kernels
from yamabe_oc.discretization import build_symmetric_sphere

pytestmark = pytest.mark.skipif(not _kernels._HAVE_NUMBA, reason="numba missing")


@pytest.mark.parametrize("power", [2, 3, 4.5])
def test_assembly_backends_agree(power):
    nodes = np.linspace(0, np.pi, 97)
    a = _kernels.assemble_p1_numba(nodes, float(power), _kernels.GAUSS_X, _kernels.GAUSS_W)
    b = _kernels.assemble_p1_numpy(nodes, power)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-15)


def test_gauss_rule_exact_through_degree_seven():
    for k in range(8):
        assert _kernels.GAUSS_W @ _kernels.GAUSS_X**k == pytest.approx(1.0 / (k + 1), rel=1e-14)


def _spd(n, rng):
    S = build_symmetric_sphere(3, n)
    return S.operator


def test_psor_backends_agree(rng):
    a = _spd(60, rng)
    lower = rng.uniform(0.5, 1.5, 60)
    v1, v2 = lower.copy(), lower.copy()
    r1 = _kernels.psor_numba(a.indptr, a.indices, a.data, a.diagonal(), lower, v1, 1.5, 400, 0.0)
    r2 = _kernels.psor_numpy(a.indptr, a.indices, a.data, a.diagonal(), lower, v2, 1.5, 400, 0.0)
    assert r1[0] == r2[0] == 400
    np.testing.assert_allclose(v1, v2, rtol=1e-12)


def test_pcg_backends_agree_and_solve(rng):
    a = _spd(200, rng)
    b = rng.normal(size=200)
    x1, x2 = np.zeros(200), np.zeros(200)
    i1, r1 = _kernels.pcg_numba(a.indptr, a.indices, a.data, b, x1, 1e-13, 5000)
    i2, r2 = _kernels.pcg_numpy(a.indptr, a.indices, a.data, b, x2, 1e-13, 5000)
    assert i1 > 0 and i2 > 0 and r1 <= 1e-13 and r2 <= 1e-13
    ref = sp.linalg.spsolve(a.tocsc(), b)
    np.testing.assert_allclose(x1, ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())
    np.testing.assert_allclose(x2, ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())


def test_pcg_reports_indefinite():
    a = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    x = np.zeros(2)
    its, _ = _kernels.pcg_numba(a.indptr, a.indices, a.data, np.array([1.0, -1.0]), x, 1e-12, 10)
    assert its == -1


def test_pcg_zero_rhs():
    a = sp.identity(3, format="csr")
    x = np.ones(3)
    assert _kernels.pcg_numpy(a.indptr, a.indices, a.data, np.zeros(3), x, 1e-12, 10) == (0, 0.0)
    assert not x.any()


def test_backend_flag(monkeypatch):
    monkeypatch.setattr(_kernels, "USE_NUMBA", False)
    assert _kernels.backend() == "numpy"
    monkeypatch.setenv("YAMABE_OC_NUMBA", "off")
    assert not _kernels._flag_enabled()
    monkeypatch.setenv("YAMABE_OC_NUMBA", "1")
    assert _kernels._flag_enabled()
