"""Inner loops with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``YAMABE_OC_NUMBA`` is not set
to ``0``/``false``/``off``. Both paths are importable explicitly
(``*_numba`` / ``*_numpy``) so tests and the benchmark can compare them.
"""
import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False


def _flag_enabled():
    raw = os.environ.get("YAMABE_OC_NUMBA", "1").strip().lower()
    return raw not in ("0", "false", "off", "no")


USE_NUMBA = _HAVE_NUMBA and _flag_enabled()

_threads = os.environ.get("YAMABE_OC_THREADS")
if _HAVE_NUMBA and _threads:
    numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


def _njit(func):
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# Gauss-Legendre rule on [0, 1], 4 points (exact through degree 7).
GAUSS_X, GAUSS_W = np.polynomial.legendre.leggauss(4)
GAUSS_X = 0.5 * (GAUSS_X + 1.0)
GAUSS_W = 0.5 * GAUSS_W


# ---------------------------------------------------------------------------
# weighted P1 assembly on a 1D grid
# ---------------------------------------------------------------------------


def _assemble_p1_python(nodes, power, gx, gw):
    n_nodes = nodes.shape[0]
    k_diag = np.zeros(n_nodes)
    k_off = np.zeros(n_nodes - 1)
    m_diag = np.zeros(n_nodes)
    m_off = np.zeros(n_nodes - 1)
    for e in range(n_nodes - 1):
        a = nodes[e]
        h = nodes[e + 1] - a
        wsum = 0.0
        m00 = 0.0
        m01 = 0.0
        m11 = 0.0
        for q in range(gx.shape[0]):
            t = gx[q]
            wt = gw[q] * h * np.sin(a + t * h) ** power
            wsum += wt
            m00 += wt * (1.0 - t) * (1.0 - t)
            m01 += wt * (1.0 - t) * t
            m11 += wt * t * t
        kk = wsum / (h * h)
        k_diag[e] += kk
        k_diag[e + 1] += kk
        k_off[e] -= kk
        m_diag[e] += m00
        m_diag[e + 1] += m11
        m_off[e] += m01
    return k_diag, k_off, m_diag, m_off


def assemble_p1_numpy(nodes, power, gx=GAUSS_X, gw=GAUSS_W):
    """Tridiagonal stiffness/mass bands for the weight ``sin(theta)**power``.

    Returns ``(k_diag, k_off, m_diag, m_off)`` without the sphere-area factor.
    """
    nodes = np.asarray(nodes, dtype=float)
    a = nodes[:-1, None]
    h = np.diff(nodes)[:, None]
    t = gx[None, :]
    wt = gw[None, :] * h * np.sin(a + t * h) ** power
    kk = wt.sum(axis=1) / h[:, 0] ** 2
    m00 = (wt * (1.0 - t) ** 2).sum(axis=1)
    m01 = (wt * (1.0 - t) * t).sum(axis=1)
    m11 = (wt * t * t).sum(axis=1)
    k_diag = np.zeros(nodes.size)
    m_diag = np.zeros(nodes.size)
    k_diag[:-1] += kk
    k_diag[1:] += kk
    m_diag[:-1] += m00
    m_diag[1:] += m11
    return k_diag, -kk, m_diag, m01


# ---------------------------------------------------------------------------
# projected SOR on a CSR matrix
# ---------------------------------------------------------------------------


def _psor_python(indptr, indices, data, diag, lower, v, omega, max_sweeps, tol):
    """Projected SOR for ``min v'Av, v >= lower``; ``v`` is updated in place.

    Returns ``(sweeps, last_update)`` where ``last_update`` is the largest
    absolute change of the final sweep.
    """
    n = v.shape[0]
    change = 0.0
    sweeps = 0
    for sweep in range(max_sweeps):
        change = 0.0
        for i in range(n):
            r = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                r += data[jj] * v[indices[jj]]
            new = v[i] - omega * r / diag[i]
            if new < lower[i]:
                new = lower[i]
            d = abs(new - v[i])
            if d > change:
                change = d
            v[i] = new
        sweeps = sweep + 1
        if change <= tol:
            break
    return sweeps, change


def psor_numpy(indptr, indices, data, diag, lower, v, omega, max_sweeps, tol):
    """Same iteration as the numba kernel, row loop kept, row dot in numpy.

    Gauss-Seidel is inherently sequential so only the row product vectorizes.
    """
    n = v.shape[0]
    change = 0.0
    sweeps = 0
    for sweep in range(max_sweeps):
        change = 0.0
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            r = float(np.dot(data[lo:hi], v[indices[lo:hi]]))
            new = max(lower[i], v[i] - omega * r / diag[i])
            d = abs(new - v[i])
            if d > change:
                change = d
            v[i] = new
        sweeps = sweep + 1
        if change <= tol:
            break
    return sweeps, change


# ---------------------------------------------------------------------------
# Jacobi-preconditioned conjugate gradient on a CSR matrix
# ---------------------------------------------------------------------------


def _pcg_python(indptr, indices, data, b, x, rtol, max_iter):
    n = b.shape[0]
    dinv = np.empty(n)
    for i in range(n):
        d = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            if indices[jj] == i:
                d += data[jj]
        dinv[i] = 1.0 / d
    r = np.empty(n)
    for i in range(n):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += data[jj] * x[indices[jj]]
        r[i] = b[i] - s
    bnorm = 0.0
    for i in range(n):
        bnorm += b[i] * b[i]
    bnorm = np.sqrt(bnorm)
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0, 0.0
    z = r * dinv
    p = z.copy()
    rz = 0.0
    for i in range(n):
        rz += r[i] * z[i]
    ap = np.empty(n)
    it = 0
    rnorm = np.sqrt(np.sum(r * r))
    while it < max_iter and rnorm > rtol * bnorm:
        pap = 0.0
        for i in range(n):
            s = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                s += data[jj] * p[indices[jj]]
            ap[i] = s
            pap += p[i] * s
        if pap <= 0.0:
            return -1, rnorm / bnorm
        alpha = rz / pap
        rz_new = 0.0
        rn = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * ap[i]
            z[i] = r[i] * dinv[i]
            rz_new += r[i] * z[i]
            rn += r[i] * r[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rnorm = np.sqrt(rn)
        it += 1
    return it, rnorm / bnorm


def pcg_numpy(indptr, indices, data, b, x, rtol, max_iter):
    """Vectorized twin of the PCG kernel; ``x`` is the initial guess, updated in place.

    Returns ``(iterations, relative_residual)``; iterations is -1 on loss of
    positive definiteness.
    """
    from scipy.sparse import csr_matrix

    n = b.shape[0]
    a = csr_matrix((data, indices, indptr), shape=(n, n))
    dinv = 1.0 / a.diagonal()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0
    r = b - a @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    rnorm = np.linalg.norm(r)
    it = 0
    while it < max_iter and rnorm > rtol * bnorm:
        ap = a @ p
        pap = p @ ap
        if pap <= 0.0:
            return -1, rnorm / bnorm
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = np.linalg.norm(r)
        it += 1
    return it, rnorm / bnorm


if _HAVE_NUMBA:
    assemble_p1_numba = _njit(_assemble_p1_python)
    psor_numba = _njit(_psor_python)
    pcg_numba = _njit(_pcg_python)
else:  # pragma: no cover
    assemble_p1_numba = psor_numba = pcg_numba = None


def assemble_p1(nodes, power):
    if USE_NUMBA:
        return assemble_p1_numba(np.ascontiguousarray(nodes, dtype=np.float64), float(power), GAUSS_X, GAUSS_W)
    return assemble_p1_numpy(nodes, power)


def psor(indptr, indices, data, diag, lower, v, omega, max_sweeps, tol):
    fn = psor_numba if USE_NUMBA else psor_numpy
    return fn(indptr, indices, data, diag, lower, v, float(omega), int(max_sweeps), float(tol))


def pcg(indptr, indices, data, b, x, rtol, max_iter):
    fn = pcg_numba if USE_NUMBA else pcg_numpy
    return fn(indptr, indices, data, b, x, float(rtol), int(max_iter))


def backend():
    return "numba" if USE_NUMBA else "numpy"
