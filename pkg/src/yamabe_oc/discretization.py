"""Discrete conformal backgrounds: the energy form, volume weights and builders."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import gamma

from . import _kernels

SYMMETRY_RTOL = 1e-12
DENSE_EIG_LIMIT = 3000


class StructureError(ValueError):
    """Malformed or inconsistent discrete structure."""


class InadmissibleError(RuntimeError):
    """Energy form is not positive definite."""


def sphere_area(k):
    """Area of the unit k-sphere in R^(k+1)."""
    return 2.0 * np.pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0)


def sphere_volume(n):
    """Vol(S^n) of the round unit sphere."""
    return sphere_area(n)


def energy_coefficient(n):
    return 4.0 * (n - 1) / (n - 2)


def critical_exponent(n):
    return 2.0 * n / (n - 2)


@dataclass(frozen=True, eq=False)
class ConformalStructure:
    """Discrete closed conformal background.

    ``stiffness`` discretizes the Dirichlet form, ``curvature_mass`` the
    scalar-curvature mass form and ``volume_weights`` the lumped volume.
    ``nodes`` holds the polar grid for symmetric-sphere structures and is
    ``None`` for matrix-ingested ones.
    """

    n: int
    stiffness: sp.csr_matrix
    curvature_mass: sp.csr_matrix
    volume_weights: np.ndarray
    label: str = ""
    nodes: np.ndarray | None = None
    kind: str = "matrices"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise StructureError(f"dimension n must be an integer >= 3, got {self.n}")
        k = sp.csr_matrix(self.stiffness, dtype=float)
        m = sp.csr_matrix(self.curvature_mass, dtype=float)
        rho = np.array(self.volume_weights, dtype=float).ravel()
        size = rho.size
        if size < 2:
            raise StructureError("need at least 2 nodes")
        if k.shape != (size, size) or m.shape != (size, size):
            raise StructureError(
                f"dimension mismatch: stiffness {k.shape}, curvature mass {m.shape}, weights {size}"
            )
        for name, mat in (("stiffness", k), ("curvature mass", m)):
            scale = abs(mat).max() if mat.nnz else 0.0
            if mat.nnz and abs(mat - mat.T).max() > SYMMETRY_RTOL * scale:
                raise StructureError(f"asymmetric form: {name}")
        if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
            raise StructureError("nonpositive volume weight")
        k.sort_indices()
        m.sort_indices()
        rho.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "stiffness", k)
        object.__setattr__(self, "curvature_mass", m)
        object.__setattr__(self, "volume_weights", rho)
        if self.nodes is not None:
            nodes = np.array(self.nodes, dtype=float)
            nodes.setflags(write=False)
            object.__setattr__(self, "nodes", nodes)

    @property
    def node_count(self):
        return self.volume_weights.size

    @property
    def crit_exponent(self):
        return critical_exponent(self.n)

    @property
    def coefficient(self):
        return energy_coefficient(self.n)

    @cached_property
    def operator(self):
        """The assembled energy form A = c_n K + M_R (CSR)."""
        a = (self.coefficient * self.stiffness + self.curvature_mass).tocsr()
        a = ((a + a.T) * 0.5).tocsr()
        a.sort_indices()
        return a

    @cached_property
    def factor(self):
        """Sparse LU factorization of A, reused by repeated solves."""
        import scipy.sparse.linalg as spla

        return spla.splu(self.operator.tocsc())

    @property
    def volume(self):
        return float(self.volume_weights.sum())

    def admissibility(self, max_iter=5000):
        if "admissible" not in self._cache:
            self._cache["admissible"] = check_admissible(self, max_iter=max_iter)
        return self._cache["admissible"]

    def require_admissible(self):
        report = self.admissibility()
        if not report["admissible"]:
            raise InadmissibleError(
                f"structure {self.label!r} is not admissible: min eigenvalue {report['min_eigenvalue']:.6g}"
            )


def as_field(u, size=None, name="u", strict=True):
    arr = np.asarray(u, dtype=float).ravel()
    if size is not None and arr.size != size:
        raise ValueError(f"length mismatch: {name} has {arr.size} entries, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if strict and np.any(arr <= 0):
        raise ValueError(f"{name} must be strictly positive")
    return arr


def build_symmetric_sphere(n, N):
    """Axially symmetric reduction of the round unit S^n on a uniform polar grid."""
    if int(n) != n or n < 3:
        raise StructureError(f"n must be an integer >= 3, got {n}")
    if int(N) != N or N < 8:
        raise StructureError(f"N must be an integer >= 8, got {N}")
    n, N = int(n), int(N)
    nodes = np.linspace(0.0, np.pi, N)
    k_diag, k_off, m_diag, m_off = _kernels.assemble_p1(nodes, n - 1)
    area = sphere_area(n - 1)
    k = sp.diags([k_off, k_diag, k_off], [-1, 0, 1], format="csr") * area
    m = sp.diags([m_off, m_diag, m_off], [-1, 0, 1], format="csr") * area
    rho = np.asarray(m.sum(axis=1)).ravel()
    return ConformalStructure(
        n=n,
        stiffness=k,
        curvature_mass=n * (n - 1) * m,
        volume_weights=rho,
        label=f"sphere(n={n},N={N})",
        nodes=nodes,
        kind="sphere",
    )


# ---------------------------------------------------------------------------
# plain-text interchange
# ---------------------------------------------------------------------------


def _fmt(x):
    return f"{x:.17g}"


def write_sparse(path, mat):
    mat = sp.coo_matrix(mat)
    lines = [f"symmetric-sparse {mat.shape[0]}"]
    order = np.lexsort((mat.col, mat.row))
    for r, c, v in zip(mat.row[order], mat.col[order], mat.data[order]):
        lines.append(f"{r} {c} {_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sparse(path):
    text = Path(path).read_text().split("\n")
    header = text[0].split()
    if len(header) != 2 or header[0] != "symmetric-sparse":
        raise StructureError(f"{path}: expected header 'symmetric-sparse N'")
    size = int(header[1])
    rows, cols, vals = [], [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise StructureError(f"{path}:{lineno}: expected 'i j value'")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < size and 0 <= j < size):
            raise StructureError(f"{path}:{lineno}: index out of range")
        rows.append(i)
        cols.append(j)
        vals.append(float(parts[2]))
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def write_vector(path, vec):
    Path(path).write_text("".join(_fmt(x) + "\n" for x in np.asarray(vec, dtype=float)))


def read_vector(path):
    vals = [float(line) for line in Path(path).read_text().split() if line.strip()]
    return np.array(vals, dtype=float)


def write_structure(S, stiffness_file, curvature_mass_file, weights_file):
    write_sparse(stiffness_file, S.stiffness)
    write_sparse(curvature_mass_file, S.curvature_mass)
    write_vector(weights_file, S.volume_weights)


def build_from_matrices(stiffness_file, curvature_mass_file, weights_file, n, label=None):
    k = read_sparse(stiffness_file)
    m = read_sparse(curvature_mass_file)
    rho = read_vector(weights_file)
    return ConformalStructure(
        n=n,
        stiffness=k,
        curvature_mass=m,
        volume_weights=rho,
        label=label or f"matrices({Path(stiffness_file).name})",
    )


# ---------------------------------------------------------------------------
# forms and norms
# ---------------------------------------------------------------------------


def energy(S, u, v):
    """<u, v> = c_n u'Kv + u'M_R v."""
    u = as_field(u, S.node_count, "u", strict=False)
    v = as_field(v, S.node_count, "v", strict=False)
    return float(u @ (S.operator @ v))


def lq_norm(S, u, q):
    q = float(q)
    if not (2.0 <= q <= S.crit_exponent * (1 + 1e-14)):
        raise ValueError(f"q={q} outside [2, {S.crit_exponent}]")
    u = as_field(u, S.node_count, "u", strict=False)
    a = np.abs(u)
    top = a.max()
    if top == 0.0:
        return 0.0
    # factor out the max so u**q cannot overflow
    return float(top * (S.volume_weights @ (a / top) ** q) ** (1.0 / q))


def check_admissible(S, max_iter=5000, tol=0.0):
    """Smallest eigenvalue of A; admissible iff it is positive."""
    a = S.operator
    size = a.shape[0]
    if size <= DENSE_EIG_LIMIT:
        lam = scipy.linalg.eigh(a.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
        iterations = 0
    else:
        import scipy.sparse.linalg as spla

        # Gershgorin shift puts the smallest eigenvalue nearest the shift
        absrow = np.asarray(abs(a).sum(axis=1)).ravel()
        diag = a.diagonal()
        shift = float(np.min(diag - (absrow - np.abs(diag)))) - 1e-3 * float(absrow.max())
        try:
            vals = spla.eigsh(a, k=1, sigma=shift, which="LM", maxiter=max_iter, tol=tol, return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError(f"eigenvalue iteration did not converge in {max_iter} iterations") from exc
        lam = float(vals[0])
        iterations = max_iter
    return {"admissible": bool(lam > 0), "min_eigenvalue": float(lam), "iterations": iterations}
