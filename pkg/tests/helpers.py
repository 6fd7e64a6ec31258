import numpy as np
import scipy.sparse as sp

from yamabe_oc.conformal import deform
from yamabe_oc.discretization import ConformalStructure, build_symmetric_sphere


def random_structure(rng, size):
    """Random admissible structure: weighted path Laplacian plus a positive mass form."""
    kind = rng.integers(3)
    if kind == 0 and size >= 8:
        S = build_symmetric_sphere(3, size)
        S.require_admissible()
        return deform(S, rng.uniform(0.5, 2.0, size))
    c = rng.uniform(0.2, 3.0, size - 1)
    k = sp.diags([-c, np.r_[c, 0] + np.r_[0, c], -c], [-1, 0, 1])
    if kind == 1:
        # ring closure makes a closed discrete manifold
        extra = rng.uniform(0.2, 3.0)
        k = k.tolil()
        k[0, -1] -= extra
        k[-1, 0] -= extra
        k[0, 0] += extra
        k[-1, -1] += extra
    rho = rng.uniform(0.5, 1.5, size)
    m = sp.diags(rho * rng.uniform(0.5, 4.0))
    return ConformalStructure(3, sp.csr_matrix(k), sp.csr_matrix(m), rho, label="random")
