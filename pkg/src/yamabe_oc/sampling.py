"""Random strictly positive fields: exp of a band-limited perturbation."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

MAX_MODES = 8
MAX_SMOOTHING = 8


def sample_positive_field(S, seed, roughness=0.5, amplitude=1.0):
    """Deterministic in ``seed``; ``|log u| <= amplitude`` pointwise.

    Symmetric-sphere structures get a cosine series in the polar angle (smooth
    across the poles); matrix-ingested ones get white noise averaged over the
    stiffness graph, fewer averaging passes for rougher fields.
    """
    if not 0.0 <= roughness <= 1.0:
        raise ValueError("roughness must lie in [0, 1]")
    size = S.node_count
    if roughness == 0.0 or amplitude == 0.0:
        return np.ones(size)
    rng = np.random.default_rng(seed)
    if S.nodes is not None:
        modes = max(1, int(np.ceil(roughness * MAX_MODES)))
        k = np.arange(1, modes + 1)
        coeffs = rng.normal(size=modes) / k
        s = np.cos(np.outer(S.nodes, k)) @ coeffs
    else:
        s = rng.normal(size=size)
        pattern = S.stiffness if S.stiffness.nnz else S.curvature_mass
        adj = (abs(pattern) + sp.identity(size)).tocsr()
        adj = sp.diags(1.0 / np.asarray(adj.sum(axis=1)).ravel()) @ adj
        for _ in range(int(round((1.0 - roughness) * MAX_SMOOTHING)) + 1):
            s = adj @ s
    top = np.abs(s).max()
    if top == 0.0:
        return np.ones(size)
    s *= amplitude * rng.uniform(0.25, 1.0) / top
    return np.exp(s)
