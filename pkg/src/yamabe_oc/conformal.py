"""Conformal deformation g_w = w^(4/(n-2)) g of a discrete structure."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discretization import ConformalStructure, as_field


def deform(S, w):
    """Structure for g_w, defined so that <u,u>_{g_w} = <wu,wu>_g holds exactly.

    Both forms are congruence-transformed by diag(w) and the weights pick up
    w**(2*). Positive definiteness carries over by Sylvester's law of inertia,
    so the admissibility record of ``S`` is inherited.
    """
    w = as_field(w, S.node_count, "w")
    d = sp.diags(w)
    out = ConformalStructure(
        n=S.n,
        stiffness=(d @ S.stiffness @ d).tocsr(),
        curvature_mass=(d @ S.curvature_mass @ d).tocsr(),
        volume_weights=S.volume_weights * w ** S.crit_exponent,
        label=f"{S.label}|deformed",
        nodes=S.nodes,
        kind="deformed-sphere" if S.nodes is not None else "deformed",
    )
    if "admissible" in S._cache:
        parent = S._cache["admissible"]
        out._cache["admissible"] = {
            "admissible": parent["admissible"],
            "min_eigenvalue": float("nan"),
            "inherited_from": S.label,
        }
    return out


@dataclass
class CurvatureReport:
    values: np.ndarray
    mean: float
    rel_dev: float

    def to_dict(self):
        return {"values": [float(x) for x in self.values], "mean": self.mean, "rel_dev": self.rel_dev}


def discrete_scalar_curvature(S, u):
    """Lumped scalar curvature of g_u: R_i = (Au)_i / (rho_i u_i^(2*-1))."""
    u = as_field(u, S.node_count)
    rho = S.volume_weights
    r = (S.operator @ u) / (rho * u ** (S.crit_exponent - 1.0))
    mean = float(rho @ r / rho.sum())
    dev = float(np.sqrt(rho @ (r - mean) ** 2 / rho.sum()))
    return CurvatureReport(values=r, mean=mean, rel_dev=dev / abs(mean) if mean else float("inf"))
