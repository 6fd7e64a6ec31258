"""Obstacle problem for the discrete conformal Laplacian.

``solve_obstacle`` returns the minimizer of ``v'Av`` over ``{v >= u}`` together
with a KKT certificate. The primary method is a primal-dual active set
iteration whose linear solves run Jacobi-PCG on the inactive block; projected
SOR is the fallback when the active sets cycle.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .discretization import as_field

log = logging.getLogger(__name__)

ACTIVATION_RTOL = 1e-12


class ObstacleSolverError(RuntimeError):
    """Raised when no method reaches the KKT tolerance; carries the best iterate."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass
class SolverOptions:
    kkt_tol: float = 1e-10
    fix_tol: float = 1e-8
    max_iter: int = 200
    psor_max_sweeps: int = 100_000
    psor_omega: float | None = None
    method: str = "pdas"
    cg_max_iter: int | None = None
    warm_start_min_size: int = 32
    raise_on_failure: bool = True

    def __post_init__(self):
        if self.method not in ("pdas", "psor"):
            raise ValueError(f"unknown obstacle method {self.method!r}")
        if not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be positive")


@dataclass
class ObstacleSolution:
    value: np.ndarray
    active_set: np.ndarray
    kkt: dict
    energy: float
    iterations: int
    method: str = "pdas"
    converged: bool = True
    notes: list = field(default_factory=list)

    @property
    def kkt_max(self):
        return max(self.kkt.values())

    def to_dict(self):
        return {
            "value": [float(x) for x in self.value],
            "active_set": [int(i) for i in self.active_set],
            "kkt": {k: float(v) for k, v in self.kkt.items()},
            "energy": float(self.energy),
            "iterations": int(self.iterations),
            "method": self.method,
            "converged": bool(self.converged),
        }


def _row_scale(a, v):
    """max_i sum_j |A_ij||v_j|, the roundoff scale of (Av)_i."""
    return float((abs(a) @ np.abs(v)).max())


def activation_mask(v, u):
    return v - u <= ACTIVATION_RTOL * np.maximum(1.0, np.abs(u))


def kkt_residuals(a, u, v):
    """Normalized KKT residuals of ``v`` for the obstacle ``u``."""
    av = a @ v
    scale_v = max(float(np.abs(u).max()), float(np.abs(v).max()), np.finfo(float).tiny)
    scale_r = max(_row_scale(a, v), np.finfo(float).tiny)
    active = activation_mask(v, u)
    inactive = ~active
    gap = v - u
    return {
        "feasibility": float(np.max(np.maximum(u - v, 0.0))) / scale_v,
        "stationarity": float(np.max(np.abs(av[inactive]), initial=0.0)) / scale_r,
        "sign": float(np.max(np.maximum(-av[active], 0.0), initial=0.0)) / scale_r,
        "complementarity": float(np.max(np.abs(av * gap))) / (scale_r * scale_v),
    }


def _finish(a, u, v, iterations, method, notes=()):
    v = np.maximum(v, u)
    kkt = kkt_residuals(a, u, v)
    return ObstacleSolution(
        value=v,
        active_set=np.flatnonzero(activation_mask(v, u)),
        kkt=kkt,
        energy=float(v @ (a @ v)),
        iterations=iterations,
        method=method,
        notes=list(notes),
    )


def _solve_block(a, u, active, opts, atol):
    """Solve (Av)_I = 0 with v_A = u_A by Jacobi-PCG on the inactive block."""
    v = u.copy()
    inactive = np.flatnonzero(~active)
    if inactive.size == 0:
        return v, 0
    act = np.flatnonzero(active)
    a_ii = a[inactive][:, inactive].tocsr()
    a_ii.sort_indices()
    b = -(a[inactive][:, act] @ u[act]) if act.size else np.zeros(inactive.size)
    x = np.zeros(inactive.size)
    max_iter = opts.cg_max_iter or max(50, 20 * inactive.size)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        v[inactive] = 0.0
        return v, 0
    its, rel = _kernels.pcg(a_ii.indptr, a_ii.indices, a_ii.data, b, x, atol / bnorm, max_iter)
    if its < 0:
        raise ObstacleSolverError("inner conjugate gradient lost positive definiteness")
    if rel * bnorm > atol:
        raise ObstacleSolverError(
            f"inner conjugate gradient did not converge: residual {rel * bnorm:.3e} > {atol:.3e}"
        )
    v[inactive] = x
    return v, its


def _initial_active_set(a, u, opts, deg):
    """Contact set guess: multiplier sign at u, refined by a short PSOR pass.

    From full contact the PDAS front moves one node per iteration, so large
    problems get a cheap PSOR estimate first.
    """
    active = (a @ u) >= -deg
    if u.size <= opts.warm_start_min_size or active.all():
        return active
    warm = SolverOptions(kkt_tol=1e-5, psor_max_sweeps=min(opts.psor_max_sweeps, 50 * u.size))
    v, _, _ = _psor(a, u, warm)
    return activation_mask(v, u) | (v - u <= 1e-8 * np.abs(u).max())


def _pdas(a, u, opts):
    diag = a.diagonal()
    scale_u = _row_scale(a, u)
    atol = 1e-3 * opts.kkt_tol * scale_u
    deg = 64 * np.finfo(float).eps * scale_u
    active = _initial_active_set(a, u, opts, deg)
    seen = {active.tobytes()}
    inner = 0
    for it in range(1, opts.max_iter + 1):
        v, cg_its = _solve_block(a, u, active, opts, atol)
        inner += cg_its
        lam = a @ v
        lam[~active] = 0.0
        # degenerate nodes (zero gap, zero multiplier) stay active
        indicator = lam + diag * (u - v)
        new_active = indicator >= -deg
        if np.array_equal(new_active, active):
            return v, it, "converged"
        key = new_active.tobytes()
        if key in seen:
            return v, it, "cycling"
        seen.add(key)
        active = new_active
    return v, opts.max_iter, "max_iter"


def _psor(a, u, opts, v0=None):
    n = u.size
    diag = a.diagonal()
    omega = opts.psor_omega
    if omega is None:
        omega = min(1.98, max(1.0, 2.0 / (1.0 + np.sin(np.pi / (n + 1)))))
    v = np.maximum(u, v0) if v0 is not None else u.copy()
    v = np.ascontiguousarray(v, dtype=float)
    tol = 1e-3 * opts.kkt_tol * float(np.abs(u).max())
    sweeps, change = _kernels.psor(a.indptr, a.indices, a.data, diag, u, v, omega, opts.psor_max_sweeps, tol)
    return v, sweeps, change <= tol


def _polish(a, u, v, opts):
    """Exact block solve on the active set detected from an approximate solution."""
    active = activation_mask(v, u) | ((a @ v) > 0) & (v - u <= 1e-6 * np.maximum(1.0, np.abs(u)))
    w, _ = _solve_block(a, u, active, opts, 1e-3 * opts.kkt_tol * _row_scale(a, u))
    return np.maximum(w, u)


def solve_obstacle(S, u, opts=None):
    """Minimize the energy over fields dominating ``u``."""
    opts = opts or SolverOptions()
    S.require_admissible()
    u = as_field(u, S.node_count, "u")
    a = S.operator
    notes = []
    if opts.method == "pdas":
        try:
            v, its, status = _pdas(a, u, opts)
        except ObstacleSolverError as exc:
            v, its, status = u.copy(), 0, str(exc)
        if status == "converged":
            sol = _finish(a, u, v, its, "pdas")
            if sol.kkt_max <= opts.kkt_tol:
                return sol
            notes.append(f"pdas KKT residual {sol.kkt_max:.3e} above tolerance")
        else:
            notes.append(f"pdas stopped: {status}")
        log.info("obstacle: falling back to projected SOR (%s)", notes[-1])
        v0 = v
    else:
        its, v0 = 0, None
    v, sweeps, ok = _psor(a, u, opts, v0)
    if not ok:
        notes.append(f"psor did not converge in {sweeps} sweeps")
    try:
        cand = _polish(a, u, v, opts)
        cand_kkt = kkt_residuals(a, u, cand)
        if max(cand_kkt.values()) <= max(kkt_residuals(a, u, v).values()):
            v = cand
    except ObstacleSolverError as exc:
        notes.append(f"polish failed: {exc}")
    sol = _finish(a, u, v, its + sweeps, "psor", notes)
    if sol.kkt_max > opts.kkt_tol:
        sol.converged = False
        if opts.raise_on_failure:
            raise ObstacleSolverError(
                f"obstacle solve failed: KKT residual {sol.kkt_max:.3e} > {opts.kkt_tol:.1e}; " + "; ".join(notes),
                solution=sol,
            )
    return sol


def fixed_point_residual(S, u, opts=None, solution=None):
    """||T(u) - u||_inf / ||u||_inf."""
    u = as_field(u, S.node_count, "u")
    if solution is None:
        solution = solve_obstacle(S, u, opts)
    return float(np.abs(solution.value - u).max() / np.abs(u).max())


def enumerate_obstacle(a, u, tol=1e-12):
    """Brute-force oracle: try every active set of a small dense problem.

    Each candidate fixes ``v = u`` on the active set and solves the remaining
    equations; the KKT-feasible candidate of least energy is returned.
    """
    a = np.asarray(a.toarray() if hasattr(a, "toarray") else a, dtype=float)
    u = np.asarray(u, dtype=float)
    n = u.size
    if n > 16:
        raise ValueError("enumeration oracle is limited to 16 unknowns")
    scale = float((np.abs(a) @ np.abs(u)).max())
    best, best_e = None, np.inf
    for mask in itertools.product((True, False), repeat=n):
        act = np.array(mask)
        ina = ~act
        v = u.copy()
        if ina.any():
            rhs = -a[np.ix_(ina, act)] @ u[act]
            try:
                v[ina] = np.linalg.solve(a[np.ix_(ina, ina)], rhs)
            except np.linalg.LinAlgError:
                continue
        av = a @ v
        if np.any(v < u - tol * max(1.0, np.abs(u).max())):
            continue
        if np.any(av[act] < -tol * scale):
            continue
        e = float(v @ av)
        if e < best_e:
            best, best_e = v, e
    if best is None:
        raise RuntimeError("no KKT point found by enumeration")
    return best, best_e
