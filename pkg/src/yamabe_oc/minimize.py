"""Minimization of J_p and I_p by nonlinear inverse iteration.

Each step solves A v = rho * u**p and renormalizes in L^{p+1}; this never
increases J_p. The optimal-control variant projects every iterate with the
obstacle map. At the critical exponent the discrete problem is approached by
continuation in p from the subcritical side.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .conformal import discrete_scalar_curvature
from .discretization import as_field, energy, lq_norm
from .functionals import check_exponent, eval_I, eval_J
from .obstacle import SolverOptions, fixed_point_residual, solve_obstacle
from .sampling import sample_positive_field

log = logging.getLogger(__name__)

DESCENT_RTOL = 1e-12
CLAMP_RTOL = 1e-14


class MinimizationError(RuntimeError):
    pass


@dataclass
class MinimizeOptions:
    obj_tol: float = 1e-10
    el_tol: float = 1e-8
    max_iter: int = 500
    restarts: int = 5
    levels: int = 8
    curv_tol: float = 1e-3
    seed: int = 0
    roughness: float = 0.5
    clamp_patience: int = 3
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class MinimizerReport:
    p: float
    field: np.ndarray
    value: float
    el_residual: float
    fix_residual: float
    curvature_rel_dev: float
    iterations: int
    converged: bool
    functional: str = "J"
    descent_violations: int = 0
    clamp_events: int = 0
    trace: list = field(default_factory=list, repr=False)
    levels: list = field(default_factory=list, repr=False)

    def to_dict(self, with_field=True):
        out = {
            "functional": self.functional,
            "p": float(self.p),
            "value": float(self.value),
            "el_residual": float(self.el_residual),
            "fix_residual": float(self.fix_residual),
            "curvature_rel_dev": float(self.curvature_rel_dev),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "descent_violations": int(self.descent_violations),
            "clamp_events": int(self.clamp_events),
            "levels": self.levels,
        }
        if with_field:
            out["field"] = [float(x) for x in self.field]
        return out

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "J_p", "el_residual", "fix_residual"])
            for row in self.trace:
                writer.writerow([row[0]] + [f"{x:.17g}" for x in row[1:]])


def _normalize(S, u, q):
    return u / lq_norm(S, u, q)


def el_residual(S, u, p, value=None):
    """Normalized Euler-Lagrange residual of J_p at u (any scaling of u)."""
    u = _normalize(S, as_field(u, S.node_count), p + 1.0)
    if value is None:
        value = energy(S, u, u)
    rhs = value * S.volume_weights * u**p
    return float(np.abs(S.operator @ u - rhs).max() / np.abs(rhs).max())


def _iterate(S, u0, p, opts, project=False):
    q = p + 1.0
    sopts = opts.solver
    u = _normalize(S, as_field(u0, S.node_count, "initial field"), q)
    if project:
        u = _normalize(S, solve_obstacle(S, u, sopts).value, q)
    value = eval_J(S, u, p)
    rho = S.volume_weights
    trace = []
    violations = clamps = streak = 0
    converged = False
    el = el_residual(S, u, p, value)
    it = 0
    for it in range(1, opts.max_iter + 1):
        v = S.factor.solve(rho * u**p)
        floor = CLAMP_RTOL * v.max()
        low = v < floor
        if low.any():
            clamps += 1
            streak += 1
            v = np.where(low, floor, v)
            log.warning("positivity clamp at %d node(s), iteration %d", int(low.sum()), it)
            if streak >= opts.clamp_patience:
                raise MinimizationError(f"iterates lost positivity for {streak} consecutive steps")
        else:
            streak = 0
        if project:
            sol = solve_obstacle(S, v, sopts)
            v = sol.value
        v = _normalize(S, v, q)
        new_value = eval_J(S, v, p)
        if it > 1 and new_value > value * (1 + DESCENT_RTOL):
            violations += 1
        fix = fixed_point_residual(S, v, sopts) if not project else fixed_point_residual(S, v, sopts)
        el = el_residual(S, v, p, new_value)
        trace.append((it, new_value, el, fix))
        change = abs(new_value - value)
        u, value = v, new_value
        if change <= opts.obj_tol * abs(value) and el <= opts.el_tol:
            converged = True
            break
    return u, value, el, it, converged, violations, clamps, trace


def _report(S, p, u, value, el, its, converged, violations, clamps, trace, opts, functional):
    top = S.crit_exponent - 1.0
    curv = discrete_scalar_curvature(S, u).rel_dev if p >= top else float("nan")
    if functional == "I":
        value = eval_I(S, u, p, opts.solver)
    return MinimizerReport(
        p=p,
        field=u,
        value=value,
        el_residual=el,
        fix_residual=fixed_point_residual(S, u, opts.solver),
        curvature_rel_dev=curv,
        iterations=its,
        converged=converged,
        functional=functional,
        descent_violations=violations,
        clamp_events=clamps,
        trace=trace,
    )


def _starts(S, opts, init):
    if init is not None:
        return [as_field(init, S.node_count, "init")]
    count = max(1, opts.restarts)
    return [sample_positive_field(S, opts.seed + k, opts.roughness) for k in range(count)]


def _multistart(S, p, opts, init, project, functional):
    best = None
    for u0 in _starts(S, opts, init):
        res = _iterate(S, u0, p, opts, project)
        rep = _report(S, p, *res, opts, functional)
        if best is None or rep.value < best.value:
            best = rep
    return best


def minimize_J(S, p, opts=None, init=None):
    """Estimate Y^p (subcritical p) by multi-start inverse iteration."""
    opts = opts or MinimizeOptions()
    p = check_exponent(S, p)
    if p >= S.crit_exponent - 1.0:
        raise ValueError("minimize_J needs a subcritical exponent; use continue_to_critical")
    S.require_admissible()
    return _multistart(S, p, opts, init, project=False, functional="J")


def minimize_I(S, p, opts=None, init=None):
    """Estimate Y^p_oc with obstacle-projected inverse iteration."""
    opts = opts or MinimizeOptions()
    p = check_exponent(S, p)
    S.require_admissible()
    if p >= S.crit_exponent - 1.0 and init is None:
        return continue_to_critical(S, opts, functional="I")
    return _multistart(S, p, opts, init, project=True, functional="I")


def continuation_schedule(S, levels):
    top = S.crit_exponent - 1.0
    ps = [max(1.0, top - 2.0**-k) for k in range(1, levels + 1)]
    return sorted(set(ps)) + [top]


def continue_to_critical(S, opts=None, functional="J", init=None):
    """Warm-started sweep p_k = 2*-1 - 2^-k up to the critical exponent."""
    opts = opts or MinimizeOptions()
    S.require_admissible()
    project = functional == "I"
    schedule = continuation_schedule(S, opts.levels)
    field_ = init
    rep = None
    levels = []
    total = 0
    for k, p in enumerate(schedule):
        if k == 0 and field_ is None:
            rep = _multistart(S, p, opts, None, project, functional)
        else:
            res = _iterate(S, field_, p, opts, project)
            rep = _report(S, p, *res, opts, functional)
        total += rep.iterations
        field_ = rep.field
        levels.append({"p": p, "value": rep.value, "iterations": rep.iterations, "converged": rep.converged})
        if not rep.converged:
            log.warning("continuation level p=%.6g did not converge (el=%.3e)", p, rep.el_residual)
    rep.levels = levels
    rep.iterations = total
    rep.converged = all(lv["converged"] for lv in levels)
    return rep


def cross_verify_minimizers(S, p, opts=None, rep_J=None, rep_I=None, tol=1e-6):
    """Check that each minimizer attains the other functional's infimum."""
    opts = opts or MinimizeOptions()
    p = check_exponent(S, p)
    critical = p >= S.crit_exponent - 1.0
    if rep_J is None:
        rep_J = continue_to_critical(S, opts, "J") if critical else minimize_J(S, p, opts)
    if rep_I is None:
        rep_I = minimize_I(S, p, opts)
    i_at_j = eval_I(S, rep_J.field, p, opts.solver)
    j_at_i = eval_J(S, rep_I.field, p)
    scale = max(abs(rep_J.value), abs(rep_I.value))
    residuals = {
        "values": abs(rep_J.value - rep_I.value) / scale,
        "J_minimizer_in_I": abs(i_at_j - rep_I.value) / scale,
        "I_minimizer_in_J": abs(j_at_i - rep_J.value) / scale,
    }
    checks = {k: v <= tol for k, v in residuals.items()}
    return {
        "p": p,
        "Y_p": rep_J.value,
        "Y_p_oc": rep_I.value,
        "residuals": residuals,
        "checks": checks,
        "tolerance": tol,
        "pass": all(checks.values()),
    }
