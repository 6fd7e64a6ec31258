"""Yamabe quotient J_p, optimal-control quotient I_p and their gaps."""
from __future__ import annotations

from dataclasses import asdict, dataclass

from .discretization import as_field, energy, lq_norm
from .obstacle import fixed_point_residual, solve_obstacle

EQUALITY_TOL = 1e-8


def nearly_equal(a, b, tol=EQUALITY_TOL):
    """Symmetric relative test |a-b| <= tol (1+|a|+|b|)."""
    return abs(a - b) <= tol * (1.0 + abs(a) + abs(b))


def check_exponent(S, p):
    top = S.crit_exponent - 1.0
    if not (1.0 <= p <= top * (1 + 1e-14)):
        raise ValueError(f"exponent p={p} outside [1, {top}]")
    return min(float(p), top)


def eval_J(S, u, p):
    p = check_exponent(S, p)
    u = as_field(u, S.node_count)
    return energy(S, u, u) / lq_norm(S, u, p + 1.0) ** 2


def eval_I(S, u, p, opts=None, solution=None):
    p = check_exponent(S, p)
    u = as_field(u, S.node_count)
    if solution is None:
        solution = solve_obstacle(S, u, opts)
    return energy(S, u, u) / lq_norm(S, solution.value, p + 1.0) ** 2


@dataclass
class QuotientReport:
    p: float
    j_value: float
    i_value: float
    gap_j: float
    gap_i: float
    gap_formula: float
    fix_residual: float

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items()}


def quotient_report(S, u, p, opts=None, solution=None):
    """All quotient and gap values of ``u`` from a single obstacle solve.

    I_p(T(u)) uses T(T(u)) = T(u), so ``gap_i`` equals ``gap_formula`` up to
    rounding by construction; the law harness checks that identity with a
    second, independent solve.
    """
    p = check_exponent(S, p)
    u = as_field(u, S.node_count)
    if solution is None:
        solution = solve_obstacle(S, u, opts)
    tu = solution.value
    q = p + 1.0
    e_u = energy(S, u, u)
    e_t = energy(S, tu, tu)
    n_u = lq_norm(S, u, q) ** 2
    n_t = lq_norm(S, tu, q) ** 2
    j_u, j_t = e_u / n_u, e_t / n_t
    i_u, i_t = e_u / n_t, e_t / n_t
    return QuotientReport(
        p=p,
        j_value=j_u,
        i_value=i_u,
        gap_j=j_u - j_t,
        gap_i=i_u - i_t,
        gap_formula=(e_u - e_t) / n_t,
        fix_residual=fixed_point_residual(S, u, solution=solution),
    )
