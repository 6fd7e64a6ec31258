"""Command-line entry point: ``yamabe-oc {build,obstacle,minimize,laws,sphere}``.

Settings come from three layers, highest first: command-line flags, a
``key = value`` config file (``--config``), and the defaults in
``DEFAULTS``. Unknown config keys are rejected.

Exit codes: 0 success, 1 usage or config error, 2 inadmissible structure,
3 solver failure, 4 law or criterion failure.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import sphere as sph
from .conformal import deform
from .discretization import (
    InadmissibleError,
    StructureError,
    build_from_matrices,
    build_symmetric_sphere,
    read_vector,
    write_structure,
)
from .lawcheck import run_laws
from .minimize import (
    MinimizationError,
    MinimizeOptions,
    continue_to_critical,
    cross_verify_minimizers,
    minimize_I,
    minimize_J,
)
from .obstacle import ObstacleSolverError, SolverOptions, solve_obstacle
from .sampling import sample_positive_field

EXIT_OK, EXIT_USAGE, EXIT_INADMISSIBLE, EXIT_SOLVER, EXIT_LAW = 0, 1, 2, 3, 4

log = logging.getLogger("yamabe_oc")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Every setting with its default.

    ``p = 0`` means the critical exponent. ``deform_seed = -1`` runs on the
    structure as given; any other value deforms it by a sampled conformal
    factor first. ``lambdas`` is a comma-separated list of bubble dilations.
    """

    sphere_n: int = 3
    sphere_N: int = 512
    stiffness: str = ""
    curvature_mass: str = ""
    weights: str = ""
    n: int = 3
    method: str = "pdas"
    kkt_tol: float = 1e-10
    fix_tol: float = 1e-8
    max_iter: int = 200
    p: float = 0.0
    levels: int = 8
    restarts: int = 5
    obj_tol: float = 1e-10
    el_tol: float = 1e-8
    minimize_max_iter: int = 500
    samples: int = 50
    seed: int = 0
    roughness: float = 0.5
    deform_seed: int = -1
    lambdas: str = "1,2,5"
    out: str = "."

    @property
    def from_matrices(self):
        return bool(self.stiffness)

    def solver(self):
        return SolverOptions(kkt_tol=self.kkt_tol, fix_tol=self.fix_tol, max_iter=self.max_iter, method=self.method)

    def minimizer(self):
        return MinimizeOptions(
            obj_tol=self.obj_tol,
            el_tol=self.el_tol,
            max_iter=self.minimize_max_iter,
            restarts=self.restarts,
            levels=self.levels,
            seed=self.seed,
            roughness=self.roughness,
            solver=self.solver(),
        )


DEFAULTS = RunConfig()
_TYPES = {f.name: type(getattr(DEFAULTS, f.name)) for f in fields(RunConfig)}


def _coerce(key, raw):
    kind = _TYPES[key]
    try:
        return kind(raw) if kind is not int else int(str(raw), 10)
    except ValueError as exc:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from exc


def read_config(path):
    """Parse a ``key = value`` file; a leading ``[section]`` header is optional."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _TYPES:
                raise UsageError(f"{path}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def _parse_sphere(tokens):
    spec = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or key not in ("n", "N"):
            raise UsageError(f"--sphere expects n=<int> N=<int>, got {tok!r}")
        try:
            spec[key] = int(val)
        except ValueError as exc:
            raise UsageError(f"--sphere {key} must be an integer") from exc
    if spec.get("n", 3) < 3:
        raise UsageError("--sphere needs n >= 3")
    if spec.get("N", 8) < 8:
        raise UsageError("--sphere needs N >= 8")
    return spec


def resolve_config(args):
    """Merge defaults, config file and flags (flags win)."""
    values = {}
    if args.config:
        values.update(read_config(args.config))
    if args.sphere is not None:
        spec = _parse_sphere(args.sphere)
        values["sphere_n"] = spec.get("n", values.get("sphere_n", DEFAULTS.sphere_n))
        values["sphere_N"] = spec.get("N", values.get("sphere_N", DEFAULTS.sphere_N))
        values["stiffness"] = ""
    if args.matrices is not None:
        values["stiffness"], values["curvature_mass"], values["weights"] = args.matrices
    flag_map = {
        "n": "n",
        "p": "p",
        "levels": "levels",
        "samples": "samples",
        "seed": "seed",
        "tol_kkt": "kkt_tol",
        "out": "out",
        "lambdas": "lambdas",
        "deform_seed": "deform_seed",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            values[key] = val
    cfg = RunConfig(**values)
    if cfg.from_matrices and not (cfg.curvature_mass and cfg.weights):
        raise UsageError("matrix structures need stiffness, curvature_mass and weights files")
    if cfg.sphere_n < 3:
        raise UsageError("sphere dimension n must be >= 3")
    if cfg.kkt_tol <= 0 or cfg.fix_tol <= 0:
        raise UsageError("tolerances must be positive")
    if cfg.samples < 0 or cfg.levels < 1:
        raise UsageError("samples must be >= 0 and levels >= 1")
    return cfg


def load_structure(cfg):
    if cfg.from_matrices:
        S = build_from_matrices(cfg.stiffness, cfg.curvature_mass, cfg.weights, cfg.n)
    else:
        S = build_symmetric_sphere(cfg.sphere_n, cfg.sphere_N)
    S.require_admissible()
    if cfg.deform_seed >= 0:
        w = sample_positive_field(S, [cfg.deform_seed, 0, 9], cfg.roughness)
        S = deform(S, w)
    return S


def _out(cfg, name):
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path / name


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True, default=_plain)
        fh.write("\n")


def _exponent(S, cfg):
    top = S.crit_exponent - 1.0
    return top if cfg.p == 0 else cfg.p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_build(cfg, args):
    if cfg.from_matrices:
        S = build_from_matrices(cfg.stiffness, cfg.curvature_mass, cfg.weights, cfg.n)
    else:
        S = build_symmetric_sphere(cfg.sphere_n, cfg.sphere_N)
    adm = S.admissibility()
    write_structure(S, _out(cfg, "stiffness.txt"), _out(cfg, "curvature_mass.txt"), _out(cfg, "weights.txt"))
    report = {"label": S.label, "n": S.n, "N": S.node_count, "volume": S.volume, **adm}
    _dump(_out(cfg, "build.json"), report)
    print(f"structure: {S.label}")
    print(f"min eigenvalue: {adm['min_eigenvalue']:.17g}")
    print(f"admissible: {'true' if adm['admissible'] else 'false'}")
    return EXIT_OK if adm["admissible"] else EXIT_INADMISSIBLE


def cmd_obstacle(cfg, args):
    S = load_structure(cfg)
    u = read_vector(args.u_file)
    opts = cfg.solver()
    try:
        sol = solve_obstacle(S, u, opts)
        code = EXIT_OK
    except ObstacleSolverError as exc:
        if exc.solution is None:
            raise
        sol, code = exc.solution, EXIT_SOLVER
        print(f"solver failure: {exc}", file=sys.stderr)
    _dump(_out(cfg, "obstacle.json"), sol.to_dict())
    if S.nodes is not None:
        sph.write_profiles(_out(cfg, "obstacle_profile.csv"), S, {"u": u, "T_u": sol.value})
    print(f"energy: {sol.energy:.17g}")
    print(f"active nodes: {sol.active_set.size} of {S.node_count}")
    print(f"kkt max: {sol.kkt_max:.3e} ({sol.method}, {sol.iterations} iterations)")
    return code


def cmd_minimize(cfg, args):
    S = load_structure(cfg)
    mopts = cfg.minimizer()
    p = _exponent(S, cfg)
    critical = p >= S.crit_exponent - 1.0
    if critical:
        rep_j = continue_to_critical(S, mopts, "J")
        rep_i = continue_to_critical(S, mopts, "I")
    else:
        rep_j = minimize_J(S, p, mopts)
        rep_i = minimize_I(S, p, mopts)
    cv = cross_verify_minimizers(S, p, mopts, rep_j, rep_i)
    rep_j.write_trace(_out(cfg, "trace_J.csv"))
    rep_i.write_trace(_out(cfg, "trace_I.csv"))
    _dump(
        _out(cfg, "minimize.json"),
        {"structure": S.label, "J": rep_j.to_dict(), "I": rep_i.to_dict(), "cross_verification": cv},
    )
    if S.nodes is not None:
        sph.write_profiles(_out(cfg, "minimizer_profile.csv"), S, {"u_J": rep_j.field, "u_I": rep_i.field})
    print(f"p = {p:.17g}")
    print(f"Y^p    (J) = {rep_j.value:.17g}  el={rep_j.el_residual:.2e} converged={rep_j.converged}")
    print(f"Y^p_oc (I) = {rep_i.value:.17g}  el={rep_i.el_residual:.2e} converged={rep_i.converged}")
    for key, val in cv["residuals"].items():
        print(f"  {key:<20} {val:.3e}  {'ok' if cv['checks'][key] else 'FAIL'}")
    return EXIT_OK if cv["pass"] else EXIT_LAW


def cmd_laws(cfg, args):
    S = load_structure(cfg)
    report = run_laws(S, cfg.samples, cfg.seed, cfg.solver(), cfg.minimizer(), cfg.roughness)
    report.write_json(_out(cfg, "laws.json"))
    print(report.table())
    return EXIT_OK if report.passed else EXIT_LAW


def _lambdas(cfg):
    try:
        return [float(x) for x in cfg.lambdas.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse lambdas {cfg.lambdas!r}") from exc


def cmd_sphere(cfg, args):
    if cfg.from_matrices or cfg.deform_seed >= 0:
        raise UsageError("the sphere command needs an undeformed symmetric sphere")
    S = load_structure(cfg)
    opts = cfg.solver()
    y = sph.sphere_constant(S)
    margin = sph.sobolev_margin(S)
    bubbles, profiles, ok = [], {}, True
    for lam in _lambdas(cfg):
        rep = sph.verify_sphere_theorem(S, lam, opts, y_estimate=y["estimate"])
        rep["sobolev"] = sph.obstacle_sobolev_check(S, sph.bubble(S, lam), y["estimate"], margin, opts)
        rep["pass"] = rep["pass"] and rep["sobolev"]["equality"]
        ok &= rep["pass"]
        bubbles.append(rep)
        profiles[f"bubble_{lam:g}"] = sph.bubble(S, lam)
    probe = 1.0 + 0.5 * np.cos(S.nodes)
    non_bubble = sph.obstacle_sobolev_check(S, probe, y["estimate"], margin, opts)
    non_bubble["rejected"] = bool(non_bubble["slack"] >= 10.0 * margin)
    ok &= non_bubble["rejected"]
    profiles["non_bubble"] = probe
    sph.write_profiles(_out(cfg, "bubble_profiles.csv"), S, profiles)
    _dump(
        _out(cfg, "sphere.json"),
        {"structure": S.label, "Y": y, "margin": margin, "bubbles": bubbles, "non_bubble": non_bubble, "pass": ok},
    )
    print(f"Y estimate J(1) = {y['estimate']:.17g} (closed form {y['closed_form']:.17g})")
    print(f"sobolev margin = {margin:.3e}")
    for rep in bubbles:
        status = "pass" if rep["pass"] else "FAIL"
        fails = [k for k, c in rep["clauses"].items() if not c["pass"]]
        extra = f" ({', '.join(fails)})" if fails else ""
        print(f"  lambda={rep['lambda']:<6g} J={rep['J']:.12g} slack={rep['sobolev']['slack']:.2e}  {status}{extra}")
    print(f"  non-bubble slack={non_bubble['slack']:.3e}  {'rejected' if non_bubble['rejected'] else 'NOT rejected'}")
    return EXIT_OK if ok else EXIT_LAW


COMMANDS = {
    "build": cmd_build,
    "obstacle": cmd_obstacle,
    "minimize": cmd_minimize,
    "laws": cmd_laws,
    "sphere": cmd_sphere,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--sphere", nargs="+", metavar="KEY=VALUE", help="symmetric round sphere, e.g. n=3 N=512")
    src.add_argument("--matrices", nargs=3, metavar=("K", "MR", "RHO"), help="stiffness, curvature mass, weights files")
    common.add_argument("--n", type=int, help="dimension for matrix structures (default 3)")
    common.add_argument("--p", type=float, help="exponent; 0 or omitted means critical")
    common.add_argument("--levels", type=int, help="continuation levels (default 8)")
    common.add_argument("--samples", type=int, help="law-check samples (default 50)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--tol-kkt", dest="tol_kkt", type=float, help="obstacle KKT tolerance (default 1e-10)")
    common.add_argument("--deform-seed", dest="deform_seed", type=int, help="deform by a sampled conformal factor")
    common.add_argument("--lambdas", help="bubble dilations for the sphere command (default 1,2,5)")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--config", help="key = value config file")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="yamabe-oc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build a structure and check admissibility")
    ob = sub.add_parser("obstacle", parents=[common], help="solve the obstacle problem for a field file")
    ob.add_argument("u_file")
    sub.add_parser("minimize", parents=[common], help="estimate Y^p and Y^p_oc and cross-verify")
    sub.add_parser("laws", parents=[common], help="run the randomized law ledger")
    sub.add_parser("sphere", parents=[common], help="bubble and obstacle-Sobolev checks on the round sphere")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, StructureError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InadmissibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except (ObstacleSolverError, MinimizationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
