"""Command line front end: ``semistable <command> [options]``.

Exit codes: 0 when every asserted check passes, 1 when a check fails,
2 for configuration or hypothesis errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__, kernels
from .branch import BracketError, ShootConfig, extremal_profile, solve_branch
from .core import (ConstructionError, HypothesisError, InputError, Nonlinearity, RadialGrid,
                   RadialProfile, SemistableError, growth_exponent, jl_exponent)
from .estimates import (THEOREM_IDS, check_lemma_essential, check_monotonias, check_rand2r,
                        check_thm_estimas, check_thm_extremal, check_thm_principal,
                        potential_from_profile, semistability)
from .family import (CounterexampleTarget, FamilySpec, Seed, counterexample_first,
                     counterexample_second, counterexample_third, default_grid, g_table_csv,
                     hardy_check, random_seed, recover_g, verify_family, build_family)
from .stability import LinearizedOperator, first_eigenvalue, random_eta_suite

OUT_ENV = "SEMISTABLE_OUT"
DEFAULT_OUT = "semistable_out"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(SemistableError):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str
    dim: int
    nonlinearity: str = "exp"
    grid_nodes: int = 2000
    grid_rmin: Optional[float] = None
    tol_ode: float = 1e-9
    tol_eigen: float = 1e-6
    tol_assert: float = 1e-6
    seed: int = 0
    out: str = DEFAULT_OUT
    format: str = "json"
    options: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tol_ode", "tol_eigen", "tol_assert"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"--{name.replace('_', '-')} must be a positive number")
        if self.grid_nodes < 16:
            raise ConfigError("--grid-nodes must be at least 16")
        if self.grid_rmin is not None and not 0.0 < self.grid_rmin < 0.5:
            raise ConfigError("--grid-rmin must lie in (0, 1/2)")

    @property
    def r_min(self) -> float:
        return 1e-6 if self.grid_rmin is None else self.grid_rmin

    def grid(self) -> RadialGrid:
        return RadialGrid.geometric(self.grid_nodes, self.r_min)

    def shoot_config(self) -> ShootConfig:
        return ShootConfig(tol_u=self.tol_ode)

    def echo(self) -> dict:
        # the output location does not influence any result
        d = asdict(self)
        d.pop("out")
        return d


def parse_nonlinearity(text: str, dim: int) -> Nonlinearity:
    """exp | power:P | power:jl | table:PATH (CSV with s,f[,fprime] or s,g[,gprime])."""
    kind, _, arg = text.partition(":")
    if kind == "exp" and not arg:
        return Nonlinearity.exp()
    if kind == "power":
        if arg == "jl":
            if dim <= 10:
                raise ConfigError("power:jl needs N > 10")
            return Nonlinearity.power(jl_exponent(dim))
        try:
            return Nonlinearity.power(float(arg))
        except ValueError:
            raise ConfigError(f"bad power exponent {arg!r}") from None
    if kind == "table" and arg:
        try:
            text = Path(arg).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read nonlinearity table: {exc}") from None
        return Nonlinearity.from_table_csv(text)
    raise ConfigError(f"unknown nonlinearity {text!r} (use exp, power:P, power:jl or table:PATH)")


# --------------------------------------------------------------------------
# output


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def flatten(obj, prefix="") -> List[tuple]:
    rows = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            rows += flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            rows += flatten(v, f"{prefix}[{i}]")
    else:
        rows.append((prefix, obj))
    return rows


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.out)
        self.files: List[str] = []

    def text(self, name: str, text: str) -> str:
        atomic_write(self.root / name, text)
        self.files.append(name)
        return name

    def report(self, report: dict) -> str:
        report = clean(report)
        report["files"] = sorted(self.files + [self._report_name()])
        if self.cfg.format == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["key", "value"])
            for k, v in flatten(report):
                w.writerow([k, json.dumps(v) if not isinstance(v, str) else v])
            return self.text(self._report_name(), buf.getvalue())
        return self.text(self._report_name(), dumps(report))

    def _report_name(self) -> str:
        return f"{self.cfg.command}_report.{self.cfg.format}"


def provenance(cfg: RunConfig, grid: Optional[RadialGrid] = None) -> dict:
    out = {"version": __version__, "seed": cfg.seed, "accelerated": bool(kernels.USE_NUMBA)}
    if grid is not None:
        out["grid"] = {"size": grid.size, "r_min": grid.r_min, "grading": grid.grading}
    return out


def envelope(cfg: RunConfig, checks: list, passed: bool, grid=None, **extra) -> dict:
    rep = {"command": cfg.command, "config": cfg.echo(), "checks": checks, "passed": bool(passed),
           "provenance": provenance(cfg, grid)}
    rep.update(extra)
    return rep


def estimate_entries(reports) -> tuple:
    """(dicts, passed): a check fails only on status 'fail'; skipped never counts as a pass."""
    dicts = [r.to_dict() for r in reports]
    return dicts, all(r.status != "fail" for r in reports)


def _trace_name(rep, prefix="trace") -> str:
    item = f"_{rep.item}" if rep.item else ""
    return f"{prefix}_{rep.theorem_id}{item}.csv".replace("/", "-")


def write_traces(w: Writer, reports) -> None:
    for rep in reports:
        if rep.trace is not None:
            w.text(_trace_name(rep), rep.trace_csv())


# --------------------------------------------------------------------------
# commands


def _default_a_max(f: Nonlinearity) -> float:
    if f.kind == "exp":
        return 20.0 * f.scale
    if f.kind == "power":
        return 1e6 * f.scale
    return float(f.table_s[-1]) * f.scale


def _run_branch(cfg: RunConfig):
    f = parse_nonlinearity(cfg.nonlinearity, cfg.dim)
    a_max = cfg.options.get("a_max") or _default_a_max(f)
    grid = cfg.grid()
    br = solve_branch(f, cfg.dim, float(a_max), int(cfg.options.get("samples") or 30), grid=grid,
                      config=cfg.shoot_config())
    return f, grid, br


def _branch_checks(cfg: RunConfig, br) -> tuple:
    tol_mu = cfg.tol_eigen
    worst_res = max(p.residual for p in br.points)
    minimal = [p for p in br.points if p.on_minimal_branch]
    fold = None
    if br.turning_detected and minimal:
        # mu_1 vanishes exactly at the fold, so only its neighbours are asserted
        fold = max(minimal, key=lambda p: p.lam)
        minimal = [p for p in minimal if p is not fold]
    worst_mu = min(p.first_eigenvalue for p in minimal) if minimal else math.nan
    checks = [
        {"name": "residual", "value": worst_res, "threshold": cfg.tol_assert,
         "passed": bool(worst_res <= cfg.tol_assert)},
        {"name": "minimal_branch_semistable", "value": worst_mu, "threshold": -tol_mu,
         "passed": bool(minimal) and bool(worst_mu >= -tol_mu),
         "fold_eigenvalue": None if fold is None else fold.first_eigenvalue},
    ]
    return checks, all(c["passed"] for c in checks)


def cmd_branch(cfg: RunConfig) -> int:
    _, grid, br = _run_branch(cfg)
    w = Writer(cfg)
    refs = [w.text(f"profiles/point_{i:03d}.csv", p.profile.to_csv()) for i, p in enumerate(br.points)]
    w.text("branch.json", dumps(br.to_dict(refs)))
    checks, ok = _branch_checks(cfg, br)
    w.report(envelope(cfg, checks, ok, grid, lambda_star_estimate=br.lambda_star_estimate,
                      turning_detected=br.turning_detected))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_extremal(cfg: RunConfig) -> int:
    _, grid, br = _run_branch(cfg)
    ustar = extremal_profile(br)
    w = Writer(cfg)
    w.text("extremal.csv", ustar.to_csv())
    w.text("branch.json", dumps(br.to_dict()))
    reports = check_thm_extremal(ustar, potential_from_profile(ustar))
    write_traces(w, reports)
    entries, ok = estimate_entries(reports)
    w.report(envelope(cfg, entries, ok, grid, lambda_star_estimate=br.lambda_star_estimate,
                      lambda_star_interval=list(br.lambda_star_interval),
                      low_confidence=br.low_confidence))
    return EXIT_OK if ok else EXIT_FAIL


def _load_profile(path: str, dim: int) -> RadialProfile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read profile: {exc}") from None
    u = RadialProfile.from_csv(text, dim)
    if u.d1 is None or u.d2 is None or u.d3 is None:
        u = u.with_derivatives()
    return u


_CHECKS: Dict[str, Callable] = {
    "lemma_essential": lambda u, v: [check_lemma_essential(u, verdict=v)],
    "prop_rand2r": lambda u, v: [check_rand2r(u, verdict=v)],
    "thm_principal": lambda u, v: [check_thm_principal(u, verdict=v)],
    "thm_estimas": lambda u, v: check_thm_estimas(u, verdict=v),
    "lemma_monotonias": lambda u, v: [check_monotonias(u)],
    "thm_extremal": lambda u, v: check_thm_extremal(u, verdict=v),
}


def cmd_verify(cfg: RunConfig) -> int:
    w = Writer(cfg)
    path = cfg.options.get("profile")
    if path:
        u = _load_profile(str(path), cfg.dim)
        extremal = bool(cfg.options.get("extremal"))
    else:
        _, _, br = _run_branch(cfg)
        u = extremal_profile(br)
        w.text("extremal.csv", u.to_csv())
        extremal = True
    which = cfg.options.get("theorem") or "all"
    if which == "all":
        names = [t for t in THEOREM_IDS if t != "thm_extremal" or extremal]
    else:
        names = [which]
    verdict = semistability(u, potential_from_profile(u), cfg.tol_eigen)
    reports = []
    for name in names:
        reports += _CHECKS[name](u, verdict)
    write_traces(w, reports)
    entries, ok = estimate_entries(reports)
    w.report(envelope(cfg, entries, ok, u.grid, stability=verdict.to_dict()))
    return EXIT_OK if ok else EXIT_FAIL


def _parse_h(text: str, rng: np.random.Generator) -> Seed:
    kind, _, arg = text.partition(":")
    if kind == "zero":
        return Seed.zero()
    if kind == "poly":
        try:
            return Seed(tuple(float(c) for c in arg.split(",")), ())
        except ValueError:
            raise ConfigError(f"bad polynomial coefficients {arg!r}") from None
    if kind == "random":
        return random_seed(rng)
    if kind == "spec":
        try:
            return FamilySpec.from_json(Path(arg).read_text()).seed
        except OSError as exc:
            raise ConfigError(f"cannot read family spec: {exc}") from None
    raise ConfigError(f"unknown h descriptor {text!r} (use zero, poly:c0,c1,..., random or spec:PATH)")


_RADII = {
    "dyadic": lambda n: 2.0 ** -n,
    "triadic": lambda n: 3.0 ** -n,
    "harmonic": lambda n: 1.0 / (n + 1.0),
}


def _magnitudes(kind: str, radii: np.ndarray, order: int, dim: int) -> np.ndarray:
    n = np.arange(1, radii.size + 1, dtype=float)
    if kind == "linear":
        return n
    if kind == "geometric":
        return 10.0**n
    if kind == "factorial":
        return np.array([math.factorial(int(k)) for k in n], dtype=float)
    if kind == "dominant":
        # n times the natural scale r^{beta - order} of the order-th derivative
        return n * radii ** (growth_exponent(dim) - order)
    raise ConfigError(f"unknown magnitude sequence {kind!r}")


_BUILDERS = {1: counterexample_first, 2: counterexample_second, 3: counterexample_third}


def cmd_family(cfg: RunConfig) -> int:
    if cfg.dim < 10:
        raise HypothesisError("the family construction requires N >= 10")
    w = Writer(cfg)
    rng = np.random.default_rng(cfg.seed)
    ce = cfg.options.get("counterexample")
    if ce:
        order = int(str(ce).split("=")[-1])
        if order not in _BUILDERS:
            raise ConfigError("--counterexample must be 1, 2 or 3")
        count = int(cfg.options.get("count") or 10)
        radii = np.array([_RADII[str(cfg.options.get("radii") or "dyadic")](k)
                          for k in range(1, count + 1)])
        mags = _magnitudes(str(cfg.options.get("magnitudes") or "linear"), radii, order, cfg.dim)
        target = CounterexampleTarget(tuple(radii.tolist()), tuple(mags.tolist()), order)
        res = _BUILDERS[order](target, cfg.dim, cfg.grid_nodes, cfg.grid_rmin)
        spec, u, ok = res.spec, res.u, res.ok
        checks = [{"name": f"counterexample_{order}", "passed": ok, "details": res.checks}]
    else:
        seed = _parse_h(str(cfg.options.get("h") or "zero"), rng)
        spec = FamilySpec(cfg.dim, seed)
        u = build_family(spec, default_grid(spec, cfg.grid_nodes, cfg.r_min))
        result = verify_family(spec, u, seed=cfg.seed)
        ok = bool(result["theorem_holds"])
        checks = [{"name": "family", "passed": ok, "details": result}]
    w.text("family_spec.json", dumps(json.loads(spec.to_json())))
    w.text("profile.csv", u.to_csv())
    try:
        w.text("g.csv", g_table_csv(recover_g(u)))
    except InputError as exc:
        checks.append({"name": "recover_g", "passed": False, "reason": str(exc)})
        ok = False
    w.report(envelope(cfg, checks, ok, u.grid))
    return EXIT_OK if ok else EXIT_FAIL


def _parse_phi(text: str, dim: int, rng):
    kind, _, arg = text.partition(":")
    if kind == "radial":
        c, e = (dim - 2.0) / 4.0, dim - 2.0
    elif kind == "power":
        try:
            c, e = (float(x) for x in arg.split(","))
        except ValueError:
            raise ConfigError("use power:C,E for Phi = C r^E") from None
    elif kind == "family":
        if dim < 10:
            raise HypothesisError("the family construction requires N >= 10")
        return FamilySpec(dim, _parse_h(arg or "zero", rng)), None
    else:
        raise ConfigError(f"unknown Phi {text!r} (use radial, power:C,E or family[:h])")
    if not (c > 0 and e > 0):
        raise ConfigError("Phi = C r^E needs C > 0 and E > 0 to be increasing")
    return (lambda t: c * t**e), (lambda t: c * e * t ** (e - 1.0))


def cmd_hardy(cfg: RunConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    phi, dphi = _parse_phi(str(cfg.options.get("phi") or "radial"), cfg.dim, rng)
    count = int(cfg.options.get("count") or 12)
    checks = []
    for i, (eta, eta_p) in enumerate(random_eta_suite(cfg.r_min, count, cfg.seed)):
        res = hardy_check(phi, eta, eta_p, 1.0, dphi, nodes=int(cfg.options.get("nodes") or 20001))
        checks.append({"name": f"xi_{i:02d}", "lhs": res.lhs, "rhs": res.rhs, "passed": res.holds})
    ok = all(c["passed"] for c in checks)
    Writer(cfg).report(envelope(cfg, checks, ok))
    return EXIT_OK if ok else EXIT_FAIL


def _parse_potential(text: str, dim: int, grid: RadialGrid):
    kind, _, arg = text.partition(":")
    r = grid.nodes
    if kind == "zero":
        return grid, np.zeros_like(r)
    if kind == "const":
        return grid, np.full_like(r, float(arg))
    if kind == "inverse-square":
        c = float(arg) if arg else 2.0 * (dim - 2.0)
        return grid, c / r**2
    if kind == "profile":
        u = _load_profile(arg, dim)
        return u.grid, potential_from_profile(u)
    raise ConfigError(f"unknown potential {text!r} (zero, const:V, inverse-square[:C], profile:PATH)")


def cmd_stability(cfg: RunConfig) -> int:
    grid, v = _parse_potential(str(cfg.options.get("potential") or "zero"), cfg.dim, cfg.grid())
    verdict = first_eigenvalue(LinearizedOperator(grid, v, cfg.dim), cfg.tol_eigen)
    d = verdict.to_dict()
    checks = [{"name": "semistable", "passed": verdict.semistable, "details": d}]
    Writer(cfg).report(envelope(cfg, checks, verdict.semistable, grid))
    return EXIT_OK if verdict.semistable else EXIT_FAIL


COMMANDS = {"branch": cmd_branch, "extremal": cmd_extremal, "verify": cmd_verify,
            "family": cmd_family, "hardy": cmd_hardy, "stability": cmd_stability}


# --------------------------------------------------------------------------
# argument parsing


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--dim", type=int, required=True, help="space dimension N >= 2")
    g.add_argument("--nonlinearity", default="exp", help="exp | power:P | power:jl | table:PATH")
    g.add_argument("--grid-nodes", type=int, default=2000)
    g.add_argument("--grid-rmin", type=float, default=None)
    g.add_argument("--tol-ode", type=float, default=1e-9, help="|u(1)| accepted by the shooting")
    g.add_argument("--tol-eigen", type=float, default=1e-6, help="semistability tolerance on mu_1")
    g.add_argument("--tol-assert", type=float, default=1e-6, help="residual threshold for reports")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semistable", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_common()]

    helps = {"branch": "sample the minimal branch and estimate lambda*",
             "extremal": "pointwise estimates on the extremal profile"}
    for name in ("branch", "extremal"):
        p = sub.add_parser(name, parents=common, help=helps[name])
        p.add_argument("--a-max", type=float, default=None, help="largest center value u(0)")
        p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("verify", parents=common, help="run the pointwise estimate checks")
    p.add_argument("--profile", default=None, help="profile CSV (r,u[,u_r,u_rr,u_rrr])")
    p.add_argument("--theorem", choices=("all",) + THEOREM_IDS, default="all")
    p.add_argument("--extremal", action="store_true", help="treat the profile as extremal")
    p.add_argument("--a-max", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("family", parents=common, help="explicit semistable family and counterexamples")
    p.add_argument("--h", default="zero", help="zero | poly:c0,c1,... | random | spec:PATH")
    p.add_argument("--counterexample", default=None, help="derivative order 1, 2 or 3 (k=1 also accepted)")
    p.add_argument("--radii", choices=tuple(_RADII), default="dyadic")
    p.add_argument("--magnitudes", choices=("linear", "geometric", "factorial", "dominant"),
                   default="linear")
    p.add_argument("--count", type=int, default=None)

    p = sub.add_parser("hardy", parents=common, help="generalized Hardy inequality on test functions")
    p.add_argument("--phi", default="radial", help="radial | power:C,E | family[:h]")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--nodes", type=int, default=None)

    p = sub.add_parser("stability", parents=common, help="first eigenvalue of a radial potential")
    p.add_argument("--potential", default="zero",
                   help="zero | const:V | inverse-square[:C] | profile:PATH")
    return parser


_GLOBAL = ("dim", "nonlinearity", "grid_nodes", "grid_rmin", "tol_ode", "tol_eigen", "tol_assert",
           "seed", "format")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    ns = vars(args).copy()
    command = ns.pop("command")
    out = ns.pop("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    kwargs = {k: ns.pop(k) for k in _GLOBAL}
    return RunConfig(command=command, out=out, options=ns, **kwargs)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, InputError, HypothesisError) as exc:
        print(f"semistable: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConstructionError, BracketError) as exc:
        print(f"semistable: check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
