"""
Command-line entry point.

Each subcommand resolves its settings, writes ``manifest.json`` into the
output directory, runs one experiment and writes its JSON report (plus CSV
and SVG where there is a profile or a trend). Exit codes: 0 pass,
1 tolerance failure, 2 usage error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .beltrami import BeltramiProblem, beltrami_chain, field_eigenvalue, parse_field_spec, parse_point_set
from .carleman import (
    RadialGrid,
    RefinementStudy,
    WeightFamily,
    bound_state_control,
    build_H,
    commutator_audit,
    conjugate,
    mourre_decomposition_check,
    no_embedded_eigenvalue_probe,
    poly_weight_check,
    refinement_study,
    semiclassical_commutator_check,
    squared_norm_identity,
    structure_check,
    wave_packets,
)
from .config import Settings, load_config_file, resolve_settings
from .em_check import get_solution, verify_solution
from .errors import InheritLabError
from .frequency import (
    FrequencyConfig,
    classify_L2,
    decay_envelope,
    fit_decay_exponent,
    geometric_schedule,
    identity_from_profile,
    scan_monotonicity,
    scan_profile,
    synth_profile,
)
from .geometry import audit_asymptotic_flatness, get_metric
from .reports import plot_profile, plot_trend, records, write_csv, write_json, write_manifest
from .shell import shell_probe

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

CARLEMAN_CHECKS = ("structure", "commutator", "mourre", "poly-weight", "squared-identity", "probe", "semiclassical")


def _verdict(passed: bool) -> int:
    return EXIT_PASS if passed else EXIT_FAIL


def _metric_params(items: Optional[List[str]]) -> Dict[str, object]:
    params: Dict[str, object] = {}
    for item in items or []:
        key, eq, raw = item.partition("=")
        if not eq:
            raise ValueError(f"Metric parameter '{item}' is not key=value")
        try:
            params[key] = int(raw)
        except ValueError:
            params[key] = float(raw)
    return params


# -------------------------------------------------------------------
# Commands
# -------------------------------------------------------------------

def cmd_verify_solution(args: argparse.Namespace, settings: Settings, out_dir: Path) -> int:
    params = {key: getattr(args, key) for key in ("b", "f", "killing") if getattr(args, key) is not None}
    try:
        sol = get_solution(args.name, **params)
    except TypeError:
        raise ValueError(f"Solution '{args.name}' does not take {sorted(params)}")
    report = verify_solution(sol, args.points, args.seed, settings.maxwell_tol, settings.einstein_tol,
                             settings.inheritance_tol)
    write_json(out_dir / "verify_solution.json", report.to_record())
    logger.info("%s %s: %s", sol.name, sol.params, "pass" if report.passed else "FAIL")
    return _verdict(report.passed)


def cmd_frequency_scan(args: argparse.Namespace, settings: Settings, out_dir: Path) -> int:
    schedule = geometric_schedule(args.r_min, args.r_max, settings.schedule_ratio)
    cfg = FrequencyConfig(tuple(schedule), args.R0, args.delta, args.k, args.C2, settings.quad_n_theta,
                          settings.quad_n_phi, args.level_set, settings.threads, settings)
    if args.synthetic is not None:
        power = args.synthetic
        profile = synth_profile(lambda r: (r + args.R0) ** -power, None, schedule, args.R0, args.delta,
                                cfg.weight_k, dX_fn=lambda r: -power * (r + args.R0) ** (-power - 1.0),
                                label=f"r^-{power:g}")
    else:
        omega = parse_field_spec(args.field)
        metric = get_metric(args.metric)
        profile = scan_profile(omega, metric, cfg)

    fit = fit_decay_exponent(profile, args.window)
    classification = classify_L2(profile, cfg, args.window)
    identity = identity_from_profile(profile)
    monotonicity = scan_monotonicity(profile)
    envelope = decay_envelope(profile, identity.C2)

    write_csv(out_dir / "profile.csv", profile.to_rows())
    plot_profile(profile, fit, out_dir / "profile.svg")
    write_json(out_dir / "frequency.json", {
        "label": profile.label,
        "fit": fit.to_record(),
        "classification": classification.to_record(),
        "C2": identity.C2,
        "monotonicity": monotonicity.to_record(),
        "envelope": envelope.to_record(),
    })
    logger.info("%s: p = %.4f, verdict %s", profile.label, fit.p, classification.verdict)
    return _verdict(classification.verdict != "inconclusive")


def _carleman_grid(args: argparse.Namespace) -> RadialGrid:
    return RadialGrid(args.x1, args.grid, args.length, args.scheme)


def _carleman_weight(args: argparse.Namespace, grid: RadialGrid) -> WeightFamily:
    return WeightFamily.for_grid(grid, args.alpha, args.beta, args.gamma)


def _carleman_structure(args, settings, grid):
    re_values = []

    def measure(g):
        H = build_H(g)
        report = structure_check(conjugate(H, g, _carleman_weight(args, g), args.lam), H, g, args.delta)
        re_values.append(report.re_defect.interior)
        return report.im_defect.interior

    study = refinement_study("structure Im P", grid, measure, args.refinements, settings.refinement_band)
    shrinking = all(b <= a for a, b in zip(re_values, re_values[1:]))
    payload = {"im_study": study.to_record(), "re_defect": re_values, "re_defect_shrinking": shrinking}
    return payload, study.stable and shrinking


def _carleman_commutator(args, settings, grid):
    def measure(g):
        H = build_H(g)
        conj = conjugate(H, g, _carleman_weight(args, g), args.lam)
        return commutator_audit(conj, H, g, args.delta).remainder.interior

    study = refinement_study("commutator", grid, measure, args.refinements, settings.refinement_band)
    return {"study": study.to_record()}, study.stable


def _carleman_mourre(args, settings, grid):
    tilde = []

    def measure(g):
        report = mourre_decomposition_check(g, args.lam, args.delta)
        tilde.append(report.K_tilde.interior)
        return report.K.interior

    study = refinement_study("mourre K", grid, measure, args.refinements, settings.refinement_band)
    tilde_study = RefinementStudy("mourre K~", list(study.sizes), tilde, settings.refinement_band)
    return {"K": study.to_record(), "K_tilde": tilde_study.to_record()}, study.stable and tilde_study.stable


def _carleman_poly_weight(args, settings, grid):
    entries = poly_weight_check(grid, args.s, args.k, args.t)

    def measure(g):
        return max(e.remainder.interior for e in poly_weight_check(g, args.s, args.k, args.t))

    study = refinement_study("poly-weight", grid, measure, args.refinements, settings.refinement_band)
    positive = all(e.positive for e in entries)
    return {"entries": records(entries), "study": study.to_record()}, positive and study.stable


def _carleman_squared_identity(args, settings, grid):
    H = build_H(grid)
    conj = conjugate(H, grid, _carleman_weight(args, grid), args.lam)
    rng = np.random.default_rng(args.seed)
    packets = wave_packets(grid)
    coeffs = rng.normal(size=len(packets)) + 1j * rng.normal(size=len(packets))
    psi = sum(c * u for c, u in zip(coeffs, packets))
    identity = squared_norm_identity(conj.P, psi)
    if args.export_triplets:
        conj.P.to_triplets(Path(args.out_dir) / "P.triplets")
    return {"identity": identity.to_record(), "tol": settings.roundtrip_tol}, identity.defect <= settings.roundtrip_tol


def _carleman_probe(args, settings, grid):
    if args.bound_state:
        control = bound_state_control(grid, args.lam, delta=args.delta, refinements=args.refinements)
        plot_trend("tuned well", control.control.r_end, control.control.sigma_min,
                   Path(args.out_dir) / "probe.svg", xlabel="r_end")
        return {"bound_state": control.to_record()}, control.detected
    report = no_embedded_eigenvalue_probe(grid, args.lam, args.refinements, args.model, args.delta, args.amplitude)
    plot_trend(f"lambda = {args.lam:g}", report.r_end, report.sigma_min, Path(args.out_dir) / "probe.svg",
               xlabel="r_end")
    return {"probe": report.to_record()}, report.verdict != "decaying"


def _carleman_semiclassical(args, settings, grid):
    entries = semiclassical_commutator_check(grid.x1, grid.length, lam=args.lam)
    return {"entries": records(entries), "floor": 2.0}, min(e.c for e in entries) >= 2.0


CARLEMAN_DISPATCH: Dict[str, Callable] = {
    "structure": _carleman_structure,
    "commutator": _carleman_commutator,
    "mourre": _carleman_mourre,
    "poly-weight": _carleman_poly_weight,
    "squared-identity": _carleman_squared_identity,
    "probe": _carleman_probe,
    "semiclassical": _carleman_semiclassical,
}


def cmd_carleman(args: argparse.Namespace, settings: Settings, out_dir: Path) -> int:
    if args.check not in CARLEMAN_DISPATCH:
        raise ValueError(f"Unknown Carleman check '{args.check}'; choose from {list(CARLEMAN_CHECKS)}")
    args.out_dir = out_dir
    grid = _carleman_grid(args)
    payload, passed = CARLEMAN_DISPATCH[args.check](args, settings, grid)
    payload.update({"check": args.check, "lambda": args.lam, "grid": {"x1": grid.x1, "n": grid.n,
                    "length": grid.length, "scheme": grid.scheme}, "pass": bool(passed)})
    write_json(out_dir / f"carleman_{args.check.replace('-', '_')}.json", payload)
    logger.info("carleman %s: %s", args.check, "pass" if passed else "FAIL")
    return _verdict(passed)


def cmd_beltrami(args: argparse.Namespace, settings: Settings, out_dir: Path) -> int:
    omega = parse_field_spec(args.field)
    a = args.a if args.a is not None else field_eigenvalue(args.field)
    if a is None:
        raise ValueError(f"Field '{args.field}' carries no eigenvalue; pass --a")
    metric = get_metric(args.metric)
    points = parse_point_set(args.points, args.seed)
    chain = beltrami_chain(BeltramiProblem(metric, a, omega), points)
    trivial = chain["beltrami"].trivial
    worst = max(report.max for report in chain.values())
    passed = worst <= settings.beltrami_tol and not trivial
    if trivial:
        logger.warning("field %s vanishes at every point; the residuals are trivially zero", args.field)
    write_json(out_dir / "beltrami.json", {
        "field": args.field, "metric": metric.name, "a": a, "points": args.points,
        "chain": {name: report.to_record() for name, report in chain.items()},
        "tol": settings.beltrami_tol, "pass": passed,
    })
    logger.info("beltrami chain for %s: max residual %.3g", args.field, worst)
    return _verdict(passed)


def cmd_shell_probe(args: argparse.Namespace, settings: Settings, out_dir: Path) -> int:
    report = shell_probe(get_metric(args.metric), args.a, args.r0, args.r_max, args.nodes_per_wavelength,
                         args.l_max, args.closure)
    write_json(out_dir / "shell_probe.json", report.to_record())
    plot_trend(f"a = {args.a:g}", report.r_max, report.sigma_min, out_dir / "shell_probe.svg")
    return _verdict(report.passed)


def cmd_audit_metric(args: argparse.Namespace, settings: Settings, out_dir: Path) -> int:
    metric = get_metric(args.metric, **_metric_params(args.param))
    audit = audit_asymptotic_flatness(metric, args.radii, args.directions)
    record = audit.to_record()
    record["worst_point"] = audit.worst_point
    write_json(out_dir / "audit_metric.json", record)
    return _verdict(audit.passed)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Settings, Path], int]] = {
    "verify-solution": cmd_verify_solution,
    "frequency-scan": cmd_frequency_scan,
    "carleman": cmd_carleman,
    "beltrami": cmd_beltrami,
    "shell-probe": cmd_shell_probe,
    "audit-metric": cmd_audit_metric,
}


# -------------------------------------------------------------------
# Parser
# -------------------------------------------------------------------

def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="key = value settings file")
    common.add_argument("--out", type=str, default="", help="Output directory (default: inheritlab-out/<command>)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    ap = argparse.ArgumentParser(prog="inheritlab", description="Numerical checks for curl eigenfields, "
                                 "frequency functions, non-inheriting Einstein-Maxwell fields and Carleman models.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-solution", parents=[common], help="Maxwell, Einstein and inheritance residuals")
    p.add_argument("--name", type=str, default="mc")
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--f", type=str, default=None, help="pp-wave profile: sin, square or bump")
    p.add_argument("--killing", type=str, default=None, help="mc Killing vector: t, z or phi")
    p.add_argument("--points", type=int, default=200)

    p = sub.add_parser("frequency-scan", parents=[common], help="X, E, F profile with decay fit and L2 verdict")
    p.add_argument("--field", type=str, default="ck:l=1,a=1.0")
    p.add_argument("--metric", type=str, default="flat3")
    p.add_argument("--synthetic", type=float, default=None, metavar="POWER",
                   help="Scan the closed-form profile X = (r + R0)^-POWER instead of a field")
    p.add_argument("--r-min", type=float, default=50.0)
    p.add_argument("--r-max", type=float, default=200.0)
    p.add_argument("--ratio", dest="schedule_ratio", type=float, default=None)
    p.add_argument("--n-theta", dest="quad_n_theta", type=int, default=None)
    p.add_argument("--n-phi", dest="quad_n_phi", type=int, default=None)
    p.add_argument("--R0", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--C2", type=float, default=None)
    p.add_argument("--level-set", choices=("coordinate", "geodesic"), default="coordinate")
    p.add_argument("--window", type=float, nargs=2, default=None, metavar=("LO", "HI"))

    p = sub.add_parser("carleman", parents=[common], help="Conjugated-operator checks on the radial model")
    p.add_argument("--check", type=str, default="mourre", help=f"one of {', '.join(CARLEMAN_CHECKS)}")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=511, help="interior nodes of the base grid")
    p.add_argument("--x1", type=float, default=0.5)
    p.add_argument("--length", type=float, default=32.0)
    p.add_argument("--scheme", choices=("uniform_r", "uniform_x"), default="uniform_r")
    p.add_argument("--refinements", type=int, default=3)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--model", choices=("flat", "perturbed"), default="flat")
    p.add_argument("--amplitude", type=float, default=0.0)
    p.add_argument("--s", type=float, default=3.0)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--t", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    p.add_argument("--bound-state", action="store_true", help="Run the tuned-well positive control")
    p.add_argument("--export-triplets", action="store_true")

    p = sub.add_parser("beltrami", parents=[common], help="Residuals of *dω = aω and its consequences")
    p.add_argument("--field", type=str, default="abc")
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--metric", type=str, default="flat3")
    p.add_argument("--points", type=str, default="shell:r=2..50:n=200")

    p = sub.add_parser("shell-probe", parents=[common], help="Weighted σ_min trend of Δ_H − a² on shells")
    p.add_argument("--metric", type=str, default="flat3")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--r0", type=float, default=2.0)
    p.add_argument("--r-max", type=float, nargs="+", default=[20.0, 40.0, 80.0])
    p.add_argument("--nodes-per-wavelength", type=float, default=20.0)
    p.add_argument("--l-max", type=int, default=3)
    p.add_argument("--closure", choices=("outgoing", "dirichlet"), default="dirichlet",
                   help="outer boundary: dirichlet (zero extension) or outgoing (Robin)")

    p = sub.add_parser("audit-metric", parents=[common], help="Asymptotic-flatness audit of a registered metric")
    p.add_argument("--metric", type=str, default="conformal")
    p.add_argument("--param", action="append", default=None, metavar="KEY=VALUE")
    p.add_argument("--radii", type=float, nargs="+", default=[10.0, 20.0, 40.0, 80.0, 160.0])
    p.add_argument("--directions", type=int, default=32)
    return ap


def _config_values(argv: Optional[List[str]]) -> Dict[str, object]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    return load_config_file(known.config) if known.config else {}


def _apply_file_defaults(parser: argparse.ArgumentParser, values: Dict[str, object]) -> None:
    """Config-file entries become subcommand defaults, so explicit flags still win."""
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            dests = {a.dest for a in sub._actions}
            sub.set_defaults(**{k: v for k, v in values.items() if k in dests})


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(format="[%(module)-12s] %(message)s", level=level)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        file_values = _config_values(argv)
    except (OSError, ValueError) as exc:
        print(f"inheritlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _apply_file_defaults(parser, file_values)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    _configure_logging(args)

    try:
        overrides = {k: getattr(args, k, None) for k in ("schedule_ratio", "quad_n_theta", "quad_n_phi")}
        settings = resolve_settings(file_values, threads=args.threads, **overrides)
        out_dir = Path(args.out) if str(args.out).strip() else Path("inheritlab-out") / args.command
        out_dir.mkdir(parents=True, exist_ok=True)
        params = {k: v for k, v in vars(args).items()
                  if k not in ("command", "config", "out", "seed", "verbose", "quiet", "out_dir")}
        write_manifest(out_dir, args.command, settings, args.seed, params)
        return COMMANDS[args.command](args, settings, out_dir)
    except (InheritLabError, ValueError) as exc:
        print(f"inheritlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
