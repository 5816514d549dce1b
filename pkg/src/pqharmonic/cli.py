"""Command-line front end.

Subcommands: ``eval``, ``verify``, ``variation``, ``scan``, ``report``.
Exit codes: 0 all checks pass, 1 a check failed, 2 usage or parse error,
3 numeric/degenerate error, 4 I/O error, 5 point outside a chart guard.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import (
    DEFAULT_SEED,
    PROBE_X,
    ExampleCase,
    critical_s,
    example_cylinder,
    example_hyperbolic,
    example_power,
    sample_points,
    scan_critical_s,
)
from .errors import (
    DegeneratePointError,
    DomainError,
    InvalidOrderError,
    MetricError,
    ParameterError,
    ProblemParseError,
)
from .functionals import (
    DEFAULT_NODES,
    DEFAULT_STEP,
    BoxDomain,
    VariationField,
    ball_rules,
    make_bump,
    random_bump,
    variation_residual,
)
from .geometry import euclidean_metric
from .jets import DEFAULT_ORDER
from .problem import load_problem
from .pullback import MapField, MapJets, _check_exponents, bi_p_tension
from .report import PASS, CheckRecord, RunReport, compare, skipped

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO, EXIT_DOMAIN = 0, 1, 2, 3, 4, 5

CASES = ("cylinder", "hyperbolic", "power", "identity")
W_TOL = 1e-8
TAU_PQ_TOL = 1e-7
VARIATION_TOL = 1e-4
SCAN_TOL = 1e-6
GRID_P = (2.0, 2.5, 3.0, 5.0, 6.0)
GRID_Q = (2.0, 3.0, 4.0)
GRID_S = (1.2, 1.75, 2.4, 3.3, 4.0)


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _box(text: str) -> BoxDomain:
    try:
        lo, hi = text.split(":")
    except ValueError:
        raise argparse.ArgumentTypeError("box must look like 'lo1,lo2:hi1,hi2'") from None
    return BoxDomain(tuple(_floats(lo)), tuple(_floats(hi)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=int, default=DEFAULT_ORDER, help="jet order (default 4)")
    common.add_argument("--nodes", type=int, default=DEFAULT_NODES, help="quadrature nodes (default 16)")
    common.add_argument("--step", type=float, default=DEFAULT_STEP, help="finite-difference step (default 1e-2)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for sample points and bumps")
    common.add_argument("--json", action="store_true", help="print the canonical JSON report")
    common.add_argument("--out", type=Path, help="also write the JSON report to this path")

    parser = argparse.ArgumentParser(
        prog="pqharmonic", description="(p,q)-tension fields, energies and their first variation"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def case_args(sp, with_problem=True):
        sp.add_argument("case", nargs="?", choices=CASES, help="catalog case")
        if with_problem:
            sp.add_argument("--problem", type=Path, help="problem file instead of a catalog case")
        sp.add_argument("-p", type=float, help="energy exponent (default: problem file, else 2)")
        sp.add_argument("-q", type=float, help="outer exponent (default: problem file, else 2)")
        sp.add_argument("-s", type=float, default=4.0, help="power-map exponent (default 4)")

    ev = sub.add_parser("eval", parents=[common], help="evaluate tension fields at a point")
    case_args(ev)
    ev.add_argument("--at", type=_floats, required=True, metavar="X1,X2,...")

    ve = sub.add_parser("verify", parents=[common], help="run the catalog invariant suite")
    ve.add_argument("case", choices=CASES[:3] + ("all",))
    ve.add_argument("--grid-p", type=_floats, default=list(GRID_P))
    ve.add_argument("--grid-q", type=_floats, default=list(GRID_Q))
    ve.add_argument("-s", type=_floats, default=None, help="power-map exponents")
    ve.add_argument("--points", type=int, default=10)

    va = sub.add_parser("variation", parents=[common], help="check the first-variation identity")
    case_args(va)
    va.add_argument("--box", type=_box, help="domain 'lo1,...:hi1,...' (required with --problem)")
    va.add_argument("--bump", help="'c1,c2,...:radius:d1,d2,...' (default: seeded random bump)")
    va.add_argument("--zero-bump", action="store_true", help="use v = 0")

    sc = sub.add_parser("scan", parents=[common], help="scan s for zeros of the power-map tension")
    sc.add_argument("-p", type=float, default=2.0)
    sc.add_argument("-q", type=float, default=2.0)
    sc.add_argument("--interval", type=_floats, default=[1.2, 4.0], metavar="LO,HI")
    sc.add_argument("--samples", type=int, default=64)
    sc.add_argument("--csv", type=Path, help="write the sampled values to this CSV file")

    rp = sub.add_parser("report", parents=[common], help="re-render a saved JSON report")
    rp.add_argument("path", type=Path)
    return parser


# --------------------------------------------------------------------------
# helpers


def identity_map(dim: int) -> MapField:
    e = euclidean_metric(dim)
    return MapField(lambda c: list(c), e, e, f"identity R^{dim}")


def _resolve(args, dim_hint: int | None = None, closed_forms: bool = True):
    """``(case or None, map, label)`` from a case name or a problem file.

    ``closed_forms=False`` skips the case's own parameter range (which only
    concerns its displayed constants) and keeps the standing ``p, q >= 2``.
    """
    if getattr(args, "problem", None) is not None:
        if args.case is not None:
            raise ParameterError("give either a case or --problem, not both")
        prob = load_problem(args.problem, {"p": args.p, "q": args.q})
        args.p = prob.params.get("p", 2.0) if args.p is None else args.p
        args.q = prob.params.get("q", 2.0) if args.q is None else args.q
        _check_exponents(args.p, args.q)
        return None, prob.map, str(args.problem)
    if args.case is None:
        raise ParameterError("a case name or --problem is required")
    args.p = 2.0 if args.p is None else args.p
    args.q = 2.0 if args.q is None else args.q
    if args.case == "identity":
        return None, identity_map(dim_hint or 2), "identity"
    case = _catalog_case(args.case, args.s)
    if closed_forms:
        case.check(args.p, args.q)
    else:
        _check_exponents(args.p, args.q)
    return case, case.map(args.p), case.name


def _catalog_case(name: str, s: float | None) -> ExampleCase:
    if name == "cylinder":
        return example_cylinder()
    if name == "hyperbolic":
        return example_hyperbolic()
    return example_power(4.0 if s is None else s)


# --------------------------------------------------------------------------
# commands


def cmd_eval(args, report: RunReport) -> None:
    x = np.asarray(args.at, dtype=float)
    case, phi, label = _resolve(args, len(x))
    _check_exponents(args.p, args.q)
    report.params.update(case=label, p=args.p, q=args.q, point=x, order=args.order)
    if args.case == "power":
        report.params["s"] = args.s
    s = MapJets.at(phi, x, args.order)
    tau_pq = s.tau_pq(args.p, args.q)
    W = s.values(s.W(args.p, args.q))
    report.values.update({
        "|dphi|^2": s.values(s.energy_density),
        "tension": s.values(s.tension),
        "p_tension": s.values(s.p_tension(args.p)),
        "W": W,
        "pq_tension": tau_pq,
    })
    pt = x.reshape(-1, 1)
    if case is not None:
        if case.expected_W is not None:
            report.add(compare("W", W, case.expected_W(args.p, args.q, pt)[:, 0], W_TOL))
        if case.expected_tau_pq is not None:
            exp = case.expected_tau_pq(args.p, args.q, pt)[:, 0]
            if np.any(exp):
                report.add(compare("pq_tension", tau_pq, exp, W_TOL))
            else:
                tol = TAU_PQ_TOL * (1 + float(np.max(np.abs(W))))
                report.add(compare("pq_tension", tau_pq, exp, tol, mode="abs"))
    elif args.case == "identity":
        for key in ("tension", "p_tension", "W", "pq_tension"):
            report.add(compare(key, report.values[key], np.zeros_like(report.values[key]), 1e-12, "abs"))


def catalog_checks(case: ExampleCase, p: float, q: float, pts: np.ndarray,
                   order: int = DEFAULT_ORDER) -> list:
    """Invariant records for one case and one ``(p, q)``."""
    tag = f"{case.name} p={p:g} q={q:g}"
    ok, reason = case.valid(p, q)
    if not ok:
        return [skipped(f"{tag}: parameters", reason)]
    phi = case.map(p)
    s = MapJets.at(phi, pts, order)
    W = s.values(s.W(p, q))
    out = [
        compare(f"{tag}: W", W, case.expected_W(p, q, pts), W_TOL),
        compare(f"{tag}: |tau_p|^(q-2)", s.values(s.p_tension_weight(p, q)),
                case.expected_weight(p, q, pts), W_TOL),
    ]
    tpq = s.tau_pq(p, q)
    exp = case.expected_tau_pq(p, q, pts)
    if np.any(exp):
        out.append(compare(f"{tag}: tau_pq", tpq, exp, W_TOL))
    else:
        tol = TAU_PQ_TOL * (1 + float(np.max(np.abs(W))))
        out.append(compare(f"{tag}: tau_pq", tpq, exp, tol, mode="abs"))
    if case.name == "cylinder" and q == 2:
        tp = case.expected_tau_p(p, pts)
        tol = TAU_PQ_TOL * (1 + float(np.max(np.abs(tp))))
        out.append(compare(f"{tag}: bi-p-tension", bi_p_tension(phi, p, pts, order), 0 * tp, tol, "abs"))
    return out


def proper_power_checks(p: float, q: float, order: int = DEFAULT_ORDER) -> list:
    """At ``s = p/(p-1)`` the power map has ``tau_p != 0`` but ``tau_pq = 0``."""
    s0 = critical_s(p, q)[0]
    case = example_power(s0)
    pt = np.array([[PROBE_X], [0.0]])
    st = MapJets.at(case.map(p), pt, order)
    tp = float(np.max(np.abs(st.values(st.p_tension(p)))))
    tpq = st.tau_pq(p, q)
    tag = f"power s=p/(p-1) p={p:g} q={q:g}"
    rec = CheckRecord(f"{tag}: |tau_p| >= 0.1", tp, 0.1, None, None, 0.1, PASS if tp >= 0.1 else "fail")
    return [rec, compare(f"{tag}: tau_pq = 0", tpq, np.zeros_like(tpq), 1e-8, "abs")]


def cmd_verify(args, report: RunReport) -> None:
    names = ("cylinder", "hyperbolic", "power") if args.case == "all" else (args.case,)
    svals = args.s if args.s else list(GRID_S)
    report.params.update(case=args.case, grid_p=args.grid_p, grid_q=args.grid_q,
                         points=args.points, seed=args.seed, order=args.order)
    if "power" in names:
        report.params["s"] = svals
    for name in names:
        cases = [example_power(s) for s in svals] if name == "power" else [_catalog_case(name, None)]
        for case in cases:
            pts = sample_points(case.domain, args.points, args.seed)
            for p in args.grid_p:
                for q in args.grid_q:
                    for rec in catalog_checks(case, p, q, pts, args.order):
                        report.add(rec)
        if name == "power":
            for p in args.grid_p:
                for q in args.grid_q:
                    if p >= 2 and q >= 2:
                        for rec in proper_power_checks(p, q, args.order):
                            report.add(rec)


def _parse_bump(text: str, D: BoxDomain) -> VariationField:
    try:
        c, r, d = text.split(":")
        return make_bump(D, _floats(c), float(r), _floats(d))
    except (ValueError, argparse.ArgumentTypeError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise ParameterError(f"bad --bump value {text!r}: expected 'c1,c2:radius:d1,d2'") from None


def cmd_variation(args, report: RunReport) -> None:
    case, phi, label = _resolve(args, len(args.box.lower) if args.box else None, closed_forms=False)
    if case is not None:
        D = args.box or case.domain
    elif args.case == "identity":
        D = args.box or BoxDomain((-0.5, -0.5), (0.5, 0.5))
        phi = identity_map(D.dim)
    else:
        if args.box is None:
            raise ParameterError("--box is required with --problem")
        D = args.box
    if phi.source_dim != D.dim:
        raise ParameterError(f"box has {D.dim} coordinates, the source has {phi.source_dim}")
    D = BoxDomain(D.lower, D.upper, phi.source_metric.guard)
    if args.zero_bump:
        v = VariationField((), phi.target_dim)
    elif args.bump:
        v = _parse_bump(args.bump, D)
    else:
        v = random_bump(D, phi.target_dim, np.random.default_rng(args.seed))
    fd_rule, pair_rule = ball_rules(args.nodes)
    r = variation_residual(phi, args.p, args.q, v, D, fd_rule, args.step,
                           order=args.order, pairing_rule=pair_rule)
    report.params.update(case=label, p=args.p, q=args.q, step=args.step, nodes=args.nodes,
                         seed=args.seed, order=args.order, domain=[D.lower, D.upper],
                         bumps=[[b.center, b.radius, b.direction] for b in v.bumps])
    if args.case == "power":
        report.params["s"] = args.s
    report.values.update(fd=r.fd, pairing=r.pairing, residual=r.residual, scale=r.scale,
                         fd_nodes=r.n_support_nodes, pairing_nodes=r.extra.get("pairing_nodes", 0))
    report.add(CheckRecord("first variation = -int h(v, tau_pq)", r.fd, r.pairing, abs(r.residual),
                           r.relative, VARIATION_TOL,
                           PASS if r.relative <= VARIATION_TOL else "fail"))


def cmd_scan(args, report: RunReport) -> None:
    if len(args.interval) != 2:
        raise ParameterError("--interval needs exactly two numbers")
    res = scan_critical_s(args.p, args.q, args.interval, args.samples)
    lo, hi = args.interval
    report.params.update(p=args.p, q=args.q, interval=[lo, hi], samples=args.samples, probe_x=PROBE_X,
                         order=args.order)
    report.values.update(roots=res.roots, touching=res.touching)
    closed = sorted({v for v in critical_s(args.p, args.q) if lo < v < hi})
    report.values["closed_form"] = closed
    report.add(CheckRecord("root count", len(res.roots), len(closed), abs(len(res.roots) - len(closed)),
                           None, 0, PASS if len(res.roots) == len(closed) else "fail"))
    for c in closed:
        near = min(res.roots, key=lambda r: abs(r - c)) if res.roots else float("nan")
        report.add(compare(f"root near {c:.6f}", near, c, SCAN_TOL, "abs"))
    if args.csv is not None:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "tau_pq_u_at_probe"])
            for s_val, f_val in zip(res.samples, res.values):
                w.writerow([repr(float(s_val)), repr(float(f_val))])
        report.params["csv"] = str(args.csv)


def cmd_report(args, report: RunReport) -> RunReport:
    return RunReport.from_json(Path(args.path).read_text(encoding="utf-8"))


COMMANDS = {
    "eval": cmd_eval,
    "verify": cmd_verify,
    "variation": cmd_variation,
    "scan": cmd_scan,
    "report": cmd_report,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, (ProblemParseError, ParameterError, InvalidOrderError)):
        return EXIT_USAGE
    if isinstance(exc, (DegeneratePointError, MetricError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    argv_list = list(sys.argv[1:] if argv is None else argv)
    report = RunReport(["pqharmonic"] + [str(a) for a in argv_list])
    start = time.perf_counter()
    try:
        if args.order < 1:
            raise InvalidOrderError("--order must be at least 1")
        out = COMMANDS[args.command](args, report)
        if out is not None:
            report = out
        else:
            report.duration = time.perf_counter() - start
        text = report.to_json() if args.json else report.render_text()
        sys.stdout.write(text)
        if args.out is not None:
            Path(args.out).write_text(report.to_json(), encoding="utf-8")
    except Exception as exc:  # mapped to exit codes below
        code = _exit_code(exc)
        print(f"pqharmonic: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK if report.status == PASS else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
