import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from strataforms import __version__
from strataforms.cohomology import betti
from strataforms.complex import validate_frontier
from strataforms.config import configure_logging
from strataforms.errors import StrataformsError
from strataforms.forms import StratifiedForm, audit_bound, check_graph_closed
from strataforms.homotopy import audit_retraction, check_semidifferentiable, lipschitz_estimate, poincare_primitive
from strataforms.project import Project, load_project
from strataforms.quadrature import stokes_residual
from strataforms.schemas import CheckResult, CommandReport, ProjectFile
from strataforms.smoothing import Mollifier, check_convolution_identities, smoothing_report
from strataforms.whitney import Triangulation, check_commute, derham_report

logger = logging.getLogger(__name__)

COMMANDS = ("validate", "betti", "stokes", "derham", "poincare", "smooth", "schema")


class Run:
    """Collects checks and reports for one command, printing each check as it lands"""

    def __init__(self, project: Project):
        self.project = project
        self.checks: List[CheckResult] = []
        self.reports: Dict[str, Any] = {}

    def check(self, name: str, passed: bool, detail: str = "", report=None):
        self.checks.append(CheckResult(name=name, passed=passed, detail=detail))
        if report is not None:
            self.reports[name] = report.model_dump(mode="json")
        mark = "✅" if passed else "❌"
        print(f"{mark} {name}" + (f": {detail}" if detail else ""))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _order(project: Project, args) -> Optional[int]:
    """An explicit quadrature order, or None to size rules by integrand degree"""
    if args.quad_order is not None or project.spec.run.quad_order is not None:
        return project.settings.quad_order
    return None


def cmd_validate(run: Run, args):
    project, s = run.project, run.project.settings
    for sid, sigma in sorted(project.stratifications.items()):
        report = validate_frontier(sigma, samples=s.samples, seed=s.seed)
        detail = ""
        if report.failures:
            first = report.failures[0]
            detail = f"stratum {first.stratum} at {first.point} is {first.distance:.3g} from every neighbour"
        elif report.overlaps:
            first = report.overlaps[0]
            detail = f"strata {first.stratum} and {first.other} overlap at {first.point}"
        run.check(f"frontier {sid}", report.passed, detail, report)
    for fid, omega in sorted(project.forms.items()):
        if not isinstance(omega, StratifiedForm):
            continue
        report = check_graph_closed(omega, seed=s.seed)
        detail = ""
        if report.failures:
            first = report.failures[0]
            detail = f"{first.upper} -> {first.lower} jumps by {first.gap:.3g} at {first.point}"
        run.check(f"continuity {fid}", report.passed, detail, report)
        if omega.declared_bound is not None:
            estimate, ok = audit_bound(omega, s.samples, s.seed)
            detail = f"sampled sup {float(estimate):.6g}, declared {float(omega.declared_bound):.6g}"
            run.check(f"bound {fid}", ok, detail)
    for rid, r in sorted(project.retractions.items()):
        if r.domain is None:
            continue
        report = audit_retraction(r, samples=min(s.samples, 16), seed=s.seed)
        detail = f"{report.failures[0]['check']} at {report.failures[0].get('point')}" if report.failures else ""
        run.check(f"retraction {rid}", report.passed, detail, report)


def cmd_betti(run: Run, args):
    project = run.project
    for cid, K in sorted(project.complexes.items()):
        table = betti(K, jobs=project.settings.jobs)
        alternating = sum((-1) ** k * b for k, b in enumerate(table.numbers))
        run.check(f"betti {cid}", alternating == table.euler,
                  f"b = {tuple(table.numbers)}, euler {table.euler}", table)


def _pairs(items: Iterable[str], wanted: Optional[str]) -> List[str]:
    return [i for i in sorted(items) if wanted is None or i == wanted]


def cmd_stokes(run: Run, args):
    project, s = run.project, run.project.settings
    pairs: List[Tuple[str, str]] = []
    for fid in _pairs(project.forms, args.form):
        for cid in _pairs(project.chains, args.chain):
            if project.chains[cid].degree == project.forms[fid].degree + 1:
                pairs.append((fid, cid))
    if not pairs:
        raise StrataformsError("no form/chain pair of matching degrees to check")
    for fid, cid in pairs:
        report = stokes_residual(project.form(fid), project.chain(cid), project.catalogue, _order(project, args),
                                 tol=s.tol, splits=project.splits[cid], jobs=s.jobs)
        report.form, report.chain = fid, cid
        detail = f"residual {report.limit_residual:.3g}"
        if report.witness:
            detail += f", worst cell {report.witness['cell']}"
        run.check(f"stokes {fid} on {cid}", report.passed, detail, report)


def cmd_derham(run: Run, args):
    project = run.project
    order = _order(project, args)
    for cid, K in sorted(project.complexes.items()):
        T = Triangulation.from_complex(K)
        periods = {}
        for fid, omega in sorted(project.forms.items()):
            for chid, chain in sorted(project.chains.items()):
                if chain.degree == omega.degree and chain.terms and all(t in K.simplices for t in chain.terms):
                    periods[f"{fid} on {chid}"] = (omega, chain)
        duality = range(K.dim + 1) if args.duality else ()
        report = derham_report(T, cid, order, periods, duality_degrees=duality)
        ranks = ", ".join(f"H^{d.degree}: rank {d.pairing_rank} / b {d.betti}" for d in report.degrees)
        run.check(f"de Rham {cid}", report.passed, ranks, report)
        for name, value in report.periods.items():
            print(f"   period {name} = {value:.12g}")
        owners = {c.id: c.complex for c in project.spec.cochains}
        for fid, f in sorted(project.cochains.items()):
            if owners[fid] != cid:
                continue
            residual = check_commute(T, f)
            run.check(f"chain map {fid}", residual == 0, f"d phi(f) - phi(df) = {residual}")


def cmd_poincare(run: Run, args):
    project, s = run.project, run.project.settings
    for rid in _pairs(project.retractions, args.retraction):
        r = project.retraction(rid)
        if r.domain is None:
            continue
        for fid in _pairs(project.forms, args.form):
            omega = project.form(fid)
            if not isinstance(omega, StratifiedForm) or omega.stratification is not r.domain:
                continue
            if omega.degree == 0 or any(c.d() for c in omega.components.values()):
                logger.info("skipping %s: only closed forms of positive degree have primitives", fid)
                continue
            _, report = poincare_primitive(omega, r, samples=min(s.samples, 16), seed=s.seed)
            if report.weak_residual is None:
                detail = f"symbolic residual {report.symbolic_residual}"
            else:
                detail = f"weak residual {report.weak_residual:.3g}"
            run.check(f"primitive {fid} by {rid}", report.passed, detail, report)
        semi = check_semidifferentiable(r, seed=s.seed)
        run.check(f"semi-differentiable {rid}", semi.passed, f"limit {semi.limit:.3g}", semi)
        estimate = lipschitz_estimate(r, seed=s.seed)
        run.reports[f"lipschitz {rid}"] = estimate.model_dump(mode="json")
        print(f"   lipschitz {rid} >= {estimate.estimate:.6g}")


def cmd_smooth(run: Run, args):
    project = run.project
    eps_override = [float(e) for e in args.eps.split(",")] if args.eps else None
    for gid in _pairs(project.grids, args.grid):
        grid = project.grids[gid]
        eps = eps_override or project.eps[gid]
        report = smoothing_report(grid, eps, form_id=gid)
        errors = ", ".join(f"{r.eps:g}: {r.error:.3g}" for r in sorted(report.runs, key=lambda r: -r.eps))
        run.check(f"smoothing {gid}", report.passed, errors, report)
        if grid.degree < grid.ambient_dim:
            identities = check_convolution_identities(grid, Mollifier.for_grid(min(eps), grid))
            run.check(f"d commutes with smoothing {gid}", identities.passed,
                      f"residual {identities.derivative_residual:.3g} against {identities.bound:.3g}", identities)


HANDLERS = {
    "validate": cmd_validate,
    "betti": cmd_betti,
    "stokes": cmd_stokes,
    "derham": cmd_derham,
    "poincare": cmd_poincare,
    "smooth": cmd_smooth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strataforms",
                                     description="Checks for stratified polynomial differential forms")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "schema":
            continue
        p.add_argument("--project", required=True, help="project JSON file")
        p.add_argument("--report", help="write the full JSON report here")
        p.add_argument("--seed", type=int)
        p.add_argument("--quad-order", type=int, dest="quad_order")
        p.add_argument("--jobs", type=int)
        if name in ("stokes", "poincare"):
            p.add_argument("--form")
        if name == "stokes":
            p.add_argument("--chain")
            p.add_argument("--tol", type=float, help="residual tolerance for the Stokes limit")
        if name == "poincare":
            p.add_argument("--retraction")
        if name == "derham":
            p.add_argument("--duality", action="store_true", help="also check the elementary-form pairing matrix")
        if name == "smooth":
            p.add_argument("--grid")
            p.add_argument("--eps", help="comma-separated mollifier radii")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    if args.command == "schema":
        print(json.dumps(ProjectFile.model_json_schema(), indent=2, sort_keys=True))
        return 0
    try:
        project = load_project(args.project, seed=args.seed, tol=getattr(args, "tol", None),
                               quad_order=args.quad_order, jobs=args.jobs)
        run = Run(project)
        HANDLERS[args.command](run, args)
    except StrataformsError as e:
        print(f"❌ {e}")
        return 2
    report = CommandReport(command=args.command, passed=run.passed, version=__version__,
                           seed=project.settings.seed, settings=project.settings.model_dump(),
                           checks=run.checks, reports=run.reports)
    if args.report:
        Path(args.report).write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    logger.info("%s finished with %d checks", args.command, len(run.checks))
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
