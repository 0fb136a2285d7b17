"""Integration of forms over parametrized cells and chains, and Stokes residuals"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from multiprocessing import Pool
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import roots_jacobi, roots_legendre
from sympy.polys.rings import PolyElement

from strataforms.algebra import NumericPolynomial, evaluate_exact, poly_ring, to_fraction, total_degree
from strataforms.cells import BOX, SIMPLEX, ParametrizedCell, reference_volume, sample_reference
from strataforms.complex import Chain, Stratification, boundary
from strataforms.config import DEFAULT_QUAD_ORDER, DEFAULT_TOL, STOKES_EPS
from strataforms.errors import DegreeMismatch, MissingFace, QuadratureError, StratumStraddle
from strataforms.forms import PolyForm, PolynomialMap, StratifiedForm, pullback
from strataforms.schemas import ResidualReport

logger = logging.getLogger(__name__)

FormLike = Union[PolyForm, StratifiedForm]


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-type nodes and weights on a reference simplex or box"""
    domain: str
    dim: int
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f: PolyElement) -> float:
        if self.dim == 0:
            return float(NumericPolynomial(f)(np.zeros((1, 0)))[0])
        return float(np.dot(self.weights, NumericPolynomial(f)(self.nodes)))


def _gauss_01(npts: int, alpha: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi on [0, 1] for the weight (1 - s)^alpha"""
    if alpha == 0:
        x, w = roots_legendre(npts)
    else:
        x, w = roots_jacobi(npts, alpha, 0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def exact_reference_integral(p: PolyElement, domain: str) -> Fraction:
    """Exact integral of a polynomial over the reference simplex or unit box"""
    k = p.ring.ngens
    total = Fraction(0)
    for exps, coeff in p.items():
        if domain == SIMPLEX:
            num = math.prod(math.factorial(e) for e in exps)
            value = Fraction(num, math.factorial(sum(exps) + k))
        else:
            value = Fraction(1, math.prod(e + 1 for e in exps))
        total += to_fraction(coeff) * value
    return total


@lru_cache(maxsize=None)
def make_rule(domain: str, dim: int, order: int = DEFAULT_QUAD_ORDER) -> QuadratureRule:
    """Tensor Gauss-Legendre on the box, conical-product Gauss-Jacobi on the simplex"""
    if dim == 0:
        return QuadratureRule(domain, 0, order, np.zeros((1, 0)), np.ones(1))
    npts = (order + 2) // 2
    if domain == BOX:
        axes = [_gauss_01(npts) for _ in range(dim)]
    elif domain == SIMPLEX:
        axes = [_gauss_01(npts, dim - 1 - i) for i in range(dim)]
    else:
        raise QuadratureError(f"unknown reference domain {domain!r}")
    s = np.array(list(product(*[a[0] for a in axes])))
    w = np.array([math.prod(c) for c in product(*[a[1] for a in axes])])
    if domain == SIMPLEX:
        u = np.empty_like(s)
        remaining = np.ones(len(s))
        for i in range(dim):
            u[:, i] = remaining * s[:, i]
            remaining = remaining * (1.0 - s[:, i])
        s = u
    rule = QuadratureRule(domain, dim, order, s, w)
    _audit_rule(rule)
    return rule


def _audit_rule(rule: QuadratureRule):
    ring = poly_ring(rule.dim)
    volume = float(reference_volume(rule.domain, rule.dim))
    if abs(rule.weights.sum() - volume) > 1e-13:
        raise QuadratureError(f"{rule.domain} rule weights sum to {rule.weights.sum()}, not {volume}")
    for degree in range(rule.order + 1):
        for exps in _compositions(degree, rule.dim):
            monomial = ring.from_dict({exps: ring.domain.one})
            exact = float(exact_reference_integral(monomial, rule.domain))
            approx = rule.integrate(monomial)
            if abs(approx - exact) > 1e-12 * max(1.0, abs(exact)):
                raise QuadratureError(
                    f"{rule.domain} rule of order {rule.order} fails on exponent {exps}: {approx} vs {exact}")


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def pulled_integrand(omega: PolyForm, cell: ParametrizedCell) -> PolyElement:
    """The top coefficient of the pullback of omega to the reference domain"""
    if omega.degree != cell.dim:
        raise DegreeMismatch(f"cannot integrate a {omega.degree}-form over the {cell.dim}-cell {cell.id}",
                             {"cell": cell.id})
    pulled = pullback(PolynomialMap(cell.dim, cell.maps), omega)
    return pulled.component(tuple(range(1, cell.dim + 1)))


def integrate_cell(omega: PolyForm, cell: ParametrizedCell, rule: Optional[QuadratureRule] = None) -> float:
    """orientation * the integral of the pulled-back form over the reference domain"""
    integrand = pulled_integrand(omega, cell)
    if rule is None:
        rule = make_rule(cell.ref_domain, cell.dim, max(DEFAULT_QUAD_ORDER, total_degree(integrand)))
    elif rule.domain != cell.ref_domain or rule.dim != cell.dim:
        raise DegreeMismatch(f"a {rule.domain} rule of dimension {rule.dim} does not fit cell {cell.id}",
                             {"cell": cell.id})
    elif total_degree(integrand) > rule.order:
        logger.debug("integrand of degree %d on %s exceeds rule order %d", total_degree(integrand), cell.id,
                     rule.order)
    return cell.orientation * rule.integrate(integrand)


def integrate_cell_exact(omega: PolyForm, cell: ParametrizedCell) -> Fraction:
    """The same integral computed exactly over the rationals"""
    integrand = pulled_integrand(omega, cell)
    if cell.dim == 0:
        return cell.orientation * evaluate_exact(integrand, ())
    return cell.orientation * exact_reference_integral(integrand, cell.ref_domain)


def stratum_of_cell(sigma: Stratification, cell: ParametrizedCell) -> Optional[str]:
    """The single stratum containing the cell's interior, or None when it straddles"""
    if cell.id in sigma.owner and sigma.catalogue.get(cell.id) == cell:
        return sigma.owner[cell.id]
    points = [cell.barycenter()]
    if cell.dim:
        rng = np.random.default_rng(0)
        points.extend(sample_reference(cell.ref_domain, cell.dim, 4, rng))
    found = {sigma.locate(x) for x in cell.evaluate(np.array(points))}
    if len(found) == 1 and None not in found:
        return found.pop()
    return None


def _integrate_piece(omega: FormLike, cell: ParametrizedCell, order: Optional[int],
                     splits: Mapping[str, Chain], catalogue: Mapping[str, ParametrizedCell]) -> float:
    rule = make_rule(cell.ref_domain, cell.dim, order) if order else None
    if isinstance(omega, PolyForm):
        return integrate_cell(omega, cell, rule)
    sid = stratum_of_cell(omega.stratification, cell)
    if sid is not None:
        return integrate_cell(omega.component(sid), cell, rule)
    if cell.id in splits:
        parts = splits[cell.id]
        return math.fsum(float(a) * _integrate_piece(omega, catalogue[p], order, splits, catalogue)
                         for p, a in sorted(parts.terms.items()))
    raise StratumStraddle(f"cell {cell.id} is not contained in a single stratum and has no registered split",
                          {"cell": cell.id})


def _task(args):
    return _integrate_piece(*args)


def integrate_chain_terms(omega: FormLike, c: Chain, catalogue: Mapping[str, ParametrizedCell],
                          order: Optional[int] = None, splits: Optional[Mapping[str, Chain]] = None,
                          jobs: int = 1) -> Dict[str, float]:
    """Per-cell integrals a_j * int_{sigma_j} omega, keyed by cell id"""
    splits = splits or {}
    ids = sorted(c.terms)
    for cid in ids:
        if cid not in catalogue:
            raise MissingFace(f"cell {cid} is not registered", {"cell": cid})
    tasks = [(omega, catalogue[cid], order, splits, catalogue) for cid in ids]
    if jobs > 1 and len(tasks) > 1:
        with Pool(jobs) as pool:
            values = pool.map(_task, tasks)
    else:
        values = [_task(t) for t in tasks]
    return {cid: float(c.terms[cid]) * v for cid, v in zip(ids, values)}


def integrate_chain(omega: FormLike, c: Chain, catalogue: Mapping[str, ParametrizedCell],
                    order: Optional[int] = None, splits: Optional[Mapping[str, Chain]] = None,
                    jobs: int = 1) -> float:
    """sum_j a_j int_{sigma_j} omega, summed in cell-id order"""
    terms = integrate_chain_terms(omega, c, catalogue, order, splits, jobs)
    return math.fsum(terms[k] for k in sorted(terms))


def _boundary_integral(omega: FormLike, cell: ParametrizedCell, catalogue: Mapping[str, ParametrizedCell],
                       order: Optional[int], splits: Mapping[str, Chain]) -> float:
    """int over the boundary of one cell, through registered faces when present"""
    if cell.faces and all(f in catalogue for f, _ in cell.faces):
        faces = boundary(Chain({cell.id: 1}, cell.dim), {**catalogue, cell.id: cell})
        return integrate_chain(omega, faces, catalogue, order, splits)
    total = []
    for facet, sign in cell.facets():
        total.append(sign * _integrate_piece(omega, facet, order, splits, catalogue))
    return math.fsum(total)


def resolve_splits(omega: FormLike, sigma: Chain, catalogue: Mapping[str, ParametrizedCell],
                   splits: Mapping[str, Chain]) -> Dict[str, Fraction]:
    """The chain with every cell crossing strata replaced by its registered split"""
    out: Dict[str, Fraction] = {}
    todo = [(cid, Fraction(a)) for cid, a in sorted(sigma.terms.items())]
    while todo:
        cid, a = todo.pop()
        if cid not in catalogue:
            raise MissingFace(f"cell {cid} is not registered", {"cell": cid})
        if isinstance(omega, StratifiedForm) and stratum_of_cell(omega.stratification, catalogue[cid]) is None:
            if cid not in splits:
                raise StratumStraddle(f"cell {cid} is not contained in a single stratum and has no registered split",
                                      {"cell": cid})
            todo.extend((p, a * Fraction(b)) for p, b in sorted(splits[cid].terms.items()))
            continue
        out[cid] = out.get(cid, Fraction(0)) + a
    return {cid: a for cid, a in out.items() if a}


def _stokes_piece(args) -> Tuple[Tuple[float, ...], float, float]:
    """Shrunk residual terms, int d omega and int over the boundary for one cell"""
    omega, cell, eps_seq, order, catalogue, splits = args
    d_omega = omega.d()
    if isinstance(omega, StratifiedForm):
        sid = stratum_of_cell(omega.stratification, cell)
        inner, outer = d_omega.component(sid), omega.component(sid)
    else:
        inner, outer = d_omega, omega
    shrunk_terms = []
    for eps in eps_seq:
        shrunk = cell.shrink(eps)
        value = _integrate_piece(inner, shrunk, order, {}, catalogue)
        value -= math.fsum(sign * _integrate_piece(outer, facet, order, {}, catalogue)
                           for facet, sign in shrunk.facets())
        shrunk_terms.append(value)
    lhs = _integrate_piece(d_omega, cell, order, splits, catalogue)
    rhs = _boundary_integral(omega, cell, catalogue, order, splits)
    return tuple(shrunk_terms), lhs, rhs


def stokes_residual(omega: FormLike, sigma: Chain, catalogue: Mapping[str, ParametrizedCell],
                    order: Optional[int] = None, eps_seq: Sequence[float] = STOKES_EPS,
                    tol: float = DEFAULT_TOL, splits: Optional[Mapping[str, Chain]] = None,
                    jobs: int = 1) -> ResidualReport:
    """|int_{S_eps} d omega - int_{boundary S_eps} omega| along eps, plus the limit pair on sigma itself.

    Cells crossing strata are replaced by their registered splits first; with jobs > 1 the
    cells are handed to a worker pool.
    """
    splits = splits or {}
    pieces = resolve_splits(omega, sigma, catalogue, splits)
    ids = sorted(pieces)
    tasks = [(omega, catalogue[cid], tuple(eps_seq), order, catalogue, splits) for cid in ids]
    if jobs > 1 and len(tasks) > 1:
        with Pool(jobs) as pool:
            results = pool.map(_stokes_piece, tasks)
    else:
        results = [_stokes_piece(t) for t in tasks]

    residuals = [abs(math.fsum(float(pieces[cid]) * shrunk[i] for cid, (shrunk, _, _) in zip(ids, results)))
                 for i in range(len(eps_seq))]
    per_cell: Dict[str, float] = {}
    lhs_terms, rhs_terms = [], []
    for cid, (_, lhs, rhs) in zip(ids, results):
        a = float(pieces[cid])
        lhs_terms.append(a * lhs)
        rhs_terms.append(a * rhs)
        per_cell[cid] = a * (lhs - rhs)
    lhs, rhs = math.fsum(lhs_terms), math.fsum(rhs_terms)
    limit = abs(lhs - rhs)
    noise = max(tol, 1e-12)
    monotone = all(b <= a + noise for a, b in zip(residuals, residuals[1:]))
    passed = limit <= tol and monotone
    witness = None
    if not passed and per_cell:
        worst = max(per_cell, key=lambda k: abs(per_cell[k]))
        witness = {"cell": worst, "residual": per_cell[worst]}
    logger.debug("stokes over %d cells (%d after splits): limit %.3g", len(sigma.terms), len(ids), limit)
    return ResidualReport(passed=passed, tol=tol, form=getattr(omega, "id", None), eps=list(eps_seq),
                          residuals=residuals, monotone=monotone, lhs=lhs, rhs=rhs, limit_residual=limit,
                          per_cell=per_cell, witness=witness)
