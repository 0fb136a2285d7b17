"""Barycentric partitions of unity, elementary (Whitney) forms and the de Rham map"""
import logging
import math
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from sympy.polys.rings import PolyElement

from strataforms.algebra import affine, domain_matrix, exact_rank, poly_ring, polynomial_text, to_fraction
from strataforms.cells import ParametrizedCell
from strataforms.cohomology import (
    Cochain, betti, coboundary, cocycle_basis, cycle_basis, pairing_rank,
)
from strataforms.complex import Chain, Simplex, SimplicialComplex, Stratification, boundary, stratification_from_complex
from strataforms.config import PAIRING_TOL
from strataforms.errors import DegenerateSimplex, GradingMismatch, NotClosed
from strataforms.forms import PolyForm, StratifiedForm, wedge
from strataforms.quadrature import integrate_cell, integrate_cell_exact, integrate_chain, make_rule, stratum_of_cell
from strataforms.schemas import DerhamDegree, DerhamReport, FormSpec, TermSpec

logger = logging.getLogger(__name__)


class Triangulation:
    """A simplicial complex with its affine cells and the stratification by open simplices"""

    def __init__(self, complex: SimplicialComplex):
        self.complex = complex
        self.cells: Dict[str, ParametrizedCell] = complex.cells()
        self.stratification: Stratification = stratification_from_complex(complex, self.cells)
        for s in complex.simplices.values():
            if s.dim == 0:
                continue
            points = complex.points_of(s)
            edges = [[a - b for a, b in zip(p, points[0])] for p in points[1:]]
            if exact_rank(domain_matrix(edges)) < s.dim:
                raise DegenerateSimplex(f"simplex {s.id} is degenerate", {"simplex": s.id})
        self.maximal: List[Simplex] = complex.maximal()

    @classmethod
    def from_complex(cls, K: SimplicialComplex) -> "Triangulation":
        return cls(K)

    @property
    def ambient_dim(self) -> int:
        return self.complex.ambient_dim

    @cached_property
    def host(self) -> Dict[str, str]:
        """For each simplex, the first maximal simplex containing it"""
        out = {}
        for s in self.complex.simplices.values():
            out[s.id] = next(m.id for m in self.maximal if s.is_face_of(m))
        return out

    @cached_property
    def barycentric(self) -> Dict[str, Dict[int, PolyElement]]:
        """Per maximal simplex, the affine barycentric coordinate of each of its vertices"""
        return {m.id: _barycentric(self.complex.points_of(m), m.vertices, self.ambient_dim) for m in self.maximal}


def _barycentric(points: Sequence[Sequence[Fraction]], vertices: Sequence[int], n: int) -> Dict[int, PolyElement]:
    """lambda = (A^T A)^-1 A^T (x - P0) on the affine hull, extended affinely to R^n"""
    d = len(points) - 1
    if d == 0:
        return {vertices[0]: poly_ring(n).one}
    p0 = points[0]
    columns = [[p[c] - p0[c] for c in range(n)] for p in points[1:]]
    gram = [[sum(a * b for a, b in zip(u, v)) for v in columns] for u in columns]
    inverse = domain_matrix(gram).to_dense().inv().to_list()
    inverse = [[to_fraction(v) for v in row] for row in inverse]
    linear = [[sum(inverse[j][i] * columns[i][c] for i in range(d)) for c in range(n)] for j in range(d)]
    lambdas = {}
    for j in range(d):
        offset = -sum(linear[j][c] * p0[c] for c in range(n))
        lambdas[vertices[j + 1]] = affine(n, offset, linear[j])
    lambdas[vertices[0]] = poly_ring(n).one - sum(lambdas.values(), poly_ring(n).zero)
    return lambdas


class PartitionOfUnity:
    """The hat functions phi_i, stored per maximal simplex"""

    def __init__(self, triangulation: Triangulation):
        self.triangulation = triangulation
        self.pieces: Dict[str, Dict[int, PolyElement]] = triangulation.barycentric

    def restriction(self, vertex: int, simplex_id: str) -> PolyElement:
        """phi_vertex on a maximal simplex; zero off the star of the vertex"""
        return self.pieces[simplex_id].get(vertex, poly_ring(self.triangulation.ambient_dim).zero)

    def hat(self, vertex: int) -> StratifiedForm:
        T = self.triangulation
        comps = {s: PolyForm.function(self.restriction(vertex, T.host[s])) for s in T.stratification.strata}
        return StratifiedForm(T.stratification, comps, 0)

    def total(self, simplex_id: str) -> PolyElement:
        return sum(self.pieces[simplex_id].values(), poly_ring(self.triangulation.ambient_dim).zero)


def partition_of_unity(T: Triangulation) -> PartitionOfUnity:
    return PartitionOfUnity(T)


def _elementary_piece(lambdas: Mapping[int, PolyElement], vertices: Sequence[int], n: int) -> PolyForm:
    """j! sum_k (-1)^k lambda_{i_k} dlambda_{i_0} ^ ... (omit k) ... ^ dlambda_{i_j}"""
    j = len(vertices) - 1
    d = {v: PolyForm.function(lambdas[v]).d() for v in vertices}
    result = PolyForm.zero(n, j)
    for k in range(j + 1):
        term = PolyForm.function(lambdas[vertices[k]])
        for i, v in enumerate(vertices):
            if i != k:
                term = wedge(term, d[v])
        result = result + (term if k % 2 == 0 else -term)
    return result * math.factorial(j)


class ElementaryForm:
    """phi_{T,f}: one polynomial form per maximal simplex"""

    def __init__(self, triangulation: Triangulation, degree: int, pieces: Mapping[str, PolyForm],
                 source: Optional[Cochain] = None):
        self.triangulation = triangulation
        self.degree = degree
        self.pieces: Dict[str, PolyForm] = dict(pieces)
        self.source = source

    def d(self) -> "ElementaryForm":
        return ElementaryForm(self.triangulation, self.degree + 1, {m: f.d() for m, f in self.pieces.items()})

    def __sub__(self, other: "ElementaryForm") -> "ElementaryForm":
        return ElementaryForm(self.triangulation, self.degree,
                              {m: self.pieces[m] - other.pieces[m] for m in self.pieces})

    def is_zero(self) -> bool:
        return all(f.is_zero() for f in self.pieces.values())

    def max_abs_coefficient(self) -> Fraction:
        return max((f.max_abs_coefficient() for f in self.pieces.values()), default=Fraction(0))

    def on(self, simplex_id: str) -> PolyForm:
        """The piece of the first maximal simplex containing a simplex"""
        return self.pieces[self.triangulation.host[simplex_id]]

    def as_stratified(self, form_id: Optional[str] = None) -> StratifiedForm:
        T = self.triangulation
        comps = {s: self.on(s) for s in T.stratification.strata}
        return StratifiedForm(T.stratification, comps, self.degree, form_id=form_id)

    def to_form_spec(self, form_id: str, stratification_id: str) -> FormSpec:
        """Export in the project-file form schema, one component per open simplex"""
        components = {}
        for s in self.triangulation.stratification.strata:
            form = self.on(s)
            components[s] = [TermSpec(index=list(i), coeff=polynomial_text(c)) for i, c in form.coeffs.items()]
        return FormSpec(id=form_id, ambient_dim=self.triangulation.ambient_dim, degree=self.degree,
                        stratification=stratification_id, components=components)


def _as_exact(f: Cochain) -> Cochain:
    return Cochain(f.degree, {k: Fraction(v) for k, v in f.values.items()})


def elementary_form(T: Triangulation, f: Cochain) -> ElementaryForm:
    """Linear extension of the elementary forms of the j-simplices weighted by f"""
    K = T.complex
    if f.degree > K.dim:
        raise GradingMismatch(f"complex has no simplices of dimension {f.degree}")
    f._check(K)
    f = _as_exact(f)
    n = T.ambient_dim
    pieces = {}
    for m in T.maximal:
        lambdas = T.barycentric[m.id]
        form = PolyForm.zero(n, f.degree)
        for face in combinations(m.vertices, f.degree + 1):
            value = f[Simplex(face).id]
            if value:
                form = form + _elementary_piece(lambdas, face, n) * value
        pieces[m.id] = form
    return ElementaryForm(T, f.degree, pieces, f)


def check_commute(T: Triangulation, f: Cochain) -> Fraction:
    """Largest coefficient of d(phi_f) - phi_(df); zero when the forms agree exactly"""
    lhs = elementary_form(T, f).d()
    if f.degree + 1 > T.complex.dim:
        return lhs.max_abs_coefficient()
    rhs = elementary_form(T, coboundary(f, T.complex))
    return (lhs - rhs).max_abs_coefficient()


def _component_on(omega: Union[ElementaryForm, StratifiedForm, PolyForm], cell: ParametrizedCell) -> PolyForm:
    if isinstance(omega, PolyForm):
        return omega
    if isinstance(omega, ElementaryForm):
        return omega.on(cell.id)
    sid = stratum_of_cell(omega.stratification, cell)
    if sid is None:
        raise GradingMismatch(f"cell {cell.id} is not contained in a single stratum", {"cell": cell.id})
    return omega.component(sid)


def derham_map(omega: Union[ElementaryForm, StratifiedForm, PolyForm], simplices: Sequence[str],
               catalogue: Mapping[str, ParametrizedCell], order: Optional[int] = None,
               exact: bool = False) -> Cochain:
    """The cochain sigma -> int_sigma omega on the given simplices"""
    values: Dict[str, Union[Fraction, float]] = {}
    for sid in simplices:
        cell = catalogue[sid]
        if cell.dim != omega.degree:
            raise GradingMismatch(f"cannot integrate a {omega.degree}-form over the {cell.dim}-cell {sid}",
                                  {"cell": sid})
        form = _component_on(omega, cell)
        if exact:
            values[sid] = integrate_cell_exact(form, cell)
        else:
            rule = make_rule(cell.ref_domain, cell.dim, order) if order else None
            values[sid] = integrate_cell(form, cell, rule)
    return Cochain(omega.degree, values)


def phi_T(f: Cochain, T: Triangulation) -> ElementaryForm:
    """The closed elementary form representing the class of a closed cochain"""
    df = coboundary(f, T.complex) if f.degree < T.complex.dim else Cochain.zero(f.degree + 1)
    if df:
        first = next(iter(df.values))
        raise NotClosed(f"cochain is not closed: df is nonzero on {first}", {"simplex": first})
    form = elementary_form(T, f)
    if not form.d().is_zero():
        raise NotClosed("elementary form of a closed cochain has nonzero exterior derivative")
    return form


def pairing_matrix(T: Triangulation, j: int, order: Optional[int] = None) -> List[List[float]]:
    """M[i][l] = int over the i-th j-simplex of the elementary form of the l-th j-simplex"""
    ids = T.complex.ids(j)
    forms = [elementary_form(T, Cochain.indicator(sid, j)) for sid in ids]
    if order is None:
        order = 2 * max((max((f.coefficient_degree for f in e.pieces.values()), default=0) for e in forms),
                        default=0) + 2
    columns = [derham_map(e, ids, T.cells, order) for e in forms]
    return [[float(columns[l][sid]) for l in range(len(ids))] for sid in ids]


def chain_map_residual(T: Triangulation, f: Cochain, order: Optional[int] = None) -> float:
    """max over (j+1)-simplices of |psi(d phi_f)(sigma) - psi(phi_f)(boundary sigma)|"""
    K = T.complex
    j = f.degree
    if j + 1 > K.dim:
        return 0.0
    form = elementary_form(T, f)
    upper = derham_map(form.d(), K.ids(j + 1), T.cells, order)
    lower = derham_map(form, K.ids(j), T.cells, order)
    worst = 0.0
    for sid in K.ids(j + 1):
        edge = boundary(Chain.of(sid, j + 1), T.cells)
        value = sum(float(a) * float(lower[c]) for c, a in edge.terms.items())
        worst = max(worst, abs(float(upper[sid]) - value))
    return worst


def derham_pairing(T: Triangulation, k: int, order: Optional[int] = None,
                   tol: float = PAIRING_TOL) -> DerhamDegree:
    """Rank of the pairing between closed elementary forms and k-cycles, against b_k"""
    K = T.complex
    cocycles = cocycle_basis(K, k)
    cycles = cycle_basis(K, k)
    ids = K.ids(k)
    matrix = []
    for z in cocycles:
        values = derham_map(phi_T(z, T), ids, T.cells, order)
        matrix.append([float(sum(float(a) * float(values[c]) for c, a in cycle.terms.items())) for cycle in cycles])
    rank = pairing_rank(matrix, tol) if matrix and cycles else 0
    indicator = Cochain(k, {sid: 1 for sid in ids})
    residual = chain_map_residual(T, indicator, order)
    b = betti(K).numbers[k]
    logger.debug("degree %d: pairing rank %d against b=%d", k, rank, b)
    return DerhamDegree(degree=k, betti=b, pairing_rank=rank, cocycles=len(cocycles), cycles=len(cycles),
                        chain_map_residual=residual)


def derham_report(T: Triangulation, complex_id: Optional[str] = None, order: Optional[int] = None,
                  periods: Optional[Mapping[str, Tuple[Union[StratifiedForm, PolyForm], Chain]]] = None,
                  tol: float = PAIRING_TOL, duality_degrees: Sequence[int] = ()) -> DerhamReport:
    """Pairing ranks in every degree, duality of elementary forms and requested periods"""
    degrees = [derham_pairing(T, k, order, tol) for k in range(T.complex.dim + 1)]
    passed = all(d.pairing_rank == d.betti and d.chain_map_residual <= tol for d in degrees)
    duality = None
    for j in duality_degrees:
        matrix = pairing_matrix(T, j, order)
        worst = max((abs(v - (1.0 if a == b else 0.0)) for a, row in enumerate(matrix) for b, v in enumerate(row)),
                    default=0.0)
        duality = max(duality or 0.0, worst)
    if duality is not None and duality > tol:
        passed = False
    found = {}
    for name, (omega, cycle) in sorted((periods or {}).items()):
        found[name] = integrate_chain(omega, cycle, T.cells, order)
    return DerhamReport(passed=passed, complex=complex_id, degrees=degrees, duality_residual=duality, periods=found)
