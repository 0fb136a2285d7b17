"""Project file loading: every id in the file resolved into live objects"""
import json
import logging
import re
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from strataforms import __version__
from strataforms.algebra import constant, parse_polynomial, poly_from_records
from strataforms.cells import BOX, ParametrizedCell, affine_box_cell, affine_simplex_cell
from strataforms.cohomology import Cochain
from strataforms.complex import Chain, SimplicialComplex, Stratification, Stratum, stratification_from_complex
from strataforms.config import RunSettings, get_settings
from strataforms.errors import ProjectError, StrataformsError
from strataforms.forms import PolyForm, StratifiedForm
from strataforms.homotopy import Delimiter, Retraction, cone_retraction, lift_retraction, polynomial_retraction
from strataforms.schemas import (
    CellSpec, DelimiterSpec, FormSpec, PolynomialSpec, ProjectFile, RetractionSpec, StratificationSpec, TermSpec,
)
from strataforms.smoothing import GridForm

logger = logging.getLogger(__name__)

FormLike = Union[StratifiedForm, PolyForm]


def read_polynomial(nvars: int, spec: PolynomialSpec):
    """A polynomial given as text in x1..xn, an integer, or [[exponents], num, den] records"""
    try:
        if isinstance(spec, int):
            return constant(nvars, spec)
        if isinstance(spec, str):
            return parse_polynomial(nvars, spec)
        return poly_from_records(nvars, spec)
    except (ValueError, TypeError) as e:
        raise ProjectError(f"bad polynomial {spec!r}: {e}")


def _fractions(values: Sequence) -> List[Fraction]:
    try:
        return [Fraction(v) for v in values]
    except (ValueError, ZeroDivisionError) as e:
        raise ProjectError(f"bad rational in {values!r}: {e}")


def _with_time(text: PolynomialSpec, n: int) -> PolynomialSpec:
    """Let retraction components name the time variable t"""
    if isinstance(text, str):
        return re.sub(r"\bt\b", f"x{n + 1}", text)
    return text


class Project:
    """A loaded project file with cross references resolved"""

    def __init__(self, spec: ProjectFile, settings: Optional[RunSettings] = None):
        major = spec.version.split(".")[0]
        if major != __version__.split(".")[0]:
            raise ProjectError(f"project version {spec.version} does not match tool version {__version__}")
        self.spec = spec
        self.settings = settings or get_settings(**spec.run.model_dump())
        self.complexes: Dict[str, SimplicialComplex] = {}
        self.catalogue: Dict[str, ParametrizedCell] = {}
        self.stratifications: Dict[str, Stratification] = {}
        self.forms: Dict[str, FormLike] = {}
        self.chains: Dict[str, Chain] = {}
        self.splits: Dict[str, Dict[str, Chain]] = {}
        self.cochains: Dict[str, Cochain] = {}
        self.retractions: Dict[str, Retraction] = {}
        self.grids: Dict[str, GridForm] = {}
        self.eps: Dict[str, List[float]] = {}
        self._load()

    def _register(self, cell: ParametrizedCell):
        known = self.catalogue.get(cell.id)
        if known is not None and known != cell:
            raise ProjectError(f"cell id {cell.id} is registered twice with different geometry", {"cell": cell.id})
        self.catalogue[cell.id] = cell

    def _load(self):
        for c in self.spec.complexes:
            K = SimplicialComplex.from_simplices(_vertices(c.vertices), c.simplices)
            self.complexes[c.id] = K
            for cell in K.cells().values():
                self._register(cell)
        for c in self.spec.cells:
            self._register(build_cell(c))
        for s in self.spec.stratifications:
            self.stratifications[s.id] = self._stratification(s)
        for f in self.spec.forms:
            self.forms[f.id] = self._form(f)
        for c in self.spec.chains:
            self.chains[c.id] = self._chain(c.id, c.degree, c.terms)
            self.splits[c.id] = {cid: self._chain(f"{c.id}/{cid}", c.degree, terms)
                                 for cid, terms in c.splits.items()}
        for c in self.spec.cochains:
            K = self._lookup(self.complexes, c.complex, "complex")
            cochain = Cochain(c.degree, dict(zip(c.values, _fractions(list(c.values.values())))))
            cochain._check(K)
            self.cochains[c.id] = cochain
        for r in self.spec.retractions:
            retraction = self._retraction(r)
            retraction.id = r.id
            self.retractions[r.id] = retraction
        for g in self.spec.grids:
            form = self._lookup(self.forms, g.form, "form")
            self.grids[g.id] = GridForm.sample(form, g.box, g.resolution)
            self.eps[g.id] = list(g.eps)
        logger.debug("project loaded: %d cells, %d strata sets, %d forms", len(self.catalogue),
                     len(self.stratifications), len(self.forms))

    @staticmethod
    def _lookup(table: Dict, key: Optional[str], what: str):
        if key is None or key not in table:
            raise ProjectError(f"unknown {what} id {key!r}", {what: key})
        return table[key]

    def _stratification(self, s: StratificationSpec) -> Stratification:
        if s.complex is not None:
            K = self._lookup(self.complexes, s.complex, "complex")
            if not s.strata:
                return stratification_from_complex(K)
        strata = [Stratum(t.id, t.dim, tuple(t.pieces), frozenset(t.adjacency)) for t in s.strata]
        used = {p for t in s.strata for p in t.pieces}
        missing = sorted(used - set(self.catalogue))
        if missing:
            raise ProjectError(f"stratification {s.id} uses unknown cells {missing[:5]}", {"cell": missing[0]})
        closure, todo = {}, sorted(used)
        while todo:
            p = todo.pop()
            if p in closure or p not in self.catalogue:
                continue
            closure[p] = self.catalogue[p]
            todo.extend(f for f, _ in closure[p].faces)
        return Stratification(strata, closure, s.ambient_dim)

    def _form(self, f: FormSpec) -> FormLike:
        n = f.ambient_dim
        if f.stratification is None:
            if f.terms is None:
                raise ProjectError(f"form {f.id} needs terms when it has no stratification", {"form": f.id})
            return polyform_from_terms(n, f.degree, f.terms)
        sigma = self._lookup(self.stratifications, f.stratification, "stratification")
        if f.terms is not None:
            return StratifiedForm.uniform(sigma, polyform_from_terms(n, f.degree, f.terms),
                                          _bound(f.declared_bound), f.id)
        comps = {sid: polyform_from_terms(n, f.degree, terms) for sid, terms in f.components.items()}
        return StratifiedForm(sigma, comps, f.degree, _bound(f.declared_bound), f.id)

    def _chain(self, name: str, degree: int, terms: Dict[str, Union[int, str]]) -> Chain:
        missing = [cid for cid in terms if cid not in self.catalogue]
        if missing:
            raise ProjectError(f"chain {name} uses unknown cells {missing[:5]}", {"cell": missing[0]})
        return Chain(dict(zip(terms, _fractions(list(terms.values())))), degree)

    def _retraction(self, r: RetractionSpec) -> Retraction:
        n = r.ambient_dim
        sigma = self._lookup(self.stratifications, r.domain, "stratification") if r.domain else None
        s = self.settings
        if r.kind == "cone":
            if r.center is None or sigma is None:
                raise ProjectError(f"cone retraction {r.id} needs a center and a domain", {"retraction": r.id})
            return cone_retraction(_fractions(r.center), sigma, samples=s.samples, seed=s.seed)
        if r.kind == "polynomial":
            if not r.components or len(r.components) != n:
                raise ProjectError(f"retraction {r.id} needs {n} components in x1..x{n} and t",
                                   {"retraction": r.id})
            components = [read_polynomial(n + 1, _with_time(c, n)) for c in r.components]
            return polynomial_retraction(components, sigma, r.target)
        base = self._lookup(self.retractions, r.base, "retraction")
        if r.lower is None:
            raise ProjectError(f"lifted retraction {r.id} needs a lower delimiter", {"retraction": r.id})
        upper = _delimiter(r.upper, n - 1) if r.upper is not None else None
        box = [_fractions(side) for side in r.base_box] if r.base_box else None
        return lift_retraction(base, _delimiter(r.lower, n - 1), upper, r.cellkind, sigma, r.target, box,
                               samples=s.samples, seed=s.seed)

    def form(self, form_id: str) -> FormLike:
        return self._lookup(self.forms, form_id, "form")

    def chain(self, chain_id: str) -> Chain:
        return self._lookup(self.chains, chain_id, "chain")

    def retraction(self, retraction_id: str) -> Retraction:
        return self._lookup(self.retractions, retraction_id, "retraction")


def _vertices(rows: Sequence[Sequence]) -> List[List[Fraction]]:
    return [_fractions(v) for v in rows]


def _bound(value) -> Optional[Fraction]:
    return Fraction(value) if value is not None else None


def _delimiter(spec: DelimiterSpec, base_dim: int) -> Delimiter:
    pieces = tuple(read_polynomial(base_dim, p) for p in spec.pieces)
    try:
        return Delimiter(pieces, tuple(_fractions(spec.breaks)))
    except StrataformsError as e:
        raise ProjectError(f"bad delimiter: {e.detail}")


def polyform_from_terms(n: int, degree: int, terms: Sequence[TermSpec]) -> PolyForm:
    total = PolyForm.zero(n, degree)
    for t in terms:
        if len(t.index) != degree:
            raise ProjectError(f"term index {t.index} does not have length {degree}")
        coeff = read_polynomial(n, t.coeff)
        piece = PolyForm.dx(n, *t.index) if t.index else PolyForm.function(constant(n, 1))
        total = total + PolyForm(n, degree, {k: v * coeff for k, v in piece.coeffs.items()})
    return total


def build_cell(c: CellSpec) -> ParametrizedCell:
    faces = tuple((f.id, f.sign) for f in c.faces)
    if c.kind == "point":
        if not c.points or len(c.points) != 1:
            raise ProjectError(f"point cell {c.id} needs exactly one point", {"cell": c.id})
        return affine_simplex_cell(c.id, [_fractions(c.points[0])], c.orientation)
    if c.kind == "simplex":
        if not c.points:
            raise ProjectError(f"simplex cell {c.id} needs its vertices", {"cell": c.id})
        return affine_simplex_cell(c.id, _vertices(c.points), c.orientation, faces)
    if c.kind == "box":
        if c.origin is None or c.edges is None:
            raise ProjectError(f"box cell {c.id} needs an origin and edges", {"cell": c.id})
        return affine_box_cell(c.id, _fractions(c.origin), _vertices(c.edges), c.orientation, faces)
    if c.dim is None or not c.maps:
        raise ProjectError(f"polynomial cell {c.id} needs dim and maps", {"cell": c.id})
    maps = tuple(read_polynomial(c.dim, m) for m in c.maps)
    return ParametrizedCell(c.id, c.ref_domain or BOX, c.dim, maps, c.orientation, faces)


def load_project(path: Union[str, Path], **overrides) -> Project:
    """Read and resolve a project file; CLI overrides win over the file's run block"""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ProjectError(f"cannot read project file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ProjectError(f"project file {path} is not valid JSON: {e}")
    try:
        spec = ProjectFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ProjectError(f"invalid project file: {where}: {first['msg']}", {"field": where})
    values = {k: v for k, v in spec.run.model_dump().items() if v is not None}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Project(spec, get_settings(**values))

