"""Simplicial complexes, chains, and stratified sets built from a cell catalogue"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from strataforms.cells import ParametrizedCell, affine_simplex_cell
from strataforms.config import DEFAULT_SAMPLES, FRONTIER_TOL
from strataforms.errors import DimensionMismatch, IncompatibleCatalogue, MissingFace, NotInComplex
from strataforms.schemas import FrontierCheck, FrontierFailure, OverlapFailure, ValidationReport

logger = logging.getLogger(__name__)


def permutation_sign(seq: Sequence) -> int:
    sign = 1
    items = list(seq)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                sign = -sign
    return sign


@dataclass(frozen=True)
class Simplex:
    """An oriented simplex; the vertex order is the orientation"""
    vertices: Tuple[int, ...]

    def __post_init__(self):
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError(f"repeated vertex in {self.vertices}")

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1

    @property
    def id(self) -> str:
        return "-".join(str(v) for v in self.vertices)

    def canonical(self) -> Tuple["Simplex", int]:
        """Sorted representative and the sign of the sorting permutation"""
        return Simplex(tuple(sorted(self.vertices))), permutation_sign(self.vertices)

    @property
    def faces(self) -> Tuple[Tuple[str, int], ...]:
        """(face id, sign) pairs of the standard boundary, faces in canonical form"""
        if self.dim == 0:
            return ()
        out = []
        for i in range(len(self.vertices)):
            face = Simplex(self.vertices[:i] + self.vertices[i + 1:])
            canon, sign = face.canonical()
            out.append((canon.id, (-1) ** i * sign))
        return tuple(out)

    def is_face_of(self, other: "Simplex") -> bool:
        return set(self.vertices) <= set(other.vertices)


@dataclass(frozen=True)
class Chain:
    """A finite rational combination of cells of one dimension"""
    terms: Mapping[str, Fraction]
    degree: int

    def __post_init__(self):
        clean = {k: Fraction(v) if not isinstance(v, float) else v for k, v in self.terms.items() if v}
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @classmethod
    def zero(cls, degree: int) -> "Chain":
        return cls({}, degree)

    @classmethod
    def of(cls, cell_id: str, degree: int, coefficient=1) -> "Chain":
        return cls({cell_id: coefficient}, degree)

    def _check(self, other: "Chain"):
        if other.degree != self.degree and self.terms and other.terms:
            raise DimensionMismatch(f"cannot add chains of degree {self.degree} and {other.degree}")

    def __add__(self, other: "Chain") -> "Chain":
        self._check(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0) + v
        return Chain(terms, self.degree if self.terms else other.degree)

    def __neg__(self) -> "Chain":
        return Chain({k: -v for k, v in self.terms.items()}, self.degree)

    def __sub__(self, other: "Chain") -> "Chain":
        return self + (-other)

    def __mul__(self, scalar) -> "Chain":
        return Chain({k: v * scalar for k, v in self.terms.items()}, self.degree)

    __rmul__ = __mul__

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Chain):
            return NotImplemented
        return self.terms == other.terms and (self.degree == other.degree or not self.terms)

    def __hash__(self):
        return hash(tuple(self.terms.items()))


def boundary(c: Chain, catalogue: Mapping[str, Any]) -> Chain:
    """Alternating-sign boundary through the registered face records of each cell"""
    out: Dict[str, Fraction] = {}
    for cell_id, a in c.terms.items():
        cell = catalogue.get(cell_id)
        if cell is None:
            raise MissingFace(f"cell {cell_id} is not registered", {"cell": cell_id})
        if getattr(cell, "dim", c.degree) != c.degree:
            raise DimensionMismatch(f"cell {cell_id} has dimension {cell.dim}, chain has degree {c.degree}",
                                    {"cell": cell_id})
        if c.degree > 0 and not cell.faces:
            raise MissingFace(f"cell {cell_id} has no registered faces", {"cell": cell_id})
        orientation = getattr(cell, "orientation", 1)
        for face_id, sign in cell.faces:
            face = catalogue.get(face_id)
            if face is None:
                raise MissingFace(f"face {face_id} of {cell_id} is not registered",
                                  {"cell": cell_id, "face": face_id})
            coefficient = a * orientation * sign * getattr(face, "orientation", 1)
            out[face_id] = out.get(face_id, 0) + coefficient
    return Chain(out, c.degree - 1)


class SimplicialComplex:
    """Rational vertex coordinates plus a face-closed set of canonical simplices"""

    def __init__(self, vertices: Sequence[Sequence], simplices: Iterable[Sequence[int]]):
        self.vertices: Tuple[Tuple[Fraction, ...], ...] = tuple(tuple(Fraction(c) for c in v) for v in vertices)
        self.simplices: Dict[str, Simplex] = {}
        for verts in simplices:
            s = Simplex(tuple(sorted(int(v) for v in verts)))
            if any(v < 0 or v >= len(self.vertices) for v in s.vertices):
                raise NotInComplex(f"simplex {s.id} references a missing vertex", {"simplex": s.id})
            self.simplices[s.id] = s
        missing = [f for s in self.simplices.values() for f, _ in s.faces if f not in self.simplices]
        if missing:
            raise MissingFace(f"complex is not closed under faces: {sorted(set(missing))[:5]}")
        self.simplices = dict(sorted(self.simplices.items(), key=lambda kv: (kv[1].dim, kv[1].vertices)))

    @classmethod
    def from_simplices(cls, vertices: Sequence[Sequence], maximal: Iterable[Sequence[int]]) -> "SimplicialComplex":
        """Close a list of maximal simplices under taking faces"""
        closed: Set[Tuple[int, ...]] = set()
        for verts in maximal:
            verts = tuple(sorted(int(v) for v in verts))
            for r in range(1, len(verts) + 1):
                closed.update(combinations(verts, r))
        return cls(vertices, sorted(closed, key=lambda s: (len(s), s)))

    @property
    def dim(self) -> int:
        return max((s.dim for s in self.simplices.values()), default=-1)

    @property
    def ambient_dim(self) -> int:
        return len(self.vertices[0]) if self.vertices else 0

    def of_dim(self, k: int) -> List[Simplex]:
        return [s for s in self.simplices.values() if s.dim == k]

    def ids(self, k: int) -> List[str]:
        return [s.id for s in self.of_dim(k)]

    def count(self, k: int) -> int:
        return len(self.of_dim(k))

    def maximal(self) -> List[Simplex]:
        tops = []
        for s in self.simplices.values():
            if not any(s is not t and t.dim == s.dim + 1 and s.is_face_of(t) for t in self.simplices.values()):
                tops.append(s)
        return tops

    def face_records(self, k: int) -> Dict[str, Tuple[Tuple[str, int], ...]]:
        return {s.id: s.faces for s in self.of_dim(k)}

    def __contains__(self, simplex: Simplex) -> bool:
        return simplex.canonical()[0].id in self.simplices

    def chain_of(self, vertices: Sequence[int], coefficient=1) -> Chain:
        """The elementary chain of an ordered vertex list, in canonical form"""
        canon, sign = Simplex(tuple(vertices)).canonical()
        if canon.id not in self.simplices:
            raise NotInComplex(f"simplex {canon.id} is not in the complex", {"simplex": canon.id})
        return Chain({canon.id: sign * Fraction(coefficient)}, canon.dim)

    def points_of(self, simplex: Simplex) -> List[Tuple[Fraction, ...]]:
        return [self.vertices[v] for v in simplex.vertices]

    def cells(self) -> Dict[str, ParametrizedCell]:
        """Affine parametrizations with vertices in canonical order"""
        return {
            s.id: affine_simplex_cell(s.id, self.points_of(s), faces=s.faces)
            for s in self.simplices.values()
        }


def star(K: SimplicialComplex, sigma: Simplex) -> Set[Simplex]:
    """Every simplex of K having sigma as a face, sigma included"""
    canon, _ = sigma.canonical()
    if canon.id not in K.simplices:
        raise NotInComplex(f"simplex {canon.id} is not in the complex", {"simplex": canon.id})
    return {t for t in K.simplices.values() if canon.is_face_of(t)}


@dataclass(frozen=True)
class Stratum:
    """A union of catalogue pieces; pieces of lower dimension are internal glue"""
    id: str
    dim: int
    pieces: Tuple[str, ...]
    adjacency: FrozenSet[str] = field(default=frozenset())


class Stratification:
    def __init__(self, strata: Iterable[Stratum], catalogue: Mapping[str, ParametrizedCell],
                 ambient_dim: Optional[int] = None):
        self.strata: Dict[str, Stratum] = {s.id: s for s in sorted(strata, key=lambda s: (s.dim, s.id))}
        self.catalogue: Dict[str, ParametrizedCell] = dict(catalogue)
        dims = {c.ambient_dim for c in self.catalogue.values()}
        if ambient_dim is None:
            if len(dims) != 1:
                raise DimensionMismatch("cannot infer the ambient dimension of the catalogue")
            ambient_dim = dims.pop()
        self.ambient_dim = ambient_dim
        self.owner: Dict[str, str] = {}
        for s in self.strata.values():
            for p in s.pieces:
                if p not in self.catalogue:
                    raise IncompatibleCatalogue(f"stratum {s.id} uses unregistered piece {p}", {"stratum": s.id})
                cell = self.catalogue[p]
                if cell.ambient_dim != ambient_dim:
                    raise DimensionMismatch(f"piece {p} lives in R^{cell.ambient_dim}", {"cell": p})
                if cell.dim > s.dim:
                    raise DimensionMismatch(f"piece {p} has dimension above its stratum {s.id}", {"cell": p})
                if p in self.owner:
                    raise IncompatibleCatalogue(f"piece {p} belongs to {self.owner[p]} and {s.id}", {"cell": p})
                self.owner[p] = s.id
            if not self.top_pieces(s.id):
                raise DimensionMismatch(f"stratum {s.id} has no piece of dimension {s.dim}", {"stratum": s.id})
            for a in s.adjacency:
                if a not in self.strata:
                    raise IncompatibleCatalogue(f"stratum {s.id} lists unknown neighbour {a}", {"stratum": s.id})
                if self.strata[a].dim >= s.dim:
                    raise DimensionMismatch(f"adjacent stratum {a} is not of lower dimension than {s.id}",
                                            {"stratum": s.id})

    def __getitem__(self, stratum_id: str) -> Stratum:
        return self.strata[stratum_id]

    def of_dim(self, k: int) -> List[Stratum]:
        return [s for s in self.strata.values() if s.dim == k]

    def top_pieces(self, stratum_id: str) -> List[ParametrizedCell]:
        s = self.strata[stratum_id]
        return [self.catalogue[p] for p in s.pieces if self.catalogue[p].dim == s.dim]

    def glue_pieces(self, stratum_id: str) -> List[ParametrizedCell]:
        s = self.strata[stratum_id]
        return [self.catalogue[p] for p in s.pieces if self.catalogue[p].dim < s.dim]

    def distance(self, stratum_id: str, point: Sequence[float], cutoff: float = np.inf) -> float:
        """Distance from a point to the closure of a stratum"""
        x = np.asarray(point, dtype=float)
        best = np.inf
        pieces = sorted(self.top_pieces(stratum_id), key=lambda c: c.box_distance(x))
        for cell in pieces:
            if cell.box_distance(x) > min(best, cutoff):
                break
            best = min(best, cell.distance(x))
        return best

    def locate(self, point: Sequence[float], tol: float = FRONTIER_TOL) -> Optional[str]:
        """The lowest-dimensional stratum whose closure lies within tol of the point"""
        x = np.asarray(point, dtype=float)
        for s in self.strata.values():
            if self.distance(s.id, x, cutoff=tol) <= tol:
                return s.id
        return None

    def contains(self, stratum_id: str, point: Sequence[float], tol: float = FRONTIER_TOL) -> bool:
        return self.locate(point, tol) == stratum_id

    def sample(self, stratum_id: str, count: int, rng: np.random.Generator) -> np.ndarray:
        """Interior samples of a stratum spread over its top pieces"""
        pieces = self.top_pieces(stratum_id)
        chunks = []
        for i, cell in enumerate(pieces):
            share = count // len(pieces) + (1 if i < count % len(pieces) else 0)
            if share:
                chunks.append(cell.sample(share, rng)[1])
        return np.vstack(chunks) if chunks else np.zeros((0, self.ambient_dim))

    def closure_pieces(self, stratum_id: str) -> Set[str]:
        """Catalogue pieces reachable from the stratum through face records"""
        seen: Set[str] = set()
        todo = list(self.strata[stratum_id].pieces)
        while todo:
            p = todo.pop()
            if p in seen or p not in self.catalogue:
                continue
            seen.add(p)
            todo.extend(f for f, _ in self.catalogue[p].faces)
        return seen


def stratification_from_complex(K: SimplicialComplex, cells: Optional[Mapping[str, ParametrizedCell]] = None
                                ) -> Stratification:
    """Every open simplex is a stratum adjacent to all of its proper faces"""
    cells = dict(cells or K.cells())
    strata = []
    for s in K.simplices.values():
        below = frozenset(
            Simplex(f).id for r in range(1, len(s.vertices)) for f in combinations(s.vertices, r)
        )
        strata.append(Stratum(s.id, s.dim, (s.id,), below))
    return Stratification(strata, cells, K.ambient_dim)


def validate_frontier(sigma: Stratification, samples: int = DEFAULT_SAMPLES, tol: float = FRONTIER_TOL,
                      seed: int = 0) -> ValidationReport:
    """Audit that the boundary of every stratum is covered by lower strata it lists as adjacent"""
    rng = np.random.default_rng(seed)
    checks, failures, overlaps = [], [], []
    for s in sigma.strata.values():
        if s.dim == 0:
            continue
        glue = sigma.glue_pieces(s.id)
        checked = skipped = 0
        worst = 0.0
        for cell in sigma.top_pieces(s.id):
            for facet, _ in cell.facets():
                _, points = facet.sample(samples, rng)
                for x in points:
                    if any(g.box_distance(x) <= tol and g.distance(x) <= tol for g in glue):
                        skipped += 1
                        continue
                    checked += 1
                    near = [(sigma.distance(a, x, cutoff=tol), a) for a in sorted(s.adjacency)]
                    hit = [d for d, _ in near if d <= tol]
                    if hit:
                        worst = max(worst, min(hit))
                        continue
                    lower = [(sigma.distance(t.id, x), t.id) for t in sigma.strata.values() if t.dim < s.dim]
                    distance, nearest = min(lower) if lower else (np.inf, None)
                    worst = max(worst, float(distance))
                    failures.append(FrontierFailure(stratum=s.id, point=[float(c) for c in x],
                                                    nearest=nearest, distance=float(distance)))
        checks.append(FrontierCheck(stratum=s.id, checked=checked, skipped=skipped, max_distance=float(worst)))

        for cell in sigma.top_pieces(s.id):
            _, points = cell.sample(max(1, samples // 4), rng)
            for other in sigma.of_dim(s.dim):
                if other.id == s.id:
                    continue
                for x in points:
                    if sigma.distance(other.id, x, cutoff=tol) <= tol:
                        overlaps.append(OverlapFailure(stratum=s.id, other=other.id, point=[float(c) for c in x]))
                        break

    passed = not failures and not overlaps
    if not passed:
        logger.info("frontier audit failed at %d points, %d overlaps", len(failures), len(overlaps))
    return ValidationReport(passed=passed, samples=samples, tol=tol, strata=checks,
                            failures=failures, overlaps=overlaps)


def refine_common(sigma: Stratification, other: Stratification) -> Stratification:
    """Common refinement of two stratifications registered on the same cell catalogue"""
    shared = set(sigma.owner) | set(other.owner)
    for p in shared:
        if p not in sigma.owner or p not in other.owner:
            raise IncompatibleCatalogue(f"piece {p} is not covered by both stratifications", {"cell": p})
        if sigma.catalogue[p] != other.catalogue[p]:
            raise IncompatibleCatalogue(f"piece {p} is registered differently", {"cell": p})
    if sigma.ambient_dim != other.ambient_dim:
        raise IncompatibleCatalogue("stratifications live in different ambient spaces")
    catalogue = {**other.catalogue, **sigma.catalogue}

    groups: Dict[Tuple[str, str], List[str]] = {}
    for p in sorted(shared):
        groups.setdefault((sigma.owner[p], other.owner[p]), []).append(p)

    def touching(a: str, b: str) -> bool:
        return b in {f for f, _ in catalogue[a].faces} or a in {f for f, _ in catalogue[b].faces}

    existing = {frozenset(s.pieces): s.id for s in list(other.strata.values()) + list(sigma.strata.values())}
    components: List[Tuple[Tuple[str, str], List[str]]] = []
    for key, members in groups.items():
        if frozenset(members) in existing:
            components.append((key, sorted(members)))
            continue
        remaining = list(members)
        while remaining:
            part = [remaining.pop(0)]
            grew = True
            while grew:
                grew = False
                for p in list(remaining):
                    if any(touching(p, q) for q in part):
                        part.append(p)
                        remaining.remove(p)
                        grew = True
            components.append((key, sorted(part)))

    counts: Dict[Tuple[str, str], int] = {}
    for key, _ in components:
        counts[key] = counts.get(key, 0) + 1
    named: List[Tuple[str, int, List[str]]] = []
    seen: Dict[Tuple[str, str], int] = {}
    for key, part in components:
        dim = max(catalogue[p].dim for p in part)
        sid = existing.get(frozenset(part))
        if sid is None:
            sid = key[0] if key[0] == key[1] else f"{key[0]}&{key[1]}"
            if counts[key] > 1:
                seen[key] = seen.get(key, 0) + 1
                sid = f"{sid}#{seen[key]}"
        named.append((sid, dim, part))

    owner = {p: sid for sid, _, part in named for p in part}
    strata = []
    for sid, dim, part in named:
        reach: Set[str] = set()
        todo = [f for p in part for f, _ in catalogue[p].faces]
        while todo:
            f = todo.pop()
            if f in reach or f not in catalogue:
                continue
            reach.add(f)
            todo.extend(g for g, _ in catalogue[f].faces)
        adjacency = frozenset(owner[f] for f in reach if f in owner and owner[f] != sid)
        adjacency = frozenset(a for a in adjacency if next(d for s2, d, _ in named if s2 == a) < dim)
        strata.append(Stratum(sid, dim, tuple(part), adjacency))
    logger.debug("common refinement has %d strata", len(strata))
    return Stratification(strata, catalogue, sigma.ambient_dim)


def refines(fine: Stratification, coarse: Stratification) -> bool:
    """Whether every stratum of `coarse` is a union of strata of `fine`"""
    for s in coarse.strata.values():
        pieces = set(s.pieces)
        covered: Set[str] = set()
        for t in fine.strata.values():
            tp = set(t.pieces)
            if tp & pieces:
                if not tp <= pieces:
                    return False
                covered |= tp
        if covered != pieces:
            return False
    return True
