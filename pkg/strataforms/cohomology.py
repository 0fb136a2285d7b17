"""Simplicial cochains over the rationals, Betti numbers, primitives and functional splitting"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from multiprocessing import Pool
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
from sympy.polys.matrices import DomainMatrix

from strataforms.algebra import (
    domain_matrix, exact_rank, nullspace, rref_rows, snap_rational, solve_particular, sparse_matrix,
)
from strataforms.complex import Chain, SimplicialComplex
from strataforms.config import PAIRING_TOL
from strataforms.errors import (
    GradingMismatch, KernelConditionFails, NoSolution, NotClosed, NotSurjective,
)
from strataforms.schemas import BettiTable

logger = logging.getLogger(__name__)

Value = Union[Fraction, float]
Matrix = Sequence[Sequence[Union[int, Fraction, str]]]


@dataclass(frozen=True)
class Cochain:
    """A rational-valued function on the k-simplices, keyed by simplex id"""
    degree: int
    values: Mapping[str, Value]

    def __post_init__(self):
        if self.degree < -1:
            raise GradingMismatch(f"cochain degree {self.degree}")
        clean = {k: v if isinstance(v, float) else Fraction(v) for k, v in self.values.items() if v}
        object.__setattr__(self, "values", dict(sorted(clean.items())))

    @classmethod
    def zero(cls, degree: int) -> "Cochain":
        return cls(degree, {})

    @classmethod
    def indicator(cls, simplex_id: str, degree: int, value=1) -> "Cochain":
        return cls(degree, {simplex_id: value})

    def __getitem__(self, simplex_id: str) -> Value:
        return self.values.get(simplex_id, Fraction(0))

    def __add__(self, other: "Cochain") -> "Cochain":
        if other.degree != self.degree:
            raise GradingMismatch(f"cannot add cochains of degree {self.degree} and {other.degree}")
        values = dict(self.values)
        for k, v in other.values.items():
            values[k] = values.get(k, 0) + v
        return Cochain(self.degree, values)

    def __neg__(self) -> "Cochain":
        return Cochain(self.degree, {k: -v for k, v in self.values.items()})

    def __sub__(self, other: "Cochain") -> "Cochain":
        return self + (-other)

    def __mul__(self, scalar) -> "Cochain":
        return Cochain(self.degree, {k: v * scalar for k, v in self.values.items()})

    __rmul__ = __mul__

    def __bool__(self) -> bool:
        return bool(self.values)

    def is_exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.values.values())

    def pair(self, c: Chain) -> Value:
        """f(c) for a chain of the same degree"""
        if c.terms and c.degree != self.degree:
            raise GradingMismatch(f"cannot pair a {self.degree}-cochain with a {c.degree}-chain")
        return sum((self[k] * a for k, a in c.terms.items()), Fraction(0))

    def rationalize(self, tol: float = PAIRING_TOL) -> "Cochain":
        """Snap float values to nearby small-denominator rationals"""
        values = {}
        for k, v in self.values.items():
            if isinstance(v, float):
                snapped = snap_rational(v, tol)
                values[k] = snapped if snapped is not None else Fraction(v)
            else:
                values[k] = v
        return Cochain(self.degree, values)

    def as_vector(self, K: SimplicialComplex) -> List[Fraction]:
        self._check(K)
        return [Fraction(self[s]) for s in K.ids(self.degree)]

    def _check(self, K: SimplicialComplex):
        known = set(K.ids(self.degree))
        stray = [k for k in self.values if k not in known]
        if stray:
            raise GradingMismatch(f"{self.degree}-cochain has values on {stray[:3]}, not {self.degree}-simplices of K",
                                  {"simplex": stray[0]})


def boundary_matrix(K: SimplicialComplex, k: int) -> DomainMatrix:
    """Integer matrix of the boundary map C_k -> C_(k-1); rows are (k-1)-simplices"""
    cols = K.ids(k)
    rows = K.ids(k - 1) if k > 0 else []
    where = {sid: i for i, sid in enumerate(rows)}
    entries: Dict[Tuple[int, int], int] = {}
    for j, s in enumerate(K.of_dim(k)):
        for face, sign in s.faces:
            entries[(where[face], j)] = sign
    return sparse_matrix(entries, (len(rows), len(cols)))


def coboundary_matrix(K: SimplicialComplex, k: int) -> DomainMatrix:
    """Integer matrix of d: C^k -> C^(k+1), the transpose of the boundary of (k+1)-simplices"""
    return boundary_matrix(K, k + 1).transpose()


def coboundary(f: Cochain, K: SimplicialComplex) -> Cochain:
    """(df)(sigma) = f(boundary sigma)"""
    f._check(K)
    out: Dict[str, Value] = {}
    for s in K.of_dim(f.degree + 1):
        total = sum((sign * f[face] for face, sign in s.faces), Fraction(0))
        if total:
            out[s.id] = total
    return Cochain(f.degree + 1, out)


def _rank_task(args) -> int:
    K, k = args
    return exact_rank(boundary_matrix(K, k))


def betti(K: SimplicialComplex, jobs: int = 1) -> BettiTable:
    """b_k = n_k - rank d_k - rank d_(k+1), all ranks exact over the rationals"""
    top = K.dim
    if top < 0:
        return BettiTable(numbers=[], counts=[], ranks=[], euler=0)
    tasks = [(K, k) for k in range(1, top + 1)]
    if jobs > 1 and len(tasks) > 1:
        with Pool(jobs) as pool:
            found = pool.map(_rank_task, tasks)
    else:
        found = [_rank_task(t) for t in tasks]
    rank = {0: 0, top + 1: 0}
    rank.update({k: r for (_, k), r in zip(tasks, found)})
    counts = [K.count(k) for k in range(top + 1)]
    numbers = [counts[k] - rank[k] - rank[k + 1] for k in range(top + 1)]
    euler = sum((-1) ** k * n for k, n in enumerate(counts))
    logger.debug("betti numbers %s from counts %s", numbers, counts)
    return BettiTable(numbers=numbers, counts=counts, ranks=[rank[k + 1] for k in range(top + 1)], euler=euler)


def solve_primitive(f: Cochain, K: SimplicialComplex) -> Cochain:
    """A (k-1)-cochain g with dg = f, found by back-substitution with free values set to zero"""
    df = coboundary(f, K)
    if df:
        first = next(iter(df.values))
        raise NotClosed(f"cochain is not closed: df is nonzero on {first}", {"simplex": first})
    if f.degree == 0:
        if f:
            raise NoSolution("a nonzero closed 0-cochain is never a coboundary")
        return Cochain.zero(-1)
    rhs = [Fraction(v) for v in f.as_vector(K)]
    solution = solve_particular(coboundary_matrix(K, f.degree - 1), rhs)
    if solution is None:
        raise NoSolution(f"the class of this {f.degree}-cochain is nonzero")
    return Cochain(f.degree - 1, dict(zip(K.ids(f.degree - 1), solution)))


def _chains_from(vectors: List[List[Fraction]], ids: List[str], k: int) -> List[Chain]:
    return [Chain(dict(zip(ids, v)), k) for v in vectors]


def cycle_basis(K: SimplicialComplex, k: int) -> List[Chain]:
    """Basis of the k-cycles Z_k"""
    ids = K.ids(k)
    if k == 0:
        return [Chain({sid: 1}, 0) for sid in ids]
    return _chains_from(nullspace(boundary_matrix(K, k)), ids, k)


def cocycle_basis(K: SimplicialComplex, k: int) -> List[Cochain]:
    """Basis of the closed k-cochains Z^k"""
    ids = K.ids(k)
    if k >= K.dim:
        return [Cochain(k, {sid: 1}) for sid in ids]
    return [Cochain(k, dict(zip(ids, v))) for v in nullspace(coboundary_matrix(K, k))]


def pairing_rank(matrix: Sequence[Sequence[float]], tol: float = PAIRING_TOL) -> int:
    """Exact rank after snapping entries to rationals; numpy's SVD rank when some entry will not snap"""
    rows = [list(r) for r in matrix]
    if not rows or not rows[0]:
        return 0
    snapped = []
    for row in rows:
        line = []
        for v in row:
            q = v if isinstance(v, Fraction) else snap_rational(float(v), tol)
            if q is None:
                logger.info("pairing entry %r does not snap to a rational; using a floating-point rank", v)
                return int(np.linalg.matrix_rank(np.array(rows, dtype=float), tol=tol))
            line.append(q)
        snapped.append(line)
    return exact_rank(domain_matrix(snapped))


def _rank(rows: Matrix, ncols: int) -> int:
    if not rows:
        return 0
    return exact_rank(domain_matrix(rows, ncols))


def split_functional(dim_v: int, phi1: Matrix, phi2: Matrix, f: Sequence) -> Tuple[List[Fraction], List[Fraction]]:
    """Functionals g1 on W1 and g2 on W2 with f(x) = g1(phi1 x) + g2(phi2 x) for every x in V.

    phi1 and phi2 are row lists (one row per coordinate of W1, W2). The combined
    map psi = (phi1, phi2) is factored through its image; g is the functional
    induced there, extended by zero on a complement spanned by standard basis
    vectors picked greedily.
    """
    phi1 = [[Fraction(v) for v in row] for row in phi1]
    phi2 = [[Fraction(v) for v in row] for row in phi2]
    f = [Fraction(v) for v in f]
    if len(f) != dim_v or any(len(row) != dim_v for row in phi1 + phi2):
        raise GradingMismatch(f"maps and functional must act on a space of dimension {dim_v}")
    for name, phi in (("phi1", phi1), ("phi2", phi2)):
        if _rank(phi, dim_v) != len(phi):
            raise NotSurjective(f"{name} has rank {_rank(phi, dim_v)} onto a space of dimension {len(phi)}")
    psi = phi1 + phi2
    m = len(psi)
    rank_psi = _rank(psi, dim_v)
    if _rank(psi + [f], dim_v) != rank_psi:
        witness = nullspace(domain_matrix(psi, dim_v)) if psi else [[Fraction(int(i == j)) for i in range(dim_v)]
                                                                  for j in range(dim_v)]
        bad = next((v for v in witness if sum(a * b for a, b in zip(f, v))), None)
        raise KernelConditionFails("f does not vanish on the common kernel of phi1 and phi2",
                                   {"vector": [str(v) for v in bad] if bad else []})
    if m == 0:
        return [], []

    _, pivots = rref_rows(domain_matrix(psi, dim_v))
    basis = [[psi[i][j] for i in range(m)] for j in pivots]
    values = [f[j] for j in pivots]
    for i in range(m):
        if len(basis) == m:
            break
        e = [Fraction(int(r == i)) for r in range(m)]
        if _rank(basis + [e], m) > len(basis):
            basis.append(e)
            values.append(Fraction(0))
    g = solve_particular(domain_matrix(basis, m), values)
    if g is None:
        raise KernelConditionFails("the image basis could not be extended to W1 + W2")
    return g[:len(phi1)], g[len(phi1):]


def reconstruct(phi1: Matrix, phi2: Matrix, g1: Sequence, g2: Sequence) -> List[Fraction]:
    """The functional x -> g1(phi1 x) + g2(phi2 x) as a coefficient vector"""
    rows = [[Fraction(v) for v in row] for row in list(phi1) + list(phi2)]
    g = [Fraction(v) for v in list(g1) + list(g2)]
    dim_v = len(rows[0]) if rows else 0
    return [sum((g[i] * rows[i][j] for i in range(len(rows))), Fraction(0)) for j in range(dim_v)]
