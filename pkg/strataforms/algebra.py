"""Exact rational polynomials and linear algebra over QQ.

Polynomials are sparse ``PolyElement`` objects from ``sympy.polys.rings``
(exponent tuple -> rational). Ranks and solves go through ``DomainMatrix``.
"""
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sympy import QQ, ZZ, sympify
from sympy.polys.matrices import DomainMatrix
from sympy.polys.orderings import grevlex
from sympy.polys.rings import PolyElement, PolyRing

Number = Union[int, Fraction, float]
Exact = Union[int, Fraction]


@lru_cache(maxsize=None)
def poly_ring(nvars: int) -> PolyRing:
    """Polynomial ring QQ[x1..xn] shared by every object of that arity"""
    names = ",".join(f"x{i + 1}" for i in range(nvars))
    return PolyRing(names, QQ, grevlex)


def qq(value) -> "QQ.dtype":
    """Convert an int, Fraction, numeric string or QQ element to QQ"""
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, int):
        return QQ(value)
    if isinstance(value, Fraction):
        return QQ(value.numerator, value.denominator)
    if isinstance(value, str):
        frac = Fraction(value)
        return QQ(frac.numerator, frac.denominator)
    if isinstance(value, float):
        raise TypeError("floats are not exact coefficients; pass a Fraction or string")
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return QQ(int(value.numerator), int(value.denominator))
    raise TypeError(f"cannot convert {value!r} to a rational")


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(int(value.numerator), int(value.denominator))


def to_float(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    return int(value.numerator) / int(value.denominator)


def is_exact(values: Sequence) -> bool:
    return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in values)


def constant(nvars: int, value) -> PolyElement:
    return poly_ring(nvars).ground_new(qq(value))


def variable(nvars: int, index: int) -> PolyElement:
    """The coordinate x_index (0-based) of QQ[x1..xn]"""
    return poly_ring(nvars).gens[index]


def from_terms(nvars: int, terms: Dict[Tuple[int, ...], object]) -> PolyElement:
    ring = poly_ring(nvars)
    cleaned = {}
    for exps, coeff in terms.items():
        if len(exps) != nvars:
            raise ValueError(f"exponent {exps} does not have {nvars} entries")
        value = qq(coeff)
        if value:
            cleaned[tuple(int(e) for e in exps)] = value
    return ring.from_dict(cleaned) if cleaned else ring.zero


def affine(nvars: int, offset, linear: Sequence) -> PolyElement:
    """offset + sum(linear[i] * x_i)"""
    p = constant(nvars, offset)
    for i, c in enumerate(linear):
        if c:
            p += variable(nvars, i) * qq(c)
    return p


def total_degree(p: PolyElement) -> int:
    if not p:
        return 0
    return max(sum(exps) for exps in p.keys())


def substitute(p: PolyElement, images: Sequence[PolyElement], target: PolyRing) -> PolyElement:
    """p(images[0], ..., images[n-1]) computed in the target ring"""
    if len(images) != p.ring.ngens:
        raise ValueError(f"expected {p.ring.ngens} images, got {len(images)}")
    if any(g.ring != target for g in images):
        raise ValueError("images must live in the target ring")
    powers: Dict[Tuple[int, int], PolyElement] = {}

    def power(i: int, e: int) -> PolyElement:
        key = (i, e)
        if key not in powers:
            powers[key] = images[i] ** e
        return powers[key]

    result = target.zero
    for exps, coeff in p.items():
        term = target.ground_new(coeff)
        for i, e in enumerate(exps):
            if e:
                term = term * power(i, e)
        result += term
    return result


def integrate_last(p: PolyElement, lo=0, hi=1) -> PolyElement:
    """Integrate over the last variable from lo to hi, dropping it"""
    n = p.ring.ngens
    ring = poly_ring(n - 1)
    a, b = qq(lo), qq(hi)
    out: Dict[Tuple[int, ...], object] = {}
    for exps, coeff in p.items():
        e = exps[-1]
        value = coeff * (b ** (e + 1) - a ** (e + 1)) / (e + 1)
        key = exps[:-1]
        out[key] = out.get(key, QQ.zero) + value
    out = {k: v for k, v in out.items() if v}
    return ring.from_dict(out) if out else ring.zero


def set_last(p: PolyElement, value) -> PolyElement:
    """Evaluate the last variable at a rational value, dropping it"""
    n = p.ring.ngens
    ring = poly_ring(n - 1)
    a = qq(value)
    out: Dict[Tuple[int, ...], object] = {}
    for exps, coeff in p.items():
        key = exps[:-1]
        out[key] = out.get(key, QQ.zero) + coeff * a ** exps[-1]
    out = {k: v for k, v in out.items() if v}
    return ring.from_dict(out) if out else ring.zero


def evaluate_exact(p: PolyElement, point: Sequence[Exact]) -> Fraction:
    total = QQ.zero
    values = [qq(v) for v in point]
    for exps, coeff in p.items():
        term = coeff
        for v, e in zip(values, exps):
            if e:
                term *= v ** e
        total += term
    return to_fraction(total)


def evaluate(p: PolyElement, point: Sequence[Number]) -> Number:
    """Exact Fraction for rational input, float otherwise"""
    if is_exact(point):
        return evaluate_exact(p, point)
    return float(NumericPolynomial(p)(np.asarray([point], dtype=float))[0])


class NumericPolynomial:
    """Vectorized float evaluator for a polynomial"""

    def __init__(self, p: PolyElement):
        self.nvars = p.ring.ngens
        items = sorted(p.items())
        self.exponents = np.array([e for e, _ in items], dtype=float).reshape(len(items), self.nvars)
        self.coefficients = np.array([to_float(c) for _, c in items], dtype=float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.nvars == 0:
            count = points.shape[0] if points.ndim > 1 else 1
            return np.full(count, float(self.coefficients.sum()))
        points = points.reshape(-1, self.nvars)
        if not len(self.coefficients):
            return np.zeros(points.shape[0])
        monomials = np.prod(points[:, None, :] ** self.exponents[None, :, :], axis=2)
        return monomials @ self.coefficients


def poly_from_records(nvars: int, records: Sequence[Sequence]) -> PolyElement:
    terms: Dict[Tuple[int, ...], Fraction] = {}
    for exps, num, den in records:
        key = tuple(int(e) for e in exps)
        terms[key] = terms.get(key, Fraction(0)) + Fraction(int(num), int(den))
    return from_terms(nvars, terms)


def parse_polynomial(nvars: int, text: str) -> PolyElement:
    """Parse an expression in x1..xn such as "x1*x2 - 1/2" """
    try:
        return poly_ring(nvars).from_expr(sympify(text, rational=True))
    except (ValueError, TypeError, SyntaxError) as e:
        raise ValueError(f"cannot read {text!r} as a polynomial in {nvars} variables: {e}")


def polynomial_text(p: PolyElement) -> str:
    return str(p.as_expr())


# Exact linear algebra

def domain_matrix(rows: Sequence[Sequence], ncols: Optional[int] = None) -> DomainMatrix:
    """Sparse DomainMatrix over QQ from a dense list of rows"""
    nrows = len(rows)
    if ncols is None:
        ncols = len(rows[0]) if nrows else 0
    entries = {}
    for i, row in enumerate(rows):
        line = {j: qq(v) for j, v in enumerate(row) if v}
        if line:
            entries[i] = line
    return DomainMatrix(entries, (nrows, ncols), QQ)


def sparse_matrix(entries: Dict[Tuple[int, int], int], shape: Tuple[int, int]) -> DomainMatrix:
    """Integer matrix from (row, col) -> value entries"""
    rows: Dict[int, Dict[int, object]] = {}
    for (i, j), v in entries.items():
        if v:
            rows.setdefault(i, {})[j] = ZZ(v)
    return DomainMatrix(rows, shape, ZZ)


def exact_rank(matrix: DomainMatrix) -> int:
    """Rank by fraction-free row reduction"""
    nrows, ncols = matrix.shape
    if nrows == 0 or ncols == 0:
        return 0
    if matrix.domain != ZZ:
        return len(rref_rows(matrix)[1])
    _, _, pivots = matrix.rref_den()
    return len(pivots)


def rref_rows(matrix: DomainMatrix) -> Tuple[List[List[Fraction]], Tuple[int, ...]]:
    """Reduced row echelon form over QQ as Fractions, plus pivot columns"""
    nrows, ncols = matrix.shape
    if nrows == 0 or ncols == 0:
        return [[Fraction(0)] * ncols for _ in range(nrows)], ()
    reduced, pivots = matrix.convert_to(QQ).to_dense().rref()
    rows = [[to_fraction(v) for v in row] for row in reduced.to_list()]
    return rows, tuple(pivots)


def nullspace(matrix: DomainMatrix) -> List[List[Fraction]]:
    """Basis of {v : M v = 0}, one vector per free column"""
    _, ncols = matrix.shape
    rows, pivots = rref_rows(matrix)
    free = [j for j in range(ncols) if j not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for i, p in enumerate(pivots):
            v[p] = -rows[i][f]
        basis.append(v)
    return basis


def solve_particular(matrix: DomainMatrix, rhs: Sequence[Exact]) -> Optional[List[Fraction]]:
    """A solution of M v = rhs with free variables set to zero, or None"""
    nrows, ncols = matrix.shape
    if ncols == 0:
        return [] if not any(rhs) else None
    column = domain_matrix([[v] for v in rhs], 1)
    augmented = matrix.convert_to(QQ).hstack(column)
    rows, pivots = rref_rows(augmented)
    if ncols in pivots:
        return None
    solution = [Fraction(0)] * ncols
    for i, p in enumerate(pivots):
        solution[p] = rows[i][ncols]
    return solution


def snap_rational(value: float, tol: float, max_denominator: int = 10 ** 6) -> Optional[Fraction]:
    """Nearest small-denominator rational, if it lies within tol"""
    candidate = Fraction(value).limit_denominator(max_denominator)
    if abs(float(candidate) - value) <= tol:
        return candidate
    return None
