"""Differential forms with exact polynomial coefficients.

A k-form on R^n is a map from strictly increasing 1-based multi-indices I to
coefficients in QQ[x1..xn], read as sum_I a_I dx_I.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix
from sympy.polys.rings import PolyElement

from strataforms.algebra import (
    NumericPolynomial, constant, evaluate_exact, is_exact, poly_ring, polynomial_text, qq, substitute,
    snap_rational, to_fraction, total_degree, variable,
)
from strataforms.cells import reference_vertices
from strataforms.complex import Stratification
from strataforms.config import CLOSURE_STEPS, CONTINUITY_TOL, DEFAULT_SAMPLES
from strataforms.errors import (
    DimensionMismatch, GradingMismatch, IncompatibleCatalogue, NoTangentData,
)
from strataforms.schemas import ContinuityFailure, ContinuityPair, ContinuityReport

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]


def merge_sign(left: Index, right: Index) -> int:
    """Sign of sorting the concatenation of two increasing index tuples"""
    inversions = sum(1 for a in left for b in right if a > b)
    return -1 if inversions % 2 else 1


class PolyForm:
    """An exact polynomial-coefficient k-form on R^n"""

    def __init__(self, ambient_dim: int, degree: int, coeffs: Optional[Mapping[Index, PolyElement]] = None):
        if degree < 0:
            raise GradingMismatch(f"negative degree {degree}")
        self.ambient_dim = ambient_dim
        self.degree = degree
        ring = poly_ring(ambient_dim)
        clean: Dict[Index, PolyElement] = {}
        for index, coeff in (coeffs or {}).items():
            index = tuple(int(i) for i in index)
            if len(index) != degree or any(a >= b for a, b in zip(index, index[1:])):
                raise GradingMismatch(f"{index} is not a strictly increasing index of length {degree}")
            if index and (index[0] < 1 or index[-1] > ambient_dim):
                raise DimensionMismatch(f"{index} has entries outside 1..{ambient_dim}")
            if not isinstance(coeff, PolyElement):
                coeff = ring.ground_new(qq(coeff))
            if coeff.ring != ring:
                raise DimensionMismatch(f"coefficient of {index} is not a polynomial in {ambient_dim} variables")
            if coeff:
                clean[index] = coeff
        self.coeffs: Dict[Index, PolyElement] = dict(sorted(clean.items()))

    @classmethod
    def zero(cls, ambient_dim: int, degree: int) -> "PolyForm":
        return cls(ambient_dim, degree)

    @classmethod
    def function(cls, f: PolyElement) -> "PolyForm":
        return cls(f.ring.ngens, 0, {(): f})

    @classmethod
    def dx(cls, ambient_dim: int, *index: int) -> "PolyForm":
        """dx_{i1} ^ ... ^ dx_{ik} for any order of distinct 1-based indices"""
        if len(set(index)) != len(index):
            return cls.zero(ambient_dim, len(index))
        order = tuple(sorted(index))
        sign = 1
        items = list(index)
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                if items[i] > items[j]:
                    sign = -sign
        return cls(ambient_dim, len(index), {order: constant(ambient_dim, sign)})

    @property
    def ring(self):
        return poly_ring(self.ambient_dim)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def component(self, index: Index) -> PolyElement:
        return self.coeffs.get(tuple(index), self.ring.zero)

    @property
    def coefficient_degree(self) -> int:
        return max((total_degree(c) for c in self.coeffs.values()), default=0)

    def _same_space(self, other: "PolyForm"):
        if other.ambient_dim != self.ambient_dim:
            raise DimensionMismatch(f"forms on R^{self.ambient_dim} and R^{other.ambient_dim}")
        if other.degree != self.degree:
            raise GradingMismatch(f"cannot add forms of degree {self.degree} and {other.degree}")

    def __add__(self, other: "PolyForm") -> "PolyForm":
        self._same_space(other)
        coeffs = dict(self.coeffs)
        for index, c in other.coeffs.items():
            coeffs[index] = coeffs.get(index, self.ring.zero) + c
        return PolyForm(self.ambient_dim, self.degree, coeffs)

    def __neg__(self) -> "PolyForm":
        return PolyForm(self.ambient_dim, self.degree, {i: -c for i, c in self.coeffs.items()})

    def __sub__(self, other: "PolyForm") -> "PolyForm":
        return self + (-other)

    def __mul__(self, scalar) -> "PolyForm":
        """Multiply by a rational or a polynomial 0-form coefficient"""
        if isinstance(scalar, PolyForm):
            return wedge(self, scalar)
        factor = scalar if isinstance(scalar, PolyElement) else self.ring.ground_new(qq(scalar))
        return PolyForm(self.ambient_dim, self.degree, {i: c * factor for i, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyForm):
            return NotImplemented
        if self.ambient_dim != other.ambient_dim:
            return False
        if not self.coeffs and not other.coeffs:
            return True
        return self.degree == other.degree and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.ambient_dim, self.degree, tuple(self.coeffs.items())))

    def __repr__(self) -> str:
        if not self.coeffs:
            return f"PolyForm(0, degree={self.degree})"
        parts = []
        for index, c in self.coeffs.items():
            basis = "^".join(f"dx{i}" for i in index)
            parts.append(f"({polynomial_text(c)})" + (f"*{basis}" if basis else ""))
        return " + ".join(parts)

    def d(self) -> "PolyForm":
        return exterior_derivative(self)

    def max_abs_coefficient(self) -> Fraction:
        return max((abs(to_fraction(v)) for c in self.coeffs.values() for v in c.values()), default=Fraction(0))

    def to_records(self) -> Dict[str, str]:
        return {",".join(str(i) for i in index): polynomial_text(c) for index, c in self.coeffs.items()}


def wedge(alpha: PolyForm, beta: PolyForm) -> PolyForm:
    """Exact exterior product; past the top degree the result is the zero form"""
    if alpha.ambient_dim != beta.ambient_dim:
        raise DimensionMismatch(f"forms on R^{alpha.ambient_dim} and R^{beta.ambient_dim}")
    n = alpha.ambient_dim
    degree = alpha.degree + beta.degree
    if degree > n:
        return PolyForm.zero(n, degree)
    coeffs: Dict[Index, PolyElement] = {}
    ring = alpha.ring
    for i, a in alpha.coeffs.items():
        for j, b in beta.coeffs.items():
            if set(i) & set(j):
                continue
            index = tuple(sorted(i + j))
            term = a * b if merge_sign(i, j) > 0 else -(a * b)
            coeffs[index] = coeffs.get(index, ring.zero) + term
    return PolyForm(n, degree, coeffs)


def exterior_derivative(omega: PolyForm) -> PolyForm:
    n = omega.ambient_dim
    degree = omega.degree + 1
    if degree > n:
        return PolyForm.zero(n, degree)
    gens = omega.ring.gens
    coeffs: Dict[Index, PolyElement] = {}
    for index, a in omega.coeffs.items():
        for i in range(1, n + 1):
            if i in index:
                continue
            da = a.diff(gens[i - 1])
            if not da:
                continue
            position = sum(1 for j in index if j < i)
            new = tuple(sorted(index + (i,)))
            coeffs[new] = coeffs.get(new, omega.ring.zero) + (da if position % 2 == 0 else -da)
    return PolyForm(n, degree, coeffs)


@dataclass(frozen=True)
class PolynomialMap:
    """F: R^m -> R^n with components in QQ[u1..um]"""
    source_dim: int
    components: Tuple[PolyElement, ...]

    def __post_init__(self):
        ring = poly_ring(self.source_dim)
        if any(c.ring != ring for c in self.components):
            raise DimensionMismatch(f"map components must be polynomials in {self.source_dim} variables")

    @property
    def target_dim(self) -> int:
        return len(self.components)

    @classmethod
    def identity(cls, n: int) -> "PolynomialMap":
        return cls(n, tuple(variable(n, i) for i in range(n)))

    def compose(self, inner: "PolynomialMap") -> "PolynomialMap":
        """self o inner"""
        if inner.target_dim != self.source_dim:
            raise DimensionMismatch(f"cannot compose R^{inner.target_dim} into R^{self.source_dim}")
        ring = poly_ring(inner.source_dim)
        return PolynomialMap(inner.source_dim, tuple(substitute(c, inner.components, ring) for c in self.components))

    def jacobian(self) -> Tuple[Tuple[PolyElement, ...], ...]:
        gens = poly_ring(self.source_dim).gens
        return tuple(tuple(c.diff(g) for g in gens) for c in self.components)

    @cached_property
    def differentials(self) -> Tuple[PolyForm, ...]:
        return tuple(
            PolyForm(self.source_dim, 1, {(j + 1,): dc for j, dc in enumerate(row)})
            for row in self.jacobian()
        )

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.source_dim)
        return np.stack([NumericPolynomial(c)(points) for c in self.components], axis=1)


def pullback(F: PolynomialMap, omega: PolyForm) -> PolyForm:
    """F*omega = sum_I (a_I o F) dF_{i1} ^ ... ^ dF_{ik}"""
    if F.target_dim != omega.ambient_dim:
        raise DimensionMismatch(f"map into R^{F.target_dim} cannot pull back a form on R^{omega.ambient_dim}")
    m = F.source_dim
    ring = poly_ring(m)
    if omega.degree > m:
        return PolyForm.zero(m, omega.degree)
    dF = F.differentials
    cache: Dict[Index, PolyForm] = {(): PolyForm(m, 0, {(): ring.one})}

    def frame(index: Index) -> PolyForm:
        if index not in cache:
            cache[index] = wedge(frame(index[:-1]), dF[index[-1] - 1])
        return cache[index]

    result = PolyForm.zero(m, omega.degree)
    for index, a in omega.coeffs.items():
        result = result + frame(index) * substitute(a, F.components, ring)
    return result


def _minor(matrix: Sequence[Sequence], rows: Index):
    block = [list(matrix[r - 1]) for r in rows]
    if is_exact([v for row in block for v in row]):
        dm = DomainMatrix([[qq(v) for v in row] for row in block], (len(block), len(block)), QQ)
        return to_fraction(dm.det())
    return float(np.linalg.det(np.array(block, dtype=float)))


@dataclass(frozen=True)
class Multivector:
    """sum_I xi_I e_I in the elementary-wedge basis of Lambda^k R^n"""
    ambient_dim: int
    degree: int
    components: Mapping[Index, Union[Fraction, float]] = field(default_factory=dict)

    @classmethod
    def from_vectors(cls, vectors: Sequence[Sequence]) -> "Multivector":
        """v1 ^ ... ^ vk through the k x k minors of the n x k matrix"""
        vectors = [list(v) for v in vectors]
        k = len(vectors)
        if not k:
            raise DimensionMismatch("use Multivector.scalar() for degree 0")
        n = len(vectors[0])
        columns = [[vectors[j][i] for j in range(k)] for i in range(n)]
        comps = {}
        for index in combinations(range(1, n + 1), k):
            value = _minor(columns, index)
            if value:
                comps[index] = value
        return cls(n, k, comps)

    @classmethod
    def scalar(cls, ambient_dim: int, value=1) -> "Multivector":
        return cls(ambient_dim, 0, {(): value})

    @classmethod
    def basis(cls, ambient_dim: int, *index: int) -> "Multivector":
        vectors = [[int(i == j) for i in range(1, ambient_dim + 1)] for j in index]
        return cls.from_vectors(vectors) if vectors else cls.scalar(ambient_dim)


def evaluate(omega: PolyForm, point: Sequence, xi: Union[Multivector, Sequence[Sequence], None] = None):
    """omega(x; xi): exact for rational inputs, float otherwise"""
    if len(point) != omega.ambient_dim:
        raise DimensionMismatch(f"point has {len(point)} coordinates, form lives on R^{omega.ambient_dim}")
    if xi is None:
        xi = Multivector.scalar(omega.ambient_dim)
    elif not isinstance(xi, Multivector):
        xi = Multivector.from_vectors(xi)
    if xi.ambient_dim != omega.ambient_dim or xi.degree != omega.degree:
        raise DimensionMismatch(f"cannot evaluate a {omega.degree}-form on a {xi.degree}-vector of R^{xi.ambient_dim}")
    exact = is_exact(list(point)) and is_exact(list(xi.components.values()))
    total = Fraction(0) if exact else 0.0
    for index, value in xi.components.items():
        coeff = omega.coeffs.get(index)
        if coeff is None:
            continue
        if exact:
            total += evaluate_exact(coeff, point) * value
        else:
            total += float(NumericPolynomial(coeff)(np.asarray([point], dtype=float))[0]) * float(value)
    return total


class NumericForm:
    """Vectorized float evaluation of a PolyForm at many points"""

    def __init__(self, omega: PolyForm):
        self.ambient_dim = omega.ambient_dim
        self.degree = omega.degree
        self.coeffs = {index: NumericPolynomial(c) for index, c in omega.coeffs.items()}

    def coefficients(self, points: np.ndarray) -> Dict[Index, np.ndarray]:
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        return {index: f(points) for index, f in self.coeffs.items()}

    def on_frames(self, points: np.ndarray, frames: np.ndarray) -> np.ndarray:
        """Values on the simple multivectors of frames with shape (m, n, k)"""
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        out = np.zeros(points.shape[0])
        if self.degree == 0:
            for f in self.coeffs.values():
                out += f(points)
            return out
        for index, f in self.coeffs.items():
            rows = [i - 1 for i in index]
            minors = np.linalg.det(frames[:, rows, :])
            out += f(points) * minors
        return out


class StratifiedForm:
    """One PolyForm per stratum, all of the same degree on the same R^n"""

    def __init__(self, stratification: Stratification, components: Mapping[str, PolyForm], degree: int,
                 declared_bound=None, form_id: Optional[str] = None):
        self.stratification = stratification
        self.degree = degree
        self.id = form_id
        self.declared_bound = Fraction(declared_bound) if declared_bound is not None else None
        n = stratification.ambient_dim
        comps: Dict[str, PolyForm] = {}
        for sid, form in components.items():
            if sid not in stratification.strata:
                raise IncompatibleCatalogue(f"form component on unknown stratum {sid}", {"stratum": sid})
            if form.ambient_dim != n:
                raise DimensionMismatch(f"component on {sid} lives on R^{form.ambient_dim}", {"stratum": sid})
            if form.degree != degree and form.coeffs:
                raise GradingMismatch(f"component on {sid} has degree {form.degree}", {"stratum": sid})
            comps[sid] = form
        for s in stratification.strata.values():
            if s.id not in comps:
                if s.dim >= degree:
                    raise GradingMismatch(f"stratified form has no component on stratum {s.id}", {"stratum": s.id})
                comps[s.id] = PolyForm.zero(n, degree)
        self.components = comps

    @classmethod
    def uniform(cls, stratification: Stratification, omega: PolyForm, declared_bound=None,
                form_id: Optional[str] = None) -> "StratifiedForm":
        """The same polynomial form on every stratum"""
        return cls(stratification, {s: omega for s in stratification.strata}, omega.degree, declared_bound, form_id)

    @property
    def ambient_dim(self) -> int:
        return self.stratification.ambient_dim

    def component(self, stratum_id: str) -> PolyForm:
        return self.components[stratum_id]

    def d(self) -> "StratifiedForm":
        return StratifiedForm(self.stratification, {s: exterior_derivative(f) for s, f in self.components.items()},
                              self.degree + 1)

    def __add__(self, other: "StratifiedForm") -> "StratifiedForm":
        if other.stratification is not self.stratification:
            raise IncompatibleCatalogue("refine both forms to a common stratification first")
        return StratifiedForm(self.stratification,
                              {s: self.components[s] + other.components[s] for s in self.components}, self.degree)

    def scale(self, factor) -> "StratifiedForm":
        return StratifiedForm(self.stratification, {s: f * factor for s, f in self.components.items()}, self.degree)

    def wedge(self, other: "StratifiedForm") -> "StratifiedForm":
        if other.stratification is not self.stratification:
            raise IncompatibleCatalogue("refine both forms to a common stratification first")
        return StratifiedForm(self.stratification,
                              {s: wedge(self.components[s], other.components[s]) for s in self.components},
                              self.degree + other.degree)

    def is_uniform(self) -> bool:
        forms = [f for s, f in self.components.items() if self.stratification[s].dim >= self.degree]
        return all(f == forms[0] for f in forms)

    def refine(self, finer: Stratification) -> "StratifiedForm":
        """Restate the form on a stratification whose strata are unions of catalogue pieces of ours"""
        comps = {}
        for s in finer.strata.values():
            parents = {self.stratification.owner.get(p) for p in s.pieces}
            if None in parents or len(parents) != 1:
                raise IncompatibleCatalogue(f"stratum {s.id} is not contained in one stratum of the coarser form",
                                            {"stratum": s.id})
            comps[s.id] = self.components[parents.pop()]
        return StratifiedForm(finer, comps, self.degree, self.declared_bound, self.id)


def _unit_frame(vectors: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(vectors)
    return q


def check_graph_closed(omega: StratifiedForm, pairs: Optional[Iterable[Tuple[str, str]]] = None,
                       samples: int = 8, tol: float = CONTINUITY_TOL, steps: int = CLOSURE_STEPS,
                       seed: int = 0) -> ContinuityReport:
    """Audit that omega_S(p_i; xi_i) converges to omega_S'(p; xi) along sequences in S approaching S'"""
    sigma = omega.stratification
    rng = np.random.default_rng(seed)
    k = omega.degree
    if pairs is None:
        pairs = [(a, s.id) for s in sigma.strata.values() for a in sorted(s.adjacency)]
    report_pairs, failures = [], []
    for lower, upper in pairs:
        if lower not in sigma.strata[upper].adjacency:
            raise IncompatibleCatalogue(f"{lower} is not registered as adjacent to {upper}",
                                        {"lower": lower, "upper": upper})
        low, up = sigma[lower], sigma[upper]
        if low.dim < k:
            report_pairs.append(ContinuityPair(lower=lower, upper=upper, checked=0, max_gap=0.0, max_finest=0.0))
            continue
        tops = sigma.top_pieces(upper)
        bases = sigma.top_pieces(lower)
        if not tops or not bases:
            raise NoTangentData(f"no parametrized piece for {upper if not tops else lower}")
        form_up = NumericForm(omega.component(upper))
        form_low = NumericForm(omega.component(lower))
        checked, worst, worst_finest = 0, 0.0, 0.0
        for base in bases:
            v, points = base.sample(samples, rng)
            tangents = base.jacobian(v)
            for p, tangent in zip(points, tangents):
                host, u_star = None, None
                for cell in tops:
                    if cell.box_distance(p) > 1e-9:
                        continue
                    dist, u = cell.closest(p)
                    if dist <= 1e-9:
                        host, u_star = cell, u
                        break
                if host is None:
                    continue
                if k:
                    coeffs = rng.normal(size=(tangent.shape[1], k))
                    frame = _unit_frame(tangent @ coeffs)
                    if np.linalg.matrix_rank(frame) < k:
                        continue
                    lift, *_ = np.linalg.lstsq(host.jacobian(u_star)[0], frame, rcond=None)
                    target = form_low.on_frames(p, frame[None, :, :])[0]
                else:
                    target = form_low.on_frames(p, np.zeros((1, len(p), 0)))[0]
                center = host.barycenter()
                diffs = []
                for i in (steps - 1, steps):
                    u_i = u_star + 2.0 ** (-i) * (center - u_star)
                    p_i = host.evaluate(u_i)
                    if k:
                        xi_i = host.jacobian(u_i)[0] @ lift
                        value = form_up.on_frames(p_i, xi_i[None, :, :])[0]
                    else:
                        value = form_up.on_frames(p_i, np.zeros((1, len(p), 0)))[0]
                    diffs.append(value - target)
                finest = abs(diffs[1])
                gap = abs(2.0 * diffs[1] - diffs[0])
                checked += 1
                worst = max(worst, gap)
                worst_finest = max(worst_finest, finest)
                if gap > tol:
                    failures.append(ContinuityFailure(lower=lower, upper=upper, point=[float(c) for c in p],
                                                      limit=float(target + 2.0 * diffs[1] - diffs[0]),
                                                      value=float(target), gap=float(gap)))
        report_pairs.append(ContinuityPair(lower=lower, upper=upper, checked=checked,
                                           max_gap=float(worst), max_finest=float(worst_finest)))
    return ContinuityReport(passed=not failures, tol=tol, pairs=report_pairs, failures=failures)


def sup_norm_estimate(omega: StratifiedForm, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                      frames: int = 8) -> Fraction:
    """Sampled comass sup over strata; a lower bound for the true sup, snapped to a small-denominator
    rational when one lies within 1e-9"""
    rng = np.random.default_rng(seed)
    k = omega.degree
    best = 0.0
    for s in omega.stratification.strata.values():
        form = omega.component(s.id)
        if s.dim < k or not form.coeffs:
            continue
        numeric = NumericForm(form)
        for cell in omega.stratification.top_pieces(s.id):
            u, points = cell.sample(samples, rng)
            corners = reference_vertices(cell.ref_domain, cell.dim)
            u = np.vstack([u, corners])
            points = cell.evaluate(u)
            if k == 0:
                best = max(best, float(np.max(np.abs(numeric.on_frames(points, np.zeros((len(points), s.dim, 0)))))))
                continue
            basis = np.stack([_unit_frame(j) for j in cell.jacobian(u)])
            if k == 1:
                coeffs = numeric.coefficients(points)
                vec = np.zeros((len(points), omega.ambient_dim))
                for (i,), values in coeffs.items():
                    vec[:, i - 1] = values
                projected = np.einsum("mn,mnd->md", vec, basis)
                best = max(best, float(np.max(np.linalg.norm(projected, axis=1))))
                continue
            trials = [basis[:, :, list(c)] for c in combinations(range(s.dim), k)]
            for _ in range(frames if k < s.dim else 0):
                rot = np.stack([_unit_frame(rng.normal(size=(s.dim, k))) for _ in range(len(points))])
                trials.append(np.einsum("mnd,mdk->mnk", basis, rot))
            for frame in trials:
                best = max(best, float(np.max(np.abs(numeric.on_frames(points, frame)))))
    snapped = snap_rational(best, 1e-9)
    return snapped if snapped is not None else Fraction(best)


def audit_bound(omega: StratifiedForm, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> Tuple[Fraction, bool]:
    """The sampled sup norm and whether it respects the declared bound"""
    estimate = sup_norm_estimate(omega, samples, seed)
    if omega.declared_bound is None:
        return estimate, True
    return estimate, estimate <= omega.declared_bound * (1 + Fraction(1, 10 ** 12))
