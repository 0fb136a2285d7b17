"""Retractions, the time-integrated homotopy operator and the checks on retractions.

A retraction r: U x [0, 1] -> U is stored with time as the last coordinate, so
a polynomial retraction on R^n is a PolynomialMap from R^(n+1).
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import roots_legendre
from sympy.polys.rings import PolyElement

from strataforms.algebra import (
    NumericPolynomial, constant, evaluate_exact, integrate_last, set_last, variable,
)
from strataforms.cells import SIMPLEX, collapse
from strataforms.complex import Stratification
from strataforms.config import DEFAULT_SAMPLES, FD_STEP, FRONTIER_TOL, SEMIDIFF_T, SEMIDIFF_TOL, WEAK_TOL
from strataforms.errors import (
    AuditFailed, DegreeMismatch, DelimiterCrossing, DimensionMismatch, NonPolynomialRetraction, NotClosed,
    NotConeInvariant,
)
from strataforms.forms import NumericForm, PolyForm, PolynomialMap, StratifiedForm, pullback
from strataforms.schemas import (
    LipschitzEstimate, PoincareReport, RetractionAuditReport, SemiDifferentiabilityReport,
)
from strataforms.smoothing import weak_derivative_residual

logger = logging.getLogger(__name__)

AUDIT_TIMES = (1.0, 0.75, 0.5, 0.25, 2.0 ** -6)


class Retraction:
    """r(x, t) with r(., 1) the identity and r(., 0) landing in the target strata"""
    kind = "abstract"

    def __init__(self, ambient_dim: int, domain: Optional[Stratification] = None, target: Sequence[str] = ()):
        self.id: Optional[str] = None
        self.ambient_dim = ambient_dim
        self.domain = domain
        self.target = list(target)
        if domain is not None and domain.ambient_dim != ambient_dim:
            raise DimensionMismatch(f"retraction on R^{ambient_dim} over a stratification of R^{domain.ambient_dim}")

    @property
    def polynomial(self) -> Optional[PolynomialMap]:
        return None

    def evaluate(self, points: np.ndarray, t) -> np.ndarray:
        raise NotImplementedError

    def evaluate_exact(self, point: Sequence, t) -> Tuple[Fraction, ...]:
        raise NonPolynomialRetraction(f"{self.kind} retraction has no exact evaluator")

    def _times(self, points: np.ndarray, t) -> Tuple[np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        times = np.broadcast_to(np.asarray(t, dtype=float), (points.shape[0],)).astype(float)
        return points, times

    def jacobian(self, points: np.ndarray, t, step: float = FD_STEP) -> np.ndarray:
        """Full differential in (x, t), shape (m, n, n + 1); central differences"""
        points, times = self._times(points, t)
        n = self.ambient_dim
        out = np.zeros((points.shape[0], n, n + 1))
        for i in range(n):
            shift = np.zeros(n)
            shift[i] = step
            out[:, :, i] = (self.evaluate(points + shift, times) - self.evaluate(points - shift, times)) / (2 * step)
        out[:, :, n] = (self.evaluate(points, times + step) - self.evaluate(points, times - step)) / (2 * step)
        return out

    def jacobian_x(self, points: np.ndarray, t, step: float = FD_STEP) -> np.ndarray:
        return self.jacobian(points, t, step)[:, :, :self.ambient_dim]


class PolynomialRetraction(Retraction):
    """A retraction whose components are polynomials in (x1..xn, t)"""

    def __init__(self, components: Sequence[PolyElement], domain: Optional[Stratification] = None,
                 target: Sequence[str] = (), kind: str = "polynomial"):
        n = len(components)
        super().__init__(n, domain, target)
        self.map = PolynomialMap(n + 1, tuple(components))
        self.kind = kind

    @property
    def polynomial(self) -> PolynomialMap:
        return self.map

    def evaluate(self, points: np.ndarray, t) -> np.ndarray:
        points, times = self._times(points, t)
        return self.map.evaluate(np.hstack([points, times[:, None]]))

    def evaluate_exact(self, point: Sequence, t) -> Tuple[Fraction, ...]:
        args = [Fraction(c) for c in point] + [Fraction(t)]
        return tuple(evaluate_exact(c, args) for c in self.map.components)

    @cached_property
    def _numeric_jacobian(self):
        return tuple(tuple(NumericPolynomial(q) for q in row) for row in self.map.jacobian())

    def jacobian(self, points: np.ndarray, t, step: float = FD_STEP) -> np.ndarray:
        points, times = self._times(points, t)
        args = np.hstack([points, times[:, None]])
        n = self.ambient_dim
        out = np.zeros((points.shape[0], n, n + 1))
        for i, row in enumerate(self._numeric_jacobian):
            for j, f in enumerate(row):
                out[:, i, j] = f(args)
        return out

    def at_time(self, value) -> PolynomialMap:
        """r_value as a polynomial map of R^n"""
        return PolynomialMap(self.ambient_dim, tuple(set_last(c, value) for c in self.map.components))


@dataclass(frozen=True)
class Delimiter:
    """A piecewise-polynomial function of the base coordinates, split along x1"""
    pieces: Tuple[PolyElement, ...]
    breaks: Tuple[Fraction, ...] = ()

    def __post_init__(self):
        if len(self.pieces) != len(self.breaks) + 1:
            raise DimensionMismatch(f"{len(self.pieces)} pieces need {len(self.pieces) - 1} breaks")
        if list(self.breaks) != sorted(self.breaks):
            raise DimensionMismatch("breaks must increase")

    @classmethod
    def polynomial(cls, p: PolyElement) -> "Delimiter":
        return cls((p,))

    @property
    def base_dim(self) -> int:
        return self.pieces[0].ring.ngens

    @cached_property
    def _numeric(self) -> Tuple[NumericPolynomial, ...]:
        return tuple(NumericPolynomial(p) for p in self.pieces)

    def _choice(self, x1: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.array([float(b) for b in self.breaks]), x1, side="left")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.base_dim)
        if len(self.pieces) == 1:
            return self._numeric[0](points)
        choice = self._choice(points[:, 0])
        out = np.zeros(points.shape[0])
        for i, f in enumerate(self._numeric):
            mask = choice == i
            if mask.any():
                out[mask] = f(points[mask])
        return out

    def evaluate_exact(self, point: Sequence) -> Fraction:
        point = [Fraction(c) for c in point]
        i = sum(1 for b in self.breaks if point[0] > b)
        return evaluate_exact(self.pieces[i], point)


class LiftedRetraction(Retraction):
    """The lift of a base retraction to a band between two delimiters, or to a graph over the base"""
    kind = "lifted"

    def __init__(self, base: Retraction, lower: Delimiter, upper: Optional[Delimiter] = None,
                 cellkind: str = "band", domain: Optional[Stratification] = None, target: Sequence[str] = ()):
        super().__init__(base.ambient_dim + 1, domain, target)
        if cellkind not in ("band", "graph"):
            raise DimensionMismatch(f"unknown cell kind {cellkind!r}")
        if cellkind == "band" and upper is None:
            raise DimensionMismatch("a band needs an upper delimiter")
        for theta in (lower, upper):
            if theta is not None and theta.base_dim != base.ambient_dim:
                raise DimensionMismatch(f"delimiter in {theta.base_dim} variables over a base of R^{base.ambient_dim}")
        self.base = base
        self.lower = lower
        self.upper = upper
        self.cellkind = cellkind

    def tau(self, points: np.ndarray) -> np.ndarray:
        """Relative height (y - theta_lo(x)) / (theta_hi(x) - theta_lo(x))"""
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        if self.cellkind == "graph":
            return np.zeros(points.shape[0])
        x, y = points[:, :-1], points[:, -1]
        lo, hi = self.lower.evaluate(x), self.upper.evaluate(x)
        gap = hi - lo
        # where the delimiters meet every height lifts to the same point
        safe = np.where(gap > 0, gap, 1.0)
        return np.where(gap > 0, (y - lo) / safe, 0.0)

    def tau_exact(self, point: Sequence) -> Fraction:
        if self.cellkind == "graph":
            return Fraction(0)
        point = [Fraction(c) for c in point]
        x, y = point[:-1], point[-1]
        lo, hi = self.lower.evaluate_exact(x), self.upper.evaluate_exact(x)
        if hi == lo:
            return Fraction(0)
        return (y - lo) / (hi - lo)

    def evaluate(self, points: np.ndarray, t) -> np.ndarray:
        points, times = self._times(points, t)
        moved = self.base.evaluate(points[:, :-1], times)
        lo = self.lower.evaluate(moved)
        if self.cellkind == "graph":
            return np.hstack([moved, lo[:, None]])
        tau = self.tau(points)
        hi = self.upper.evaluate(moved)
        return np.hstack([moved, (tau * hi + (1.0 - tau) * lo)[:, None]])

    def evaluate_exact(self, point: Sequence, t) -> Tuple[Fraction, ...]:
        point = [Fraction(c) for c in point]
        moved = self.base.evaluate_exact(point[:-1], t)
        lo = self.lower.evaluate_exact(moved)
        if self.cellkind == "graph":
            return tuple(moved) + (lo,)
        tau = self.tau_exact(point)
        return tuple(moved) + (tau * self.upper.evaluate_exact(moved) + (1 - tau) * lo,)


def _sample_domain(sigma: Stratification, samples: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    return {s.id: sigma.sample(s.id, samples, rng) for s in sigma.strata.values()}


def cone_retraction(center: Sequence, sigma: Stratification, samples: int = 16, seed: int = 0,
                    tol: float = FRONTIER_TOL) -> PolynomialRetraction:
    """r(x, t) = p + t (x - p), audited for cone invariance of every stratum"""
    p = [Fraction(c) for c in center]
    n = len(p)
    if n != sigma.ambient_dim:
        raise DimensionMismatch(f"center in R^{n} for a stratification of R^{sigma.ambient_dim}")
    t = variable(n + 1, n)
    components = [constant(n + 1, p[i]) + t * (variable(n + 1, i) - constant(n + 1, p[i])) for i in range(n)]
    home = sigma.locate([float(c) for c in p], tol)
    r = PolynomialRetraction(components, sigma, [home] if home else [], kind="cone")
    rng = np.random.default_rng(seed)
    for sid, points in _sample_domain(sigma, samples, rng).items():
        for value in AUDIT_TIMES[1:]:
            for x, y in zip(points, r.evaluate(points, value)):
                found = sigma.locate(y, tol)
                if found != sid:
                    raise NotConeInvariant(f"stratum {sid} is not invariant under the cone at {[str(c) for c in p]}",
                                           {"stratum": sid, "point": [float(c) for c in x], "t": value,
                                            "image": [float(c) for c in y], "found": found})
    return r


def identity_retraction(sigma: Stratification) -> PolynomialRetraction:
    n = sigma.ambient_dim
    return PolynomialRetraction([variable(n + 1, i) for i in range(n)], sigma, list(sigma.strata), kind="identity")


def polynomial_retraction(components: Sequence[PolyElement], domain: Optional[Stratification] = None,
                          target: Sequence[str] = ()) -> PolynomialRetraction:
    return PolynomialRetraction(components, domain, target)


def lift_retraction(base: Retraction, lower: Delimiter, upper: Optional[Delimiter] = None, cellkind: str = "band",
                    domain: Optional[Stratification] = None, target: Sequence[str] = (),
                    base_box: Optional[Sequence[Sequence]] = None, samples: int = DEFAULT_SAMPLES,
                    seed: int = 0) -> LiftedRetraction:
    """Lift r' to the band theta_lo < y < theta_hi (or the graph of theta_lo) over its base cell"""
    r = LiftedRetraction(base, lower, upper, cellkind, domain, target)
    if cellkind == "band":
        box = np.array(base_box if base_box is not None else [[0, 1]] * base.ambient_dim, dtype=float)
        rng = np.random.default_rng(seed)
        x = rng.uniform(box[:, 0], box[:, 1], size=(samples, base.ambient_dim))
        gap = upper.evaluate(x) - lower.evaluate(x)
        if (gap <= 0).any():
            bad = int(np.argmin(gap))
            raise DelimiterCrossing("lower delimiter meets the upper one inside the band",
                                    {"point": [float(c) for c in x[bad]], "gap": float(gap[bad])})
    return r


@dataclass(frozen=True)
class TimeSplitForm:
    """r*omega = alpha + dt ^ beta on R^(n+1), time last; neither part contains dt"""
    ambient_dim: int
    alpha: PolyForm
    beta: PolyForm

    def reassemble(self) -> PolyForm:
        n = self.ambient_dim
        k = self.alpha.degree
        coeffs = dict(self.alpha.coeffs)
        sign = -1 if (k - 1) % 2 else 1
        for index, c in self.beta.coeffs.items():
            coeffs[index + (n + 1,)] = c if sign > 0 else -c
        return PolyForm(n + 1, k, coeffs)


def split_time(pulled: PolyForm) -> TimeSplitForm:
    """Separate the dt part of a form on R^(n+1), time the last coordinate"""
    n = pulled.ambient_dim - 1
    k = pulled.degree
    alpha, beta = {}, {}
    sign = -1 if (k - 1) % 2 else 1
    for index, c in pulled.coeffs.items():
        if index and index[-1] == n + 1:
            beta[index[:-1]] = c if sign > 0 else -c
        else:
            alpha[index] = c
    return TimeSplitForm(n, PolyForm(n + 1, k, alpha), PolyForm(n + 1, max(k - 1, 0), beta))


def homotopy_operator(omega: PolyForm, r: Retraction) -> PolyForm:
    """gamma_0 = int_0^1 beta dt where r*omega = alpha + dt ^ beta"""
    if omega.degree == 0:
        raise DegreeMismatch("the homotopy operator lowers degree; a 0-form has no image")
    F = r.polynomial
    if F is None:
        raise NonPolynomialRetraction(f"{r.kind} retraction is not polynomial; use homotopy_operator_numeric")
    if omega.ambient_dim != r.ambient_dim:
        raise DimensionMismatch(f"form on R^{omega.ambient_dim}, retraction on R^{r.ambient_dim}")
    split = split_time(pullback(F, omega))
    n = r.ambient_dim
    return PolyForm(n, omega.degree - 1, {i: integrate_last(c) for i, c in split.beta.coeffs.items()})


def homotopy_operator_numeric(omega: PolyForm, r: Retraction, points: np.ndarray,
                              order: int = 10, step: float = FD_STEP) -> Dict[Tuple[int, ...], np.ndarray]:
    """gamma_0 coefficients at the given points, Gauss-Legendre in t with a differenced Jacobian"""
    if omega.degree == 0:
        raise DegreeMismatch("the homotopy operator lowers degree; a 0-form has no image")
    n = r.ambient_dim
    k = omega.degree
    points = np.asarray(points, dtype=float).reshape(-1, n)
    nodes, weights = roots_legendre(order)
    nodes, weights = (nodes + 1.0) / 2.0, weights / 2.0
    numeric = NumericForm(omega)
    sign = -1.0 if (k - 1) % 2 else 1.0
    out = {index: np.zeros(points.shape[0]) for index in combinations(range(1, n + 1), k - 1)}
    for t, w in zip(nodes, weights):
        images = r.evaluate(points, t)
        jac = r.jacobian(points, t, step)
        coeffs = numeric.coefficients(images)
        for low in out:
            columns = [i - 1 for i in low] + [n]
            value = np.zeros(points.shape[0])
            for index, a in coeffs.items():
                rows = [i - 1 for i in index]
                value += a * np.linalg.det(jac[:, rows][:, :, columns])
            out[low] += w * sign * value
    return out


class NumericPrimitive:
    """K(omega) evaluated pointwise, each point using the component of the stratum it lies on"""

    def __init__(self, omega: StratifiedForm, r: Retraction, order: int = 10):
        self.omega = omega
        self.retraction = r
        self.ambient_dim = r.ambient_dim
        self.degree = omega.degree - 1
        self.order = order
        self._cache: Dict[bytes, Dict[Tuple[int, ...], np.ndarray]] = {}

    def coefficients(self, points: np.ndarray) -> Dict[Tuple[int, ...], np.ndarray]:
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        key = points.tobytes()
        if key in self._cache:
            return self._cache[key]
        sigma = self.omega.stratification
        owners = [sigma.locate(p) for p in points]
        out = {index: np.zeros(len(points)) for index in combinations(range(1, self.ambient_dim + 1), self.degree)}
        for sid in sorted({o for o in owners if o is not None}):
            mask = np.array([o == sid for o in owners])
            values = homotopy_operator_numeric(self.omega.component(sid), self.retraction, points[mask], self.order)
            for index, v in values.items():
                out[index][mask] = v
        self._cache[key] = out
        return out


def inner_box(sigma: Stratification, stratum_id: str, halvings: int = 12) -> List[List[Fraction]]:
    """An axis-aligned cube around the barycenter of a top piece, inside the stratum"""
    cell = sigma.top_pieces(stratum_id)[0]
    centre = [Fraction(float(c)).limit_denominator(1024) for c in cell.evaluate(cell.barycenter()[None, :])[0]]
    n = len(centre)
    for i in range(1, halvings + 1):
        h = Fraction(1, 2 ** i)
        axes = [np.linspace(float(c - h), float(c + h), 5) for c in centre]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        if all(sigma.locate(p) == stratum_id for p in grid):
            return [[c - h, c + h] for c in centre]
    raise AuditFailed(f"no test box fits inside stratum {stratum_id}", {"stratum": stratum_id})


def _numeric_primitive(omega: StratifiedForm, r: Retraction, audit: RetractionAuditReport, testforms: int,
                       seed: int) -> Tuple[NumericPrimitive, PoincareReport]:
    """d K(omega) = omega checked weakly on a test box inside every top stratum"""
    primitive = NumericPrimitive(omega, r)
    sigma = omega.stratification
    worst = 0.0
    for s in sigma.of_dim(sigma.ambient_dim):
        box = inner_box(sigma, s.id)
        weak = weak_derivative_residual(primitive, omega.component(s.id), box, testforms, seed)
        logger.debug("weak residual of the %s primitive on %s: %.3g", r.kind, s.id, weak.residual)
        worst = max(worst, weak.residual)
    report = PoincareReport(passed=worst <= WEAK_TOL, form=omega.id, retraction=r.id, degree=omega.degree,
                            symbolic_residual="numeric", weak_residual=worst, audit=audit)
    return primitive, report


def _r0_pullback(r: PolynomialRetraction, gamma: PolyForm) -> PolyForm:
    return pullback(r.at_time(0), gamma)


def _pull_target_primitive(r: Retraction, primitive: Optional[PolyForm], degree: int) -> PolyForm:
    if primitive is None or primitive.is_zero():
        return PolyForm.zero(r.ambient_dim, degree)
    if not isinstance(r, PolynomialRetraction):
        raise NonPolynomialRetraction("pulling back the target primitive needs a polynomial retraction")
    return _r0_pullback(r, primitive)


def audit_retraction(r: Retraction, samples: int = 16, seed: int = 0, tol: float = 1e-9,
                     tau_samples: int = 0) -> RetractionAuditReport:
    """Identity at t = 1, landing in the target at t = 0, stratum preservation and tau invariance"""
    sigma = r.domain
    if sigma is None:
        raise AuditFailed(f"{r.kind} retraction has no domain stratification to audit against")
    rng = np.random.default_rng(seed)
    failures: List[Dict] = []
    identity_error, misses, violations, total = 0.0, 0, 0, 0
    target_strata: Dict[str, List[str]] = {}
    for sid, points in _sample_domain(sigma, samples, rng).items():
        total += len(points)
        identity_error = max(identity_error, float(np.max(np.abs(r.evaluate(points, 1.0) - points), initial=0.0)))
        landed = set()
        for x, y in zip(points, r.evaluate(points, 0.0)):
            found = sigma.locate(y, tol)
            landed.add(found)
            if found not in r.target:
                misses += 1
                if len(failures) < 20:
                    failures.append({"check": "target", "stratum": sid, "point": [float(c) for c in x],
                                     "image": [float(c) for c in y], "found": found})
        target_strata[sid] = sorted(str(f) for f in landed)
        if len(landed) > 1 and len(failures) < 20:
            failures.append({"check": "single-target", "stratum": sid, "found": target_strata[sid]})
        for value in AUDIT_TIMES[1:]:
            for x, y in zip(points, r.evaluate(points, value)):
                found = sigma.locate(y, tol)
                if found != sid:
                    violations += 1
                    if len(failures) < 20:
                        failures.append({"check": "preservation", "stratum": sid, "t": value,
                                         "point": [float(c) for c in x], "image": [float(c) for c in y],
                                         "found": found})
    tau_error, tau_exact = None, None
    if isinstance(r, LiftedRetraction) and r.cellkind == "band":
        tau_error, tau_exact = _tau_audit(r, tau_samples or samples, rng)
    single = all(len(v) <= 1 for v in target_strata.values())
    passed = (identity_error <= tol and misses == 0 and violations == 0 and single
              and (tau_error is None or tau_error <= tol) and tau_exact is not False)
    return RetractionAuditReport(passed=passed, kind=r.kind, samples=total, identity_error=identity_error,
                                 target_misses=misses, preservation_violations=violations,
                                 target_strata=target_strata, tau_error=tau_error, tau_exact=tau_exact,
                                 failures=failures)


def _rational_points(r: LiftedRetraction, count: int, rng: np.random.Generator) -> List[List[Fraction]]:
    """Rational points strictly inside the band over a rational grid of the base"""
    points = []
    if r.domain is not None:
        cells = [c for s in r.domain.strata.values() if s.dim == r.ambient_dim for c in r.domain.top_pieces(s.id)]
        floats = np.vstack([c.sample(count, rng)[1] for c in cells]) if cells else np.zeros((0, r.ambient_dim))
    else:
        floats = rng.uniform(0.05, 0.95, size=(count, r.ambient_dim))
    for p in floats[:count]:
        x = [Fraction(float(c)).limit_denominator(997) for c in p[:-1]]
        lo, hi = r.lower.evaluate_exact(x), r.upper.evaluate_exact(x)
        if hi <= lo:
            continue
        tau = Fraction(float(rng.uniform(0.01, 0.99))).limit_denominator(997)
        points.append(x + [lo + tau * (hi - lo)])
    return points


def _tau_audit(r: LiftedRetraction, count: int, rng: np.random.Generator) -> Tuple[float, Optional[bool]]:
    points = _rational_points(r, count, rng)
    times = [Fraction(float(v)).limit_denominator(997) for v in rng.uniform(0.01, 1.0, size=len(points))]
    exact = True
    try:
        for q, t in zip(points, times):
            if r.tau_exact(r.evaluate_exact(q, t)) != r.tau_exact(q):
                exact = False
                break
    except NonPolynomialRetraction:
        exact = None
    array = np.array([[float(c) for c in q] for q in points]).reshape(-1, r.ambient_dim)
    moved = r.evaluate(array, np.array([float(t) for t in times]))
    error = float(np.max(np.abs(r.tau(moved) - r.tau(array)), initial=0.0))
    return error, exact


def poincare_primitive(omega: Union[StratifiedForm, PolyForm], r: Retraction,
                       target_primitive: Optional[PolyForm] = None, samples: int = 16, seed: int = 0,
                       tol: float = 1e-9, testforms: int = 8
                       ) -> Tuple[Union[StratifiedForm, NumericPrimitive], PoincareReport]:
    """gamma = K(omega) + r_0* gamma' on every stratum, with d gamma = omega checked exactly.

    A retraction without a polynomial formula gets the pointwise primitive K(omega) instead,
    checked by the weak-derivative residual against test forms.
    """
    sigma = r.domain
    if isinstance(omega, PolyForm):
        if sigma is None:
            raise AuditFailed("a primitive needs the retraction's domain stratification")
        omega = StratifiedForm.uniform(sigma, omega)
    for sid, form in omega.components.items():
        if not form.d().is_zero():
            raise NotClosed(f"form is not closed on stratum {sid}", {"stratum": sid})
    if omega.degree == 0:
        raise DegreeMismatch("a closed 0-form has no primitive of degree -1")
    audit = audit_retraction(r, samples, seed, tol)
    if not audit.passed:
        raise AuditFailed(f"{r.kind} retraction fails its audit", audit.failures[0] if audit.failures else None)
    lifted = _pull_target_primitive(r, target_primitive, omega.degree - 1)
    if r.polynomial is None:
        return _numeric_primitive(omega, r, audit, testforms, seed)
    comps: Dict[str, PolyForm] = {}
    worst = Fraction(0)
    for sid, form in omega.components.items():
        gamma = homotopy_operator(form, r) + lifted
        comps[sid] = gamma
        if omega.stratification[sid].dim >= omega.degree:
            worst = max(worst, (gamma.d() - form).max_abs_coefficient())
    primitive = StratifiedForm(omega.stratification, comps, omega.degree - 1,
                               form_id=f"{omega.id or 'omega'}.primitive")
    report = PoincareReport(passed=worst == 0, form=omega.id, retraction=r.id, degree=omega.degree,
                            symbolic_residual=str(worst), audit=audit,
                            primitive={sid: f.to_records() for sid, f in sorted(comps.items())})
    return primitive, report


def _tangent_frames(sigma: Stratification, samples: int, rng: np.random.Generator):
    """(stratum id, points, orthonormal tangent frames) over strata of positive dimension"""
    for s in sigma.strata.values():
        if s.dim == 0:
            continue
        for cell in sigma.top_pieces(s.id):
            u, points = cell.sample(samples, rng)
            frames = np.stack([np.linalg.qr(j)[0] for j in cell.jacobian(u)])
            yield s.id, points, frames


def check_semidifferentiable(r: Retraction, samples: int = 16, t_seq: Sequence[float] = SEMIDIFF_T,
                             tol: float = SEMIDIFF_TOL, step: float = FD_STEP, seed: int = 0
                             ) -> SemiDifferentiabilityReport:
    """sup over samples of |d_x r_t - d_x r_0| restricted to strata, as t runs down t_seq"""
    sigma = r.domain
    if sigma is None:
        raise AuditFailed(f"{r.kind} retraction has no domain stratification")
    rng = np.random.default_rng(seed)
    residuals = [0.0] * len(t_seq)
    witness = None
    worst_last = -1.0
    violations = 0
    for sid, points, frames in _tangent_frames(sigma, samples, rng):
        base = np.einsum("mij,mjk->mik", r.jacobian_x(points, 0.0, step), frames)
        for i, t in enumerate(t_seq):
            moved = np.einsum("mij,mjk->mik", r.jacobian_x(points, t, step), frames)
            norms = np.linalg.norm(moved - base, ord=2, axis=(1, 2))
            residuals[i] = max(residuals[i], float(norms.max(initial=0.0)))
            if i == len(t_seq) - 1 and len(norms) and norms.max() > worst_last:
                worst_last = float(norms.max())
                j = int(np.argmax(norms))
                witness = {"stratum": sid, "point": [float(c) for c in points[j]], "t": float(t)}
            for y in r.evaluate(points, t):
                if sigma.locate(y) != sid:
                    violations += 1
    noise = 1e-9
    monotone = all(b <= a + noise for a, b in zip(residuals, residuals[1:]))
    limit = abs(2.0 * residuals[-1] - residuals[-2]) if len(residuals) > 1 else residuals[-1]
    passed = monotone and limit <= tol and violations == 0
    return SemiDifferentiabilityReport(passed=passed, t=list(t_seq), residuals=residuals, monotone=monotone,
                                       limit=limit, tol=tol, step=step, preservation_violations=violations,
                                       witness=None if passed else witness)


def lipschitz_estimate(r: Retraction, samples: int = 256, seed: int = 0) -> LipschitzEstimate:
    """Largest sampled difference quotient of r over U x [0, 1]; a lower bound for the constant"""
    sigma = r.domain
    if sigma is None:
        raise AuditFailed(f"{r.kind} retraction has no domain stratification")
    rng = np.random.default_rng(seed)
    top = max(s.dim for s in sigma.strata.values())
    cells = [c for s in sigma.of_dim(top) for c in sigma.top_pieces(s.id)]
    share = max(1, samples // len(cells))
    q = np.vstack([c.sample(share, rng)[1] for c in cells])
    t = rng.uniform(0.0, 1.0, size=len(q))
    images = r.evaluate(q, t)

    order = rng.permutation(len(q))
    far = np.linalg.norm(images - images[order], axis=1)
    gap = np.hypot(np.linalg.norm(q - q[order], axis=1), t - t[order])
    ratio = float(np.max(far[gap > 1e-12] / gap[gap > 1e-12], initial=0.0))
    for _ in range(2):
        dq = rng.normal(size=q.shape) * 1e-4
        dt = rng.normal(size=t.shape) * 1e-4
        t2 = np.clip(t + dt, 0.0, 1.0)
        near = np.linalg.norm(r.evaluate(q + dq, t2) - images, axis=1)
        span = np.hypot(np.linalg.norm(dq, axis=1), t2 - t)
        ratio = max(ratio, float(np.max(near[span > 0] / span[span > 0], initial=0.0)))

    norms = np.linalg.norm(r.jacobian(q, t), ord=2, axis=(1, 2))
    best = float(norms.max(initial=0.0))
    j = int(np.argmax(norms))
    host = cells[min(j // share, len(cells) - 1)]
    if host.dim:
        start_u = host.closest(q[j])[1]
        start = np.append(_uncollapse(start_u) if host.ref_domain == SIMPLEX else start_u, t[j])

        def negative_norm(v):
            u = collapse(v[:-1])[0] if host.ref_domain == SIMPLEX else v[:-1]
            return -float(np.linalg.norm(r.jacobian(host.evaluate(u), v[-1])[0], ord=2))

        polish = minimize(negative_norm, start, method="L-BFGS-B", bounds=[(0.0, 1.0)] * len(start),
                          options={"maxiter": 50})
        best = max(best, -float(polish.fun))
    return LipschitzEstimate(estimate=max(ratio, best), samples=len(q), pair_ratio=ratio, differential_sup=best)


def _uncollapse(u: np.ndarray) -> np.ndarray:
    """Inverse of the Duffy collapse, clipped to the unit cube"""
    s = np.empty_like(u)
    remaining = 1.0
    for i, value in enumerate(u):
        s[i] = value / remaining if remaining > 1e-15 else 0.0
        remaining -= value
    return np.clip(s, 0.0, 1.0)
