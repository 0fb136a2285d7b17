"""Grid-sampled forms, mollification, weak exterior derivatives and tube extensions"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import convolve as signal_convolve

from strataforms.algebra import constant, from_terms, poly_ring, variable
from strataforms.cells import BOX, affine_box_cell
from strataforms.config import FD_STEP, TUBE_DECAY_CONSTANT, WEAK_ORDER, WEAK_TOL
from strataforms.errors import DecayAuditFailed, DimensionMismatch, GradingMismatch, RadiusTooLarge
from strataforms.forms import NumericForm, PolyForm, StratifiedForm, merge_sign, wedge
from strataforms.quadrature import integrate_cell, make_rule
from strataforms.schemas import ConvolutionReport, SmoothingReport, SmoothingRun, WeakDerivativeReport

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]


class GridForm:
    """A k-form sampled at the nodes of a uniform grid on an axis-aligned box, endpoints included"""

    def __init__(self, box: Sequence[Sequence[float]], resolution: Sequence[int], degree: int,
                 coeffs: Optional[Dict[Index, np.ndarray]] = None):
        self.box = np.asarray(box, dtype=float).reshape(-1, 2)
        self.resolution = tuple(int(r) for r in resolution)
        self.degree = degree
        n = len(self.resolution)
        if self.box.shape[0] != n:
            raise DimensionMismatch(f"box has {self.box.shape[0]} axes, resolution has {n}")
        if any(r < 4 for r in self.resolution):
            raise DimensionMismatch(f"grid resolution {self.resolution} has an axis with fewer than 4 nodes")
        if degree > n:
            raise GradingMismatch(f"no {degree}-forms on R^{n}")
        clean = {}
        for index, values in (coeffs or {}).items():
            values = np.asarray(values, dtype=float)
            if values.shape != self.resolution:
                raise DimensionMismatch(f"coefficient {index} has shape {values.shape}, grid is {self.resolution}")
            if not np.all(np.isfinite(values)):
                raise DimensionMismatch(f"coefficient {index} has non-finite node values")
            clean[tuple(index)] = values
        self.coeffs: Dict[Index, np.ndarray] = dict(sorted(clean.items()))

    @property
    def ambient_dim(self) -> int:
        return len(self.resolution)

    @property
    def spacing(self) -> np.ndarray:
        return (self.box[:, 1] - self.box[:, 0]) / (np.array(self.resolution) - 1)

    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, r) for (lo, hi), r in zip(self.box, self.resolution)]

    def points(self) -> np.ndarray:
        """Node coordinates, shape resolution + (n,)"""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @classmethod
    def sample(cls, omega: Union[PolyForm, StratifiedForm], box: Sequence[Sequence[float]],
               resolution: Sequence[int]) -> "GridForm":
        """Node values of a polynomial form, or of a stratified form whose top pieces are axis-aligned boxes"""
        shell = cls(box, resolution, omega.degree)
        nodes = shell.points().reshape(-1, shell.ambient_dim)
        if isinstance(omega, PolyForm):
            values = NumericForm(omega).coefficients(nodes)
        else:
            values = _sample_stratified(omega, nodes)
        return cls(box, resolution, omega.degree, {i: v.reshape(shell.resolution) for i, v in values.items()})

    def component(self, index: Index) -> np.ndarray:
        return self.coeffs.get(tuple(index), np.zeros(self.resolution))

    def like(self, coeffs: Dict[Index, np.ndarray], degree: Optional[int] = None) -> "GridForm":
        return GridForm(self.box, self.resolution, self.degree if degree is None else degree, coeffs)

    def d(self) -> "GridForm":
        """Exterior derivative with second-order differences, one-sided at the box edges"""
        n = self.ambient_dim
        if self.degree == n:
            raise GradingMismatch(f"the derivative of a top-degree grid form has degree {n + 1}")
        h = self.spacing
        out: Dict[Index, np.ndarray] = {}
        for index, values in self.coeffs.items():
            for i in range(1, n + 1):
                if i in index:
                    continue
                derivative = np.gradient(values, h[i - 1], axis=i - 1, edge_order=2)
                position = sum(1 for j in index if j < i)
                new = tuple(sorted(index + (i,)))
                term = derivative if position % 2 == 0 else -derivative
                out[new] = out.get(new, 0.0) + term
        return GridForm(self.box, self.resolution, self.degree + 1, out)

    def wedge(self, other: "GridForm") -> "GridForm":
        self._check(other)
        out: Dict[Index, np.ndarray] = {}
        for i, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                if set(i) & set(j):
                    continue
                index = tuple(sorted(i + j))
                out[index] = out.get(index, 0.0) + merge_sign(i, j) * a * b
        return self.like(out, self.degree + other.degree)

    def _check(self, other: "GridForm"):
        if other.resolution != self.resolution or not np.allclose(other.box, self.box):
            raise DimensionMismatch("grid forms live on different grids")

    def crop(self, margin: Sequence[int]) -> "GridForm":
        """The same form on the sub-grid that drops margin[i] nodes at both ends of axis i"""
        h = self.spacing
        box = [[lo + m * step, hi - m * step] for (lo, hi), m, step in zip(self.box, margin, h)]
        window = tuple(slice(m, r - m) for m, r in zip(margin, self.resolution))
        resolution = [r - 2 * m for m, r in zip(margin, self.resolution)]
        return GridForm(box, resolution, self.degree, {i: v[window] for i, v in self.coeffs.items()})

    def max_difference(self, other: "GridForm", margin: int = 0) -> float:
        """Largest node difference between two forms on the same grid, away from margin boundary nodes"""
        self._check(other)
        window = tuple(slice(margin, r - margin) for r in self.resolution)
        keys = set(self.coeffs) | set(other.coeffs)
        return max((float(np.max(np.abs(self.component(k)[window] - other.component(k)[window]), initial=0.0))
                    for k in keys), default=0.0)

    def to_text(self) -> str:
        """Header lines for box, resolution and degree, then one record per node and multi-index"""
        lines = [
            "box " + " ".join(f"{lo!r} {hi!r}" for lo, hi in self.box.tolist()),
            "resolution " + " ".join(str(r) for r in self.resolution),
            f"degree {self.degree}",
        ]
        for node in np.ndindex(*self.resolution):
            for index, values in self.coeffs.items():
                label = ",".join(str(i) for i in index) or "-"
                lines.append(" ".join(str(c) for c in node) + f" {label} {float(values[node])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GridForm":
        rows = [line.split() for line in text.splitlines() if line.strip()]
        header = {r[0]: r[1:] for r in rows[:3]}
        bounds = [float(v) for v in header["box"]]
        box = [bounds[i:i + 2] for i in range(0, len(bounds), 2)]
        resolution = tuple(int(v) for v in header["resolution"])
        degree = int(header["degree"][0])
        n = len(resolution)
        coeffs: Dict[Index, np.ndarray] = {}
        for r in rows[3:]:
            node = tuple(int(v) for v in r[:n])
            index = () if r[n] == "-" else tuple(int(v) for v in r[n].split(","))
            coeffs.setdefault(index, np.zeros(resolution))[node] = float(r[n + 1])
        return cls(box, resolution, degree, coeffs)


def _sample_stratified(omega: StratifiedForm, nodes: np.ndarray) -> Dict[Index, np.ndarray]:
    sigma = omega.stratification
    n = sigma.ambient_dim
    out: Dict[Index, np.ndarray] = {}
    owned = np.zeros(len(nodes), dtype=bool)
    for s in sigma.of_dim(n):
        numeric = NumericForm(omega.component(s.id))
        for cell in sigma.top_pieces(s.id):
            if cell.ref_domain != BOX or cell.degree > 1:
                raise DimensionMismatch(f"grid sampling needs affine box pieces; {cell.id} is not one")
            lo, hi = cell.bounds
            inside = np.all((nodes >= lo - 1e-12) & (nodes <= hi + 1e-12), axis=1) & ~owned
            if not inside.any():
                continue
            owned |= inside
            for index, values in numeric.coefficients(nodes[inside]).items():
                out.setdefault(index, np.zeros(len(nodes)))[inside] = values
    return out


@dataclass(frozen=True)
class Mollifier:
    """The bump exp(-1 / (1 - |x / eps|^2)) on the grid, scaled so its node weights sum to 1"""
    radius: float
    spacing: Tuple[float, ...]

    @classmethod
    def for_grid(cls, radius: float, grid: GridForm) -> "Mollifier":
        return cls(float(radius), tuple(float(h) for h in grid.spacing))

    @property
    def half_width(self) -> Tuple[int, ...]:
        """Nodes of the kernel on each side of its centre"""
        return tuple(int(math.floor(self.radius / h + 1e-12)) for h in self.spacing)

    @cached_property
    def weights(self) -> np.ndarray:
        axes = [np.arange(-m, m + 1) * h for m, h in zip(self.half_width, self.spacing)]
        offsets = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        r2 = np.sum(offsets ** 2, axis=-1) / self.radius ** 2
        bump = np.zeros_like(r2)
        inside = r2 < 1.0
        bump[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
        return bump / bump.sum()

    def as_grid_form(self) -> GridForm:
        """The kernel as a 0-form density (unit integral) on its own grid"""
        box = [[-m * h, m * h] for m, h in zip(self.half_width, self.spacing)]
        density = self.weights / float(np.prod(self.spacing))
        return GridForm(box, density.shape, 0, {(): density})


def convolve(omega: GridForm, mollifier: Mollifier) -> GridForm:
    """Coefficient-wise discrete convolution, kept on the inset where the kernel fits"""
    sides = omega.box[:, 1] - omega.box[:, 0]
    if mollifier.radius >= 0.5 * float(sides.min()):
        raise RadiusTooLarge(f"mollifier radius {mollifier.radius} is not below half the shortest side {sides.min()}",
                             {"eps": mollifier.radius})
    if not np.allclose(mollifier.spacing, omega.spacing):
        raise DimensionMismatch("mollifier was built for a different grid spacing")
    margin = mollifier.half_width
    kernel = mollifier.weights
    shell = omega.crop(margin)
    out = {i: signal_convolve(v, kernel, mode="valid", method="direct") for i, v in omega.coeffs.items()}
    return shell.like(out)


def convolve_forms(alpha: GridForm, beta: GridForm) -> GridForm:
    """alpha * beta = sum (a_I * b_J) dx_I ^ dx_J with both supports taken in full"""
    if not np.allclose(alpha.spacing, beta.spacing):
        raise DimensionMismatch("convolved grid forms need the same spacing")
    if alpha.ambient_dim != beta.ambient_dim:
        raise DimensionMismatch("grid forms on different spaces")
    cell = float(np.prod(alpha.spacing))
    box = alpha.box + beta.box
    resolution = tuple(a + b - 1 for a, b in zip(alpha.resolution, beta.resolution))
    out: Dict[Index, np.ndarray] = {}
    for i, a in alpha.coeffs.items():
        for j, b in beta.coeffs.items():
            if set(i) & set(j):
                continue
            index = tuple(sorted(i + j))
            term = merge_sign(i, j) * cell * signal_convolve(a, b, mode="full", method="direct")
            out[index] = out.get(index, 0.0) + term
    return GridForm(box, resolution, alpha.degree + beta.degree, out)


def check_convolution_identities(alpha: GridForm, mollifier: Mollifier, beta: Optional[GridForm] = None,
                                 alpha_derivative: Optional[GridForm] = None, factor: float = 100.0
                                 ) -> ConvolutionReport:
    """Grid residuals of d(alpha * phi) = (d alpha) * phi and of graded commutativity, against C h^2"""
    h = float(np.max(alpha.spacing))
    smoothed = convolve(alpha, mollifier)
    derivative = alpha_derivative if alpha_derivative is not None else alpha.d()
    lhs = smoothed.d()
    rhs = convolve(derivative, mollifier)
    derivative_residual = lhs.max_difference(rhs)
    commute = 0.0
    if beta is not None:
        forward = convolve_forms(alpha, beta)
        backward = convolve_forms(beta, alpha)
        sign = -1.0 if (alpha.degree * beta.degree) % 2 else 1.0
        keys = set(forward.coeffs) | set(backward.coeffs)
        commute = max((float(np.max(np.abs(forward.component(k) - sign * backward.component(k)), initial=0.0))
                       for k in keys), default=0.0)
    bound = factor * h ** 2
    passed = derivative_residual <= bound and commute <= bound
    return ConvolutionReport(passed=passed, h=h, bound=bound, commute_residual=commute,
                             derivative_residual=derivative_residual)


def smoothing_report(omega: GridForm, eps_seq: Sequence[float], form_id: Optional[str] = None,
                     mass_tol: float = 1e-10) -> SmoothingReport:
    """max |omega_eps - omega| on each inset as eps decreases, with the unit-mass check"""
    runs = []
    for eps in eps_seq:
        m = Mollifier.for_grid(eps, omega)
        smoothed = convolve(omega, m)
        reference = omega.crop(m.half_width)
        ones = GridForm(omega.box, omega.resolution, 0, {(): np.ones(omega.resolution)})
        mass = float(np.max(np.abs(convolve(ones, m).component(()) - 1.0)))
        runs.append(SmoothingRun(eps=float(eps), error=smoothed.max_difference(reference), mass_error=mass,
                                 inset=reference.box.tolist()))
    ordered = sorted(runs, key=lambda run: -run.eps)
    monotone = all(b.error <= a.error + 1e-12 for a, b in zip(ordered, ordered[1:]))
    passed = monotone and all(run.mass_error <= mass_tol for run in runs)
    return SmoothingReport(passed=passed, form=form_id, monotone=monotone, runs=runs)


# Weak exterior derivative

def bump_polynomial(box: Sequence[Sequence], power: int = 3):
    """prod_i ((x_i - a_i)(b_i - x_i) / r_i^2)^power with r_i the half width: peak 1 at the centre,
    vanishing to order power on the box boundary"""
    n = len(box)
    p = poly_ring(n).one
    for i, (a, b) in enumerate(box):
        x = variable(n, i)
        a, b = Fraction(a), Fraction(b)
        half = (b - a) / 2
        p *= ((x - constant(n, a)) * (constant(n, b) - x) * constant(n, 1 / half ** 2)) ** power
    return p


def make_test_forms(box: Sequence[Sequence], degree: int, count: int, seed: int = 0, power: int = 3) -> List[PolyForm]:
    """Compactly supported polynomial (degree)-forms: the box bump times random quadratic coefficients"""
    n = len(box)
    rng = np.random.default_rng(seed)
    bump = bump_polynomial(box, power)
    exponents = [e for e in np.ndindex(*([3] * n)) if sum(e) <= 2]
    forms = []
    for _ in range(count):
        coeffs = {}
        for index in combinations(range(1, n + 1), degree):
            terms = {tuple(e): Fraction(int(rng.integers(-3, 4)), 4) for e in exponents if sum(e)}
            terms[(0,) * n] = Fraction(1)
            coeffs[index] = bump * from_terms(n, terms)
        forms.append(PolyForm(n, degree, coeffs))
    return forms


def _pieces(omega: Union[StratifiedForm, PolyForm], box: Optional[Sequence[Sequence]]):
    """(stratum id, top-dimensional cell) pairs that tile the integration region"""
    if isinstance(omega, StratifiedForm):
        sigma = omega.stratification
        for s in sigma.of_dim(sigma.ambient_dim):
            for cell in sigma.top_pieces(s.id):
                yield s.id, cell
        return
    if box is None:
        raise DimensionMismatch("a polynomial form needs an integration box")
    n = len(box)
    origin = [Fraction(a) for a, _ in box]
    edges = [[Fraction(b) - Fraction(a) if j == i else 0 for j in range(n)] for i, (a, b) in enumerate(box)]
    yield None, affine_box_cell("box", origin, edges)


def _on(form: Union[StratifiedForm, PolyForm, None], sid: Optional[str], n: int, degree: int) -> PolyForm:
    if form is None:
        return PolyForm.zero(n, degree)
    if isinstance(form, StratifiedForm):
        return form.component(sid)
    return form


def _sampled(form, sid: Optional[str], points: np.ndarray) -> Dict[Index, np.ndarray]:
    if form is None:
        return {}
    if isinstance(form, StratifiedForm):
        return NumericForm(form.component(sid)).coefficients(points)
    if isinstance(form, PolyForm):
        return NumericForm(form).coefficients(points)
    return form.coefficients(points)


def integrate_wedge_numeric(alpha, beta: PolyForm, sid: Optional[str], cell, order: int = WEAK_ORDER) -> float:
    """int over a top-dimensional cell of alpha ^ beta, alpha given by its coefficients at points"""
    rule = make_rule(cell.ref_domain, cell.dim, order)
    points = cell.evaluate(rule.nodes)
    volume = np.linalg.det(cell.jacobian(rule.nodes))
    a, b = _sampled(alpha, sid, points), NumericForm(beta).coefficients(points)
    top = np.zeros(len(points))
    for i, va in a.items():
        for j, vb in b.items():
            if not set(i) & set(j):
                top += merge_sign(i, j) * va * vb
    return cell.orientation * float(np.dot(rule.weights, top * volume))


def weak_derivative_residual(omega, candidate, box: Sequence[Sequence],
                             testforms: int = 8, seed: int = 0, tol: float = WEAK_TOL) -> WeakDerivativeReport:
    """max over test forms phi of |int candidate ^ phi - (-1)^(k+1) int omega ^ d phi|

    omega and candidate are PolyForms, StratifiedForms or pointwise forms exposing ``degree`` and
    ``coefficients(points)``; pointwise forms are integrated on a fixed Gauss rule.
    """
    n = len(box)
    k = omega.degree
    if k + 1 > n:
        raise GradingMismatch(f"a {k}-form on R^{n} has no weak derivative to test")
    sign = -1 if k % 2 == 0 else 1
    pieces = list(_pieces(omega, box))
    exact = all(f is None or isinstance(f, (PolyForm, StratifiedForm)) for f in (omega, candidate))
    residuals = []
    for phi in make_test_forms(box, n - k - 1, testforms, seed):
        d_phi = phi.d()
        lhs, rhs = [], []
        for sid, cell in pieces:
            if exact:
                lhs.append(integrate_cell(wedge(_on(candidate, sid, n, k + 1), phi), cell))
                rhs.append(integrate_cell(wedge(_on(omega, sid, n, k), d_phi), cell))
            else:
                lhs.append(integrate_wedge_numeric(candidate, phi, sid, cell))
                rhs.append(integrate_wedge_numeric(omega, d_phi, sid, cell))
        residuals.append(abs(math.fsum(lhs) - sign * math.fsum(rhs)))
    worst = max(residuals, default=0.0)
    passed = worst <= tol
    witness = None if passed else {"testform": int(np.argmax(residuals)), "residual": worst}
    return WeakDerivativeReport(passed=passed, tol=tol, testforms=testforms, residuals=residuals,
                                residual=worst, witness=witness)


# Tubular extensions

class AffineProjection:
    """Closest-point map onto the segment a + s v, s in [0, 1]"""

    def __init__(self, origin: Sequence[float], direction: Sequence[float]):
        self.origin = np.asarray(origin, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        self.ambient_dim = len(self.origin)

    def parameter(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        return (points - self.origin) @ self.direction / float(self.direction @ self.direction)

    def point(self, s: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(s)[:, None] * self.direction

    def tangent(self, s: np.ndarray) -> np.ndarray:
        return np.tile(self.direction, (len(np.atleast_1d(s)), 1))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.point(self.parameter(points))

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        unit = np.outer(self.direction, self.direction) / float(self.direction @ self.direction)
        return np.tile(unit, (len(points), 1, 1))


class ParabolaProjection:
    """Closest-point map onto the arc (s, s^2) of the plane, s in [lo, hi]"""
    ambient_dim = 2

    def __init__(self, lo: float = 0.0, hi: float = 1.0):
        self.lo, self.hi = float(lo), float(hi)

    def parameter(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.empty(len(points))
        for i, (x, y) in enumerate(points):
            # stationary points of (s - x)^2 + (s^2 - y)^2
            roots = np.roots([2.0, 0.0, 1.0 - 2.0 * y, -x])
            real = roots[np.abs(roots.imag) < 1e-9].real
            out[i] = real[np.argmin((real - x) ** 2 + (real ** 2 - y) ** 2)]
        return out

    def point(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([s, s ** 2], axis=1)

    def tangent(self, s: np.ndarray) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.stack([np.ones_like(s), 2.0 * s], axis=1)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.point(self.parameter(points))

    def jacobian(self, points: np.ndarray, step: float = FD_STEP) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.zeros((len(points), 2, 2))
        for j in range(2):
            shift = np.zeros(2)
            shift[j] = step
            out[:, :, j] = (self(points + shift) - self(points - shift)) / (2 * step)
        return out


def smoothstep_cutoff(ratio: np.ndarray) -> np.ndarray:
    """1 for ratio <= 1/2, 0 for ratio >= 3/4, quintic smoothstep between"""
    s = np.clip((np.asarray(ratio, dtype=float) - 0.5) / 0.25, 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


@dataclass
class TubeSpec:
    """A tube of width rho(s) around a curve, with the cutoff phi = chi(distance / rho)"""
    projection: Union[AffineProjection, ParabolaProjection]
    rho0: float
    taper: bool = True
    lo: float = 0.0
    hi: float = 1.0
    decay_constant: Optional[float] = TUBE_DECAY_CONSTANT

    def width(self, s: np.ndarray) -> np.ndarray:
        """rho(s): rho0 on the middle third, linear to zero at the ends when tapered"""
        u = (np.asarray(s, dtype=float) - self.lo) / (self.hi - self.lo)
        inside = (u > 0.0) & (u < 1.0)
        shape = np.minimum(1.0, np.minimum(3.0 * u, 3.0 * (1.0 - u))) if self.taper else np.ones_like(u)
        return np.where(inside, self.rho0 * shape, 0.0)

    def cutoff(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.projection.ambient_dim)
        s = self.projection.parameter(points)
        rho = self.width(s)
        distance = np.linalg.norm(points - self.projection.point(s), axis=1)
        out = np.zeros(len(points))
        live = rho > 0
        out[live] = smoothstep_cutoff(distance[live] / rho[live])
        return out

    def cutoff_gradient(self, points: np.ndarray, step: float = FD_STEP) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.projection.ambient_dim)
        n = points.shape[1]
        out = np.zeros_like(points)
        for j in range(n):
            shift = np.zeros(n)
            shift[j] = step
            out[:, j] = (self.cutoff(points + shift) - self.cutoff(points - shift)) / (2 * step)
        return out

    def normals(self, s: np.ndarray) -> np.ndarray:
        """Orthonormal normal frames, shape (m, n, n - 1)"""
        tangents = self.projection.tangent(s)
        frames = []
        for t in tangents:
            q, _ = np.linalg.qr(np.column_stack([t, np.eye(len(t))]))
            frames.append(q[:, 1:len(t)])
        return np.stack(frames)


def _pulled_coefficients(gamma: PolyForm, projection, points: np.ndarray) -> Dict[Index, np.ndarray]:
    """Coefficients of pi*gamma at the given points"""
    n = gamma.ambient_dim
    k = gamma.degree
    images = projection(points)
    values = NumericForm(gamma).coefficients(images)
    if k == 0:
        return {(): values.get((), np.zeros(len(points)))}
    jac = projection.jacobian(points)
    out = {}
    for low in combinations(range(1, n + 1), k):
        cols = [i - 1 for i in low]
        total = np.zeros(len(points))
        for index, a in values.items():
            rows = [i - 1 for i in index]
            total += a * np.linalg.det(jac[:, rows][:, :, cols])
        out[low] = total
    return out


class TubeExtension:
    """gamma_hat = phi pi*gamma near the curve and 0 elsewhere, with its exterior derivative"""

    def __init__(self, gamma: PolyForm, spec: TubeSpec):
        self.gamma = gamma
        self.spec = spec
        self.degree = gamma.degree
        self.ambient_dim = gamma.ambient_dim

    def cutoff(self, points: np.ndarray) -> np.ndarray:
        return self.spec.cutoff(points)

    def evaluate(self, points: np.ndarray) -> Dict[Index, np.ndarray]:
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        phi = self.cutoff(points)
        return {i: phi * v for i, v in _pulled_coefficients(self.gamma, self.spec.projection, points).items()}

    def differential(self, points: np.ndarray) -> Dict[Index, np.ndarray]:
        """d phi ^ pi*gamma + phi pi*(d gamma)"""
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        n = self.ambient_dim
        phi = self.cutoff(points)
        grad = self.spec.cutoff_gradient(points)
        pulled = _pulled_coefficients(self.gamma, self.spec.projection, points)
        out: Dict[Index, np.ndarray] = {}
        for index, values in pulled.items():
            for i in range(1, n + 1):
                if i in index:
                    continue
                new = tuple(sorted((i,) + index))
                out[new] = out.get(new, 0.0) + merge_sign((i,), index) * grad[:, i - 1] * values
        if self.degree < n:
            d_gamma = self.gamma.d()
            for index, values in _pulled_coefficients(d_gamma, self.spec.projection, points).items():
                out[index] = out.get(index, 0.0) + phi * values
        return out

    def norm(self, coefficients: Dict[Index, np.ndarray], count: int) -> np.ndarray:
        if not coefficients:
            return np.zeros(count)
        return np.sqrt(sum(v ** 2 for v in coefficients.values()))


def tube_extension(gamma: PolyForm, spec: TubeSpec, samples: int = 32, fibre: int = 16,
                   seed: int = 0) -> TubeExtension:
    """Extend gamma off its curve by the tube cutoff, after auditing the decay bound near the tube ends"""
    if gamma.ambient_dim != spec.projection.ambient_dim:
        raise DimensionMismatch(f"form on R^{gamma.ambient_dim}, tube in R^{spec.projection.ambient_dim}")
    extension = TubeExtension(gamma, spec)
    if spec.decay_constant is None:
        return extension
    rng = np.random.default_rng(seed)
    s = spec.lo + (spec.hi - spec.lo) * np.concatenate([rng.uniform(0.0, 1.0, samples),
                                                        np.geomspace(1e-3, 0.3, samples // 2),
                                                        1.0 - np.geomspace(1e-3, 0.3, samples // 2)])
    base = spec.projection.point(s)
    sizes = extension.norm(NumericForm(gamma).coefficients(base), len(base))
    rho = spec.width(s)
    normals = spec.normals(s)
    for j in range(len(s)):
        if rho[j] <= 0:
            continue
        directions = normals[j] @ rng.normal(size=(normals.shape[2], fibre))
        directions /= np.linalg.norm(directions, axis=0)
        radii = rho[j] * np.linspace(0.45, 0.8, fibre)
        fibre_points = base[j] + (directions * radii).T
        steepest = float(np.max(np.linalg.norm(spec.cutoff_gradient(fibre_points), axis=1)))
        bound = spec.decay_constant * (1.0 + steepest) ** -2
        if sizes[j] > bound:
            raise DecayAuditFailed("form does not decay fast enough toward the thin end of the tube",
                                   {"point": [float(c) for c in base[j]], "size": float(sizes[j]),
                                    "bound": bound})
    return extension
