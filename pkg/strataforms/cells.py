"""Parametrized cells: polynomial maps from a reference simplex or box.

The reference simplex has vertices 0, e1, ..., ek; facet i is opposite vertex i
and carries the sign (-1)^i. Box facets are listed axis by axis as
(u_j = 0, u_j = 1) with signs (-1)^(j+1) and (-1)^j for the 0-based axis j.
With these signs the reference boundary satisfies Stokes' formula.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import factorial
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares
from sympy.polys.rings import PolyElement

from strataforms.algebra import (
    NumericPolynomial, affine, constant, poly_ring, substitute, total_degree, variable,
)
from strataforms.errors import DimensionMismatch

logger = logging.getLogger(__name__)

SIMPLEX = "simplex"
BOX = "box"


def reference_facets(domain: str, k: int) -> List[Tuple[Tuple[PolyElement, ...], int]]:
    """Facet embeddings of the k-dimensional reference domain with their induced signs"""
    if k == 0:
        return []
    low = k - 1
    facets = []
    if domain == SIMPLEX:
        vertices = [[Fraction(0)] * k] + [[Fraction(int(i == j)) for i in range(k)] for j in range(k)]
        for i in range(k + 1):
            kept = [vertices[j] for j in range(k + 1) if j != i]
            base = kept[0]
            images = []
            for c in range(k):
                linear = [kept[j + 1][c] - base[c] for j in range(low)]
                images.append(affine(low, base[c], linear))
            facets.append((tuple(images), (-1) ** i))
    elif domain == BOX:
        for j in range(k):
            for value, sign in ((0, (-1) ** (j + 1)), (1, (-1) ** j)):
                images = []
                for c in range(k):
                    if c == j:
                        images.append(constant(low, value))
                    else:
                        images.append(variable(low, c if c < j else c - 1))
                facets.append((tuple(images), sign))
    else:
        raise ValueError(f"unknown reference domain {domain!r}")
    return facets


def reference_vertices(domain: str, k: int) -> np.ndarray:
    if domain == SIMPLEX:
        return np.vstack([np.zeros(k), np.eye(k)]) if k else np.zeros((1, 0))
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * k, indexing="ij")).reshape(k, -1).T
    return corners if k else np.zeros((1, 0))


def reference_volume(domain: str, k: int) -> Fraction:
    return Fraction(1, factorial(k)) if domain == SIMPLEX else Fraction(1)


def collapse(s: np.ndarray) -> np.ndarray:
    """Map points of the unit cube onto the reference simplex (Duffy collapse)"""
    s = np.atleast_2d(s)
    u = np.empty_like(s)
    remaining = np.ones(s.shape[0])
    for i in range(s.shape[1]):
        u[:, i] = remaining * s[:, i]
        remaining = remaining * (1.0 - s[:, i])
    return u


def sample_reference(domain: str, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform interior samples of the reference domain"""
    if k == 0:
        return np.zeros((count, 0))
    if domain == SIMPLEX:
        bary = rng.dirichlet(np.ones(k + 1), size=count)
        return bary[:, 1:]
    return rng.uniform(0.0, 1.0, size=(count, k))


@dataclass(frozen=True)
class ParametrizedCell:
    """A polynomial map from a reference simplex or box into R^n"""
    id: str
    ref_domain: str
    dim: int
    maps: Tuple[PolyElement, ...]
    orientation: int = 1
    faces: Tuple[Tuple[str, int], ...] = field(default=())

    def __post_init__(self):
        if self.ref_domain not in (SIMPLEX, BOX):
            raise ValueError(f"unknown reference domain {self.ref_domain!r}")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        ring = poly_ring(self.dim)
        if any(p.ring != ring for p in self.maps):
            raise DimensionMismatch(f"cell {self.id}: maps must be polynomials in {self.dim} variables")

    @property
    def ambient_dim(self) -> int:
        return len(self.maps)

    @property
    def degree(self) -> int:
        return max((total_degree(p) for p in self.maps), default=0)

    @cached_property
    def _numeric(self) -> Tuple[NumericPolynomial, ...]:
        return tuple(NumericPolynomial(p) for p in self.maps)

    @cached_property
    def jacobian_polys(self) -> Tuple[Tuple[PolyElement, ...], ...]:
        gens = poly_ring(self.dim).gens
        return tuple(tuple(p.diff(g) for g in gens) for p in self.maps)

    @cached_property
    def _numeric_jacobian(self):
        return tuple(tuple(NumericPolynomial(q) for q in row) for row in self.jacobian_polys)

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        """Ambient images of reference points, shape (m, n)"""
        if self.dim == 0:
            count = np.asarray(u).shape[0] if np.ndim(u) > 1 else 1
            return np.tile(np.array([f(np.zeros((1, 0)))[0] for f in self._numeric]), (count, 1))
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        return np.stack([f(u) for f in self._numeric], axis=1)

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        """Differentials at reference points, shape (m, n, k)"""
        if self.dim == 0:
            count = np.asarray(u).shape[0] if np.ndim(u) > 1 else 1
            return np.zeros((count, self.ambient_dim, 0))
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        out = np.zeros((u.shape[0], self.ambient_dim, self.dim))
        for i, row in enumerate(self._numeric_jacobian):
            for j, f in enumerate(row):
                out[:, i, j] = f(u)
        return out

    def barycenter(self) -> np.ndarray:
        if self.ref_domain == SIMPLEX:
            return np.full(self.dim, 1.0 / (self.dim + 1))
        return np.full(self.dim, 0.5)

    def facets(self) -> List[Tuple["ParametrizedCell", int]]:
        """The geometric boundary as (facet cell, induced sign) pairs"""
        out = []
        low = poly_ring(self.dim - 1) if self.dim else None
        for i, (images, sign) in enumerate(reference_facets(self.ref_domain, self.dim)):
            maps = tuple(substitute(p, images, low) for p in self.maps)
            facet = ParametrizedCell(f"{self.id}/f{i}", self.ref_domain, self.dim - 1, maps)
            out.append((facet, sign * self.orientation))
        return out

    def facet_reference_points(self, index: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """Samples on reference facet `index`, in this cell's reference coordinates"""
        images, _ = reference_facets(self.ref_domain, self.dim)[index]
        low = sample_reference(self.ref_domain, self.dim - 1, count, rng)
        return np.stack([NumericPolynomial(p)(low) for p in images], axis=1)

    def sample(self, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Interior samples as (reference points, ambient points)"""
        if self.dim == 0:
            u = np.zeros((1, 0))
            return u, self.evaluate(u)
        u = sample_reference(self.ref_domain, self.dim, count, rng)
        return u, self.evaluate(u)

    def shrink(self, eps) -> "ParametrizedCell":
        """The cell restricted to the reference domain shrunk toward its barycenter by 1 - eps"""
        factor = 1 - Fraction(eps)
        k = self.dim
        center = Fraction(1, k + 1) if self.ref_domain == SIMPLEX else Fraction(1, 2)
        images = [affine(k, center * (1 - factor), [factor if j == i else 0 for j in range(k)])
                  for i in range(k)]
        ring = poly_ring(k)
        maps = tuple(substitute(p, images, ring) for p in self.maps)
        return ParametrizedCell(f"{self.id}@{float(eps):g}", self.ref_domain, k, maps, self.orientation)

    def reversed(self) -> "ParametrizedCell":
        return ParametrizedCell(self.id, self.ref_domain, self.dim, self.maps, -self.orientation, self.faces)

    @cached_property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box containing the image (exact for affine cells)"""
        verts = reference_vertices(self.ref_domain, self.dim)
        if self.degree <= 1:
            pts = self.evaluate(verts)
            return pts.min(axis=0), pts.max(axis=0)
        grid = np.linspace(0.0, 1.0, 9)
        ref = np.array(np.meshgrid(*[grid] * self.dim, indexing="ij")).reshape(self.dim, -1).T
        if self.ref_domain == SIMPLEX:
            ref = collapse(ref)
        pts = self.evaluate(np.vstack([ref, verts]))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.25 * (hi - lo) + 1e-6
        return lo - pad, hi + pad

    def box_distance(self, point: np.ndarray) -> float:
        lo, hi = self.bounds
        gap = np.maximum(0.0, np.maximum(lo - point, point - hi))
        return float(np.linalg.norm(gap))

    def closest(self, point: Sequence[float]) -> Tuple[float, np.ndarray]:
        """Distance from a point to the closed image and the reference minimizer"""
        x = np.asarray(point, dtype=float)
        if self.dim == 0:
            u = np.zeros(0)
            return float(np.linalg.norm(self.evaluate(u)[0] - x)), u

        def to_reference(s):
            return collapse(s)[0] if self.ref_domain == SIMPLEX else s

        def residual(s):
            return self.evaluate(to_reference(s))[0] - x

        grid = np.linspace(0.0, 1.0, 5 if self.dim <= 2 else 3)
        starts = np.array(np.meshgrid(*[grid] * self.dim, indexing="ij")).reshape(self.dim, -1).T
        ref = collapse(starts) if self.ref_domain == SIMPLEX else starts
        gaps = np.linalg.norm(self.evaluate(ref) - x, axis=1)
        best, best_u = np.inf, None
        for idx in np.argsort(gaps)[:3]:
            fit = least_squares(residual, starts[idx], bounds=(0.0, 1.0),
                                xtol=1e-15, ftol=1e-15, gtol=1e-15)
            dist = float(np.linalg.norm(fit.fun))
            if dist < best:
                best, best_u = dist, to_reference(fit.x)
            if best < 1e-13:
                break
        return best, best_u

    def distance(self, point: Sequence[float]) -> float:
        return self.closest(point)[0]

    def rank_deficiency(self, count: int, rng: np.random.Generator, tol: float = 1e-10) -> Optional[np.ndarray]:
        """A reference point where the differential drops rank, if any sample finds one"""
        if self.dim == 0:
            return None
        u, _ = self.sample(count, rng)
        for point, jac in zip(u, self.jacobian(u)):
            if np.linalg.matrix_rank(jac, tol=tol) < self.dim:
                return point
        return None


def point_cell(cell_id: str, point: Sequence) -> ParametrizedCell:
    maps = tuple(constant(0, Fraction(c)) for c in point)
    return ParametrizedCell(cell_id, SIMPLEX, 0, maps)


def affine_simplex_cell(cell_id: str, points: Sequence[Sequence], orientation: int = 1,
                        faces: Sequence[Tuple[str, int]] = ()) -> ParametrizedCell:
    """u -> P0 + sum_j u_j (P_j - P0) on the reference simplex"""
    pts = [[Fraction(c) for c in p] for p in points]
    k = len(pts) - 1
    if k == 0:
        cell = point_cell(cell_id, pts[0])
        return ParametrizedCell(cell_id, SIMPLEX, 0, cell.maps, orientation, tuple(faces))
    n = len(pts[0])
    maps = tuple(affine(k, pts[0][c], [pts[j + 1][c] - pts[0][c] for j in range(k)]) for c in range(n))
    return ParametrizedCell(cell_id, SIMPLEX, k, maps, orientation, tuple(faces))


def affine_box_cell(cell_id: str, origin: Sequence, edges: Sequence[Sequence], orientation: int = 1,
                    faces: Sequence[Tuple[str, int]] = ()) -> ParametrizedCell:
    """u -> origin + sum_j u_j edges[j] on the unit box"""
    k = len(edges)
    n = len(origin)
    maps = tuple(affine(k, Fraction(origin[c]), [Fraction(e[c]) for e in edges]) for c in range(n))
    return ParametrizedCell(cell_id, BOX, k, maps, orientation, tuple(faces))
