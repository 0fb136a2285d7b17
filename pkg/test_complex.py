from fractions import Fraction

import pytest

from strataforms import meshes
from strataforms.complex import (
    Chain, SimplicialComplex, Simplex, Stratification, Stratum, boundary, permutation_sign, refine_common, refines,
    star, stratification_from_complex, validate_frontier,
)
from strataforms.errors import DimensionMismatch, IncompatibleCatalogue, MissingFace, NotInComplex


def test_permutation_sign():
    """Test permutation parity"""
    assert permutation_sign((0, 1, 2)) == 1
    assert permutation_sign((1, 0, 2)) == -1
    assert permutation_sign((2, 0, 1)) == 1


def test_simplex_faces_alternate():
    """Test faces of a triangle carry alternating signs"""
    faces = dict(Simplex((0, 1, 2)).faces)
    assert faces == {"1-2": 1, "0-2": -1, "0-1": 1}


def test_chain_of_reorders_vertices(split_square):
    """Test an ordered vertex list becomes a signed canonical chain"""
    c = split_square.chain_of([1, 0])
    assert c.terms == {"0-1": Fraction(-1)}
    with pytest.raises(NotInComplex):
        split_square.chain_of([1, 3])


def test_boundary_of_boundary_vanishes():
    """Test the boundary of a boundary is zero on simplices and on the square cell"""
    K = meshes.tetrahedron()
    cells = K.cells()
    top = Chain.of("0-1-2-3", 3)
    assert boundary(top, cells)
    assert not boundary(boundary(top, cells), cells)

    sigma = meshes.unit_square()
    square = Chain.of("Q", 2)
    edges = boundary(square, sigma.catalogue)
    assert edges.terms == {"B": 1, "R": 1, "T": -1, "L": -1}
    assert not boundary(edges, sigma.catalogue)


def test_boundary_on_bare_simplices():
    """Test the vertex order alone orients a simplex when the catalogue holds combinatorial simplices"""
    K = meshes.split_square()
    edges = boundary(Chain.of("0-1-2", 2), K.simplices)
    assert edges.terms == {"1-2": 1, "0-2": -1, "0-1": 1}
    assert edges == boundary(Chain.of("0-1-2", 2), K.cells())
    assert not hasattr(Simplex((0, 1)), "orientation")


def test_boundary_errors():
    """Test boundary refuses unregistered cells, wrong degrees and cells without faces"""
    sigma = meshes.half_plane()
    with pytest.raises(MissingFace):
        boundary(Chain.of("nowhere", 2), sigma.catalogue)
    with pytest.raises(DimensionMismatch):
        boundary(Chain.of("H", 1), sigma.catalogue)
    with pytest.raises(MissingFace):
        boundary(Chain.of("H", 2), sigma.catalogue)


def test_complex_must_be_face_closed():
    """Test complexes reject missing faces and missing vertices"""
    with pytest.raises(MissingFace):
        SimplicialComplex([(0, 0), (1, 0)], [(0, 1)])
    with pytest.raises(NotInComplex):
        SimplicialComplex.from_simplices([(0, 0), (1, 0)], [(0, 2)])


def test_complex_counts():
    """Test simplex counts of the sample meshes"""
    K = meshes.octahedron()
    assert [K.count(k) for k in range(3)] == [6, 12, 8]
    assert K.dim == 2 and K.ambient_dim == 3
    assert len(K.maximal()) == 8
    assert [meshes.torus3x3().count(k) for k in range(3)] == [9, 27, 18]


def test_unit_square_passes_frontier(square):
    """Test the unit square stratification satisfies the frontier condition"""
    report = validate_frontier(square, samples=16)
    assert report.passed
    assert not report.failures and not report.overlaps


def test_missing_edge_fails_frontier():
    """Test dropping an edge from the square leaves uncovered boundary points"""
    report = validate_frontier(meshes.unit_square(drop_edge="T"), samples=16)
    assert not report.passed
    assert report.failures
    assert all(f.stratum == "S" for f in report.failures)
    assert all(abs(f.point[1] - 1.0) < 1e-9 for f in report.failures)


def test_frontier_on_sample_stratifications(quad, split_square):
    """Test the frontier condition on stratifications built from complexes and by hand"""
    for sigma in (meshes.diagonal_stratification(quad, 0), meshes.diagonal_stratification(quad, 1),
                  stratification_from_complex(split_square), stratification_from_complex(meshes.octahedron())):
        assert validate_frontier(sigma, samples=12).passed


def test_open_sides_are_reported():
    """Test the open right side of the band is flagged, since no stratum covers it"""
    report = validate_frontier(meshes.triangle_band(), samples=8)
    assert not report.passed
    assert all(abs(f.point[0] - 1.0) < 1e-9 for f in report.failures)


def test_locate(square):
    """Test points are assigned to the lowest stratum whose closure holds them"""
    assert square.locate([0.0, 0.0]) == "v00"
    assert square.locate([0.5, 0.0]) == "B"
    assert square.locate([0.5, 0.5]) == "S"
    assert square.locate([2.0, 2.0]) is None
    assert square.contains("R", [1.0, 0.25])


def test_stratification_rejects_bad_strata(square):
    """Test unknown pieces and non-decreasing adjacency are refused"""
    catalogue = square.catalogue
    with pytest.raises(IncompatibleCatalogue):
        Stratification([Stratum("X", 2, ("missing",))], catalogue)
    with pytest.raises(DimensionMismatch):
        Stratification([Stratum("B", 1, ("B",)), Stratum("R", 1, ("R",), frozenset({"B"}))], catalogue)
    with pytest.raises(IncompatibleCatalogue):
        Stratification([Stratum("S", 2, ("Q",)), Stratum("S2", 2, ("Q",))], catalogue)


def test_common_refinement(quad):
    """Test the common refinement of the two diagonal stratifications"""
    first = meshes.diagonal_stratification(quad, 0)
    second = meshes.diagonal_stratification(quad, 1)
    common = refine_common(first, second)
    assert len(common.of_dim(2)) == 4
    assert refines(common, first)
    assert refines(common, second)
    assert not refines(first, second)
    assert validate_frontier(common, samples=8).passed


def test_refinement_needs_shared_catalogue(quad, square):
    """Test refinement across different catalogues is refused"""
    with pytest.raises(IncompatibleCatalogue):
        refine_common(meshes.diagonal_stratification(quad, 0), square)


def test_star():
    """Test stars of a vertex, of a top simplex and of the fan centre"""
    K = SimplicialComplex.from_simplices([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    assert {s.id for s in star(K, Simplex((0,)))} == {"0", "0-1", "0-2", "0-1-2"}
    assert {s.id for s in star(K, Simplex((0, 1, 2)))} == {"0-1-2"}
    fan = meshes.hexagon_fan()
    around = star(fan, Simplex((6,)))
    assert len(around) == 13
    assert all(Simplex((6,)).is_face_of(s) for s in around)
    with pytest.raises(NotInComplex):
        star(K, Simplex((0, 5)))
