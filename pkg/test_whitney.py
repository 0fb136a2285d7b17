from fractions import Fraction

import pytest

from strataforms import meshes
from strataforms.algebra import parse_polynomial
from strataforms.cohomology import Cochain, betti, coboundary
from strataforms.complex import SimplicialComplex
from strataforms.errors import DegenerateSimplex, GradingMismatch, NotClosed
from strataforms.forms import PolyForm, check_graph_closed
from strataforms.schemas import FormSpec
from strataforms.whitney import (
    Triangulation, chain_map_residual, check_commute, derham_map, derham_pairing, derham_report, elementary_form,
    pairing_matrix, partition_of_unity, phi_T,
)
from test_cohomology import random_cochain


def angle_form():
    return PolyForm(2, 1, {(1,): parse_polynomial(2, "-x2"), (2,): parse_polynomial(2, "x1")})


def hexagon_loop(K):
    total = None
    for i in range(6):
        c = K.chain_of([i, (i + 1) % 6])
        total = c if total is None else total + c
    return total


def test_partition_of_unity_sums_to_one():
    """Test the hat functions sum to one on every maximal simplex and are continuous"""
    T = Triangulation.from_complex(meshes.hexagon_fan())
    pou = partition_of_unity(T)
    for m in T.maximal:
        assert pou.total(m.id) == 1
    assert check_graph_closed(pou.hat(6), samples=4).passed
    assert pou.restriction(0, "2-3-6") == 0


def test_elementary_forms_are_dual_to_simplices():
    """Test int over sigma_i of phi_sigma_l is the identity matrix on a 20-triangle disk"""
    T = Triangulation.from_complex(meshes.disk20())
    for j in range(3):
        matrix = pairing_matrix(T, j)
        for a, row in enumerate(matrix):
            for b, value in enumerate(row):
                assert abs(value - (1.0 if a == b else 0.0)) <= 1e-10


def test_exact_de_rham_map_of_elementary_forms():
    """Test the exact integrals of an elementary 1-form recover its cochain"""
    K = meshes.hexagon_fan()
    T = Triangulation.from_complex(K)
    f = Cochain(1, {"0-1": 2, "1-6": Fraction(-1, 3), "0-6": 5})
    values = derham_map(elementary_form(T, f), K.ids(1), T.cells, exact=True)
    assert values == f


def test_d_commutes_with_elementary_forms(rng):
    """Test d phi(f) = phi(df) exactly for random cochains"""
    K = meshes.disk20()
    T = Triangulation.from_complex(K)
    for _ in range(10):
        for k in (0, 1, 2):
            f = random_cochain(K, k, rng)
            assert check_commute(T, f) == 0
            assert chain_map_residual(T, f) <= 1e-10


@pytest.mark.parametrize("name", ["polygon_circle", "octahedron", "torus3x3", "disk20"])
def test_pairing_rank_equals_betti(name):
    """Test closed elementary forms pair with cycles in rank b_k"""
    K = getattr(meshes, name)()
    T = Triangulation.from_complex(K)
    numbers = betti(K).numbers
    for k in range(K.dim + 1):
        degree = derham_pairing(T, k)
        assert degree.pairing_rank == numbers[k]
        assert degree.betti == numbers[k]


def test_circle_period_is_twice_the_area():
    """Test the period of x dy - y dx around the hexagon"""
    K = meshes.polygon_circle()
    T = Triangulation.from_complex(K)
    loop = hexagon_loop(K)
    report = derham_report(T, "circle", periods={"angle": (angle_form(), loop)}, duality_degrees=(0, 1))
    assert report.passed
    assert report.periods["angle"] == pytest.approx(float(meshes.shoelace(meshes.hexagon())))
    assert report.periods["angle"] == pytest.approx(6.0)
    assert report.duality_residual <= 1e-10


def test_phi_t_needs_closed_cochains():
    """Test only closed cochains have closed elementary representatives"""
    K = meshes.disk20()
    T = Triangulation.from_complex(K)
    with pytest.raises(NotClosed):
        phi_T(Cochain.indicator("0-1", 1), T)
    closed = coboundary(Cochain.indicator("3", 0), K)
    assert phi_T(closed, T).d().is_zero()


def test_degenerate_and_overgraded_inputs():
    """Test collinear simplices and cochains above the top degree are refused"""
    flat = SimplicialComplex.from_simplices([(0, 0), (1, 1), (2, 2)], [(0, 1, 2)])
    with pytest.raises(DegenerateSimplex):
        Triangulation.from_complex(flat)
    T = Triangulation.from_complex(meshes.polygon_circle())
    with pytest.raises(GradingMismatch):
        elementary_form(T, Cochain(2, {}))


def test_elementary_form_exports_to_project_schema():
    """Test an elementary form exports as a project form entry"""
    K = meshes.split_square()
    T = Triangulation.from_complex(K)
    spec = elementary_form(T, Cochain.indicator("0-2", 1)).to_form_spec("phi", "triangles")
    assert isinstance(spec, FormSpec)
    assert spec.degree == 1
    assert set(spec.components) == set(K.simplices)
