from fractions import Fraction
from itertools import combinations

import pytest

from strataforms import meshes
from strataforms.algebra import from_terms, parse_polynomial, variable
from strataforms.complex import refine_common
from strataforms.errors import DimensionMismatch, GradingMismatch, IncompatibleCatalogue
from strataforms.forms import (
    Multivector, PolyForm, PolynomialMap, StratifiedForm, audit_bound, check_graph_closed, evaluate, pullback,
    sup_norm_estimate, wedge,
)


def random_form(n, k, rng, terms=3, degree=2):
    coeffs = {}
    for index in combinations(range(1, n + 1), k):
        monomials = {}
        for _ in range(terms):
            exps = tuple(int(e) for e in rng.integers(0, degree + 1, size=n))
            monomials[exps] = Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 4)))
        coeffs[index] = from_terms(n, monomials)
    return PolyForm(n, k, coeffs)


def random_map(m, n, rng):
    return PolynomialMap(m, tuple(random_form(m, 0, rng).component(()) for _ in range(n)))


def test_dx_sign_and_wedge_anticommute():
    """Test dx basis signs and graded commutativity"""
    assert PolyForm.dx(3, 2, 1) == -PolyForm.dx(3, 1, 2)
    assert not PolyForm.dx(3, 1, 1)
    a, b = PolyForm.dx(3, 1), PolyForm.dx(3, 3)
    assert wedge(a, b) == -wedge(b, a)
    assert not wedge(a, a)
    assert not wedge(PolyForm.dx(2, 1, 2), PolyForm.dx(2, 1))


def test_graded_commutativity(rng):
    """Test alpha ^ beta = (-1)^(kl) beta ^ alpha on random forms"""
    for k, l in ((1, 1), (1, 2), (2, 2), (0, 3)):
        alpha, beta = random_form(4, k, rng), random_form(4, l, rng)
        sign = -1 if (k * l) % 2 else 1
        assert wedge(alpha, beta) == wedge(beta, alpha) * sign


def test_d_squared_is_zero(rng):
    """Test d(d omega) = 0"""
    for k in range(3):
        omega = random_form(3, k, rng, degree=3)
        assert not omega.d().d()


def test_leibniz_rule(rng):
    """Test d(alpha ^ beta) = d alpha ^ beta + (-1)^k alpha ^ d beta"""
    for k, l in ((0, 1), (1, 1), (1, 2), (2, 1)):
        alpha, beta = random_form(4, k, rng), random_form(4, l, rng)
        sign = -1 if k % 2 else 1
        assert wedge(alpha, beta).d() == wedge(alpha.d(), beta) + wedge(alpha, beta.d()) * sign


def test_pullback_jacobian_determinant():
    """Test pulling back the area form gives the Jacobian determinant"""
    u1, u2 = variable(2, 0), variable(2, 1)
    F = PolynomialMap(2, (u1 ** 2, u1 * u2))
    pulled = pullback(F, PolyForm.dx(2, 1, 2))
    assert pulled.component((1, 2)) == 2 * u1 ** 2


def test_pullback_commutes_with_d_and_wedge(rng):
    """Test F* d = d F* and F*(alpha ^ beta) = F* alpha ^ F* beta"""
    F = random_map(3, 3, rng)
    for k in range(3):
        omega = random_form(3, k, rng)
        assert pullback(F, omega.d()) == pullback(F, omega).d()
    alpha, beta = random_form(3, 1, rng), random_form(3, 1, rng)
    assert pullback(F, wedge(alpha, beta)) == wedge(pullback(F, alpha), pullback(F, beta))


def test_pullback_composes(rng):
    """Test (F o G)* = G* F*"""
    F, G = random_map(2, 3, rng), random_map(2, 2, rng)
    omega = random_form(3, 1, rng, degree=1)
    assert pullback(F.compose(G), omega) == pullback(G, pullback(F, omega))
    with pytest.raises(DimensionMismatch):
        pullback(G, omega)


def test_evaluate_exact_and_float():
    """Test pointwise evaluation on multivectors"""
    omega = PolyForm(2, 1, {(2,): parse_polynomial(2, "x1")})
    assert evaluate(omega, [Fraction(2), Fraction(3)], [[0, 1]]) == 2
    area = PolyForm.dx(2, 1, 2)
    assert evaluate(area, [0, 0], [[1, 2], [3, 4]]) == -2
    assert Multivector.from_vectors([[1, 2], [3, 4]]).components == {(1, 2): -2}
    assert evaluate(omega, [0.5, 0.0], [[0.0, 2.0]]) == pytest.approx(1.0)
    with pytest.raises(DimensionMismatch):
        evaluate(omega, [1, 2, 3], [[0, 1]])
    with pytest.raises(DimensionMismatch):
        evaluate(omega, [1, 2], Multivector.basis(2, 1, 2))


def test_polyform_rejects_bad_indices():
    """Test index validation"""
    with pytest.raises(GradingMismatch):
        PolyForm(3, 2, {(2, 1): 1})
    with pytest.raises(DimensionMismatch):
        PolyForm(2, 1, {(3,): 1})
    with pytest.raises(GradingMismatch):
        PolyForm.dx(2, 1) + PolyForm.dx(2, 1, 2)


def test_stratified_form_needs_components(square):
    """Test every stratum of dimension at least the degree carries a component"""
    with pytest.raises(GradingMismatch):
        StratifiedForm(square, {"S": PolyForm.dx(2, 1)}, 1)
    with pytest.raises(IncompatibleCatalogue):
        StratifiedForm(square, {"nowhere": PolyForm.dx(2, 1)}, 1)
    omega = StratifiedForm.uniform(square, PolyForm.dx(2, 2))
    assert omega.components["v00"] == PolyForm.dx(2, 2)
    assert not omega.d().component("S")


def test_uniform_form_is_graph_closed(square):
    """Test a global polynomial form passes the continuity audit"""
    omega = StratifiedForm.uniform(square, PolyForm(2, 1, {(2,): variable(2, 0)}))
    report = check_graph_closed(omega, samples=6)
    assert report.passed
    assert {(p.lower, p.upper) for p in report.pairs} >= {("B", "S"), ("R", "S")}


def test_mismatched_edge_breaks_continuity(square):
    """Test a tangential jump along an edge is flagged at that edge"""
    base = PolyForm(2, 1, {(2,): variable(2, 0)})
    components = {s: base for s in square.strata}
    components["B"] = PolyForm.dx(2, 1) * 2
    omega = StratifiedForm(square, components, 1)
    report = check_graph_closed(omega, samples=6)
    assert not report.passed
    assert {(f.lower, f.upper) for f in report.failures} == {("B", "S")}
    assert all(f.gap == pytest.approx(2.0) for f in report.failures)
    assert all(abs(f.point[1]) < 1e-9 for f in report.failures)


def test_graph_closed_rejects_unregistered_pair(square):
    """Test continuity pairs must be adjacent"""
    omega = StratifiedForm.uniform(square, PolyForm.dx(2, 1))
    with pytest.raises(IncompatibleCatalogue):
        check_graph_closed(omega, pairs=[("B", "R")])


def test_sup_norm_and_declared_bound(square):
    """Test the sampled sup norm of x dy on the unit square"""
    omega = StratifiedForm.uniform(square, PolyForm(2, 1, {(2,): variable(2, 0)}), declared_bound=1)
    estimate, ok = audit_bound(omega, samples=32)
    assert isinstance(estimate, Fraction)
    assert estimate == 1
    assert ok
    tight = StratifiedForm.uniform(square, PolyForm(2, 1, {(2,): variable(2, 0)}), declared_bound=Fraction(1, 2))
    assert not audit_bound(tight, samples=32)[1]
    assert sup_norm_estimate(StratifiedForm.uniform(square, PolyForm.dx(2, 1, 2)), samples=8) == 1
    half = StratifiedForm.uniform(square, PolyForm(2, 1, {(1,): parse_polynomial(2, "x1/3")}))
    assert sup_norm_estimate(half, samples=8) == Fraction(1, 3)


def test_wedge_of_stratified_forms(square):
    """Test the stratum-wise exterior product"""
    dx = StratifiedForm.uniform(square, PolyForm.dx(2, 1))
    dy = StratifiedForm.uniform(square, PolyForm.dx(2, 2))
    area = dx.wedge(dy)
    assert area.degree == 2
    assert area.component("S") == PolyForm.dx(2, 1, 2)


def test_refine_to_common_refinement(quad):
    """Test forms restate on finer stratifications and refuse coarser ones"""
    first = meshes.diagonal_stratification(quad, 0)
    common = refine_common(first, meshes.diagonal_stratification(quad, 1))
    omega = StratifiedForm.uniform(first, PolyForm.dx(2, 1))
    fine = omega.refine(common)
    assert fine.stratification is common
    assert fine.is_uniform()
    with pytest.raises(IncompatibleCatalogue):
        fine.refine(first)
