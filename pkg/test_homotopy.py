from fractions import Fraction

import numpy as np
import pytest

from strataforms import meshes
from strataforms.algebra import constant, parse_polynomial, variable
from strataforms.errors import (
    AuditFailed, DegreeMismatch, DelimiterCrossing, DimensionMismatch, NonPolynomialRetraction, NotClosed,
    NotConeInvariant,
)
from strataforms.forms import PolyForm, pullback
from strataforms.homotopy import (
    Delimiter, LiftedRetraction, PolynomialRetraction, audit_retraction, check_semidifferentiable, cone_retraction,
    homotopy_operator, homotopy_operator_numeric, identity_retraction, inner_box, lift_retraction,
    lipschitz_estimate, poincare_primitive, polynomial_retraction, split_time,
)
from strataforms.smoothing import weak_derivative_residual
from test_forms import random_form


@pytest.fixture
def band():
    return meshes.triangle_band()


@pytest.fixture
def cone(band):
    return cone_retraction((0, 0), band)


def product_form():
    """x2 dx1 + x1 dx2 = d(x1 x2)"""
    return PolyForm(2, 1, {(1,): variable(2, 1), (2,): variable(2, 0)})


def interval_lift(upper=None, breaks=()):
    base = cone_retraction((0,), meshes.unit_interval())
    lower = Delimiter.polynomial(constant(1, 0))
    upper = upper or Delimiter.polynomial(variable(1, 0))
    if breaks:
        upper = Delimiter(upper, breaks)
    return lift_retraction(base, lower, upper, "band", meshes.triangle_band(), ["O"], base_box=[[0, 1]])


def test_cone_retraction_on_band(cone):
    """Test the cone at the apex keeps every stratum and lands on the apex"""
    assert cone.target == ["O"]
    report = audit_retraction(cone)
    assert report.passed
    assert report.identity_error == 0.0
    assert report.target_strata["T"] == ["O"]


def test_cone_refuses_non_invariant_sets():
    """Test the cone at the origin of the square annulus pushes points into the hole"""
    with pytest.raises(NotConeInvariant) as info:
        cone_retraction((0, 0), meshes.square_annulus())
    assert info.value.witness["stratum"] == "A"
    with pytest.raises(DimensionMismatch):
        cone_retraction((0,), meshes.triangle_band())


def test_identity_retraction_audits_trivially(band):
    """Test the identity keeps every stratum where it is"""
    report = audit_retraction(identity_retraction(band))
    assert report.passed
    assert report.target_strata["T"] == ["T"]
    assert report.target_strata["O"] == ["O"]


def test_homotopy_formula(rng):
    """Test d K omega + K d omega = omega - r_0* omega for forms that need not be closed"""
    x1, x2, x3, t = (variable(4, i) for i in range(4))
    r = PolynomialRetraction([x1, t * x2, t ** 2 * x3])
    for k in (1, 2):
        for _ in range(5):
            omega = random_form(3, k, rng)
            lhs = homotopy_operator(omega, r).d() + homotopy_operator(omega.d(), r)
            assert lhs == omega - pullback(r.at_time(0), omega)


def test_homotopy_operator_on_exact_form(cone):
    """Test the cone operator recovers x1 x2 from its differential"""
    gamma = homotopy_operator(product_form(), cone)
    assert gamma == PolyForm.function(parse_polynomial(2, "x1*x2"))
    with pytest.raises(DegreeMismatch):
        homotopy_operator(gamma, cone)


def test_split_time_reassembles(rng):
    """Test the dt part splits off and glues back"""
    x1, x2, t = (variable(3, i) for i in range(3))
    F = PolynomialRetraction([t * x1 + x2, t * x2 ** 2]).polynomial
    for k in (1, 2):
        pulled = pullback(F, random_form(2, k, rng))
        assert split_time(pulled).reassemble() == pulled


def test_poincare_primitive_is_exact(cone):
    """Test d gamma = omega holds symbolically for the area form and an exact 1-form"""
    area = PolyForm.dx(2, 1, 2)
    primitive, report = poincare_primitive(area, cone)
    assert report.passed
    assert report.symbolic_residual == "0"
    assert primitive.component("T").d() == area
    primitive, report = poincare_primitive(product_form(), cone)
    assert report.passed
    assert primitive.component("T") == PolyForm.function(parse_polynomial(2, "x1*x2"))


def test_poincare_random_exact_forms(cone, rng):
    """Test primitives of random exact forms on the band"""
    for k in (0, 1):
        for _ in range(5):
            omega = random_form(2, k, rng, degree=3).d()
            if omega.is_zero():
                continue
            primitive, report = poincare_primitive(omega, cone)
            assert report.passed
            assert primitive.component("T").d() == omega


def test_poincare_errors(cone):
    """Test non-closed forms, 0-forms and failing retractions are refused"""
    with pytest.raises(NotClosed):
        poincare_primitive(PolyForm(2, 1, {(2,): variable(2, 0)}), cone)
    with pytest.raises(DegreeMismatch):
        poincare_primitive(PolyForm.function(constant(2, 1)), cone)
    x1, x2, t = (variable(3, i) for i in range(3))
    shrink = polynomial_retraction([t * x1, t * x2], meshes.square_annulus())
    with pytest.raises(AuditFailed):
        poincare_primitive(PolyForm.dx(2, 1), shrink)


def test_lifted_retraction_keeps_relative_height():
    """Test the lift of the interval cone over the band passes the exact tau audit"""
    lifted = interval_lift()
    report = audit_retraction(lifted, tau_samples=16)
    assert report.passed
    assert report.tau_exact is True
    assert report.tau_error <= 1e-9
    assert lifted.tau(np.array([[0.0, 0.0]]))[0] == 0.0
    assert lifted.tau_exact([Fraction(1, 2), Fraction(1, 8)]) == Fraction(1, 4)


def test_lifted_retraction_is_not_polynomial():
    """Test the lifted retraction needs the numeric homotopy operator"""
    lifted = interval_lift()
    with pytest.raises(NonPolynomialRetraction):
        homotopy_operator(product_form(), lifted)
    with pytest.raises(NonPolynomialRetraction):
        poincare_primitive(product_form(), lifted, target_primitive=PolyForm.function(constant(2, 1)))
    points = np.array([[0.6, 0.2], [0.9, 0.5], [0.3, 0.1]])
    values = homotopy_operator_numeric(product_form(), lifted, points)
    assert values[()] == pytest.approx(points[:, 0] * points[:, 1], abs=1e-6)


def test_lifted_primitive_is_weakly_exact():
    """Test the pointwise primitive under the lift satisfies d gamma = omega against test forms"""
    lifted = interval_lift()
    primitive, report = poincare_primitive(product_form(), lifted)
    assert report.passed
    assert report.symbolic_residual == "numeric"
    assert report.weak_residual <= 1e-6
    points = np.array([[0.6, 0.2], [0.9, 0.5]])
    assert primitive.coefficients(points)[()] == pytest.approx(points[:, 0] * points[:, 1], abs=1e-6)
    primitive, report = poincare_primitive(PolyForm.dx(2, 1, 2), lifted)
    assert report.passed
    half_area = primitive.coefficients(points)
    assert half_area[(1,)] == pytest.approx(-points[:, 1] / 2, abs=1e-6)
    assert half_area[(2,)] == pytest.approx(points[:, 0] / 2, abs=1e-6)


def test_weak_check_rejects_a_wrong_primitive(band):
    """Test a pointwise 0-form that is not a primitive leaves a visible residual"""
    box = inner_box(band, "T")
    assert all(band.locate([float(a), float(b)]) == "T" for a in box[0] for b in box[1])
    wrong = PolyForm.function(parse_polynomial(2, "x1*x2 + x1**2"))
    report = weak_derivative_residual(wrong, product_form(), box)
    assert not report.passed
    right = PolyForm.function(parse_polynomial(2, "x1*x2"))
    assert weak_derivative_residual(right, product_form(), box).passed


def test_broken_delimiter_breaks_preservation():
    """Test an upper delimiter jumping at the apex moves the diagonal off itself"""
    broken = interval_lift(upper=(variable(1, 0), parse_polynomial(1, "x1 + 1/2")), breaks=(Fraction(0),))
    report = audit_retraction(broken)
    assert not report.passed
    assert report.preservation_violations > 0
    assert not check_semidifferentiable(broken).passed


def test_delimiters():
    """Test piece selection and delimiter validation"""
    theta = Delimiter((constant(1, 0), variable(1, 0)), (Fraction(1, 2),))
    assert theta.evaluate_exact([Fraction(1, 2)]) == 0
    assert theta.evaluate_exact([Fraction(3, 4)]) == Fraction(3, 4)
    assert theta.evaluate(np.array([[0.25], [0.75]])).tolist() == [0.0, 0.75]
    with pytest.raises(DimensionMismatch):
        Delimiter((constant(1, 0),), (Fraction(0),))
    with pytest.raises(DimensionMismatch):
        Delimiter((constant(1, 0),) * 3, (Fraction(1), Fraction(0)))
    with pytest.raises(DelimiterCrossing):
        interval_lift(upper=Delimiter.polynomial(parse_polynomial(1, "-x1")))
    base = cone_retraction((0,), meshes.unit_interval())
    with pytest.raises(DimensionMismatch):
        LiftedRetraction(base, Delimiter.polynomial(constant(2, 0)), cellkind="graph")


def test_cone_is_semidifferentiable(cone):
    """Test |d r_t - d r_0| = t on the band, so the residuals halve down to zero"""
    report = check_semidifferentiable(cone)
    assert report.passed
    assert report.monotone
    assert report.residuals == pytest.approx(report.t, abs=1e-6)
    assert report.limit <= 1e-6
    assert check_semidifferentiable(interval_lift()).passed


def test_lipschitz_estimate_is_stable(cone):
    """Test the sampled constant approaches sqrt(3) and agrees across seeds and sample counts"""
    estimates = [lipschitz_estimate(cone, samples=n, seed=seed).estimate for n in (256, 512) for seed in (0, 1)]
    for value in estimates:
        assert 0.95 * np.sqrt(3.0) <= value <= np.sqrt(3.0) + 1e-3
    assert max(estimates) <= 1.05 * min(estimates)


def test_cone_primitive_of_area_form(cone):
    """Test K(dx ^ dy) = (x dy - y dx) / 2 for the cone at the origin"""
    gamma = homotopy_operator(PolyForm.dx(2, 1, 2), cone)
    expected = PolyForm(2, 1, {(1,): parse_polynomial(2, "-x2/2"), (2,): parse_polynomial(2, "x1/2")})
    assert gamma == expected


def test_graph_lift_stays_on_parabola():
    """Test the graph lift over y = x^2 moves along the parabola"""
    base = cone_retraction((0,), meshes.unit_interval())
    graph = LiftedRetraction(base, Delimiter.polynomial(parse_polynomial(1, "x1**2")), cellkind="graph")
    assert graph.evaluate(np.array([[0.5, 0.25]]), 0.5).tolist() == [[0.25, 0.0625]]
    assert graph.evaluate_exact([Fraction(1, 2), Fraction(1, 4)], Fraction(1, 2)) == (Fraction(1, 4), Fraction(1, 16))


def test_lipschitz_of_time_independent_retraction(band):
    """Test r(q, t) = q has constant 1"""
    x1, x2, _ = (variable(3, i) for i in range(3))
    still = polynomial_retraction([x1, x2], band)
    assert lipschitz_estimate(still).estimate == pytest.approx(1.0, abs=1e-6)
