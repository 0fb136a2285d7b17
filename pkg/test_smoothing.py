import math

import numpy as np
import pytest
from scipy.special import roots_legendre

from strataforms import meshes
from strataforms.algebra import parse_polynomial, variable
from strataforms.errors import DecayAuditFailed, DimensionMismatch, GradingMismatch, RadiusTooLarge
from strataforms.forms import NumericForm, PolyForm, StratifiedForm, wedge
from strataforms.smoothing import (
    AffineProjection, GridForm, Mollifier, ParabolaProjection, TubeSpec, check_convolution_identities, convolve,
    make_test_forms, smoothing_report, smoothstep_cutoff, tube_extension, weak_derivative_residual,
)

UNIT = [[0.0, 1.0], [0.0, 1.0]]
PLANE = [[-1, 1], [-1, 1]]


def quadratic():
    return PolyForm.function(parse_polynomial(2, "x1**2 + x1*x2"))


def split_plane_form(upper, lower):
    return StratifiedForm(meshes.split_plane(), {"U": upper, "L": lower, "M": upper}, upper.degree)


def test_grid_derivative_is_exact_on_quadratics():
    """Test second-order differences reproduce d of quadratic forms, edges included"""
    f = quadratic()
    grid = GridForm.sample(f, UNIT, (9, 9))
    assert grid.d().max_difference(GridForm.sample(f.d(), UNIT, (9, 9))) <= 1e-10
    omega = PolyForm(2, 1, {(1,): parse_polynomial(2, "x2**2"), (2,): parse_polynomial(2, "x1*x2")})
    exact = GridForm.sample(omega.d(), UNIT, (9, 9))
    assert GridForm.sample(omega, UNIT, (9, 9)).d().max_difference(exact) <= 1e-10


def test_grid_d_squared_vanishes(rng):
    """Test the difference operators along different axes commute"""
    grid = GridForm(UNIT, (9, 11), 0, {(): rng.uniform(-1.0, 1.0, size=(9, 11))})
    dd = grid.d().d()
    assert dd.degree == 2
    assert np.max(np.abs(dd.component((1, 2)))) <= 1e-9
    with pytest.raises(GradingMismatch):
        dd.d()


def test_grid_wedge_matches_polynomial_wedge():
    """Test the node-wise exterior product"""
    alpha = PolyForm(2, 1, {(1,): variable(2, 0), (2,): parse_polynomial(2, "1")})
    beta = PolyForm(2, 1, {(2,): variable(2, 1)})
    grids = [GridForm.sample(form, UNIT, (5, 5)) for form in (alpha, beta, wedge(alpha, beta))]
    assert grids[0].wedge(grids[1]).max_difference(grids[2]) <= 1e-12


def test_grid_form_validation():
    """Test grid shape, degree and finiteness checks"""
    with pytest.raises(DimensionMismatch):
        GridForm(UNIT, (3, 8), 0)
    with pytest.raises(GradingMismatch):
        GridForm(UNIT, (4, 4), 3)
    with pytest.raises(DimensionMismatch):
        GridForm(UNIT, (4, 4), 0, {(): np.full((4, 4), np.nan)})
    with pytest.raises(DimensionMismatch):
        GridForm(UNIT, (4, 4), 0, {(): np.zeros((4, 5))})


def test_grid_form_text_format():
    """Test the node record format reads back"""
    grid = GridForm.sample(PolyForm(2, 1, {(2,): variable(2, 0)}), UNIT, (4, 5))
    text = grid.to_text()
    assert text.splitlines()[:3] == ["box 0.0 1.0 0.0 1.0", "resolution 4 5", "degree 1"]
    back = GridForm.from_text(text)
    assert back.resolution == (4, 5)
    assert back.max_difference(grid) == 0.0


def test_sample_stratified_form():
    """Test sampling a form with a different constant on each half plane"""
    omega = split_plane_form(PolyForm.dx(2, 1), -PolyForm.dx(2, 1))
    grid = GridForm.sample(omega, PLANE, (5, 5))
    values = grid.component((1,))
    assert values[2, 3] == 1.0
    assert values[2, 1] == -1.0


def test_mollifier_weights():
    """Test the kernel has unit mass and matching half widths"""
    grid = GridForm(UNIT, (33, 33), 0)
    m = Mollifier.for_grid(0.25, grid)
    assert m.half_width == (8, 8)
    assert m.weights.sum() == pytest.approx(1.0)
    density = m.as_grid_form()
    assert density.component(()).sum() * np.prod(density.spacing) == pytest.approx(1.0)


def test_mollification_converges_quadratically():
    """Test |f_eps - f| shrinks like eps^2 and constants are preserved"""
    grid = GridForm.sample(PolyForm.function(parse_polynomial(2, "x1**2 + x2**2")), UNIT, (129, 129))
    report = smoothing_report(grid, (0.25, 0.125, 0.0625), form_id="f")
    assert report.passed
    assert report.monotone
    errors = [run.error for run in report.runs]
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(orders) >= 1.9
    assert max(run.mass_error for run in report.runs) <= 1e-10


def test_convolution_identities(rng):
    """Test d(alpha * phi) = (d alpha) * phi to O(h^2) and graded commutativity of convolution"""
    alpha = GridForm.sample(PolyForm.function(parse_polynomial(2, "x1**3 + x1*x2**2")), UNIT, (65, 65))
    m = Mollifier.for_grid(0.125, alpha)
    assert check_convolution_identities(alpha, m).passed
    one = GridForm(UNIT, (9, 9), 1, {(1,): rng.normal(size=(9, 9)), (2,): rng.normal(size=(9, 9))})
    other = GridForm(UNIT, (9, 9), 1, {(1,): rng.normal(size=(9, 9)), (2,): rng.normal(size=(9, 9))})
    report = check_convolution_identities(one, Mollifier.for_grid(0.25, one), beta=other)
    assert report.commute_residual <= 1e-12


def test_derivative_residual_shrinks_like_h_squared():
    """Test d(alpha * phi) - (d alpha) * phi falls with slope 2 in log-log as the grid refines 64 -> 128 -> 256"""
    f = PolyForm.function(parse_polynomial(2, "x1**3 + x1*x2**2"))
    residuals, spacings = [], []
    for cells in (64, 128, 256):
        alpha = GridForm.sample(f, UNIT, (cells + 1, cells + 1))
        report = check_convolution_identities(alpha, Mollifier.for_grid(0.125, alpha))
        assert report.passed
        residuals.append(report.derivative_residual)
        spacings.append(report.h)
    slope = np.polyfit(np.log(spacings), np.log(residuals), 1)[0]
    assert slope >= 1.9
    assert min(math.log2(a / b) for a, b in zip(residuals, residuals[1:])) >= 1.9


def test_radius_limits():
    """Test the mollifier must fit inside the box and match the grid spacing"""
    grid = GridForm(UNIT, (17, 17), 0, {(): np.ones((17, 17))})
    with pytest.raises(RadiusTooLarge) as info:
        convolve(grid, Mollifier.for_grid(0.5, grid))
    assert info.value.witness["eps"] == 0.5
    with pytest.raises(DimensionMismatch):
        convolve(grid, Mollifier(0.25, (0.1, 0.1)))


def test_test_forms_vanish_on_the_box_boundary():
    """Test the compactly supported test forms are zero on the box sides"""
    for phi in make_test_forms(PLANE, 1, 3, seed=4):
        values = NumericForm(phi).coefficients(np.array([[1.0, 0.3], [-0.2, -1.0], [0.0, 0.0]]))
        for v in values.values():
            assert v[:2] == pytest.approx([0.0, 0.0], abs=1e-12)
            assert v[2] != 0.0


def test_tangential_jump_has_no_weak_derivative():
    """Test dx above the axis and -dx below leaves twice the axis integral of each test form"""
    omega = split_plane_form(PolyForm.dx(2, 1), -PolyForm.dx(2, 1))
    report = weak_derivative_residual(omega, None, PLANE, testforms=8, seed=0)
    assert not report.passed
    nodes, weights = roots_legendre(20)
    on_axis = np.column_stack([nodes, np.zeros_like(nodes)])
    for phi, residual in zip(make_test_forms(PLANE, 0, 8, seed=0), report.residuals):
        expected = 2.0 * abs(float(weights @ NumericForm(phi).coefficients(on_axis)[()]))
        assert residual == pytest.approx(expected, abs=1e-10)
    assert report.witness["residual"] == pytest.approx(max(report.residuals))


def test_normal_jump_is_weakly_closed():
    """Test dy above the axis and -dy below has zero weak derivative"""
    omega = split_plane_form(PolyForm.dx(2, 2), -PolyForm.dx(2, 2))
    assert weak_derivative_residual(omega, None, PLANE).passed


def test_weak_derivative_of_smooth_form():
    """Test a polynomial form's weak derivative is its exterior derivative"""
    omega = PolyForm(2, 1, {(1,): parse_polynomial(2, "x1*x2")})
    assert weak_derivative_residual(omega, omega.d(), PLANE).passed
    assert not weak_derivative_residual(omega, None, PLANE).passed
    with pytest.raises(GradingMismatch):
        weak_derivative_residual(PolyForm.dx(2, 1, 2), None, PLANE)


def test_smoothstep_cutoff():
    """Test the cutoff profile"""
    values = smoothstep_cutoff(np.array([0.0, 0.5, 0.625, 0.75, 1.0]))
    assert values.tolist() == pytest.approx([1.0, 1.0, 0.5, 0.0, 0.0])


def test_projections():
    """Test closest-point parameters on a segment and on the parabola"""
    segment = AffineProjection((0.0, 0.0), (1.0, 0.0))
    assert segment.parameter(np.array([[0.3, 0.7]])).tolist() == pytest.approx([0.3])
    parabola = ParabolaProjection()
    offset = np.array([[0.5 - 0.01, 0.25 + 0.01]])
    assert parabola.parameter(offset)[0] == pytest.approx(0.5, abs=1e-9)
    assert parabola(offset)[0] == pytest.approx([0.5, 0.25], abs=1e-9)


def test_tube_extension_decays():
    """Test a form vanishing to high order at the segment ends extends across the tapered tube"""
    spec = TubeSpec(AffineProjection((0.0, 0.0), (1.0, 0.0)), rho0=0.1)
    gamma = PolyForm(2, 1, {(1,): parse_polynomial(2, "x1**4*(1 - x1)**4/1000")})
    extension = tube_extension(gamma, spec)
    centre = np.array([[0.5, 0.02]])
    assert extension.evaluate(centre)[(1,)][0] == pytest.approx(0.5 ** 8 / 1000)
    point = np.array([[0.5, 0.06]])
    h = 1e-6
    up = extension.evaluate(point + [0.0, h])[(1,)]
    down = extension.evaluate(point - [0.0, h])[(1,)]
    assert extension.differential(point)[(1, 2)][0] == pytest.approx(-(up - down)[0] / (2 * h), rel=1e-4)


def test_tube_extension_refuses_slow_decay():
    """Test a form of constant size fails the decay audit unless the audit is switched off"""
    spec = TubeSpec(AffineProjection((0.0, 0.0), (1.0, 0.0)), rho0=0.1)
    with pytest.raises(DecayAuditFailed):
        tube_extension(PolyForm.dx(2, 1), spec)
    spec.decay_constant = None
    assert tube_extension(PolyForm.dx(2, 1), spec).cutoff(np.array([[0.5, 0.0]]))[0] == 1.0
