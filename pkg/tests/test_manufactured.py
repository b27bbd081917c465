"""Tests for the manufactured solutions and their gates."""
import dataclasses

import numpy as np
import pytest
import sympy as sym

from src.core.assembly import CoefficientField
from src.core.errors import CaseGateError
from src.core.manufactured import (
    JUMP_TOLERANCE,
    STRONG_FORM_TOLERANCE,
    ManufacturedCase,
    case_A,
    case_B,
    check_jump_conditions,
    check_strong_form,
    compile_spatial_expression,
    gate_case,
    get_case,
    interface_flux_datum,
    x_sym,
    y_sym,
)
from src.core.mesh import GeometrySpec


class TestCompileSpatialExpression:
    """Test suite for compile_spatial_expression."""

    def test_evaluates(self):
        """Test evaluation on arrays."""
        fn = compile_spatial_expression("sin(pi*x)*y")
        np.testing.assert_allclose(fn(np.array([0.5, 0.0]), np.array([2.0, 3.0])), [2.0, 0.0], atol=1e-15)

    def test_constant_broadcasts(self):
        """Test that a constant takes the shape of x."""
        assert compile_spatial_expression("3")(np.zeros(4), np.zeros(4)).shape == (4,)

    @pytest.mark.parametrize("text", ["x +", "z*x", "x < 1", "(x", "foo(x)", "lambda x: x"])
    def test_rejects(self, text):
        """Test unparsable text, unknown symbols and functions, and non-scalar expressions."""
        with pytest.raises(ValueError):
            compile_spatial_expression(text)

    @pytest.mark.parametrize("text", [
        "__import__('os').getcwd()",
        "x.__class__",
        "(1).real",
        "exec('x')",
        "open('config.json')",
    ])
    def test_rejects_code(self, text):
        """Test that attribute access and Python builtins are not reachable."""
        with pytest.raises(ValueError):
            compile_spatial_expression(text)

    def test_caret_is_power(self):
        """Test that ^ means exponentiation and the named functions are available."""
        fn = compile_spatial_expression("x^2 + exp(-y) + Abs(x - 1)")
        np.testing.assert_allclose(fn(np.array([2.0]), np.array([0.0])), [6.0])


class TestCaseA:
    """Test suite for the homogeneous case."""

    def test_values(self):
        """Test u at the origin and the time factor."""
        case = case_A()
        assert float(case.u(0.0, 0.0, 0.0)) == pytest.approx(0.0625)
        assert float(case.u(1.0, 0.0, 0.0)) == pytest.approx(0.0625 * (1 + np.exp(-1.0)))

    def test_vanishes_on_boundary(self):
        """Test that u is zero on the square boundary."""
        case = case_A()
        s = np.linspace(-1, 1, 11)
        assert not np.any(case.u(0.3, np.ones_like(s), s))
        assert not np.any(case.u(0.3, s, -np.ones_like(s)))

    def test_label_and_boundary(self):
        """Test the primary label and the absence of boundary data."""
        case = case_A()
        assert case.label == "primary"
        assert case.boundary_data() is None
        assert case.initial_datum().boundary is None

    def test_requires_unit_square(self):
        """Test that case A is tied to (-1, 1)^2."""
        with pytest.raises(ValueError):
            case_A(geometry=GeometrySpec(2.0, 0.5))

    def test_passes_gates(self):
        """Test the jump and strong-form gates."""
        result = gate_case(case_A())
        assert result["value_jump"] <= JUMP_TOLERANCE
        assert result["flux_jump"] <= JUMP_TOLERANCE
        assert result["strong_form"] <= STRONG_FORM_TOLERANCE

    def test_forcing_matches_finite_differences(self):
        """Test f against a central-difference evaluation of the operator at one point."""
        case = case_A()
        c = case.coefficients
        t, x, y, d = 0.2, 0.7, 0.3, 1e-3

        def operator(u, s):
            lap = (u(s, x + d, y) + u(s, x - d, y) + u(s, x, y + d) + u(s, x, y - d) - 4 * u(s, x, y)) / d ** 2
            return float(lap)

        lap = operator(case.u, t)
        lap_t = operator(case.u_t, t)
        expected = -(c.sigma2 * lap + c.eps2 * lap_t)
        assert float(case.f(t, x, y)) == pytest.approx(expected, rel=1e-4, abs=1e-5)

    def test_final_time(self):
        """Test that the horizon reaches the forcing."""
        case = case_A(final_time=0.25)
        assert case.forcing().final_time == 0.25
        assert case.forcing().is_h1_in_time


class TestCaseB:
    """Test suite for the nonhomogeneous case."""

    def test_values(self):
        """Test u inside and outside the disk at t = 0."""
        case = case_B()
        assert float(case.u(0.0, 0.25, 0.0)) == pytest.approx(0.125)
        assert float(case.u(0.0, 0.75, 0.0)) == pytest.approx(0.65625)

    def test_coefficients(self):
        """Test sigma_i = kappa eps_i."""
        c = case_B(kappa=3.0, eps=(1.0, 2.0)).coefficients
        assert (c.sigma1, c.sigma2, c.eps1, c.eps2) == (3.0, 6.0, 1.0, 2.0)

    def test_label_and_boundary(self):
        """Test the extended label and the lifting data."""
        case = case_B()
        assert case.label == "extended"
        assert not case.homogeneous
        boundary = case.boundary_data()
        assert float(boundary.value(0.1, 1.0, 1.0)) == pytest.approx(float(case.u(0.1, 1.0, 1.0)))
        assert case.initial_datum().boundary is not None

    def test_passes_gates(self):
        """Test that the closed-form forcing satisfies the gates."""
        result = gate_case(case_B())
        assert result["flux_jump"] <= JUMP_TOLERANCE
        assert result["strong_form"] <= STRONG_FORM_TOLERANCE

    def test_gradient_jumps(self):
        """Test that the normal derivative is discontinuous at the circle."""
        case = case_B()
        inner = case.grad(0.0, 0.499, 0.0)[0]
        outer = case.grad(0.0, 0.501, 0.0)[0]
        assert inner == pytest.approx(4 * outer, rel=0.01)


class TestGates:
    """Test suite for the case gates."""

    def test_flux_jump_detected(self):
        """Test that a continuous u with a kinked flux is refused."""
        r2 = x_sym ** 2 + y_sym ** 2
        case = ManufacturedCase(
            name="kinked", geometry=GeometrySpec(1.0, 0.5),
            coefficients=CoefficientField(1.0, 1.0, 1.0, 1.0),
            pieces=(r2 - sym.Rational(1, 4), sym.Integer(0)),
        )
        assert check_jump_conditions(case)["value_jump"] <= JUMP_TOLERANCE
        with pytest.raises(CaseGateError) as info:
            gate_case(case)
        assert info.value.check == "flux_jump"

    def test_wrong_forcing_detected(self):
        """Test that a forcing inconsistent with u fails the strong-form gate."""
        case = dataclasses.replace(case_A(), forcing_pieces=(sym.Integer(0), sym.Integer(0)))
        assert check_strong_form(case) > STRONG_FORM_TOLERANCE
        with pytest.raises(CaseGateError) as info:
            gate_case(case)
        assert info.value.check == "strong_form"


class TestRegistry:
    """Test suite for case lookup and description."""

    def test_get_case(self):
        """Test case-insensitive lookup."""
        assert get_case("b").name == "B"
        with pytest.raises(ValueError):
            get_case("C")

    def test_describe(self):
        """Test the report description."""
        description = case_B().describe()
        assert description["label"] == "extended"
        assert description["homogeneous_dirichlet"] is False
        assert description["geometry"] == {"half_width": 1.0, "interface_radius": 0.5}


class TestInterfaceFluxDatum:
    """Test suite for the flux-jump datum."""

    def test_pieces(self, coefficients, geometry):
        """Test u0 inside and outside and the constant g*."""
        datum = interface_flux_datum(coefficients, geometry)
        np.testing.assert_allclose(datum.u0(np.array([0.0, 0.8]), np.zeros(2)), [-0.25, 0.0])
        np.testing.assert_allclose(datum.gstar(np.zeros(3), np.zeros(3)), 2.0 * coefficients.eps1 * 0.5)
        assert datum.projectable
