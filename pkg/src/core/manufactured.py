"""
Manufactured solutions for the capacitive interface problem.

Each case is a pair of symbolic expressions u_1(t, x, y) inside the disk and
u_2(t, x, y) outside, satisfying

    [u] = 0  and  [sigma du/dnu + eps du'/dnu] = 0  on the circle,

with the forcing f = -div(sigma grad u + eps grad u') derived symbolically
(or stated in closed form and checked against the derivation).
"""
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from tokenize import TokenError
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import sympy as sym
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from .assembly import CoefficientField
from .errors import CaseGateError
from .mesh import GeometrySpec
from .projection import InitialDatum
from .pulses import SeparableForcing, zero_pulse
from .timestepping import BoundaryData

logger = logging.getLogger(__name__)

t_sym, x_sym, y_sym = sym.symbols("t x y", real=True)

JUMP_TOLERANCE = 1e-10
STRONG_FORM_TOLERANCE = 1e-8
GATE_SAMPLES = 100


def _compile(expr: sym.Expr) -> Callable:
    """Lambdify an expression of (t, x, y), broadcasting constants to the shape of x."""
    fn = sym.lambdify((t_sym, x_sym, y_sym), expr, "numpy")

    def evaluate(t, x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(t, x, np.asarray(y, dtype=float)), dtype=float), x.shape)
    return evaluate


_EXPRESSION_FUNCTIONS = {
    name: getattr(sym, name)
    for name in ("sin", "cos", "tan", "asin", "acos", "atan", "atan2", "sinh", "cosh", "tanh",
                 "exp", "log", "sqrt", "Abs", "sign", "Min", "Max", "pi", "E")
}
_EXPRESSION_FUNCTIONS.update(abs=sym.Abs, min=sym.Min, max=sym.Max)

# Names the parser transformations emit; no builtins are reachable.
_PARSER_GLOBALS = {
    "__builtins__": {},
    "Symbol": sym.Symbol,
    "Function": sym.Function,
    "Integer": sym.Integer,
    "Float": sym.Float,
    "Rational": sym.Rational,
    "Lambda": sym.Lambda,
    "factorial": sym.factorial,
    "factorial2": sym.factorial2,
    "I": sym.I,
}

_PARSER_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def compile_spatial_expression(text: str) -> Callable:
    """
    Parse an expression in x and y (e.g. "sin(pi*x)*y") into f(x, y).

    Only x, y, numbers, arithmetic and the functions in
    _EXPRESSION_FUNCTIONS are accepted.

    Raises:
        ValueError: unparsable text, strings, attribute access, unknown functions or
            symbols other than x and y
    """
    if not isinstance(text, str):
        raise ValueError(f"Expression must be a string, got {text!r}")
    if re.search(r"__|['\"]|\.\s*[A-Za-z_]", text):
        raise ValueError(f"Expression {text!r} may not contain strings or attribute access")
    local_dict = dict(_EXPRESSION_FUNCTIONS, x=x_sym, y=y_sym)
    try:
        expr = parse_expr(text, local_dict=local_dict, global_dict=dict(_PARSER_GLOBALS),
                          transformations=_PARSER_TRANSFORMATIONS)
    except (sym.SympifyError, SyntaxError, TypeError, NameError, TokenError) as e:
        raise ValueError(f"Cannot parse expression {text!r}: {e}") from e
    if not isinstance(expr, sym.Expr):
        raise ValueError(f"Expression {text!r} is not a scalar expression")
    unknown = expr.atoms(AppliedUndef)
    if unknown:
        names = ", ".join(sorted(str(f.func) for f in unknown))
        raise ValueError(f"Expression {text!r} uses unknown functions: {names}")
    extra = expr.free_symbols - {x_sym, y_sym}
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ValueError(f"Expression {text!r} uses unknown symbols: {names}")
    fn = _compile(expr)
    return lambda x, y: fn(0.0, x, y)


@dataclass(frozen=True)
class ManufacturedCase:
    """
    Exact solution, coefficients and geometry of a verification case.

    Attributes:
        pieces: (u_1, u_2) sympy expressions in t, x, y
        forcing_pieces: closed-form f per subdomain; derived from u when None
        homogeneous: u vanishes on the square boundary
        label: "primary" for cases inside the homogeneous Dirichlet setting,
            "extended" otherwise
    """

    name: str
    geometry: GeometrySpec
    coefficients: CoefficientField
    pieces: Tuple[sym.Expr, sym.Expr]
    final_time: float = 0.5
    forcing_pieces: Optional[Tuple[sym.Expr, sym.Expr]] = None
    homogeneous: bool = True
    label: str = "primary"
    notes: List[str] = field(default_factory=list)

    # -- symbolic parts ----------------------------------------------------

    def _coefficient_pairs(self):
        c = self.coefficients
        return (c.sigma1, c.eps1), (c.sigma2, c.eps2)

    @cached_property
    def symbolic_gradients(self):
        return tuple(
            (sym.diff(u, x_sym), sym.diff(u, y_sym)) for u in self.pieces
        )

    @cached_property
    def symbolic_fluxes(self):
        """sigma_i grad u_i + eps_i grad u_i' per subdomain."""
        fluxes = []
        for (sigma, eps), (ux, uy) in zip(self._coefficient_pairs(), self.symbolic_gradients):
            fluxes.append((
                sigma * ux + eps * sym.diff(ux, t_sym),
                sigma * uy + eps * sym.diff(uy, t_sym),
            ))
        return tuple(fluxes)

    @cached_property
    def symbolic_forcing(self):
        if self.forcing_pieces is not None:
            return self.forcing_pieces
        return tuple(
            -(sym.diff(fx, x_sym) + sym.diff(fy, y_sym)) for fx, fy in self.symbolic_fluxes
        )

    # -- compiled parts ----------------------------------------------------

    def _piecewise(self, inner: Callable, outer: Callable) -> Callable:
        r0 = self.geometry.interface_radius

        def evaluate(t, x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return np.where(np.hypot(x, y) < r0, inner(t, x, y), outer(t, x, y))
        return evaluate

    def _piecewise_vector(self, inner, outer) -> Callable:
        gx = self._piecewise(inner[0], outer[0])
        gy = self._piecewise(inner[1], outer[1])
        return lambda t, x, y: np.stack([gx(t, x, y), gy(t, x, y)], axis=-1)

    @cached_property
    def u(self) -> Callable:
        return self._piecewise(*(_compile(p) for p in self.pieces))

    @cached_property
    def u_t(self) -> Callable:
        return self._piecewise(*(_compile(sym.diff(p, t_sym)) for p in self.pieces))

    @cached_property
    def grad(self) -> Callable:
        inner, outer = ((_compile(gx), _compile(gy)) for gx, gy in self.symbolic_gradients)
        return self._piecewise_vector(inner, outer)

    @cached_property
    def f(self) -> Callable:
        return self._piecewise(*(_compile(p) for p in self.symbolic_forcing))

    def u_at(self, t: float):
        return lambda x, y: self.u(t, x, y)

    def grad_at(self, t: float):
        return lambda x, y: self.grad(t, x, y)

    def forcing(self) -> SeparableForcing:
        return SeparableForcing(
            pulse=zero_pulse(), profile=lambda x, y: np.zeros(np.shape(x)),
            final_time=self.final_time, closure=self.f, name=f"case-{self.name}",
        )

    def boundary_data(self) -> Optional[BoundaryData]:
        if self.homogeneous:
            return None
        return BoundaryData(value=self.u, rate=self.u_t)

    def initial_datum(self) -> InitialDatum:
        """u(0) with f* = -eps_i lap u_i(0) and g* the eps-weighted flux jump."""
        (_, eps1), (_, eps2) = self._coefficient_pairs()
        u0 = [p.subs(t_sym, 0) for p in self.pieces]
        fstar = [
            -eps * (sym.diff(u, x_sym, 2) + sym.diff(u, y_sym, 2))
            for eps, u in zip((eps1, eps2), u0)
        ]
        r = sym.sqrt(x_sym ** 2 + y_sym ** 2)
        normal = [
            (sym.diff(u, x_sym) * x_sym + sym.diff(u, y_sym) * y_sym) / r for u in u0
        ]
        gstar = _compile(eps1 * normal[0] - eps2 * normal[1])
        u0_fn = self._piecewise(*(_compile(p) for p in u0))
        grad0 = self._piecewise_vector(
            *((_compile(sym.diff(u, x_sym)), _compile(sym.diff(u, y_sym))) for u in u0)
        )
        fstar_fn = self._piecewise(*(_compile(p) for p in fstar))
        return InitialDatum(
            u0=lambda x, y: u0_fn(0.0, x, y),
            grad_u0=lambda x, y: grad0(0.0, x, y),
            fstar=lambda x, y: fstar_fn(0.0, x, y),
            gstar=lambda x, y: gstar(0.0, x, y),
            boundary=None if self.homogeneous else self.u_at(0.0),
            name=f"case-{self.name}",
        )

    def describe(self) -> dict:
        return {
            "name": self.name,
            "label": self.label,
            "u_inner": str(self.pieces[0]),
            "u_outer": str(self.pieces[1]),
            "coefficients": self.coefficients.to_dict(),
            "geometry": {
                "half_width": self.geometry.half_width,
                "interface_radius": self.geometry.interface_radius,
            },
            "final_time": self.final_time,
            "homogeneous_dirichlet": self.homogeneous,
            "notes": list(self.notes),
        }


def case_A(
    coefficients: Optional[CoefficientField] = None,
    geometry: Optional[GeometrySpec] = None,
    final_time: float = 0.5,
) -> ManufacturedCase:
    """
    u = alpha(t) (r^2 - r0^2)^2 (1 - x^2)^2 (1 - y^2)^2, alpha = 1 + t exp(-t).

    grad u vanishes on the circle, so both jump conditions hold for any
    coefficients; u vanishes on the boundary of (-1, 1)^2.
    """
    geometry = geometry or GeometrySpec(1.0, 0.5)
    if geometry.half_width != 1.0:
        raise ValueError("Case A is defined on (-1, 1)^2")
    coefficients = coefficients or CoefficientField(sigma1=1.0, sigma2=10.0, eps1=1.0, eps2=0.1)
    r0 = sym.Float(geometry.interface_radius)
    alpha = 1 + t_sym * sym.exp(-t_sym)
    u = alpha * (x_sym ** 2 + y_sym ** 2 - r0 ** 2) ** 2 * (1 - x_sym ** 2) ** 2 * (1 - y_sym ** 2) ** 2
    return ManufacturedCase(
        name="A", geometry=geometry, coefficients=coefficients, pieces=(u, u),
        final_time=final_time,
    )


def case_B(kappa: float = 2.0, eps: Tuple[float, float] = (1.0, 4.0), a1: float = 1.0,
           geometry: Optional[GeometrySpec] = None, final_time: float = 0.5) -> ManufacturedCase:
    """
    u = alpha(t) phi_i(r), alpha = exp(-kappa t) + 1, with sigma_i = kappa eps_i.

    phi_1 = a1 r^2, phi_2 = a2 r^2 + b2, a2 = a1 eps1 / eps2, b2 = r0^2 (a1 - a2).
    The gradient jumps across the circle; the boundary data is nonhomogeneous.
    """
    geometry = geometry or GeometrySpec(1.0, 0.5)
    eps1, eps2 = (float(e) for e in eps)
    coefficients = CoefficientField(sigma1=kappa * eps1, sigma2=kappa * eps2, eps1=eps1, eps2=eps2)
    r0 = geometry.interface_radius
    a2 = a1 * eps1 / eps2
    b2 = r0 ** 2 * (a1 - a2)
    k = sym.Float(kappa)
    alpha = sym.exp(-k * t_sym) + 1
    alpha_t = sym.diff(alpha, t_sym)
    r2 = x_sym ** 2 + y_sym ** 2
    u1 = alpha * a1 * r2
    u2 = alpha * (a2 * r2 + b2)
    f1 = -4 * a1 * (coefficients.sigma1 * alpha + eps1 * alpha_t)
    f2 = -4 * a2 * (coefficients.sigma2 * alpha + eps2 * alpha_t)
    return ManufacturedCase(
        name="B", geometry=geometry, coefficients=coefficients, pieces=(u1, u2),
        final_time=final_time, forcing_pieces=(sym.simplify(f1), sym.simplify(f2)),
        homogeneous=False, label="extended",
        notes=["nonhomogeneous Dirichlet data on the square boundary (lifting)"],
    )


CASES = {"A": case_A, "B": case_B}


def get_case(name: str) -> ManufacturedCase:
    try:
        return CASES[name.upper()]()
    except KeyError:
        raise ValueError(f"Unknown manufactured case {name!r} (choose from {', '.join(CASES)})")


def interface_flux_datum(coefficients: CoefficientField, geometry: GeometrySpec) -> InitialDatum:
    """
    u0 = r^2 - r0^2 inside the disk and 0 outside.

    f* = -4 eps1 inside, g* = 2 eps1 r0; the projection exercises the
    interface functional with a genuine flux jump.
    """
    r0 = geometry.interface_radius
    eps1 = coefficients.eps1

    def u0(x, y):
        r2 = np.asarray(x) ** 2 + np.asarray(y) ** 2
        return np.where(r2 < r0 ** 2, r2 - r0 ** 2, 0.0)

    def grad_u0(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = (x ** 2 + y ** 2 < r0 ** 2)[..., None]
        return np.where(inside, np.stack([2 * x, 2 * y], axis=-1), 0.0)

    def fstar(x, y):
        return np.where(np.hypot(x, y) < r0, -4.0 * eps1, 0.0)

    def gstar(x, y):
        return np.full(np.shape(x), 2.0 * eps1 * r0)

    return InitialDatum(u0=u0, grad_u0=grad_u0, fstar=fstar, gstar=gstar, name="interface-flux")


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------

def _gate_times(case: ManufacturedCase) -> np.ndarray:
    return np.linspace(0.0, case.final_time, 5)


def check_jump_conditions(case: ManufacturedCase, samples: int = GATE_SAMPLES) -> Dict[str, float]:
    """
    Maximal value jump and flux jump over points on the circle.

    The one-sided limits are the subdomain expressions evaluated on the
    circle itself.
    """
    r0 = case.geometry.interface_radius
    theta = 2.0 * np.pi * np.arange(samples) / samples
    x, y = r0 * np.cos(theta), r0 * np.sin(theta)
    nx, ny = np.cos(theta), np.sin(theta)
    u_in, u_out = (_compile(p) for p in case.pieces)
    flux_in, flux_out = (
        (_compile(fx), _compile(fy)) for fx, fy in case.symbolic_fluxes
    )
    value_jump = flux_jump = 0.0
    for t in _gate_times(case):
        value_jump = max(value_jump, float(np.max(np.abs(u_in(t, x, y) - u_out(t, x, y)))))
        jump = (
            (flux_in[0](t, x, y) - flux_out[0](t, x, y)) * nx
            + (flux_in[1](t, x, y) - flux_out[1](t, x, y)) * ny
        )
        flux_jump = max(flux_jump, float(np.max(np.abs(jump))))
    return {"value_jump": value_jump, "flux_jump": flux_jump}


def _sample_subdomain(rng, case: ManufacturedCase, inner: bool, count: int) -> np.ndarray:
    a = case.geometry.half_width
    r0 = case.geometry.interface_radius
    points = np.empty((0, 2))
    while points.shape[0] < count:
        trial = rng.uniform(-a, a, size=(4 * count, 2))
        r = np.hypot(trial[:, 0], trial[:, 1])
        keep = r < 0.99 * r0 if inner else r > 1.01 * r0
        points = np.vstack([points, trial[keep]])
    return points[:count]


def check_strong_form(case: ManufacturedCase, samples: int = GATE_SAMPLES, seed: int = 0) -> float:
    """
    Maximal relative residual of sigma lap u + eps lap u' + f at random points.

    The Laplacians come from a separate symbolic differentiation, so a
    closed-form forcing is checked against the exact solution.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for index, inner in enumerate((True, False)):
        u = case.pieces[index]
        sigma, eps = case._coefficient_pairs()[index]
        lap = sym.diff(u, x_sym, 2) + sym.diff(u, y_sym, 2)
        operator = _compile(sigma * lap + eps * sym.diff(lap, t_sym))
        forcing = _compile(case.symbolic_forcing[index])
        points = _sample_subdomain(rng, case, inner, samples)
        times = rng.uniform(0.0, case.final_time, size=samples)
        for t, (x, y) in zip(times, points):
            f = float(forcing(t, x, y))
            residual = abs(float(operator(t, x, y)) + f)
            worst = max(worst, residual / max(1.0, abs(f)))
    return worst


def gate_case(case: ManufacturedCase) -> Dict[str, float]:
    """
    Run both gates; raise CaseGateError on the first failure.

    Returns:
        dict: the measured violations
    """
    jumps = check_jump_conditions(case)
    for check, value in jumps.items():
        if value > JUMP_TOLERANCE:
            logger.error(f"Case {case.name} failed the {check} gate ({value:.3e})")
            raise CaseGateError(case.name, check, value, JUMP_TOLERANCE)
    strong = check_strong_form(case)
    if strong > STRONG_FORM_TOLERANCE:
        logger.error(f"Case {case.name} failed the strong-form gate ({strong:.3e})")
        raise CaseGateError(case.name, "strong_form", strong, STRONG_FORM_TOLERANCE)
    logger.info(f"Case {case.name} passed its gates")
    return dict(jumps, strong_form=strong)
