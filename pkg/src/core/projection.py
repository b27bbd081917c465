"""
Initial-state operators.

qh_project computes the discrete elliptic projection Q_h u0 defined by

    a_{2,h}(Q_h u0, v) = (f*, v) + <g*, v>    for all v in V_h,

where f* = -eps_i lap u0 on each subdomain and g* is the permittivity
weighted flux jump of u0 across the interface. nodal_interpolate is the
fallback for initial data without a known strong form.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .assembly import (
    CoefficientField,
    DofMap,
    Form,
    SpatialFunction,
    apply_dirichlet,
    assemble_interface_flux,
    assemble_load,
    assemble_stiffness,
    boundary_vector,
    element_geometry,
    evaluate_scalar,
    evaluate_vector,
)
from .mesh import Mesh
from .quadrature import map_to_elements, subdivide, triangle_rule
from .sparse_solver import SolverConfig, cg_solve

logger = logging.getLogger(__name__)

INTERFACE_SUBDIVISION_LEVELS = 3


@dataclass(frozen=True)
class InitialDatum:
    """
    Initial potential with the data defining its projection.

    Attributes:
        u0, grad_u0: u0(x, y) and its gradient (last axis of size 2)
        fstar: -eps_i lap u0 on each subdomain; None when unknown
        gstar: eps1 du1/dnu - eps2 du2/dnu on the interface, nu pointing out
            of the inner disk; None means zero
        boundary: Dirichlet data on the square boundary; None means zero
        name: label recorded in run manifests
    """

    u0: SpatialFunction
    grad_u0: Optional[SpatialFunction] = None
    fstar: Optional[SpatialFunction] = None
    gstar: Optional[SpatialFunction] = None
    boundary: Optional[SpatialFunction] = None
    name: str = "custom"

    @property
    def projectable(self) -> bool:
        return self.fstar is not None

    def combine(self, alpha: float, other: "InitialDatum", beta: float) -> "InitialDatum":
        """The datum alpha*self + beta*other (all parts combined linearly)."""

        def mix(f: Optional[Callable], g: Optional[Callable]):
            if f is None and g is None:
                return None
            f = f or _zero
            g = g or _zero
            return lambda x, y: alpha * np.asarray(f(x, y)) + beta * np.asarray(g(x, y))

        grad = None
        if self.grad_u0 is not None and other.grad_u0 is not None:
            grad = mix(self.grad_u0, other.grad_u0)
        return InitialDatum(
            u0=mix(self.u0, other.u0),
            grad_u0=grad,
            fstar=mix(self.fstar, other.fstar),
            gstar=mix(self.gstar, other.gstar),
            boundary=mix(self.boundary, other.boundary),
            name=f"{alpha:g}*{self.name}+{beta:g}*{other.name}",
        )


def _zero(x, y):
    return np.zeros(np.shape(x))


def _zero_gradient(x, y):
    return np.zeros(np.shape(x) + (2,))


def zero_datum() -> InitialDatum:
    return InitialDatum(u0=_zero, grad_u0=_zero_gradient, fstar=_zero, gstar=None, name="zero")


def qh_project(
    mesh: Mesh,
    dofs: DofMap,
    coeff: CoefficientField,
    datum: InitialDatum,
    config: Optional[SolverConfig] = None,
) -> np.ndarray:
    """
    Discrete elliptic projection of the initial datum.

    Returns:
        np.ndarray: free-dof coefficients; boundary entries follow datum.boundary

    Raises:
        ValueError: the datum carries no f*
        SolverError: propagated from the CG solve
    """
    if not datum.projectable:
        raise ValueError(f"Initial datum '{datum.name}' has no f*; use nodal_interpolate")
    stiffness = assemble_stiffness(mesh, coeff, Form.EPS)
    load = assemble_load(mesh, datum.fstar)
    if datum.gstar is not None:
        load = load + assemble_interface_flux(mesh, datum.gstar)
    system = apply_dirichlet(stiffness, load, dofs, datum.boundary, mesh=mesh)
    result = cg_solve(system.matrix, system.rhs, config)
    logger.debug(f"Q_h projection of '{datum.name}' solved in {result.iterations} CG iterations")
    return result.x


def nodal_interpolate(mesh: Mesh, dofs: DofMap, u0: SpatialFunction) -> np.ndarray:
    """Vertex values of u0 at the free dofs."""
    v = mesh.vertices
    return dofs.restrict(evaluate_scalar(u0, v[:, 0], v[:, 1]))


# ---------------------------------------------------------------------------
# Integration over the true subdomains
# ---------------------------------------------------------------------------

def _near_interface(mesh: Mesh) -> np.ndarray:
    """Elements whose closure may intersect the circle."""
    if mesh.geometry is None:
        return np.zeros(mesh.n_elements, dtype=bool)
    corners = mesh.vertices[mesh.elements]
    distance = np.abs(np.hypot(corners[..., 0], corners[..., 1]) - mesh.geometry.interface_radius)
    edges = np.roll(corners, -1, axis=1) - corners
    longest = np.hypot(edges[..., 0], edges[..., 1]).max(axis=1)
    return distance.min(axis=1) <= longest


def _permittivity(mesh: Mesh, coeff: CoefficientField, x, y, owner) -> np.ndarray:
    """eps at the true position of each point; element tags when the geometry is unknown."""
    if mesh.geometry is not None:
        return coeff.at_points(Form.EPS, x, y, mesh.geometry.interface_radius)
    return coeff.per_element(Form.EPS, mesh.tags[owner])[:, None]


def true_subdomain_integrals(
    mesh: Mesh,
    integrand: Callable,
    levels: int = INTERFACE_SUBDIVISION_LEVELS,
) -> np.ndarray:
    """
    Per-element integrals of integrand(x, y, owner) -> (m, nq, k).

    Uses the degree-6 rule; elements near the interface are split into
    4**levels children first, so integrands with a kink on the circle are
    resolved.
    """
    rule = triangle_rule(6)
    corners = mesh.vertices[mesh.elements]
    near = _near_interface(mesh)

    def integrate(tris: np.ndarray, owner: np.ndarray) -> np.ndarray:
        points = map_to_elements(tris, rule)
        values = integrand(points[..., 0], points[..., 1], owner)
        e1 = tris[:, 1] - tris[:, 0]
        e2 = tris[:, 2] - tris[:, 0]
        twice_area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        return twice_area[:, None] * np.einsum("mqk,q->mk", values, rule.weights)

    index = np.arange(mesh.n_elements)
    far = index[~near]
    first = integrate(corners[far], far)
    result = np.zeros((mesh.n_elements, first.shape[1]))
    result[far] = first
    if near.any():
        close = index[near]
        children = subdivide(corners[close], levels)
        per_parent = children.shape[1]
        owner = np.repeat(close, per_parent)
        values = integrate(children.reshape(-1, 3, 2), owner)
        result[close] = values.reshape(close.shape[0], per_parent, -1).sum(axis=1)
    return result


def _weighted_gradient(mesh: Mesh, coeff: CoefficientField, grad_u0: SpatialFunction):
    def integrand(x, y, owner):
        eps = _permittivity(mesh, coeff, x, y, owner)
        return eps[..., None] * evaluate_vector(grad_u0, x, y)
    return integrand


def _full_vector(mesh: Mesh, dofs: DofMap, datum: InitialDatum, q: np.ndarray) -> np.ndarray:
    lifting = boundary_vector(mesh, dofs, datum.boundary) if datum.boundary is not None else None
    return dofs.expand(q, lifting)


def galerkin_orthogonality_residual(
    mesh: Mesh,
    dofs: DofMap,
    coeff: CoefficientField,
    datum: InitialDatum,
    q: np.ndarray,
) -> float:
    """
    max_i |a_2(u0, phi_i) - a_{2,h}(q, phi_i)| over the free basis functions.

    a_2 integrates over the true subdomains; a_{2,h} is the assembled
    polygonal form.
    """
    if datum.grad_u0 is None:
        raise ValueError(f"Initial datum '{datum.name}' has no gradient")
    _, grads = element_geometry(mesh)
    flux = true_subdomain_integrals(mesh, _weighted_gradient(mesh, coeff, datum.grad_u0))
    local = np.einsum("ekd,ed->ek", grads, flux)
    continuous = np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    discrete = assemble_stiffness(mesh, coeff, Form.EPS) @ _full_vector(mesh, dofs, datum, q)
    gap = continuous[dofs.free] - discrete[dofs.free]
    return float(np.max(np.abs(gap))) if gap.size else 0.0


def projection_energies(
    mesh: Mesh,
    dofs: DofMap,
    coeff: CoefficientField,
    datum: InitialDatum,
    q: np.ndarray,
) -> Tuple[float, float]:
    """(a_{2,h}(q, q), a_2(u0, u0))."""
    full = _full_vector(mesh, dofs, datum, q)
    discrete = float(full @ (assemble_stiffness(mesh, coeff, Form.EPS) @ full))

    def integrand(x, y, owner):
        eps = _permittivity(mesh, coeff, x, y, owner)
        grad = evaluate_vector(datum.grad_u0, x, y)
        return (eps * np.sum(grad ** 2, axis=-1))[..., None]

    continuous = float(np.sum(true_subdomain_integrals(mesh, integrand)))
    return discrete, continuous
