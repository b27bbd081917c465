"""
P1 finite element assembly.

Matrices are assembled in a canonical order (entries grouped by row, then
column, then element index) so that transposed entries are summed from the
same values in the same order and the result is exactly symmetric.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.io
from scipy.sparse import csr_matrix

from .errors import DegenerateElementError, FunctionEvaluationError, InterfaceResolutionError
from .mesh import INNER, OUTER, Mesh, signed_areas
from .quadrature import QuadratureRule, map_to_elements, segment_rule, triangle_rule

logger = logging.getLogger(__name__)

SpatialFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
BoundaryValues = Union[None, float, np.ndarray, SpatialFunction]

_MASS_PATTERN = (np.ones((3, 3)) + np.eye(3)) / 12.0


class Form(Enum):
    """Which bilinear form to assemble: conductivity or permittivity."""
    SIGMA = "sigma"
    EPS = "eps"


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant conductivity and permittivity, subdomain 1 inside the circle."""

    sigma1: float
    sigma2: float
    eps1: float
    eps2: float

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "eps1", "eps2"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError(f"Conductivities must be nonnegative, got ({self.sigma1}, {self.sigma2})")
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError(f"Permittivities must be positive, got ({self.eps1}, {self.eps2})")

    def values(self, which) -> Tuple[float, float]:
        which = Form(which)
        if which is Form.SIGMA:
            return self.sigma1, self.sigma2
        return self.eps1, self.eps2

    def per_element(self, which, tags: np.ndarray) -> np.ndarray:
        inner, outer = self.values(which)
        return np.where(tags == INNER, inner, outer)

    def at_points(self, which, x, y, radius: float) -> np.ndarray:
        """Coefficient of the true subdomain containing each point."""
        inner, outer = self.values(which)
        return np.where(np.hypot(x, y) < radius, inner, outer)

    def scaled(self, factor: float) -> "CoefficientField":
        return replace(
            self,
            sigma1=factor * self.sigma1, sigma2=factor * self.sigma2,
            eps1=factor * self.eps1, eps2=factor * self.eps2,
        )

    @property
    def min_eps(self) -> float:
        return min(self.eps1, self.eps2)

    def to_dict(self) -> dict:
        return {"sigma1": self.sigma1, "sigma2": self.sigma2, "eps1": self.eps1, "eps2": self.eps2}


@dataclass(frozen=True)
class DofMap:
    """Vertex to degree-of-freedom numbering; eliminated vertices map to -1."""

    n_vertices: int
    free: np.ndarray
    fixed: np.ndarray
    vertex_to_dof: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Mesh, eliminate_boundary: bool = True) -> "DofMap":
        if eliminate_boundary:
            free = np.flatnonzero(~mesh.boundary)
            fixed = np.flatnonzero(mesh.boundary)
        else:
            free = np.arange(mesh.n_vertices)
            fixed = np.empty(0, dtype=np.int64)
        vertex_to_dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
        vertex_to_dof[free] = np.arange(free.shape[0])
        for array in (free, fixed, vertex_to_dof):
            array.setflags(write=False)
        return cls(mesh.n_vertices, free, fixed, vertex_to_dof)

    @property
    def n_free(self) -> int:
        return int(self.free.shape[0])

    def restrict(self, vertex_vector: np.ndarray) -> np.ndarray:
        return np.asarray(vertex_vector, dtype=float)[self.free]

    def expand(self, free_vector: np.ndarray, boundary_values: Optional[np.ndarray] = None) -> np.ndarray:
        """Full vertex vector with boundary entries from boundary_values (default 0)."""
        full = np.zeros(self.n_vertices)
        if boundary_values is not None:
            full[self.fixed] = np.asarray(boundary_values, dtype=float)[self.fixed]
        full[self.free] = free_vector
        return full


@dataclass(frozen=True)
class DirichletSystem:
    """Reduced system on the free dofs plus the boundary lifting used to build it."""

    matrix: csr_matrix
    rhs: np.ndarray
    boundary_values: np.ndarray


# ---------------------------------------------------------------------------
# Element level
# ---------------------------------------------------------------------------

def _gradients(corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Signed areas (ne,) and P1 basis gradients (ne, 3, 2)."""
    x, y = corners[..., 0], corners[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    twice = np.where(area != 0, 2.0 * area, 1.0)
    grads = np.empty(corners.shape)
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= twice[:, None, None]
    return area, grads


def _gram(grads: np.ndarray) -> np.ndarray:
    """grad_i . grad_j per element, bit-symmetric in (i, j)."""
    return (
        grads[:, :, None, 0] * grads[:, None, :, 0]
        + grads[:, :, None, 1] * grads[:, None, :, 1]
    )


def element_geometry(mesh: Mesh, elements: Optional[np.ndarray] = None):
    """Areas and gradients of the selected elements; raises on degenerate ones."""
    index = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    area, grads = _gradients(mesh.vertices[mesh.elements[index]])
    bad = np.flatnonzero(area <= 0)
    if bad.size:
        raise DegenerateElementError(int(index[bad[0]]), float(area[bad[0]]))
    return area, grads


def element_stiffness(tri, coeff: float = 1.0) -> np.ndarray:
    """
    P1 stiffness matrix of one triangle, coeff * area * grad(phi_i) . grad(phi_j).

    Raises:
        DegenerateElementError: zero or negative signed area
    """
    corners = np.asarray(tri, dtype=float).reshape(1, 3, 2)
    area, grads = _gradients(corners)
    if area[0] <= 0:
        raise DegenerateElementError(None, float(area[0]))
    return (coeff * area[0]) * _gram(grads)[0]


# ---------------------------------------------------------------------------
# Global assembly
# ---------------------------------------------------------------------------

def _canonical_csr(elements: np.ndarray, local: np.ndarray, dofs: DofMap) -> csr_matrix:
    ne = elements.shape[0]
    n = dofs.n_free
    rows = dofs.vertex_to_dof[np.repeat(elements, 3, axis=1)].ravel()
    cols = dofs.vertex_to_dof[np.tile(elements, (1, 3))].ravel()
    vals = local.reshape(ne * 9)
    owner = np.repeat(np.arange(ne), 9)
    keep = (rows >= 0) & (cols >= 0)
    rows, cols, vals, owner = rows[keep], cols[keep], vals[keep], owner[keep]
    if rows.size == 0:
        return csr_matrix((n, n))

    order = np.lexsort((owner, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    new_entry = np.ones(rows.shape[0], dtype=bool)
    new_entry[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(new_entry)
    data = np.add.reduceat(vals, starts)
    indices = cols[starts]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[starts], minlength=n), out=indptr[1:])
    return csr_matrix((data, indices, indptr), shape=(n, n))


def _selected(mesh: Mesh, subdomain: Optional[int]) -> np.ndarray:
    if subdomain is None:
        return np.arange(mesh.n_elements)
    if subdomain not in (INNER, OUTER):
        raise ValueError(f"subdomain must be {INNER} or {OUTER}, got {subdomain!r}")
    return np.flatnonzero(mesh.tags == subdomain)


def assemble_stiffness(
    mesh: Mesh,
    coeff: Union[CoefficientField, float],
    which=Form.EPS,
    dofs: Optional[DofMap] = None,
    subdomain: Optional[int] = None,
) -> csr_matrix:
    """
    Stiffness matrix of a_{1,h} (which=sigma) or a_{2,h} (which=eps).

    Args:
        mesh: triangulation
        coeff: coefficient field, or a plain number for a constant coefficient
        which: Form.SIGMA or Form.EPS
        dofs: numbering; None keeps every vertex
        subdomain: restrict to elements with this tag

    Returns:
        csr_matrix: exactly symmetric, sorted unique column indices per row
    """
    dofs = dofs or DofMap.from_mesh(mesh, eliminate_boundary=False)
    index = _selected(mesh, subdomain)
    area, grads = element_geometry(mesh, index)
    if isinstance(coeff, CoefficientField):
        c = coeff.per_element(which, mesh.tags[index])
    else:
        c = np.full(index.shape[0], float(coeff))
    local = (c * area)[:, None, None] * _gram(grads)
    return _canonical_csr(mesh.elements[index], local, dofs)


def assemble_mass(mesh: Mesh, dofs: Optional[DofMap] = None, subdomain: Optional[int] = None) -> csr_matrix:
    """Consistent P1 mass matrix."""
    dofs = dofs or DofMap.from_mesh(mesh, eliminate_boundary=False)
    index = _selected(mesh, subdomain)
    area, _ = element_geometry(mesh, index)
    local = area[:, None, None] * _MASS_PATTERN[None]
    return _canonical_csr(mesh.elements[index], local, dofs)


def split_blocks(matrix: csr_matrix, dofs: DofMap) -> Tuple[csr_matrix, csr_matrix]:
    """Free-free and free-fixed blocks of a matrix assembled on all vertices."""
    rows = matrix[dofs.free]
    return rows[:, dofs.free].tocsr(), rows[:, dofs.fixed].tocsr()


# ---------------------------------------------------------------------------
# Function evaluation
# ---------------------------------------------------------------------------

def _first_bad_point(mask: np.ndarray, x: np.ndarray, y: np.ndarray):
    k = np.unravel_index(int(np.argmax(mask)), mask.shape)
    return (x[k], y[k])


def evaluate_scalar(g: SpatialFunction, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate g(x, y) on arrays, broadcasting constants and checking finiteness."""
    try:
        values = np.asarray(g(x, y), dtype=float)
    except (ArithmeticError, ValueError, TypeError) as e:
        raise FunctionEvaluationError(f"Function evaluation failed: {e}") from e
    values = np.broadcast_to(values, x.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        raise FunctionEvaluationError("Function returned a non-finite value", _first_bad_point(bad, x, y))
    return values


def evaluate_vector(g: SpatialFunction, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate a gradient-like function whose last axis has size 2."""
    try:
        values = np.asarray(g(x, y), dtype=float)
    except (ArithmeticError, ValueError, TypeError) as e:
        raise FunctionEvaluationError(f"Function evaluation failed: {e}") from e
    values = np.broadcast_to(values, x.shape + (2,))
    bad = ~np.isfinite(values).all(axis=-1)
    if bad.any():
        raise FunctionEvaluationError("Function returned a non-finite value", _first_bad_point(bad, x, y))
    return values


def boundary_vector(mesh: Mesh, dofs: DofMap, values: BoundaryValues) -> np.ndarray:
    """Full vertex vector holding Dirichlet data on the eliminated vertices."""
    full = np.zeros(mesh.n_vertices)
    if values is None:
        return full
    if callable(values):
        v = mesh.vertices[dofs.fixed]
        full[dofs.fixed] = evaluate_scalar(values, v[:, 0], v[:, 1])
    elif np.ndim(values) == 0:
        full[dofs.fixed] = float(values)
    else:
        full[dofs.fixed] = np.asarray(values, dtype=float)[dofs.fixed]
    return full


# ---------------------------------------------------------------------------
# Load vectors
# ---------------------------------------------------------------------------

def assemble_load(
    mesh: Mesh,
    g: SpatialFunction,
    quad: Optional[QuadratureRule] = None,
    dofs: Optional[DofMap] = None,
) -> np.ndarray:
    """Load vector (g, phi_i) by elementwise quadrature (degree 4 by default)."""
    dofs = dofs or DofMap.from_mesh(mesh, eliminate_boundary=False)
    rule = quad or triangle_rule(4)
    area, _ = element_geometry(mesh)
    points = map_to_elements(mesh.vertices[mesh.elements], rule)
    values = evaluate_scalar(g, points[..., 0], points[..., 1])
    local = (2.0 * area)[:, None] * np.einsum("eq,q,qk->ek", values, rule.weights, rule.points)
    full = np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return dofs.restrict(full)


def assemble_interface_flux(
    mesh: Mesh,
    gstar: SpatialFunction,
    quad: Optional[QuadratureRule] = None,
    dofs: Optional[DofMap] = None,
) -> np.ndarray:
    """
    Interface functional <g*, phi_i> over the polygonal interface.

    g* is evaluated at quadrature points on the chords.

    Raises:
        InterfaceResolutionError: the mesh has no interface edges
    """
    if mesh.interface_edges.shape[0] == 0:
        raise InterfaceResolutionError("Mesh has no interface edges; cannot integrate over the interface")
    dofs = dofs or DofMap.from_mesh(mesh, eliminate_boundary=False)
    rule = quad or segment_rule(3)
    s = rule.points
    p = mesh.vertices[mesh.interface_edges[:, 0]]
    q = mesh.vertices[mesh.interface_edges[:, 1]]
    points = p[:, None, :] * (1.0 - s)[None, :, None] + q[:, None, :] * s[None, :, None]
    values = evaluate_scalar(gstar, points[..., 0], points[..., 1])
    length = np.hypot(*(q - p).T)
    at_p = length * (values @ (rule.weights * (1.0 - s)))
    at_q = length * (values @ (rule.weights * s))
    full = np.bincount(
        mesh.interface_edges.T.ravel(),
        weights=np.concatenate([at_p, at_q]),
        minlength=mesh.n_vertices,
    )
    return dofs.restrict(full)


def apply_dirichlet(
    matrix: csr_matrix,
    vector: np.ndarray,
    dofs: DofMap,
    boundary_values: BoundaryValues = None,
    mesh: Optional[Mesh] = None,
) -> DirichletSystem:
    """
    Reduce a system assembled on all vertices to the free dofs.

    Boundary values (a constant, a full vertex vector, or a function of
    (x, y), which then needs the mesh) are moved to the right-hand side.
    A system already assembled on the free dofs passes through unchanged.
    """
    n_total = dofs.n_vertices
    if matrix.shape[0] == dofs.n_free and dofs.n_free != n_total:
        if boundary_values is not None:
            raise ValueError("Nonzero boundary data needs the system assembled on all vertices")
        return DirichletSystem(matrix.tocsr(), np.asarray(vector, dtype=float), np.zeros(n_total))

    if callable(boundary_values):
        if mesh is None:
            raise ValueError("A boundary function needs the mesh to be interpolated")
        lifting = boundary_vector(mesh, dofs, boundary_values)
    elif boundary_values is None:
        lifting = np.zeros(n_total)
    elif np.ndim(boundary_values) == 0:
        lifting = np.zeros(n_total)
        lifting[dofs.fixed] = float(boundary_values)
    else:
        lifting = np.zeros(n_total)
        lifting[dofs.fixed] = np.asarray(boundary_values, dtype=float)[dofs.fixed]

    a_ff, a_fb = split_blocks(matrix, dofs)
    rhs = np.asarray(vector, dtype=float)[dofs.free]
    if dofs.fixed.size and np.any(lifting[dofs.fixed] != 0):
        rhs = rhs - a_fb @ lifting[dofs.fixed]
    return DirichletSystem(a_ff, rhs, lifting)


# ---------------------------------------------------------------------------
# Error norms and P1 evaluation
# ---------------------------------------------------------------------------

def error_norms(
    mesh: Mesh,
    dofs: DofMap,
    uh: np.ndarray,
    uexact: SpatialFunction,
    grad_uexact: SpatialFunction,
    boundary_values: Optional[np.ndarray] = None,
    quad: Optional[QuadratureRule] = None,
) -> Tuple[float, float]:
    """
    L2 and H1-seminorm distance between a P1 function and an exact function.

    Args:
        uh: free-dof coefficients
        uexact: u(x, y)
        grad_uexact: grad u(x, y), last axis of size 2
        boundary_values: full vertex vector supplying the eliminated entries

    Returns:
        tuple: (L2 error, H1-seminorm error)
    """
    rule = quad or triangle_rule(4)
    full = dofs.expand(uh, boundary_values)
    area, grads = element_geometry(mesh)
    local = full[mesh.elements]
    points = map_to_elements(mesh.vertices[mesh.elements], rule)
    uh_q = local @ rule.points.T
    grad_h = np.einsum("ek,ekd->ed", local, grads)
    diff = uh_q - evaluate_scalar(uexact, points[..., 0], points[..., 1])
    grad_diff = grad_h[:, None, :] - evaluate_vector(grad_uexact, points[..., 0], points[..., 1])
    weight = 2.0 * area
    l2 = np.sum(weight * (diff ** 2 @ rule.weights))
    h1 = np.sum(weight * (np.sum(grad_diff ** 2, axis=-1) @ rule.weights))
    return float(np.sqrt(l2)), float(np.sqrt(h1))


class P1Function:
    """Evaluate a P1 vertex vector at arbitrary points by element search."""

    def __init__(self, mesh: Mesh, values: np.ndarray, chunk: int = 256):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)
        self._chunk = chunk
        corners = mesh.vertices[mesh.elements]
        self._origin = corners[:, 0]
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self._inverse = np.stack([
            np.stack([e2[:, 1], -e2[:, 0]], axis=-1),
            np.stack([-e1[:, 1], e1[:, 0]], axis=-1),
        ], axis=1) / det[:, None, None]

    def locate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Containing element (-1 outside the mesh) and barycentric coordinates."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        owner = np.full(points.shape[0], -1, dtype=np.int64)
        bary = np.zeros((points.shape[0], 3))
        for start in range(0, points.shape[0], self._chunk):
            block = points[start:start + self._chunk]
            rel = block[:, None, :] - self._origin[None]
            st = np.einsum("eij,pej->pei", self._inverse, rel)
            lam = np.concatenate([1.0 - st.sum(axis=-1, keepdims=True), st], axis=-1)
            inside = (lam >= -1e-12).all(axis=-1)
            found = inside.any(axis=1)
            first = np.argmax(inside, axis=1)
            rows = np.arange(block.shape[0])
            owner[start:start + block.shape[0]] = np.where(found, first, -1)
            bary[start:start + block.shape[0]] = lam[rows, first]
        return owner, bary

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        points = np.column_stack([x.ravel(), y.ravel()])
        owner, bary = self.locate(points)
        if np.any(owner < 0):
            bad = points[np.argmax(owner < 0)]
            raise FunctionEvaluationError("Point lies outside the mesh", bad)
        nodal = self.values[self.mesh.elements[owner]]
        return np.sum(nodal * bary, axis=1).reshape(x.shape)


def write_matrix_market(matrix: csr_matrix, path) -> Path:
    """Export a symmetric matrix in MatrixMarket coordinate format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), matrix.tocoo(), symmetry="symmetric", precision=17)
    logger.info(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} matrix to {path}")
    return path
