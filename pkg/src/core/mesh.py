"""
Interface-fitted triangulations of a square domain with a circular interface.

The generator starts from a uniform grid of (-a, a)^2, replaces the grid
vertices in a thin band around the circle |x| = r0 by equally spaced vertices
on the circle, and triangulates the disc side and the outer side separately.
The resulting mesh satisfies the usual fitting conditions: elements cover the
square, intersect conformingly, and each element has all three vertices in
the closure of a single subdomain.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from scipy import spatial

from ..utils.constants import AREA_TOLERANCE, DEFAULT_MIN_ANGLE, INTERFACE_TOLERANCE, MIN_INTERFACE_NODES
from .errors import (
    GeometryError,
    InterfaceResolutionError,
    MeshQualityError,
    SnappingError,
)

logger = logging.getLogger(__name__)

INNER = 1
OUTER = 2

_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass(frozen=True)
class GeometrySpec:
    """Square (-a, a)^2 with a circle of radius r0 centered at the origin."""

    half_width: float
    interface_radius: float

    def __post_init__(self):
        a = float(self.half_width)
        r0 = float(self.interface_radius)
        if not np.isfinite(a) or a <= 0:
            raise GeometryError(f"half_width must be positive, got {self.half_width!r}")
        if not np.isfinite(r0) or r0 <= 0:
            raise GeometryError(f"interface_radius must be positive, got {self.interface_radius!r}")
        if r0 >= a:
            raise GeometryError(
                f"interface_radius {r0} must be smaller than half_width {a} "
                "(the inner subdomain must lie strictly inside the square)"
            )
        object.__setattr__(self, "half_width", a)
        object.__setattr__(self, "interface_radius", r0)

    @property
    def domain_area(self) -> float:
        return 4.0 * self.half_width ** 2

    @property
    def inner_area(self) -> float:
        return float(np.pi * self.interface_radius ** 2)


@dataclass(frozen=True)
class Mesh:
    """
    Immutable triangulation.

    Attributes:
        vertices: (nv, 2) coordinates
        elements: (ne, 3) vertex indices, counterclockwise
        tags: (ne,) subdomain tag, 1 inside the circle and 2 outside
        boundary: (nv,) True for vertices on the square boundary
        interface_edges: (ng, 2) vertex pairs forming the polygonal interface
        geometry: the geometry the mesh was built for, if known
    """

    vertices: np.ndarray
    elements: np.ndarray
    tags: np.ndarray
    boundary: np.ndarray
    interface_edges: np.ndarray
    geometry: Optional[GeometrySpec] = None

    def __post_init__(self):
        arrays = {
            "vertices": np.array(self.vertices, dtype=float).reshape(-1, 2),
            "elements": np.array(self.elements, dtype=np.int64).reshape(-1, 3),
            "tags": np.array(self.tags, dtype=np.int64).reshape(-1),
            "boundary": np.array(self.boundary, dtype=bool).reshape(-1),
            "interface_edges": np.array(self.interface_edges, dtype=np.int64).reshape(-1, 2),
        }
        for name, value in arrays.items():
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if self.tags.shape[0] != self.elements.shape[0]:
            raise ValueError("tags must have one entry per element")
        if self.boundary.shape[0] != self.vertices.shape[0]:
            raise ValueError("boundary flags must have one entry per vertex")

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @cached_property
    def signed_areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.elements)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        return edge_table(self.elements)[0]

    @cached_property
    def mesh_size_h(self) -> float:
        """Longest edge length."""
        p = self.vertices[self.edges]
        return float(np.max(np.hypot(*(p[:, 1] - p[:, 0]).T)))

    @cached_property
    def min_angles(self) -> np.ndarray:
        """Minimum interior angle of every element, in degrees."""
        return element_angles(self.vertices, self.elements).min(axis=1)


@dataclass(frozen=True)
class Violation:
    kind: str
    elements: Tuple[int, ...]
    message: str


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def kinds(self) -> List[str]:
        return sorted({v.kind for v in self.violations})

    def messages(self) -> List[str]:
        return [f"[{v.kind}] {v.message}" for v in self.violations]


@dataclass(frozen=True)
class MeshStatistics:
    h: float
    interface_resolution: Optional[float]
    min_angle: float
    n_vertices: int
    n_boundary_vertices: int
    n_elements: int
    n_inner_elements: int
    n_outer_elements: int
    n_interface_edges: int


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------

def signed_areas(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = vertices[elements]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def element_angles(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Interior angles in degrees, shape (ne, 3)."""
    p = vertices[elements]
    angles = np.empty(elements.shape, dtype=float)
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        dot = np.einsum("ij,ij->i", u, v)
        angles[:, k] = np.degrees(np.arctan2(cross, dot))
    return angles


def edge_table(elements: np.ndarray):
    """
    Unique edges of a triangulation.

    Returns:
        tuple: (edges (m, 2) sorted pairs, element_edges (ne, 3) indices into
        edges, counts (m,) number of elements sharing each edge)
    """
    local = np.sort(elements[:, _LOCAL_EDGES].reshape(-1, 2), axis=1)
    base = int(elements.max()) + 1 if elements.size else 1
    keys = local[:, 0] * base + local[:, 1]
    unique_keys, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    edges = np.column_stack([unique_keys // base, unique_keys % base])
    return edges, inverse.reshape(-1, 3), counts


def edge_elements(elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Edges with up to two adjacent elements each (-1 where missing)."""
    edges, element_edges, counts = edge_table(elements)
    adjacent = np.full((edges.shape[0], 2), -1, dtype=np.int64)
    flat = element_edges.reshape(-1)
    order = np.argsort(flat, kind="stable")
    owners = order // 3
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    adjacent[:, 0] = owners[starts]
    has_second = counts >= 2
    adjacent[has_second, 1] = owners[starts[has_second] + 1]
    return edges, adjacent


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

# Half-widths (in grid spacings) of the band of grid vertices absorbed by the
# interface, and angular offsets (in node spacings) of the interface nodes,
# in the order they are tried.
_BAND_WIDTHS = (0.5, 0.4, 0.6, 0.45, 0.55, 0.35, 0.65)
_NODE_OFFSETS = (0.0, 0.5)
_QHULL_OPTIONS = "Qbb Qc Qz Q12 Qt"


def _grid(spec: GeometrySpec, n: int):
    coords = np.linspace(-spec.half_width, spec.half_width, n + 1)
    x, y = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([x.ravel(), y.ravel()])
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    i, j = i.ravel(), j.ravel()
    boundary = (i == 0) | (i == n) | (j == 0) | (j == n)
    return vertices, boundary


def interface_node_count(spec: GeometrySpec, n: int) -> int:
    """Smallest number of equally spaced interface vertices whose spacing does not exceed 2a/n."""
    h = 2.0 * spec.half_width / n
    return max(MIN_INTERFACE_NODES, int(np.ceil(2.0 * np.pi * spec.interface_radius / h - 1e-9)))


def _interface_nodes(radius: float, count: int, offset: float) -> np.ndarray:
    theta = 2.0 * np.pi * (np.arange(count) + offset) / count
    nodes = np.column_stack([np.cos(theta), np.sin(theta)])
    return nodes / np.hypot(nodes[:, 0], nodes[:, 1])[:, None] * radius


def _delaunay(points: np.ndarray) -> Optional[np.ndarray]:
    """Delaunay triangles of a point set, or None when qhull drops a point."""
    triangulation = spatial.Delaunay(points, qhull_options=_QHULL_OPTIONS)
    if len(triangulation.coplanar):
        return None
    return triangulation.simplices


def _fit_interface(grid, grid_boundary, spec: GeometrySpec, h: float, count: int, band: float, offset: float):
    """
    Replace the grid vertices within band * h of the circle by interface nodes.

    The disc side and the outer side are triangulated separately. The nodes
    are in convex position, so every chord of the interface polygon is a hull
    edge of the inner point set; the circle itself is empty of outer points,
    so every chord is also a Delaunay edge of the outer point set. Outer
    triangles spanned by three nodes fill the polygon and are dropped.

    Returns:
        tuple: (vertices, elements, tags, boundary) or None if qhull dropped a point
    """
    radius = spec.interface_radius
    distance = np.hypot(grid[:, 0], grid[:, 1]) - radius
    keep = grid_boundary | (np.abs(distance) >= band * h)
    inner_grid = np.flatnonzero(keep & (distance < 0))
    outer_grid = np.flatnonzero(keep & (distance > 0))

    parts = [grid[inner_grid], grid[outer_grid], _interface_nodes(radius, count, offset)]
    if inner_grid.size == 0:
        parts.append(np.zeros((1, 2)))
    vertices = np.vstack(parts)
    boundary = np.zeros(vertices.shape[0], dtype=bool)
    n_in, n_out = inner_grid.size, outer_grid.size
    boundary[n_in:n_in + n_out] = grid_boundary[outer_grid]

    nodes = np.arange(n_in + n_out, n_in + n_out + count)
    inner_ids = np.concatenate([np.arange(n_in), nodes, np.arange(n_in + n_out + count, vertices.shape[0])])
    outer_ids = np.concatenate([np.arange(n_in, n_in + n_out), nodes])

    inner = _delaunay(vertices[inner_ids])
    outer = _delaunay(vertices[outer_ids])
    if inner is None or outer is None:
        return None
    inner = inner_ids[inner]
    outer = outer_ids[outer]
    on_circle = np.zeros(vertices.shape[0], dtype=bool)
    on_circle[nodes] = True
    outer = outer[~on_circle[outer].all(axis=1)]

    elements = np.vstack([inner, outer]).astype(np.int64)
    tags = np.concatenate([np.full(inner.shape[0], INNER), np.full(outer.shape[0], OUTER)])
    flip = signed_areas(vertices, elements) < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]
    return vertices, elements, tags, boundary


def _interface_edges(elements, tags):
    edges, adjacent = edge_elements(elements)
    shared = adjacent[:, 1] >= 0
    left = tags[adjacent[:, 0]]
    right = np.where(shared, tags[np.maximum(adjacent[:, 1], 0)], left)
    return edges[shared & (left != right)]


def generate_mesh(spec: GeometrySpec, n: int, min_angle: float = DEFAULT_MIN_ANGLE) -> Mesh:
    """
    Generate an interface-fitted mesh of the square.

    Grid vertices close to the circle are absorbed by interface_node_count
    equally spaced interface vertices; the rest of the uniform grid is kept.
    Band widths and node offsets are tried in a fixed order and the first
    fitting whose elements all meet min_angle is returned.

    Args:
        spec: domain and interface geometry
        n: grid subdivisions per side (grid spacing 2a/n)
        min_angle: quality threshold in degrees

    Returns:
        Mesh: validated, immutable mesh

    Raises:
        GeometryError: n too small
        SnappingError: no candidate produced a conforming fitted triangulation
        MeshQualityError: every candidate has an element below min_angle
    """
    if int(n) != n or n < 2:
        raise GeometryError(f"Subdivision count must be an integer >= 2, got {n!r}")
    n = int(n)
    h = 2.0 * spec.half_width / n
    count = interface_node_count(spec, n)
    grid, grid_boundary = _grid(spec, n)

    best = None
    attempts = 0
    for offset, band in itertools.product(_NODE_OFFSETS, _BAND_WIDTHS):
        attempts += 1
        fitted = _fit_interface(grid, grid_boundary, spec, h, count, band, offset)
        if fitted is None:
            logger.debug(f"n={n} band={band} offset={offset}: qhull dropped a point")
            continue
        vertices, elements, tags, boundary = fitted
        areas = signed_areas(vertices, elements)
        interface = _interface_edges(elements, tags)
        if interface.shape[0] != count or abs(areas.sum() - spec.domain_area) > AREA_TOLERANCE * spec.domain_area:
            logger.debug(f"n={n} band={band} offset={offset}: triangulation does not conform to the interface")
            continue
        angles = element_angles(vertices, elements).min(axis=1)
        angles[areas <= 0] = 0.0
        worst = int(np.argmin(angles))
        if best is None or angles[worst] > best[0]:
            best = (float(angles[worst]), worst, fitted, interface, band)
        if angles[worst] >= min_angle:
            break

    if best is None:
        raise SnappingError(
            f"The interface could not be fitted into the n={n} grid",
            iterations=attempts,
            suggestion="use a larger subdivision count n",
        )
    angle, worst, (vertices, elements, tags, boundary), interface, band = best
    if angle < min_angle:
        raise MeshQualityError(worst, angle, float(min_angle))

    mesh = Mesh(vertices, elements, tags, boundary, interface, geometry=spec)
    logger.info(
        f"Generated mesh n={n}: {mesh.n_vertices} vertices, {mesh.n_elements} elements, "
        f"{interface.shape[0]} interface edges, band {band} h, min angle {angle:.1f} deg"
    )
    return mesh


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

def sagitta(chord_length, radius: float):
    """Distance between a circular arc and its chord."""
    half2 = 0.25 * np.asarray(chord_length, dtype=float) ** 2
    return half2 / (radius + np.sqrt(np.maximum(radius ** 2 - half2, 0.0)))


def interface_resolution(mesh: Mesh, spec: Optional[GeometrySpec] = None) -> float:
    """
    Maximal distance between the circle and the polygonal interface.

    Raises:
        InterfaceResolutionError: the mesh has no interface edges
    """
    spec = spec or mesh.geometry
    if spec is None:
        raise GeometryError("interface_resolution needs a GeometrySpec")
    if mesh.interface_edges.shape[0] == 0:
        raise InterfaceResolutionError("Mesh has no interface edges; it does not resolve the interface")
    p = mesh.vertices[mesh.interface_edges]
    lengths = np.hypot(*(p[:, 1] - p[:, 0]).T)
    return float(np.max(sagitta(lengths, spec.interface_radius)))


def polygonal_interface_length(mesh: Mesh) -> float:
    p = mesh.vertices[mesh.interface_edges]
    return float(np.sum(np.hypot(*(p[:, 1] - p[:, 0]).T)))


def subdomain_area(mesh: Mesh, tag: int) -> float:
    return float(np.sum(mesh.signed_areas[mesh.tags == tag]))


def mesh_statistics(mesh: Mesh) -> MeshStatistics:
    resolution = None
    if mesh.geometry is not None and mesh.interface_edges.shape[0]:
        resolution = interface_resolution(mesh)
    return MeshStatistics(
        h=mesh.mesh_size_h,
        interface_resolution=resolution,
        min_angle=float(mesh.min_angles.min()),
        n_vertices=mesh.n_vertices,
        n_boundary_vertices=int(mesh.boundary.sum()),
        n_elements=mesh.n_elements,
        n_inner_elements=int(np.sum(mesh.tags == INNER)),
        n_outer_elements=int(np.sum(mesh.tags == OUTER)),
        n_interface_edges=int(mesh.interface_edges.shape[0]),
    )


def infer_geometry(vertices: np.ndarray, interface_edges: np.ndarray) -> Optional[GeometrySpec]:
    """Recover the GeometrySpec of a mesh read from disk."""
    if interface_edges.size == 0:
        return None
    half_width = float(np.max(np.abs(vertices)))
    ends = np.unique(interface_edges)
    radius = float(np.mean(np.hypot(vertices[ends, 0], vertices[ends, 1])))
    return GeometrySpec(half_width, radius)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _on_square_boundary(points: np.ndarray, lo: np.ndarray, hi: np.ndarray, tol: float) -> np.ndarray:
    return (
        (np.abs(points[:, 0] - lo[0]) <= tol) | (np.abs(points[:, 0] - hi[0]) <= tol)
        | (np.abs(points[:, 1] - lo[1]) <= tol) | (np.abs(points[:, 1] - hi[1]) <= tol)
    )


def _boundary_edge_mask(points_a, points_b, lo, hi, tol):
    """Edges lying on one side of the bounding square."""
    same_side = np.zeros(points_a.shape[0], dtype=bool)
    for axis in (0, 1):
        for bound in (lo[axis], hi[axis]):
            same_side |= (np.abs(points_a[:, axis] - bound) <= tol) & (np.abs(points_b[:, axis] - bound) <= tol)
    return same_side


def validate_mesh(mesh: Mesh, min_angle: float = DEFAULT_MIN_ANGLE) -> ValidationReport:
    """
    Check covering, conformity, subdomain consistency, orientation and quality.

    Violations are collected, never raised.
    """
    report = ValidationReport()
    add = report.violations.append
    vertices, elements = mesh.vertices, mesh.elements
    geometry = mesh.geometry

    if geometry is not None:
        lo = np.array([-geometry.half_width, -geometry.half_width])
        hi = -lo
    else:
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    extent = float(np.max(hi - lo))
    tol = 1e-12 * extent

    areas = mesh.signed_areas
    for e in np.flatnonzero(areas <= 0):
        add(Violation("orientation", (int(e),), f"Element {e} has signed area {areas[e]:.3e}"))

    domain_area = float(np.prod(hi - lo))
    covered = float(np.sum(np.abs(areas)))
    if abs(covered - domain_area) > AREA_TOLERANCE * domain_area:
        add(Violation("T1", (), f"Element areas sum to {covered:.15g}, domain area is {domain_area:.15g}"))

    flagged = np.flatnonzero(mesh.boundary)
    off = flagged[~_on_square_boundary(vertices[flagged], lo, hi, tol)]
    for v in off:
        add(Violation("T1", (), f"Boundary vertex {v} at {tuple(vertices[v])} is not on the domain boundary"))

    edges, adjacent = edge_elements(elements)
    counts = (adjacent >= 0).sum(axis=1)
    _, _, raw_counts = edge_table(elements)
    for k in np.flatnonzero(raw_counts > 2):
        add(Violation("T2", (), f"Edge {tuple(edges[k])} is shared by {raw_counts[k]} elements"))
    single = np.flatnonzero(counts == 1)
    on_boundary = _boundary_edge_mask(vertices[edges[single, 0]], vertices[edges[single, 1]], lo, hi, tol)
    for k in single[~on_boundary]:
        add(Violation(
            "T2", (int(adjacent[k, 0]),),
            f"Interior edge {tuple(edges[k])} belongs to element {adjacent[k, 0]} only (hanging node or gap)",
        ))

    if geometry is not None:
        radius = geometry.interface_radius
        r = np.hypot(vertices[:, 0], vertices[:, 1])
        slack = INTERFACE_TOLERANCE * radius
        strictly_in = r < radius - slack
        strictly_out = r > radius + slack
        bad_inner = (mesh.tags == INNER) & strictly_out[elements].any(axis=1)
        bad_outer = (mesh.tags == OUTER) & strictly_in[elements].any(axis=1)
        for e in np.flatnonzero(bad_inner | bad_outer):
            add(Violation("T3", (int(e),), f"Element {e} (tag {mesh.tags[e]}) has a vertex in the other subdomain"))
        for e in np.flatnonzero((mesh.tags != INNER) & (mesh.tags != OUTER)):
            add(Violation("T3", (int(e),), f"Element {e} has unknown tag {mesh.tags[e]}"))
        if mesh.interface_edges.size:
            ends = mesh.interface_edges.reshape(-1)
            off_circle = np.abs(r[ends] - radius) > slack
            for v in np.unique(ends[off_circle]):
                add(Violation("interface", (), f"Interface vertex {v} lies at radius {r[v]!r}, not {radius!r}"))

    angles = mesh.min_angles
    for e in np.flatnonzero(angles < min_angle):
        add(Violation("quality", (int(e),), f"Element {e} has minimum angle {angles[e]:.2f} deg (< {min_angle})"))

    return report
