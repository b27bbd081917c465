"""
Quadrature rules on the reference triangle and the reference segment.

Triangle rules use barycentric points with weights summing to 1/2, the
area of the reference triangle; segment rules live on [0, 1] with weights
summing to 1.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int
    cell: str

    @property
    def n_points(self) -> int:
        return int(self.weights.shape[0])


def _orbit(a: float, b: float, c: float):
    return sorted(set(permutations((a, b, c))))


def _triangle_rule(groups, degree: int) -> QuadratureRule:
    points, weights = [], []
    for weight, coords in groups:
        orbit = _orbit(*coords)
        points.extend(orbit)
        weights.extend([weight] * len(orbit))
    points = np.array(points, dtype=float)
    weights = 0.5 * np.array(weights, dtype=float)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree, "triangle")


# Symmetric rules; weights are relative to the triangle area.
_TRIANGLE_GROUPS = {
    1: [(1.0, (1 / 3, 1 / 3, 1 / 3))],
    2: [(1 / 3, (2 / 3, 1 / 6, 1 / 6))],
    4: [
        (0.223381589678011, (0.108103018168070, 0.445948490915965, 0.445948490915965)),
        (0.109951743655322, (0.816847572980459, 0.091576213509771, 0.091576213509771)),
    ],
    6: [
        (0.116786275726379, (0.501426509658179, 0.249286745170910, 0.249286745170910)),
        (0.050844906370207, (0.873821971016996, 0.063089014491502, 0.063089014491502)),
        (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399)),
    ],
}


@lru_cache(maxsize=None)
def triangle_rule(degree: int = 4) -> QuadratureRule:
    """Smallest tabulated symmetric rule exact for polynomials of the given degree."""
    for available in sorted(_TRIANGLE_GROUPS):
        if available >= degree:
            return _triangle_rule(_TRIANGLE_GROUPS[available], available)
    raise ValueError(f"No triangle rule of degree {degree} (max {max(_TRIANGLE_GROUPS)})")


@lru_cache(maxsize=None)
def segment_rule(n_points: int = 3) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact to degree 2n-1."""
    nodes, weights = np.polynomial.legendre.leggauss(n_points)
    points = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, 2 * n_points - 1, "segment")


def map_to_elements(corners: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points, shape (ne, nq, 2), for corners of shape (ne, 3, 2)."""
    return np.einsum("qk,ekd->eqd", rule.points, corners)


def subdivide(corners: np.ndarray, levels: int) -> np.ndarray:
    """Split every triangle into 4**levels congruent children, shape (ne, 4**levels, 3, 2)."""
    children = corners[:, None]
    for _ in range(levels):
        a, b, c = children[..., 0, :], children[..., 1, :], children[..., 2, :]
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        children = np.concatenate([
            np.stack([a, ab, ca], axis=-2),
            np.stack([ab, b, bc], axis=-2),
            np.stack([ca, bc, c], axis=-2),
            np.stack([ab, bc, ca], axis=-2),
        ], axis=1)
    return children
