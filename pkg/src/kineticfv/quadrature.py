"""Gauss quadrature on segments and triangles.

Triangle rules are conical (collapsed) products of a Gauss-Jacobi rule and a
Gauss-Legendre rule, so any polynomial degree can be generated on demand
without hand-copied coefficient tables.  The collapse sits at the first
corner, which makes each rule invariant under swapping the other two corners:
mirror-image polygons then get mirror-image fan quadrature points.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


class QuadratureError(ValueError):
    """Raised for an unsupported quadrature degree."""


def _check_degree(degree: int) -> int:
    if int(degree) != degree or degree < 1:
        raise QuadratureError(f"quadrature degree must be a positive integer, got {degree}")
    if degree > MAX_DEGREE:
        raise QuadratureError(f"quadrature degree {degree} exceeds the supported maximum {MAX_DEGREE}")
    return int(degree)


@lru_cache(maxsize=None)
def gauss_legendre_unit(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1], exact up to ``degree``.

    Weights sum to one.
    """
    degree = _check_degree(degree)
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the reference triangle (0,0), (1,0), (0,1).

    Returns
    -------
    points : (n, 2) array
        Cartesian coordinates in the reference triangle.
    weights : (n,) array
        Area fractions (they sum to one).
    """
    degree = _check_degree(degree)
    n = degree // 2 + 1
    # radial coordinate from corner 0 carries the Jacobian weight r
    xj, wj = roots_jacobi(n, 0.0, 1.0)
    r = 0.5 * (xj + 1.0)
    wr = wj / 4.0
    xl, wl = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (xl + 1.0)
    wt = 0.5 * wl
    rr, tt = np.meshgrid(r, t, indexing="ij")
    pts = np.column_stack([(rr * (1.0 - tt)).ravel(), (rr * tt).ravel()])
    wts = np.outer(wr, wt).ravel() * 2.0
    return pts, wts


def map_triangle_rule(corners: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Map the reference rule onto triangles.

    Parameters
    ----------
    corners : (..., 3, 2) array
        Triangle vertices.  Orientation sets the sign of the weights, so a
        fan of signed sub-triangles still integrates a polygon exactly.
    degree : int
        Polynomial exactness.

    Returns
    -------
    points : (..., n, 2) array
    weights : (..., n) array
        Physical weights, summing to the signed area of each triangle.
    """
    ref, w = triangle_rule(degree)
    a = corners[..., 0, :]
    e1 = corners[..., 1, :] - a
    e2 = corners[..., 2, :] - a
    pts = a[..., None, :] + ref[:, 0, None] * e1[..., None, :] + ref[:, 1, None] * e2[..., None, :]
    signed_area = 0.5 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
    return pts, signed_area[..., None] * w


def map_segment_rule(p0: np.ndarray, p1: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on segments ``p0 -> p1``; weights sum to the length."""
    s, w = gauss_legendre_unit(degree)
    d = p1 - p0
    pts = p0[..., None, :] + s[:, None] * d[..., None, :]
    length = np.hypot(d[..., 0], d[..., 1])
    return pts, length[..., None] * w
