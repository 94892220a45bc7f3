"""Hypersphere primitives: unit vectors, metrics, uniform draws, plane rotations.

Unit vectors are plain 1-D float64 arrays. Functions that promise sphere
membership return arrays whose L2 norm is 1 to within 1e-12.
"""

import math
from typing import NamedTuple

import numpy as np

from .errors import DegeneratePlane, DimMismatch, ZeroVector

ZERO_NORM = 1e-12
COLLINEAR_TOL = 1e-9
ORTHO_TOL = 1e-9
MATRIX_PATH_MAX_DIM = 64


class PlaneBasis(NamedTuple):
    b1: np.ndarray
    b2: np.ndarray


def _vec(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise DimMismatch(f"expected a vector with dim >= 2, got shape {v.shape}")
    return v


def _same_dim(x, y):
    if x.shape != y.shape:
        raise DimMismatch(f"dimension mismatch: {x.shape} vs {y.shape}")


def normalize(v):
    v = _vec(v)
    n = np.linalg.norm(v)
    if n < ZERO_NORM:
        raise ZeroVector("cannot normalize a (near) zero vector")
    return v / n


def normalize_rows(m):
    m = np.asarray(m, dtype=np.float64)
    n = np.linalg.norm(m, axis=-1, keepdims=True)
    if np.any(n < ZERO_NORM):
        raise ZeroVector("cannot normalize a (near) zero row")
    return m / n


def angular_distance(x, y):
    """Angle in radians between two unit vectors, in [0, pi]."""
    x, y = _vec(x), _vec(y)
    _same_dim(x, y)
    return float(np.arccos(np.clip(x @ y, -1.0, 1.0)))


def angular_distances(xs, ys):
    """Row-wise angles between two stacks of unit vectors."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape[-1] != ys.shape[-1]:
        raise DimMismatch(f"dimension mismatch: {xs.shape} vs {ys.shape}")
    return np.arccos(np.clip(np.sum(xs * ys, axis=-1), -1.0, 1.0))


def euclidean_distance(x, y):
    x, y = _vec(x), _vec(y)
    _same_dim(x, y)
    return float(np.linalg.norm(x - y))


def uniform_sample(dim, rng, size=None):
    """Uniform direction(s) on S^{dim-1} from normalized Gaussian draws."""
    if dim < 2:
        raise DimMismatch("dim must be >= 2")
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    # Zero draws have probability zero; redraw them anyway.
    bad = (n < ZERO_NORM).reshape(-1)
    while np.any(bad):
        if size is None:
            g = rng.standard_normal(shape)
        else:
            g[bad] = rng.standard_normal((int(bad.sum()), dim))
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        bad = (n < ZERO_NORM).reshape(-1)
    return g / n


def orthonormal_pair(x, z, method="gram-schmidt"):
    """Orthonormal basis (b1, b2) of span{x, z}.

    ``method`` is "gram-schmidt" (default, O(dim), b1 = x) or "svd" (left
    singular vectors of the dim x 2 matrix [x z]). Both bases span the same
    plane; a rotation built from either differs at most in orientation.
    """
    x, z = _vec(x), _vec(z)
    _same_dim(x, z)
    x = x / np.linalg.norm(x)
    zn = np.linalg.norm(z)
    if zn < ZERO_NORM:
        raise ZeroVector("z is a zero vector")
    z = z / zn
    if abs(x @ z) > 1.0 - COLLINEAR_TOL:
        raise DegeneratePlane("x and z are collinear")

    if method == "gram-schmidt":
        b1 = x
        r = z - (b1 @ z) * b1
        r -= (b1 @ r) * b1  # second pass
        b2 = r / np.linalg.norm(r)
    elif method == "svd":
        u, _, _ = np.linalg.svd(np.column_stack([x, z]), full_matrices=False)
        b1 = u[:, 0] / np.linalg.norm(u[:, 0])
        b2 = u[:, 1] / np.linalg.norm(u[:, 1])
    else:
        raise ValueError(f"unknown method {method!r}")

    if abs(b1 @ b2) >= ORTHO_TOL:
        raise DegeneratePlane("basis failed orthogonality verification")
    return PlaneBasis(b1, b2)


def rotate_in_plane(x, basis, theta):
    """Rotate ``x`` by ``theta`` radians inside the plane of ``basis``.

    Applies R = I + (b2 b1^T - b1 b2^T) sin(theta)
    + (b1 b1^T + b2 b2^T)(cos(theta) - 1) through the two inner products
    <b1, x> and <b2, x>, never forming R.
    """
    x = _vec(x)
    b1, b2 = basis
    p1, p2 = b1 @ x, b2 @ x
    s, c = math.sin(theta), math.cos(theta)
    out = x + b2 * (p1 * s) - b1 * (p2 * s) + (b1 * p1 + b2 * p2) * (c - 1.0)
    return out / np.linalg.norm(out)


def rotation_matrix(basis, theta):
    """Dense rotation matrix; a cross-check path for small dims only."""
    b1, b2 = basis
    n = b1.shape[0]
    if n > MATRIX_PATH_MAX_DIM:
        raise ValueError(f"dense rotation limited to dim <= {MATRIX_PATH_MAX_DIM}")
    return (
        np.eye(n)
        + (np.outer(b2, b1) - np.outer(b1, b2)) * math.sin(theta)
        + (np.outer(b1, b1) + np.outer(b2, b2)) * (math.cos(theta) - 1.0)
    )


def rotate_rows(xs, zs, theta):
    """Batch rotation of unit rows ``xs`` toward the random rows ``zs``.

    Equivalent to ``rotate_in_plane(x, orthonormal_pair(x, z), theta)`` per
    row. Returns the rotated rows and a boolean mask of rows whose (x, z)
    pair was degenerate; those rows are left as NaN for the caller to redraw.
    """
    xs = np.asarray(xs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    zs = zs / np.linalg.norm(zs, axis=1, keepdims=True)
    dots = np.sum(xs * zs, axis=1)
    degenerate = np.abs(dots) > 1.0 - COLLINEAR_TOL
    r = zs - dots[:, None] * xs
    r -= np.sum(xs * r, axis=1)[:, None] * xs
    with np.errstate(invalid="ignore", divide="ignore"):
        b2 = r / np.linalg.norm(r, axis=1, keepdims=True)
        # With b1 = x: R x = x cos(theta) + b2 sin(theta).
        out = xs * math.cos(theta) + b2 * math.sin(theta)
        out /= np.linalg.norm(out, axis=1, keepdims=True)
    out[degenerate] = np.nan
    return out, degenerate


def log_unit_sphere_area(dim):
    """ln of the surface area 2 pi^(n/2) / Gamma(n/2) of S^{dim-1}."""
    if dim < 2:
        raise DimMismatch("dim must be >= 2")
    return math.log(2.0) + 0.5 * dim * math.log(math.pi) - math.lgamma(0.5 * dim)
