"""Dense vector statistics and the orthogonal symmetry used to orient bounding boxes.

Vector sets are stored row-wise: an ``(m, n)`` float64 array holds ``m``
vectors of dimension ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateClusterError,
    DimensionMismatchError,
    EmptyClusterError,
    UnnormalizedDirectionError,
)

SIGN_EPS = 1e-12
ALIGNED_EPS = 1e-9
UNIT_EPS = 1e-9
EXPLICIT_COV_MAX_DIM = 64


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite components")
    return v


def as_vector_set(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatchError(f"expected an (m, n) array, got shape {X.shape}")
    if X.shape[0] == 0:
        raise EmptyClusterError()
    if not np.all(np.isfinite(X)):
        raise ValueError("vector set has non-finite components")
    return X


def centroid(data) -> np.ndarray:
    X = as_vector_set(data)
    return X.mean(axis=0)


def scatter_value(data) -> float:
    """Total squared deviation from the centroid, sum_i ||d_i - w||^2."""
    X = as_vector_set(data)
    centered = X - X.mean(axis=0)
    return float(np.einsum("ij,ij->", centered, centered))


def covariance(data) -> np.ndarray:
    """Unnormalized scatter matrix (M - w e^T)(M - w e^T)^T, shape (n, n)."""
    X = as_vector_set(data)
    centered = X - X.mean(axis=0)
    return centered.T @ centered


def normalize_sign(u: np.ndarray) -> np.ndarray:
    """Flip ``u`` so its first component with magnitude above 1e-12 is positive."""
    nz = np.flatnonzero(np.abs(u) > SIGN_EPS)
    if nz.size and u[nz[0]] < 0:
        return -u
    return u


def _start_vector(cov: np.ndarray) -> np.ndarray:
    # Repeated squaring concentrates the spectrum on the leading eigenpair, so
    # the heaviest column is a start that cannot be orthogonal to it.
    a = cov / np.trace(cov)
    for _ in range(6):
        a = a @ a
        tr = np.trace(a)
        if not np.isfinite(tr) or tr <= 0:
            break
        a /= tr
    col = int(np.argmax(np.einsum("ij,ij->j", a, a)))
    z = a[:, col]
    nrm = np.linalg.norm(z)
    if nrm == 0 or not np.isfinite(nrm):
        z = cov[:, int(np.argmax(np.diag(cov)))]
        nrm = np.linalg.norm(z)
    return z / nrm


def leading_principal_component(data, tol: float = 1e-10, max_iter: int = 300) -> np.ndarray:
    """Unit eigenvector of the scatter matrix with the largest eigenvalue.

    Power iteration. For ``n <= 64`` the ``n x n`` matrix is formed
    explicitly; above that the products go through the centered data.
    The result is sign-normalized with :func:`normalize_sign`.
    """
    X = as_vector_set(data)
    if X.shape[0] < 2:
        raise DegenerateClusterError()
    centered = X - X.mean(axis=0)
    if not np.any(centered):
        raise DegenerateClusterError()

    n = X.shape[1]
    if n <= EXPLICIT_COV_MAX_DIM:
        cov = centered.T @ centered
        matvec = cov.__matmul__
        z = _start_vector(cov)
    else:
        def matvec(y):
            return centered.T @ (centered @ y)
        row = int(np.argmax(np.einsum("ij,ij->i", centered, centered)))
        z = centered[row] / np.linalg.norm(centered[row])

    for _ in range(max_iter):
        y = matvec(z)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            raise DegenerateClusterError()
        y /= nrm
        delta = np.linalg.norm(y - z)
        z = y
        if delta < tol:
            break
    z = z / np.linalg.norm(z)
    return normalize_sign(z)


@dataclass(frozen=True, eq=False)
class Reflection:
    """Orthogonal symmetry x -> x - 2<x, v> v, or the identity when ``v`` is None.

    Built from a unit direction ``u`` it maps the first canonical axis onto
    ``u``; it is symmetric, so it also maps ``u`` back onto that axis.
    """

    v: Optional[np.ndarray] = None

    @property
    def is_identity(self) -> bool:
        return self.v is None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.v is None:
            return x
        # Elementwise products summed along the last axis give bitwise the
        # same result for a row of a set and for that row on its own (BLAS
        # matvec and dot do not), so a query equal to a stored descriptor
        # lands exactly on it in every reflected frame.
        dots = (x * self.v).sum(axis=-1)
        if x.ndim == 1:
            return x - (2.0 * dots) * self.v
        return x - (2.0 * dots)[:, None] * self.v


IDENTITY = Reflection(None)


def make_reflection(u) -> Reflection:
    u = as_vector(u)
    nrm = np.linalg.norm(u)
    if abs(nrm - 1.0) > UNIT_EPS:
        raise UnnormalizedDirectionError()
    u = u / nrm
    diff = u.copy()
    # u_1 - 1 suffers cancellation when u is close to e_1; use the
    # equivalent -(sum_{i>1} u_i^2) / (1 + u_1) there instead.
    if u[0] > 0:
        diff[0] = -float(u[1:] @ u[1:]) / (1.0 + u[0])
    else:
        diff[0] = u[0] - 1.0
    dn = np.linalg.norm(diff)
    if dn < ALIGNED_EPS:
        return IDENTITY
    return Reflection(diff / dn)


def reflect(spec: Reflection, x) -> np.ndarray:
    x = as_vector(x)
    if spec.v is not None and spec.v.shape[0] != x.shape[0]:
        raise DimensionMismatchError(
            f"reflection has dimension {spec.v.shape[0]}, vector has {x.shape[0]}")
    return spec(x)


def reflect_set(spec: Reflection, data) -> np.ndarray:
    X = as_vector_set(data)
    if spec.v is not None and spec.v.shape[0] != X.shape[1]:
        raise DimensionMismatchError(
            f"reflection has dimension {spec.v.shape[0]}, vectors have {X.shape[1]}")
    return spec(X)
