"""Dense tensor algebra on column-major numpy arrays.

Tensors are plain :class:`numpy.ndarray` objects. Every flattening in this
module uses Fortran (mode-1 fastest) order, so ``vectorize`` agrees with the
lexicographic vectorization used throughout the package. Mode indices are
zero-based here; the CLI and file formats convert from one-based indices.
"""
from __future__ import annotations

from math import prod
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

__all__ = [
    "TensorError",
    "as_tensor",
    "vectorize",
    "devectorize",
    "flat_index",
    "mode_n_matricize",
    "mode_n_fold",
    "general_matricize",
    "contracted_product",
    "mode_n_product",
    "mode_n_matrix_product",
    "outer_product",
    "identity_tensor",
    "square_matricize",
    "spectral_radius",
    "kron_all",
]

DENSE_EIG_LIMIT = 512
POWER_TOL = 1e-10
POWER_MAXITER = 10_000


class TensorError(ValueError):
    """Raised on invalid modes, partitions or dimension mismatches."""


def as_tensor(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if any(d < 1 for d in arr.shape):
        raise TensorError(f"tensor dims must be positive, got {arr.shape}")
    return arr


def _check_mode(X: np.ndarray, n: int) -> None:
    if not 0 <= n < X.ndim:
        raise TensorError(f"mode {n} out of range for order-{X.ndim} tensor")


def vectorize(X) -> np.ndarray:
    """Column-major vectorization, ``vec(X)``."""
    return np.asarray(X, dtype=float).reshape(-1, order="F")


def devectorize(x, dims: Sequence[int]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    dims = tuple(int(d) for d in dims)
    if x.size != prod(dims):
        raise TensorError(f"vector of length {x.size} cannot hold dims {dims}")
    return x.reshape(dims, order="F")


def flat_index(index: Sequence[int], dims: Sequence[int]) -> int:
    """Zero-based flat position of ``index`` in ``vec`` of a tensor of ``dims``."""
    if len(index) != len(dims):
        raise TensorError("index and dims have different lengths")
    k, stride = 0, 1
    for i, d in zip(index, dims):
        if not 0 <= i < d:
            raise TensorError(f"index {tuple(index)} out of range for dims {tuple(dims)}")
        k += i * stride
        stride *= d
    return k


def mode_n_matricize(X, n: int) -> np.ndarray:
    """Mode-n unfolding ``X_(n)`` of shape ``I_n x prod_{i != n} I_i``.

    Columns are the mode-n fibers, ordered with the remaining modes in
    ascending order and the lowest mode varying fastest.
    """
    X = np.asarray(X, dtype=float)
    _check_mode(X, n)
    return np.moveaxis(X, n, 0).reshape(X.shape[n], -1, order="F")


def mode_n_fold(M, n: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`mode_n_matricize`."""
    dims = tuple(dims)
    rest = dims[:n] + dims[n + 1:]
    return np.moveaxis(np.asarray(M).reshape((dims[n],) + rest, order="F"), 0, n)


def general_matricize(X, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    """Matricize with modes ``rows`` mapped to rows and ``cols`` to columns.

    Within each set the first listed mode varies fastest.
    """
    X = np.asarray(X, dtype=float)
    rows, cols = list(rows), list(cols)
    if not rows or not cols:
        raise TensorError("row and column mode sets must be nonempty")
    if sorted(rows + cols) != list(range(X.ndim)):
        raise TensorError(
            f"rows {rows} and cols {cols} do not partition the modes of an order-{X.ndim} tensor"
        )
    nr = prod(X.shape[i] for i in rows)
    return X.transpose(rows + cols).reshape(nr, -1, order="F")


def contracted_product(X, Y, n_contract: int) -> np.ndarray | float:
    """Contract the trailing ``n_contract`` modes of X with the leading ones of Y.

    Returns a float when every mode is contracted (the inner product).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if n_contract < 0 or n_contract > min(X.ndim, Y.ndim):
        raise TensorError(f"cannot contract {n_contract} modes of orders {X.ndim}, {Y.ndim}")
    xs = X.shape[X.ndim - n_contract:]
    ys = Y.shape[:n_contract]
    if xs != ys:
        raise TensorError(f"contracted dims differ: {xs} vs {ys}")
    out = np.tensordot(X, Y, axes=n_contract)
    if out.ndim == 0:
        return float(out)
    return out


def mode_n_product(X, v, n: int) -> np.ndarray:
    """Contract mode ``n`` of X against vector ``v``; mode n is removed."""
    X = np.asarray(X, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_mode(X, n)
    if v.ndim != 1 or v.shape[0] != X.shape[n]:
        raise TensorError(f"vector of length {v.shape} does not match mode {n} of dims {X.shape}")
    return np.tensordot(X, v, axes=([n], [0]))


def mode_n_matrix_product(X, M, n: int) -> np.ndarray:
    """``X x_n M``: replace mode ``n`` by ``M @ fiber`` (M has shape J x I_n)."""
    X = np.asarray(X, dtype=float)
    M = np.asarray(M, dtype=float)
    _check_mode(X, n)
    if M.ndim != 2 or M.shape[1] != X.shape[n]:
        raise TensorError(f"matrix {M.shape} does not match mode {n} of dims {X.shape}")
    return np.moveaxis(np.tensordot(M, X, axes=([1], [n])), 0, n)


def outer_product(X, Y) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return np.multiply.outer(X, Y)


def identity_tensor(dims: Sequence[int]) -> np.ndarray:
    """Neutral element of the N-mode contracted product, dims ``dims + dims``."""
    dims = tuple(dims)
    n = prod(dims)
    return np.eye(n).reshape(dims + dims, order="F")


def square_matricize(A) -> np.ndarray:
    """``mat_(1:N, N+1:2N)`` of an order-2N tensor with matching halves."""
    A = np.asarray(A, dtype=float)
    if A.ndim % 2 or A.ndim == 0:
        raise TensorError(f"expected an even-order tensor, got order {A.ndim}")
    N = A.ndim // 2
    if A.shape[:N] != A.shape[N:]:
        raise TensorError(f"tensor dims {A.shape} are not square over first/last {N} modes")
    n = prod(A.shape[:N])
    return A.reshape(n, n, order="F")


def spectral_radius(A) -> float:
    """Largest eigenvalue modulus of a square order-2N tensor (or a square matrix)."""
    M = square_matricize(A)
    if M.shape[0] <= DENSE_EIG_LIMIT:
        if not np.any(M):
            return 0.0
        return float(np.max(np.abs(scipy.linalg.eigvals(M))))
    vals = scipy.sparse.linalg.eigs(
        M, k=1, which="LM", tol=POWER_TOL, maxiter=POWER_MAXITER, return_eigenvectors=False
    )
    return float(np.abs(vals[0]))


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    """``mats[-1] kron ... kron mats[0]``, the covariance ordering of vec."""
    out = np.ones((1, 1))
    for M in mats:
        out = np.kron(np.atleast_2d(M), out)
    return out
