"""ART(p) models: simulation, VAR form, companion form and stationarity."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np
import scipy.linalg

from .distributions import TensorNormalParams, cholesky, tensor_normal_sample, vec_covariance
from .parafac import ParafacCoefficient, reconstruct
from .tensor import TensorError, devectorize, identity_tensor, mode_n_matricize, mode_n_product, spectral_radius, vectorize

__all__ = [
    "ArtModel",
    "TensorSeries",
    "VarModel",
    "simulate",
    "to_var",
    "companion_form",
    "check_stationarity",
    "ma_coefficients",
    "lyapunov_covariance",
    "coef_from_var_matrix",
]

LYAPUNOV_TOL = 1e-12


def coef_from_var_matrix(A: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Mode-(N+1) coefficient tensor whose VAR matrix ``mat_{N+1}(.)'`` is ``A``."""
    dims = tuple(dims)
    n = prod(dims)
    A = np.asarray(A, dtype=float)
    if A.shape != (n, n):
        raise TensorError(f"VAR matrix shape {A.shape} does not match I* = {n}")
    return A.reshape(dims + (n,), order="F")


@dataclass(frozen=True)
class ArtModel:
    """Tensor autoregression ``Y_t = A_0 + sum_j A_j x_{N+1} vec(Y_{t-j}) + E_t``.

    ``coefs[j]`` has dims ``dims + (I*,)`` (or is a :class:`ParafacCoefficient`
    of that shape) and ``covs[k]`` is the mode-k covariance of the tensor
    normal noise.
    """

    dims: tuple
    coefs: tuple
    covs: tuple
    intercept: np.ndarray | None = None
    parafac: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        n = prod(dims)
        dense, pf = [], []
        for j, A in enumerate(self.coefs):
            if isinstance(A, ParafacCoefficient):
                pf.append(A)
                A = reconstruct(A)
            A = np.asarray(A, dtype=float)
            if A.shape != dims + (n,):
                raise TensorError(f"lag-{j + 1} coefficient has dims {A.shape}, expected {dims + (n,)}")
            dense.append(A)
        if not dense:
            raise TensorError("an ART model needs at least one lag")
        covs = tuple(np.atleast_2d(np.asarray(S, dtype=float)) for S in self.covs)
        if len(covs) != len(dims):
            raise TensorError(f"need {len(dims)} mode covariances, got {len(covs)}")
        for k, (S, d) in enumerate(zip(covs, dims)):
            if S.shape != (d, d):
                raise TensorError(f"covariance {k + 1} has shape {S.shape}, mode size is {d}")
            cholesky(S, f"covariance of mode {k + 1}")
        intercept = None if self.intercept is None else np.asarray(self.intercept, dtype=float)
        if intercept is not None and intercept.shape != dims:
            raise TensorError(f"intercept dims {intercept.shape} do not match {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "coefs", tuple(dense))
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "intercept", intercept)
        object.__setattr__(self, "parafac", tuple(pf))

    @property
    def p(self) -> int:
        return len(self.coefs)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return prod(self.dims)

    def var_matrices(self) -> list[np.ndarray]:
        return [mode_n_matricize(A, self.order).T for A in self.coefs]

    def noise(self) -> TensorNormalParams:
        return TensorNormalParams.zero_mean(self.covs)

    def with_covs(self, covs) -> "ArtModel":
        return ArtModel(self.dims, self.coefs, tuple(covs), self.intercept)


@dataclass(frozen=True)
class TensorSeries:
    """Observations ``Y_1..Y_T`` stacked along a leading time axis."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim < 2:
            raise TensorError("a tensor series needs a time axis and at least one mode")
        object.__setattr__(self, "data", data)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape[1:]

    def __len__(self):
        return self.T

    def __getitem__(self, t):
        return self.data[t]

    def vectors(self) -> np.ndarray:
        """``T x I*`` matrix whose rows are ``vec(Y_t)``."""
        return np.moveaxis(self.data, 0, -1).reshape(-1, self.T, order="F").T


@dataclass(frozen=True)
class VarModel:
    """``y_t = a_0 + sum_j A_j y_{t-j} + e_t`` with ``e_t ~ N(0, cov)``."""

    mats: tuple
    cov: np.ndarray
    intercept: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.cov.shape[0]

    def simulate(self, T: int, init=None, rng=None, noise=None) -> np.ndarray:
        """Simulate ``T`` steps; rows of the result are ``y_1..y_T``.

        Noise vectors are ``chol(cov) @ z`` with ``z`` drawn as
        ``rng.standard_normal(n)`` per step, unless ``noise`` (T x n) is given.
        """
        p, n = len(self.mats), self.n
        hist = [np.zeros(n) for _ in range(p)] if init is None else [np.asarray(v, float) for v in init]
        if len(hist) < p:
            raise TensorError(f"need {p} initial vectors, got {len(hist)}")
        hist = list(hist[-p:])
        L = np.linalg.cholesky(self.cov)
        a0 = np.zeros(n) if self.intercept is None else self.intercept
        out = np.empty((T, n))
        for t in range(T):
            e = L @ rng.standard_normal(n) if noise is None else noise[t]
            y = a0 + e
            for j, A in enumerate(self.mats):
                y = y + A @ hist[-1 - j]
            out[t] = y
            hist.append(y)
            hist.pop(0)
        return out

    def companion(self) -> np.ndarray:
        p, n = len(self.mats), self.n
        F = np.zeros((n * p, n * p))
        F[:n, :] = np.hstack(self.mats)
        F[n:, :-n] = np.eye(n * (p - 1))
        return F


def simulate(
    model: ArtModel,
    T: int,
    init: Sequence[np.ndarray] | None = None,
    rng: np.random.Generator | None = None,
    noise: Sequence[np.ndarray] | None = None,
    burn_in: int = 0,
) -> TensorSeries:
    """Simulate ``T`` observations of an ART(p) model.

    ``init`` holds the ``p`` most recent pre-sample tensors, oldest first
    (zeros by default). Noise is drawn with :func:`tensor_normal_sample` from
    ``rng`` unless explicit ``noise`` tensors are passed. ``burn_in`` extra
    steps are simulated and discarded first.
    """
    dims, p = model.dims, model.p
    if init is None:
        hist = [np.zeros(dims) for _ in range(p)]
    else:
        hist = [np.asarray(Y, dtype=float) for Y in init]
        if len(hist) < p:
            raise TensorError(f"need {p} initial tensors, got {len(hist)}")
        if any(Y.shape != dims for Y in hist):
            raise TensorError(f"initial tensors must have dims {dims}")
        hist = hist[-p:]
    if noise is not None:
        noise = [np.asarray(E, dtype=float) for E in noise]
        if len(noise) < T + burn_in or any(E.shape != dims for E in noise):
            raise TensorError(f"need {T + burn_in} noise tensors of dims {dims}")
    elif rng is None:
        raise TensorError("simulate needs an rng or explicit noise")
    params = model.noise()
    base = np.zeros(dims) if model.intercept is None else model.intercept
    N = model.order
    out = np.empty((T,) + dims)
    for t in range(T + burn_in):
        E = noise[t] if noise is not None else tensor_normal_sample(params, rng)
        Y = base + E
        for j, A in enumerate(model.coefs):
            Y = Y + mode_n_product(A, vectorize(hist[-1 - j]), N)
        hist.append(Y)
        hist.pop(0)
        if t >= burn_in:
            out[t - burn_in] = Y
    return TensorSeries(out)


def to_var(model: ArtModel) -> VarModel:
    """Vectorised form: ``A_j = mat_{N+1}(coef_j)'`` and ``Sigma_N kron ... kron Sigma_1``."""
    a0 = None if model.intercept is None else vectorize(model.intercept)
    return VarModel(tuple(model.var_matrices()), vec_covariance(model.covs), a0)


def _contracted(A: np.ndarray, dims) -> np.ndarray:
    """Order-2N contracted-product form of a mode-(N+1) coefficient."""
    return A.reshape(tuple(dims) + tuple(dims), order="F")


def companion_form(model: ArtModel) -> ArtModel:
    """Stack an ART(p) along the first mode into an ART(1).

    The stacked state holds ``Y_t, Y_{t-1}, ..., Y_{t-p+1}`` in consecutive
    blocks of the first mode. The lag coefficients fill the first block row of
    the order-2N coefficient and identity tensors link each block to the next.
    The stacked noise is nonzero in the first block only; its mode-1
    covariance is returned as ``blockdiag(Sigma_1, I, ..., I)`` so the model
    stays valid, and exact path reproduction needs the embedded noise passed
    explicitly to :func:`simulate`.
    """
    p = model.p
    if p == 1:
        return model
    dims = model.dims
    N = len(dims)
    I1, rest = dims[0], dims[1:]
    big = (p * I1,) + rest
    C = np.zeros(big + big)
    ident = identity_tensor(dims)
    colon = (slice(None),) * (N - 1)
    for k in range(p):
        C[(slice(0, I1),) + colon + (slice(k * I1, (k + 1) * I1),) + colon] = _contracted(model.coefs[k], dims)
    for k in range(1, p):
        C[(slice(k * I1, (k + 1) * I1),) + colon + (slice((k - 1) * I1, k * I1),) + colon] = ident
    n = prod(big)
    coef = C.reshape(big + (n,), order="F")
    S1 = scipy.linalg.block_diag(model.covs[0], *([np.eye(I1)] * (p - 1)))
    intercept = None
    if model.intercept is not None:
        intercept = np.concatenate([model.intercept] + [np.zeros(dims)] * (p - 1), axis=0)
    return ArtModel(big, (coef,), (S1,) + model.covs[1:], intercept)


def stack_state(history: Sequence[np.ndarray]) -> np.ndarray:
    """Stacked state ``(Y_t, Y_{t-1}, ...)`` along mode 1, ``history`` newest first."""
    return np.concatenate(list(history), axis=0)


def check_stationarity(model: ArtModel) -> dict:
    comp = companion_form(model)
    rho = spectral_radius(_contracted(comp.coefs[0], comp.dims))
    return {"rho": rho, "stationary": bool(rho < 1.0)}


def ma_coefficients(model: ArtModel, H: int) -> list[np.ndarray]:
    """``Psi_0 = I`` and ``Psi_h = A Psi_{h-1}`` for an ART(1)."""
    if H < 0:
        raise TensorError(f"horizon must be nonnegative, got {H}")
    if model.p != 1:
        raise TensorError("MA coefficients require p = 1; reduce with companion_form first")
    A = model.var_matrices()[0]
    out = [np.eye(model.n)]
    for _ in range(H):
        out.append(A @ out[-1])
    return out


def lyapunov_covariance(A: np.ndarray, Q: np.ndarray, tol: float = LYAPUNOV_TOL, maxiter: int = 100_000):
    """Solve ``G = A G A' + Q`` by doubling iteration (needs ``rho(A) < 1``)."""
    G = np.array(Q, dtype=float)
    Ak = np.array(A, dtype=float)
    for _ in range(maxiter):
        step = Ak @ G @ Ak.T
        G = G + step
        Ak = Ak @ Ak
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(G))):
            return G
    raise ArithmeticError("Lyapunov iteration did not converge; is the model stationary?")


def devec_series(Y: np.ndarray, dims) -> TensorSeries:
    return TensorSeries(np.stack([devectorize(y, dims) for y in Y]))
