"""Block-Cholesky (OIRF) and block generalised (GIRF) impulse responses.

A shock hits a leading block of ``n`` variables of ``vec(Y_t)``. Variables are
brought to the front by an explicit permutation; responses are always
reported in the original ordering. Write ``Sigma = [[A, B], [B', C]]`` for the
permuted noise covariance and ``S = C - B'A^{-1}B`` for the Schur complement.
Then ``Sigma = L D L'`` with ``D = blockdiag(A, S)`` and ``Sigma = P P'`` with
``P = L blockdiag(chol A, chol S)``.

* OIRF: ``Psi_h P E_n delta`` -- the response to orthogonalised shocks
  ``u = P^{-1} eps`` whose first ``n`` entries are set to ``delta``.
* GIRF: ``Psi_h L D E_n A^{-1} delta = Psi_h [delta; B'A^{-1} delta]`` -- the
  response to ``eps`` conditioned on its leading block being ``delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .distributions import DistributionError, cholesky
from .model import ArtModel, to_var
from .tensor import TensorError, devectorize

__all__ = [
    "BlockFactors",
    "ShockSpec",
    "IrfResult",
    "IrfSummary",
    "block_factors",
    "ma_matrices",
    "oirf",
    "girf",
    "impulse_response",
    "pair_response",
    "decay_horizon",
    "irf_summarize_over_trace",
    "METHODS",
]

METHODS = ("girf", "oirf")


@dataclass(frozen=True)
class BlockFactors:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    S: np.ndarray
    L: np.ndarray
    D: np.ndarray
    P: np.ndarray
    L_D: np.ndarray

    def __getitem__(self, key):
        return getattr(self, key)


def _chol(M, what):
    try:
        return cholesky(M, what)
    except DistributionError as exc:
        raise ArithmeticError(str(exc)) from None


def block_factors(Sigma: np.ndarray, n: int) -> BlockFactors:
    """Block LDL' and block Cholesky factors of ``Sigma`` with a leading block of size ``n``."""
    Sigma = np.asarray(Sigma, dtype=float)
    m = Sigma.shape[0]
    if Sigma.shape != (m, m):
        raise TensorError(f"Sigma must be square, got {Sigma.shape}")
    if not 1 <= n <= m:
        raise TensorError(f"block size must lie in 1..{m}, got {n}")
    A = Sigma[:n, :n]
    B = Sigma[:n, n:]
    C = Sigma[n:, n:]
    LA = _chol(A, "leading block A")
    K = scipy.linalg.cho_solve((LA, True), B)  # A^{-1} B
    S = C - B.T @ K
    S = 0.5 * (S + S.T)
    LS = _chol(S, "Schur complement S") if m > n else np.zeros((0, 0))
    L = np.eye(m)
    L[n:, :n] = K.T
    D = scipy.linalg.block_diag(A, S)
    L_D = scipy.linalg.block_diag(LA, LS)
    return BlockFactors(A, B, C, S, L, D, L @ L_D, L_D)


@dataclass(frozen=True)
class ShockSpec:
    """Joint shock ``delta`` to the variables ``ordering[:n]`` of ``vec(Y_t)``.

    ``ordering`` is a permutation of ``0..I*-1`` (zero-based flat indices in
    column-major order); the first ``n`` entries are the shocked variables.
    """

    n: int
    delta: np.ndarray
    ordering: tuple

    def __post_init__(self):
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        ordering = tuple(int(i) for i in self.ordering)
        size = len(ordering)
        if sorted(ordering) != list(range(size)):
            raise TensorError("ordering must be a permutation of 0..I*-1")
        if not 1 <= self.n <= size:
            raise TensorError(f"shock block size must lie in 1..{size}, got {self.n}")
        if delta.shape != (self.n,):
            raise TensorError(f"delta must have length n={self.n}, got shape {delta.shape}")
        if not np.all(np.isfinite(delta)):
            raise TensorError("delta must be finite")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "ordering", ordering)
        object.__setattr__(self, "n", int(self.n))

    @property
    def size(self) -> int:
        return len(self.ordering)

    @classmethod
    def block(cls, shocked: Sequence[int], delta, size: int) -> "ShockSpec":
        """Shock ``shocked`` (in that order); the rest keep their relative order."""
        shocked = [int(i) for i in shocked]
        if len(set(shocked)) != len(shocked):
            raise TensorError("shocked indices must be distinct")
        if any(not 0 <= i < size for i in shocked):
            raise TensorError(f"shocked indices must lie in 0..{size - 1}")
        rest = [i for i in range(size) if i not in set(shocked)]
        return cls(len(shocked), delta, tuple(shocked + rest))

    @classmethod
    def single(cls, j: int, magnitude: float, size: int) -> "ShockSpec":
        return cls.block([j], [magnitude], size)


@dataclass(frozen=True)
class IrfResult:
    """``responses[h]`` is the response of ``vec(Y_{t+h})``, ``h = 0..H``."""

    method: str
    responses: np.ndarray
    dims: tuple

    @property
    def H(self) -> int:
        return self.responses.shape[0] - 1

    def tensor(self, h: int) -> np.ndarray:
        return devectorize(self.responses[h], self.dims)


def ma_matrices(model: ArtModel, H: int) -> list[np.ndarray]:
    """Moving-average matrices ``Psi_0..Psi_H`` of the VAR form of an ART(p)."""
    if H < 0:
        raise TensorError(f"horizon must be nonnegative, got {H}")
    mats = model.var_matrices()
    out = [np.eye(model.n)]
    for h in range(1, H + 1):
        acc = np.zeros((model.n, model.n))
        for j, A in enumerate(mats, start=1):
            if h - j >= 0:
                acc += A @ out[h - j]
        out.append(acc)
    return out


def _impact(Sigma: np.ndarray, shock: ShockSpec, method: str) -> np.ndarray:
    """Shock to ``vec(E_t)`` in the original ordering."""
    if method not in METHODS:
        raise TensorError(f"unknown IRF method {method!r}; expected one of {METHODS}")
    if shock.size != Sigma.shape[0]:
        raise TensorError(f"shock is defined for {shock.size} variables, model has {Sigma.shape[0]}")
    perm = np.asarray(shock.ordering)
    f = block_factors(Sigma[np.ix_(perm, perm)], shock.n)
    u = np.zeros(shock.size)
    if method == "oirf":
        u[: shock.n] = shock.delta
        e_perm = f.P @ u
    else:
        u[: shock.n] = np.linalg.solve(f.A, shock.delta)
        e_perm = f.L @ (f.D @ u)
    e = np.empty_like(e_perm)
    e[perm] = e_perm
    return e


def impulse_response(model: ArtModel, shock: ShockSpec, H: int, method: str) -> IrfResult:
    Sigma = to_var(model).cov
    e = _impact(Sigma, shock, method)
    Psi = ma_matrices(model, H)
    return IrfResult(method, np.stack([M @ e for M in Psi]), model.dims)


def oirf(model: ArtModel, shock: ShockSpec, H: int) -> IrfResult:
    """Block-Cholesky impulse response over horizons ``0..H``."""
    return impulse_response(model, shock, H, "oirf")


def girf(model: ArtModel, shock: ShockSpec, H: int) -> IrfResult:
    """Block generalised impulse response over horizons ``0..H``."""
    return impulse_response(model, shock, H, "girf")


def pair_response(model: ArtModel, i: int, j: int, h: int, magnitude: float, method: str, n: int = 1, ordering=None) -> float:
    """Response of variable ``i`` at horizon ``h`` to a shock of size ``magnitude`` in variable ``j``.

    ``j`` must be among the first ``n`` entries of ``ordering`` (default: ``j``
    first, then the remaining variables in their natural order). For the
    generalised IRF the column is scaled by ``1 / D_jj``.
    """
    size = model.n
    if ordering is None:
        ordering = [j] + [k for k in range(size) if k != j]
    ordering = list(ordering)
    if j not in ordering[:n]:
        raise TensorError(f"variable {j} is not in the shocked block")
    pos = ordering.index(j)
    perm = np.asarray(ordering)
    Sigma = to_var(model).cov
    f = block_factors(Sigma[np.ix_(perm, perm)], n)
    if method == "oirf":
        col = f.P[:, pos] * magnitude
    elif method == "girf":
        col = f.L @ f.D[:, pos] * (magnitude / f.D[pos, pos])
    else:
        raise TensorError(f"unknown IRF method {method!r}")
    e = np.empty(size)
    e[perm] = col
    return float((ma_matrices(model, h)[h] @ e)[i])


def decay_horizon(model: ArtModel, impact_norm: float, tol: float = 1e-6) -> int:
    """Horizon after which ``||Psi_h e|| < tol`` is guaranteed by ``kappa(V) rho^h ||e||``.

    Uses the eigendecomposition of the companion matrix (assumed
    diagonalizable); ``kappa(V)`` is the condition number of its eigenvectors.
    """
    F = to_var(model).companion()
    vals, V = np.linalg.eig(F)
    rho = float(np.max(np.abs(vals)))
    if rho >= 1:
        raise ArithmeticError(f"model is not stationary (rho = {rho:.6g})")
    if rho == 0.0:
        return model.p
    kappa = np.linalg.cond(V)
    if not np.isfinite(kappa):
        raise ArithmeticError("companion matrix is numerically defective")
    need = math.log(tol / (kappa * max(impact_norm, 1e-300))) / math.log(rho)
    return max(0, math.ceil(need))


@dataclass(frozen=True)
class IrfSummary:
    """Pointwise posterior summaries, each of shape ``(H+1, I*)``."""

    method: str
    dims: tuple
    median: np.ndarray
    q16: np.ndarray
    q84: np.ndarray
    q05: np.ndarray
    q95: np.ndarray

    @property
    def significant(self) -> np.ndarray:
        """True where the 90% band excludes zero."""
        return (self.q05 > 0) | (self.q95 < 0)


def irf_summarize_over_trace(trace, shock: ShockSpec, H: int, method: str = "girf") -> IrfSummary:
    """Median and 68%/90% equal-tailed bands of the IRF across the draws of ``trace``."""
    if len(trace) == 0:
        raise TensorError("cannot summarise IRFs over an empty trace")
    draws = []
    for k in range(len(trace)):
        covs = tuple(S[k] for S in trace.covs)
        model = ArtModel(trace.dims, (trace.B[k],), covs)
        draws.append(impulse_response(model, shock, H, method).responses)
    arr = np.stack(draws)
    q = np.quantile(arr, [0.5, 0.16, 0.84, 0.05, 0.95], axis=0)
    return IrfSummary(method, tuple(trace.dims), *q)
