"""Gibbs sampler for the PARAFAC ART(1) with global-local shrinkage.

The sampled model is ``Y_t = B x_{N+1} vec(Y_{t-1}) + E_t`` with tensor normal
noise ``E_t ~ N(0, Sigma_1, ..., Sigma_N)`` and a rank-R PARAFAC coefficient
``B`` of order ``J = N + 1``. Each iteration runs three blocks:

I.   middle/global scales ``phi`` and ``tau`` (``tau`` optionally by HMC on
     ``log tau``);
II.  for every component r and mode j: the local rate ``lambda_{j,r}``, the
     local variances ``w_{j,r,.}`` and the marginal ``beta_j^(r)``;
III. the mode covariances ``Sigma_j`` and their shared prior scale ``gamma``.

Likelihood terms are evaluated mode by mode; the Kronecker covariance of
``vec(E_t)`` is never formed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from math import prod
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .distributions import (
    DistributionError,
    cholesky,
    dirichlet_sample,
    gamma_sample,
    gig_sample,
    inverse_wishart_sample,
    tensor_normal_logpdf,
    TensorNormalParams,
)
from .model import TensorSeries
from .parafac import rank_one
from .tensor import TensorError, mode_n_matricize, mode_n_matrix_product

log = logging.getLogger(__name__)

__all__ = [
    "PriorConfig",
    "McmcState",
    "Trace",
    "SamplerError",
    "SamplerAborted",
    "ArtData",
    "HmcTuner",
    "sample_prior",
    "sample_prior_entries",
    "initial_state",
    "step_global_scales",
    "step_local_scales_and_marginals",
    "step_covariances",
    "gibbs_iteration",
    "run_sampler",
    "retained_count",
    "log_likelihood",
    "coefficient",
    "beta_conditional",
    "draw_lambda",
    "draw_phi",
    "draw_tau",
    "draw_gamma",
    "draw_local_variances",
    "covariance_scale_matrix",
]


class SamplerError(ArithmeticError):
    """Numerical failure inside a Gibbs step."""

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)


class SamplerAborted(KeyboardInterrupt):
    """Raised when a run is interrupted; carries the draws retained so far."""

    def __init__(self, trace: "Trace"):
        super().__init__("sampler interrupted")
        self.trace = trace


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the shrinkage prior and the covariance prior.

    ``a_tau`` and ``b_tau`` default to ``alpha * R`` and ``alpha * R**(1/J)``.
    ``nu`` and ``Psi`` default per mode to ``I_j + 2`` and the identity.
    """

    R: int = 1
    alpha: float = 1.0
    a_tau: float | None = None
    b_tau: float | None = None
    a_lambda: float = 3.0
    b_lambda: float | None = None
    nu: tuple | None = None
    Psi: tuple | None = None
    a_gamma: float = 1.0
    b_gamma: float = 1.0

    def resolve(self, dims: Sequence[int]) -> "PriorConfig":
        """Fill defaults for a response of ``dims`` and validate."""
        dims = tuple(int(d) for d in dims)
        J = len(dims) + 1
        R = int(self.R)
        if R < 1:
            raise ValueError(f"rank R must be positive, got {R}")
        a_tau = self.alpha * R if self.a_tau is None else self.a_tau
        b_tau = self.alpha * R ** (1.0 / J) if self.b_tau is None else self.b_tau
        b_lambda = self.a_lambda ** (1.0 / (2 * J)) if self.b_lambda is None else self.b_lambda
        nu = tuple(d + 2.0 for d in dims) if self.nu is None else tuple(float(v) for v in self.nu)
        Psi = tuple(np.eye(d) for d in dims) if self.Psi is None else tuple(np.atleast_2d(np.asarray(P, float)) for P in self.Psi)
        out = replace(self, R=R, a_tau=float(a_tau), b_tau=float(b_tau), b_lambda=float(b_lambda), nu=nu, Psi=Psi)
        out.validate(dims)
        return out

    def validate(self, dims: Sequence[int]) -> None:
        for name in ("alpha", "a_tau", "b_tau", "a_lambda", "b_lambda", "a_gamma", "b_gamma"):
            v = getattr(self, name)
            if v is None or not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if len(self.nu) != len(dims) or len(self.Psi) != len(dims):
            raise ValueError(f"nu and Psi need one entry per response mode ({len(dims)})")
        for j, (v, P, d) in enumerate(zip(self.nu, self.Psi, dims)):
            if not v > d - 1:
                raise ValueError(f"nu[{j}] must exceed I_j - 1 = {d - 1}, got {v}")
            if P.shape != (d, d):
                raise ValueError(f"Psi[{j}] has shape {P.shape}, expected {(d, d)}")
            cholesky(P, f"Psi[{j}]")
        if not math.isclose(self.a_tau, self.alpha * self.R):
            log.warning("a_tau != alpha*R: the collapsed phi draw targets the a_tau = alpha*R prior")


@dataclass
class McmcState:
    """Current draw. ``beta[j]`` and ``w[j]`` are ``I_j x R``; ``lam`` is ``J x R``."""

    beta: list
    phi: np.ndarray
    tau: float
    lam: np.ndarray
    w: list
    covs: list
    gamma: float

    @property
    def R(self) -> int:
        return self.phi.shape[0]

    def copy(self) -> "McmcState":
        return McmcState(
            [b.copy() for b in self.beta],
            self.phi.copy(),
            float(self.tau),
            self.lam.copy(),
            [w.copy() for w in self.w],
            [S.copy() for S in self.covs],
            float(self.gamma),
        )


class ArtData:
    """Responses ``Y_1..Y_T`` and regressors ``x_t = vec(Y_{t-1})`` from a series of T+1 tensors."""

    def __init__(self, series: TensorSeries | np.ndarray):
        arr = series.data if isinstance(series, TensorSeries) else np.asarray(series, dtype=float)
        if arr.shape[0] < 2:
            raise TensorError("need at least two observations (one is the initial condition)")
        self.dims = tuple(arr.shape[1:])
        vecs = np.moveaxis(arr, 0, -1).reshape(-1, arr.shape[0], order="F").T
        self.Y = arr[1:]
        self.X = vecs[:-1]
        self.T = self.Y.shape[0]
        self.XtX = self.X.T @ self.X

    @classmethod
    def from_arrays(cls, Y: np.ndarray, X: np.ndarray) -> "ArtData":
        obj = cls.__new__(cls)
        obj.Y = np.asarray(Y, dtype=float)
        obj.X = np.asarray(X, dtype=float)
        obj.dims = obj.Y.shape[1:]
        obj.T = obj.Y.shape[0]
        obj.XtX = obj.X.T @ obj.X
        return obj


def coefficient(beta: Sequence[np.ndarray]) -> np.ndarray:
    """Reconstruct ``B`` from factor matrices ``beta[j]`` (``I_j x R``)."""
    R = beta[0].shape[1]
    return sum(rank_one([b[:, r] for b in beta]) for r in range(R))


def _component_fit(beta, r, X):
    """``B_r x_J x_t`` for all t, shape ``(T,) + dims``."""
    head = rank_one([b[:, r] for b in beta[:-1]])
    s = X @ beta[-1][:, r]
    return s[:, None] * head.reshape(1, -1), head, s


def _fitted(beta, X, dims):
    out = np.zeros((X.shape[0], prod(dims)))
    for r in range(beta[0].shape[1]):
        f, _, _ = _component_fit(beta, r, X)
        out += f
    return out.reshape((X.shape[0],) + tuple(dims))


def _precisions(covs):
    return [np.linalg.inv(S) for S in covs]


def _apply_modes(E, mats, skip_time=True):
    """Multiply every response mode of ``E`` (leading time axis) by ``mats[j]``."""
    off = 1 if skip_time else 0
    for j, M in enumerate(mats):
        E = np.moveaxis(np.tensordot(M, E, axes=([1], [j + off])), 0, j + off)
    return E


def log_likelihood(data: ArtData, B: np.ndarray, covs) -> float:
    """Tensor normal log-likelihood of all T observations."""
    params = TensorNormalParams.zero_mean(covs)
    N = len(data.dims)
    total = 0.0
    for t in range(data.T):
        fit = np.tensordot(B, data.X[t], axes=([N], [0]))
        total += tensor_normal_logpdf(data.Y[t] - fit, params)
    return total


# --------------------------------------------------------------------------
# prior and initial state


def sample_prior(priors: PriorConfig, dims: Sequence[int], rng: np.random.Generator) -> McmcState:
    """Joint draw of every parameter from the hierarchical prior."""
    dims = tuple(dims)
    n = prod(dims)
    mode_sizes = dims + (n,)
    R, J = priors.R, len(mode_sizes)
    phi = dirichlet_sample(np.full(R, priors.alpha), rng)
    tau = float(gamma_sample(priors.a_tau, priors.b_tau, rng))
    lam = gamma_sample(priors.a_lambda, priors.b_lambda, rng, size=(J, R))
    w = [rng.exponential(1.0 / (lam[j] ** 2 / 2.0), size=(I, R)) for j, I in enumerate(mode_sizes)]
    beta = [rng.standard_normal((I, R)) * np.sqrt(tau * phi * w[j]) for j, I in enumerate(mode_sizes)]
    gamma = float(gamma_sample(priors.a_gamma, priors.b_gamma, rng))
    covs = [inverse_wishart_sample(priors.nu[j], gamma * priors.Psi[j], rng) for j in range(len(dims))]
    return McmcState(beta, phi, tau, lam, w, covs, gamma)


def sample_prior_entries(
    priors: PriorConfig, dims: Sequence[int], index: Sequence[int], size: int, rng: np.random.Generator
) -> np.ndarray:
    """``size`` independent prior draws of the single entry ``B[index]``.

    Only the marginal coordinates entering that entry are simulated, which
    gives the exact marginal law of the entry under the hierarchical prior.
    ``index`` has one zero-based coordinate per coefficient mode (``N + 1``).
    """
    dims = tuple(dims)
    mode_sizes = dims + (prod(dims),)
    if len(index) != len(mode_sizes) or any(not 0 <= i < d for i, d in zip(index, mode_sizes)):
        raise TensorError(f"index {tuple(index)} invalid for coefficient dims {mode_sizes}")
    R, J = priors.R, len(mode_sizes)
    phi = rng.dirichlet(np.full(R, priors.alpha), size=size)
    tau = rng.gamma(priors.a_tau, 1.0 / priors.b_tau, size=size)
    lam = rng.gamma(priors.a_lambda, 1.0 / priors.b_lambda, size=(size, J, R))
    w = rng.exponential(2.0 / lam**2)
    beta = rng.standard_normal((size, J, R)) * np.sqrt(tau[:, None, None] * phi[:, None, :] * w)
    return beta.prod(axis=1).sum(axis=1)


def initial_state(priors: PriorConfig, data: ArtData, rng: np.random.Generator, scale: float = 0.1) -> McmcState:
    """Deterministic-scale starting point: small random marginals, unit scales.

    Mode covariances start at the identity rescaled so that their Kronecker
    product matches the average residual variance of the data.
    """
    dims = data.dims
    n = prod(dims)
    mode_sizes = dims + (n,)
    R, J = priors.R, len(mode_sizes)
    beta = [scale * rng.standard_normal((I, R)) for I in mode_sizes]
    var = float(np.mean(data.Y ** 2))
    c = var ** (1.0 / len(dims)) if var > 0 else 1.0
    covs = [c * np.eye(d) for d in dims]
    return McmcState(
        beta=beta,
        phi=np.full(R, 1.0 / R),
        tau=1.0,
        lam=np.ones((J, R)),
        w=[np.ones((I, R)) for I in mode_sizes],
        covs=covs,
        gamma=1.0,
    )


# --------------------------------------------------------------------------
# block I: phi and tau


def _c_values(state: McmcState) -> np.ndarray:
    return sum(np.sum(b * b / w, axis=0) for b, w in zip(state.beta, state.w))


def _gig_or_gamma(p, a, b, rng, what):
    if b == 0.0:
        if p > 0:
            return float(rng.gamma(p, 2.0 / a))
        raise SamplerError(f"{what}: GiG with b=0 and order {p} <= 0 is improper")
    return gig_sample(p, a, b, rng)


@dataclass
class HmcTuner:
    """Leapfrog HMC on ``theta = log tau`` with step size adapted during burn-in."""

    step_size: float = 0.25
    n_leapfrog: int = 10
    target: float = 0.7
    accepted: int = 0
    proposed: int = 0
    _log_step: float = field(default=float("nan"), repr=False)
    _t: int = field(default=0, repr=False)

    def adapt(self, accept_prob: float) -> None:
        if math.isnan(self._log_step):
            self._log_step = math.log(self.step_size)
        self._t += 1
        self._log_step += (accept_prob - self.target) / (self._t ** 0.6 + 5.0)
        self._log_step = min(max(self._log_step, math.log(1e-4)), math.log(5.0))
        self.step_size = math.exp(self._log_step)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def _hmc_log_tau(tau, shape, rate, K, tuner: HmcTuner, rng, adapt: bool):
    """One HMC transition for ``p(tau) ∝ tau**(shape-1) exp(-rate*tau - K/(2 tau))``."""

    def logp(th):
        return shape * th - rate * math.exp(th) - 0.5 * K * math.exp(-th)

    def grad(th):
        return shape - rate * math.exp(th) + 0.5 * K * math.exp(-th)

    eps = tuner.step_size
    th0 = math.log(tau)
    m0 = rng.standard_normal()
    th, m = th0, m0
    try:
        m += 0.5 * eps * grad(th)
        for i in range(tuner.n_leapfrog):
            th += eps * m
            if i < tuner.n_leapfrog - 1:
                m += eps * grad(th)
        m += 0.5 * eps * grad(th)
        log_ratio = (logp(th) - 0.5 * m * m) - (logp(th0) - 0.5 * m0 * m0)
    except OverflowError:
        log_ratio = -math.inf
    if not math.isfinite(log_ratio):
        log_ratio = -math.inf
    accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
    tuner.proposed += 1
    accept = rng.random() < accept_prob
    if accept:
        tuner.accepted += 1
    if adapt:
        tuner.adapt(accept_prob)
    return math.exp(th) if accept else tau


def draw_phi(C: np.ndarray, I0: int, priors: PriorConfig, rng: np.random.Generator) -> np.ndarray:
    """``psi_r ~ GiG(alpha - I0/2, 2 b_tau, C_r)`` independently, returned as ``psi / sum(psi)``."""
    psi = np.array([_gig_or_gamma(priors.alpha - I0 / 2.0, 2.0 * priors.b_tau, float(c), rng, "psi") for c in C])
    return psi / psi.sum()


def draw_tau(C: np.ndarray, phi: np.ndarray, I0: int, priors: PriorConfig, rng: np.random.Generator) -> float:
    """``tau ~ GiG(a_tau - R I0/2, 2 b_tau, sum_r C_r / phi_r)``."""
    shape = priors.a_tau - len(C) * I0 / 2.0
    return _gig_or_gamma(shape, 2.0 * priors.b_tau, float(np.sum(C / phi)), rng, "tau")


def step_global_scales(
    state: McmcState,
    data: ArtData | None,
    priors: PriorConfig,
    rng: np.random.Generator,
    hmc: HmcTuner | None = None,
    adapt: bool = False,
) -> McmcState:
    """Draw ``phi`` (through ``psi_r = tau * phi_r`` with tau integrated out), then ``tau``.

    ``psi_r ~ GiG(alpha - I0/2, 2 b_tau, C_r)`` independently, ``phi = psi / sum(psi)``,
    then ``tau ~ GiG(a_tau - R I0/2, 2 b_tau, sum_r C_r / phi_r)`` exactly or by an
    HMC move on ``log tau`` when ``hmc`` is given.
    """
    I0 = sum(b.shape[0] for b in state.beta)
    R = state.R
    C = _c_values(state)
    if not np.all(np.isfinite(C)):
        raise SamplerError("non-finite C_r in the global-scale step")
    phi = draw_phi(C, I0, priors, rng)
    if hmc is None:
        tau = draw_tau(C, phi, I0, priors, rng)
    else:
        K = float(np.sum(C / phi))
        tau = _hmc_log_tau(state.tau, priors.a_tau - R * I0 / 2.0, priors.b_tau, K, hmc, rng, adapt)
    state.phi = phi
    state.tau = float(tau)
    return state


# --------------------------------------------------------------------------
# block II: lambda, w, beta


def beta_conditional(state: McmcState, data: ArtData, r: int, j: int, partial=None):
    """Precision and mean of the full conditional of ``beta_j^(r)``.

    ``partial`` are the residuals ``Y_t - B_{-r} x_J x_t`` (computed when absent).
    Returns ``(Q, mean)`` with ``Q = S_j + diag(1 / (tau phi_r w_{j,r}))``.
    """
    beta, dims = state.beta, data.dims
    N = len(dims)
    if partial is None:
        partial = data.Y - _fitted(beta, data.X, dims)
        f, _, _ = _component_fit(beta, r, data.X)
        partial = partial + f.reshape(partial.shape)
    P = _precisions(state.covs)
    s = data.X @ beta[N][:, r]
    b = [beta[i][:, r] for i in range(N)]
    if j < N:
        quad = np.prod([b[i] @ P[i] @ b[i] for i in range(N) if i != j]) if N > 1 else 1.0
        S = float(s @ s) * quad * P[j]
        G = np.tensordot(s, partial, axes=(0, 0))
        for i in range(N):
            if i != j:
                G = mode_n_matrix_product(G, (P[i] @ b[i])[None, :], i)
        m = P[j] @ G.reshape(-1)
    else:
        quad = np.prod([b[i] @ P[i] @ b[i] for i in range(N)])
        S = quad * data.XtX
        head = rank_one(b)
        W = _apply_modes(head[None], P)[0]
        c = partial.reshape(data.T, -1) @ W.reshape(-1)
        m = data.X.T @ c
    prior_prec = 1.0 / (state.tau * state.phi[r] * state.w[j][:, r])
    Q = S + np.diag(prior_prec)
    try:
        Lq = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise SamplerError(f"posterior precision of beta_{j + 1}^({r + 1}) is not positive definite") from None
    mean = scipy.linalg.cho_solve((Lq, True), m)
    return Q, mean, Lq


def draw_lambda(b: np.ndarray, scale: float, priors: PriorConfig, rng: np.random.Generator) -> float:
    """``lambda ~ Ga(a_lambda + I_j, b_lambda + ||beta||_1 / sqrt(tau phi_r))``."""
    return float(gamma_sample(priors.a_lambda + b.shape[0], priors.b_lambda + np.sum(np.abs(b)) / math.sqrt(scale), rng))


def draw_local_variances(b: np.ndarray, lam: float, scale: float, rng: np.random.Generator) -> np.ndarray:
    """``w_p ~ GiG(1/2, lambda^2, beta_p^2 / (tau phi_r))`` for every entry of ``b``."""
    l2 = lam * lam
    return np.array([_gig_or_gamma(0.5, l2, float(bp * bp / scale), rng, "w") for bp in b])


def step_local_scales_and_marginals(
    state: McmcState, data: ArtData, priors: PriorConfig, rng: np.random.Generator
) -> McmcState:
    N = len(data.dims)
    J = N + 1
    resid = data.Y - _fitted(state.beta, data.X, data.dims)
    flat = resid.reshape(data.T, -1)
    for r in range(state.R):
        fit_r, _, _ = _component_fit(state.beta, r, data.X)
        partial = (flat + fit_r).reshape(resid.shape)
        scale = state.tau * state.phi[r]
        for j in range(J):
            b = state.beta[j][:, r]
            I = b.shape[0]
            lam = draw_lambda(b, scale, priors, rng)
            state.lam[j, r] = lam
            state.w[j][:, r] = draw_local_variances(b, lam, scale, rng)
            Q, mean, Lq = beta_conditional(state, data, r, j, partial)
            z = rng.standard_normal(I)
            state.beta[j][:, r] = mean + scipy.linalg.solve_triangular(Lq.T, z, lower=False)
        fit_r, _, _ = _component_fit(state.beta, r, data.X)
        flat = partial.reshape(data.T, -1) - fit_r
    return state


# --------------------------------------------------------------------------
# block III: Sigma_j and gamma


def covariance_scale_matrix(resid: np.ndarray, covs, j: int) -> np.ndarray:
    """``S_j = sum_t E_(j),t (kron_{i != j} Sigma_i^{-1}) E_(j),t'`` for residuals (T, dims)."""
    P = _precisions(covs)
    mats = [np.eye(P[i].shape[0]) if i == j else P[i] for i in range(len(covs))]
    G = _apply_modes(resid, mats)
    T = resid.shape[0]
    S = np.zeros((covs[j].shape[0],) * 2)
    for t in range(T):
        S += mode_n_matricize(resid[t], j) @ mode_n_matricize(G[t], j).T
    return 0.5 * (S + S.T)


def step_covariances(state: McmcState, data: ArtData, priors: PriorConfig, rng: np.random.Generator) -> McmcState:
    """``Sigma_j ~ IW(nu_j + T I*_{-j}, gamma Psi_j + S_j)`` for each mode, then ``gamma``."""
    dims = data.dims
    n = prod(dims)
    resid = data.Y - _fitted(state.beta, data.X, dims)
    for j, d in enumerate(dims):
        S = covariance_scale_matrix(resid, state.covs, j)
        df = priors.nu[j] + data.T * (n // d)
        try:
            state.covs[j] = inverse_wishart_sample(df, state.gamma * priors.Psi[j] + S, rng)
        except DistributionError as exc:
            raise SamplerError(f"Sigma_{j + 1} update: {exc}") from None
    state.gamma = draw_gamma(state.covs, priors, rng)
    return state


def draw_gamma(covs, priors: PriorConfig, rng: np.random.Generator) -> float:
    """``gamma ~ Ga(a_gamma + sum_j nu_j I_j / 2, b_gamma + sum_j tr(Psi_j Sigma_j^{-1}) / 2)``."""
    shape = priors.a_gamma + 0.5 * sum(v * S.shape[0] for v, S in zip(priors.nu, covs))
    rate = priors.b_gamma + 0.5 * sum(np.trace(np.linalg.solve(S, P)) for S, P in zip(covs, priors.Psi))
    return float(gamma_sample(shape, rate, rng))


def gibbs_iteration(state, data, priors, rng, hmc=None, adapt=False) -> McmcState:
    step_global_scales(state, data, priors, rng, hmc, adapt)
    step_local_scales_and_marginals(state, data, priors, rng)
    step_covariances(state, data, priors, rng)
    return state


# --------------------------------------------------------------------------
# driver


def retained_count(iters: int, burn_in: int, thin: int) -> int:
    """Draws kept from iterations ``burn_in+1 .. iters`` at every ``thin``-th step."""
    if thin < 1 or burn_in < 0 or iters < burn_in:
        raise ValueError(f"invalid schedule iters={iters}, burn_in={burn_in}, thin={thin}")
    return (iters - burn_in) // thin


@dataclass
class Trace:
    """Thinned draws of the identified quantities.

    ``B`` has shape ``(draws,) + dims + (I*,)``; ``covs[j]`` has shape
    ``(draws, I_j, I_j)``.
    """

    dims: tuple
    iterations: np.ndarray
    B: np.ndarray
    covs: list
    tau: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.iterations.shape[0])

    @classmethod
    def empty(cls, dims, R, meta=None) -> "Trace":
        n = prod(dims)
        return cls(
            tuple(dims),
            np.zeros(0, dtype=int),
            np.zeros((0,) + tuple(dims) + (n,)),
            [np.zeros((0, d, d)) for d in dims],
            np.zeros(0),
            np.zeros(0),
            np.zeros((0, R)),
            dict(meta or {}),
        )

    def scalars(self) -> dict:
        out = {"tau": self.tau, "gamma": self.gamma}
        for j, S in enumerate(self.covs):
            for i in range(S.shape[1]):
                out[f"Sigma{j + 1}[{i + 1},{i + 1}]"] = S[:, i, i]
        return out


class _Recorder:
    def __init__(self, dims, R, n_keep, meta, on_draw, keep):
        n = prod(dims)
        self.dims, self.keep, self.on_draw = tuple(dims), keep, on_draw
        size = n_keep if keep else 0
        self.iterations = np.zeros(size, dtype=int)
        self.B = np.zeros((size,) + self.dims + (n,))
        self.covs = [np.zeros((size, d, d)) for d in dims]
        self.tau = np.zeros(size)
        self.gamma = np.zeros(size)
        self.phi = np.zeros((size, R))
        self.k = 0
        self.meta = meta

    def record(self, it, state):
        B = coefficient(state.beta)
        if self.on_draw is not None:
            self.on_draw(it, B, state)
        if self.keep:
            k = self.k
            self.iterations[k] = it
            self.B[k] = B
            for j, S in enumerate(state.covs):
                self.covs[j][k] = S
            self.tau[k] = state.tau
            self.gamma[k] = state.gamma
            self.phi[k] = state.phi
        self.k += 1

    def trace(self) -> Trace:
        k = self.k if self.keep else 0
        return Trace(
            self.dims,
            self.iterations[:k],
            self.B[:k],
            [S[:k] for S in self.covs],
            self.tau[:k],
            self.gamma[:k],
            self.phi[:k],
            self.meta,
        )


def run_sampler(
    data: TensorSeries | ArtData,
    priors: PriorConfig,
    iters: int,
    burn_in: int,
    thin: int = 1,
    seed: int = 0,
    chain: int = 0,
    hmc: bool = False,
    init: McmcState | None = None,
    on_draw: Callable | None = None,
    keep_draws: bool = True,
    should_stop: Callable[[], bool] | None = None,
) -> Trace:
    """Run one chain of ``iters`` Gibbs iterations (burn-in included).

    Iterations are numbered from 1; iteration ``i`` is retained when
    ``i > burn_in`` and ``(i - burn_in) % thin == 0``. Each retained draw is
    passed to ``on_draw(iteration, B, state)`` when given. ``should_stop`` is
    polled between iterations; a true value (or Ctrl-C) raises
    :class:`SamplerAborted` holding the partial trace.
    """
    from .rng import make_rng

    if not isinstance(data, ArtData):
        data = ArtData(data)
    priors = priors.resolve(data.dims)
    n_keep = retained_count(iters, burn_in, thin)
    rng = make_rng(seed, chain, "sampler")
    state = init.copy() if init is not None else initial_state(priors, data, make_rng(seed, chain, "init"))
    tuner = HmcTuner() if hmc else None
    meta = {"seed": int(seed), "chain": int(chain), "iters": int(iters), "burn_in": int(burn_in), "thin": int(thin), "hmc": bool(hmc), "R": priors.R}
    rec = _Recorder(data.dims, priors.R, n_keep, meta, on_draw, keep_draws)
    it = 0
    try:
        for it in range(1, iters + 1):
            if should_stop is not None and should_stop():
                raise KeyboardInterrupt
            try:
                gibbs_iteration(state, data, priors, rng, tuner, adapt=it <= burn_in)
            except SamplerError as exc:
                raise SamplerError(str(exc), it) from None
            except (DistributionError, np.linalg.LinAlgError, FloatingPointError) as exc:
                raise SamplerError(str(exc), it) from None
            if it > burn_in and (it - burn_in) % thin == 0:
                rec.record(it, state)
    except KeyboardInterrupt:
        meta["aborted_at"] = it
        raise SamplerAborted(rec.trace()) from None
    if tuner is not None:
        meta["hmc_step_size"] = tuner.step_size
        meta["hmc_acceptance"] = tuner.acceptance_rate
    meta["final_state"] = state
    return rec.trace()
