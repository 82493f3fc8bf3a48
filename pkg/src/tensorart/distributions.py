"""Random variates and log-densities used by the prior and the Gibbs sampler.

Conventions
-----------
* Gamma laws are shape-rate.
* The generalized inverse Gaussian ``GiG(p, a, b)`` has density proportional
  to ``x**(p - 1) * exp(-(a * x + b / x) / 2)`` on ``x > 0``.
* ``IW(df, scale)`` has mean ``scale / (df - dim - 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.special

from .tensor import kron_all, mode_n_fold, mode_n_matricize, mode_n_matrix_product

__all__ = [
    "DistributionError",
    "TensorNormalParams",
    "GigParams",
    "tensor_normal_logpdf",
    "tensor_normal_sample",
    "gig_sample",
    "gig_logpdf",
    "gig_mean",
    "inverse_wishart_sample",
    "inverse_wishart_logpdf",
    "gamma_sample",
    "gamma_logpdf",
    "dirichlet_sample",
    "exponential_sample",
    "cholesky",
    "vec_covariance",
]


class DistributionError(ValueError):
    """Invalid distribution parameters."""


def cholesky(S, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, raising :class:`DistributionError` if S is not SPD."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise DistributionError(f"{what} must be square, got {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise DistributionError(f"{what} is not symmetric")
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DistributionError(f"{what} is not positive definite") from None


# --------------------------------------------------------------------------
# tensor normal


@dataclass(frozen=True)
class TensorNormalParams:
    mean: np.ndarray
    covs: tuple
    chols: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        covs = tuple(np.atleast_2d(np.asarray(S, dtype=float)) for S in self.covs)
        if len(covs) != mean.ndim:
            raise DistributionError(f"need {mean.ndim} mode covariances, got {len(covs)}")
        for j, (S, d) in enumerate(zip(covs, mean.shape)):
            if S.shape != (d, d):
                raise DistributionError(f"covariance {j} has shape {S.shape}, mode size is {d}")
        chols = tuple(cholesky(S, f"covariance of mode {j + 1}") for j, S in enumerate(covs))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "chols", chols)

    @classmethod
    def zero_mean(cls, covs: Sequence[np.ndarray]) -> "TensorNormalParams":
        dims = tuple(np.atleast_2d(S).shape[0] for S in covs)
        return cls(np.zeros(dims), tuple(covs))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.mean.shape


def _whiten(E: np.ndarray, chols) -> np.ndarray:
    for j, L in enumerate(chols):
        M = scipy.linalg.solve_triangular(L, mode_n_matricize(E, j), lower=True)
        E = mode_n_fold(M, j, E.shape)
    return E


def tensor_normal_logpdf(X, params: TensorNormalParams) -> float:
    """Log-density of the tensor normal law, computed mode by mode.

    Equals the multivariate normal log-density of ``vec(X)`` with covariance
    ``Sigma_N kron ... kron Sigma_1``.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != params.dims:
        raise DistributionError(f"tensor dims {X.shape} do not match {params.dims}")
    n = X.size
    Z = _whiten(X - params.mean, params.chols)
    logdet = 0.0
    for L, d in zip(params.chols, params.dims):
        logdet += (n // d) * 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (n * math.log(2 * math.pi) + logdet + float(np.sum(Z * Z)))


def tensor_normal_sample(params: TensorNormalParams, rng: np.random.Generator, size: int | None = None):
    """Draw ``mean + Z x_1 L_1 ... x_N L_N`` with Z iid standard normal.

    The standard normals are consumed in ``vec`` order, so the result equals
    ``(L_N kron ... kron L_1) z`` for ``z = rng.standard_normal(I*)``.
    """
    n = int(np.prod(params.dims))
    if size is not None:
        # same stream as ``size`` consecutive single draws
        z = rng.standard_normal((size, n))
        E = np.moveaxis(z.reshape((size,) + params.dims[::-1]), tuple(range(1, len(params.dims) + 1)), tuple(range(len(params.dims), 0, -1)))
        for j, L in enumerate(params.chols):
            E = np.moveaxis(np.tensordot(L, E, axes=([1], [j + 1])), 0, j + 1)
        return params.mean + E
    z = rng.standard_normal(n)
    E = z.reshape(params.dims, order="F")
    for j, L in enumerate(params.chols):
        E = mode_n_matrix_product(E, L, j)
    return params.mean + E


# --------------------------------------------------------------------------
# generalized inverse Gaussian


@dataclass(frozen=True)
class GigParams:
    p: float
    a: float
    b: float

    def __post_init__(self):
        p, a, b = float(self.p), float(self.a), float(self.b)
        if not all(map(math.isfinite, (p, a, b))) or a < 0 or b < 0:
            raise DistributionError(f"invalid GiG parameters p={p}, a={a}, b={b}")
        if a == 0 and b == 0:
            raise DistributionError("GiG needs a > 0 or b > 0")
        if a == 0 and p >= 0:
            raise DistributionError(f"GiG with a=0 requires p<0, got p={p}")
        if b == 0 and p <= 0:
            raise DistributionError(f"GiG with b=0 requires p>0, got p={p}")


def _gig_mode(lam: float, omega: float) -> float:
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega * omega) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega * omega) + (1.0 - lam))


def _rou_shift_consts(lam, omega):
    # ratio-of-uniforms around the mode; u-bounds from the cubic for (x - m) sqrt(f(x))
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    fi = math.acos(max(-1.0, min(1.0, -q / (2.0 * math.sqrt(-(p ** 3) / 27.0)))))
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)
    return t, s, xm, nc, uminus, uplus


def _rou_shift(lam, omega, rng):
    t, s, xm, nc, uminus, uplus = _rou_shift_consts(lam, omega)
    while True:
        U = uminus + rng.random() * (uplus - uminus)
        V = rng.random()
        X = U / V + xm
        if X <= 0.0:
            continue
        if math.log(V) <= t * math.log(X) - s * (X + 1.0 / X) - nc:
            return X


def _rou_shift_batch(lam, omega, m, rng):
    t, s, xm, nc, uminus, uplus = _rou_shift_consts(lam, omega)
    U = uminus + rng.random(m) * (uplus - uminus)
    V = rng.random(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = U / V + xm
        ok = (X > 0.0) & (np.log(V) <= t * np.log(X) - s * (X + 1.0 / X) - nc)
    return X[ok]


def _rou_noshift_consts(lam, omega):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega * omega)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)
    return t, s, nc, um


def _rou_noshift(lam, omega, rng):
    t, s, nc, um = _rou_noshift_consts(lam, omega)
    while True:
        U = um * rng.random()
        V = rng.random()
        if V == 0.0:
            continue
        X = U / V
        if X > 0.0 and math.log(V) <= t * math.log(X) - s * (X + 1.0 / X) - nc:
            return X


def _rou_noshift_batch(lam, omega, m, rng):
    t, s, nc, um = _rou_noshift_consts(lam, omega)
    U = um * rng.random(m)
    V = rng.random(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = U / V
        ok = (V > 0.0) & (X > 0.0) & (np.log(V) <= t * np.log(X) - s * (X + 1.0 / X) - nc)
    return X[ok]


def _ntc_consts(lam, omega):
    # piecewise hat (constant / power / exponential) for 0 <= lam < 1, small omega
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    A0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        A1 = 0.0
        k2 = x0 ** (lam - 1.0)
        A2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        if lam == 0.0:
            A1 = k1 * math.log(2.0 / (omega * omega))
        else:
            A1 = k1 / lam * ((2.0 / omega) ** lam - x0 ** lam)
        k2 = (2.0 / omega) ** (lam - 1.0)
        A2 = k2 * 2.0 * math.exp(-1.0) / omega
    edge = max(x0, 2.0 / omega)
    return x0, k0, k1, k2, A0, A1, A0 + A1 + A2, edge


def _non_t_concave(lam, omega, rng):
    x0, k0, k1, k2, A0, A1, Atot, edge = _ntc_consts(lam, omega)
    while True:
        V = Atot * rng.random()
        if V <= A0:
            X = x0 * V / A0
            hx = k0
        elif V - A0 <= A1:
            V -= A0
            if lam == 0.0:
                X = omega * math.exp(math.exp(omega) * V)
                hx = k1 / X
            else:
                X = (x0 ** lam + lam / k1 * V) ** (1.0 / lam)
                hx = k1 * X ** (lam - 1.0)
        else:
            V -= A0 + A1
            X = -2.0 / omega * math.log(math.exp(-omega / 2.0 * edge) - omega / (2.0 * k2) * V)
            hx = k2 * math.exp(-omega / 2.0 * X)
        if X <= 0.0:
            continue
        U = rng.random() * hx
        if U > 0.0 and math.log(U) <= (lam - 1.0) * math.log(X) - omega / 2.0 * (X + 1.0 / X):
            return X


def _non_t_concave_batch(lam, omega, m, rng):
    x0, k0, k1, k2, A0, A1, Atot, edge = _ntc_consts(lam, omega)
    V = Atot * rng.random(m)
    U = rng.random(m)
    X = np.empty(m)
    hx = np.empty(m)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r0 = V <= A0
        r1 = ~r0 & (V - A0 <= A1)
        r2 = ~(r0 | r1)
        X[r0] = x0 * V[r0] / A0
        hx[r0] = k0
        v1 = V[r1] - A0
        if lam == 0.0:
            X[r1] = omega * np.exp(math.exp(omega) * v1)
            hx[r1] = k1 / X[r1]
        else:
            X[r1] = (x0 ** lam + lam / k1 * v1) ** (1.0 / lam)
            hx[r1] = k1 * X[r1] ** (lam - 1.0)
        v2 = V[r2] - (A0 + A1)
        X[r2] = -2.0 / omega * np.log(math.exp(-omega / 2.0 * edge) - omega / (2.0 * k2) * v2)
        hx[r2] = k2 * np.exp(-omega / 2.0 * X[r2])
        U = U * hx
        ok = (X > 0.0) & (U > 0.0) & (np.log(U) <= (lam - 1.0) * np.log(X) - omega / 2.0 * (X + 1.0 / X))
    return X[ok]


def _gig_batch(lam, omega, size, rng, propose):
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        acc = propose(lam, omega, max(64, int(1.3 * need) + 16), rng)[:need]
        out[filled : filled + acc.size] = acc
        filled += acc.size
    return out


def gig_sample(p: float, a: float, b: float, rng: np.random.Generator, size: int | None = None):
    """Draws from ``GiG(p, a, b)``: a float, or an array of ``size`` iid draws.

    Boundary cases reduce to Gamma (``b = 0``) and inverse Gamma (``a = 0``).
    Otherwise the standardised two-parameter law with ``omega = sqrt(a b)`` is
    sampled by ratio-of-uniforms (with or without mode shift) or, for
    ``|p| < 1`` and small ``omega``, by a dedicated rejection hat; the draw is
    then rescaled by ``sqrt(b / a)``. With ``size`` the same hats are used on
    vectorized proposal batches (a different stream than repeated scalar calls).
    """
    GigParams(p, a, b)
    if b == 0.0:
        x = rng.gamma(p, 2.0 / a, size=size)
        return float(x) if size is None else x
    if a == 0.0:
        x = 2.0 / (b * rng.gamma(-p, 1.0, size=size))
        return float(x) if size is None else x
    lam = abs(p)
    omega = math.sqrt(a * b)
    alpha = math.sqrt(b / a)
    if omega < 1e-300:
        raise DistributionError(f"GiG omega underflow for p={p}, a={a}, b={b}")
    if lam > 1.0 or omega > 1.0:
        scalar, batch = _rou_shift, _rou_shift_batch
    elif omega >= min(0.5, 2.0 / 3.0 * math.sqrt(1.0 - lam)):
        scalar, batch = _rou_noshift, _rou_noshift_batch
    else:
        scalar, batch = _non_t_concave, _non_t_concave_batch
    x = scalar(lam, omega, rng) if size is None else _gig_batch(lam, omega, int(size), rng, batch)
    return alpha / x if p < 0 else alpha * x


def gig_logpdf(x, p: float, a: float, b: float):
    """Normalised log-density of ``GiG(p, a, b)``."""
    GigParams(p, a, b)
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        return gamma_logpdf(x, p, a / 2.0)
    if a == 0.0:
        # inverse gamma with shape -p and scale b/2
        k = -p
        return k * math.log(b / 2.0) - scipy.special.gammaln(k) - (k + 1) * np.log(x) - b / (2.0 * x)
    omega = math.sqrt(a * b)
    lognorm = 0.5 * p * math.log(a / b) - math.log(2.0) - math.log(scipy.special.kve(p, omega)) + omega
    return lognorm + (p - 1.0) * np.log(x) - 0.5 * (a * x + b / x)


def gig_mean(p: float, a: float, b: float) -> float:
    """Closed-form mean via the Bessel ratio ``K_{p+1}/K_p``."""
    GigParams(p, a, b)
    if b == 0.0:
        return 2.0 * p / a
    if a == 0.0:
        return b / 2.0 / (-p - 1.0) if p < -1 else math.inf
    omega = math.sqrt(a * b)
    return math.sqrt(b / a) * scipy.special.kve(p + 1.0, omega) / scipy.special.kve(p, omega)


# --------------------------------------------------------------------------
# Wishart family and scalar laws


def inverse_wishart_sample(df: float, scale, rng: np.random.Generator) -> np.ndarray:
    """Draw from ``IW(df, scale)`` with the Bartlett decomposition."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    if not df > d - 1:
        raise DistributionError(f"inverse Wishart needs df > dim - 1 = {d - 1}, got {df}")
    C = cholesky(scale, "inverse Wishart scale")
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    A[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    # Sigma = C A^{-T} A^{-1} C'
    T = C @ scipy.linalg.solve_triangular(A, np.eye(d), lower=True).T
    S = T @ T.T
    return 0.5 * (S + S.T)


def inverse_wishart_logpdf(X, df: float, scale) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    Lx = cholesky(X, "inverse Wishart argument")
    Ls = cholesky(scale, "inverse Wishart scale")
    logdet_x = 2.0 * np.sum(np.log(np.diag(Lx)))
    logdet_s = 2.0 * np.sum(np.log(np.diag(Ls)))
    tr = np.trace(scipy.linalg.cho_solve((Lx, True), scale))
    return (
        0.5 * df * logdet_s
        - 0.5 * df * d * math.log(2.0)
        - scipy.special.multigammaln(0.5 * df, d)
        - 0.5 * (df + d + 1) * logdet_x
        - 0.5 * tr
    )


def gamma_sample(shape: float, rate: float, rng: np.random.Generator, size=None):
    if not (shape > 0 and rate > 0):
        raise DistributionError(f"gamma needs positive shape and rate, got {shape}, {rate}")
    return rng.gamma(shape, 1.0 / rate, size=size)


def gamma_logpdf(x, shape: float, rate: float):
    x = np.asarray(x, dtype=float)
    return shape * math.log(rate) - scipy.special.gammaln(shape) + (shape - 1) * np.log(x) - rate * x


def dirichlet_sample(alpha, rng: np.random.Generator) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise DistributionError("dirichlet concentrations must be positive")
    g = rng.gamma(alpha)
    return g / g.sum()


def exponential_sample(rate, rng: np.random.Generator, size=None):
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise DistributionError("exponential rate must be positive")
    return rng.exponential(1.0 / rate, size=size)


def vec_covariance(covs: Sequence[np.ndarray]) -> np.ndarray:
    """Dense ``Sigma_N kron ... kron Sigma_1``."""
    return kron_all(covs)
