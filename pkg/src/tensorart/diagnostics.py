"""Posterior summaries and convergence diagnostics for sampler traces."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import ArtModel, check_stationarity
from .tensor import TensorError

__all__ = ["autocovariance", "effective_sample_size", "split_rhat", "posterior_summary", "normalized_covs"]

QUANTILES = (0.05, 0.16, 0.5, 0.84, 0.95)


def autocovariance(x) -> np.ndarray:
    """Biased sample autocovariances at lags ``0..n-1`` via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    xc = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    return np.fft.irfft(f * np.conj(f), m)[:n] / n


def effective_sample_size(chains) -> float:
    """Effective sample size with Geyer's initial monotone sequence estimator.

    ``chains`` is a 1-D draw sequence or a ``(chains, draws)`` array; the
    autocorrelations are averaged over chains.
    """
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = np.stack([autocovariance(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    B_over_n = x.mean(axis=1).var(ddof=1) if m > 1 else 0.0
    var_plus = W * (n - 1) / n + B_over_n
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums Gamma_k = rho_{2k} + rho_{2k+1}; keep while positive, force monotone
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    total = 0.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = max(-1.0 + 2.0 * total, 1.0 / np.log10(m * n + 10))
    return float(m * n / tau)


def split_rhat(chains) -> float:
    """Split-R-hat: every chain is halved and the potential scale reduction computed."""
    x = np.atleast_2d(np.asarray(chains, dtype=float))
    n = x.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([x[:, :n], x[:, -n:]], axis=0)
    W = halves.var(axis=1, ddof=1).mean()
    B = n * halves.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))


def normalized_covs(covs: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Rescale draws so that ``Sigma_j[0, 0] = 1`` for every mode after the first.

    The scales are moved into ``Sigma_1`` so the Kronecker product is unchanged.
    ``covs[j]`` has shape ``(draws, I_j, I_j)``.
    """
    out = [np.array(S, dtype=float) for S in covs]
    for j in range(1, len(out)):
        s = out[j][:, 0, 0].copy()
        out[j] /= s[:, None, None]
        out[0] *= s[:, None, None]
    return out


def _stats(a: np.ndarray) -> dict:
    q = np.quantile(a, QUANTILES, axis=0)
    out = {"mean": a.mean(axis=0), "sd": a.std(axis=0, ddof=1) if a.shape[0] > 1 else np.zeros(a.shape[1:])}
    for p, v in zip(QUANTILES, q):
        out[f"q{int(round(p * 100)):02d}"] = v
    return out


def posterior_summary(traces) -> dict:
    """Means, quantiles and diagnostics of one trace or a list of chains.

    Scalars (``tau``, ``gamma`` and the diagonals of the normalised
    ``Sigma_j``) get ESS and split-R-hat computed across chains.
    """
    if not isinstance(traces, (list, tuple)):
        traces = [traces]
    if not traces or any(len(t) == 0 for t in traces):
        raise TensorError("cannot summarise an empty trace")
    dims = traces[0].dims
    B = np.concatenate([t.B for t in traces])
    covs = [np.concatenate([t.covs[j] for t in traces]) for j in range(len(dims))]
    covs_n = normalized_covs(covs)
    Bmean = B.mean(axis=0)
    pm_model = ArtModel(dims, (Bmean,), tuple(np.eye(d) for d in dims))
    stat = check_stationarity(pm_model)
    L = min(len(t) for t in traces)
    diag = {}
    per_chain = [t.scalars() for t in traces]
    norm_chain = [normalized_covs(t.covs) for t in traces]
    names = ["tau", "gamma"]
    series = {k: np.stack([pc[k][:L] for pc in per_chain]) for k in names}
    for j, d in enumerate(dims):
        for i in range(d):
            key = f"Sigma{j + 1}[{i + 1},{i + 1}]"
            series[key] = np.stack([nc[j][:L, i, i] for nc in norm_chain])
    for k, v in series.items():
        diag[k] = {"mean": float(v.mean()), "ess": effective_sample_size(v), "rhat": split_rhat(v)}
    return {
        "dims": list(dims),
        "draws": int(B.shape[0]),
        "chains": len(traces),
        "B": _stats(B),
        "covs": [_stats(S) for S in covs_n],
        "rho_posterior_mean": float(stat["rho"]),
        "stationary": bool(stat["stationary"]),
        "scalars": diag,
    }
