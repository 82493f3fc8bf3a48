"""Bayesian tensor autoregression with PARAFAC coefficients and shrinkage priors."""
from .gibbs import PriorConfig, Trace, run_sampler
from .irf import ShockSpec, girf, oirf
from .model import ArtModel, TensorSeries, check_stationarity, simulate, to_var
from .parafac import ParafacCoefficient

__all__ = [
    "ArtModel",
    "TensorSeries",
    "ParafacCoefficient",
    "PriorConfig",
    "Trace",
    "ShockSpec",
    "simulate",
    "to_var",
    "check_stationarity",
    "run_sampler",
    "girf",
    "oirf",
]
__version__ = "0.1.0"
