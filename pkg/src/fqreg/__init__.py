"""Bayesian functional quantile regression with wavelet bases and
global-local shrinkage priors."""

__version__ = "0.1.0"

from .data import FunctionalDataset  # noqa: E402
from .dists import QuantileLevel, RngStream  # noqa: E402
from .estimator import FunctionalQuantileRegressor  # noqa: E402
from .exceptions import ConfigError, DataError, FQRError, NumericalError  # noqa: E402
from .gibbs import (  # noqa: E402
    GibbsSampler, MCMCSpec, ModelSpec, PosteriorDraws, PriorSpec, run_chain,
    run_chains,
)
from .inference import InferenceResult, simbas, simultaneous_band, summarize  # noqa: E402
from .wavelet import BasisTransform, WaveletBasis, WaveletSpec, build_basis  # noqa: E402

__all__ = [
    "__version__",
    "FunctionalDataset",
    "QuantileLevel",
    "RngStream",
    "FunctionalQuantileRegressor",
    "FQRError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "GibbsSampler",
    "MCMCSpec",
    "ModelSpec",
    "PosteriorDraws",
    "PriorSpec",
    "run_chain",
    "run_chains",
    "InferenceResult",
    "simbas",
    "simultaneous_band",
    "summarize",
    "BasisTransform",
    "WaveletBasis",
    "WaveletSpec",
    "build_basis",
]
