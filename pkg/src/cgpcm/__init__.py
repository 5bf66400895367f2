"""Causal and acausal Gaussian process convolution models.

A stationary series is modelled as white noise passed through a random
filter with a Gaussian-process prior. Inference is variational over inducing
values of the filter (``u``) and of the excitation (``z``).
"""

from .kernels import Hyperparams, Mode
from .mf import MFOptions, MFState, Observations, elbo, optimize_mf, saturated_elbo
from .moments import MomentTensors, WhitenedGaussian, assemble_tensors, mean_f, var_f
from .pipeline import FitConfig, SampleConfig, fit, load_fit, save_fit, simulate
from .predict import predict_filter, predict_function, predict_kernel, predict_psd
from .prior import InducingLayout, InitSpec, init_hyperparams, place_inducing_points
from .smf import SMFPosterior, ess_sample, run_smf

__version__ = "0.1.0"

__all__ = [
    "FitConfig",
    "Hyperparams",
    "InducingLayout",
    "InitSpec",
    "MFOptions",
    "MFState",
    "Mode",
    "MomentTensors",
    "Observations",
    "SMFPosterior",
    "SampleConfig",
    "WhitenedGaussian",
    "assemble_tensors",
    "elbo",
    "ess_sample",
    "fit",
    "init_hyperparams",
    "load_fit",
    "mean_f",
    "optimize_mf",
    "place_inducing_points",
    "predict_filter",
    "predict_function",
    "predict_kernel",
    "predict_psd",
    "run_smf",
    "save_fit",
    "saturated_elbo",
    "simulate",
    "var_f",
]
