"""Simulation and drift estimation for Wishart processes."""

from .asymptotics import ErgodicMoments, LimitLaw, ergodic_moments, limit_sampler, make_limit_law
from .estimators import DiffusionWhitener, WishartDriftEstimator, WishartPipeline, check_path
from .exceptions import NumericalFailure, ValidationError, WishartError
from .harness import ExperimentConfig, mse_table, run_experiment
from .laplace import joint_laplace, joint_laplace_general, riccati_oracle
from .mle import Estimate, estimate, full_pipeline, pipeline_from_stats
from .model import WishartSpec
from .pathfun import PathStats, path_functionals
from .sim import RngStream, SamplePath, path_sample, transition_sample

__version__ = "0.1.0"

__all__ = [
    "DiffusionWhitener", "ErgodicMoments", "Estimate", "ExperimentConfig", "LimitLaw",
    "NumericalFailure", "PathStats", "RngStream", "SamplePath", "ValidationError", "WishartDriftEstimator",
    "WishartError", "WishartPipeline", "WishartSpec", "check_path", "ergodic_moments", "estimate",
    "full_pipeline", "joint_laplace", "joint_laplace_general", "limit_sampler", "make_limit_law",
    "mse_table", "path_functionals", "path_sample", "pipeline_from_stats", "riccati_oracle",
    "run_experiment", "transition_sample",
]
