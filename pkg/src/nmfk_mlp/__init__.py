"""Estimate the latent dimensionality of nonnegative data with NMFk and a window classifier."""

from .errors import DataError, NmfkError, NumericalError
from .mlp import MlpModel, TrainConfig, forward, predict, train
from .nmf import FactorPair, NmfConfig, nmf_factorize, relative_error
from .nmfk import KScanRecord, ScanConfig, scan
from .pipeline import RankPrediction, VoteTally, baseline_aic_argmin, baseline_silhouette_threshold, predict_rank, tally_votes
from .synth import GenSpec, generate, swimmer

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "NmfkError",
    "NumericalError",
    "MlpModel",
    "TrainConfig",
    "forward",
    "predict",
    "train",
    "FactorPair",
    "NmfConfig",
    "nmf_factorize",
    "relative_error",
    "KScanRecord",
    "ScanConfig",
    "scan",
    "RankPrediction",
    "VoteTally",
    "baseline_aic_argmin",
    "baseline_silhouette_threshold",
    "predict_rank",
    "tally_votes",
    "GenSpec",
    "generate",
    "swimmer",
]
