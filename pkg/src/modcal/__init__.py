"""Recalibrate any regression predictor into a calibrated distribution predictor.

A base prediction ``f(x)`` is turned into a CDF ``H[x](y) = q(phi(f(x), y))``
where ``phi`` is a calibration score increasing in ``y`` and ``q`` a monotone
map fitted to the scores of a held-out calibration set.
"""

from .base import BasePredictor, parse_kind, train_base
from .conformal import (AbsCalibrationScore, AbsResidue, EmptyIntervalError,
                        conformal_interval, signed_score_from_nonconformity)
from .core import (Dataset, Ensemble, Gaussian, Interval, Point, Quantiles, SplitSpec,
                   fit_standardizer, split_dataset)
from .interp import (NafConfig, fit_linear, fit_map, fit_naf, fit_naive, fit_random,
                     lambda_accuracy)
from .kernels import BACKEND
from .mcc import (RecalibratedDistribution, RecalibratedPredictor, cdf_eval, cdf_inverse,
                  credible_interval, predictive_moments, recalibrate)
from .metrics import crps, ece_debiased, evaluate, ks_uniformity, nll, pit_values, sharpness
from .scores import default_score_for, make_score

__version__ = "0.1.0"

__all__ = [
    "AbsCalibrationScore", "AbsResidue", "BACKEND", "BasePredictor", "Dataset",
    "EmptyIntervalError", "Ensemble", "Gaussian", "Interval", "NafConfig", "Point",
    "Quantiles", "RecalibratedDistribution", "RecalibratedPredictor", "SplitSpec",
    "cdf_eval", "cdf_inverse", "conformal_interval", "credible_interval", "crps",
    "default_score_for", "ece_debiased", "evaluate", "fit_linear", "fit_map", "fit_naf",
    "fit_naive", "fit_random", "fit_standardizer", "ks_uniformity", "lambda_accuracy",
    "make_score", "nll", "parse_kind", "pit_values", "predictive_moments", "recalibrate",
    "sharpness", "signed_score_from_nonconformity", "split_dataset", "train_base",
]
