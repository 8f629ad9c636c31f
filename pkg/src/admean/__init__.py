"""Covariance-adaptive differentially private mean estimation."""
from admean.covsafe import CovNoise, CovResult, CovTranscript, covsafe, loo_covariance, pair_transform
from admean.datagen import DistSpec, check_concentration, err_sigma, paired_cov, sample
from admean.errors import AdmeanError, InsufficientSample
from admean.estimator import PrivMeanParams, RunRecord, adamean, delta_prime, privmean, schedule
from admean.meansafe import MeanNoise, MeanTranscript, group_log_diameter, meansafe
from admean.mechanisms import PrivacyBudget, Rng, laplace, laplace_vec, topk
from admean.psd import PsdMatrix, d_psd, mahalanobis_sq, rank_one_downdate

__version__ = "0.1.0"
