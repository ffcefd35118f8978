"""Model-based qubit noise spectroscopy.

Fixed-total-time probe sequences, SchWARMA simulation of dephasing
experiments, NNLS spectrum inversion, classical ARMA estimators and direct
gradient fits of ARMA models to survival probabilities.
"""
from .arma import (ArmaModel, AutocovarianceSeq, SpectrumEstimate, ar_roots, autocovariance,
                   is_stationary, psd, psd_peaks, psd_values, reflect_poles, resonance,
                   sample_trajectory)
from .classical import (cepstral_arma, kappa_optimize, ma_fit, music, music_matrix,
                        yule_walker)
from .errors import *  # noqa: F401,F403
from .gradfit import (CompositeSpec, FitOptions, FitResult, composite_fit, fit, fit_beta,
                      gradient, loss, model_select)
from .invert import (autocov_from_spectrum, build_filter_matrix, chi_from_probs, estimate_nnls,
                     interpolate, mean_power_estimate, nnls_solve)
from .probe import (ProbeSequence, filter_function, generate_fttps, overlap_chi,
                    overlap_chi_time, predict_survival)
from .sim import QnsDataset, load_dataset, save_dataset, simulate_qns

__version__ = "0.1.0"
