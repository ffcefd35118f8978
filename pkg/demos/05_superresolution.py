"""
Locating a peak between probe bins
==================================

NNLS can only place a spectral peak on one of the ``K`` band centres. An
AR(2) SchWARMA fit has a continuous centre frequency, so it can resolve a
resonance that sits between two bins.
"""

import warnings

import numpy as np

from mbqns import estimate_nnls, fit, generate_fttps, simulate_qns
from mbqns.arma import psd_peaks, resonance
from mbqns.errors import NoImprovement

# a cepstral start that is already optimal is reported as NoImprovement
warnings.simplefilter("ignore", NoImprovement)

K = 64
w_star = np.pi / K
seqs = generate_fttps(K)

print(" centre    NNLS err   AR(2) err   (units of w*)")
for centre_bin in np.arange(20.0, 21.01, 0.2):
    centre = centre_bin * w_star
    dataset = simulate_qns(resonance(centre, 0.95, 0.02), seqs, trajectories=1000,
                           shots=1000, seed=int(10 * centre_bin))
    band = estimate_nnls(dataset)
    nnls_peak = band.freqs[np.argmax(band.power)]
    peaks = psd_peaks(fit(dataset, 2, 0).model)
    ar_peak = peaks[np.argmin(np.abs(peaks - centre))]
    print("%7.1f  %9.3f  %10.3f" % (centre_bin, abs(nnls_peak - centre) / w_star,
                                    abs(ar_peak - centre) / w_star))

# %%
# Two resonances need a higher AR order before both peaks appear.
centres = np.array([15.3, 40.7]) * w_star
dataset = simulate_qns([resonance(c, 0.95, 0.015) for c in centres], seqs, 0, 0, seed=0)
for p in (2, 4, 12):
    print("AR(%d) peaks / w*:" % p, np.round(psd_peaks(fit(dataset, p, 0).model) / w_star, 3))
