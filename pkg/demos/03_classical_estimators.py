"""
Classical estimators on an NNLS spectrum
========================================

The NNLS band estimate defines an autocovariance sequence through a cosine
transform. Yule-Walker, MA moment matching, cepstral ARMA and MUSIC all
start from there.
"""

import numpy as np

from mbqns import ArmaModel, estimate_nnls, generate_fttps, psd_values, simulate_qns
from mbqns.arma import autocovariance, resonance
from mbqns.classical import cepstral_arma, ma_fit, music, yule_walker
from mbqns.invert import autocov_from_spectrum

# On exact autocovariances the parametric estimators are exact.
ar2 = ArmaModel([-1.2, 0.6], [1.0])
print(yule_walker(autocovariance(ar2, 6), 2))
ma2 = ArmaModel([], [1.0, 0.5, -0.2])
print(ma_fit(autocovariance(ma2, 3), 2))

# %%
# From qubit data the chain is dataset -> NNLS bands -> lags -> model.
truth = resonance(0.3 * np.pi, 0.9, 0.02)
seqs = generate_fttps(64)
dataset = simulate_qns(truth, seqs, trajectories=0, shots=0, seed=0)
band = estimate_nnls(dataset)
lags = autocov_from_spectrum(band, 65)

grid = np.linspace(np.pi / 64, np.pi, 512)
target = psd_values(truth, grid)


def rel_err(model):
    return np.linalg.norm(psd_values(model, grid) - target) / np.linalg.norm(target)


print("YW AR(2) psd error:       %.3f" % rel_err(yule_walker(lags, 2)))
print("cepstral ARMA(2,1) error: %.3f" % rel_err(cepstral_arma(band, 2, 1, dataset=dataset)))

# %%
# MUSIC looks for line components. A real tone shows up as a +- pair.
res = music(lags, 2)
print("MUSIC peaks / pi:", np.round(res.signed_peaks() / np.pi, 4))
