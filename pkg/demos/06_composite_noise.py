"""
Native plus injected noise
==========================

A device has an unknown native spectrum on top of which a known noise
process is injected. With a reference measurement of the native spectrum,
``fit_beta`` finds how strongly the native part contributes and
``composite_fit`` learns an ARMA model for the injected part.
"""

import warnings

import numpy as np

from mbqns import ArmaModel, generate_fttps, psd_values, simulate_qns
from mbqns.errors import NoImprovement
from mbqns.gradfit import composite_fit, fit_beta

# a cepstral start that is already optimal is reported as NoImprovement
warnings.simplefilter("ignore", NoImprovement)

native = ArmaModel([-0.7], [0.03])
injected = ArmaModel([-0.3, 0.5], [0.04])
seqs = generate_fttps(64)

for beta in (0.0, 0.5, 1.0):
    models = [injected] if beta == 0 else [native.scaled(beta), injected]
    dataset = simulate_qns(models, seqs, trajectories=10000, shots=10000, seed=1)
    print("true beta %.1f -> fitted %.4f" % (beta, fit_beta(native, injected, dataset)))

# %%
# When the injected spectrum is unknown, fix beta and fit it as ARMA(2, 0)
# on top of the scaled native background.
dataset = simulate_qns([native.scaled(0.5), injected], seqs, 0, 0, seed=0)
spec, result = composite_fit(dataset, native, 2, 0, beta=0.5)
grid = np.linspace(0, np.pi, 512)
err = np.linalg.norm(psd_values(spec.injected, grid) - psd_values(injected, grid))
print("injected model:", spec.injected)
print("relative psd error: %.2e" % (err / np.linalg.norm(psd_values(injected, grid))))
