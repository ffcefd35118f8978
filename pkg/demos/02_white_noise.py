"""
White-noise power from simulated survival data
==============================================

Simulate 64 probe sequences under white dephasing noise, then estimate the
noise power three ways: the closed-form mean of ``chi``, NNLS inversion and
a single-parameter SchWARMA fit.
"""

import warnings

import numpy as np

from mbqns import ArmaModel, estimate_nnls, fit, generate_fttps, simulate_qns
from mbqns.errors import NoImprovement
from mbqns.invert import mean_power_estimate

# a cepstral start that is already optimal is reported as NoImprovement
warnings.simplefilter("ignore", NoImprovement)

power = 0.01
seqs = generate_fttps(64)
dataset = simulate_qns(ArmaModel.white(np.sqrt(power)), seqs, trajectories=1000,
                       shots=1000, seed=2)
print("survival probabilities:", np.round(dataset.probs[:8], 3), "...")

# %%
# Every FTTPS sequence sees the same ``chi = K sigma^2 / 2`` under white
# noise, so the mean of ``2 chi / K`` already estimates the power.
print("mean-chi estimate:  %.5f" % mean_power_estimate(dataset))

# %%
# NNLS recovers a band-by-band spectrum; its band-averaged power is close
# to the truth but individual bands scatter.
band = estimate_nnls(dataset)
print("NNLS band mean:     %.5f  (band std %.5f)" % (band.power.mean(), band.power.std()))

# %%
# The MA(0) SchWARMA fit has a single coefficient ``b0`` with ``S = b0^2``.
result = fit(dataset, 0, 0)
print("MA(0) fit:          %.5f  (%d Adam steps, init from %s)"
      % (result.model.ma[0] ** 2, result.iterations, result.init_source))
print("relative error:     %.2f%%" % (100 * (result.model.ma[0] ** 2 / power - 1)))
