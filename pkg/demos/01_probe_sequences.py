"""
Probe sequences and filter functions
====================================

Each FTTPS sequence flips the qubit's toggling-frame sign in a square wave
with ``j`` half periods over ``K`` gates. Its filter function is
concentrated near ``j * pi / K``, so the set of ``K`` sequences tiles the
band ``[0, pi]`` in steps of ``w* = pi / K``.
"""

import numpy as np

from mbqns import ArmaModel, generate_fttps
from mbqns.invert import build_filter_matrix
from mbqns.probe import filter_values, overlap_chi, overlap_chi_time

K = 64
seqs = generate_fttps(K)
print(seqs[2], seqs[2].signs[:12])

# %%
# Where does each filter peak? Sequence 1 peaks at DC and sequence 63 at pi,
# both one band step from their nominal frequency; the rest sit on it.
freqs = np.linspace(0, np.pi, 4097)
peaks = np.array([freqs[np.argmax(filter_values(s, freqs))] for s in seqs])
offset = (peaks - np.array([s.peak_freq for s in seqs])) / (np.pi / K)
print("peak offset in band steps:", np.round(offset[[0, 1, 31, 62, 63]], 3))

# %%
# The decay parameter ``chi`` can be computed as a frequency-domain overlap
# or, for an ARMA model, directly from the Toeplitz autocovariance.
model = ArmaModel([-1.2, 0.5], [0.05, 0.02])
for s in seqs[:3]:
    print(s.index, overlap_chi(model, s), overlap_chi_time(model, s))

# %%
# Discretising the overlap on the band centres gives the filter matrix used
# by the NNLS inversion. White noise is reproduced exactly.
fmat = build_filter_matrix(seqs)
white = np.full(K, 0.01)
print("F @ white / (K sigma^2 / 2):", np.ptp(fmat.matrix @ white / (K * 0.01 / 2)))
print("condition number: %.0f" % np.linalg.cond(fmat.matrix))
