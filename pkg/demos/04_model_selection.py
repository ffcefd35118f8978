"""
Model-order selection with AIC and BIC
======================================

Fit every ARMA(p, q) with ``p + q + 1 <= 6`` to a correlated-noise dataset
and compare the orders picked by MSE, AIC and BIC. The selected SchWARMA
spectrum is then compared with the spline-interpolated NNLS estimate.
"""

import tempfile
from pathlib import Path

import numpy as np

from mbqns import ArmaModel, estimate_nnls, generate_fttps, model_select, psd_values, simulate_qns
from mbqns.gradfit import grid_to_csv, select_from_grid
from mbqns.invert import interpolate

pair = lambda r, th: np.real(np.poly([r * np.exp(1j * th), r * np.exp(-1j * th)]))
a = np.convolve(pair(0.9, 0.3 * np.pi), pair(0.9, 0.5 * np.pi))
truth = ArmaModel(a[1:], [0.01])

seqs = generate_fttps(64)
dataset = simulate_qns(truth, seqs, trajectories=1000, shots=1000, seed=4)

best = model_select(dataset, max_params=6, criterion="bic")
for name in ("mse", "aic", "bic"):
    print(name, "selects", select_from_grid(best.grid, name).order)

# %%
# The whole grid is kept for diagnostics and can be written as CSV.
path = Path(tempfile.mkdtemp()) / "selection_grid.csv"
grid_to_csv(best.grid, path)
print(path.read_text().splitlines()[:4])

# %%
# Compare reconstruction errors over the probed band.
band = np.linspace(np.pi / 64, np.pi, 2000)
target = psd_values(truth, band)


def l2(values):
    return np.sqrt(np.trapezoid((values - target) ** 2, band) / np.trapezoid(target ** 2, band))


print("BIC SchWARMA L2 error: %.3f" % l2(psd_values(best.model, band)))
print("NNLS spline L2 error:  %.3f" % l2(interpolate(estimate_nnls(dataset), band).power))
