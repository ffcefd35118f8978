"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line; the lines are also
collected in the pytest terminal summary. Run on its own with

    python3 -m pytest tests/test_acceptance.py -v -s
"""

import numpy as np
import pytest
from scipy.stats import wilcoxon

from mbqns import gradfit
from mbqns.arma import ArmaModel, autocovariance, psd, psd_peaks, psd_values, resonance
from mbqns.classical import cepstral_arma, ma_fit, ma_objective, yule_walker
from mbqns.invert import estimate_nnls, interpolate
from mbqns.probe import generate_fttps, overlap_chi, overlap_chi_time
from mbqns.sim import simulate_qns

from conftest import random_monic, random_stationary

K = 64
W_STAR = np.pi / K

pytestmark = pytest.mark.filterwarnings("ignore::mbqns.errors.NoImprovement")


@pytest.fixture(scope="module")
def seqs():
    return generate_fttps(K)


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_overlap_equivalence(seqs, report):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        p, q = rng.integers(0, 7, size=2)
        model = random_stationary(rng, p, q, max_radius=0.9)
        for seq in seqs:
            freq, time = overlap_chi(model, seq), overlap_chi_time(model, seq)
            worst = max(worst, abs(freq - time) / abs(time))
    assert report(1, worst < 1e-4, f"overlap chi, 50 models x 64 sequences, worst rel err {worst:.2e} (< 1e-4)")


def test_gradient_suite(seqs, report):
    rng = np.random.default_rng(7)
    worst = 0.0
    h = 1e-6
    for case in range(100):
        p, q = rng.integers(0, 5, size=2)
        true = random_stationary(rng, p, q, max_radius=0.8, scale=0.04)
        ds = simulate_qns(true, seqs, trajectories=0, shots=1000, seed=case)
        model = random_stationary(rng, p, q, max_radius=0.8, scale=0.04)
        analytic = np.concatenate(gradfit.gradient(model, ds))
        theta = np.concatenate((model.ar, model.ma))
        numeric = np.empty_like(theta)
        for i in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[i] += h
            down[i] -= h
            numeric[i] = (gradfit.loss(ArmaModel(up[:p], up[p:]), ds)
                          - gradfit.loss(ArmaModel(down[:p], down[p:]), ds)) / (2 * h)
        worst = max(worst, np.max(np.abs(analytic - numeric) / np.abs(numeric)))
    assert report(2, worst < 1e-5, f"analytic vs central differences, 100 cases, worst rel err {worst:.2e} (< 1e-5)")


def test_white_recovery(seqs, report):
    power = 0.01
    errs = []
    for seed in range(25):
        ds = simulate_qns(ArmaModel.white(np.sqrt(power)), seqs, 1000, 1000, seed=seed)
        errs.append(gradfit.fit(ds, 0, 0).model.ma[0] ** 2 / power - 1)
    hits = int(np.sum(np.abs(errs) < 0.03))

    # the sigma = 0.05 setting is reported but not asserted
    weak = 0.05 ** 2
    weak_hits = 0
    for seed in range(25):
        ds = simulate_qns(ArmaModel.white(0.05), seqs, 1000, 1000, seed=seed)
        weak_hits += abs(gradfit.fit(ds, 0, 0).model.ma[0] ** 2 / weak - 1) < 0.03

    ok = hits >= 0.9 * 25
    assert report(3, ok, f"white power 0.01: {hits}/25 within 3% (need >= 23), "
                         f"max err {np.max(np.abs(errs)):.2%}; sigma=0.05 info only: {weak_hits}/25")


def test_exact_recovery(report):
    grid = np.linspace(0, np.pi, 1024)
    dense = np.linspace(0, np.pi, 4097)

    ar = ArmaModel([-1.2, 0.8, -0.2], [1.0])
    yw = yule_walker(autocovariance(ar, 8), 3)
    yw_err = np.max(np.abs(psd_values(yw, grid) - psd_values(ar, grid)) / psd_values(ar, grid))

    ma = ArmaModel([], [1.0, 0.6, -0.3, 0.1])
    lags = autocovariance(ma, 4)
    ma_obj = ma_objective(ma_fit(lags, 3).ma, lags)

    rng = np.random.default_rng(3)
    cep_err = 0.0
    for _ in range(10):
        p, q = rng.integers(0, 4, size=2)
        true = ArmaModel(random_monic(rng, p, 0.8)[1:], rng.uniform(0.5, 2) * random_monic(rng, q, 0.7))
        m = cepstral_arma(psd(true, dense), p, q)
        cep_err = max(cep_err, rel_l2(psd_values(m, grid), psd_values(true, grid)))

    ok = yw_err < 1e-6 and ma_obj < 1e-12 and cep_err < 1e-3
    assert report(4, ok, f"YW psd err {yw_err:.1e} (< 1e-6), MA objective {ma_obj:.1e} (< 1e-12), "
                         f"cepstral worst rel L2 {cep_err:.1e} (< 1e-3)")


def _two_pole_pairs():
    def pair(radius, angle):
        return np.real(np.poly([radius * np.exp(1j * angle), radius * np.exp(-1j * angle)]))
    a = np.convolve(pair(0.9, 0.3 * np.pi), pair(0.9, 0.5 * np.pi))
    return ArmaModel(a[1:], [0.01])


def test_model_selection_ordering(seqs, report):
    true = _two_pole_pairs()
    band = np.linspace(W_STAR, np.pi, 2000)
    target = psd_values(true, band)

    def l2(values):
        return np.sqrt(np.trapezoid((values - target) ** 2, band) / np.trapezoid(target ** 2, band))

    err_nnls, err_bic = [], []
    for seed in range(25):
        ds = simulate_qns(true, seqs, 1000, 1000, seed=seed)
        err_nnls.append(l2(interpolate(estimate_nnls(ds), band).power))
        err_bic.append(l2(psd_values(gradfit.model_select(ds, 8, "bic").model, band)))
    med_bic, med_nnls = np.median(err_bic), np.median(err_nnls)
    pvalue = wilcoxon(err_bic, err_nnls, alternative="less").pvalue
    ok = med_bic < med_nnls and pvalue < 0.05
    assert report(5, ok, f"median L2 err BIC {med_bic:.3f} vs NNLS {med_nnls:.3f}, "
                         f"Wilcoxon p = {pvalue:.1e} (< 0.05)")


def _nearest_peak(model, center):
    peaks = psd_peaks(model)
    return peaks[np.argmin(np.abs(peaks - center))]


def test_superresolution(seqs, report):
    center = 20.5 * W_STAR
    truth = resonance(center, 0.95, 0.02)

    exact = simulate_qns(truth, seqs, 0, 0, seed=0)
    band = estimate_nnls(exact)
    nnls_err = abs(band.freqs[np.argmax(band.power)] - center)
    exact_err = abs(_nearest_peak(gradfit.fit(exact, 2, 0).model, center) - center)

    errs = []
    for seed in range(25):
        ds = simulate_qns(truth, seqs, 1000, 1000, seed=seed)
        errs.append(abs(_nearest_peak(gradfit.fit(ds, 2, 0).model, center) - center))
    hits = int(np.sum(np.array(errs) < W_STAR / 5))

    ok = exact_err < W_STAR / 10 and np.isclose(nnls_err, W_STAR / 2) and hits >= 0.8 * 25
    assert report(6, ok, f"exact: AR(2) err {exact_err / W_STAR:.4f} w* (< 0.1), NNLS err "
                         f"{nnls_err / W_STAR:.3f} w* (= 0.5); 1000 shots: {hits}/25 below w*/5 (need >= 20)")


def test_two_peak_resolution(seqs, report):
    centers = np.array([15.3, 40.7]) * W_STAR
    ds = simulate_qns([resonance(c, 0.95, 0.015) for c in centers], seqs, 0, 0, seed=0)
    counts = {p: len(psd_peaks(gradfit.fit(ds, p, 0).model)) for p in (2, 4, 6, 8)}
    peaks = psd_peaks(gradfit.fit(ds, 12, 0).model)
    errs = np.array([np.min(np.abs(peaks - c)) for c in centers])
    ok = len(peaks) == 2 and np.all(errs < W_STAR / 5)
    assert report(7, ok, f"AR(12): {len(peaks)} peaks, errs {np.round(errs / W_STAR, 4).tolist()} w* "
                         f"(< 0.2); lower-order peak counts {counts}")


def test_composite_beta(seqs, report):
    native = ArmaModel([-0.7], [0.03])
    injected = ArmaModel([-0.3, 0.5], [0.04])

    def models(beta):
        return [injected] if beta == 0 else [native.scaled(beta), injected]

    exact_err, noisy_ok, worst = 0.0, True, {}
    for beta in (0.0, 0.5, 1.0):
        ds = simulate_qns(models(beta), seqs, 0, 0, seed=0)
        exact_err = max(exact_err, abs(gradfit.fit_beta(native, injected, ds) - beta))
        errs = []
        for seed in range(5):
            ds = simulate_qns(models(beta), seqs, 10000, 10000, seed=seed)
            errs.append(abs(gradfit.fit_beta(native, injected, ds) - beta))
        tol = 0.05 * beta if beta > 0 else 0.05
        noisy_ok &= max(errs) < tol
        worst[beta] = round(max(errs) / (beta or 1.0), 4)
    ok = exact_err < 1e-3 and noisy_ok
    assert report(8, ok, f"exact worst abs err {exact_err:.1e} (< 1e-3); 10000 shots worst rel err "
                         f"by beta {worst} (< 0.05, absolute at beta=0)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v", "-s"]))
