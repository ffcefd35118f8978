import json
import warnings

import numpy as np
import pytest

from mbqns.arma import ArmaModel, SpectrumEstimate, is_stationary, psd, psd_values
from mbqns.errors import NoImprovement, PoleOnGrid
from mbqns.gradfit import (CompositeSpec, FitOptions, composite_fit, fit, fit_beta, gradient,
                           grid_to_csv, information_criteria, loss, model_select,
                           select_from_grid)
from mbqns.probe import generate_fttps
from mbqns.sim import QnsDataset, simulate_qns

from conftest import random_stationary

GRID = np.linspace(0, np.pi, 1024)


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def central_difference(model, dataset, h=1e-6, background=None):
    theta = np.concatenate((model.ar, model.ma))
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        f_up = loss(ArmaModel(up[: model.p], up[model.p:]), dataset, background)
        f_down = loss(ArmaModel(down[: model.p], down[model.p:]), dataset, background)
        grad[i] = (f_up - f_down) / (2 * h)
    return grad


@pytest.fixture(scope="module")
def seqs():
    return generate_fttps(64)


@pytest.fixture(scope="module")
def ar1_exact(seqs):
    return simulate_qns(ArmaModel([-0.6], [0.05]), seqs, trajectories=0, shots=0, seed=0)


class TestLoss:
    def test_exact_fit_is_zero(self, ar1_exact):
        assert loss(ArmaModel([-0.6], [0.05]), ar1_exact) == pytest.approx(0.0, abs=1e-30)

    def test_half_vs_one(self, seqs):
        ds = QnsDataset(seqs, np.full(64, 0.5), 0)
        assert loss(ArmaModel([], [0.0]), ds) == pytest.approx(0.25)

    def test_truth_beats_perturbations(self, seqs):
        true = ArmaModel([-1.1, 0.5], [0.03, 0.01])
        ds = simulate_qns(true, seqs, trajectories=0, shots=0, seed=0)
        base = loss(true, ds)
        rng = np.random.default_rng(1)
        for _ in range(10):
            ar = true.ar + 0.01 * rng.normal(size=2)
            ma = true.ma + 0.002 * rng.normal(size=2)
            assert loss(ArmaModel(ar, ma), ds) > base

    def test_background_is_constant_offset(self, seqs):
        bg = ArmaModel([0.3], [0.03])
        m = ArmaModel([-0.5], [0.04])
        ds = simulate_qns([bg, m], seqs, trajectories=0, shots=0, seed=0)
        assert loss(m, ds, fixed_background=bg) == pytest.approx(0.0, abs=1e-28)
        assert loss(m, ds) > 1e-6

    def test_pole_on_grid(self, ar1_exact):
        with pytest.raises(PoleOnGrid):
            loss(ArmaModel([-1.0], [0.05]), ar1_exact)


class TestGradient:
    def test_finite_differences(self, seqs):
        rng = np.random.default_rng(2024)
        for case in range(20):
            p, q = rng.integers(0, 5, size=2)
            true = random_stationary(rng, p, q, max_radius=0.8, scale=0.04)
            ds = simulate_qns(true, seqs, trajectories=0, shots=1000, seed=case)
            model = random_stationary(rng, p, q, max_radius=0.8, scale=0.04)
            g_ar, g_ma = gradient(model, ds)
            analytic = np.concatenate((g_ar, g_ma))
            numeric = central_difference(model, ds)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-12 * np.abs(numeric).max())

    def test_with_background(self, seqs):
        bg = SpectrumEstimate(GRID, psd_values(ArmaModel([0.5], [0.02]), GRID), "cubic-spline")
        ds = simulate_qns(ArmaModel([-0.3, 0.2], [0.04, 0.01]), seqs, 0, 1000, seed=1)
        model = ArmaModel([-0.2, 0.1], [0.03, 0.0])
        analytic = np.concatenate(gradient(model, ds, fixed_background=bg))
        np.testing.assert_allclose(analytic, central_difference(model, ds, background=bg), rtol=1e-5)

    def test_stationary_at_exact_fit(self, ar1_exact):
        g_ar, g_ma = gradient(ArmaModel([-0.6], [0.05]), ar1_exact)
        assert np.linalg.norm(np.concatenate((g_ar, g_ma))) < 1e-8

    def test_white_underestimate_sign(self, seqs):
        ds = simulate_qns(ArmaModel.white(0.05), seqs, 0, 0, seed=0)
        _, g_ma = gradient(ArmaModel.white(0.03), ds)
        assert g_ma[0] < 0
        _, g_ma = gradient(ArmaModel.white(0.07), ds)
        assert g_ma[0] > 0


class TestCriteria:
    def test_values(self):
        # 64 ln(0.01) = -294.7309; frozen from an independent evaluation
        aic, bic = information_criteria(0.01, 64, 3)
        assert aic == pytest.approx(-288.7309, abs=1e-4)
        assert bic == pytest.approx(-282.2542, abs=1e-4)

    def test_printed_convention(self):
        aic, bic = information_criteria(0.01, 64, 3, convention="printed")
        assert aic == pytest.approx(64 * np.log(0.01) - 6)
        assert bic == pytest.approx(64 * np.log(0.01) - 3 * np.log(64))

    def test_difference(self, ar1_exact):
        for p, q in [(0, 0), (1, 0), (1, 2)]:
            res = fit(ar1_exact, p, q, opts=FitOptions(max_steps=100))
            n = p + q + 1
            assert res.aic - res.bic == pytest.approx(n * (2 - np.log(64)))

    def test_zero_mse_is_finite(self):
        aic, bic = information_criteria(0.0, 64, 1)
        assert np.isfinite(aic) and np.isfinite(bic)


class TestFit:
    def test_white_power(self, seqs):
        ds = simulate_qns(ArmaModel.white(0.05), seqs, trajectories=0, shots=0, seed=0)
        res = fit(ds, 0, 0)
        assert res.model.ma[0] ** 2 == pytest.approx(0.0025, rel=1e-3)
        # scalar scan oracle
        levels = np.linspace(0.002, 0.003, 2001)
        best = levels[np.argmin([loss(ArmaModel.white(np.sqrt(v)), ds) for v in levels])]
        assert res.model.ma[0] ** 2 == pytest.approx(best, abs=1e-6)

    def test_ar2_peak(self, seqs):
        z = 0.9 * np.exp(0.4j * np.pi)
        true = ArmaModel(np.real(np.poly([z, np.conj(z)]))[1:], [0.02])
        ds = simulate_qns(true, seqs, trajectories=0, shots=0, seed=0)
        res = fit(ds, 2, 0)
        assert rel_l2(psd_values(res.model, GRID), psd_values(true, GRID)) < 1e-2
        assert res.init_source == "cepstral"
        assert res.stationary

    def test_never_worse_than_start(self, seqs):
        ds = simulate_qns(ArmaModel([-0.5, 0.3], [0.04]), seqs, 500, 1000, seed=3)
        start = ArmaModel([0.0, 0.0], [0.05])
        res = fit(ds, 2, 0, init=start)
        assert res.mse <= loss(start, ds)
        assert res.init_source == "given"

    def test_no_improvement_flag(self, ar1_exact):
        with pytest.warns(NoImprovement):
            res = fit(ar1_exact, 1, 0, init=ArmaModel([-0.6], [0.05]))
        assert not res.improved
        assert res.model == ArmaModel([-0.6], [0.05])

    def test_random_fallback(self, seqs):
        # all-zero power gives no cepstral start; random restarts take over
        ds = QnsDataset(seqs, np.ones(64), 0, seed=5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoImprovement)
            res = fit(ds, 1, 0, seed=5, opts=FitOptions(max_steps=200, restarts=2))
        assert res.init_source == "random"
        assert res.mse < 1e-6

    def test_bad_orders(self, ar1_exact):
        with pytest.raises(ValueError):
            fit(ar1_exact, -1, 0)
        with pytest.raises(ValueError):
            fit(ar1_exact, 1, 0, init=ArmaModel([], [1.0]))

    def test_json(self, tmp_path, ar1_exact):
        res = fit(ar1_exact, 1, 0)
        res.save(tmp_path / "fit.json")
        d = json.loads((tmp_path / "fit.json").read_text())
        for key in ("ar", "ma", "mse", "aic", "bic", "iterations", "init_source", "options"):
            assert key in d
        assert d["options"]["learning_rate"] == 1e-2

    def test_background_equivalence(self, seqs):
        target = ArmaModel([-0.8], [0.03])
        bg = ArmaModel([0.5, 0.2], [0.02])
        plain = fit(simulate_qns(target, seqs, 0, 0, seed=0), 1, 0)
        combined = simulate_qns([bg, target], seqs, 0, 0, seed=0)
        with_bg = fit(combined, 1, 0, fixed_background=bg)
        err_plain = rel_l2(psd_values(plain.model, GRID), psd_values(target, GRID))
        err_bg = rel_l2(psd_values(with_bg.model, GRID), psd_values(target, GRID))
        assert err_plain < 1e-3
        assert err_bg < 1e-3


class TestSelect:
    def test_single_param(self, ar1_exact):
        for crit in ("mse", "aic", "bic"):
            assert model_select(ar1_exact, 1, crit).order == (0, 0)

    def test_grid_and_csv(self, tmp_path, ar1_exact):
        res = model_select(ar1_exact, 3, "bic", opts=FitOptions(max_steps=300))
        assert sorted(res.grid) == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)]
        grid_to_csv(res.grid, tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "p,q,mse,aic,bic" and len(lines) == 7

    def test_mse_never_fewer_params_than_bic(self, seqs):
        ds = simulate_qns(ArmaModel([-0.5], [0.05]), seqs, 1000, 1000, seed=8)
        res = model_select(ds, 4, "bic", opts=FitOptions(max_steps=500))
        by_mse = select_from_grid(res.grid, "mse")
        assert by_mse.model.num_params >= res.model.num_params

    def test_deterministic(self, seqs):
        ds = simulate_qns(ArmaModel([-0.5], [0.05]), seqs, 200, 1000, seed=8)
        a = model_select(ds, 2, "aic", opts=FitOptions(max_steps=200))
        b = model_select(ds, 2, "aic", opts=FitOptions(max_steps=200))
        assert a.model == b.model

    def test_rejects(self, ar1_exact):
        with pytest.raises(ValueError):
            model_select(ar1_exact, 0)
        with pytest.raises(ValueError):
            model_select(ar1_exact, 2, "hqic")

    @pytest.mark.slow
    def test_white_bic_picks_white(self, seqs):
        hits = 0
        for seed in range(25):
            ds = simulate_qns(ArmaModel.white(0.1), seqs, 1000, 1000, seed=seed)
            hits += model_select(ds, 3, "bic").order == (0, 0)
        assert hits >= 20


@pytest.fixture(scope="module")
def parts():
    return ArmaModel([-0.7], [0.03]), ArmaModel([-0.3, 0.5], [0.04])


class TestBeta:
    @pytest.mark.parametrize("beta, tol", [(1.0, 1e-4), (0.5, 1e-3)])
    def test_noiseless(self, seqs, parts, beta, tol):
        nat, inj = parts
        ds = simulate_qns([nat.scaled(beta), inj], seqs, 0, 0, seed=0)
        assert fit_beta(nat, inj, ds) == pytest.approx(beta, abs=tol)

    def test_injected_only(self, seqs, parts):
        nat, inj = parts
        ds = simulate_qns(inj, seqs, 0, 0, seed=0)
        assert fit_beta(nat, inj, ds) == 0.0

    def test_spectrum_estimates(self, seqs, parts):
        nat, inj = parts
        ds = simulate_qns([nat.scaled(0.5), inj], seqs, 0, 0, seed=0)
        dense = np.linspace(0, np.pi, 4096)
        nat_est = SpectrumEstimate(dense, psd_values(nat, dense), "cubic-spline")
        inj_est = SpectrumEstimate(dense, psd_values(inj, dense), "cubic-spline")
        assert fit_beta(nat_est, inj_est, ds) == pytest.approx(0.5, abs=1e-3)

    def test_composite_workflow(self, seqs, parts):
        nat, inj = parts
        ds = simulate_qns([nat.scaled(0.5), inj], seqs, 0, 0, seed=0)
        spec, res = composite_fit(ds, nat, 2, 0, injected_known=inj)
        assert spec.beta == pytest.approx(0.5, abs=1e-3)
        assert rel_l2(psd_values(spec.injected, GRID), psd_values(inj, GRID)) < 1e-2
        total = spec.power(GRID)
        np.testing.assert_allclose(total, 0.5 * psd_values(nat, GRID) + psd_values(spec.injected, GRID))

    def test_composite_spec_validation(self, parts):
        with pytest.raises(ValueError):
            CompositeSpec(parts[0], -0.1, parts[1])
