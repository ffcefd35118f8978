"""Direct SchWARMA fits of survival-probability data.

The predicted survival probability of sequence ``k`` is

    p_k = 1/2 + 1/2 exp(-chi_k - chi_bg_k),   chi_k = (1/pi) int_0^pi F_k(w) S(w) dw

with ``S`` the rational ARMA spectrum. The mean squared error against the
measured probabilities is differentiable in the ARMA coefficients; it is
minimised with Adam from a cepstral initial model. Information criteria
``K ln(MSE) + penalty`` allow order selection.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Literal

import numpy as np

from .arma import ArmaModel, POLE_TOL, SpectrumEstimate, is_stationary
from .classical import cepstral_arma, kappa_optimize
from .errors import NoImprovement, PoleOnGrid, QnsError
from .invert import build_filter_matrix, chi_from_probs, densify, nnls_solve
from .probe import (DEFAULT_GRID_SIZE, overlap_matrix, quadrature_grid,
                    spectrum_on_grid, survival_from_chi)
from .sim import QnsDataset
from ._optimize import minimize_nonnegative

__all__ = [
    "FitOptions",
    "FitResult",
    "select_from_grid",
    "grid_to_csv",
    "CompositeSpec",
    "information_criteria",
    "loss",
    "gradient",
    "fit",
    "model_select",
    "fit_beta",
    "composite_fit",
]

Criterion = Literal["mse", "aic", "bic"]


@dataclass(frozen=True)
class FitOptions:
    """Adam hyperparameters and stopping rule.

    MA coefficients are optimised in units of ``ma_scale`` (the norm of the
    initial MA vector), so ``learning_rate`` is a relative step for them and
    an absolute step for the dimensionless AR coefficients.
    """

    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-12
    max_steps: int = 5000
    patience: int = 50
    min_improvement: float = 1e-12
    restarts: int = 5
    n_grid: int = DEFAULT_GRID_SIZE
    #: "standard" adds the parameter penalty; "printed" subtracts it.
    criteria: Literal["standard", "printed"] = "standard"


@dataclass(frozen=True)
class FitResult:
    model: ArmaModel
    mse: float
    aic: float
    bic: float
    iterations: int
    converged: bool
    init_source: Literal["cepstral", "random", "given"]
    init_mse: float = math.nan
    improved: bool = True
    options: FitOptions = field(default_factory=FitOptions)
    #: every fit of a model-selection run, keyed by ``(p, q)``
    grid: dict | None = field(default=None, repr=False, compare=False)

    @property
    def order(self) -> tuple[int, int]:
        return self.model.p, self.model.q

    @property
    def stationary(self) -> bool:
        return is_stationary(self.model)

    def criterion(self, name: Criterion) -> float:
        return {"mse": self.mse, "aic": self.aic, "bic": self.bic}[name]

    def to_dict(self) -> dict:
        return {
            "p": self.model.p,
            "q": self.model.q,
            "ar": self.model.ar.tolist(),
            "ma": self.model.ma.tolist(),
            "mse": self.mse,
            "aic": self.aic,
            "bic": self.bic,
            "iterations": self.iterations,
            "converged": self.converged,
            "improved": self.improved,
            "init_source": self.init_source,
            "init_mse": self.init_mse,
            "stationary": self.stationary,
            "options": asdict(self.options),
        }

    def save(self, path) -> None:
        """Write :meth:`to_dict` as JSON."""
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def information_criteria(mse: float, num_points: int, num_params: int,
                         convention: str = "standard") -> tuple[float, float]:
    """``(AIC, BIC) = K ln(MSE) +- (2 n, n ln K)``."""
    log_mse = math.log(max(mse, np.finfo(float).tiny))
    sign = 1.0 if convention == "standard" else -1.0
    aic = num_points * log_mse + sign * 2.0 * num_params
    bic = num_points * log_mse + sign * num_params * math.log(num_points)
    return aic, bic


def _background_chi(dataset: QnsDataset, background, n_grid: int) -> np.ndarray:
    if background is None:
        return np.zeros(len(dataset))
    freqs, _ = quadrature_grid(n_grid)
    power = spectrum_on_grid(background, freqs)
    return overlap_matrix(dataset.sequences, n_grid) @ power


class _Objective:
    """MSE and its analytic gradient for a fixed dataset and order."""

    def __init__(self, dataset: QnsDataset, p: int, q: int, background=None,
                 n_grid: int = DEFAULT_GRID_SIZE):
        self.p, self.q = p, q
        self.probs = dataset.probs
        self.freqs, _ = quadrature_grid(n_grid)
        self.weights = overlap_matrix(dataset.sequences, n_grid)
        self.bg = _background_chi(dataset, background, n_grid)
        self.powers = np.exp(-1j * np.multiply.outer(self.freqs, np.arange(max(p, q) + 1)))

    def _spectrum(self, ar, ma):
        num = self.powers[:, : self.q + 1] @ ma
        den = self.powers[:, : self.p + 1] @ np.concatenate(([1.0], ar))
        den_sq = np.abs(den) ** 2
        if np.min(den_sq) < POLE_TOL**2:
            raise PoleOnGrid("AR denominator vanishes on the quadrature grid")
        return num, den, den_sq, np.abs(num) ** 2 / den_sq

    def predictions(self, model: ArmaModel) -> np.ndarray:
        *_, spec = self._spectrum(model.ar, model.ma)
        return survival_from_chi(self.weights @ spec + self.bg)

    def value(self, ar, ma) -> float:
        *_, spec = self._spectrum(ar, ma)
        pred = survival_from_chi(self.weights @ spec + self.bg)
        return float(np.mean((pred - self.probs) ** 2))

    def value_and_grad(self, ar, ma):
        num, den, den_sq, spec = self._spectrum(ar, ma)
        decay = np.exp(-(self.weights @ spec + self.bg))
        resid = 0.5 + 0.5 * decay - self.probs
        value = float(np.mean(resid**2))
        d_chi = (2.0 / resid.size) * resid * (-0.5 * decay)
        d_spec = self.weights.T @ d_chi
        g_ma = 2.0 * np.real((d_spec * np.conj(num) / den_sq) @ self.powers[:, : self.q + 1])
        g_ar = -2.0 * np.real((d_spec * spec * np.conj(den) / den_sq) @ self.powers[:, 1 : self.p + 1])
        return value, g_ar, g_ma


def loss(model: ArmaModel, dataset: QnsDataset, fixed_background=None,
         n_grid: int = DEFAULT_GRID_SIZE) -> float:
    """Mean squared error between measured and predicted survival probabilities.

    ``fixed_background`` (an ArmaModel, SpectrumEstimate or scalar level) adds
    a constant overlap per sequence.
    """
    return _Objective(dataset, model.p, model.q, fixed_background, n_grid).value(model.ar, model.ma)


def gradient(model: ArmaModel, dataset: QnsDataset, fixed_background=None,
             n_grid: int = DEFAULT_GRID_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(dMSE/dc, dMSE/db)`` for the AR and MA coefficients."""
    obj = _Objective(dataset, model.p, model.q, fixed_background, n_grid)
    _, g_ar, g_ma = obj.value_and_grad(model.ar, model.ma)
    return g_ar, g_ma


def _adam(obj: _Objective, init: ArmaModel, opts: FitOptions):
    p = obj.p
    scale = float(np.linalg.norm(init.ma)) or 1.0
    theta = np.concatenate((init.ar, init.ma / scale))
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta, best_val = theta.copy(), obj.value(init.ar, init.ma)
    init_val = best_val
    best_trace = [best_val]
    converged = False
    step = 0
    for step in range(1, opts.max_steps + 1):
        try:
            val, g_ar, g_ma = obj.value_and_grad(theta[:p], scale * theta[p:])
        except PoleOnGrid:
            # bounce back to the best point with fresh moments
            theta = best_theta.copy()
            m[:] = 0.0
            v[:] = 0.0
            continue
        if val < best_val:
            best_val, best_theta = val, theta.copy()
        best_trace.append(best_val)
        if step >= opts.patience and best_trace[-opts.patience - 1] - best_val < opts.min_improvement:
            converged = True
            break
        grad = np.concatenate((g_ar, scale * g_ma))
        m = opts.beta1 * m + (1 - opts.beta1) * grad
        v = opts.beta2 * v + (1 - opts.beta2) * grad**2
        m_hat = m / (1 - opts.beta1**step)
        v_hat = v / (1 - opts.beta2**step)
        theta = theta - opts.learning_rate * m_hat / (np.sqrt(v_hat) + opts.epsilon)
    model = ArmaModel(best_theta[:p], scale * best_theta[p:])
    return model, best_val, init_val, step, converged


def _nnls_residual_estimate(dataset: QnsDataset, bg_chi: np.ndarray) -> SpectrumEstimate:
    chi = chi_from_probs(dataset)
    return nnls_solve(build_filter_matrix(dataset.sequences), np.maximum(chi.values - bg_chi, 0.0))


def _white_level(dataset: QnsDataset, bg_chi: np.ndarray) -> float:
    chi = np.maximum(chi_from_probs(dataset).values - bg_chi, 0.0)
    k = np.array([s.gate_count for s in dataset.sequences])
    return float(np.mean(2.0 * chi / k))


def _random_init(rng: np.random.Generator, p: int, q: int, level: float) -> ArmaModel:
    while True:
        ar = 0.3 * rng.standard_normal(p) / max(p, 1)
        model = ArmaModel(ar, [1.0])
        if is_stationary(model):
            break
    ma = np.concatenate(([1.0], 0.3 * rng.standard_normal(q)))
    return ArmaModel(ar, math.sqrt(max(level, 1e-12)) * ma / np.linalg.norm(ma))


#: Relative lift applied to the NNLS spectrum before its logarithm is taken.
INIT_FLOOR = 1e-3


def _cepstral_init(dataset, p, q, bg_chi, band) -> ArmaModel:
    """Cepstral ARMA start from the NNLS estimate, rescaled against the data.

    NNLS solutions are sparse and their spline interpolant touches zero on
    whole intervals, which the log-spectrum cannot represent. The dense
    interpolant is therefore lifted by ``INIT_FLOOR`` times its mean first.
    """
    if band is None:
        band = _nnls_residual_estimate(dataset, bg_chi)
    dense = densify(band)
    lifted = SpectrumEstimate(np.linspace(0.0, np.pi, dense.size),
                              dense + INIT_FLOOR * dense.mean())
    model = cepstral_arma(lifted, p, q, num_lags=len(band) + 1)
    return kappa_optimize(model, dataset, band_estimate=band, background_chi=bg_chi)


def fit(dataset: QnsDataset, p: int, q: int, init: ArmaModel | None = None,
        fixed_background=None, opts: FitOptions | None = None, seed=None,
        _band: SpectrumEstimate | None = None) -> FitResult:
    """Fit an ARMA(p, q) SchWARMA model to survival probabilities.

    Without ``init`` the descent starts from the cepstral ARMA estimate of
    the NNLS spectrum (after removing ``fixed_background``); if that fails,
    ``opts.restarts`` random starts are run and the best is kept. The best
    iterate is returned, so the loss never exceeds that of the start.
    Coefficients are optimised without a stationarity constraint; check
    :attr:`FitResult.stationary` (or use :func:`reflect_poles`) before
    sampling from the result.
    """
    if p < 0 or q < 0:
        raise ValueError("orders must be non-negative")
    opts = opts or FitOptions()
    obj = _Objective(dataset, p, q, fixed_background, opts.n_grid)
    starts: list[tuple[str, ArmaModel]] = []
    if init is not None:
        if init.p != p or init.q != q:
            raise ValueError("init model has the wrong order")
        starts.append(("given", init))
    else:
        try:
            model = _cepstral_init(dataset, p, q, obj.bg, _band)
            obj.value(model.ar, model.ma)
            starts.append(("cepstral", model))
        except (QnsError, FloatingPointError, np.linalg.LinAlgError, ValueError):
            rng = np.random.default_rng(seed)
            level = _white_level(dataset, obj.bg)
            starts.extend(("random", _random_init(rng, p, q, level)) for _ in range(opts.restarts))

    best = None
    for source, start in starts:
        try:
            model, val, init_val, steps, converged = _adam(obj, start, opts)
        except PoleOnGrid:
            continue
        if best is None or val < best[1]:
            best = (model, val, init_val, steps, converged, source)
    if best is None:
        raise PoleOnGrid("every initial model has a pole on the quadrature grid")
    model, val, init_val, steps, converged, source = best
    improved = val < init_val
    if not improved:
        warnings.warn("descent did not improve on the initial model", NoImprovement, stacklevel=2)
    aic, bic = information_criteria(val, len(dataset), p + q + 1, opts.criteria)
    return FitResult(model, val, aic, bic, steps, converged, source, init_val, improved, opts)


def select_from_grid(grid: dict, criterion: Criterion) -> FitResult:
    """Criterion-minimising fit of a model-selection grid; ties go to fewer parameters."""
    if criterion not in ("mse", "aic", "bic"):
        raise ValueError(f"unknown criterion {criterion!r}")
    best = min(grid.values(), key=lambda r: (r.criterion(criterion), r.model.num_params))
    return replace(best, grid=grid)


def grid_to_csv(grid: dict, path) -> None:
    """Write a model-selection grid as ``p,q,mse,aic,bic`` CSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p,q,mse,aic,bic\n")
        for (p, q), res in sorted(grid.items()):
            fh.write(f"{p},{q},{res.mse!r},{res.aic!r},{res.bic!r}\n")


def _orders(max_params: int, max_p: int | None = None, max_q: int | None = None):
    for n in range(1, max_params + 1):
        for p in range(n):
            q = n - 1 - p
            if (max_p is None or p <= max_p) and (max_q is None or q <= max_q):
                yield p, q


def model_select(dataset: QnsDataset, max_params: int, criterion: Criterion = "bic",
                 fixed_background=None, opts: FitOptions | None = None,
                 max_p: int | None = None, max_q: int | None = None,
                 n_jobs: int = 1) -> FitResult:
    """Fit every ARMA(p, q) with ``p + q + 1 <= max_params`` and pick the best.

    Ties are broken towards fewer parameters. The whole grid, keyed by
    ``(p, q)``, is attached as ``result.grid``; see :func:`select_from_grid`
    and :func:`grid_to_csv`. Each fit gets a random-restart
    seed derived from ``(dataset.seed, p, q)``. ``n_jobs > 1`` runs the fits
    through joblib; results do not depend on it.
    """
    if max_params < 1:
        raise ValueError("max_params must be at least 1")
    if criterion not in ("mse", "aic", "bic"):
        raise ValueError(f"unknown criterion {criterion!r}")
    opts = opts or FitOptions()
    bg_chi = _background_chi(dataset, fixed_background, opts.n_grid)
    try:
        band = _nnls_residual_estimate(dataset, bg_chi)
    except QnsError:
        band = None
    orders = list(_orders(max_params, max_p, max_q))
    base = 0 if dataset.seed is None else int(dataset.seed)

    def one(p, q):
        seed = np.random.SeedSequence(base, spawn_key=(p, q))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoImprovement)
            return fit(dataset, p, q, fixed_background=fixed_background, opts=opts,
                       seed=seed, _band=band)

    if n_jobs == 1:
        results = [one(p, q) for p, q in orders]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(one)(p, q) for p, q in orders)
    return select_from_grid(dict(zip(orders, results)), criterion)


@dataclass(frozen=True)
class CompositeSpec:
    """Native noise scaled by ``beta`` plus an injected ARMA model."""

    native: object
    beta: float
    injected: ArmaModel

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    def power(self, freqs) -> np.ndarray:
        return self.beta * spectrum_on_grid(self.native, freqs) + spectrum_on_grid(self.injected, freqs)

    def spectrum(self, freqs) -> SpectrumEstimate:
        return SpectrumEstimate(freqs, self.power(freqs))


def _chi(dataset: QnsDataset, spectrum, n_grid: int) -> np.ndarray:
    return _background_chi(dataset, spectrum, n_grid)


def fit_beta(native, injected_known, dataset: QnsDataset, tol: float = 1e-8,
             n_grid: int = DEFAULT_GRID_SIZE) -> float:
    """Scale ``beta >= 0`` of the native spectrum minimising the survival MSE.

    ``native`` and ``injected_known`` may be ArmaModels or SpectrumEstimates.
    """
    chi_nat = _chi(dataset, native, n_grid)
    chi_inj = _chi(dataset, injected_known, n_grid)
    probs = dataset.probs

    def mse(beta):
        return float(np.mean((probs - survival_from_chi(beta * chi_nat + chi_inj)) ** 2))

    return minimize_nonnegative(mse, 1.0, tol=tol)


def composite_fit(dataset: QnsDataset, native, p: int, q: int,
                  injected_known=None, beta: float | None = None,
                  opts: FitOptions | None = None) -> tuple[CompositeSpec, FitResult]:
    """Fit the injected part of native-plus-injected data.

    ``beta`` is fitted with :func:`fit_beta` when ``injected_known`` is given
    and ``beta`` is not; otherwise it defaults to 1. The injected ARMA(p, q)
    model is then fitted with ``beta * native`` as a fixed background.
    """
    if beta is None:
        beta = fit_beta(native, injected_known, dataset) if injected_known is not None else 1.0
    background = _ScaledSpectrum(native, beta)
    result = fit(dataset, p, q, fixed_background=background, opts=opts)
    return CompositeSpec(native, beta, result.model), result


@dataclass(frozen=True)
class _ScaledSpectrum:
    base: object
    factor: float

    def evaluate(self, freqs):
        return self.factor * spectrum_on_grid(self.base, freqs)
