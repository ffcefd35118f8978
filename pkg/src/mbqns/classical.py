"""Model fits driven by an autocovariance (or spectrum) estimate.

These estimators never see the noise time series: the autocovariance comes
from Fourier inversion of an NNLS band-power estimate. Included are

* Yule-Walker AR(p), standard and overdetermined,
* MA(q) by Newton descent on the autocovariance misfit,
* ARMA(p, q) via overdetermined Yule-Walker plus cepstral recursion for the
  MA part, with an overall power scale fitted to the survival data,
* the MUSIC pseudo-spectrum for line spectra.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .arma import ArmaModel, AutocovarianceSeq, SpectrumEstimate, _as_autocov, psd_values, reflect_poles
from .errors import (ConvergenceWarning, DegenerateSpectrum, NegativeResidualVariance,
                     SingularSystem, TooFewMaxima)
from .invert import cosine_coefficients, densify, estimate_nnls
from .probe import overlap_matrix, quadrature_grid, survival_from_chi
from .sim import QnsDataset
from ._optimize import minimize_nonnegative

__all__ = [
    "yule_walker",
    "ma_fit",
    "ma_objective",
    "cepstral_arma",
    "cepstral_ma",
    "kappa_init",
    "kappa_optimize",
    "MusicResult",
    "music",
    "music_pseudospectrum",
    "music_matrix",
]

_COND_LIMIT = 1e12


def _ar_system(r: np.ndarray, p: int, overdetermined: bool, first_lag: int):
    if overdetermined:
        lags = np.arange(first_lag, r.size)
    else:
        lags = np.arange(1, p + 1)
    idx = np.abs(lags[:, None] - np.arange(1, p + 1)[None, :])
    return r[idx], r[lags]


def _solve_ar(r: np.ndarray, p: int, overdetermined: bool, first_lag: int = 1) -> np.ndarray:
    """Textbook AR coefficients ``a`` with ``r[k] = sum_i a_i r[k-i]``."""
    mat, rhs = _ar_system(r, p, overdetermined, first_lag)
    if mat.shape[0] < p:
        raise SingularSystem(f"{mat.shape[0]} equations for {p} unknowns")
    if not np.all(np.isfinite(mat)) or np.linalg.cond(mat) > _COND_LIMIT:
        raise SingularSystem("Yule-Walker system is (numerically) singular")
    if overdetermined:
        a, *_ = linalg.lstsq(mat, rhs, lapack_driver="gelsy")
    else:
        a = linalg.solve_toeplitz(r[:p], rhs)
    return a


def yule_walker(r, p: int, overdetermined: bool = False, first_lag: int = 1) -> ArmaModel:
    """AR(p) model from autocovariance lags.

    Parameters
    ----------
    r : AutocovarianceSeq or array_like
        Lags ``r[0..L-1]``.
    p : int
        AR order.
    overdetermined : bool
        Use every available lag ``k = first_lag..L-1`` in a least-squares fit
        instead of just ``k = 1..p``.
    first_lag : int
        First equation lag of the overdetermined system. Setting it to
        ``q + 1`` gives the modified equations that stay exact for ARMA(p, q)
        data.

    Returns
    -------
    ArmaModel
        AR(p) model in the stored sign convention with ``b0 >= 0`` set from
        ``r[0] = sum a_k r[k] + b0^2``.
    """
    r = _as_autocov(r).lags
    if p < 0:
        raise ValueError("order must be non-negative")
    if not overdetermined and r.size < p + 1:
        raise ValueError(f"need {p + 1} lags for AR({p})")
    if p == 0:
        return ArmaModel([], [np.sqrt(r[0])])
    a = _solve_ar(r, p, overdetermined, first_lag)
    b0_sq = r[0] - a @ r[1 : p + 1]
    if b0_sq < -1e-12 * r[0]:
        raise NegativeResidualVariance(f"b0^2 = {b0_sq:.3g} < 0")
    return ArmaModel(-a, [np.sqrt(max(b0_sq, 0.0))])


def _ma_acov(b: np.ndarray) -> np.ndarray:
    return np.correlate(b, b, mode="full")[b.size - 1:]


def ma_objective(b, r) -> float:
    """``sum_{k=0}^{q} (r[k] - sum_j b_j b_(j-k))^2`` for ``q = len(b) - 1``."""
    b = np.asarray(b, dtype=float)
    r = np.asarray(r, dtype=float)[: b.size]
    return float(np.sum((r - _ma_acov(b)) ** 2))


def _ma_jacobian(b: np.ndarray) -> np.ndarray:
    q1 = b.size
    jac = np.zeros((q1, q1))
    for k in range(q1):
        jac[k, k:] += b[: q1 - k]
        jac[k, : q1 - k] += b[k:]
    return jac


def _ma_newton(r: np.ndarray, b: np.ndarray, max_iter: int, tol: float):
    history = [ma_objective(b, r)]
    q1 = b.size
    shifts = [np.eye(q1, k=k) + np.eye(q1, k=-k) for k in range(q1)]
    converged = False
    for it in range(max_iter):
        resid = r - _ma_acov(b)
        jac = _ma_jacobian(b)
        grad = -2.0 * jac.T @ resid
        if np.linalg.norm(grad) < tol:
            converged = True
            break
        hess = 2.0 * (jac.T @ jac - sum(e * s for e, s in zip(resid, shifts)))
        mu = 0.0
        while True:
            try:
                chol = linalg.cho_factor(hess + mu * np.eye(q1))
                break
            except linalg.LinAlgError:
                mu = max(2.0 * mu, 1e-8 * max(1.0, np.abs(hess).max()))
        step = -linalg.cho_solve(chol, grad)
        f0 = history[-1]
        t = 1.0
        while t > 1e-12:
            trial = b + t * step
            f1 = ma_objective(trial, r)
            if f1 <= f0 + 1e-4 * t * (grad @ step):
                break
            t *= 0.5
        else:
            # no descent along the Newton direction; stationary up to rounding
            break
        b = trial
        history.append(f1)
    else:
        it = max_iter
    resid = r - _ma_acov(b)
    converged = converged or np.linalg.norm(2.0 * _ma_jacobian(b).T @ resid) < tol
    return b, history, converged, it


def _minimum_phase(b: np.ndarray) -> np.ndarray:
    """Reflect MA zeros outside the unit circle inward; the spectrum is unchanged."""
    if b.size < 2 or b[0] == 0:
        return b
    zeros = np.roots(b)
    mags = np.abs(zeros)
    outside = mags > 1.0 + 1e-12
    if not np.any(outside):
        return b
    zeros = np.where(outside, 1.0 / np.conj(zeros), zeros)
    new = np.real(np.poly(zeros)) * b[0] * np.prod(mags[outside])
    return new


def ma_fit(r, q: int, max_iter: int = 500, tol: float = 1e-10, full_output: bool = False):
    """MA(q) model matching the first ``q + 1`` autocovariance lags.

    Minimises the quartic misfit with damped Newton steps and a backtracking
    line search, so accepted iterates never increase the objective. Lags are
    normalised by ``r[0]`` internally; ``tol`` applies to the gradient norm of
    the normalised problem. The result is returned in minimum-phase form
    with ``b0 >= 0``.

    A :class:`ConvergenceWarning` is issued if neither the default start
    ``b0 = sqrt(max(r0 + 2 sum r_j, r0))`` nor the fallback ``b0 = sqrt(r0)``
    converges; the best iterate is returned. With ``full_output=True`` a dict
    with ``objective``, ``history``, ``iterations`` and ``converged`` is
    returned as well.
    """
    r = _as_autocov(r).lags
    if r.size < q + 1:
        raise ValueError(f"need {q + 1} lags for MA({q})")
    r = r[: q + 1]
    scale = r[0]
    if scale == 0:
        model = ArmaModel([], np.zeros(q + 1))
        info = {"objective": 0.0, "history": [0.0], "iterations": 0, "converged": True}
        return (model, info) if full_output else model
    rn = r / scale
    starts = [np.sqrt(max(rn[0] + 2.0 * rn[1:].sum(), rn[0])), 1.0]
    best = None
    for b0 in starts:
        init = np.zeros(q + 1)
        init[0] = b0
        b, history, converged, it = _ma_newton(rn, init, max_iter, tol)
        if best is None or history[-1] < best[1][-1]:
            best = (b, history, converged, it)
        if converged:
            break
    b, history, converged, it = best
    if not converged:
        warnings.warn(f"MA({q}) descent did not converge (objective {history[-1]:.3g})",
                      ConvergenceWarning, stacklevel=2)
    b = _minimum_phase(b)
    if b[0] < 0:
        b = -b
    b = b * np.sqrt(scale)
    model = ArmaModel([], b)
    if not full_output:
        return model
    info = {
        "objective": ma_objective(b, r),
        "history": [h * scale**2 for h in history],
        "iterations": it,
        "converged": converged,
    }
    return model, info


def cepstral_ma(cepstrum: np.ndarray, ar: np.ndarray, q: int) -> np.ndarray:
    """Normalised MA coefficients ``b'`` (``b'_0 = 1``) from cepstrum and AR part.

    ``cepstrum[k]`` is the ``k``-th Fourier coefficient of ``ln S``. Follows
    from ``A D(B) - B D(A) = A B D(ln H)`` with ``D`` multiplying the
    ``z^-k`` coefficient by ``k``.
    """
    a = np.zeros(q + 1)
    a[0] = 1.0
    n = min(ar.size, q)
    a[1 : n + 1] = ar[:n]
    c = np.asarray(cepstrum, dtype=float)
    bp = np.zeros(q + 1)
    bp[0] = 1.0
    for k in range(1, q + 1):
        total = k * c[k] * bp[0]
        total -= sum(m * bp[m] * a[k - m] for m in range(1, k))
        total += sum(m * a[m] * bp[k - m] for m in range(1, k + 1))
        total += sum(
            j * c[j] * sum(a[m] * bp[k - j - m] for m in range(0, k - j + 1))
            for j in range(1, k)
        )
        bp[k] = total / k
    return bp


def cepstral_arma(spec: SpectrumEstimate, p: int, q: int, num_lags: int | None = None,
                  dataset: QnsDataset | None = None) -> ArmaModel:
    """ARMA(p, q) model from a spectrum estimate.

    The AR part comes from the overdetermined (modified) Yule-Walker equations
    on lags ``q+1..L-1`` of the spectrum's autocovariance and is made
    minimum phase. The MA part follows the cepstral recursion with
    ``b'_0 = 1`` and is rescaled by ``kappa`` where ``kappa^2`` matches the
    integrated power of ``spec``. If ``dataset`` is given, ``kappa^2`` is
    refined against the survival data with :func:`kappa_optimize`.
    """
    if p < 0 or q < 0:
        raise ValueError("orders must be non-negative")
    dense = densify(spec)
    peak = dense.max()
    if peak <= 0:
        raise DegenerateSpectrum("spectrum is identically zero")
    floor = 1e-12 * peak
    if np.mean(dense < floor) > 0.1:
        raise DegenerateSpectrum("more than 10% of the spectrum is below the log floor")
    if num_lags is None:
        num_lags = max(len(spec) + 1, 2 * (p + q) + 2)
    num_lags = min(num_lags, dense.size)
    if p > 0:
        r = cosine_coefficients(dense, num_lags)
        a = _solve_ar(r, p, overdetermined=True, first_lag=q + 1)
        ar = reflect_poles(ArmaModel(-a, [1.0])).ar
    else:
        ar = np.empty(0)
    ceps = cosine_coefficients(np.log(np.maximum(dense, floor)), q + 1)
    bp = cepstral_ma(ceps, ar, q)
    unscaled = ArmaModel(ar, bp)
    grid = np.linspace(0.0, np.pi, dense.size)
    kappa2 = np.trapezoid(dense, grid) / np.trapezoid(psd_values(unscaled, grid), grid)
    model = unscaled.scaled(kappa2)
    if dataset is not None:
        model = kappa_optimize(model, dataset)
    return model


def kappa_init(model: ArmaModel, band_estimate: SpectrumEstimate) -> float:
    """Ratio of integrated power of ``band_estimate`` to that of ``model`` on its grid."""
    model_power = psd_values(model, band_estimate.freqs)
    total = model_power.sum()
    if total <= 0:
        return 0.0
    return float(band_estimate.power.sum() / total)


def kappa_optimize(model: ArmaModel, dataset: QnsDataset,
                   band_estimate: SpectrumEstimate | None = None, tol: float = 1e-8,
                   background_chi=None) -> ArmaModel:
    """Rescale the spectrum of ``model`` by ``kappa^2`` to fit survival data.

    ``kappa^2`` starts from :func:`kappa_init` against ``band_estimate`` (an
    NNLS estimate of ``dataset`` when omitted) and is refined by golden-section
    search on the mean squared error of predicted survival probabilities.
    """
    if band_estimate is None:
        band_estimate = estimate_nnls(dataset)
    k0 = kappa_init(model, band_estimate)
    freqs, _ = quadrature_grid()
    chi_model = overlap_matrix(dataset.sequences) @ psd_values(model, freqs)
    chi_bg = 0.0 if background_chi is None else np.asarray(background_chi, dtype=float)
    probs = dataset.probs

    def mse(k2):
        return float(np.mean((probs - survival_from_chi(k2 * chi_model + chi_bg)) ** 2))

    kappa2 = minimize_nonnegative(mse, k0, tol=tol)
    return model.scaled(kappa2)


@dataclass(frozen=True)
class MusicResult:
    """MUSIC pseudo-spectrum and its dominant peaks.

    ``peak_freqs`` holds peaks in ``(0, pi)``, ascending. ``complete`` is False
    when fewer peaks were found than requested. ``real_valued`` marks a real
    autocovariance, whose peaks come in ``+-w`` pairs.
    """

    pseudo: SpectrumEstimate
    peak_freqs: np.ndarray
    eigenvalues: np.ndarray
    complete: bool = True
    real_valued: bool = True

    def signed_peaks(self) -> np.ndarray:
        if not self.real_valued:
            return self.peak_freqs
        return np.sort(np.concatenate([-self.peak_freqs[::-1], self.peak_freqs]))


def music_pseudospectrum(cov, num_components: int, grid) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-spectrum ``1 / sum_{i>p} |e(w)^H V_i|^2`` of a Hermitian matrix.

    Returns the pseudo-spectrum on ``grid`` and the eigenvalues in
    descending order.
    """
    cov = np.asarray(cov)
    size = cov.shape[0]
    if not 0 <= num_components < size:
        raise ValueError(f"need 0 <= p < J = {size}")
    evals, evecs = linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    noise = evecs[:, num_components:]
    grid = np.asarray(grid, dtype=float)
    steer = np.exp(1j * np.multiply.outer(grid, np.arange(size)))
    denom = np.sum(np.abs(steer.conj() @ noise) ** 2, axis=1)
    pseudo = 1.0 / np.maximum(denom, np.finfo(float).tiny)
    return pseudo, evals


def _local_maxima(values: np.ndarray) -> np.ndarray:
    inner = values[1:-1]
    margin = 1.0 + 1e-9
    mask = (inner > margin * values[:-2]) & (inner > margin * values[2:])
    return np.flatnonzero(mask) + 1


def _parabolic(freqs: np.ndarray, values: np.ndarray, i: int) -> float:
    y0, y1, y2 = np.log(values[i - 1 : i + 2])
    denom = y0 - 2.0 * y1 + y2
    if denom >= 0:
        return float(freqs[i])
    delta = 0.5 * (y0 - y2) / denom
    step = 0.5 * (freqs[i + 1] - freqs[i - 1])
    return float(freqs[i] + np.clip(delta, -1.0, 1.0) * step)


def music(r, num_components: int, grid=None, size: int | None = None) -> MusicResult:
    """MUSIC line-spectrum estimate from autocovariance lags.

    Builds the ``J x J`` Toeplitz matrix (``J = size`` or ``len(r)``) and
    searches its pseudo-spectrum for local maxima in ``(0, pi)``, refined by
    3-point parabolic interpolation of the log pseudo-spectrum.

    A real sinusoid is a *pair* of complex exponentials at ``+-w``, so a real
    autocovariance with ``num_components = 2n`` yields ``n`` peaks in
    ``(0, pi)``; :meth:`MusicResult.signed_peaks` restores the pairs.
    Complex Hermitian matrices can be passed through :func:`music_matrix`.
    """
    lags = r.lags if isinstance(r, AutocovarianceSeq) else np.asarray(r)
    size = lags.size if size is None else size
    if np.iscomplexobj(lags):
        cov = linalg.toeplitz(lags[:size].conj(), lags[:size])
    else:
        cov = linalg.toeplitz(lags[:size])
    return music_matrix(cov, num_components, grid)


def music_matrix(cov, num_components: int, grid=None) -> MusicResult:
    """MUSIC on an explicit covariance matrix (real symmetric or complex Hermitian)."""
    cov = np.asarray(cov)
    real = not np.iscomplexobj(cov) or np.allclose(cov.imag, 0.0)
    if real:
        cov = np.real(cov)
    grid = np.linspace(0.0, np.pi, 8193) if grid is None else np.asarray(grid, dtype=float)
    pseudo, evals = music_pseudospectrum(cov, num_components, grid)
    wanted = (num_components + 1) // 2 if real else num_components
    peaks = _local_maxima(pseudo)
    peaks = peaks[(grid[peaks] > 0) & (grid[peaks] < np.pi)]
    peaks = peaks[np.argsort(pseudo[peaks])[::-1][:wanted]]
    freqs = np.sort([_parabolic(grid, pseudo, i) for i in peaks])
    complete = freqs.size >= wanted
    if not complete:
        warnings.warn(f"found {freqs.size} of {wanted} requested peaks", TooFewMaxima, stacklevel=2)
    return MusicResult(SpectrumEstimate(grid, pseudo), np.asarray(freqs, dtype=float),
                       evals, complete, real)
