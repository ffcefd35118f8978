"""Nonparametric spectrum estimation by non-negative least squares.

The pipeline is

1. ``chi_k = -ln(2 (p_k - 1/2))`` from measured survival probabilities,
2. a filter matrix ``F`` with ``chi ~= F @ S`` for band powers ``S`` at the
   FTTPS peak frequencies ``j * pi / K``,
3. ``S = argmin_{S >= 0} ||F S - chi||`` (Lawson-Hanson active set),
4. optional cubic-spline interpolation and Fourier inversion to lags.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft
from scipy.interpolate import CubicSpline

from .arma import AutocovarianceSeq, SpectrumEstimate
from .errors import AllClipped, NoConvergence, TooFewPoints
from .probe import ProbeSequence, filter_values
from .sim import QnsDataset

__all__ = [
    "ChiVector",
    "FilterMatrix",
    "chi_from_probs",
    "build_filter_matrix",
    "lawson_hanson",
    "nnls_solve",
    "interpolate",
    "autocov_from_spectrum",
    "mean_power_estimate",
    "estimate_nnls",
    "DENSE_GRID_SIZE",
]

#: Points on ``[0, pi]`` used whenever a coarse estimate is densified.
DENSE_GRID_SIZE = 4097

_EPS_FLOOR = 1e-6


@dataclass(frozen=True)
class ChiVector:
    values: np.ndarray
    clipped: np.ndarray

    @property
    def clip_count(self) -> int:
        return int(np.count_nonzero(self.clipped))

    def __len__(self):
        return self.values.size


def clip_epsilon(shots) -> np.ndarray:
    """Distance above 1/2 below which a probability counts as fully dephased."""
    shots = np.asarray(shots, dtype=float)
    with np.errstate(divide="ignore"):
        eps = np.where(shots > 0, 1.0 / (2.0 * shots), 0.0)
    return np.maximum(eps, _EPS_FLOOR)


def chi_from_probs(dataset: QnsDataset) -> ChiVector:
    """Invert ``p = (1 + exp(-chi)) / 2`` for every sequence.

    Probabilities with ``p <= 1/2 + eps`` (``eps = 1 / (2 shots)``, at least
    1e-6) carry no usable information; they are set to ``-ln(2 eps)`` and
    flagged rather than dropped so the linear system keeps its shape.
    """
    p = dataset.probs
    eps = clip_epsilon(dataset.shots)
    clipped = p <= 0.5 + eps
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = np.where(clipped, -np.log(2.0 * eps), -np.log(2.0 * (p - 0.5)))
    chi = np.maximum(chi, 0.0)
    return ChiVector(chi, clipped)


@dataclass(frozen=True)
class FilterMatrix:
    matrix: np.ndarray
    freqs: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ np.asarray(other)


def _column_weights(freqs: np.ndarray) -> tuple[np.ndarray, float]:
    """Trapezoid weights on ``[0, freqs[-1]]`` divided by ``pi``.

    When the grid does not start at zero, the ``[0, freqs[0]]`` cell is
    assigned to the first column with the spectrum held flat there; its
    zero-frequency node weight is returned separately.
    """
    nodes = freqs if freqs[0] == 0 else np.concatenate(([0.0], freqs))
    w = np.empty_like(nodes)
    if nodes.size == 1:
        w[:] = 0.0
    else:
        w[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
        w[0] = 0.5 * (nodes[1] - nodes[0])
        w[-1] = 0.5 * (nodes[-1] - nodes[-2])
    w /= np.pi
    if freqs[0] == 0:
        return w, 0.0
    return w[1:], w[0]


def build_filter_matrix(seqs: Sequence[ProbeSequence], est_freqs=None) -> FilterMatrix:
    """Quadrature matrix mapping band powers to overlap integrals.

    Columns default to the FTTPS peak frequencies ``j pi / K`` (``j = 1..K``).
    Entry ``(k, j)`` is ``F_k(w_j)`` times the trapezoid weight of node ``j``;
    the zero-frequency node, which is not a column, is folded into the first
    column. With this weighting a white spectrum is reproduced exactly:
    ``F @ (s2 * ones) = K s2 / 2`` for every row.
    """
    seqs = list(seqs)
    if est_freqs is None:
        k = seqs[0].gate_count
        est_freqs = np.arange(1, k + 1) * np.pi / k
    est_freqs = np.asarray(est_freqs, dtype=float)
    if np.any(np.diff(est_freqs) <= 0) or est_freqs[0] < 0 or est_freqs[-1] > np.pi + 1e-12:
        raise ValueError("est_freqs must be strictly increasing within [0, pi]")
    weights, dc_weight = _column_weights(est_freqs)
    mat = np.array([filter_values(s, est_freqs) for s in seqs]) * weights
    if dc_weight:
        mat[:, 0] += dc_weight * np.array([filter_values(s, 0.0) for s in seqs])
    return FilterMatrix(mat, est_freqs)


def lawson_hanson(a, b, tol: float = 1e-10, max_iter: int | None = None):
    """Solve ``min ||a x - b||`` subject to ``x >= 0``.

    Classic active-set method. ``tol`` bounds the dual variables
    ``w = a^T (b - a x)`` at termination: ``w <= tol`` wherever ``x = 0``.

    Returns
    -------
    x : ndarray
    residual : float
        ``||a x - b||``.
    iterations : int
        Number of least-squares subproblems solved.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    max_iter = 3 * n if max_iter is None else max_iter
    passive = np.zeros(n, dtype=bool)
    x = np.zeros(n)
    w = a.T @ b
    iterations = 0
    # indices whose free solve came out non-positive right after entering;
    # re-admitted once any other step succeeds
    stalled = np.zeros(n, dtype=bool)
    while True:
        candidates = ~passive & ~stalled
        if not np.any(candidates) or np.max(w[candidates]) <= tol:
            break
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        first = True
        while True:
            iterations += 1
            if iterations > max_iter:
                raise NoConvergence(f"NNLS did not converge in {max_iter} iterations")
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(a[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                x = z
                stalled[:] = False
                break
            if first and z[j] <= 0:
                # entering index failed; only possible through rounding
                passive[j] = False
                stalled[j] = True
                break
            first = False
            neg = passive & (z <= 0)
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > 1e-15 * max(1.0, np.max(x))
            x[~passive] = 0.0
        w = a.T @ (b - a @ x)
    residual = float(np.linalg.norm(a @ x - b))
    return x, residual, iterations


def nnls_solve(fmat: FilterMatrix, chi, tol: float = 1e-10, full_output: bool = False):
    """Band-power estimate from ``chi ~= F S`` with ``S >= 0``.

    With ``full_output=True`` also returns a diagnostics dict holding the
    residual norm, the iteration count and the clip count of ``chi``.
    """
    mat = fmat.matrix if isinstance(fmat, FilterMatrix) else np.asarray(fmat, dtype=float)
    values = chi.values if isinstance(chi, ChiVector) else np.asarray(chi, dtype=float)
    freqs = fmat.freqs if isinstance(fmat, FilterMatrix) else np.arange(1, mat.shape[1] + 1) * np.pi / mat.shape[1]
    x, residual, iterations = lawson_hanson(mat, values, tol=tol)
    spec = SpectrumEstimate(freqs, np.maximum(x, 0.0))
    if not full_output:
        return spec
    info = {
        "residual": residual,
        "iterations": iterations,
        "clip_count": chi.clip_count if isinstance(chi, ChiVector) else 0,
    }
    return spec, info


def interpolate(spec: SpectrumEstimate, dense_freqs=None) -> SpectrumEstimate:
    """Natural cubic spline through the estimate, clamped below at zero.

    Outside the knot range the end polynomials are extrapolated.
    """
    if len(spec) < 4:
        raise TooFewPoints("cubic interpolation needs at least 4 points")
    if dense_freqs is None:
        dense_freqs = np.linspace(0.0, np.pi, DENSE_GRID_SIZE)
    dense_freqs = np.asarray(dense_freqs, dtype=float)
    spline = CubicSpline(spec.freqs, spec.power, bc_type="natural")
    return SpectrumEstimate(dense_freqs, np.maximum(spline(dense_freqs), 0.0), "cubic-spline")


def _is_uniform_full(freqs: np.ndarray) -> bool:
    if freqs.size < 3 or freqs[0] != 0.0 or not np.isclose(freqs[-1], np.pi, rtol=0, atol=1e-12):
        return False
    return np.allclose(np.diff(freqs), np.pi / (freqs.size - 1), rtol=1e-9, atol=0)


def densify(spec: SpectrumEstimate, n: int = DENSE_GRID_SIZE) -> np.ndarray:
    """Power on a uniform ``[0, pi]`` grid; coarse inputs are interpolated."""
    if _is_uniform_full(spec.freqs):
        return spec.power
    grid = np.linspace(0.0, np.pi, n)
    if len(spec) >= 4:
        return interpolate(spec, grid).power
    return spec.evaluate(grid)


def cosine_coefficients(values: np.ndarray, num_lags: int) -> np.ndarray:
    """``(1/pi) int_0^pi f(w) cos(k w) dw`` by the trapezoid rule, ``k < num_lags``.

    ``values`` must be samples on a uniform grid spanning ``[0, pi]``.
    """
    n = values.size
    if num_lags > n:
        raise ValueError(f"at most {n} lags are available from {n} grid points")
    return fft.dct(values, type=1)[:num_lags] / (2.0 * (n - 1))


def autocov_from_spectrum(spec: SpectrumEstimate, num_lags: int) -> AutocovarianceSeq:
    """Autocovariance ``r[k] = (1/pi) int_0^pi S(w) cos(k w) dw``.

    Non-uniform or partial grids are first brought onto a dense uniform grid
    (natural cubic spline when possible).
    """
    return AutocovarianceSeq(cosine_coefficients(densify(spec), num_lags))


def mean_power_estimate(dataset: QnsDataset) -> float:
    """White-noise power ``2 mean(chi) / K`` from the unclipped sequences."""
    chi = chi_from_probs(dataset)
    keep = ~chi.clipped
    if not np.any(keep):
        raise AllClipped("every probability is at or below the dephased limit")
    k = np.array([s.gate_count for s in dataset.sequences])[keep]
    return float(np.mean(2.0 * chi.values[keep] / k))


def estimate_nnls(dataset: QnsDataset, est_freqs=None, full_output: bool = False):
    """Full NNLS pipeline on a dataset; see :func:`nnls_solve`."""
    chi = chi_from_probs(dataset)
    fmat = build_filter_matrix(dataset.sequences, est_freqs)
    return nnls_solve(fmat, chi, full_output=full_output)
