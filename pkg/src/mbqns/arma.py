"""ARMA noise models, their power spectra and autocovariances.

Coefficients are stored so that the power spectrum reads

.. math::

    S(\\omega) = \\frac{|\\sum_{k=0}^{q} b_k e^{-ik\\omega}|^2}
                      {|1 + \\sum_{k=1}^{p} c_k e^{-ik\\omega}|^2},

which means the time-domain recursion is

.. math::

    y[k] = -\\sum_{i=1}^{p} c_i y[k-i] + \\sum_{j=0}^{q} b_j x[k-j]

with unit-variance Gaussian drive ``x``. This is the ``(b, a)`` convention of
:func:`scipy.signal.lfilter` with ``a = [1, c_1, ..., c_p]``.

Spectra are even in frequency; only ``[0, pi]`` is ever stored.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import linalg, signal
from scipy.interpolate import CubicSpline

from .errors import MalformedFile, NotStationary, PoleOnGrid

__all__ = [
    "ArmaModel",
    "SpectrumEstimate",
    "AutocovarianceSeq",
    "psd",
    "psd_values",
    "autocovariance",
    "sample_trajectory",
    "sample_block",
    "is_stationary",
    "ar_roots",
    "reflect_poles",
    "resonance",
    "psd_peaks",
    "POLE_TOL",
]

#: Smallest admissible magnitude of the AR denominator on a frequency grid.
POLE_TOL = 1e-12


def _as_vector(x) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ArmaModel:
    """ARMA(p, q) model.

    Parameters
    ----------
    ar : array_like
        AR coefficients ``c_1..c_p`` (denominator ``1 + sum c_k z^-k``).
    ma : array_like
        MA coefficients ``b_0..b_q``; must be non-empty.
    """

    ar: np.ndarray
    ma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ar", _as_vector(self.ar))
        object.__setattr__(self, "ma", _as_vector(self.ma))
        if self.ma.size == 0:
            raise ValueError("ma must contain at least b0")
        if not (np.all(np.isfinite(self.ar)) and np.all(np.isfinite(self.ma))):
            raise ValueError("coefficients must be finite")

    @classmethod
    def white(cls, sigma: float) -> "ArmaModel":
        return cls([], [sigma])

    @property
    def p(self) -> int:
        return self.ar.size

    @property
    def q(self) -> int:
        return self.ma.size - 1

    @property
    def num_params(self) -> int:
        return self.p + self.q + 1

    @property
    def denominator(self) -> np.ndarray:
        """``[1, c_1, ..., c_p]``, ready for :func:`scipy.signal.lfilter`."""
        return np.concatenate(([1.0], self.ar))

    def scaled(self, factor: float) -> "ArmaModel":
        """Model whose power spectrum is ``factor`` times this one."""
        if factor < 0:
            raise ValueError("power scale must be non-negative")
        return ArmaModel(self.ar, np.sqrt(factor) * self.ma)

    def __eq__(self, other):
        if not isinstance(other, ArmaModel):
            return NotImplemented
        return np.array_equal(self.ar, other.ar) and np.array_equal(self.ma, other.ma)

    def __hash__(self):
        return hash((self.ar.tobytes(), self.ma.tobytes()))

    def __repr__(self):
        return f"ArmaModel(ar={self.ar.tolist()}, ma={self.ma.tolist()})"

    def to_dict(self) -> dict:
        return {"ar": self.ar.tolist(), "ma": self.ma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ArmaModel":
        if not isinstance(d, dict) or set(d) != {"ar", "ma"}:
            raise MalformedFile(f"ARMA model must have exactly keys 'ar' and 'ma', got {d!r}")
        try:
            return cls(d["ar"], d["ma"])
        except (TypeError, ValueError) as exc:
            raise MalformedFile(str(exc)) from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ArmaModel":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{path}: {exc}") from exc
        return cls.from_dict(d)


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Non-negative power values on a strictly increasing grid in ``[0, pi]``.

    ``interpolation`` controls :meth:`evaluate` between grid points:
    ``"cubic-spline"`` uses a natural cubic spline clamped at zero,
    ``"none"`` falls back to piecewise-linear interpolation.
    """

    freqs: np.ndarray
    power: np.ndarray
    interpolation: Literal["none", "cubic-spline"] = "none"

    def __post_init__(self):
        freqs = _as_vector(self.freqs)
        power = _as_vector(self.power)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "power", power)
        if freqs.shape != power.shape or freqs.size == 0:
            raise ValueError("freqs and power must be non-empty and equally long")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if freqs[0] < -1e-12 or freqs[-1] > np.pi + 1e-12:
            raise ValueError("freqs must lie in [0, pi]")
        if not np.all(np.isfinite(power)) or np.any(power < 0):
            raise ValueError("power must be finite and non-negative")
        if self.interpolation not in ("none", "cubic-spline"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")

    def __len__(self):
        return self.freqs.size

    def __eq__(self, other):
        if not isinstance(other, SpectrumEstimate):
            return NotImplemented
        return (
            np.array_equal(self.freqs, other.freqs)
            and np.array_equal(self.power, other.power)
            and self.interpolation == other.interpolation
        )

    __hash__ = None

    def evaluate(self, freqs) -> np.ndarray:
        freqs = np.abs(np.asarray(freqs, dtype=float))
        if self.interpolation == "cubic-spline" and len(self) >= 4:
            spline = CubicSpline(self.freqs, self.power, bc_type="natural")
            return np.maximum(spline(freqs), 0.0)
        return np.interp(freqs, self.freqs, self.power)

    def band_power(self) -> float:
        """``(1/pi) * integral of S over the grid span`` by the trapezoid rule."""
        if len(self) == 1:
            return float(self.power[0])
        return float(np.trapezoid(self.power, self.freqs) / np.pi)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["freq", "power"])
            for f, s in zip(self.freqs, self.power):
                writer.writerow([repr(float(f)), repr(float(s))])

    @classmethod
    def from_csv(cls, path, interpolation="none") -> "SpectrumEstimate":
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
            if not rows or rows[0] != ["freq", "power"]:
                raise MalformedFile(f"{path}: expected header 'freq,power'")
            data = np.array([[float(v) for v in row] for row in rows[1:]])
            return cls(data[:, 0], data[:, 1], interpolation)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, MalformedFile):
                raise
            raise MalformedFile(f"{path}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class AutocovarianceSeq:
    """Autocovariance lags ``r[0..L-1]``."""

    lags: np.ndarray

    def __post_init__(self):
        lags = _as_vector(self.lags)
        object.__setattr__(self, "lags", lags)
        if lags.size == 0:
            raise ValueError("need at least r[0]")
        if lags[0] < 0:
            raise ValueError("r[0] must be non-negative")
        slack = 1e-9 * lags[0] + 1e-300
        if np.any(np.abs(lags[1:]) > lags[0] + slack):
            raise ValueError("|r[k]| exceeds r[0]; not a valid autocovariance")

    def __len__(self):
        return self.lags.size

    def __getitem__(self, item):
        return self.lags[item]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.lags, dtype=dtype)

    def toeplitz(self, size: int | None = None) -> np.ndarray:
        size = len(self) if size is None else size
        return linalg.toeplitz(self.lags[:size])


def _as_autocov(r) -> AutocovarianceSeq:
    return r if isinstance(r, AutocovarianceSeq) else AutocovarianceSeq(r)


def psd_values(model: ArmaModel, freqs) -> np.ndarray:
    """Evaluate the rational spectrum at arbitrary (possibly unsorted) frequencies."""
    freqs = np.asarray(freqs, dtype=float)
    z = np.exp(-1j * freqs)
    num = np.polyval(model.ma[::-1], z)
    den = np.polyval(model.denominator[::-1], z)
    den_mag = np.abs(den)
    if np.any(den_mag < POLE_TOL):
        raise PoleOnGrid(f"AR denominator below {POLE_TOL:g} on the grid")
    return np.abs(num) ** 2 / den_mag**2


def psd(model: ArmaModel, freqs) -> SpectrumEstimate:
    """Power spectrum of ``model`` on a grid in ``[0, pi]``."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if np.any(freqs < 0) or np.any(freqs > np.pi):
        raise ValueError("freqs must lie in [0, pi]")
    return SpectrumEstimate(freqs, psd_values(model, freqs))


def ar_roots(model: ArmaModel) -> np.ndarray:
    """Roots of ``z^p + c_1 z^(p-1) + ... + c_p`` (the AR poles)."""
    if model.p == 0:
        return np.empty(0, dtype=complex)
    return np.roots(model.denominator)


def is_stationary(model: ArmaModel) -> bool:
    return bool(np.all(np.abs(ar_roots(model)) < 1.0))


def _require_stationary(model: ArmaModel) -> None:
    if not is_stationary(model):
        radius = np.max(np.abs(ar_roots(model)))
        raise NotStationary(f"AR pole radius {radius:.6g} >= 1")


def autocovariance(model: ArmaModel, num_lags: int, n_fft: int = 8192) -> AutocovarianceSeq:
    """Stationary autocovariance ``r[0..num_lags-1]``.

    Pure MA models use the closed form ``r[k] = sum_j b_j b_(j-k)``. Anything
    with AR terms goes through an inverse real DFT of the spectrum sampled on
    ``n_fft`` points around the circle, so lags are aliased by multiples of
    ``n_fft``; this is negligible unless a pole sits very near the unit circle.
    """
    if num_lags < 1:
        raise ValueError("num_lags must be positive")
    _require_stationary(model)
    if model.p == 0:
        b = model.ma
        full = np.correlate(b, b, mode="full")[model.q:]
        r = np.zeros(num_lags)
        n = min(num_lags, full.size)
        r[:n] = full[:n]
        return AutocovarianceSeq(r)
    if num_lags > n_fft // 2:
        raise ValueError("num_lags must not exceed n_fft // 2")
    grid = np.linspace(0.0, np.pi, n_fft // 2 + 1)
    r = np.fft.irfft(psd_values(model, grid), n=n_fft)[:num_lags]
    return AutocovarianceSeq(r)


def _burn_in(model: ArmaModel) -> int:
    return max(1000, 20 * (model.p + model.q))


def sample_trajectory(model: ArmaModel, length: int, seed=None) -> np.ndarray:
    """One trajectory ``y[0..length-1]`` driven by unit-variance Gaussian noise.

    The first ``max(1000, 20 (p + q))`` samples of the recursion are discarded
    so the returned segment is (approximately) stationary.
    """
    if length < 1:
        raise ValueError("length must be at least 1")
    _require_stationary(model)
    rng = np.random.default_rng(seed)
    burn = _burn_in(model)
    x = rng.standard_normal(burn + length)
    y = signal.lfilter(model.ma, model.denominator, x)
    return y[burn:]


def _stationary_state_cov(model: ArmaModel) -> np.ndarray:
    """Stationary covariance of the transposed direct-form II filter state."""
    n = max(model.p, model.q)
    a = np.zeros(n + 1)
    a[: model.p + 1] = model.denominator
    b = np.zeros(n + 1)
    b[: model.q + 1] = model.ma
    trans = np.zeros((n, n))
    trans[:-1, 1:] = np.eye(n - 1)
    trans[:, 0] -= a[1:]
    drive = b[1:] - a[1:] * b[0]
    cov = linalg.solve_discrete_lyapunov(trans, np.outer(drive, drive))
    return 0.5 * (cov + cov.T)


def sample_block(model: ArmaModel, count: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent stationary trajectories of ``length`` samples.

    Unlike :func:`sample_trajectory` no burn-in is needed: the filter state is
    drawn from its exact stationary distribution before the recursion starts.
    Returns an array of shape ``(count, length)``.
    """
    _require_stationary(model)
    x = rng.standard_normal((count, length))
    n = max(model.p, model.q)
    if n == 0:
        return model.ma[0] * x
    w, v = linalg.eigh(_stationary_state_cov(model))
    root = v * np.sqrt(np.clip(w, 0.0, None))
    zi = rng.standard_normal((count, n)) @ root.T
    y, _ = signal.lfilter(model.ma, model.denominator, x, axis=-1, zi=zi)
    return y


def reflect_poles(model: ArmaModel) -> ArmaModel:
    """Stationary model with the same power spectrum.

    Poles outside the unit circle are reflected to ``1 / conj(z)``; the
    spectrum is preserved by rescaling the MA part by ``1 / |z|`` per pole.
    Poles exactly on the circle cannot be repaired.
    """
    roots = ar_roots(model)
    if roots.size == 0 or np.all(np.abs(roots) < 1.0):
        return model
    mags = np.abs(roots)
    if np.any(np.isclose(mags, 1.0, rtol=0, atol=1e-12)):
        raise PoleOnGrid("pole on the unit circle cannot be reflected")
    outside = mags > 1.0
    new_roots = np.where(outside, 1.0 / np.conj(roots), roots)
    gain = np.prod(mags[outside])
    ar = np.real_if_close(np.poly(new_roots), tol=1e6).real[1:]
    return ArmaModel(ar, model.ma / gain)


def resonance(center: float, radius: float, gain: float = 1.0) -> ArmaModel:
    """AR(2) model whose power spectrum peaks exactly at ``center``.

    The pole pair ``radius * exp(+-i theta)`` gives a spectral maximum at
    ``cos(w) = (1 + radius^2) cos(theta) / (2 radius)``, which is inverted
    here for ``theta``. ``gain`` is the MA coefficient ``b0``.
    """
    if not 0.0 < radius < 1.0:
        raise ValueError("radius must lie in (0, 1)")
    if not 0.0 <= center <= np.pi:
        raise ValueError("center must lie in [0, pi]")
    cos_theta = 2.0 * radius * np.cos(center) / (1.0 + radius**2)
    return ArmaModel([-2.0 * radius * cos_theta, radius**2], [gain])


def psd_peaks(model: ArmaModel, num_points: int = 65537) -> np.ndarray:
    """Local maxima of the power spectrum in ``[0, pi]``, ascending.

    Found on a uniform grid and refined by a parabola through the log
    spectrum at the three nodes around each maximum. End points count when
    the spectrum falls away from them.
    """
    grid = np.linspace(0.0, np.pi, num_points)
    logs = np.log(np.maximum(psd_values(model, grid), np.finfo(float).tiny))
    # the spectrum is even and 2 pi periodic, so mirror the ends
    ext = np.concatenate(([logs[1]], logs, [logs[-2]]))
    inner = ext[1:-1]
    idx = np.flatnonzero((inner > ext[:-2]) & (inner >= ext[2:]))
    step = grid[1] - grid[0]
    peaks = []
    for i in idx:
        y0, y1, y2 = ext[i], ext[i + 1], ext[i + 2]
        denom = y0 - 2.0 * y1 + y2
        delta = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
        peaks.append(float(np.clip(grid[i] + np.clip(delta, -1, 1) * step, 0.0, np.pi)))
    return np.array(peaks)
