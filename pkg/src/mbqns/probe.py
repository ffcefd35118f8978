"""Fixed-total-time pi-pulse probe sequences and their filter functions.

A probe sequence is described in the toggling frame by signs ``s[k] = +-1``,
one per gate. For the discrete dephasing model the accumulated phase is
``phi = sum_k s[k] y[k]`` and, for Gaussian noise,

    E[cos(phi)] = exp(-chi),   chi = (1/2) s^T R s = (1/2pi) int S(w) F(w) dw

with ``F(w) = |sum_k s[k] exp(-i k w)|^2 / 2``. The survival probability of a
qubit prepared and measured in ``|+>`` is ``(1 + exp(-chi)) / 2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import linalg

from .arma import ArmaModel, SpectrumEstimate, autocovariance, psd_values
from .errors import InvalidCounts, MalformedFile, NegativePower

__all__ = [
    "ProbeSequence",
    "FilterFunction",
    "generate_fttps",
    "filter_function",
    "filter_values",
    "quadrature_grid",
    "overlap_chi",
    "overlap_chi_time",
    "survival_from_chi",
    "predict_survival",
    "fttps_signs",
    "overlap_matrix",
    "spectrum_on_grid",
    "save_sequences",
    "load_sequences",
    "DEFAULT_GRID_SIZE",
]

DEFAULT_GRID_SIZE = 4096

Spectrum = Union[SpectrumEstimate, ArmaModel]


@dataclass(frozen=True, eq=False)
class ProbeSequence:
    """Toggling-frame signs of the ``index``-th FTTPS sequence."""

    signs: np.ndarray
    index: int

    def __post_init__(self):
        signs = np.array(self.signs, dtype=float).reshape(-1)
        if signs.size == 0 or not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be a non-empty vector of +-1")
        if not 1 <= self.index <= signs.size:
            raise ValueError("index must lie in 1..gate_count")
        signs.setflags(write=False)
        object.__setattr__(self, "signs", signs)

    @property
    def gate_count(self) -> int:
        return self.signs.size

    @property
    def peak_freq(self) -> float:
        return self.index * np.pi / self.gate_count

    def __eq__(self, other):
        if not isinstance(other, ProbeSequence):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.signs, other.signs)

    __hash__ = None

    def __repr__(self):
        return f"ProbeSequence(index={self.index}, gate_count={self.gate_count})"


@dataclass(frozen=True)
class FilterFunction:
    freqs: np.ndarray
    values: np.ndarray

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.freqs, self.values]), delimiter=",",
                   header="freq,value", comments="", fmt="%.17g")


def fttps_signs(gate_count: int, index: int) -> np.ndarray:
    k = np.arange(gate_count)
    return np.where((k * index // gate_count) % 2 == 0, 1.0, -1.0)


def generate_fttps(gate_count: int = 64, num_sequences: int | None = None,
                   indices: Sequence[int] | None = None) -> list[ProbeSequence]:
    """FTTPS set: sequence ``j`` has ``s_j[k] = (-1)^floor(k j / K)``.

    Sequence ``j`` is a square wave with ``j`` half periods over the fixed
    ``K = gate_count`` gates, so its filter function concentrates near
    ``j * pi / K``. By default ``j = 1..num_sequences``; ``indices`` selects an
    explicit subset instead.
    """
    if gate_count < 1:
        raise InvalidCounts("gate_count must be at least 1")
    if indices is None:
        num_sequences = gate_count if num_sequences is None else num_sequences
        if not 1 <= num_sequences <= gate_count:
            raise InvalidCounts(f"need 1 <= J <= K, got J={num_sequences}, K={gate_count}")
        indices = range(1, num_sequences + 1)
    indices = [int(j) for j in indices]
    if not indices or any(not 1 <= j <= gate_count for j in indices):
        raise InvalidCounts(f"indices must lie in 1..{gate_count}")
    return [ProbeSequence(fttps_signs(gate_count, j), j) for j in indices]


def filter_values(seq: ProbeSequence, freqs) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float)
    k = np.arange(seq.gate_count)
    g = np.exp(-1j * np.multiply.outer(freqs, k)) @ seq.signs
    return 0.5 * np.abs(g) ** 2


def filter_function(seq: ProbeSequence, freqs) -> FilterFunction:
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    return FilterFunction(freqs, filter_values(seq, freqs))


@lru_cache(maxsize=8)
def _quadrature(n: int):
    freqs = np.linspace(0.0, np.pi, n)
    weights = np.full(n, np.pi / (n - 1))
    weights[[0, -1]] *= 0.5
    weights /= np.pi
    freqs.setflags(write=False)
    weights.setflags(write=False)
    return freqs, weights


def quadrature_grid(n: int = DEFAULT_GRID_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Uniform trapezoid nodes on ``[0, pi]`` with weights for ``(1/pi) int``.

    For an even integrand this equals ``(1/2pi) int_{-pi}^{pi}``.
    """
    if n < 2:
        raise ValueError("grid needs at least two points")
    return _quadrature(int(n))


def spectrum_on_grid(spectrum: Spectrum, freqs) -> np.ndarray:
    if isinstance(spectrum, ArmaModel):
        return psd_values(spectrum, freqs)
    if isinstance(spectrum, SpectrumEstimate) or hasattr(spectrum, "evaluate"):
        return np.asarray(spectrum.evaluate(freqs), dtype=float)
    power = np.broadcast_to(np.asarray(spectrum, dtype=float), np.shape(freqs))
    return power


def overlap_matrix(seqs: Sequence[ProbeSequence], n_grid: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Rows ``F_k(w_g) * weight_g`` so that ``chi = M @ S(grid)``.

    The uniform grid ``w_g = g pi / (n - 1)`` lets every row come from one
    real FFT of length ``2 (n - 1)``.
    """
    freqs, weights = quadrature_grid(n_grid)
    seqs = list(seqs)
    length = 2 * (n_grid - 1)
    if any(s.gate_count > length for s in seqs):
        return np.array([filter_values(s, freqs) * weights for s in seqs])
    signs = np.zeros((len(seqs), length))
    for row, s in zip(signs, seqs):
        row[: s.gate_count] = s.signs
    g = np.fft.rfft(signs, axis=1)
    return 0.5 * np.abs(g) ** 2 * weights


def overlap_chi(spectrum: Spectrum, seq: ProbeSequence, n_grid: int = DEFAULT_GRID_SIZE) -> float:
    """Overlap integral ``chi = (1/2pi) int S(w) F(w) dw`` by the trapezoid rule.

    ``spectrum`` may be an :class:`ArmaModel`, a :class:`SpectrumEstimate`
    (evaluated through its interpolation rule) or a scalar white level.
    """
    freqs, weights = quadrature_grid(n_grid)
    power = spectrum_on_grid(spectrum, freqs)
    if np.any(power < 0):
        raise NegativePower("spectrum has negative values")
    return float(np.sum(weights * power * filter_values(seq, freqs)))


def overlap_chi_time(model: ArmaModel, seq: ProbeSequence) -> float:
    """Time-domain overlap ``(1/2) s^T R s`` with ``R`` the Toeplitz autocovariance."""
    r = autocovariance(model, seq.gate_count).lags
    s = seq.signs
    return 0.5 * float(s @ linalg.toeplitz(r) @ s)


def survival_from_chi(chi):
    return 0.5 + 0.5 * np.exp(-np.asarray(chi, dtype=float))


def predict_survival(spectrum: Spectrum, seq: ProbeSequence, n_grid: int = DEFAULT_GRID_SIZE) -> float:
    return float(survival_from_chi(overlap_chi(spectrum, seq, n_grid)))


def save_sequences(seqs: Sequence[ProbeSequence], path) -> None:
    counts = {s.gate_count for s in seqs}
    if len(counts) != 1:
        raise ValueError("all sequences must share a gate count")
    payload = {"gate_count": counts.pop(), "indices": [s.index for s in seqs]}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_sequences(path) -> list[ProbeSequence]:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if set(d) != {"gate_count", "indices"}:
            raise MalformedFile(f"{path}: expected keys gate_count, indices")
        return generate_fttps(int(d["gate_count"]), indices=d["indices"])
    except (json.JSONDecodeError, TypeError, InvalidCounts) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
