"""Monte Carlo SchWARMA simulation of FTTPS noise-spectroscopy experiments."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .arma import ArmaModel, is_stationary, sample_block
from .errors import MalformedFile, NotStationary
from .probe import (DEFAULT_GRID_SIZE, ProbeSequence, fttps_signs, overlap_matrix,
                    spectrum_on_grid, quadrature_grid, survival_from_chi)

__all__ = ["QnsDataset", "simulate_qns", "save_dataset", "load_dataset", "CHUNK_SIZE"]

#: Trajectories per random substream. Fixed so results never depend on how
#: chunks are scheduled.
CHUNK_SIZE = 512

_HEADER = ["seq_index", "gate_count", "shots", "prob"]


@dataclass(frozen=True, eq=False)
class QnsDataset:
    """Measured (or simulated) survival probabilities, one per probe sequence.

    ``shots[k] == 0`` marks an exact, trajectory-averaged probability with no
    binomial sampling; ``trajectories == 0`` marks the infinite-trajectory
    (Gaussian) limit. ``trajectories`` and ``seed`` are ``None`` for data
    that did not come from :func:`simulate_qns`.
    """

    sequences: tuple
    probs: np.ndarray
    shots: np.ndarray
    trajectories: int | None = None
    seed: int | None = None

    def __post_init__(self):
        seqs = tuple(self.sequences)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        shots = np.broadcast_to(np.asarray(self.shots), probs.shape).astype(np.int64)
        if len(seqs) != probs.size or probs.size == 0:
            raise ValueError("need one probability per sequence")
        if not np.all((probs >= 0) & (probs <= 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(shots < 0):
            raise ValueError("shot counts must be non-negative")
        probs.setflags(write=False)
        shots.setflags(write=False)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "shots", shots)

    def __len__(self):
        return self.probs.size

    @property
    def gate_count(self) -> int:
        counts = {s.gate_count for s in self.sequences}
        if len(counts) != 1:
            raise ValueError("sequences have different gate counts")
        return counts.pop()

    def with_probs(self, probs) -> "QnsDataset":
        return QnsDataset(self.sequences, probs, self.shots, self.trajectories, self.seed)

    def __eq__(self, other):
        if not isinstance(other, QnsDataset):
            return NotImplemented
        return (
            self.sequences == other.sequences
            and np.array_equal(self.probs, other.probs)
            and np.array_equal(self.shots, other.shots)
            and self.trajectories == other.trajectories
            and self.seed == other.seed
        )

    __hash__ = None


def _check_models(models: Sequence[ArmaModel]) -> list[ArmaModel]:
    models = [models] if isinstance(models, ArmaModel) else list(models)
    if not models:
        raise ValueError("need at least one noise model")
    for m in models:
        if not is_stationary(m):
            raise NotStationary(f"{m!r} is not stationary")
    return models


def _mean_cos(models, seq: ProbeSequence, index: int, trajectories: int, seed: int) -> float:
    partial = []
    for chunk, start in enumerate(range(0, trajectories, CHUNK_SIZE)):
        count = min(CHUNK_SIZE, trajectories - start)
        y = np.zeros((count, seq.gate_count))
        for m, model in enumerate(models):
            ss = np.random.SeedSequence(seed, spawn_key=(0, index, m, chunk))
            y += sample_block(model, count, seq.gate_count, np.random.default_rng(ss))
        partial.append(np.sum(np.cos(y @ seq.signs)))
    return math.fsum(partial) / trajectories


def _exact_probs(models, seqs, n_grid: int) -> np.ndarray:
    freqs, _ = quadrature_grid(n_grid)
    power = sum(spectrum_on_grid(m, freqs) for m in models)
    return survival_from_chi(overlap_matrix(seqs, n_grid) @ power)


def simulate_qns(models, seqs: Sequence[ProbeSequence], trajectories: int = 1000,
                 shots: int = 1000, seed: int | None = None,
                 n_grid: int = DEFAULT_GRID_SIZE) -> QnsDataset:
    """Simulate an FTTPS experiment under the sum of independent ARMA noises.

    For every sequence, ``trajectories`` independent noise realisations are
    drawn, the toggling-frame phase ``phi = s . y`` is accumulated and the
    survival probability ``(1 + mean cos(phi)) / 2`` is formed. A single
    binomial draw with ``shots`` trials is then taken from that average.

    ``shots=0`` returns the trajectory average itself. ``trajectories=0``
    replaces the Monte Carlo average by its Gaussian-limit expectation
    ``exp(-chi)`` computed from the summed spectrum.

    Randomness for sequence ``i``, model ``m`` and trajectory chunk ``c``
    comes from ``SeedSequence(seed, spawn_key=(0, i, m, c))``, so results are
    reproducible and independent of evaluation order.
    """
    models = _check_models(models)
    seqs = list(seqs)
    if trajectories < 0 or shots < 0:
        raise ValueError("trajectories and shots must be non-negative")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    if trajectories == 0:
        pbar = _exact_probs(models, seqs, n_grid)
    else:
        pbar = np.array([
            0.5 * (1.0 + _mean_cos(models, seq, i, trajectories, seed))
            for i, seq in enumerate(seqs)
        ])
    pbar = np.clip(pbar, 0.0, 1.0)
    if shots > 0:
        probs = np.empty_like(pbar)
        for i, p in enumerate(pbar):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i)))
            probs[i] = rng.binomial(shots, p) / shots
    else:
        probs = pbar
    return QnsDataset(seqs, probs, shots, trajectories, seed)


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def save_dataset(dataset: QnsDataset, path) -> None:
    """Write ``seq_index,gate_count,shots,prob`` CSV plus a metadata sidecar.

    The sidecar (``<stem>.meta.json``) holds the trajectory count and seed and
    is only written when at least one of them is known.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_HEADER)
        for seq, shots, p in zip(dataset.sequences, dataset.shots, dataset.probs):
            writer.writerow([seq.index, seq.gate_count, int(shots), repr(float(p))])
    meta = _meta_path(path)
    if dataset.trajectories is not None or dataset.seed is not None:
        meta.write_text(json.dumps({"trajectories": dataset.trajectories, "seed": dataset.seed}),
                        encoding="utf-8")
    elif meta.exists():
        meta.unlink()


def load_dataset(path) -> QnsDataset:
    """Read a dataset written by :func:`save_dataset` or an experiment export.

    Raises :class:`MalformedFile` on a wrong header, unparsable values,
    probabilities outside ``[0, 1]`` or invalid sequence indices.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    if not rows or rows[0] != _HEADER:
        raise MalformedFile(f"{path}: header must be {','.join(_HEADER)}")
    rows = [r for r in rows[1:] if r]
    if not rows:
        raise MalformedFile(f"{path}: no data rows")
    seqs, shots, probs = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(_HEADER):
            raise MalformedFile(f"{path}:{lineno}: expected {len(_HEADER)} fields")
        try:
            j, k, n, p = int(row[0]), int(row[1]), int(row[2]), float(row[3])
        except ValueError as exc:
            raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
        if not 0.0 <= p <= 1.0:
            raise MalformedFile(f"{path}:{lineno}: prob {p} outside [0, 1]")
        if n < 0 or not 1 <= j <= k:
            raise MalformedFile(f"{path}:{lineno}: invalid shots or sequence index")
        seqs.append(ProbeSequence(fttps_signs(k, j), j))
        shots.append(n)
        probs.append(p)
    trajectories = seed = None
    meta = _meta_path(path)
    if meta.exists():
        try:
            d = json.loads(meta.read_text(encoding="utf-8"))
            trajectories, seed = d["trajectories"], d["seed"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedFile(f"{meta}: {exc}") from exc
    return QnsDataset(seqs, probs, shots, trajectories, seed)
