"""Command-line front end.

Verbs
-----
simulate   write a simulated dataset (CSV + metadata) and the resolved config
estimate   run one estimator on a dataset
select     SchWARMA model-order search
composite  fit an injected model on top of a known native spectrum
superres   sweep an AR(2) peak between FTTPS bins and compare peak errors

Exit status is 0 on success, 2 for configuration or input-file errors and 3
when an estimator fails. Errors are printed to stderr as ``error: Name: msg``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import classical, gradfit
from .arma import ArmaModel, SpectrumEstimate, psd, psd_peaks, resonance
from .errors import ConfigError, MalformedFile, QnsError
from .invert import autocov_from_spectrum, estimate_nnls, interpolate
from .probe import generate_fttps
from .sim import load_dataset, save_dataset, simulate_qns

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATOR = 0, 2, 3

METHODS = ("nnls", "yw", "ma", "cepstral", "music", "schwarma")
DENSE_OUTPUT = 4097


@dataclass
class SweepConfig:
    """Peak centres ``start_bin + k * step`` (in units of ``pi / K``) up to ``stop_bin``."""

    start_bin: float = 20.0
    stop_bin: float = 21.0
    step: float = 0.2
    radius: float = 0.95
    gain: float = 0.02

    def centers(self, gate_count: int) -> np.ndarray:
        if self.step <= 0 or self.stop_bin < self.start_bin:
            raise ConfigError("sweep needs step > 0 and stop_bin >= start_bin")
        n = int(math.floor((self.stop_bin - self.start_bin) / self.step + 1e-9)) + 1
        return (self.start_bin + self.step * np.arange(n)) * np.pi / gate_count


@dataclass
class ExperimentConfig:
    models: list = field(default_factory=list)
    gate_count: int = 64
    num_sequences: int | None = None
    shots: int = 1000
    trajectories: int = 1000
    seed: int | None = None
    estimator: str = "nnls"
    estimator_options: dict = field(default_factory=dict)
    output_dir: str = "."
    sample_rate_hz: float | None = None
    sweep: dict | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(d)

    def validate(self) -> None:
        for name in ("gate_count",):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("shots", "trajectories"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 0:
                raise ConfigError(f"{name} must be a non-negative integer")
        if self.num_sequences is not None and not 1 <= self.num_sequences <= self.gate_count:
            raise ConfigError("num_sequences must lie in 1..gate_count")
        if self.seed is not None and (not isinstance(self.seed, int) or self.seed < 0):
            raise ConfigError("seed must be a non-negative integer")
        if self.estimator not in METHODS:
            raise ConfigError(f"estimator must be one of {', '.join(METHODS)}")
        if self.sample_rate_hz is not None and not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be positive")
        try:
            self.arma_models()
            self.sweep_config()
        except (MalformedFile, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def arma_models(self) -> list[ArmaModel]:
        """Models given inline as ``{"ar": [...], "ma": [...]}`` or as paths to such JSON."""
        out = []
        for spec in self.models:
            if isinstance(spec, str):
                if not Path(spec).exists():
                    raise ConfigError(f"model file not found: {spec}")
                out.append(ArmaModel.load(spec))
            else:
                out.append(ArmaModel.from_dict(spec))
        return out

    def sweep_config(self) -> SweepConfig | None:
        if self.sweep is None:
            return None
        known = {f.name for f in fields(SweepConfig)}
        unknown = sorted(set(self.sweep) - known)
        if unknown:
            raise ConfigError(f"unknown sweep keys: {', '.join(unknown)}")
        sweep = SweepConfig(**self.sweep)
        sweep.centers(self.gate_count)
        return sweep


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _hz(cfg_rate, omega):
    """Convert radians/sample to Hz when a sample rate is known."""
    return None if cfg_rate is None else float(omega) * cfg_rate / (2.0 * np.pi)


def _resolve_seed(cfg: ExperimentConfig) -> int:
    if cfg.seed is None:
        cfg.seed = int(np.random.SeedSequence().generate_state(1)[0])
    return cfg.seed


def _load_spectrum(path: str):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"spectrum file not found: {path}")
    if p.suffix == ".json":
        return ArmaModel.load(p)
    return SpectrumEstimate.from_csv(p, interpolation="cubic-spline")


def cmd_simulate(cfg: ExperimentConfig) -> Path:
    """Simulate the configured experiment; returns the dataset path."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(cfg)
    models = cfg.arma_models() or [ArmaModel.white(0.0)]
    seqs = generate_fttps(cfg.gate_count, cfg.num_sequences)
    dataset = simulate_qns(models, seqs, cfg.trajectories, cfg.shots, seed)
    path = out / "dataset.csv"
    save_dataset(dataset, path)
    _json_dump(asdict(cfg), out / "config.json")
    return path


def _model_outputs(model: ArmaModel, out: Path, extra: dict) -> None:
    psd(model, np.linspace(0.0, np.pi, DENSE_OUTPUT)).to_csv(out / "spectrum.csv")
    _json_dump({**model.to_dict(), **extra}, out / "result.json")


def cmd_estimate(dataset_path, method: str, options: dict, output_dir,
                 sample_rate_hz: float | None = None) -> Path:
    """Run ``method`` on a dataset; writes ``spectrum.csv`` and ``result.json``."""
    if method not in METHODS:
        raise ConfigError(f"method must be one of {', '.join(METHODS)}")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(dataset_path)
    p = int(options.get("p", 2))
    q = int(options.get("q", 0))

    if method == "schwarma":
        select = options.get("select")
        if select:
            result = gradfit.model_select(dataset, int(options.get("max_params", 8)), select)
            gradfit.grid_to_csv(result.grid, out / "grid.csv")
        else:
            result = gradfit.fit(dataset, p, q)
        psd(result.model, np.linspace(0.0, np.pi, DENSE_OUTPUT)).to_csv(out / "spectrum.csv")
        result.save(out / "result.json")
        return out

    band, info = estimate_nnls(dataset, full_output=True)
    if method == "nnls":
        band.to_csv(out / "spectrum.csv")
        diag = {"method": "nnls", **info}
        if sample_rate_hz is not None:
            diag["freqs_hz"] = [_hz(sample_rate_hz, w) for w in band.freqs]
        _json_dump(diag, out / "result.json")
        return out

    num_lags = int(options.get("num_lags", dataset.gate_count + 1))
    lags = autocov_from_spectrum(band, num_lags)
    if method == "yw":
        model = classical.yule_walker(lags, p, overdetermined=bool(options.get("overdetermined", False)))
        _model_outputs(model, out, {"method": "yw"})
    elif method == "ma":
        model, minfo = classical.ma_fit(lags, q, full_output=True)
        _model_outputs(model, out, {"method": "ma", "objective": minfo["objective"],
                                    "converged": minfo["converged"]})
    elif method == "cepstral":
        model = classical.cepstral_arma(band, p, q, dataset=dataset)
        _model_outputs(model, out, {"method": "cepstral"})
    else:
        comps = int(options.get("components", 2))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = classical.music(lags, comps, size=options.get("size"))
        res.pseudo.to_csv(out / "spectrum.csv")
        diag = {
            "method": "music",
            "components": comps,
            "peaks": res.signed_peaks().tolist(),
            "pseudo_csv": "spectrum.csv",
            "eigenvalues": res.eigenvalues.tolist(),
            "complete": res.complete,
            "warnings": [str(w.message) for w in caught],
        }
        if sample_rate_hz is not None:
            diag["peaks_hz"] = [_hz(sample_rate_hz, w) for w in res.signed_peaks()]
        _json_dump(diag, out / "result.json")
    return out


def cmd_select(dataset_path, max_params: int, criterion: str, output_dir) -> Path:
    return cmd_estimate(dataset_path, "schwarma",
                        {"select": criterion, "max_params": max_params}, output_dir)


def cmd_composite(dataset_path, native_path, p: int, q: int, output_dir,
                  injected_known_path=None, beta: float | None = None) -> Path:
    """Fit ``beta`` (if needed) and an injected ARMA(p, q) model on top of ``beta * native``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(dataset_path)
    native = _load_spectrum(native_path)
    known = _load_spectrum(injected_known_path) if injected_known_path else None
    comp, result = gradfit.composite_fit(dataset, native, p, q, injected_known=known, beta=beta)
    grid = np.linspace(0.0, np.pi, DENSE_OUTPUT)
    comp.spectrum(grid).to_csv(out / "spectrum.csv")
    _json_dump({"beta": comp.beta, "injected": comp.injected.to_dict(), "fit": result.to_dict()},
               out / "result.json")
    return out


_SUPERRES_HEADER = ["true_freq", "nnls_peak", "schwarma_peak", "abs_err_nnls", "abs_err_schwarma"]


def superres_point(center: float, sweep: SweepConfig, cfg: ExperimentConfig, seed) -> tuple[float, float]:
    """NNLS argmax bin and SchWARMA AR(2) peak for one sweep centre."""
    seqs = generate_fttps(cfg.gate_count, cfg.num_sequences)
    model = resonance(center, sweep.radius, sweep.gain)
    dataset = simulate_qns(model, seqs, cfg.trajectories, cfg.shots, seed)
    band = estimate_nnls(dataset)
    nnls_peak = float(band.freqs[np.argmax(band.power)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", gradfit.NoImprovement)
        fitted = gradfit.fit(dataset, 2, 0).model
    peaks = psd_peaks(fitted)
    schwarma_peak = float(peaks[np.argmin(np.abs(peaks - center))])
    return nnls_peak, schwarma_peak


def cmd_superres(cfg: ExperimentConfig) -> Path:
    """Sweep an AR(2) peak and write the peak-error report CSV."""
    sweep = cfg.sweep_config() or SweepConfig()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(cfg)
    rows, failures = [], []
    for i, center in enumerate(sweep.centers(cfg.gate_count)):
        point_seed = int(np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1)[0])
        try:
            nnls_peak, schwarma_peak = superres_point(center, sweep, cfg, point_seed)
        except QnsError as exc:
            failures.append({"index": i, "true_freq": center, "error": type(exc).__name__,
                             "message": str(exc)})
            nnls_peak = schwarma_peak = math.nan
        rows.append([center, nnls_peak, schwarma_peak,
                     abs(nnls_peak - center), abs(schwarma_peak - center)])
    path = out / "superres.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_SUPERRES_HEADER)
        writer.writerows([[repr(float(v)) for v in row] for row in rows])
    _json_dump({"config": asdict(cfg), "failures": failures}, out / "superres.json")
    for f in failures:
        print(f"warning: sweep point {f['index']} failed: {f['error']}: {f['message']}", file=sys.stderr)
    return path


def _config_from_args(args) -> ExperimentConfig:
    d = {}
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        d = asdict(cfg)
    for key in ("gate_count", "num_sequences", "shots", "trajectories", "seed", "output_dir",
                "sample_rate_hz"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    return ExperimentConfig.from_dict(d)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--gate-count", dest="gate_count", type=int)
    parser.add_argument("--num-sequences", dest="num_sequences", type=int)
    parser.add_argument("--shots", type=int)
    parser.add_argument("--trajectories", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--sample-rate-hz", dest="sample_rate_hz", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbqns", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate an FTTPS dataset")
    _common(sim)

    est = sub.add_parser("estimate", help="estimate a spectrum from a dataset")
    est.add_argument("dataset")
    est.add_argument("--method", choices=METHODS, default="nnls")
    est.add_argument("--p", type=int, default=2)
    est.add_argument("--q", type=int, default=0)
    est.add_argument("--components", type=int, default=2)
    est.add_argument("--num-lags", dest="num_lags", type=int)
    est.add_argument("--overdetermined", action="store_true")
    est.add_argument("--select", choices=("mse", "aic", "bic"))
    est.add_argument("--max-params", dest="max_params", type=int, default=8)
    est.add_argument("--output-dir", dest="output_dir", default=".")
    est.add_argument("--sample-rate-hz", dest="sample_rate_hz", type=float)

    sel = sub.add_parser("select", help="SchWARMA model-order search")
    sel.add_argument("dataset")
    sel.add_argument("--max-params", dest="max_params", type=int, default=8)
    sel.add_argument("--criterion", choices=("mse", "aic", "bic"), default="bic")
    sel.add_argument("--output-dir", dest="output_dir", default=".")

    comp = sub.add_parser("composite", help="fit injected noise on top of native noise")
    comp.add_argument("dataset")
    comp.add_argument("--native", required=True, help="model JSON or spectrum CSV")
    comp.add_argument("--injected-known", dest="injected_known",
                      help="known injected spectrum, used to fit beta")
    comp.add_argument("--beta", type=float)
    comp.add_argument("--p", type=int, default=2)
    comp.add_argument("--q", type=int, default=0)
    comp.add_argument("--output-dir", dest="output_dir", default=".")

    sr = sub.add_parser("superres", help="peak-localisation sweep between FTTPS bins")
    _common(sr)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "simulate":
            path = cmd_simulate(_config_from_args(args))
        elif args.command == "superres":
            path = cmd_superres(_config_from_args(args))
        elif args.command == "estimate":
            options = {k: getattr(args, k) for k in
                       ("p", "q", "components", "num_lags", "overdetermined", "select", "max_params")
                       if getattr(args, k) is not None}
            if args.method != "schwarma" and args.select:
                raise ConfigError("--select only applies to --method schwarma")
            path = cmd_estimate(args.dataset, args.method, options, args.output_dir,
                                args.sample_rate_hz)
        elif args.command == "select":
            path = cmd_select(args.dataset, args.max_params, args.criterion, args.output_dir)
        else:
            if args.beta is not None and args.beta < 0:
                raise ConfigError("beta must be non-negative")
            path = cmd_composite(args.dataset, args.native, args.p, args.q, args.output_dir,
                                 args.injected_known, args.beta)
    except (ConfigError, MalformedFile) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QnsError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    print(path)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
