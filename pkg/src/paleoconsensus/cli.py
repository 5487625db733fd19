"""Command-line interface: ``analyze``, ``simulate`` and ``render``.

Exit codes: 0 on success, 2 on configuration or input errors, 3 on
numerical failure.
"""

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from . import io as pio
from .chronology import bin_dates, center, merge_chronologies, smooth_date_errors
from .exceptions import ConfigurationError, InvalidInputError, NumericalError, UnsupportedModeError
from .model import ERROR_MODES, ModelConfig
from .sampler import SamplerConfig, run_chain
from .scale_space import (
    build_credibility_map,
    contribution_curves,
    default_scale_grid,
    default_time_grid,
)
from .simulate import SIGNALS, SyntheticSpec, simulate
from .svg import render_map_svg

logger = logging.getLogger("paleoconsensus")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


@dataclass(frozen=True)
class RunConfig:
    """Every setting of an ``analyze`` run.

    ``markers`` are smoothing levels drawn on the map and used for the
    contribution curves; when empty, the levels at the quartiles of the scale
    grid are used.
    """

    inputs: tuple
    out: str = "results"
    bin_width: float = 15.0
    error_mode: str = "large"
    sigma_bar: dict = field(default_factory=dict)
    w: float | None = None
    eta: float = 20.0
    beta: float = 0.5
    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    random_dates: bool = False
    extended: bool = False
    alpha: float = 0.8
    scale_levels: int = 200
    lambda_min: float | None = None
    lambda_max: float | None = None
    time_points: int = 2000
    markers: tuple = ()
    date_bandwidth: float | None = None
    n_jobs: int = 1
    dump_chain: bool = False

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        object.__setattr__(self, "markers", tuple(float(m) for m in self.markers))
        object.__setattr__(self, "sigma_bar", {str(k): float(v) for k, v in self.sigma_bar.items()})
        if not self.inputs:
            raise ConfigurationError("at least one input file is required")
        if self.error_mode not in ERROR_MODES:
            raise ConfigurationError(f"--error-mode must be one of {ERROR_MODES}")
        if self.bin_width < 0:
            raise ConfigurationError("--bin-width must be >= 0")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("--alpha must lie in (0, 1)")
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ConfigurationError("need iterations >= 1 and 0 <= burn-in < iterations")
        if self.thin < 1:
            raise ConfigurationError("--thin must be >= 1")
        if self.scale_levels < 1:
            raise ConfigurationError("--scale-levels must be >= 1")
        if self.time_points < 2:
            raise ConfigurationError("--time-points must be >= 2")
        if self.eta <= 0 or self.beta <= 0:
            raise ConfigurationError("--eta and --beta must be > 0")
        if self.w is not None and self.w <= 0:
            raise ConfigurationError("--w must be > 0")
        if any(m <= 0 for m in self.markers):
            raise ConfigurationError("--markers must be > 0")
        if self.n_jobs < 1:
            raise ConfigurationError("--n-jobs must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["inputs"] = list(self.inputs)
        d["markers"] = list(self.markers)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown run settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AnalysisResult:
    chain: object
    cmap: object
    contributions: list
    anomalies: list
    joint: object
    markers: np.ndarray


def run_analysis(config):
    """Load data, sample the posterior and build the scale-space products."""
    series = []
    for path in config.inputs:
        series.extend(pio.read_records(path, require_age_sd=config.random_dates))
    ids = [s.record_id for s in series]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("record ids must be unique across input files")

    series = bin_dates(series, config.bin_width)
    anomalies = [center(s) for s in series]
    joint = merge_chronologies(anomalies)
    if config.random_dates:
        if joint.mean_sd is None:
            raise ConfigurationError("random dates require the 'age_sd' column for every record")
        joint = joint.with_psi(smooth_date_errors(joint.t, joint.mean_sd, config.date_bandwidth))

    model = ModelConfig.from_error_mode(
        anomalies,
        config.error_mode,
        sigma_bar=config.sigma_bar,
        w=config.w,
        eta=config.eta,
        beta=config.beta,
        extended=config.extended,
        random_dates=config.random_dates,
    )
    sampler = SamplerConfig(
        n_iter=config.iterations, burn_in=config.burn_in, thin=config.thin, seed=config.seed
    )

    def progress(it):
        if (it + 1) % 500 == 0:
            logger.info("iteration %d / %d", it + 1, config.iterations)

    chain = run_chain(anomalies, joint, model, sampler, progress=progress)

    lambdas = default_scale_grid(joint.t, config.scale_levels, config.lambda_min, config.lambda_max)
    s_grid = default_time_grid(joint.t, config.time_points)
    logger.info("building credibility map: %d levels x %d points", lambdas.size, s_grid.size)
    cmap = build_credibility_map(chain, lambdas, s_grid, config.alpha, n_jobs=config.n_jobs)

    if config.markers:
        markers = np.array(config.markers)
    else:
        markers = lambdas[np.unique([lambdas.size // 4, lambdas.size // 2, (3 * lambdas.size) // 4])]
    contributions = []
    if not config.extended:
        contributions = contribution_curves(chain, markers, s_grid)
    return AnalysisResult(chain, cmap, contributions, anomalies, joint, markers)


def cmd_analyze(config):
    """Run the pipeline and write every artifact into ``config.out``.

    Returns a mapping from artifact name to path.
    """
    result = run_analysis(config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "consensus": out / "consensus.csv",
        "map": out / "map.csv",
        "svg": out / "map.svg",
        "manifest": out / "manifest.json",
    }
    pio.write_consensus(paths["consensus"], result.joint.age_bp, result.chain.mu)
    pio.write_map(paths["map"], result.cmap)
    render_map_svg(
        result.cmap,
        paths["svg"],
        markers=result.markers,
        title=f"credibility map, alpha = {config.alpha:g}",
    )
    if result.contributions:
        paths["contributions"] = out / "contributions.csv"
        pio.write_contributions(paths["contributions"], result.contributions)
    if config.dump_chain:
        paths["chain"] = out / "chain.npz"
        pio.dump_chain(paths["chain"], result.chain)

    chain = result.chain
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "inputs": {p: pio.file_digest(p) for p in config.inputs},
        "resolved": {
            "records": list(result.joint.record_ids),
            "record_means": [a.mean for a in result.anomalies],
            "joint_dates": int(result.joint.n),
            "w": list(chain.model.w),
            "nu": list(chain.model.nu),
            "sigma_bar": list(chain.model.sigma_bar),
            "lambda_min": float(result.cmap.lambdas[0]),
            "lambda_max": float(result.cmap.lambdas[-1]),
            "markers": [float(m) for m in result.markers],
            "clamped_points": int(result.cmap.clamped),
        },
        "diagnostics": chain.summary(),
        "outputs": sorted(p.name for k, p in paths.items() if k != "manifest"),
    }
    pio.write_manifest(paths["manifest"], manifest)
    return paths


def cmd_simulate(spec, out):
    """Write ``input.csv``, ``truth.csv`` and ``spec.json`` into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows, truth = simulate(spec)
    paths = {"input": out / "input.csv", "truth": out / "truth.csv", "spec": out / "spec.json"}
    pio.write_records(paths["input"], rows)
    pio.write_truth(paths["truth"], truth)
    pio.write_manifest(paths["spec"], spec.to_dict())
    return paths


def _parse_sigma_bar(items):
    out = {}
    for item in items or ():
        rid, sep, val = item.partition("=")
        if not sep or not rid:
            raise ConfigurationError(f"--sigma-bar expects rec=value, got {item!r}")
        try:
            out[rid] = float(val)
        except ValueError:
            raise ConfigurationError(f"--sigma-bar {item!r}: value is not a number") from None
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="paleoconsensus", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate the consensus and its credibility map")
    a.add_argument("inputs", nargs="*", help="input CSV file(s)")
    a.add_argument("--from-manifest", help="rerun with the settings stored in a manifest")
    a.add_argument("--out", default="results")
    a.add_argument("--bin-width", type=float, default=15.0)
    a.add_argument("--error-mode", choices=ERROR_MODES, default="large")
    a.add_argument("--sigma-bar", action="append", metavar="REC=VAL",
                   help="error bound for one record; repeatable")
    a.add_argument("--w", type=float, help="inverse-Wishart scale, overriding the mode's value")
    a.add_argument("--eta", type=float, default=20.0)
    a.add_argument("--beta", type=float, default=0.5)
    a.add_argument("--iterations", type=int, default=4000)
    a.add_argument("--burn-in", type=int, default=2000)
    a.add_argument("--thin", type=int, default=1)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--random-dates", action="store_true")
    a.add_argument("--extended", action="store_true")
    a.add_argument("--alpha", type=float, default=0.8)
    a.add_argument("--scale-levels", type=int, default=200)
    a.add_argument("--lambda-min", type=float)
    a.add_argument("--lambda-max", type=float)
    a.add_argument("--time-points", type=int, default=2000)
    a.add_argument("--markers", type=float, nargs="+", default=(), metavar="LAMBDA")
    a.add_argument("--date-bandwidth", type=float)
    a.add_argument("--n-jobs", type=int, default=1)
    a.add_argument("--dump-chain", action="store_true", help="also write chain.npz")

    s = sub.add_parser("simulate", help="generate synthetic records with known truth")
    s.add_argument("--out", default="synthetic")
    s.add_argument("--signal", choices=SIGNALS, default="sum-of-sines")
    s.add_argument("--records", type=int, default=3)
    s.add_argument("--samples", type=int, default=20, help="samples per record")
    s.add_argument("--noise-sd", type=float, nargs="+", default=[0.2])
    s.add_argument("--date-sd", type=float, default=0.0)
    s.add_argument("--date-sd-slope", type=float, default=0.0)
    s.add_argument("--age-min", type=float, default=0.0)
    s.add_argument("--age-max", type=float, default=10000.0)
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--shared-ages", action="store_true", help="sample every record at the same ages")
    s.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("render", help="render a map.csv as SVG")
    r.add_argument("map_csv")
    r.add_argument("--out", default="map.svg")
    r.add_argument("--markers", type=float, nargs="+", default=())
    return p


def _config_from_args(args):
    if args.from_manifest:
        d = pio.read_manifest(args.from_manifest).get("config")
        if not isinstance(d, dict):
            raise ConfigurationError(f"{args.from_manifest}: manifest has no config section")
        return RunConfig.from_dict(d)
    return RunConfig(
        inputs=tuple(args.inputs),
        out=args.out,
        bin_width=args.bin_width,
        error_mode=args.error_mode,
        sigma_bar=_parse_sigma_bar(args.sigma_bar),
        w=args.w,
        eta=args.eta,
        beta=args.beta,
        iterations=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=args.seed,
        random_dates=args.random_dates,
        extended=args.extended,
        alpha=args.alpha,
        scale_levels=args.scale_levels,
        lambda_min=args.lambda_min,
        lambda_max=args.lambda_max,
        time_points=args.time_points,
        markers=tuple(args.markers),
        date_bandwidth=args.date_bandwidth,
        n_jobs=args.n_jobs,
        dump_chain=args.dump_chain,
    )


def _render(args):
    flags, lambdas, age = pio.read_map(args.map_csv)
    cmap = SimpleNamespace(flags=flags, lambdas=lambdas, age_bp=age)
    render_map_svg(cmap, args.out, markers=args.markers)
    return {"svg": Path(args.out)}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        if args.command == "analyze":
            paths = cmd_analyze(_config_from_args(args))
        elif args.command == "simulate":
            noise = args.noise_sd[0] if len(args.noise_sd) == 1 else tuple(args.noise_sd)
            spec = SyntheticSpec(
                signal=args.signal,
                n_records=args.records,
                samples_per_record=args.samples,
                noise_sd=noise,
                date_sd=args.date_sd,
                date_sd_slope=args.date_sd_slope,
                age_min=args.age_min,
                age_max=args.age_max,
                amplitude=args.amplitude,
                shared_ages=args.shared_ages,
                seed=args.seed,
            )
            paths = cmd_simulate(spec, args.out)
        else:
            paths = _render(args)
    except (ConfigurationError, InvalidInputError, UnsupportedModeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
