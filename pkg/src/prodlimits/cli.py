"""Command-line experiment runner.

Usage::

    prodlimits <command> [--config PATH] [--seed U64] [--threads N] [--out DIR] [--quiet]

Configuration is layered: built-in defaults, then the JSON file given by
``--config``, then environment variables ``PRODLIMITS_<FIELD>`` (values
parsed as JSON when possible, e.g. ``PRODLIMITS_REPLICATES=5000``), then
command-line flags. Every run writes ``manifest.json`` to the output
directory before anything else.

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures; errors are reported as one JSON line on stderr.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .law import law_condition_report, law_to_recipe, law_two_atoms, make_law
from .semigroup import NonConvergenceError, interior_margin
from .simulate import SimConfig, run_batch, stationary_sample_fast
from .spectral import (
    SpectralRangeError,
    chebyshev_s_grid,
    cumulants_from_pressure,
    pressure_curve,
    spectral_summary,
    spectral_triple,
    write_summary,
)
from .stats import (
    berry_esseen_rate_fit,
    manifest,
    mdp_rate_check,
    moderate_deviation_ratio,
    regularity_exponent,
    variance_triple,
    write_manifest,
)
from .tilted import estimate_tail_probability, run_tilted_batch

ENV_PREFIX = "PRODLIMITS_"
COMMANDS = {
    "simulate": "simulate a batch of products (batch.csv)",
    "spectral": "pressure curve, cumulants and Cramer series (pressure.csv, spectral.json)",
    "berry-esseen": "Kolmogorov distance to the normal law along the n ladder",
    "mdr": "moderate deviation tail ratios against the Cramer prediction",
    "mdp": "moderate deviation rates with b_n = n^p",
    "variance": "normalized second moments of the three matrix observables",
    "regularity": "tail of the stationary law near the boundary",
    "tilt": "importance-sampling tail estimate (tilted.csv, tail.json)",
    "check": "condition report for the law (report.json)",
}
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """All parameters of one CLI run. Every field has a default."""

    law: dict = field(default_factory=lambda: law_to_recipe(law_two_atoms()))
    n: int = 256
    ns: list = field(default_factory=lambda: [64, 256, 1024])
    replicates: int = 100_000
    ys: list = field(default_factory=lambda: [0.0, 1.0, 2.0])
    y: float = 2.0
    s_max: float = 0.5
    s_points: int = 21
    s: Optional[float] = None
    resolution: int = 512
    mdp_exponent: float = 0.7
    y0: float = 1.0
    method: str = "plain"
    observables: list = field(default_factory=lambda: ["log_vec_norm"])
    x0: Optional[list] = None
    f: Optional[list] = None
    delta_k: float = 0.05
    burn_in: int = 200
    t_grid: Optional[list] = None
    seed: int = 0
    out: str = "out"

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def validate(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name in ("n", "replicates", "resolution", "burn_in", "s_points"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.method not in ("plain", "tilted"):
            raise ConfigError("method must be 'plain' or 'tilted'")
        try:
            make_law(self.law)
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"bad law recipe: {err}") from err


def _parse_env_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, env=None, overrides=None):
    """Defaults, then file, then environment, then explicit overrides."""
    data = ExperimentConfig().to_dict()
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data.update(json.load(fh))
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from err
    env = os.environ if env is None else env
    for key in list(data):
        var = ENV_PREFIX + key.upper()
        if var in env:
            data[key] = _parse_env_value(env[var])
    for key, val in (overrides or {}).items():
        if val is not None:
            data[key] = val
    return ExperimentConfig.from_dict(data)


def _point(v):
    return None if v is None else np.asarray(v, dtype=float)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _finite(v):
    # JSON has no inf/nan; map them to strings
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def run_experiment(command, cfg, threads=1, quiet=False):
    """Run one subcommand; returns a dict of produced files and a short summary."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    law = make_law(cfg.law)
    d = law.dim
    x0 = _point(cfg.x0)
    f = _point(cfg.f)
    meta = manifest(
        law, cfg.seed, cfg.replicates, resolution=cfg.resolution,
        tolerances={"eigen": 1e-12, "saddle": 1e-8, "weights": 1e-12},
        command=command, config=cfg.to_dict(), version=__version__,
        x0_in_K=None if x0 is None else bool(interior_margin(x0 / np.linalg.norm(x0)) >= cfg.delta_k),
    )
    write_manifest(out / "manifest.json", meta)
    files = ["manifest.json"]
    summary = {}

    def cumulants():
        s_grid = chebyshev_s_grid(cfg.s_max, cfg.s_points)
        curve = pressure_curve(law, s_grid, resolution=cfg.resolution, threads=threads)
        return curve, cumulants_from_pressure(curve)

    if command == "simulate":
        b = run_batch(SimConfig(law, cfg.n, cfg.replicates, x0, f, cfg.seed), threads=threads)
        b.to_csv(out / "batch.csv")
        files.append("batch.csv")
        summary = b.moments()
    elif command == "spectral":
        curve, cu = cumulants()
        curve.to_csv(out / "pressure.csv")
        summary = spectral_summary(curve, cu)
        write_summary(out / "spectral.json", summary)
        files += ["pressure.csv", "spectral.json"]
    elif command == "berry-esseen":
        _, cu = cumulants()
        rep = berry_esseen_rate_fit(law, cfg.ns, cfg.replicates, cfg.seed, cfg.observables,
                                    cu, x0, f, threads, cfg.resolution)
        rep.to_csv(out / "berry_esseen.csv")
        files.append("berry_esseen.csv")
        summary = {o: {"c": c, "beta": b} for o, (c, b) in rep.fits.items()}
    elif command == "mdr":
        _, cu = cumulants()
        rep = moderate_deviation_ratio(law, cfg.n, cfg.ys, cu, cfg.method, cfg.replicates,
                                       cfg.seed, cfg.observables, x0=x0, threads=threads,
                                       resolution=cfg.resolution)
        rep.to_csv(out / "mdr.csv")
        files.append("mdr.csv")
        summary = {"rows": len(rep.rows_)}
    elif command == "mdp":
        _, cu = cumulants()
        rep = mdp_rate_check(law, cfg.mdp_exponent, cfg.y0, cfg.ns, cfg.replicates, cfg.seed,
                             cu, x0=x0, threads=threads, resolution=cfg.resolution)
        rep.to_csv(out / "mdp.csv")
        files.append("mdp.csv")
        summary = {"rates": rep.rates, "target": rep.target}
    elif command == "variance":
        _, cu = cumulants()
        rep = variance_triple(law, cfg.n, cfg.replicates, cfg.seed, cu, x0, f, threads)
        rep.to_csv(out / "variance.csv")
        files.append("variance.csv")
        summary = rep.values
    elif command == "regularity":
        pts = stationary_sample_fast(law, cfg.burn_in, cfg.replicates, cfg.seed)
        direction = f if f is not None else np.eye(d)[0]
        rep = regularity_exponent(pts, direction, cfg.t_grid)
        rep.to_csv(out / "regularity.csv")
        summary = {"alpha": _finite(rep.alpha), "gap": rep.gap, "samples": rep.samples}
        _write_json(out / "regularity.json", summary)
        files += ["regularity.csv", "regularity.json"]
    elif command == "tilt":
        _, cu = cumulants()
        est = estimate_tail_probability(law, cfg.n, cfg.y, cfg.replicates, cfg.seed, x0,
                                        cumulants=cu, s=cfg.s, resolution=cfg.resolution,
                                        threads=threads)
        triple = spectral_triple(law, est.s_used, resolution=cfg.resolution)
        run_tilted_batch(law, triple, cfg.n, cfg.replicates, x0, f, cfg.seed,
                         threads).to_csv(out / "tilted.csv")
        _write_json(out / "tail.json", est.to_dict())
        files += ["tilted.csv", "tail.json"]
        summary = est.to_dict()
    elif command == "check":
        summary = law_condition_report(law).to_dict()
        _write_json(out / "report.json", summary)
        files.append("report.json")
    else:
        raise ConfigError(f"unknown command {command!r}")
    if not quiet:
        print(json.dumps({"command": command, "out": str(out), "files": files,
                          "summary": summary}, sort_keys=True, default=_json_default))
    return {"files": files, "summary": summary}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed")
    common.add_argument("--threads", type=int, default=None, metavar="N",
                        help="worker threads (does not change results)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--quiet", action="store_true", help="no summary on stdout")
    parser = argparse.ArgumentParser(
        prog="prodlimits",
        description="Limit-theorem experiments for products of random positive matrices.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit": code}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_CONFIG, "ConfigError", "no command given")
    env_threads = os.environ.get(ENV_PREFIX + "THREADS")
    try:
        threads = args.threads if args.threads is not None else int(env_threads or 1)
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        cfg = load_config(args.config, overrides={"seed": args.seed, "out": args.out})
    except (ConfigError, ValueError, TypeError) as err:
        return _fail(EXIT_CONFIG, type(err).__name__, str(err))
    try:
        run_experiment(args.command, cfg, threads=threads, quiet=args.quiet)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, type(err).__name__, str(err))
    except (ArithmeticError, NonConvergenceError, SpectralRangeError) as err:
        return _fail(EXIT_NUMERIC, type(err).__name__, str(err))
    except (ValueError, TypeError, KeyError) as err:
        return _fail(EXIT_CONFIG, type(err).__name__, str(err))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
