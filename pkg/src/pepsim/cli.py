"""Command-line entry point: ``pepsim {simulate,analyze,limit,budget,closure}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from pepsim import budget as budget_mod
from pepsim.closure import closure_test
from pepsim.config import ExperimentConfig, dump_config, load_config
from pepsim.errors import ConfigError, DataError, PepsimError
from pepsim.generator import Origin, write_truth_csv
from pepsim.limits import beta2_limit
from pepsim.pipeline import simulate_run
from pepsim.quon import QuonParameter
from pepsim.response import read_detected_csv, write_detected_csv
from pepsim.spectrum import (EnergySpectrum, default_edges, default_roi, histogram,
                             read_spectrum_csv, roi_counts, write_spectrum_csv)
from pepsim.veto import RejectionReport

COMMANDS = ("simulate", "analyze", "limit", "budget", "closure")


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: Path | None
    output_dir: Path
    rng_seed: int | None = None
    replica_count: int = 1
    jobs: int = 1

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.replica_count < 1:
            raise ConfigError(f"replica count must be >= 1, got {self.replica_count}")
        if self.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {self.jobs}")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer: {text}")
    return value


def _fraction(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1): {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file (key = value)")
    common.add_argument("--seed", type=_u64, help="override run.rng_seed")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    parser = argparse.ArgumentParser(prog="pepsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate one run")
    p.add_argument("--beta2", type=float, help="injected beta^2/2 (default run.beta2_over_2)")
    p.add_argument("--current", choices=("on", "off"), help="override run.current_on")

    p = sub.add_parser("analyze", parents=[common], help="spectrum from a detected-event dump")
    p.add_argument("detected", type=Path, help="detected-event CSV")
    p.add_argument("--current", choices=("on", "off"), help="override run.current_on")

    p = sub.add_parser("limit", parents=[common], help="beta^2/2 limit from on/off spectra")
    p.add_argument("on_spectrum", type=Path)
    p.add_argument("off_spectrum", type=Path)
    p.add_argument("--cl", type=_fraction, help="confidence level (default analysis.confidence_level)")
    p.add_argument("--method", choices=("conditional", "classical"), default="conditional")

    p = sub.add_parser("budget", parents=[common], help="print the sensitivity budget")
    p.add_argument("--budget", type=Path, help="budget file (default: VIP2 table)")
    p.add_argument("--reference", type=float, default=4.7e-29, help="reference limit")
    p.add_argument("--combination", choices=("sqrt", "product"), default="sqrt")

    p = sub.add_parser("closure", parents=[common], help="closure / coverage ensembles")
    p.add_argument("--replicas", type=int, default=200)
    p.add_argument("--cl", type=_fraction)
    p.add_argument("--beta2", type=float, help="injected beta^2/2 (default 10x sensitivity)")
    return parser


def _config(manifest: RunManifest, **overrides) -> ExperimentConfig:
    config = load_config(manifest.config_path)
    if manifest.rng_seed is not None:
        overrides["run.rng_seed"] = manifest.rng_seed
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return config.replace(**overrides) if overrides else config


def _outdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {path}: {exc.strerror}") from None
    return path


def _current(flag):
    return None if flag is None else flag == "on"


def cmd_simulate(manifest: RunManifest, beta2=None, current=None) -> int:
    config = _config(manifest, **{"run.beta2_over_2": beta2, "run.current_on": _current(current)})
    out = _outdir(manifest.output_dir)
    param = QuonParameter(config.run.beta2_over_2)
    run = simulate_run(param, config, jobs=manifest.jobs)

    write_truth_csv(run.truth, out / "truth.csv")
    write_detected_csv(run.detected, out / "detected.csv", config.veto.veto_window,
                       config.analysis.tot_cut)
    tag = "on" if config.run.current_on else "off"
    spec = histogram(run.detected, True, config)
    write_spectrum_csv(spec, out / f"spectrum_{tag}.csv")
    (out / "veto_report.txt").write_text(run.report.as_text())
    (out / "veto_report.csv").write_text(
        RejectionReport.CSV_HEADER + "\n" + run.report.as_csv_row() + "\n")
    (out / "run_config.txt").write_text(dump_config(config))

    counts = run.truth.counts()
    by_origin = " ".join(f"{o.name}={counts[o.name]}" for o in Origin)
    rep = run.report
    rej = "undefined" if rep.cosmic_k_rejection is None else f"{rep.cosmic_k_rejection:.4f}"
    ret = "undefined" if rep.signal_retention is None else f"{rep.signal_retention:.4f}"
    print(f"simulate: current_{tag} {by_origin} tags={len(run.tags)} "
          f"cosmic_k_rejection={rej} signal_retention={ret} out={out}")
    return 0


def cmd_analyze(manifest: RunManifest, detected: Path, current=None) -> int:
    config = _config(manifest, **{"run.current_on": _current(current)})
    out = _outdir(manifest.output_dir)
    try:
        cols = read_detected_csv(detected)
    except OSError as exc:
        raise DataError(f"cannot read {detected}: {exc.strerror}") from None
    vetoed = cols["top_hit"] & cols["bottom_hit"]
    energy = cols["detected_energy"][~vetoed]
    edges = default_edges(config)
    counts, _ = np.histogram(energy, bins=edges)
    at_top = int(np.count_nonzero(energy == edges[-1]))
    counts[-1] -= at_top
    spec = EnergySpectrum(edges, counts, config.run.duration, config.run.current_on,
                          int(np.count_nonzero(energy < edges[0])),
                          int(np.count_nonzero(energy > edges[-1])) + at_top)
    tag = "on" if spec.current_on else "off"
    write_spectrum_csv(spec, out / f"spectrum_{tag}.csv")
    roi = default_roi(config)
    print(f"analyze: events={len(cols['detected_energy'])} vetoed={int(vetoed.sum())} "
          f"roi=[{roi.low:.1f},{roi.high:.1f}] eV roi_counts={roi_counts(spec, roi)}")
    return 0


def cmd_limit(manifest: RunManifest, on_path: Path, off_path: Path, cl=None,
              method="conditional") -> int:
    config = _config(manifest)
    on = read_spectrum_csv(on_path)
    off = read_spectrum_csv(off_path)
    if not on.compatible(off):
        raise DataError(f"binning mismatch between {on_path} and {off_path}")
    if not off.exposure > 0:
        raise DataError(f"{off_path}: off exposure is {off.exposure}; "
                        "cannot scale the background (division by zero)")
    if not on.exposure > 0:
        raise DataError(f"{on_path}: on exposure is {on.exposure}; must be positive")
    cl = config.analysis.confidence_level if cl is None else cl
    roi = default_roi(config)
    result = beta2_limit(roi_counts(on, roi), roi_counts(off, roi), on.exposure / off.exposure,
                         config, on.exposure, cl, method=method)
    text = result.as_text()
    print(text, end="")
    (_outdir(manifest.output_dir) / "limit_report.txt").write_text(text)
    return 0


def cmd_budget(manifest: RunManifest, budget_path=None, reference=4.7e-29,
               combination="sqrt") -> int:
    entries = (budget_mod.load_budget(budget_path) if budget_path
               else budget_mod.default_budget())
    print(budget_mod.budget_report(entries, reference, combination), end="")
    return 0


def cmd_closure(manifest: RunManifest, cl=None, beta2=None) -> int:
    config = _config(manifest)
    if manifest.replica_count < 100:
        logger.warning(f"only {manifest.replica_count} replicas: coverage estimates "
                       "have little statistical power (>= 100 recommended)")
    report = closure_test(config, manifest.replica_count, cl=cl, beta2=beta2,
                          jobs=manifest.jobs)
    text = report.as_text()
    print(text, end="")
    (_outdir(manifest.output_dir) / "closure_report.txt").write_text(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level="WARNING", format="{level}: {message}")
    try:
        manifest = RunManifest(args.command, args.config, args.out, args.seed,
                               getattr(args, "replicas", 1), args.jobs)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: logger.warning(str(msg))
            if args.command == "simulate":
                return cmd_simulate(manifest, args.beta2, args.current)
            if args.command == "analyze":
                return cmd_analyze(manifest, args.detected, args.current)
            if args.command == "limit":
                return cmd_limit(manifest, args.on_spectrum, args.off_spectrum, args.cl,
                                 args.method)
            if args.command == "budget":
                return cmd_budget(manifest, args.budget, args.reference, args.combination)
            return cmd_closure(manifest, args.cl, args.beta2)
    except PepsimError as exc:
        print(f"pepsim {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
