"""Pseudo-experiment ensembles: expected background, projected sensitivity,
and the null / signal-injection closure checks."""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from pepsim.config import ExperimentConfig
from pepsim.limits import factor_breakdown, poisson_upper_limit
from pepsim.pipeline import simulate_run
from pepsim.quon import QuonParameter
from pepsim.response import energy_sigma
from pepsim.seeding import derive_seed
from pepsim.spectrum import RegionOfInterest, default_roi, histogram, roi_counts


def expected_tag_rate(config: ExperimentConfig) -> float:
    """Cosmic tags per second."""
    v = config.veto
    eff = v.per_counter_efficiency**2 if config.analysis.tot_cut else 1.0
    return config.run.cosmic_rate * v.solid_angle_coverage * eff


def expected_roi_background(config: ExperimentConfig, roi: RegionOfInterest | None = None,
                            duration: float | None = None) -> float:
    """Mean unvetoed background counts in the ROI.

    Continuum plus the Gaussian tails of the normal lines; cosmic-induced
    lines are reduced by the tag efficiency, everything by the random-veto
    dead fraction.
    """
    roi = roi or default_roi(config)
    run = config.run
    duration = run.duration if duration is None else duration
    tag_rate = expected_tag_rate(config)
    live = math.exp(-2.0 * config.veto.veto_window * 1e-9 * tag_rate)
    continuum = run.flat_background_rate * (roi.high - roi.low) / 1000.0 * duration
    cosmic_k = run.cosmic_rate * run.cosmic_k_probability * duration * (
        1.0 - tag_rate / run.cosmic_rate if run.cosmic_rate > 0 else 0.0)
    lines = run.environmental_k_rate * duration + cosmic_k
    tails = 0.0
    for energy, weight in config.target.normal_lines:
        sigma = float(energy_sigma(energy, config.detector))
        tails += weight * (stats.norm.cdf(roi.high, energy, sigma)
                           - stats.norm.cdf(roi.low, energy, sigma))
    return float(live * (continuum + lines * tails))


@dataclass(frozen=True)
class Sensitivity:
    b_expected: float
    n_median: int
    s_up: float
    beta2_over_2: float


def projected_sensitivity(config: ExperimentConfig, cl: float | None = None) -> Sensitivity:
    """Median expected beta^2/2 limit for a background-only current-on run."""
    cl = config.analysis.confidence_level if cl is None else cl
    roi = default_roi(config)
    b = expected_roi_background(config, roi)
    n_med = int(stats.poisson.median(b)) if b > 0 else 0
    s_up = poisson_upper_limit(n_med, b, cl)
    fb = factor_breakdown(config, config.run.duration, roi=roi)
    return Sensitivity(float(b), n_med, s_up, s_up / fb.denominator)


def replica_seed(seed: int, stage: str, index: int) -> int:
    return int(derive_seed(seed, stage, index).generate_state(1, np.uint64)[0])


def run_replica(args) -> tuple[int, int]:
    """ROI counts (current on, current off) for one seeded pseudo-experiment."""
    config, beta2, index, seed = args
    roi = default_roi(config)
    counts = []
    for current_on, stage in ((True, "replica-on"), (False, "replica-off")):
        plan = dataclasses.replace(config.run, current_on=current_on,
                                   rng_seed=replica_seed(seed, stage, index))
        run = simulate_run(QuonParameter(beta2), config, plan, keep_truth=False)
        counts.append(roi_counts(histogram(run.detected, True, config), roi))
    return counts[0], counts[1]


def run_ensemble(config: ExperimentConfig, beta2: float, replicas: int, seed: int,
                 jobs: int = 1) -> np.ndarray:
    """(replicas, 2) array of (n_on, n_off), ordered by replica index."""
    tasks = [(config, beta2, i, seed) for i in range(replicas)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_replica, tasks, chunksize=8))
    else:
        rows = [run_replica(t) for t in tasks]
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def binomial_error(k: int, n: int) -> float:
    p = k / n
    return math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class ClosureReport:
    replicas: int
    confidence_level: float
    b_expected: float
    sensitivity: float
    injected: float
    false_exclusion_rate: float
    false_exclusion_error: float
    false_exclusion_bound: float
    detection_rate: float
    detection_error: float
    threshold_counts: float

    @property
    def null_ok(self) -> bool:
        return self.false_exclusion_rate <= self.false_exclusion_bound

    @property
    def detection_ok(self) -> bool:
        return self.detection_rate >= 0.95

    def as_text(self) -> str:
        return (
            f"replicas                 = {self.replicas}\n"
            f"confidence level         = {self.confidence_level}\n"
            f"expected ROI background  = {self.b_expected:.6g}\n"
            f"projected sensitivity    = {self.sensitivity:.6g}  (beta^2/2)\n"
            f"injected beta^2/2        = {self.injected:.6g}\n"
            f"false-exclusion rate     = {self.false_exclusion_rate:.4f} "
            f"+- {self.false_exclusion_error:.4f}  (bound {self.false_exclusion_bound:.4f}, "
            f"{'ok' if self.null_ok else 'FAIL'})\n"
            f"detection rate           = {self.detection_rate:.4f} "
            f"+- {self.detection_error:.4f}  (needs >= 0.95, "
            f"{'ok' if self.detection_ok else 'FAIL'})\n"
        )


def closure_test(config: ExperimentConfig, replicas: int, seed: int | None = None,
                 cl: float | None = None, injection_factor: float = 10.0,
                 beta2: float | None = None, jobs: int = 1) -> ClosureReport:
    """Background-only and signal-injected ensembles.

    False exclusion: a background-only replica whose current-on ROI count
    exceeds the ``cl`` quantile of the expected background. Detection: an
    injected replica whose excess n_on - n_off * ratio exceeds the median
    background-only upper limit on the signal counts.
    """
    cl = config.analysis.confidence_level if cl is None else cl
    seed = config.run.rng_seed if seed is None else seed
    sens = projected_sensitivity(config, cl)
    injected = injection_factor * sens.beta2_over_2 if beta2 is None else beta2

    null = run_ensemble(config, 0.0, replicas, replica_seed(seed, "closure-null", 0), jobs)
    quantile = stats.poisson.ppf(cl, sens.b_expected) if sens.b_expected > 0 else 0.0
    k_null = int(np.count_nonzero(null[:, 0] > quantile))
    p_null = k_null / replicas
    sigma_null = math.sqrt(cl * (1 - cl) / replicas)

    sig = run_ensemble(config, injected, replicas, replica_seed(seed, "closure-signal", 0), jobs)
    excess = sig[:, 0] - sig[:, 1]  # on and off runs share the same duration
    k_det = int(np.count_nonzero(excess > sens.s_up))
    return ClosureReport(
        replicas=replicas, confidence_level=cl, b_expected=sens.b_expected,
        sensitivity=sens.beta2_over_2, injected=injected,
        false_exclusion_rate=p_null, false_exclusion_error=binomial_error(k_null, replicas),
        false_exclusion_bound=(1 - cl) + 3 * sigma_null,
        detection_rate=k_det / replicas, detection_error=binomial_error(k_det, replicas),
        threshold_counts=sens.s_up,
    )
