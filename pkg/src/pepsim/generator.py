"""Monte Carlo truth events for one run.

Events are held column-wise in :class:`TruthEvents`; iterating it yields
:class:`TruthEvent` rows. Energies are delta lines, all broadening is done in
:mod:`pepsim.response`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from pepsim.config import ExperimentConfig, RunPlan, n_new_electrons
from pepsim.errors import CapacityError
from pepsim.quon import QuonParameter
from pepsim.seeding import stage_rng

NO_COSMIC = -1
_BATCH_SHIFT = 40


class Origin(enum.IntEnum):
    PepViolation = 0
    CosmicInducedK = 1
    EnvironmentalK = 2
    Continuum = 3
    CosmicCharged = 4


PHOTON_ORIGINS = (Origin.PepViolation, Origin.CosmicInducedK, Origin.EnvironmentalK,
                  Origin.Continuum)


class TruthEvent(NamedTuple):
    origin: Origin
    true_energy: float | None
    true_time: float
    cosmic_id: int | None


@dataclass
class TruthEvents:
    origin: np.ndarray  # int8, Origin values
    true_energy: np.ndarray  # eV, NaN for CosmicCharged
    true_time: np.ndarray  # ns since run start
    cosmic_id: np.ndarray  # int64, NO_COSMIC if none

    @classmethod
    def empty(cls):
        return cls(np.empty(0, np.int8), np.empty(0), np.empty(0), np.empty(0, np.int64))

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, name) for p in parts])
                     for name in ("origin", "true_energy", "true_time", "cosmic_id")))

    def __len__(self):
        return len(self.origin)

    def __iter__(self) -> Iterator[TruthEvent]:
        for o, e, t, c in zip(self.origin, self.true_energy, self.true_time, self.cosmic_id):
            yield TruthEvent(Origin(int(o)), None if np.isnan(e) else float(e), float(t),
                             None if c == NO_COSMIC else int(c))

    def take(self, index) -> "TruthEvents":
        return TruthEvents(self.origin[index], self.true_energy[index],
                           self.true_time[index], self.cosmic_id[index])

    def sorted(self) -> "TruthEvents":
        return self.take(np.argsort(self.true_time, kind="stable"))

    def count(self, origin: Origin) -> int:
        return int(np.count_nonzero(self.origin == origin))

    def counts(self) -> dict[str, int]:
        return {o.name: self.count(o) for o in Origin}


def expected_signal_count(param: QuonParameter, config: ExperimentConfig,
                          duration: float) -> float:
    """Mean number of detected violating photons for a current-on run."""
    return (param.violation_probability
            * n_new_electrons(config.target, duration)
            * config.target.capture_probability_per_electron
            * config.detector.geometric_acceptance
            * config.detector.detection_efficiency_at_8keV)


def expected_counts(param: QuonParameter, config: ExperimentConfig,
                    plan: RunPlan | None = None) -> dict[Origin, float]:
    plan = config.run if plan is None else plan
    band_kev = (config.analysis.band_high - config.analysis.band_low) / 1000.0
    signal = expected_signal_count(param, config, plan.duration) if plan.current_on else 0.0
    return {
        Origin.PepViolation: signal,
        Origin.CosmicCharged: plan.cosmic_rate * plan.duration,
        Origin.CosmicInducedK: plan.cosmic_rate * plan.duration * plan.cosmic_k_probability,
        Origin.EnvironmentalK: plan.environmental_k_rate * plan.duration,
        Origin.Continuum: plan.flat_background_rate * band_kev * plan.duration,
    }


def check_capacity(param, config, plan=None):
    plan = config.run if plan is None else plan
    total = sum(expected_counts(param, config, plan).values())
    if total > plan.max_events:
        raise CapacityError(
            f"expected {total:.3g} events exceeds run.max_events={plan.max_events}; "
            "lower beta2_over_2, duration or rates"
        )
    return total


def generate_batch(param: QuonParameter, config: ExperimentConfig, plan: RunPlan,
                   index: int) -> TruthEvents:
    """Events for time slice ``index`` of ``plan.n_batches``, unsorted."""
    rng = stage_rng(plan.rng_seed, "generate", index)
    n_batches = plan.n_batches
    t0 = plan.duration * index / n_batches
    t1 = plan.duration * (index + 1) / n_batches
    frac = 1.0 / n_batches
    mean = expected_counts(param, config, plan)
    lines = np.asarray(config.target.line_energies)
    weights = np.asarray(config.target.line_intensities)
    weights = weights / weights.sum()

    def times(n):
        return rng.uniform(t0, t1, n) * 1e9  # s -> ns

    parts = []

    n_sig = rng.poisson(mean[Origin.PepViolation] * frac)
    parts.append((Origin.PepViolation, np.full(n_sig, config.target.anomalous_line_energy),
                  times(n_sig), np.full(n_sig, NO_COSMIC)))

    n_cos = rng.poisson(mean[Origin.CosmicCharged] * frac)
    t_cos = times(n_cos)
    ids = (np.int64(index) << _BATCH_SHIFT) + np.arange(n_cos, dtype=np.int64)
    parts.append((Origin.CosmicCharged, np.full(n_cos, np.nan), t_cos, ids))

    converts = rng.random(n_cos) < plan.cosmic_k_probability
    n_ck = int(converts.sum())
    parts.append((Origin.CosmicInducedK, rng.choice(lines, n_ck, p=weights),
                  t_cos[converts], ids[converts]))

    n_env = rng.poisson(mean[Origin.EnvironmentalK] * frac)
    parts.append((Origin.EnvironmentalK, rng.choice(lines, n_env, p=weights),
                  times(n_env), np.full(n_env, NO_COSMIC)))

    n_con = rng.poisson(mean[Origin.Continuum] * frac)
    parts.append((Origin.Continuum,
                  rng.uniform(config.analysis.band_low, config.analysis.band_high, n_con),
                  times(n_con), np.full(n_con, NO_COSMIC)))

    return TruthEvents(
        np.concatenate([np.full(len(p[2]), p[0], np.int8) for p in parts]),
        np.concatenate([p[1] for p in parts]).astype(float),
        np.concatenate([p[2] for p in parts]),
        np.concatenate([p[3] for p in parts]).astype(np.int64),
    )


def generate_run(param: QuonParameter, config: ExperimentConfig,
                 plan: RunPlan | None = None) -> TruthEvents:
    """All truth events of a run, sorted by time. Deterministic given the seed."""
    plan = config.run if plan is None else plan
    check_capacity(param, config, plan)
    return TruthEvents.concatenate(
        generate_batch(param, config, plan, i) for i in range(plan.n_batches)
    ).sorted()


TRUTH_HEADER = "origin,true_energy_eV,true_time_ns,cosmic_id"


def write_truth_csv(events: TruthEvents, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(TRUTH_HEADER + "\n")
        for ev in events:
            energy = "" if ev.true_energy is None else repr(ev.true_energy)
            cid = "" if ev.cosmic_id is None else str(ev.cosmic_id)
            fh.write(f"{ev.origin.name},{energy},{ev.true_time!r},{cid}\n")
