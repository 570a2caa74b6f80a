"""Detector response: SDD energy and drift-time smearing, scintillator veto hits,
and the QDC -> ToT readout map."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from pepsim.config import DetectorConfig, ExperimentConfig, VetoConfig
from pepsim.errors import ContractError, DataError
from pepsim.generator import Origin, TruthEvents

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
QDC_MAX = 4095
TOT_MAX = 1023
REFERENCE_ENERGY = 8000.0  # eV, where the SDD resolution is quoted
# mode of the triangular drift delay as a fraction of its support
DRIFT_MODE_FRACTION = 0.25


class Layer(enum.IntEnum):
    Top = 0
    Bottom = 1
    Other = 2


def energy_sigma(energy, config: DetectorConfig):
    """Gaussian sigma (eV) at ``energy``, scaling as sqrt(E)."""
    fwhm = config.energy_resolution_fwhm_at_8keV * np.sqrt(np.asarray(energy) / REFERENCE_ENERGY)
    return fwhm / FWHM_PER_SIGMA


def smear_energy(true_energy, config: DetectorConfig, rng: np.random.Generator):
    true_energy = np.asarray(true_energy, dtype=float)
    if np.any(true_energy <= 0):
        raise ContractError("true energy must be positive")
    out = rng.normal(true_energy, energy_sigma(true_energy, config))
    out = np.maximum(out, 1e-3)
    return out if out.ndim else float(out)


def drift_support(config: DetectorConfig) -> float:
    """Upper edge of the delay density; the triangle's FWHM is half of it."""
    return 2.0 * config.drift_time_fwhm


def smear_sdd_time(true_time, config: DetectorConfig, rng: np.random.Generator):
    """Add a triangular drift delay on [0, 2 * drift_time_fwhm]."""
    true_time = np.asarray(true_time, dtype=float)
    upper = drift_support(config)
    if upper == 0:
        delay = np.zeros_like(true_time)
    else:
        delay = rng.triangular(0.0, DRIFT_MODE_FRACTION * upper, upper, true_time.shape)
    out = true_time + delay
    return out if out.ndim else float(out)


def qdc_to_tot(qdc, pedestal: int = 100):
    """Piecewise-linear ToT for a QDC channel: 0 up to the pedestal, then slope 1/2,
    saturating at 1023. Integer arithmetic, so ``pedestal + 2000 -> 1000`` exactly."""
    q = np.asarray(qdc)
    if q.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(q, 1), 0)):
            raise ContractError("QDC values must be integer channels")
        q = q.astype(np.int64)
    if np.any((q < 0) | (q > QDC_MAX)):
        raise ContractError(f"QDC out of range [0, {QDC_MAX}]")
    tot = np.where(q <= pedestal, 0, np.minimum(TOT_MAX, (q.astype(np.int64) - pedestal + 1) // 2))
    return tot.astype(np.int16) if tot.ndim else int(tot)


@dataclass
class ScintHits:
    counter_id: np.ndarray
    layer: np.ndarray
    hit_time: np.ndarray
    qdc: np.ndarray
    tot: np.ndarray
    physical: np.ndarray  # True when the deposit is above threshold
    cosmic_id: np.ndarray

    _fields = ("counter_id", "layer", "hit_time", "qdc", "tot", "physical", "cosmic_id")

    @classmethod
    def empty(cls):
        return cls(np.empty(0, np.int16), np.empty(0, np.int8), np.empty(0),
                   np.empty(0, np.int16), np.empty(0, np.int16), np.empty(0, bool),
                   np.empty(0, np.int64))

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, n) for p in parts]) for n in cls._fields))

    def take(self, index):
        return ScintHits(*(getattr(self, n)[index] for n in self._fields))

    def sorted(self):
        return self.take(np.argsort(self.hit_time, kind="stable"))

    def __len__(self):
        return len(self.hit_time)


def scint_response(charged: TruthEvents, config: VetoConfig,
                   rng: np.random.Generator) -> ScintHits:
    """Veto-counter hits for CosmicCharged tracks.

    A track crossing the veto passes one top and one bottom counter. Each
    crossed counter records a QDC word; with probability
    ``per_counter_efficiency`` it is a real deposit, otherwise a pedestal
    entry (ToT = 0).
    """
    if np.any(charged.origin != Origin.CosmicCharged):
        raise ContractError("scint_response takes CosmicCharged events only")
    n = len(charged)
    crosses = rng.random(n) < config.solid_angle_coverage
    t = charged.true_time[crosses]
    ids = charged.cosmic_id[crosses]
    m = len(t)
    per_layer = config.counters_per_layer
    top = rng.integers(0, per_layer, m)
    bottom = per_layer + rng.integers(0, per_layer, m)

    # interleave (top, bottom) per track
    counter = np.column_stack([top, bottom]).ravel()
    layer = np.tile(np.array([Layer.Top, Layer.Bottom], np.int8), m)
    true_t = np.repeat(t, 2)
    cid = np.repeat(ids, 2)
    k = 2 * m

    sigma_t = config.sipm_time_resolution_fwhm / FWHM_PER_SIGMA
    hit_time = true_t + rng.normal(0.0, sigma_t, k)
    physical = rng.random(k) < config.per_counter_efficiency

    log_sigma = config.qdc_width / config.qdc_mpv
    log_mu = np.log(config.qdc_mpv) + log_sigma**2  # mode of the log-normal at qdc_mpv
    deposit = np.maximum(1, np.rint(rng.lognormal(log_mu, log_sigma, k)))
    noise = np.rint(np.abs(rng.normal(0.0, config.pedestal_noise, k)))
    qdc = np.where(physical, config.pedestal + deposit, config.pedestal - noise)
    qdc = np.clip(qdc, 0, QDC_MAX).astype(np.int16)
    tot = qdc_to_tot(qdc, config.pedestal)
    return ScintHits(counter.astype(np.int16), layer, hit_time, qdc, tot, physical,
                     cid.astype(np.int64))


@dataclass
class SddHits:
    detected_energy: np.ndarray
    sdd_time: np.ndarray
    origin: np.ndarray
    cosmic_id: np.ndarray
    vetoed: np.ndarray = field(default=None)

    _fields = ("detected_energy", "sdd_time", "origin", "cosmic_id", "vetoed")

    def __post_init__(self):
        if self.vetoed is None:
            self.vetoed = np.zeros(len(self.sdd_time), bool)

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0), np.empty(0, np.int8), np.empty(0, np.int64))

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, n) for p in parts]) for n in cls._fields))

    def take(self, index):
        return SddHits(*(getattr(self, n)[index] for n in self._fields))

    def sorted(self):
        return self.take(np.argsort(self.sdd_time, kind="stable"))

    def select(self, origin: Origin):
        return self.take(self.origin == origin)

    def __len__(self):
        return len(self.sdd_time)


@dataclass
class DetectedRun:
    """Detector-level output of one run; both tables are time-sorted."""

    sdd: SddHits
    scint: ScintHits
    exposure: float
    current_on: bool

    def records(self, window: float):
        """Iterate :class:`EventRecord` rows, attaching scintillator hits within
        +-``window`` ns of the SDD time."""
        t = self.scint.hit_time
        lo = np.searchsorted(t, self.sdd.sdd_time - window, side="left")
        hi = np.searchsorted(t, self.sdd.sdd_time + window, side="right")
        for i in range(len(self.sdd)):
            hits = [
                ScintHit(int(self.scint.counter_id[j]), Layer(int(self.scint.layer[j])),
                         float(self.scint.hit_time[j]), int(self.scint.qdc[j]),
                         int(self.scint.tot[j]))
                for j in range(lo[i], hi[i])
            ]
            yield EventRecord(float(self.sdd.detected_energy[i]), float(self.sdd.sdd_time[i]),
                              hits, Origin(int(self.sdd.origin[i])), bool(self.sdd.vetoed[i]))


class ScintHit(NamedTuple):
    counter_id: int
    layer: Layer
    hit_time: float
    qdc: int
    tot: int


class EventRecord(NamedTuple):
    detected_energy: float
    sdd_time: float
    scint_hits: list
    origin: Origin | None
    vetoed: bool


def respond(truth: TruthEvents, config: ExperimentConfig,
            rng: np.random.Generator) -> tuple[SddHits, ScintHits]:
    """Detector response for a batch of truth events (output unsorted)."""
    photons = truth.take(truth.origin != Origin.CosmicCharged)
    charged = truth.take(truth.origin == Origin.CosmicCharged)
    energy = smear_energy(photons.true_energy, config.detector, rng)
    sdd_time = smear_sdd_time(photons.true_time, config.detector, rng)
    sdd = SddHits(np.atleast_1d(energy), np.atleast_1d(sdd_time), photons.origin.copy(),
                  photons.cosmic_id.copy())
    scint = scint_response(charged, config.veto, rng)
    return sdd, scint


DETECTED_HEADER = "detected_energy_eV,sdd_time_ns,n_scint_hits,top_hit,bottom_hit,min_tot,origin"


def write_detected_csv(run: DetectedRun, path, window: float, tot_cut: bool = True) -> None:
    """One row per SDD event. Scintillator columns summarize hits within
    +-``window`` ns of the SDD time; with ``tot_cut`` only ToT > 0 hits count
    towards ``top_hit``/``bottom_hit``. ``min_tot`` is empty when there are no hits."""
    with open(path, "w", newline="\n") as fh:
        fh.write(DETECTED_HEADER + "\n")
        for rec in run.records(window):
            hits = rec.scint_hits
            live = [h for h in hits if h.tot > 0 or not tot_cut]
            top = int(any(h.layer == Layer.Top for h in live))
            bottom = int(any(h.layer == Layer.Bottom for h in live))
            min_tot = str(min(h.tot for h in hits)) if hits else ""
            origin = rec.origin.name if rec.origin is not None else ""
            fh.write(f"{rec.detected_energy!r},{rec.sdd_time!r},{len(hits)},"
                     f"{top},{bottom},{min_tot},{origin}\n")


def read_detected_csv(path):
    """Parse a detected-event dump into column arrays."""
    cols = {k: [] for k in DETECTED_HEADER.split(",")}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(cols):
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            for k in cols:
                cols[k].append(row[k])
    return {
        "detected_energy": np.array(cols["detected_energy_eV"], float),
        "sdd_time": np.array(cols["sdd_time_ns"], float),
        "n_scint_hits": np.array(cols["n_scint_hits"], int),
        "top_hit": np.array(cols["top_hit"], int).astype(bool),
        "bottom_hit": np.array(cols["bottom_hit"], int).astype(bool),
        "origin": cols["origin"],
    }
