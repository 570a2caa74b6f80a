"""Two-layer scintillator coincidence and the SDD time-correlation veto."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from pepsim.config import ExperimentConfig
from pepsim.errors import ContractError
from pepsim.generator import Origin
from pepsim.response import Layer, ScintHits, SddHits, drift_support


@dataclass(frozen=True)
class CoincidenceWindow:
    scint_pair_window: float = 20.0  # ns, max |dt| between top and bottom hits
    sdd_veto_window: float = 1000.0  # ns, half-width around a cosmic tag

    def __post_init__(self):
        if not (self.scint_pair_window > 0 and self.sdd_veto_window > 0):
            raise ContractError(f"coincidence windows must be positive: {self}")

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "CoincidenceWindow":
        window = cls(config.veto.scint_pair_window, config.veto.veto_window)
        if window.sdd_veto_window < config.detector.charge_collection_max:
            warnings.warn(
                f"sdd_veto_window {window.sdd_veto_window} ns is shorter than the charge "
                f"collection time {config.detector.charge_collection_max} ns; "
                "the drift tail escapes the veto",
                stacklevel=2,
            )
        elif window.sdd_veto_window < drift_support(config.detector):
            warnings.warn("sdd_veto_window does not cover the drift-delay support", stacklevel=2)
        return window


def _require_sorted(t, what):
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ContractError(f"{what} must be sorted by time")


def tag_cosmics(hits: ScintHits, window: CoincidenceWindow, tot_cut: bool = True) -> np.ndarray:
    """Cosmic tag times from top/bottom coincidences.

    Top and bottom hits are paired when each is the other's nearest neighbour
    in time and they lie within ``scint_pair_window``. The tag time is the mean
    of the pair. With ``tot_cut`` only hits with ToT > 0 take part.
    """
    _require_sorted(hits.hit_time, "scintillator hits")
    live = hits.tot > 0 if tot_cut else np.ones(len(hits), bool)
    top = hits.hit_time[live & (hits.layer == Layer.Top)]
    bottom = hits.hit_time[live & (hits.layer == Layer.Bottom)]
    if len(top) == 0 or len(bottom) == 0:
        return np.empty(0)
    j = _nearest(bottom, top)
    i = _nearest(top, bottom)
    mutual = i[j] == np.arange(len(top))
    close = np.abs(top - bottom[j]) <= window.scint_pair_window
    keep = mutual & close
    return np.sort(0.5 * (top[keep] + bottom[j[keep]]))


def _nearest(sorted_ref, values):
    """Index into ``sorted_ref`` of the nearest element to each value (ties go left)."""
    idx = np.searchsorted(sorted_ref, values)
    left = np.clip(idx - 1, 0, len(sorted_ref) - 1)
    right = np.clip(idx, 0, len(sorted_ref) - 1)
    use_right = np.abs(sorted_ref[right] - values) < np.abs(values - sorted_ref[left])
    return np.where(use_right, right, left)


def veto_intervals(tags: np.ndarray, half_width: float) -> np.ndarray:
    """Union of [tag - w, tag + w] as an (n, 2) array of disjoint sorted intervals."""
    tags = np.asarray(tags, float)
    if len(tags) == 0:
        return np.empty((0, 2))
    _require_sorted(tags, "tags")
    starts = tags - half_width
    ends = tags + half_width
    new = np.ones(len(tags), bool)
    new[1:] = starts[1:] > ends[:-1]
    group = np.cumsum(new) - 1
    out = np.empty((group[-1] + 1, 2))
    out[:, 0] = starts[new]
    out[:, 1] = np.maximum.reduceat(ends, np.flatnonzero(new))
    return out


def apply_veto(sdd: SddHits, tags: np.ndarray, window: CoincidenceWindow) -> SddHits:
    """Set ``sdd.vetoed`` in place for events within the veto window of a tag."""
    intervals = veto_intervals(tags, window.sdd_veto_window)
    if len(intervals) == 0:
        sdd.vetoed[:] = False
        return sdd
    k = np.searchsorted(intervals[:, 0], sdd.sdd_time, side="right") - 1
    inside = (k >= 0) & (sdd.sdd_time <= intervals[np.maximum(k, 0), 1])
    sdd.vetoed[:] = inside
    return sdd


def vetoed_time_fraction(tags, window: CoincidenceWindow, duration_ns: float) -> float:
    """Fraction of the run covered by merged veto intervals (clipped to the run)."""
    iv = np.clip(veto_intervals(tags, window.sdd_veto_window), 0.0, duration_ns)
    return float((iv[:, 1] - iv[:, 0]).sum() / duration_ns)


def split_at_gaps(times: np.ndarray, window: CoincidenceWindow) -> list[slice]:
    """Slices of a sorted time array separated by gaps wider than twice the veto
    window; each slice can be vetoed independently."""
    times = np.asarray(times)
    if len(times) == 0:
        return []
    cut = np.flatnonzero(np.diff(times) > 2 * window.sdd_veto_window) + 1
    bounds = np.concatenate([[0], cut, [len(times)]])
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class RejectionReport:
    cosmic_k_rejection: float | None
    signal_retention: float | None
    accidental_loss: float | None
    environmental_veto_fraction: float | None
    n_cosmic_k: int
    n_signal: int
    n_environmental: int

    @property
    def background_reduction_factor(self) -> float | None:
        """1 / (residual cosmic-K fraction)."""
        if self.cosmic_k_rejection is None:
            return None
        residual = 1.0 - self.cosmic_k_rejection
        return float("inf") if residual == 0 else 1.0 / residual

    def as_text(self) -> str:
        def fmt(x):
            return "undefined" if x is None else f"{x:.6f}"

        rows = [
            ("cosmic_k_rejection", fmt(self.cosmic_k_rejection)),
            ("background_reduction_factor", fmt(self.background_reduction_factor)),
            ("signal_retention", fmt(self.signal_retention)),
            ("accidental_loss", fmt(self.accidental_loss)),
            ("environmental_veto_fraction", fmt(self.environmental_veto_fraction)),
            ("n_cosmic_k", str(self.n_cosmic_k)),
            ("n_signal", str(self.n_signal)),
            ("n_environmental", str(self.n_environmental)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}} = {v}" for k, v in rows) + "\n"

    CSV_HEADER = ("cosmic_k_rejection,signal_retention,accidental_loss,"
                  "environmental_veto_fraction,n_cosmic_k,n_signal,n_environmental")

    def as_csv_row(self) -> str:
        vals = [self.cosmic_k_rejection, self.signal_retention, self.accidental_loss,
                self.environmental_veto_fraction]
        cells = ["" if v is None else repr(v) for v in vals]
        cells += [str(self.n_cosmic_k), str(self.n_signal), str(self.n_environmental)]
        return ",".join(cells)


def _fraction(mask):
    return None if len(mask) == 0 else float(np.count_nonzero(mask) / len(mask))


def rejection_report(sdd: SddHits) -> RejectionReport:
    """Veto performance from truth labels. Empty classes give ``None``."""
    ck = sdd.vetoed[sdd.origin == Origin.CosmicInducedK]
    sig = sdd.vetoed[sdd.origin == Origin.PepViolation]
    env = sdd.vetoed[sdd.origin == Origin.EnvironmentalK]
    retention = _fraction(~sig)
    return RejectionReport(
        cosmic_k_rejection=_fraction(ck),
        signal_retention=retention,
        accidental_loss=None if retention is None else 1.0 - retention,
        environmental_veto_fraction=_fraction(env),
        n_cosmic_k=len(ck),
        n_signal=len(sig),
        n_environmental=len(env),
    )
