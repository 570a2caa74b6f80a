"""Energy spectra, the anomalous-line region of interest, and spectrum files."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pepsim.config import ExperimentConfig
from pepsim.errors import ConfigError, ContractError, DataError
from pepsim.response import FWHM_PER_SIGMA, DetectedRun, SddHits, energy_sigma


@dataclass
class EnergySpectrum:
    bin_edges: np.ndarray
    counts: np.ndarray
    exposure: float
    current_on: bool
    underflow: int = 0
    overflow: int = 0

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, float)
        self.counts = np.asarray(self.counts, np.int64)
        if len(self.counts) != len(self.bin_edges) - 1:
            raise ContractError("len(counts) must equal len(bin_edges) - 1")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ContractError("bin edges must be strictly increasing")
        if np.any(self.counts < 0):
            raise ContractError("counts must be non-negative")

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def compatible(self, other: "EnergySpectrum") -> bool:
        return (len(self.bin_edges) == len(other.bin_edges)
                and np.allclose(self.bin_edges, other.bin_edges, rtol=0, atol=1e-9))


def default_edges(config: ExperimentConfig) -> np.ndarray:
    a = config.analysis
    n = int(round((a.band_high - a.band_low) / a.bin_width))
    return np.linspace(a.band_low, a.band_high, n + 1)


def histogram(run: DetectedRun | SddHits, unvetoed_only: bool, config: ExperimentConfig,
              exposure: float | None = None, current_on: bool | None = None) -> EnergySpectrum:
    """Bin SDD energies. Exposure and current flag come from the run unless given."""
    if isinstance(run, DetectedRun):
        sdd = run.sdd
        exposure = run.exposure if exposure is None else exposure
        current_on = run.current_on if current_on is None else current_on
    else:
        sdd = run
    if exposure is None:
        exposure = config.run.duration
    if current_on is None:
        current_on = config.run.current_on
    energy = sdd.detected_energy[~sdd.vetoed] if unvetoed_only else sdd.detected_energy
    edges = default_edges(config)
    counts, _ = np.histogram(energy, bins=edges)
    # np.histogram closes the last bin on the right; treat E == high as overflow
    at_top = int(np.count_nonzero(energy == edges[-1]))
    counts[-1] -= at_top
    return EnergySpectrum(edges, counts, float(exposure), bool(current_on),
                          underflow=int(np.count_nonzero(energy < edges[0])),
                          overflow=int(np.count_nonzero(energy > edges[-1])) + at_top)


@dataclass(frozen=True)
class RegionOfInterest:
    center: float
    half_width: float

    @property
    def low(self):
        return self.center - self.half_width

    @property
    def high(self):
        return self.center + self.half_width


def default_roi(config: ExperimentConfig, half_width: float | None = None) -> RegionOfInterest:
    """ROI on the anomalous line, half-width ``roi_half_width_fwhm`` x FWHM.

    Raises ConfigError if it overlaps any normal line's +-3 sigma band.
    """
    center = config.target.anomalous_line_energy
    if half_width is None:
        sigma = energy_sigma(center, config.detector)
        half_width = config.analysis.roi_half_width_fwhm * FWHM_PER_SIGMA * float(sigma)
    roi = RegionOfInterest(center, float(half_width))
    validate_roi(roi, config)
    return roi


def validate_roi(roi: RegionOfInterest, config: ExperimentConfig) -> None:
    for energy in config.target.line_energies:
        s3 = 3 * float(energy_sigma(energy, config.detector))
        if roi.low < energy + s3 and energy - s3 < roi.high:
            raise ConfigError(
                f"ROI [{roi.low:.1f}, {roi.high:.1f}] eV overlaps the +-3 sigma band "
                f"[{energy - s3:.1f}, {energy + s3:.1f}] eV of the {energy} eV line"
            )


def roi_containment(roi: RegionOfInterest, config: ExperimentConfig) -> float:
    """Fraction of a Gaussian line at the ROI center that falls inside the ROI."""
    sigma = float(energy_sigma(roi.center, config.detector))
    if sigma == 0:
        return 1.0
    return math.erf(roi.half_width / (sigma * math.sqrt(2.0)))


def round_half_down(x: float) -> int:
    """Nearest integer; exact .5 goes down."""
    return int(math.ceil(x - 0.5))


def roi_counts(spec: EnergySpectrum, roi: RegionOfInterest) -> int:
    """Counts in the ROI. Bins fully inside count in full; bins cut by an ROI
    edge contribute their overlap fraction. The total is rounded to the nearest
    integer with halves rounded down."""
    edges = spec.bin_edges
    if roi.low < edges[0] or roi.high > edges[-1] or roi.half_width < 0:
        raise ContractError(
            f"ROI [{roi.low}, {roi.high}] outside spectrum range [{edges[0]}, {edges[-1]}]"
        )
    lo = np.maximum(edges[:-1], roi.low)
    hi = np.minimum(edges[1:], roi.high)
    frac = np.clip(hi - lo, 0.0, None) / np.diff(edges)
    full = frac >= 1.0
    total = int(spec.counts[full].sum()) + float((spec.counts[~full] * frac[~full]).sum())
    return round_half_down(total)


def write_spectrum_csv(spec: EnergySpectrum, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# exposure_s={float(spec.exposure)!r}\n")
        fh.write(f"# current_on={'true' if spec.current_on else 'false'}\n")
        fh.write(f"# underflow={spec.underflow}\n")
        fh.write(f"# overflow={spec.overflow}\n")
        fh.write("bin_low_eV,bin_high_eV,counts\n")
        for lo, hi, c in zip(spec.bin_edges[:-1], spec.bin_edges[1:], spec.counts):
            fh.write(f"{float(lo)!r},{float(hi)!r},{int(c)}\n")


def read_spectrum_csv(path) -> EnergySpectrum:
    meta: dict[str, str] = {}
    rows = []
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read spectrum {path}: {exc.strerror}") from None
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line != "bin_low_eV,bin_high_eV,counts":
                raise DataError(f"{path}:{lineno}: unexpected header {line!r}")
            header_seen = True
            continue
        try:
            lo, hi, c = line.split(",")
            rows.append((float(lo), float(hi), int(c)))
        except ValueError:
            raise DataError(f"{path}:{lineno}: malformed row {line!r}") from None
    if "exposure_s" not in meta or "current_on" not in meta:
        raise DataError(f"{path}: missing '# exposure_s=' or '# current_on=' metadata")
    if not rows:
        raise DataError(f"{path}: no bins")
    lows, highs, counts = map(np.array, zip(*rows))
    if np.any(lows[1:] != highs[:-1]):
        raise DataError(f"{path}: bins are not contiguous")
    try:
        exposure = float(meta["exposure_s"])
    except ValueError:
        raise DataError(f"{path}: bad exposure {meta['exposure_s']!r}") from None
    try:
        return EnergySpectrum(
            np.append(lows, highs[-1]), counts, exposure,
            meta["current_on"].lower() == "true",
            underflow=int(meta.get("underflow", 0)), overflow=int(meta.get("overflow", 0)),
        )
    except ContractError as exc:
        raise DataError(f"{path}: {exc}") from None
