"""Experiment configuration: typed sections, a flat ``key = value`` file format,
and ``PEPSIM_`` environment overrides.

File format::

    # comment
    target.current = 100
    detector.energy_resolution_fwhm_at_8keV = 170
    target.normal_lines = 8047.8:0.5797, 8027.8:0.2966, 8905.3:0.1237

Unknown keys are rejected. Every resolved key carries a provenance tag:
``default`` (taken from the VIP2 design), ``derived-default`` (computed
here, see :func:`screened_k_alpha`), ``model-default`` (desk-scale modeling
choice), ``user`` or ``env``.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from pepsim.errors import ConfigError

ELECTRON_CHARGE = 1.602176634e-19  # C, exact (SI 2019)
RYDBERG_EV = 13.605693122994
CU_Z = 29

# Standard X-ray table energies (eV) for Cu, used to anchor the screening fit
# and as the normal-line defaults.
CU_KA1 = 8047.78
CU_KA2 = 8027.83
CU_KB1 = 8905.29
# Kalpha2/Kalpha1 ~ 0.51, Kbeta/Kalpha1 ~ 0.21 (relative emission rates)
_CU_LINE_WEIGHTS = (1.0, 0.51, 0.21)


def screened_k_alpha(z: int = CU_Z, reference: float = CU_KA1, extra_screening: float = 1.0):
    """Moseley-form 2p->1s energy with one extra unit of 1s screening.

    Fits the screening constant sigma so that Ry (Z - sigma)^2 (1 - 1/4)
    reproduces ``reference``, then returns the energy with sigma increased by
    ``extra_screening`` together with the fitted sigma.
    """
    z_eff = math.sqrt(reference / (RYDBERG_EV * 0.75))
    sigma = z - z_eff
    shifted = RYDBERG_EV * (z - sigma - extra_screening) ** 2 * 0.75
    return shifted, sigma


def _default_normal_lines():
    total = sum(_CU_LINE_WEIGHTS)
    energies = (CU_KA1, CU_KA2, CU_KB1)
    return tuple((e, w / total) for e, w in zip(energies, _CU_LINE_WEIGHTS))


ANOMALOUS_CU_K_ALPHA = screened_k_alpha()[0]


def _spec(unit="", provenance="default", **kw):
    return {"unit": unit, "provenance": provenance, **kw}


def _fail(section, name, bound, value):
    raise ConfigError(f"{section}.{name}: must satisfy {bound}, got {value!r}")


@dataclass(frozen=True)
class TargetConfig:
    material: str = field(default="Cu", metadata=_spec())
    length: float = field(default=3.0, metadata=_spec("cm"))
    current: float = field(default=100.0, metadata=_spec("A"))
    capture_probability_per_electron: float = field(
        default=0.1, metadata=_spec(provenance="model-default")
    )
    anomalous_line_energy: float = field(
        default=ANOMALOUS_CU_K_ALPHA, metadata=_spec("eV", "derived-default")
    )
    normal_lines: tuple = field(
        default=_default_normal_lines(), metadata=_spec("eV:fraction", "derived-default")
    )
    electron_charge: float = field(default=ELECTRON_CHARGE, metadata=_spec("C", fixed=True))

    def __post_init__(self):
        s = "target"
        if self.material != "Cu":
            _fail(s, "material", "== 'Cu'", self.material)
        if not self.length > 0:
            _fail(s, "length", "> 0", self.length)
        if not self.current >= 0:
            _fail(s, "current", ">= 0", self.current)
        if not 0 < self.capture_probability_per_electron <= 1:
            _fail(s, "capture_probability_per_electron", "0 < p <= 1",
                  self.capture_probability_per_electron)
        if not self.normal_lines:
            _fail(s, "normal_lines", "non-empty", self.normal_lines)
        if any(e <= 0 or w <= 0 for e, w in self.normal_lines):
            _fail(s, "normal_lines", "positive energies and intensities", self.normal_lines)
        total = sum(w for _, w in self.normal_lines)
        if abs(total - 1) > 1e-9:
            _fail(s, "normal_lines", "intensities summing to 1", total)
        k_alpha_min = min(e for e, _ in self.normal_lines)
        if not 0 < self.anomalous_line_energy < k_alpha_min:
            _fail(s, "anomalous_line_energy", f"0 < E < {k_alpha_min}", self.anomalous_line_energy)

    @property
    def line_energies(self):
        return tuple(e for e, _ in self.normal_lines)

    @property
    def line_intensities(self):
        return tuple(w for _, w in self.normal_lines)


@dataclass(frozen=True)
class DetectorConfig:
    n_sdd: int = field(default=6, metadata=_spec())
    total_active_area: float = field(default=6.0, metadata=_spec("cm2"))
    energy_resolution_fwhm_at_8keV: float = field(default=170.0, metadata=_spec("eV"))
    geometric_acceptance: float = field(default=0.12, metadata=_spec())
    drift_time_fwhm: float = field(default=400.0, metadata=_spec("ns"))
    charge_collection_max: float = field(default=1000.0, metadata=_spec("ns"))
    detection_efficiency_at_8keV: float = field(
        default=0.9, metadata=_spec(provenance="model-default")
    )

    def __post_init__(self):
        s = "detector"
        if self.n_sdd < 1:
            _fail(s, "n_sdd", ">= 1", self.n_sdd)
        if not self.total_active_area > 0:
            _fail(s, "total_active_area", "> 0", self.total_active_area)
        if not self.energy_resolution_fwhm_at_8keV >= 0:
            _fail(s, "energy_resolution_fwhm_at_8keV", ">= 0", self.energy_resolution_fwhm_at_8keV)
        if not 0 < self.geometric_acceptance <= 1:
            _fail(s, "geometric_acceptance", "0 < a <= 1", self.geometric_acceptance)
        if not 0 < self.detection_efficiency_at_8keV <= 1:
            _fail(s, "detection_efficiency_at_8keV", "0 < e <= 1", self.detection_efficiency_at_8keV)
        if not 0 < self.charge_collection_max <= 1000:
            _fail(s, "charge_collection_max", "0 < t <= 1000 ns", self.charge_collection_max)
        if not self.drift_time_fwhm >= 0:
            _fail(s, "drift_time_fwhm", ">= 0", self.drift_time_fwhm)
        # a triangular delay density has FWHM equal to half its support
        if 2 * self.drift_time_fwhm > self.charge_collection_max:
            _fail(s, "drift_time_fwhm",
                  f"<= charge_collection_max/2 = {self.charge_collection_max / 2}",
                  self.drift_time_fwhm)


@dataclass(frozen=True)
class VetoConfig:
    n_counters: int = field(default=32, metadata=_spec())
    counter_dimensions: tuple = field(default=(40.0, 32.0, 250.0), metadata=_spec("mm"))
    solid_angle_coverage: float = field(default=0.90, metadata=_spec())
    per_counter_efficiency: float = field(default=0.97, metadata=_spec())
    sipm_time_resolution_fwhm: float = field(default=3.0, metadata=_spec("ns"))
    veto_window: float = field(default=1000.0, metadata=_spec("ns", "model-default"))
    scint_pair_window: float = field(default=20.0, metadata=_spec("ns", "model-default"))
    pedestal: int = field(default=100, metadata=_spec("channel", "model-default"))
    pedestal_noise: float = field(default=5.0, metadata=_spec("channel", "model-default"))
    qdc_mpv: float = field(default=1200.0, metadata=_spec("channel", "model-default"))
    qdc_width: float = field(default=300.0, metadata=_spec("channel", "model-default"))

    def __post_init__(self):
        s = "veto"
        if self.n_counters < 2:
            _fail(s, "n_counters", ">= 2", self.n_counters)
        if len(self.counter_dimensions) != 3 or min(self.counter_dimensions) <= 0:
            _fail(s, "counter_dimensions", "three positive lengths", self.counter_dimensions)
        for name in ("solid_angle_coverage", "per_counter_efficiency"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                _fail(s, name, "0 < f <= 1", value)
        for name in ("veto_window", "scint_pair_window"):
            value = getattr(self, name)
            if not value > 0:
                _fail(s, name, "> 0", value)
        if not self.sipm_time_resolution_fwhm >= 0:
            _fail(s, "sipm_time_resolution_fwhm", ">= 0", self.sipm_time_resolution_fwhm)
        if not 0 <= self.pedestal < 4095:
            _fail(s, "pedestal", "0 <= p < 4095", self.pedestal)
        if not (self.qdc_mpv > 0 and self.qdc_width > 0 and self.pedestal_noise >= 0):
            _fail(s, "qdc_mpv/qdc_width/pedestal_noise", "positive", (self.qdc_mpv, self.qdc_width))

    @property
    def counters_per_layer(self):
        return self.n_counters // 4


@dataclass(frozen=True)
class RunPlan:
    duration: float = field(default=30 * 86400.0, metadata=_spec("s", "model-default"))
    current_on: bool = field(default=True, metadata=_spec())
    cosmic_rate: float = field(default=0.01, metadata=_spec("Hz", "model-default"))
    environmental_k_rate: float = field(default=1e-3, metadata=_spec("Hz", "model-default"))
    flat_background_rate: float = field(default=1e-5, metadata=_spec("Hz/keV", "model-default"))
    cosmic_k_probability: float = field(default=0.05, metadata=_spec(provenance="model-default"))
    beta2_over_2: float = field(default=0.0, metadata=_spec())
    rng_seed: int = field(default=42, metadata=_spec())
    n_batches: int = field(default=8, metadata=_spec(provenance="model-default"))
    max_events: int = field(default=50_000_000, metadata=_spec(provenance="model-default"))

    def __post_init__(self):
        s = "run"
        if not self.duration > 0:
            _fail(s, "duration", "> 0", self.duration)
        for name in ("cosmic_rate", "environmental_k_rate", "flat_background_rate"):
            value = getattr(self, name)
            if not value >= 0:
                _fail(s, name, ">= 0", value)
        if not 0 <= self.cosmic_k_probability <= 1:
            _fail(s, "cosmic_k_probability", "0 <= p <= 1", self.cosmic_k_probability)
        if not 0 <= self.beta2_over_2 <= 1:
            _fail(s, "beta2_over_2", "0 <= p <= 1", self.beta2_over_2)
        if not 0 <= self.rng_seed < 2**64:
            _fail(s, "rng_seed", "0 <= seed < 2**64", self.rng_seed)
        if self.n_batches < 1:
            _fail(s, "n_batches", ">= 1", self.n_batches)
        if self.max_events < 1:
            _fail(s, "max_events", ">= 1", self.max_events)


@dataclass(frozen=True)
class AnalysisConfig:
    band_low: float = field(default=4000.0, metadata=_spec("eV"))
    band_high: float = field(default=12000.0, metadata=_spec("eV"))
    bin_width: float = field(default=50.0, metadata=_spec("eV"))
    roi_half_width_fwhm: float = field(default=1.5, metadata=_spec(provenance="model-default"))
    confidence_level: float = field(default=0.9, metadata=_spec(provenance="model-default"))
    tot_cut: bool = field(default=True, metadata=_spec())

    def __post_init__(self):
        s = "analysis"
        if not 0 < self.band_low < self.band_high:
            _fail(s, "band_low", f"0 < band_low < band_high={self.band_high}", self.band_low)
        if not 0 < self.bin_width <= self.band_high - self.band_low:
            _fail(s, "bin_width", "0 < w <= band width", self.bin_width)
        n = (self.band_high - self.band_low) / self.bin_width
        if abs(n - round(n)) > 1e-9:
            _fail(s, "bin_width", "an integer divisor of the band width", self.bin_width)
        if not self.roi_half_width_fwhm > 0:
            _fail(s, "roi_half_width_fwhm", "> 0", self.roi_half_width_fwhm)
        if not 0 < self.confidence_level < 1:
            _fail(s, "confidence_level", "0 < cl < 1", self.confidence_level)


SECTIONS = {
    "target": TargetConfig,
    "detector": DetectorConfig,
    "veto": VetoConfig,
    "run": RunPlan,
    "analysis": AnalysisConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetConfig = field(default_factory=TargetConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    veto: VetoConfig = field(default_factory=VetoConfig)
    run: RunPlan = field(default_factory=RunPlan)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    def replace(self, **dotted: Any) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``cfg.replace(**{"target.current": 40})``."""
        changes: dict[str, dict[str, Any]] = {}
        for key, value in dotted.items():
            section, name = _split_key(key)
            changes.setdefault(section, {})[name] = value
        parts = {
            section: dataclasses.replace(getattr(self, section), **kw)
            for section, kw in changes.items()
        }
        prov = dict(self.provenance)
        prov.update({k: "user" for k in dotted})
        return dataclasses.replace(self, provenance=prov, **parts)


def config_keys():
    """All settable dotted keys, in file order."""
    keys = []
    for section, cls in SECTIONS.items():
        for f in dataclasses.fields(cls):
            if not f.metadata.get("fixed"):
                keys.append(f"{section}.{f.name}")
    return keys


def _split_key(key):
    section, _, name = key.partition(".")
    cls = SECTIONS.get(section)
    if cls is None or name not in {f.name for f in dataclasses.fields(cls)}:
        raise ConfigError(f"unknown config key {key!r}")
    if _field(key).metadata.get("fixed"):
        raise ConfigError(f"config key {key!r} is a physical constant and cannot be set")
    return section, name


def _field(key):
    section, name = key.split(".", 1)
    return {f.name: f for f in dataclasses.fields(SECTIONS[section])}[name]


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(text) if text.strip().lstrip("+-").isdigit() else int(value)


def _parse_lines(text):
    lines = []
    for item in text.split(","):
        energy, _, weight = item.partition(":")
        lines.append((float(energy), float(weight)))
    return tuple(lines)


def _parse_dims(text):
    return tuple(float(x) for x in text.lower().replace("x", ",").split(","))


def _parse_value(key, text):
    default = _field(key).default
    if key == "target.normal_lines":
        return _parse_lines(text)
    if key == "veto.counter_dimensions":
        return _parse_dims(text)
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return _parse_int(text)
    if isinstance(default, float):
        return float(text)
    return text.strip()


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return ", ".join(f"{e!r}:{w!r}" for e, w in value)
    if isinstance(value, tuple):
        return "x".join(repr(v) for v in value)
    return str(value)


def parse_text(text: str, source: str = "<string>") -> dict[str, str]:
    """Split a config document into ``{dotted_key: raw_value}``."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key or not value.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    """Collect ``PEPSIM_SECTION_FIELD`` variables as dotted keys."""
    environ = os.environ if environ is None else environ
    lookup = {"PEPSIM_" + key.replace(".", "_").upper(): key for key in config_keys()}
    out = {}
    for name, value in environ.items():
        if not name.startswith("PEPSIM_"):
            continue
        if name.upper() not in lookup:
            raise ConfigError(f"unknown environment override {name}")
        out[lookup[name.upper()]] = value
    return out


def build_config(entries: Mapping[str, str], source: str = "<string>",
                 environ: Mapping[str, str] | None = None) -> ExperimentConfig:
    provenance = {}
    for section, cls in SECTIONS.items():
        for f in dataclasses.fields(cls):
            provenance[f"{section}.{f.name}"] = f.metadata.get("provenance", "default")
    merged = {k: (v, "user") for k, v in entries.items()}
    merged.update({k: (v, "env") for k, v in env_overrides(environ).items()})
    kwargs: dict[str, dict[str, Any]] = {s: {} for s in SECTIONS}
    for key, (text, origin) in merged.items():
        section, name = _split_key(key)
        try:
            kwargs[section][name] = _parse_value(key, text)
        except ValueError as exc:
            raise ConfigError(f"{source}: {key}: cannot parse {text!r} ({exc})") from None
        provenance[key] = origin
    parts = {section: cls(**kwargs[section]) for section, cls in SECTIONS.items()}
    return ExperimentConfig(**parts, provenance=provenance)


def load_config(path: str | os.PathLike | None = None,
                environ: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Load a config file, fill defaults, apply environment overrides, validate."""
    if path is None:
        return build_config({}, "<defaults>", environ)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_text(text, str(path)), str(path), environ)


def dump_config(config: ExperimentConfig, with_provenance: bool = True) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"# [{section}]")
        part = getattr(config, section)
        for f in dataclasses.fields(part):
            if f.metadata.get("fixed"):
                continue
            key = f"{section}.{f.name}"
            line = f"{key} = {format_value(getattr(part, f.name))}"
            if with_provenance:
                unit = f.metadata.get("unit")
                note = config.provenance.get(key, f.metadata.get("provenance", "default"))
                line += f"  # {note}" + (f", {unit}" if unit else "")
            lines.append(line)
    return "\n".join(lines) + "\n"


def n_new_electrons(target: TargetConfig, duration: float) -> float:
    """Number of electrons carried through the target, I T / e."""
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    return target.current * duration / target.electron_charge
