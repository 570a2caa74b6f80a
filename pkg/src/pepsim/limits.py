"""Poisson upper limits and their conversion to a bound on beta^2/2.

Two frequentist counting recipes are available in :func:`poisson_upper_limit`:

``conditional`` (default)
    smallest s with P(N <= n | s + b) / P(N <= n | b) <= 1 - cl. The
    background-only probability is conditioned on the observation, so the
    limit stays positive when n falls below b, and for n = 0 it does not
    depend on b at all.
``classical``
    smallest s >= 0 with P(N <= n | s + b) <= 1 - cl; clipped at zero.

:func:`gaussian_upper_limit` is the "excess + k sqrt(counts)" estimator used
in the early current-on/off experiments, kept for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import optimize, special, stats

from pepsim.config import ExperimentConfig, n_new_electrons
from pepsim.errors import ConfigError, ContractError, NumericalError
from pepsim.spectrum import RegionOfInterest, default_roi, roi_containment

XTOL = 1e-12
MAX_BRACKET_DOUBLINGS = 200


def _logcdf(n, mu):
    return stats.poisson.logcdf(n, mu)


def poisson_upper_limit(n_obs: int, b_expected: float, cl: float,
                        method: str = "conditional") -> float:
    """Upper limit on the signal mean for ``n_obs`` counts over known background."""
    if not 0 < cl < 1:
        raise ContractError(f"confidence level must lie in (0, 1), got {cl!r}")
    if n_obs < 0 or int(n_obs) != n_obs:
        raise ContractError(f"n_obs must be a non-negative integer, got {n_obs!r}")
    if not b_expected >= 0:
        raise ContractError(f"background must be non-negative, got {b_expected!r}")
    n_obs = int(n_obs)
    target = math.log1p(-cl)

    if method == "conditional":
        base = _logcdf(n_obs, b_expected)

        def f(s):
            return _logcdf(n_obs, s + b_expected) - base - target
    elif method == "classical":
        def f(s):
            return _logcdf(n_obs, s + b_expected) - target

        if f(0.0) <= 0:
            return 0.0
    else:
        raise ValueError(f"unknown method {method!r}")

    hi = max(1.0, float(n_obs) + 1.0)
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if f(hi) < 0:
            break
        hi *= 2.0
    else:
        raise NumericalError("could not bracket the upper limit", n_obs=n_obs,
                             b_expected=b_expected, cl=cl, last_upper=hi)
    try:
        root, info = optimize.brentq(f, 0.0, hi, xtol=XTOL, maxiter=500, full_output=True)
    except (RuntimeError, ValueError) as exc:
        raise NumericalError(f"root finding failed: {exc}", n_obs=n_obs,
                             b_expected=b_expected, cl=cl) from None
    if not info.converged:
        raise NumericalError("root finding did not converge", n_obs=n_obs,
                             b_expected=b_expected, cl=cl, iterations=info.iterations)
    return max(0.0, float(root))


def gaussian_upper_limit(n_on: int, b_expected: float, cl: float,
                         b_variance: float | None = None) -> float:
    """max(0, n - b) + z_cl * sqrt(n + var(b))."""
    if not 0 < cl < 1:
        raise ContractError(f"confidence level must lie in (0, 1), got {cl!r}")
    var_b = b_expected if b_variance is None else b_variance
    z = special.ndtri(cl)
    return max(0.0, n_on - b_expected) + z * math.sqrt(max(n_on + var_b, 0.0))


@dataclass(frozen=True)
class FactorBreakdown:
    n_new: float
    capture_probability: float
    acceptance: float
    efficiency: float
    containment: float

    @property
    def denominator(self) -> float:
        return (self.n_new * self.capture_probability * self.acceptance
                * self.efficiency * self.containment)

    def items(self):
        return [
            ("n_new_electrons", self.n_new, "target.current x duration / e"),
            ("capture_probability", self.capture_probability,
             "target.capture_probability_per_electron"),
            ("acceptance", self.acceptance, "detector.geometric_acceptance"),
            ("efficiency", self.efficiency, "detector.detection_efficiency_at_8keV"),
            ("roi_containment", self.containment, "Gaussian line fraction inside the ROI"),
        ]


def factor_breakdown(config: ExperimentConfig, duration: float,
                     containment: float | None = None,
                     roi: RegionOfInterest | None = None) -> FactorBreakdown:
    if containment is None:
        containment = roi_containment(roi or default_roi(config), config)
    fb = FactorBreakdown(
        n_new=n_new_electrons(config.target, duration),
        capture_probability=config.target.capture_probability_per_electron,
        acceptance=config.detector.geometric_acceptance,
        efficiency=config.detector.detection_efficiency_at_8keV,
        containment=containment,
    )
    for name, value, source in fb.items():
        if not value > 0:
            raise ConfigError(f"limit denominator factor {name} is {value!r} ({source})")
    return fb


@dataclass(frozen=True)
class LimitResult:
    n_on: int
    n_off: int
    exposure_ratio: float
    b_expected: float
    s_up: float
    confidence_level: float
    beta2_over_2_limit: float
    factor_breakdown: FactorBreakdown
    method: str = "conditional"
    provenance: tuple = ()

    def as_text(self) -> str:
        lines = [
            "PEP violation limit",
            f"  n_on (ROI, current on)     = {self.n_on}",
            f"  n_off (ROI, current off)   = {self.n_off}",
            f"  exposure_ratio (on/off)    = {self.exposure_ratio:.6g}",
            f"  expected background        = {self.b_expected:.6g}",
            f"  confidence level           = {self.confidence_level:.6g}",
            f"  method                     = {self.method}",
            f"  s_up (signal counts)       = {self.s_up!r}",
            "  factors:",
        ]
        prov = dict(self.provenance)
        for name, value, source in self.factor_breakdown.items():
            tag = prov.get(name, "")
            lines.append(f"    {name:<22} = {value:<14.6g} {source}"
                         + (f" [{tag}]" if tag else ""))
        # full precision so the report can be re-read without loss
        lines.append(f"  denominator                = {self.factor_breakdown.denominator!r}")
        lines.append(f"  beta^2/2 upper limit       = {self.beta2_over_2_limit!r}")
        return "\n".join(lines) + "\n"


_FACTOR_KEYS = {
    "n_new_electrons": "target.current",
    "capture_probability": "target.capture_probability_per_electron",
    "acceptance": "detector.geometric_acceptance",
    "efficiency": "detector.detection_efficiency_at_8keV",
    "roi_containment": "analysis.roi_half_width_fwhm",
}


def beta2_limit(n_on: int, n_off: int, exposure_ratio: float, config: ExperimentConfig,
                duration: float, cl: float, containment: float | None = None,
                method: str = "conditional") -> LimitResult:
    """Upper limit on beta^2/2 from ROI counts with current on and off.

    ``duration`` is the current-on exposure in seconds; the off-run background
    is scaled by ``exposure_ratio`` = on/off.
    """
    if not exposure_ratio > 0 or math.isinf(exposure_ratio):
        raise ContractError(f"exposure ratio must be positive and finite, got {exposure_ratio!r}")
    fb = factor_breakdown(config, duration, containment)
    b = n_off * exposure_ratio
    s_up = poisson_upper_limit(n_on, b, cl, method)
    prov = tuple((name, config.provenance.get(key, "")) for name, key in _FACTOR_KEYS.items())
    return LimitResult(int(n_on), int(n_off), float(exposure_ratio), b, s_up, cl,
                       s_up / fb.denominator, fb, method, prov)
