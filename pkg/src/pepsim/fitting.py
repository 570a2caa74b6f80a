"""Gaussian-plus-constant line fit to a binned spectrum by damped Gauss-Newton.

The model integrates the Gaussian over each bin, so coarse binning does not
bias the width:

    m_i = A [Phi((hi_i - c) / s) - Phi((lo_i - c) / s)] + B,   s = fwhm / 2.3548

with A the line area in counts and B the background per bin. Residuals are
weighted by 1 / max(y_i, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from pepsim.errors import ContractError, NumericalError
from pepsim.response import FWHM_PER_SIGMA
from pepsim.spectrum import EnergySpectrum

PARAMS = ("amplitude", "center", "fwhm", "background_level")
_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class FitError(NumericalError):
    pass


@dataclass(frozen=True)
class LineFit:
    amplitude: float
    center: float
    fwhm: float
    background_level: float
    errors: dict
    covariance: np.ndarray
    chi2: float
    ndof: int
    iterations: int

    @property
    def values(self):
        return np.array([self.amplitude, self.center, self.fwhm, self.background_level])


def model(params, lo, hi):
    a, c, fwhm, b = params
    s = fwhm / FWHM_PER_SIGMA
    return a * (special.ndtr((hi - c) / s) - special.ndtr((lo - c) / s)) + b


def jacobian(params, lo, hi):
    a, c, fwhm, b = params
    s = fwhm / FWHM_PER_SIGMA
    zl = (lo - c) / s
    zh = (hi - c) / s
    pl = np.exp(-0.5 * zl**2) * _INV_SQRT2PI
    ph = np.exp(-0.5 * zh**2) * _INV_SQRT2PI
    j = np.empty((len(lo), 4))
    j[:, 0] = special.ndtr(zh) - special.ndtr(zl)
    j[:, 1] = a * (pl - ph) / s
    j[:, 2] = a * (pl * zl - ph * zh) / s / FWHM_PER_SIGMA
    j[:, 3] = 1.0
    return j


def objective(params, lo, hi, y, w):
    r = y - model(params, lo, hi)
    return float(np.sum(w * r * r))


def gradient(params, lo, hi, y, w):
    r = y - model(params, lo, hi)
    return -2.0 * jacobian(params, lo, hi).T @ (w * r)


def _window(spec: EnergySpectrum, center_guess, half_window):
    lo = spec.bin_edges[:-1]
    hi = spec.bin_edges[1:]
    sel = (hi > center_guess - half_window) & (lo < center_guess + half_window)
    return lo[sel], hi[sel], spec.counts[sel].astype(float)


def fit_line(spec: EnergySpectrum, center_guess: float, fwhm_guess: float = 150.0,
             half_window: float | None = None, max_iter: int = 200,
             rtol: float = 1e-8) -> LineFit:
    """Fit one Gaussian line plus flat background around ``center_guess``.

    Levenberg-Marquardt damping on the Gauss-Newton normal equations; stops
    when every parameter step is below ``rtol`` relative to the parameter.
    Uncertainties are the square roots of diag((J^T W J)^-1).
    """
    width = np.diff(spec.bin_edges)
    if half_window is None:
        half_window = max(4.0 * fwhm_guess, 10.0 * float(np.median(width)))
    lo, hi, y = _window(spec, center_guess, half_window)
    if len(y) < 20:
        raise ContractError(f"need >= 20 bins around {center_guess} eV, have {len(y)}")
    w = 1.0 / np.maximum(y, 1.0)

    edge = np.concatenate([y[:3], y[-3:]])
    b0 = float(np.median(edge))
    p = np.array([max(float(np.sum(y - b0)), 1.0), float(center_guess), float(fwhm_guess), b0])
    # scale floors keep the relative-step test meaningful for parameters near zero
    floor = np.array([1.0, 1.0, 1.0, max(1.0, float(np.max(y)) * 1e-6)])
    chi2 = objective(p, lo, hi, y, w)
    lam = 1e-3
    for iteration in range(1, max_iter + 1):
        j = jacobian(p, lo, hi)
        r = y - model(p, lo, hi)
        jtw = j.T * w
        h = jtw @ j
        g = jtw @ r
        accepted = False
        while lam < 1e16:
            damped = h + lam * np.diag(np.diag(h))
            try:
                step = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            if trial[2] <= 0:
                lam *= 10.0
                continue
            trial_chi2 = objective(trial, lo, hi, y, w)
            if trial_chi2 <= chi2:
                accepted = True
                break
            lam *= 10.0
        small = np.all(np.abs(step) <= rtol * np.maximum(np.abs(p), floor))
        if accepted:
            p, chi2 = trial, trial_chi2
            lam = max(lam / 10.0, 1e-12)
        if small or not accepted:
            # a rejected step at maximal damping means no descent direction is left
            break
    else:
        raise FitError(f"line fit did not converge in {max_iter} iterations",
                       last_iterate=dict(zip(PARAMS, p)), chi2=chi2)

    h = (jacobian(p, lo, hi).T * w) @ jacobian(p, lo, hi)
    cov = np.linalg.pinv(h)
    errs = dict(zip(PARAMS, np.sqrt(np.clip(np.diag(cov), 0, None))))
    return LineFit(*map(float, p), errs, cov, chi2, len(y) - 4, iteration)
