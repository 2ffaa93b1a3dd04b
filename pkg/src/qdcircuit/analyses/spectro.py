"""Lifetime, polarization, power-dependence and splitter-ratio extractors."""
from __future__ import annotations

import numpy as np

from ..errors import (DisjointAxesError, FitFailedError, InsufficientAnglesError,
                      NonPositiveInputError, SingularNormalMatrixError, ValidationError,
                      WindowOutOfRangeError, ZeroTotalError)
from ..fitcore import curve_model, nlls_fit
from ..types import CorrelationHistogram, Estimate, FitResult, Spectrum
from . import models
from ._common import best_linear_init, histogram_sigma, run_fit, select_range


def _with_extras(result: FitResult, **extras) -> FitResult:
    merged = dict(result.extras)
    merged.update(extras)
    return FitResult(names=result.names, values=result.values, stderr=result.stderr,
                     covariance=result.covariance, redchi2=result.redchi2,
                     converged=result.converged, iterations=result.iterations,
                     gradient_norm=result.gradient_norm, flags=result.flags, extras=merged)


def purcell_ratio(tau_planar_ns, tau_ns, tau_planar_err=0.0, tau_err=0.0) -> Estimate:
    """Lifetime ratio ``tau_planar / tau`` with first-order error propagation."""
    if not (tau_planar_ns > 0 and tau_ns > 0):
        raise NonPositiveInputError("lifetimes must be > 0")
    r = tau_planar_ns / tau_ns
    return Estimate(r, r * float(np.hypot(tau_planar_err / tau_planar_ns, tau_err / tau_ns)))


def fit_lifetime(decay: CorrelationHistogram, fit_range_ns=None, tau_planar_ns=None,
                 tau_planar_err=0.0, weighting=None) -> FitResult:
    """Tail fit of ``B + C exp(-(t - t_start) / tau)`` to a decay trace.

    The default range starts five bins (at least 0.2 ns) after the maximum
    and runs to the end of the trace.  With ``tau_planar_ns`` the extras
    carry ``purcell_ratio`` and its error.

    Raises
    ------
    EmptyRangeError
        Fewer than four bins in range.
    FitFailedError
        No decaying component is resolved (e.g. a flat trace).
    """
    t_all = decay.tau_ns
    y_all = decay.values
    if fit_range_ns is None:
        t_peak = t_all[int(np.argmax(y_all))]
        start = t_peak + max(5 * decay.bin_width_ps * 1e-3, 0.2)
        fit_range_ns = (start, t_all[-1])
    t, y, sig = select_range(t_all, y_all, fit_range_ns, histogram_sigma(decay, weighting))
    t_start = float(t[0])
    span = float(t[-1] - t[0])
    w = None if sig is None else 1 / sig
    tau0, (b0, c0) = best_linear_init(
        np.geomspace(max(decay.bin_width_ps * 1e-3, span * 1e-3), 2 * span, 60),
        lambda tau: np.column_stack([np.ones_like(t), np.exp(-(t - t_start) / tau)]), y,
        weights=w)
    if not c0 > 0:
        raise FitFailedError("no decaying component in the fit range")
    model = curve_model(lambda x, p: models.decay(x, p, t_start),
                        lambda x, p: models.decay_jac(x, p, t_start), t, y, (b0, c0, tau0),
                        sigma=sig, lower=(-np.inf, 0.0, 1e-6), upper=(np.inf, np.inf, np.inf),
                        names=("B", "C", "tau"))
    try:
        result = nlls_fit(model)
    except SingularNormalMatrixError as exc:
        raise FitFailedError("decay not resolved: " + str(exc)) from exc
    if not result["C"] > 0 or not np.isfinite(result.error("tau")):
        raise FitFailedError("no decaying component in the fit range")
    extras = {"t_start_ns": t_start, "fit_range_ns": [float(t[0]), float(t[-1])]}
    if tau_planar_ns is not None:
        pr = purcell_ratio(tau_planar_ns, result["tau"], tau_planar_err, result.error("tau"))
        extras.update(purcell_ratio=pr.value, purcell_ratio_err=pr.error)
    return _with_extras(result, **extras)


def degree_of_polarization(amplitude, offset):
    """``amplitude / (amplitude + 2 offset)``."""
    denom = amplitude + 2 * offset
    if denom <= 0:
        raise ZeroTotalError("amplitude + 2*offset must be > 0")
    return amplitude / denom


def fit_dop(angles_deg, intensities) -> FitResult:
    """Fit ``offset + amplitude cos^2(theta - theta0)``; extras hold ``DOP``.

    The amplitude is kept nonnegative and ``theta0`` is reported in
    ``[0, 180)``.  Zero amplitude leaves ``theta0`` unidentified (flagged).

    Raises
    ------
    InsufficientAnglesError
        Fewer than 4 distinct angles (mod 180) or a span below 90 degrees.
    """
    th = np.asarray(angles_deg, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if th.shape != y.shape or th.ndim != 1:
        raise ValidationError("intensities", "must match angles_deg")
    distinct = np.unique(np.round(np.mod(th, 180.0), 9))
    if distinct.size < 4 or np.ptp(th) < 90.0:
        raise InsufficientAnglesError("need >= 4 distinct angles spanning >= 90 degrees")
    phi = np.deg2rad(2 * th)
    X = np.column_stack([np.ones_like(th), np.cos(phi), np.sin(phi)])
    a, b, c = np.linalg.lstsq(X, y, rcond=None)[0]
    amp0 = 2 * float(np.hypot(b, c))
    th0 = float(np.rad2deg(np.arctan2(c, b)) / 2) % 180.0
    off0 = float(a - amp0 / 2)
    model = curve_model(models.malus, models.malus_jac, th, y, (amp0, off0, th0),
                        lower=(0.0, -np.inf, -np.inf), names=("amplitude", "offset", "theta0"))
    result = run_fit(nlls_fit, model)
    amp, off = result["amplitude"], result["offset"]
    values = result.values.copy()
    values[2] = values[2] % 180.0
    flags = tuple(result.flags)
    if amp == 0 and "theta0" not in flags:
        flags += ("theta0",)
    dop = degree_of_polarization(amp, off)
    # d DOP / d amp = 2 off / D^2, d DOP / d off = -2 amp / D^2
    d2 = (amp + 2 * off) ** 2
    grad = np.array([2 * off / d2, -2 * amp / d2])
    cov = result.covariance[:2, :2]
    dop_err = float(np.sqrt(grad @ cov @ grad)) if np.all(np.isfinite(cov)) else float("nan")
    out = FitResult(names=result.names, values=values, stderr=result.stderr,
                    covariance=result.covariance, redchi2=result.redchi2,
                    converged=result.converged, iterations=result.iterations,
                    gradient_norm=result.gradient_norm, flags=flags, extras=result.extras)
    return _with_extras(out, DOP=float(dop), DOP_err=dop_err)


def fit_powerlaw(powers, intensities) -> FitResult:
    """Least-squares line through ``(log P, log I)``; ``result["slope"]``."""
    p = np.asarray(powers, dtype=float)
    i = np.asarray(intensities, dtype=float)
    if p.shape != i.shape or p.size < 2:
        raise ValidationError("intensities", "need >= 2 points matching powers")
    if np.any(p <= 0) or np.any(i <= 0):
        raise NonPositiveInputError("powers and intensities must be > 0")
    lx, ly = np.log(p), np.log(i)
    X = np.column_stack([np.ones_like(lx), lx])
    b0 = np.linalg.lstsq(X, ly, rcond=None)[0]
    model = curve_model(models.loglinear, models.loglinear_jac, lx, ly, tuple(b0),
                        names=("intercept", "slope"))
    return nlls_fit(model)


def slope_ratio(s_xx, s_x, err_xx=0.0, err_x=0.0) -> Estimate:
    """``s_xx / s_x`` with first-order error propagation."""
    if s_x == 0:
        raise ZeroTotalError("denominator slope is zero")
    r = s_xx / s_x
    rel = np.hypot(err_xx / s_xx if s_xx else 0.0, err_x / s_x)
    return Estimate(float(r), float(abs(r) * rel))


def splitting_ratio(spec1: Spectrum, spec2: Spectrum, window_nm=None) -> Estimate:
    """Port-1 fraction ``sum I1 / (sum I1 + sum I2)`` over a wavelength window.

    ``spec2`` is linearly resampled onto ``spec1``'s axis.  The error is the
    sample standard deviation of the per-wavelength ratio across the window.
    """
    lo = max(spec1.wavelength_nm[0], spec2.wavelength_nm[0])
    hi = min(spec1.wavelength_nm[-1], spec2.wavelength_nm[-1])
    if lo > hi:
        raise DisjointAxesError("spectra share no wavelength range")
    if window_nm is not None:
        w_lo, w_hi = sorted(window_nm)
        if w_lo < lo or w_hi > hi:
            raise WindowOutOfRangeError(f"window {window_nm} outside shared range [{lo}, {hi}]")
        lo, hi = w_lo, w_hi
    wl = spec1.wavelength_nm
    sel = (wl >= lo) & (wl <= hi)
    if not np.any(sel):
        raise DisjointAxesError("no samples of the first spectrum in the window")
    i1 = spec1.intensity[sel]
    i2 = np.interp(wl[sel], spec2.wavelength_nm, spec2.intensity)
    total = i1.sum() + i2.sum()
    if total <= 0:
        raise ZeroTotalError("no intensity in the window")
    ratio = i1.sum() / total
    per = i1 + i2
    local = i1[per > 0] / per[per > 0]
    std = float(np.std(local, ddof=1)) if local.size > 1 else 0.0
    return Estimate(float(ratio), std)
