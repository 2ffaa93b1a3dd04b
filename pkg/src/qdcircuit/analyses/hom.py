"""Two-photon interference visibilities from unbalanced-MZI correlations."""
from __future__ import annotations

import numpy as np

from ..correlator import peak_areas
from ..errors import ValidationError
from ..fitcore import curve_model, nlls_fit
from ..types import CorrelationHistogram, Estimate, FitResult, SplitterParams
from . import models
from ._common import (best_linear_init, histogram_sigma, require_normalized,
                      require_same_binning, run_fit, select_range)


def postselected_visibility(g_perp0, g_par0):
    """``V = (g_perp(0) - g_par(0)) / g_perp(0)``."""
    if g_perp0 == 0:
        raise ValidationError("g_perp0", "must be nonzero")
    return (g_perp0 - g_par0) / g_perp0


def _block_result(names, parts, extras, flags=()):
    """Concatenate independent fits into one FitResult (block-diagonal
    covariance)."""
    values = np.concatenate([p.values for p in parts])
    stderr = np.concatenate([p.stderr for p in parts])
    n = values.size
    cov = np.zeros((n, n))
    i = 0
    for p in parts:
        k = p.values.size
        cov[i:i + k, i:i + k] = p.covariance
        i += k
    return FitResult(names=names, values=values, stderr=stderr, covariance=cov,
                     redchi2=float(np.mean([p.redchi2 for p in parts])),
                     converged=all(p.converged for p in parts),
                     iterations=sum(p.iterations for p in parts),
                     gradient_norm=max(p.gradient_norm for p in parts),
                     flags=tuple(flags) + tuple(f for p in parts for f in p.flags),
                     extras=extras)


# -- CW ------------------------------------------------------------------------

def _splitter_coefficients(splitters):
    if isinstance(splitters, SplitterParams):
        s = splitters
    elif isinstance(splitters, dict):
        s = SplitterParams(**splitters)
    else:
        r1, t1, r2, t2 = splitters
        s = SplitterParams(r1=r1, t1=t1, r2=r2, t2=t2)
    return models.hom_cw_coefficients(s.r1, s.t1, s.r2, s.t2)


def hom_cw_baseline(splitters):
    """Large-delay value of the orthogonal model (1 for ``T1 = R1 = 1/2``)."""
    return float(sum(_splitter_coefficients(splitters)))


def _zero_bin_value(hist, half_width_ps):
    sel = np.abs(hist.tau_ps) <= half_width_ps
    if not np.any(sel):
        sel = np.arange(hist.tau_ps.size) == hist.bin_index(0.0)
    return float(np.mean(hist.values[sel])), int(hist.counts[sel].sum())


def fit_hom_cw(hist_perp: CorrelationHistogram, hist_par: CorrelationHistogram, splitters,
               delay_ns, fit_range_ns=None, weighting=None, zero_half_width_ps=0.0) -> FitResult:
    """Two-step CW HOM fit.

    Step 1 fits ``(A, tau1)`` of the orthogonal model; step 2 fits
    ``(V, tauc)`` of the parallel model with ``A, tau1`` held.  Extras:

    * ``V_post_measured`` (+ ``_err``): from the data bins at zero delay
      (bins with ``|tau| <= zero_half_width_ps``, default the zero bin),
      Poisson errors.
    * ``V_fitted`` (+ ``_err``) and ``V_post_fitted``: from the models.
    """
    require_normalized(hist_perp, "cw-poisson")
    require_normalized(hist_par, "cw-poisson")
    require_same_binning(hist_perp, hist_par)
    coeffs = _splitter_coefficients(splitters)
    delay = float(delay_ns)
    if not delay > 0:
        raise ValidationError("delay_ns", "must be > 0", delay_ns)
    bw_ns = hist_perp.bin_width_ps * 1e-3

    t, y, sig = select_range(hist_perp.tau_ns, hist_perp.values, fit_range_ns,
                             histogram_sigma(hist_perp, weighting))
    w = None if sig is None else 1 / sig
    total = sum(coeffs)

    def perp_design(tau):
        e = (coeffs[0] * np.exp(-np.abs(t) / tau) + coeffs[1] * np.exp(-np.abs(t - delay) / tau)
             + coeffs[2] * np.exp(-np.abs(t + delay) / tau))
        return -e[:, None]

    tau0, coef = best_linear_init(np.geomspace(bw_ns, delay, 50), perp_design, y - total,
                                  weights=w)
    a0 = float(np.clip(1 - coef[0], 0, 1))
    perp_model = curve_model(lambda x, p: models.hom_cw_perp(x, p, coeffs, delay),
                             lambda x, p: models.hom_cw_perp_jac(x, p, coeffs, delay),
                             t, y, (a0, tau0), sigma=sig, lower=(0.0, 1e-6),
                             upper=(1.0, np.inf), names=("A", "tau1"))
    perp = run_fit(nlls_fit, perp_model)
    a, tau1 = perp.values

    t2, y2, sig2 = select_range(hist_par.tau_ns, hist_par.values, fit_range_ns,
                                histogram_sigma(hist_par, weighting))
    w2 = None if sig2 is None else 1 / sig2
    g1, g2 = models.hom_cw_parts(t2, a, tau1, coeffs, delay)
    tc_max = 2 * tau1
    tc0, coef2 = best_linear_init(
        np.geomspace(min(bw_ns / 2, tc_max / 2), tc_max, 50),
        lambda tc: (-g2 * np.exp(-2 * np.abs(t2) / tc))[:, None], y2 - g1 - g2, weights=w2)
    v0 = float(np.clip(coef2[0], 0, 1))
    par_model = curve_model(lambda x, p: models.hom_cw_par(x, p, a, tau1, coeffs, delay),
                            lambda x, p: models.hom_cw_par_jac(x, p, a, tau1, coeffs, delay),
                            t2, y2, (v0, tc0), sigma=sig2, lower=(0.0, 1e-6),
                            upper=(1.0, tc_max), names=("V", "tauc"))
    par = run_fit(nlls_fit, par_model)
    v, tau_c = par.values

    gp0, cp = _zero_bin_value(hist_perp, zero_half_width_ps)
    gq0, cq = _zero_bin_value(hist_par, zero_half_width_ps)
    v_meas = postselected_visibility(gp0, gq0)
    # Poisson error on the ratio of two independent counts
    ratio = gq0 / gp0
    v_meas_err = ratio * np.sqrt(1 / max(cq, 1) + 1 / max(cp, 1))
    f_perp0 = float(models.hom_cw_perp(np.array([0.0]), (a, tau1), coeffs, delay)[0])
    f_par0 = float(models.hom_cw_par(np.array([0.0]), (v, tau_c), a, tau1, coeffs, delay)[0])
    extras = {
        "V_post_measured": float(v_meas), "V_post_measured_err": float(v_meas_err),
        "V_fitted": float(v), "V_fitted_err": float(par.stderr[0]),
        "V_post_fitted": float(postselected_visibility(f_perp0, f_par0)),
        "g2_perp_0_measured": float(gp0), "g2_par_0_measured": float(gq0),
        "perp_redchi2": perp.redchi2, "par_redchi2": par.redchi2,
        "baseline": float(total),
    }
    return _block_result(("A", "tau1", "V", "tauc"), [perp, par], extras)


# -- pulsed --------------------------------------------------------------------

def default_hom_positions(delay_ns, period_ns):
    """Three nearest positive side-peak positions of the double-pulse
    cluster pattern ``k T + m dt`` (``m = -2..2``), mirrored for the
    negative side, plus the next positive position (used to bound the
    default fit range)."""
    cand = sorted({round(k * period_ns + m * delay_ns, 9)
                   for k in range(0, 3) for m in range(-2, 3)
                   if k * period_ns + m * delay_ns > 1e-9})
    pos = tuple(cand[:3])
    return pos + tuple(-p for p in pos), cand[3]


def fit_hom_pulsed(hist_par: CorrelationHistogram, hist_orth: CorrelationHistogram,
                   delay_ns, period_ns, positions_ns=None, fit_halfrange_ns=None,
                   area_half_window_ns=None, weighting=None) -> FitResult:
    """Fit the Lorentzian peak models to pulsed HOM histograms.

    The orthogonal histogram fixes ``A0`` and ``tau1`` (``A00 = 0``); the
    parallel fit then floats the dip ``A00 <= A0`` and ``tauc``, plus the
    side amplitudes.  Extras hold ``V_post`` (from the two fitted curves at
    zero delay) and ``V_raw = 1 - 2 A_0 / (A_{+dt} + A_{-dt})`` from raw
    peak areas of the parallel histogram, both with errors.
    """
    require_normalized(hist_par, "pulsed-sidepeak")
    require_normalized(hist_orth, "pulsed-sidepeak")
    require_same_binning(hist_par, hist_orth)
    delay, period = float(delay_ns), float(period_ns)
    if not 0 < delay < period / 2:
        raise ValidationError("delay_ns", "must satisfy 0 < delay < period/2", delay_ns)
    if positions_ns is None:
        positions, nxt = default_hom_positions(delay, period)
    else:
        positions = tuple(float(x) for x in positions_ns)
        if len(positions) == 3:
            positions = positions + tuple(-x for x in positions)
        if len(positions) != 6:
            raise ValidationError("positions_ns", "need 3 (mirrored) or 6 positions")
        nxt = max(positions) + delay
    if fit_halfrange_ns is None:
        fit_halfrange_ns = 0.5 * (max(positions) + nxt)
    rng = (-fit_halfrange_ns, fit_halfrange_ns)
    bw_ns = hist_par.bin_width_ps * 1e-3

    t, y, sig = select_range(hist_orth.tau_ns, hist_orth.values, rng,
                             histogram_sigma(hist_orth, weighting), min_points=12)
    w = None if sig is None else 1 / sig

    def perp_design(tau):
        cols = [models.lorentz(t, tau)] + [models.lorentz(t - q, tau) for q in positions]
        return (2 / np.pi) * np.column_stack(cols)

    tau1_0, amps = best_linear_init(np.geomspace(max(bw_ns, 1e-3), delay, 40), perp_design, y,
                                    nonneg=True, weights=w)
    p0 = np.r_[amps, tau1_0]
    perp_model = curve_model(
        lambda x, p: models.hom_pulsed(x, models.perp_full(p), positions),
        lambda x, p: models.hom_pulsed_jac(x, models.perp_full(p), positions)[:, models.PERP_COLUMNS],
        t, y, p0, sigma=sig, lower=np.r_[np.zeros(7), 1e-6], upper=np.full(8, np.inf),
        names=("A0", "A1", "A2", "A3", "A1p", "A2p", "A3p", "tau1"))
    perp = run_fit(nlls_fit, perp_model)
    a0, tau1 = perp.values[0], perp.values[7]

    t2, y2, sig2 = select_range(hist_par.tau_ns, hist_par.values, rng,
                                histogram_sigma(hist_par, weighting), min_points=12)
    w2 = None if sig2 is None else 1 / sig2
    base = (2 / np.pi) * a0 * models.lorentz(t2, tau1)

    def par_design(tc):
        cols = [-models.lorentz(t2, tc)] + [models.lorentz(t2 - q, tau1) for q in positions]
        return (2 / np.pi) * np.column_stack(cols)

    tc_max = 2 * tau1

    def par_full(p):
        return np.r_[a0, p[0], p[1:7], tau1, p[7]]

    tc0, amps2 = best_linear_init(np.geomspace(min(bw_ns / 2, tc_max / 2), tc_max, 40),
                                  par_design, y2 - base, nonneg=True, weights=w2)
    amps2[0] = min(amps2[0], a0)
    par_model = curve_model(
        lambda x, p: models.hom_pulsed(x, par_full(p), positions),
        lambda x, p: models.hom_pulsed_jac(x, par_full(p), positions)[:, [1, 2, 3, 4, 5, 6, 7, 9]],
        t2, y2, np.r_[amps2, tc0], sigma=sig2, lower=np.r_[np.zeros(7), 1e-6],
        upper=np.r_[a0, np.full(6, np.inf), tc_max],
        names=("A00", "A1", "A2", "A3", "A1p", "A2p", "A3p", "tauc"))
    par = run_fit(nlls_fit, par_model)

    full_perp = models.perp_full(perp.values)
    full_par = par_full(par.values)
    zero = np.array([0.0])
    f_perp0 = float(models.hom_pulsed(zero, full_perp, positions)[0])
    f_par0 = float(models.hom_pulsed(zero, full_par, positions)[0])
    v_post = postselected_visibility(f_perp0, f_par0)
    # first-order propagation through the two independent fits
    jp = models.hom_pulsed_jac(zero, full_perp, positions)[0]
    jq = models.hom_pulsed_jac(zero, full_par, positions)[0]
    # V = 1 - f_par/f_perp; f_par depends on A0, tau1 via the held values
    dv_dperp = f_par0 / f_perp0 ** 2 * jp[models.PERP_COLUMNS]
    dv_dperp[0] -= jq[0] / f_perp0
    dv_dperp[7] -= jq[8] / f_perp0
    dv_dpar = -jq[[1, 2, 3, 4, 5, 6, 7, 9]] / f_perp0
    with np.errstate(invalid="ignore"):
        v_post_err = float(np.sqrt(dv_dperp @ perp.covariance @ dv_dperp
                                   + dv_dpar @ par.covariance @ dv_dpar))

    hw = area_half_window_ns
    if hw is None:
        marks = np.sort(np.r_[0.0, positions])
        hw = 0.5 * float(np.min(np.diff(marks)))
    table = peak_areas(hist_par, [0.0, delay * 1e3, -delay * 1e3], hw * 1e3)
    c, sp, sm = (a for _, a in table)
    v_raw, v_raw_err = (raw_visibility(c, sp, sm) if sp + sm > 0
                        else (float("nan"), float("nan")))

    # A0 and tau1 come from the orthogonal fit, everything else from the parallel one
    values = np.r_[perp.values[0], par.values[0], par.values[1:7], perp.values[7], par.values[7]]
    stderr = np.r_[perp.stderr[0], par.stderr[0], par.stderr[1:7], perp.stderr[7], par.stderr[7]]
    cov = np.zeros((10, 10))
    ip = [0, 8]
    cov[np.ix_(ip, ip)] = perp.covariance[np.ix_([0, 7], [0, 7])]
    iq = [1, 2, 3, 4, 5, 6, 7, 9]
    cov[np.ix_(iq, iq)] = par.covariance
    extras = {
        "V_post": float(v_post), "V_post_err": v_post_err,
        "V_raw": float(v_raw), "V_raw_err": v_raw_err,
        "positions_ns": list(positions),
        "perp_values": perp.params, "perp_stderr": dict(zip(perp.names, perp.stderr.tolist())),
        "perp_redchi2": perp.redchi2, "par_redchi2": par.redchi2,
        "peak_areas_par": [list(x) for x in table],
    }
    return FitResult(names=models.HOM_PULSED_NAMES, values=values, stderr=stderr, covariance=cov,
                     redchi2=float(np.mean([perp.redchi2, par.redchi2])),
                     converged=perp.converged and par.converged,
                     iterations=perp.iterations + par.iterations,
                     gradient_norm=max(perp.gradient_norm, par.gradient_norm),
                     flags=perp.flags + par.flags, extras=extras)


def raw_visibility(center_area, side_plus, side_minus) -> Estimate:
    """``1 - 2 C / (S+ + S-)`` with Poisson errors on raw counts."""
    s = side_plus + side_minus
    if s <= 0:
        raise ValidationError("side areas", "must sum to > 0")
    v = 1 - 2 * center_area / s
    err = np.sqrt((2 / s) ** 2 * center_area + (2 * center_area / s ** 2) ** 2 * s)
    return Estimate(float(v), float(err))
