"""Source purity: CW antibunching fits and pulsed peak-area ratios."""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError, ZeroSideAreaError
from ..fitcore import curve_model, nlls_fit
from ..types import CorrelationHistogram, Estimate, FitResult
from . import models
from ._common import best_linear_init, histogram_sigma, require_normalized, run_fit, select_range


def fit_antibunching_cw(hist: CorrelationHistogram, fit_range_ns=None,
                        weighting=None) -> FitResult:
    """Fit ``g2(t) = 1 - (1 - A) exp(-|t| / tau1)`` to a CW-normalized histogram.

    ``A`` is the reported ``g2(0)``.  When the data show no antibunching
    (``A -> 1``) the lifetime is unconstrained and ``"tau1"`` appears in
    ``result.flags``.

    Parameters
    ----------
    hist : CorrelationHistogram
        ``cw-poisson`` normalized.
    fit_range_ns : (lo, hi), optional
        Delay window in ns.
    weighting : {None, "poisson"}
    """
    require_normalized(hist, "cw-poisson")
    sigma = histogram_sigma(hist, weighting)
    t, y, sigma = select_range(hist.tau_ns, hist.values, fit_range_ns, sigma)
    span = max(np.max(np.abs(t)), hist.bin_width_ps * 1e-3)
    widths = np.geomspace(max(hist.bin_width_ps * 1e-3, span * 1e-4), span / 2, 60)
    w = None if sigma is None else 1 / sigma
    tau0, coef = best_linear_init(widths, lambda tau: -np.exp(-np.abs(t) / tau)[:, None],
                                  y - 1.0, weights=w)
    a0 = float(np.clip(1.0 - coef[0], 0.0, 1.0))
    model = curve_model(models.antibunching, models.antibunching_jac, t, y, (a0, tau0),
                        sigma=sigma, lower=(0.0, 1e-6), upper=(1.0, np.inf),
                        names=("A", "tau1"))
    return run_fit(nlls_fit, model)


def _area_items(areas):
    if isinstance(areas, dict):
        return [(float(k), float(v)) for k, v in areas.items()]
    return [(float(p), float(a)) for p, a in areas]


def hbt_pulsed_g2(areas, center_position=0.0) -> Estimate:
    """``g2(0)`` as center area over mean side area with Poisson errors.

    ``areas`` is a ``[(position, area), ...]`` table (or mapping) of raw
    counts, e.g. from :func:`qdcircuit.correlator.pulsed_peak_table`;
    the entry at ``center_position`` is the center peak.
    """
    items = _area_items(areas)
    center = [a for p, a in items if p == center_position]
    sides = np.array([a for p, a in items if p != center_position])
    if len(center) != 1:
        raise ValidationError("areas", "must contain exactly one center peak", center_position)
    if sides.size < 2:
        raise ValidationError("areas", "need at least 2 side peaks", sides.size)
    c = center[0]
    s_mean = sides.mean()
    if s_mean <= 0:
        raise ZeroSideAreaError("mean side-peak area is zero")
    g2 = c / s_mean
    var = c / s_mean ** 2 + c ** 2 * sides.sum() / (sides.size ** 2 * s_mean ** 4)
    return Estimate(float(g2), float(np.sqrt(var)))
