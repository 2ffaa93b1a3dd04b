"""Helpers shared by the analysis fits."""
from __future__ import annotations

import numpy as np
from scipy.optimize import nnls

from ..errors import (EmptyRangeError, InconsistentBinningError, NonNormalizedInputError,
                      SingularNormalMatrixError)
from ..types import CorrelationHistogram


def require_normalized(hist: CorrelationHistogram, tag):
    if hist.normalization != tag:
        raise NonNormalizedInputError(f"expected a {tag!r} histogram, got {hist.normalization!r}")


def require_same_binning(h1: CorrelationHistogram, h2: CorrelationHistogram):
    if h1.bin_width_ps != h2.bin_width_ps or not np.array_equal(h1.tau_ps, h2.tau_ps):
        raise InconsistentBinningError("histograms must share bin width and bin centers")


def select_range(x, y, fit_range, sigma=None, min_points=4):
    """Restrict ``x, y`` to ``fit_range = (lo, hi)`` (inclusive)."""
    mask = np.ones(x.size, dtype=bool)
    if fit_range is not None:
        lo, hi = fit_range
        mask = (x >= lo) & (x <= hi)
    if np.count_nonzero(mask) < min_points:
        raise EmptyRangeError(f"fit range {fit_range} holds fewer than {min_points} points")
    return x[mask], y[mask], None if sigma is None else sigma[mask]


def best_linear_init(widths, design, y, nonneg=False, weights=None):
    """Grid search over a width parameter with linear coefficients solved
    exactly: returns ``(width, coefficients)`` minimizing the residual.

    ``design(width)`` returns the ``(n, k)`` matrix of linear basis columns.
    """
    best = None
    w = np.ones_like(y) if weights is None else weights
    for width in widths:
        X = design(width) * w[:, None]
        yw = y * w
        if nonneg:
            coef, _ = nnls(X, yw)
        else:
            coef = np.linalg.lstsq(X, yw, rcond=None)[0]
        ssr = float(np.sum((X @ coef - yw) ** 2))
        if best is None or ssr < best[0]:
            best = (ssr, width, coef)
    return best[1], best[2]


def run_fit(fit, model):
    """Run ``fit(model)``; a singular normal matrix yields the flagged result."""
    try:
        return fit(model)
    except SingularNormalMatrixError as exc:
        return exc.result


def histogram_sigma(hist: CorrelationHistogram, weighting):
    if weighting in (None, "none"):
        return None
    if weighting == "poisson":
        scale = 1.0 if hist.norm_constant is None else hist.norm_constant
        return np.sqrt(np.maximum(hist.counts.astype(float), 1.0)) / scale
    raise ValueError(f"unknown weighting {weighting!r}")
