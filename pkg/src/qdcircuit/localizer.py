"""
CL-map metrology: spectral-window integration, 2D Gaussian emitter fits,
marker detection, affine field correction and alignment statistics.

All positions are in nm in the map frame, where pixel ``(row, col)`` sits at
``origin + (col, row) * pitch``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from .analyses import models
from .errors import (AmbiguousMarkerError, DegenerateGeometryError, FitFailedError,
                     MarkerNotFoundError, RoiTooSmallError, SingularNormalMatrixError,
                     TooFewRecordsError, ValidationError, WindowOutOfRangeError)
from .fitcore import curve_model, nlls_fit
from .types import AlignmentRecord, CLMap, Estimate, FitResult

MIN_ROI = 5


def integrate_spectral_window(cmap: CLMap, center_nm, half_width_nm) -> CLMap:
    """Per-pixel sum over ``[center - hw, center + hw]`` of a hyperspectral map.

    A zero-width window (or one falling between samples) takes the nearest
    wavelength sample.
    """
    if not cmap.is_hyperspectral:
        raise ValidationError("cmap", "must be hyperspectral")
    if half_width_nm < 0:
        raise ValidationError("half_width_nm", "must be >= 0", half_width_nm)
    wl = cmap.wavelength_nm
    lo, hi = center_nm - half_width_nm, center_nm + half_width_nm
    if lo < wl[0] or hi > wl[-1]:
        raise WindowOutOfRangeError(f"window [{lo}, {hi}] nm outside axis [{wl[0]}, {wl[-1]}]")
    sel = (wl >= lo) & (wl <= hi)
    if not np.any(sel):
        sel = np.arange(wl.size) == int(np.argmin(np.abs(wl - center_nm)))
    return CLMap(cmap.data[:, :, sel].sum(axis=2), cmap.pixel_pitch_nm, cmap.origin_nm)


@dataclass(frozen=True)
class Gaussian2DParams:
    """Fitted 2D Gaussian in nm.  ``at_edge`` marks a center within one pixel
    of the ROI border."""

    x0: float
    y0: float
    sigma_x: float
    sigma_y: float
    amplitude: float
    baseline: float
    stderr: dict
    at_edge: bool
    fit: FitResult = field(repr=False, compare=False)

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValidationError("sigma", "must be > 0")
        if not self.amplitude > 0:
            raise ValidationError("amplitude", "must be > 0", self.amplitude)

    @property
    def center(self):
        return (self.x0, self.y0)


def _roi_slices(cmap, roi):
    if roi is None:
        return slice(0, cmap.height), slice(0, cmap.width)
    row0, col0, height, width = (int(v) for v in roi)
    if row0 < 0 or col0 < 0 or row0 + height > cmap.height or col0 + width > cmap.width:
        raise WindowOutOfRangeError(f"roi {roi} exceeds the {cmap.height}x{cmap.width} map")
    return slice(row0, row0 + height), slice(col0, col0 + width)


def fit_gaussian_2d(image: CLMap, roi=None) -> Gaussian2DParams:
    """Least-squares axis-aligned 2D Gaussian on a scalar map.

    Parameters
    ----------
    image : CLMap
        Scalar (pre-integrated) map.
    roi : (row0, col0, height, width), optional
        Defaults to the whole map; must be at least 5x5 pixels.

    Raises
    ------
    RoiTooSmallError, FitFailedError
    """
    if image.is_hyperspectral:
        raise ValidationError("image", "must be a scalar map; integrate a spectral window first")
    rs, cs = _roi_slices(image, roi)
    data = image.data[rs, cs]
    if data.shape[0] < MIN_ROI or data.shape[1] < MIN_ROI:
        raise RoiTooSmallError(f"roi {data.shape} smaller than {MIN_ROI}x{MIN_ROI}")
    if np.ptp(data) <= 0:
        raise FitFailedError("uniform image: no peak above baseline")
    rows, cols = np.mgrid[rs, cs]
    x, y = image.pixel_to_nm(cols.ravel().astype(float), rows.ravel().astype(float))
    z = data.ravel()
    pitch = image.pixel_pitch_nm

    base0 = float(np.percentile(z, 10))
    wts = np.clip(z - base0, 0, None)
    if wts.sum() <= 0:
        raise FitFailedError("no peak above baseline")
    amp0 = float(z.max() - base0)
    x0 = float(np.sum(wts * x) / wts.sum())
    y0 = float(np.sum(wts * y) / wts.sum())
    span = pitch * max(data.shape)
    sx0 = float(np.clip(np.sqrt(np.sum(wts * (x - x0) ** 2) / wts.sum()), 0.5 * pitch, span))
    sy0 = float(np.clip(np.sqrt(np.sum(wts * (y - y0) ** 2) / wts.sum()), 0.5 * pitch, span))
    model = curve_model(models.gaussian_2d, models.gaussian_2d_jac, (x, y), z,
                        (x0, y0, sx0, sy0, amp0, base0),
                        lower=(-np.inf, -np.inf, 0.05 * pitch, 0.05 * pitch, 0.0, -np.inf),
                        names=models.GAUSS2D_NAMES)
    try:
        result = nlls_fit(model)
    except SingularNormalMatrixError as exc:
        raise FitFailedError("2D Gaussian not identifiable: " + str(exc)) from exc
    p = result.params
    if not p["amplitude"] > 0:
        raise FitFailedError("fitted amplitude is not positive")
    col_c, row_c = image.nm_to_pixel(p["x0"], p["y0"])
    at_edge = bool(col_c < cs.start + 1 or col_c > cs.stop - 2
                   or row_c < rs.start + 1 or row_c > rs.stop - 2)
    return Gaussian2DParams(p["x0"], p["y0"], p["sigma_x"], p["sigma_y"], p["amplitude"],
                            p["baseline"], dict(zip(result.names, result.stderr.tolist())),
                            at_edge, result)


def roi_around_peak(image: CLMap, size=11):
    """``size x size`` ROI centered on the brightest pixel, clipped to the map."""
    size = min(size, image.height, image.width)
    r, c = np.unravel_index(int(np.argmax(image.data)), image.data.shape)
    r0 = int(np.clip(r - size // 2, 0, image.height - size))
    c0 = int(np.clip(c - size // 2, 0, image.width - size))
    return (r0, c0, size, size)


def localize_emitter(cmap: CLMap, center_nm=None, half_width_nm=0.0, roi=None, roi_size=11):
    """Integrate a spectral window if needed, then fit the brightest emitter."""
    image = cmap
    if cmap.is_hyperspectral:
        if center_nm is None:
            raise ValidationError("center_nm", "required for hyperspectral maps")
        image = integrate_spectral_window(cmap, center_nm, half_width_nm)
    if roi is None:
        roi = roi_around_peak(image, roi_size)
    return fit_gaussian_2d(image, roi)


# -- markers -------------------------------------------------------------------

def detect_markers(image: CLMap, expected: Sequence, marker_size_nm, search_radius_nm=None,
                   polarity="dark", min_pixels=None):
    """Locate square markers near their nominal positions.

    For each nominal ``(x, y)`` a square search window (half-size
    ``search_radius_nm``, default ``1.5 * marker_size_nm``) is split with an
    Otsu threshold; the single connected region of marker polarity with at
    least ``min_pixels`` pixels is reduced to its contrast-weighted centroid.

    Returns
    -------
    ndarray, shape (n, 2)
        Measured centers in nm.

    Raises
    ------
    MarkerNotFoundError, AmbiguousMarkerError
    """
    if polarity not in ("dark", "bright"):
        raise ValidationError("polarity", "must be 'dark' or 'bright'", polarity)
    if image.is_hyperspectral:
        raise ValidationError("image", "must be a scalar map")
    pitch = image.pixel_pitch_nm
    radius = 1.5 * marker_size_nm if search_radius_nm is None else search_radius_nm
    if min_pixels is None:
        min_pixels = max(4, int(0.25 * (marker_size_nm / pitch) ** 2))
    centers = []
    for k, (ex, ey) in enumerate(np.asarray(expected, dtype=float).reshape(-1, 2)):
        col, row = image.nm_to_pixel(ex, ey)
        rad = radius / pitch
        r0, r1 = int(max(0, np.floor(row - rad))), int(min(image.height, np.ceil(row + rad) + 1))
        c0, c1 = int(max(0, np.floor(col - rad))), int(min(image.width, np.ceil(col + rad) + 1))
        window = image.data[r0:r1, c0:c1]
        if window.size == 0 or np.ptp(window) <= 0:
            raise MarkerNotFoundError(f"marker {k}: no contrast near ({ex}, {ey}) nm")
        thr = threshold_otsu(window)
        contrast = thr - window if polarity == "dark" else window - thr
        labels, n = ndimage.label(contrast > 0)
        sizes = ndimage.sum_labels(np.ones_like(window), labels, index=np.arange(1, n + 1))
        good = [i + 1 for i, s in enumerate(np.atleast_1d(sizes)) if s >= min_pixels]
        if not good:
            raise MarkerNotFoundError(f"marker {k}: no region of >= {min_pixels} pixels")
        if len(good) > 1:
            raise AmbiguousMarkerError(f"marker {k}: {len(good)} candidate regions")
        mask = labels == good[0]
        w = contrast * mask
        rr, cc = np.mgrid[r0:r1, c0:c1]
        cr = float(np.sum(w * rr) / w.sum())
        ccol = float(np.sum(w * cc) / w.sum())
        centers.append(image.pixel_to_nm(ccol, cr))
    return np.array(centers, dtype=float)


# -- field transform -------------------------------------------------------------

@dataclass(frozen=True)
class FieldTransform:
    """Affine map ``p -> matrix @ p + translation`` (measured -> field)."""

    matrix: np.ndarray
    translation: np.ndarray
    residuals: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(2, 2)
        t = np.array(self.translation, dtype=float).reshape(2)
        if not np.all(np.isfinite(m)) or not np.all(np.isfinite(t)):
            raise ValidationError("FieldTransform", "entries must be finite")
        if not np.linalg.det(m) > 0:
            raise DegenerateGeometryError("transform determinant must be > 0 (no reflection)")
        m.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)
        if self.residuals is not None:
            r = np.array(self.residuals, dtype=float)
            r.setflags(write=False)
            object.__setattr__(self, "residuals", r)

    @classmethod
    def identity(cls):
        return cls(np.eye(2), np.zeros(2))

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T + self.translation

    def inverse(self) -> FieldTransform:
        inv = np.linalg.inv(self.matrix)
        return FieldTransform(inv, -inv @ self.translation)

    @property
    def rotation_deg(self):
        m = self.matrix
        return float(np.degrees(np.arctan2(m[1, 0] - m[0, 1], m[0, 0] + m[1, 1])))

    @property
    def scale(self):
        return float(np.sqrt(np.linalg.det(self.matrix)))

    @property
    def max_residual_nm(self):
        if self.residuals is None:
            return 0.0
        return float(np.max(np.linalg.norm(self.residuals, axis=1)))


def compute_field_transform(measured, nominal) -> FieldTransform:
    """Least-squares affine transform taking ``measured`` onto ``nominal``.

    Needs at least three non-collinear point pairs (four markers
    over-determine the six parameters; the residuals are kept).
    """
    src = np.asarray(measured, dtype=float).reshape(-1, 2)
    dst = np.asarray(nominal, dtype=float).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValidationError("nominal", "must match measured in shape")
    if src.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 point pairs")
    # center for conditioning; collinearity shows as a rank-deficient design
    mu = src.mean(axis=0)
    X = np.column_stack([src - mu, np.ones(src.shape[0])])
    sv = np.linalg.svd(X[:, :2], compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateGeometryError("marker positions are collinear")
    coef = np.linalg.lstsq(X, dst, rcond=None)[0]
    matrix = coef[:2].T
    translation = coef[2] - matrix @ mu
    residuals = dst - (src @ matrix.T + translation)
    return FieldTransform(matrix, translation, residuals)


def apply_transform(t: FieldTransform, points):
    """Affine image ``t(points)`` of an ``(n, 2)`` array (or one point)."""
    return t.apply(points)


# -- alignment statistics ---------------------------------------------------------

@dataclass(frozen=True)
class AlignmentStats:
    mean_abs_dx: float
    std_dx: float
    mean_abs_dy: float
    std_dy: float
    overall: float
    overall_err: float
    n: int

    def to_dict(self):
        return dict(self.__dict__)


def overall_alignment(mean_abs_dx, std_dx, mean_abs_dy, std_dy) -> Estimate:
    """Component RMS ``sqrt((dx^2 + dy^2) / 2)`` with the spreads combined
    the same way."""
    return Estimate(float(np.sqrt((mean_abs_dx ** 2 + mean_abs_dy ** 2) / 2)),
                    float(np.sqrt((std_dx ** 2 + std_dy ** 2) / 2)))


def alignment_stats(records: Sequence[AlignmentRecord]) -> AlignmentStats:
    """Mean absolute offsets per axis (sample std) and the overall accuracy."""
    records = list(records)
    if len(records) < 2:
        raise TooFewRecordsError("need at least 2 alignment records")
    dx = np.abs([r.dx_nm for r in records])
    dy = np.abs([r.dy_nm for r in records])
    mx, sx = float(dx.mean()), float(dx.std(ddof=1))
    my, sy = float(dy.mean()), float(dy.std(ddof=1))
    overall = overall_alignment(mx, sx, my, sy)
    return AlignmentStats(mx, sx, my, sy, overall.value, overall.error, len(records))


def alignment_record(structure_id, measured_xy, indicator_x_nm, waveguide_center_y_nm):
    """Record whose horizontal target is the indicator coordinate and whose
    vertical target is the waveguide centerline."""
    mx, my = measured_xy
    return AlignmentRecord(str(structure_id), float(mx), float(my), float(indicator_x_nm),
                           float(waveguide_center_y_nm))


__all__ = [
    "integrate_spectral_window", "fit_gaussian_2d", "Gaussian2DParams", "roi_around_peak",
    "localize_emitter", "detect_markers", "FieldTransform", "compute_field_transform",
    "apply_transform", "AlignmentStats", "alignment_stats", "overall_alignment",
    "alignment_record",
]
