"""
Domain types shared across simulation, correlation, fitting and localization.

Every type validates its invariants on construction and is immutable
afterwards; array fields are copied and made read-only.  Units are encoded in
field names (``_ns``, ``_ps``, ``_nm``, ``_hz``).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError

NORMALIZATION_TAGS = ("raw", "cw-poisson", "pulsed-sidepeak")
SPLITTER_SUM_TOL = 1e-9


def _frozen_array(values, dtype=None):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _require(ok, field_name, constraint, value=None):
    if not ok:
        raise ValidationError(field_name, constraint, value)


def _finite_positive(name, value):
    _require(np.isfinite(value) and value > 0, name, "must be > 0", value)


class _ParamsMixin:
    """Dict round trip for the scalar parameter types."""

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(cls.__name__, f"unknown fields {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class EmitterParams(_ParamsMixin):
    """Physical source model.

    ``brightness`` is the mean detected count rate in counts/s for CW
    excitation, or the mean number of detected photons per pulse for pulsed
    excitation.
    """

    lifetime_ns: float
    coherence_ns: float
    multiphoton_prob: float = 0.0
    brightness: float = 1e5
    wavelength_nm: float = 920.0

    def __post_init__(self):
        _finite_positive("lifetime_ns", self.lifetime_ns)
        _finite_positive("coherence_ns", self.coherence_ns)
        _require(self.coherence_ns <= 2 * self.lifetime_ns, "coherence_ns",
                 "must satisfy coherence_ns <= 2*lifetime_ns (radiative limit)",
                 self.coherence_ns)
        _require(0 <= self.multiphoton_prob < 1, "multiphoton_prob",
                 "must lie in [0, 1)", self.multiphoton_prob)
        _finite_positive("brightness", self.brightness)
        _finite_positive("wavelength_nm", self.wavelength_nm)


@dataclass(frozen=True)
class PulseTrain(_ParamsMixin):
    rep_period_ns: float
    mzi_delay_ns: float
    n_pulses: int = 1

    def __post_init__(self):
        _finite_positive("rep_period_ns", self.rep_period_ns)
        _require(0 < self.mzi_delay_ns < self.rep_period_ns / 2, "mzi_delay_ns",
                 "must satisfy 0 < mzi_delay_ns < rep_period_ns/2", self.mzi_delay_ns)
        _require(int(self.n_pulses) == self.n_pulses and self.n_pulses >= 1,
                 "n_pulses", "must be an integer >= 1", self.n_pulses)


@dataclass(frozen=True)
class SplitterParams(_ParamsMixin):
    """Intensity reflectance/transmittance of the two interferometer splitters
    and the power fraction the on-chip MMI sends to output port 1."""

    r1: float = 0.5
    t1: float = 0.5
    r2: float = 0.5
    t2: float = 0.5
    mmi_ratio: float = 0.5

    def __post_init__(self):
        for name in ("r1", "t1", "r2", "t2"):
            value = getattr(self, name)
            _require(0 <= value <= 1, name, "must lie in [0, 1]", value)
        _require(abs(self.r1 + self.t1 - 1) <= SPLITTER_SUM_TOL, "r1+t1",
                 "must equal 1", self.r1 + self.t1)
        _require(abs(self.r2 + self.t2 - 1) <= SPLITTER_SUM_TOL, "r2+t2",
                 "must equal 1", self.r2 + self.t2)
        _require(0 < self.mmi_ratio < 1, "mmi_ratio", "must lie in (0, 1)",
                 self.mmi_ratio)


@dataclass(frozen=True)
class DetectorParams(_ParamsMixin):
    jitter_fwhm_ps: float = 0.0
    efficiency: float = 1.0
    dark_rate_hz: float = 0.0
    dead_time_ns: float = 0.0

    def __post_init__(self):
        _require(self.jitter_fwhm_ps >= 0, "jitter_fwhm_ps", "must be >= 0",
                 self.jitter_fwhm_ps)
        _require(0 < self.efficiency <= 1, "efficiency", "must lie in (0, 1]",
                 self.efficiency)
        _require(self.dark_rate_hz >= 0, "dark_rate_hz", "must be >= 0",
                 self.dark_rate_hz)
        _require(self.dead_time_ns >= 0, "dead_time_ns", "must be >= 0",
                 self.dead_time_ns)

    @property
    def jitter_sigma_ps(self):
        return self.jitter_fwhm_ps / 2.355


class TimeTagStream:
    """Time-ordered, channel-tagged detection events.

    Parameters
    ----------
    channels : array of small unsigned ints
    timestamps : array of int64, picoseconds, nondecreasing
    duration_ps : int
        Acquisition duration; every timestamp lies in ``[0, duration_ps]``.
    channel_ids : sequence of int, optional
        Declared channels.  Defaults to the channels present.
    """

    __slots__ = ("channels", "timestamps", "duration_ps", "channel_ids", "counts")

    def __init__(self, channels, timestamps, duration_ps, channel_ids=None):
        ch = _frozen_array(channels, np.uint8)
        ts = _frozen_array(timestamps, np.int64)
        _require(ch.ndim == 1 and ch.shape == ts.shape, "channels",
                 "must be 1-D and match timestamps in length")
        duration_ps = int(duration_ps)
        _require(duration_ps >= 0, "duration_ps", "must be >= 0", duration_ps)
        per_id = np.bincount(ch, minlength=256)
        present = np.flatnonzero(per_id).tolist()
        if channel_ids is None:
            channel_ids = present
        channel_ids = tuple(sorted(int(c) for c in set(channel_ids)))
        if ts.size:
            _require(bool(np.all(np.diff(ts) >= 0)), "timestamps",
                     "must be nondecreasing")
            _require(ts[0] >= 0 and ts[-1] <= duration_ps, "timestamps",
                     "must lie in [0, duration_ps]")
            undeclared = set(present) - set(channel_ids)
            _require(not undeclared, "channels",
                     f"ids {sorted(undeclared)} not declared in channel_ids")
        counts = {c: int(per_id[c]) if 0 <= c < 256 else 0 for c in channel_ids}
        for name, value in zip(self.__slots__, (ch, ts, duration_ps, channel_ids, counts)):
            object.__setattr__(self, name, value)

    def __setattr__(self, name, value):
        raise AttributeError("TimeTagStream is immutable")

    def __len__(self):
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (self.duration_ps == other.duration_ps
                and self.channel_ids == other.channel_ids
                and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.timestamps, other.timestamps))

    __hash__ = None

    def __repr__(self):
        return (f"TimeTagStream(n={len(self)}, channels={self.channel_ids}, "
                f"duration_ps={self.duration_ps})")

    @property
    def duration_s(self):
        return self.duration_ps * 1e-12

    def channel(self, ch):
        """Timestamps of one channel (read-only view)."""
        from .errors import UnknownChannelError

        if int(ch) not in self.channel_ids:
            raise UnknownChannelError(f"channel {ch} not in {self.channel_ids}")
        return self.timestamps[self.channels == ch]

    def rate_hz(self, ch):
        if self.duration_ps == 0:
            return 0.0
        return self.counts[int(ch)] / self.duration_s

    def merge(self, other: TimeTagStream) -> TimeTagStream:
        """Union of two streams, time-ordered; ties keep ``self`` first."""
        ts = np.concatenate([self.timestamps, other.timestamps])
        ch = np.concatenate([self.channels, other.channels])
        order = np.argsort(ts, kind="stable")
        return TimeTagStream(ch[order], ts[order],
                             max(self.duration_ps, other.duration_ps),
                             self.channel_ids + other.channel_ids)

    def shifted(self, offset_ps: int) -> TimeTagStream:
        return TimeTagStream(self.channels, self.timestamps + int(offset_ps),
                             self.duration_ps + int(offset_ps), self.channel_ids)

    @classmethod
    def concatenate(cls, chunks: Sequence[TimeTagStream], duration_ps=None):
        """Join chunks that are already mutually time-ordered."""
        chunks = list(chunks)
        if duration_ps is None:
            duration_ps = max((c.duration_ps for c in chunks), default=0)
        ids = tuple(i for c in chunks for i in c.channel_ids)
        if not chunks:
            return cls(np.zeros(0, np.uint8), np.zeros(0, np.int64), duration_ps, ids)
        return cls(np.concatenate([c.channels for c in chunks]),
                   np.concatenate([c.timestamps for c in chunks]),
                   duration_ps, ids)


class CorrelationHistogram:
    """Binned coincidence (or decay) counts.

    ``tau_ps`` holds bin centers.  Correlation histograms built by the
    correlator are symmetric about zero; decay traces reuse the type with
    centers on ``[0, T_rep)``.
    """

    __slots__ = ("bin_width_ps", "tau_ps", "counts", "normalized",
                 "normalization", "norm_constant")

    def __init__(self, bin_width_ps, tau_ps, counts, normalized=None,
                 normalization="raw", norm_constant=None):
        tau = _frozen_array(tau_ps, np.float64)
        cnt = _frozen_array(counts, np.int64)
        _require(bin_width_ps > 0, "bin_width_ps", "must be > 0", bin_width_ps)
        _require(tau.ndim == 1 and tau.shape == cnt.shape, "counts",
                 "must be 1-D and match tau_ps in length")
        if tau.size > 1:
            _require(np.allclose(np.diff(tau), bin_width_ps, rtol=0, atol=1e-6),
                     "tau_ps", "bins must be uniform with width bin_width_ps")
        _require(bool(np.all(cnt >= 0)), "counts", "must be >= 0")
        _require(normalization in NORMALIZATION_TAGS, "normalization",
                 f"must be one of {NORMALIZATION_TAGS}", normalization)
        if normalization == "raw":
            _require(normalized is None, "normalized", "raw histograms carry no normalized values")
        else:
            _require(normalized is not None and norm_constant is not None,
                     "normalized", "normalized histograms need values and a constant")
            normalized = _frozen_array(normalized, np.float64)
            _require(normalized.shape == cnt.shape, "normalized", "must match counts")
            _require(norm_constant > 0, "norm_constant", "must be > 0", norm_constant)
            norm_constant = float(norm_constant)
        values = (bin_width_ps, tau, cnt, normalized, normalization, norm_constant)
        for name, value in zip(self.__slots__, values):
            object.__setattr__(self, name, value)

    def __setattr__(self, name, value):
        raise AttributeError("CorrelationHistogram is immutable")

    def __len__(self):
        return int(self.tau_ps.size)

    def __eq__(self, other):
        if not isinstance(other, CorrelationHistogram):
            return NotImplemented
        same_norm = (self.normalized is None and other.normalized is None) or (
            self.normalized is not None and other.normalized is not None
            and np.array_equal(self.normalized, other.normalized))
        return (self.bin_width_ps == other.bin_width_ps
                and self.normalization == other.normalization
                and self.norm_constant == other.norm_constant
                and np.array_equal(self.tau_ps, other.tau_ps)
                and np.array_equal(self.counts, other.counts) and same_norm)

    __hash__ = None

    def __repr__(self):
        return (f"CorrelationHistogram(bins={len(self)}, bin_width_ps={self.bin_width_ps}, "
                f"normalization={self.normalization!r})")

    @property
    def tau_ns(self):
        return self.tau_ps * 1e-3

    @property
    def values(self):
        """Normalized values when available, raw counts otherwise."""
        return self.counts.astype(float) if self.normalized is None else self.normalized

    @property
    def edges_ps(self):
        half = self.bin_width_ps / 2
        return np.append(self.tau_ps - half, self.tau_ps[-1] + half)

    def bin_index(self, tau_ps):
        """Index of the bin whose half-open interval contains ``tau_ps``."""
        k = int(np.floor((tau_ps - self.tau_ps[0]) / self.bin_width_ps + 0.5))
        if not 0 <= k < len(self):
            raise IndexError(f"tau {tau_ps} ps outside histogram")
        return k


class Spectrum:
    __slots__ = ("wavelength_nm", "intensity")

    def __init__(self, wavelength_nm, intensity):
        wl = _frozen_array(wavelength_nm, np.float64)
        it = _frozen_array(intensity, np.float64)
        _require(wl.ndim == 1 and wl.shape == it.shape, "intensity",
                 "must be 1-D with the same length as wavelength_nm")
        _require(bool(np.all(np.diff(wl) > 0)), "wavelength_nm", "must be strictly increasing")
        _require(bool(np.all(it >= 0)), "intensity", "must be >= 0")
        object.__setattr__(self, "wavelength_nm", wl)
        object.__setattr__(self, "intensity", it)

    def __setattr__(self, name, value):
        raise AttributeError("Spectrum is immutable")

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (np.array_equal(self.wavelength_nm, other.wavelength_nm)
                and np.array_equal(self.intensity, other.intensity))

    __hash__ = None

    def __len__(self):
        return int(self.wavelength_nm.size)


class CLMap:
    """Cathodoluminescence map on a square pixel grid.

    ``data`` is ``(height, width)`` for a pre-integrated intensity map or
    ``(height, width, n_wavelengths)`` for a hyperspectral map, in which case
    ``wavelength_nm`` is the shared spectral axis.  Pixel ``(row, col)`` is
    centered at ``origin + (col, row) * pixel_pitch_nm``.
    """

    __slots__ = ("data", "pixel_pitch_nm", "origin_nm", "wavelength_nm")

    def __init__(self, data, pixel_pitch_nm, origin_nm=(0.0, 0.0), wavelength_nm=None):
        arr = _frozen_array(data, np.float64)
        _require(np.isfinite(pixel_pitch_nm) and pixel_pitch_nm > 0, "pixel_pitch_nm",
                 "must be > 0", pixel_pitch_nm)
        origin = tuple(float(v) for v in origin_nm)
        _require(len(origin) == 2 and all(np.isfinite(origin)), "origin_nm",
                 "must be two finite numbers", origin_nm)
        if arr.ndim == 3:
            _require(wavelength_nm is not None, "wavelength_nm",
                     "hyperspectral maps need a wavelength axis")
            wl = _frozen_array(wavelength_nm, np.float64)
            _require(wl.ndim == 1 and wl.size == arr.shape[2], "wavelength_nm",
                     "length must equal the spectral dimension of data")
            _require(bool(np.all(np.diff(wl) > 0)), "wavelength_nm",
                     "must be strictly increasing")
        else:
            _require(arr.ndim == 2, "data", "must be 2-D (scalar) or 3-D (hyperspectral)")
            _require(wavelength_nm is None, "wavelength_nm", "scalar maps carry no spectral axis")
            wl = None
        for name, value in zip(self.__slots__, (arr, float(pixel_pitch_nm), origin, wl)):
            object.__setattr__(self, name, value)

    def __setattr__(self, name, value):
        raise AttributeError("CLMap is immutable")

    def __eq__(self, other):
        if not isinstance(other, CLMap):
            return NotImplemented
        same_wl = (self.wavelength_nm is None and other.wavelength_nm is None) or (
            self.wavelength_nm is not None and other.wavelength_nm is not None
            and np.array_equal(self.wavelength_nm, other.wavelength_nm))
        return (self.pixel_pitch_nm == other.pixel_pitch_nm
                and self.origin_nm == other.origin_nm and same_wl
                and np.array_equal(self.data, other.data))

    __hash__ = None

    @property
    def is_hyperspectral(self):
        return self.data.ndim == 3

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def pixel_to_nm(self, col, row):
        x0, y0 = self.origin_nm
        return x0 + np.asarray(col) * self.pixel_pitch_nm, y0 + np.asarray(row) * self.pixel_pitch_nm

    def nm_to_pixel(self, x_nm, y_nm):
        x0, y0 = self.origin_nm
        return (np.asarray(x_nm) - x0) / self.pixel_pitch_nm, (np.asarray(y_nm) - y0) / self.pixel_pitch_nm


@dataclass(frozen=True)
class AlignmentRecord(_ParamsMixin):
    structure_id: str
    measured_x_nm: float
    measured_y_nm: float
    target_x_nm: float
    target_y_nm: float

    def __post_init__(self):
        for name in ("measured_x_nm", "measured_y_nm", "target_x_nm", "target_y_nm"):
            _require(np.isfinite(getattr(self, name)), name, "must be finite",
                     getattr(self, name))

    @property
    def dx_nm(self):
        return self.measured_x_nm - self.target_x_nm

    @property
    def dy_nm(self):
        return self.measured_y_nm - self.target_y_nm


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit outcome.

    ``stderr`` is the square root of the covariance diagonal, i.e. a fit
    standard error, not a repeated-measurement spread.  ``flags`` names
    parameters the data did not constrain.
    """

    names: tuple
    values: np.ndarray
    stderr: np.ndarray
    covariance: np.ndarray
    redchi2: float
    converged: bool
    iterations: int
    gradient_norm: float = float("nan")
    flags: tuple = ()
    extras: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        values = _frozen_array(self.values, np.float64)
        cov = _frozen_array(self.covariance, np.float64)
        err = _frozen_array(self.stderr, np.float64)
        p = len(self.names)
        _require(values.shape == (p,) and err.shape == (p,) and cov.shape == (p, p),
                 "FitResult", "shapes of values, stderr and covariance must agree with names")
        finite = np.isfinite(cov)
        _require(np.allclose(cov[finite], cov.T[finite], rtol=1e-8, atol=1e-300),
                 "covariance", "must be symmetric")
        ok = np.isfinite(err)
        _require(bool(np.all(err[ok] >= 0)), "stderr", "must be >= 0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "stderr", err)
        object.__setattr__(self, "flags", tuple(self.flags))
        object.__setattr__(self, "extras", dict(self.extras))

    def _index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def __getitem__(self, name):
        return float(self.values[self._index(name)])

    def error(self, name):
        return float(self.stderr[self._index(name)])

    @property
    def params(self):
        return dict(zip(self.names, self.values.tolist()))

    def to_dict(self):
        return {
            "names": list(self.names),
            "values": self.values.tolist(),
            "stderr": self.stderr.tolist(),
            "covariance": self.covariance.tolist(),
            "redchi2": self.redchi2,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "flags": list(self.flags),
            "extras": dict(self.extras),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(names=tuple(data["names"]), values=data["values"],
                   stderr=data["stderr"], covariance=data["covariance"],
                   redchi2=data["redchi2"], converged=data["converged"],
                   iterations=data["iterations"],
                   gradient_norm=data.get("gradient_norm", float("nan")),
                   flags=tuple(data.get("flags", ())), extras=data.get("extras", {}))


@dataclass(frozen=True)
class Estimate:
    """A value with its one-sigma uncertainty."""

    value: float
    error: float

    def __iter__(self):
        yield self.value
        yield self.error

    def __float__(self):
        return float(self.value)


def validate(kind, raw: Mapping | None = None):
    """Build or re-check a domain value.

    ``validate(EmitterParams, {...})`` constructs from raw fields and raises
    :class:`ValidationError` naming the violated constraint;
    ``validate(instance)`` re-runs the invariant checks and returns it.
    """
    if raw is not None:
        if not isinstance(kind, type):
            raise TypeError("validate(type, raw) expects a type as first argument")
        return kind(**raw)
    if dataclasses.is_dataclass(kind) and not isinstance(kind, type):
        return type(kind)(**{f.name: getattr(kind, f.name) for f in dataclasses.fields(kind)})
    if isinstance(kind, TimeTagStream):
        return TimeTagStream(kind.channels, kind.timestamps, kind.duration_ps, kind.channel_ids)
    if isinstance(kind, CorrelationHistogram):
        return CorrelationHistogram(kind.bin_width_ps, kind.tau_ps, kind.counts, kind.normalized,
                                    kind.normalization, kind.norm_constant)
    if isinstance(kind, Spectrum):
        return Spectrum(kind.wavelength_nm, kind.intensity)
    if isinstance(kind, CLMap):
        return CLMap(kind.data, kind.pixel_pitch_nm, kind.origin_nm, kind.wavelength_nm)
    raise TypeError(f"don't know how to validate {type(kind).__name__}")
