"""
Coincidence histograms from time-tag streams.

Bins are centered on ``k * bin_width`` and half-open: a delay ``tau`` lands
in bin ``k`` iff ``(k - 1/2) w <= tau < (k + 1/2) w``.  The histogram spans
``k = -K..K`` with ``K = max_tau / w``.  All pairs inside that range are
counted (multi-stop), not only nearest neighbours.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (EmptyChannelError, OverlappingWindowsError, UnknownChannelError,
                     ValidationError, WindowOutOfRangeError, ZeroRateError)
from .types import CorrelationHistogram, TimeTagStream

# pairs materialized per batch while histogramming
_PAIR_BATCH = 1 << 22


def _check_binning(bin_width_ps, max_tau_ps):
    if int(bin_width_ps) != bin_width_ps or bin_width_ps < 1:
        raise ValidationError("bin_width_ps", "must be an integer >= 1", bin_width_ps)
    if int(max_tau_ps) != max_tau_ps or max_tau_ps < 0 or max_tau_ps % bin_width_ps:
        raise ValidationError("max_tau_ps", "must be a nonnegative multiple of bin_width_ps",
                              max_tau_ps)
    return int(bin_width_ps), int(max_tau_ps)


def _delay_limits(width, max_tau):
    """Integer delays ``d`` with ``lo <= d < hi`` fall inside the histogram."""
    return -max_tau - width // 2, max_tau - (-width // 2)


def pair_counts(ta, tb, bin_width_ps, max_tau_ps, same=False):
    """Histogram of ``tb - ta`` over all pairs; ``same`` drops self-pairs.

    Both inputs must be sorted int64 arrays.  Returns int64 counts for bins
    ``-K..K``.
    """
    width, max_tau = _check_binning(bin_width_ps, max_tau_ps)
    n_bins = 2 * (max_tau // width) + 1
    counts = np.zeros(n_bins, dtype=np.int64)
    ta = np.asarray(ta, dtype=np.int64)
    tb = np.asarray(tb, dtype=np.int64)
    if ta.size == 0 or tb.size == 0:
        return counts
    d_lo, d_hi = _delay_limits(width, max_tau)
    first = np.searchsorted(tb, ta + d_lo, side="left")
    # sparse streams: only events whose first candidate lies in the window need a stop
    head = tb[np.minimum(first, tb.size - 1)]
    cand = np.flatnonzero((first < tb.size) & (head < ta + d_hi))
    per_a = np.zeros(ta.size, dtype=np.int64)
    per_a[cand] = np.searchsorted(tb, ta[cand] + d_hi, side="left") - first[cand]
    ends = np.cumsum(per_a)
    start_a = 0
    while start_a < ta.size:
        base = ends[start_a - 1] if start_a else 0
        end_a = int(np.searchsorted(ends, base + _PAIR_BATCH, side="right"))
        end_a = max(end_a, start_a + 1)
        n = per_a[start_a:end_a]
        total = int(n.sum())
        if total:
            which = np.repeat(np.arange(start_a, end_a), n)
            offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
            jb = first[which] + offsets
            if same:
                keep = jb != which
                which, jb = which[keep], jb[keep]
            delay = tb[jb] - ta[which]
            k = (2 * delay + width) // (2 * width) + max_tau // width
            counts += np.bincount(k, minlength=n_bins)
        start_a = end_a
    return counts


def _centers(width, max_tau):
    return np.arange(-max_tau, max_tau + 1, width, dtype=np.float64)


def _channel_times(stream: TimeTagStream, ch):
    if int(ch) not in stream.channel_ids:
        raise UnknownChannelError(f"channel {ch} not declared in stream ({stream.channel_ids})")
    return stream.channel(ch)


def cross_correlate(stream: TimeTagStream, ch_a, ch_b, bin_width_ps,
                    max_tau_ps) -> CorrelationHistogram:
    """Raw coincidence histogram of ``tau = t_b - t_a``.

    With ``ch_a == ch_b`` this is the autocorrelation without self-pairs.

    Raises
    ------
    UnknownChannelError, EmptyChannelError, ValidationError
    """
    width, max_tau = _check_binning(bin_width_ps, max_tau_ps)
    ta = _channel_times(stream, ch_a)
    tb = _channel_times(stream, ch_b)
    for ch, t in ((ch_a, ta), (ch_b, tb)):
        if t.size == 0:
            raise EmptyChannelError(f"channel {ch} has no events")
    counts = pair_counts(ta, tb, width, max_tau, same=int(ch_a) == int(ch_b))
    return CorrelationHistogram(width, _centers(width, max_tau), counts)


@dataclass
class StreamSummary:
    """Per-channel totals collected by :func:`correlate_chunks`."""

    counts: dict = field(default_factory=dict)
    duration_ps: int = 0

    def rate_hz(self, ch):
        if self.duration_ps <= 0:
            return 0.0
        return self.counts.get(int(ch), 0) / (self.duration_ps * 1e-12)

    @property
    def duration_s(self):
        return self.duration_ps * 1e-12


def correlate_chunks(chunks: Iterable[TimeTagStream], ch_a, ch_b, bin_width_ps,
                     max_tau_ps, summary: StreamSummary | None = None) -> CorrelationHistogram:
    """Streaming equivalent of :func:`cross_correlate` over time-ordered chunks.

    Only events within reach of the next chunk are kept between chunks, so
    memory is bounded by the chunk size.  The result equals
    ``cross_correlate(TimeTagStream.concatenate(chunks), ...)`` exactly.
    """
    width, max_tau = _check_binning(bin_width_ps, max_tau_ps)
    same = int(ch_a) == int(ch_b)
    reach = max_tau + width + 1
    counts = np.zeros(2 * (max_tau // width) + 1, dtype=np.int64)
    carry_a = np.zeros(0, np.int64)
    carry_b = np.zeros(0, np.int64)
    summary = StreamSummary() if summary is None else summary
    seen = False
    for chunk in chunks:
        if not seen:
            for ch in (ch_a, ch_b):
                if int(ch) not in chunk.channel_ids:
                    raise UnknownChannelError(f"channel {ch} not declared in stream")
            seen = True
        summary.duration_ps = max(summary.duration_ps, chunk.duration_ps)
        for ch, n in chunk.counts.items():
            summary.counts[ch] = summary.counts.get(ch, 0) + n
        if len(chunk) == 0:
            continue
        new_a = chunk.channel(ch_a)
        new_b = new_a if same else chunk.channel(ch_b)
        all_a = np.concatenate([carry_a, new_a])
        all_b = all_a if same else np.concatenate([carry_b, new_b])
        counts += pair_counts(all_a, all_b, width, max_tau, same)
        counts -= pair_counts(carry_a, carry_a if same else carry_b, width, max_tau, same)
        horizon = int(chunk.timestamps[-1]) - reach
        carry_a = all_a[np.searchsorted(all_a, horizon):]
        carry_b = carry_a if same else all_b[np.searchsorted(all_b, horizon):]
    if not seen:
        raise EmptyChannelError("no chunks supplied")
    for ch in (ch_a, ch_b):
        if summary.counts.get(int(ch), 0) == 0:
            raise EmptyChannelError(f"channel {ch} has no events")
    return CorrelationHistogram(width, _centers(width, max_tau), counts)


def _require_raw(hist):
    if hist.normalization != "raw":
        raise ValidationError("normalization", "input histogram must be raw", hist.normalization)


def normalize_cw(hist: CorrelationHistogram, rate_a_hz, rate_b_hz,
                 duration_s) -> CorrelationHistogram:
    """Divide by the uncorrelated (Poisson) coincidence level
    ``rate_a * rate_b * duration * bin_width``."""
    _require_raw(hist)
    for name, value in (("rate_a_hz", rate_a_hz), ("rate_b_hz", rate_b_hz),
                        ("duration_s", duration_s)):
        if not value > 0:
            raise ZeroRateError(f"{name} must be > 0, got {value}")
    constant = rate_a_hz * rate_b_hz * duration_s * hist.bin_width_ps * 1e-12
    return CorrelationHistogram(hist.bin_width_ps, hist.tau_ps, hist.counts,
                                hist.counts / constant, "cw-poisson", constant)


def normalize_stream_cw(hist, stream: TimeTagStream | StreamSummary, ch_a, ch_b):
    """:func:`normalize_cw` with rates and duration taken from the stream."""
    return normalize_cw(hist, stream.rate_hz(ch_a), stream.rate_hz(ch_b), stream.duration_s)


def side_peak_constant(hist: CorrelationHistogram, period_ps, min_order=2):
    """Mean raw area of the period clusters ``k * T`` with ``|k| >= min_order``.

    Each cluster spans ``[kT - T/2, kT + T/2)``; only clusters lying fully
    inside the histogram are used.  Falls back to ``|k| = 1`` when no
    farther cluster fits.
    """
    if not period_ps > 0:
        raise ValidationError("period_ps", "must be > 0", period_ps)
    lo = hist.tau_ps[0] - hist.bin_width_ps / 2
    hi = hist.tau_ps[-1] + hist.bin_width_ps / 2
    k_max = int(np.floor((hi - period_ps / 2) / period_ps + 1e-9))
    k_max = min(k_max, int(np.floor((-lo - period_ps / 2) / period_ps + 1e-9)))
    if k_max < 1:
        raise WindowOutOfRangeError("histogram too short to hold one side peak cluster")
    orders = [k for k in range(min(min_order, k_max), k_max + 1)]
    areas = []
    for k in orders:
        for sign in (-1, 1):
            c = sign * k * period_ps
            sel = (hist.tau_ps >= c - period_ps / 2) & (hist.tau_ps < c + period_ps / 2)
            areas.append(hist.counts[sel].sum())
    return float(np.mean(areas))


def normalize_pulsed(hist: CorrelationHistogram, period_ps, min_order=2) -> CorrelationHistogram:
    """Divide by the mean far side-peak area (tag ``pulsed-sidepeak``)."""
    _require_raw(hist)
    constant = side_peak_constant(hist, period_ps, min_order)
    if constant <= 0:
        raise ZeroRateError("side peaks are empty")
    return CorrelationHistogram(hist.bin_width_ps, hist.tau_ps, hist.counts,
                                hist.counts / constant, "pulsed-sidepeak", constant)


def peak_areas(hist: CorrelationHistogram, peak_positions_ps: Sequence[float],
               half_window_ps, normalized=False):
    """Sum of bins whose centers lie in ``[p - hw, p + hw)`` for each position.

    Returns ``[(position, area), ...]`` in the order given.  Raw counts are
    summed unless ``normalized`` is set.

    Raises
    ------
    OverlappingWindowsError
        Two windows share part of their extent.
    WindowOutOfRangeError
        A window reaches past the histogram.
    """
    if not half_window_ps > 0:
        raise ValidationError("half_window_ps", "must be > 0", half_window_ps)
    pos = np.asarray(peak_positions_ps, dtype=float)
    order = np.sort(pos)
    if np.any(np.diff(order) < 2 * half_window_ps):
        raise OverlappingWindowsError("peak windows overlap")
    lo = hist.tau_ps[0] - hist.bin_width_ps / 2
    hi = hist.tau_ps[-1] + hist.bin_width_ps / 2
    if np.any(pos - half_window_ps < lo) or np.any(pos + half_window_ps > hi):
        raise WindowOutOfRangeError("peak window outside histogram range")
    values = hist.values if normalized else hist.counts
    out = []
    for p in pos:
        sel = (hist.tau_ps >= p - half_window_ps) & (hist.tau_ps < p + half_window_ps)
        area = values[sel].sum()
        out.append((float(p), float(area) if normalized else int(area)))
    return out


def pulsed_peak_table(hist: CorrelationHistogram, period_ps, n_side=3, half_window_ps=None):
    """Areas of the center peak and the ``±k T`` side peaks, ``k=1..n_side``."""
    hw = period_ps / 2 if half_window_ps is None else half_window_ps
    positions = [0.0] + [s * k * period_ps for k in range(1, n_side + 1) for s in (-1, 1)]
    return peak_areas(hist, positions, hw)


__all__ = [
    "cross_correlate", "correlate_chunks", "pair_counts", "StreamSummary",
    "normalize_cw", "normalize_stream_cw", "normalize_pulsed", "side_peak_constant",
    "peak_areas", "pulsed_peak_table",
]
