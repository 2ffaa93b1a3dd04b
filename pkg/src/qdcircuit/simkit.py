"""
Monte Carlo time-tag generation for HBT, Mach-Zehnder HOM and on-chip MMI
topologies, plus pulsed fluorescence-decay traces.

Emitter model
-------------
CW: a two-level renewal process.  The emitter waits an exponential time
(pump rate ``W``) in the ground state, is excited, and emits after an
exponential delay with mean ``lifetime_ns``.  The resulting stream has
``g2(t) = 1 - exp(-|t| (W + 1/tau))``, i.e. antibunching with the radiative
time for ``W*tau << 1``.

Pulsed: each excitation slot is excited with probability ``P`` and emits one
photon after an exponential delay.  For ``hom-mzi`` every repetition period
holds two slots separated by the MZI delay (double-pulse excitation).

In both cases an excitation yields a second, independent photon with
probability ``multiphoton_prob`` (never three).

Acquisitions run in fixed time windows with seeds spawned from the config
seed, so output depends only on the config; :func:`iter_chunks` yields the
stream as time-ordered chunks without materializing it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, ValidationError
from .types import (CorrelationHistogram, DetectorParams, EmitterParams, PulseTrain,
                    SplitterParams, TimeTagStream)

TOPOLOGIES = ("hbt", "hom-mzi", "mmi-hbt")
POLARIZATIONS = ("parallel", "orthogonal")
CHANNELS = (1, 2)
PS_PER_S = 1e12
PS_PER_NS = 1e3

# photons per simulation window; bounds memory, fixed so output is config-only
_PHOTONS_PER_WINDOW = 2_000_000
# interference candidates separated by more than this many coherence times are ignored
_INTERFERENCE_REACH = 8.0


class MissingDelayError(ConfigError):
    kind = "missing-delay"


@dataclass(frozen=True)
class SimConfig:
    """Simulation configuration.

    ``duration_s`` sets the CW acquisition time; pulsed acquisitions run for
    exactly ``pulsing.n_pulses`` repetition periods.  ``hom_visibility`` is
    the intrinsic two-photon overlap (independent of ``coherence_ns``).
    ``background_rate_hz`` is the detected-equivalent rate of uncorrelated
    photons entering the on-chip splitter (``mmi-hbt`` only).
    ``mzi_delay_ns`` gives the interferometer delay for CW ``hom-mzi``;
    pulsed runs take it from ``pulsing``.
    """

    topology: str
    emitter: EmitterParams
    duration_s: float = 1.0
    seed: int = 0
    pulsing: Optional[PulseTrain] = None
    splitters: SplitterParams = field(default_factory=SplitterParams)
    detectors: tuple = (DetectorParams(), DetectorParams())
    polarization: str = "orthogonal"
    hom_visibility: float = 1.0
    background_rate_hz: float = 0.0
    mzi_delay_ns: Optional[float] = None

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if not isinstance(self.emitter, EmitterParams):
            raise ConfigError("emitter must be EmitterParams")
        if not (np.isfinite(self.duration_s) and self.duration_s > 0):
            raise ConfigError(f"duration_s must be > 0, got {self.duration_s}")
        if not (int(self.seed) == self.seed and 0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be an integer in [0, 2**64)")
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if len(self.detectors) != 2 or not all(isinstance(d, DetectorParams) for d in self.detectors):
            raise ConfigError("detectors must be two DetectorParams (channels 1 and 2)")
        if self.polarization not in POLARIZATIONS:
            raise ConfigError(f"polarization must be one of {POLARIZATIONS}")
        if not 0 <= self.hom_visibility <= 1:
            raise ConfigError("hom_visibility must lie in [0, 1]")
        if not self.background_rate_hz >= 0:
            raise ConfigError("background_rate_hz must be >= 0")
        if self.mzi_delay_ns is not None and not self.mzi_delay_ns > 0:
            raise ConfigError("mzi_delay_ns must be > 0")
        if self.topology == "hom-mzi" and self.delay_ns is None:
            raise MissingDelayError("hom-mzi needs an MZI delay (pulsing.mzi_delay_ns or mzi_delay_ns)")
        if self.topology == "hbt" and self.background_rate_hz > 0:
            raise ConfigError("background_rate_hz applies to the mmi-hbt topology only")

    @property
    def pulsed(self):
        return self.pulsing is not None

    @property
    def delay_ns(self):
        if self.pulsing is not None:
            return self.pulsing.mzi_delay_ns
        return self.mzi_delay_ns

    @property
    def acquisition_ps(self):
        if self.pulsed:
            return int(round(self.pulsing.n_pulses * self.pulsing.rep_period_ns * PS_PER_NS))
        return int(round(self.duration_s * PS_PER_S))


@dataclass
class SimStats:
    """Bookkeeping of one simulation run."""

    emitted_photons: int = 0
    background_photons: int = 0
    detected: dict = field(default_factory=lambda: {c: 0 for c in CHANNELS})
    dark_counts: dict = field(default_factory=lambda: {c: 0 for c in CHANNELS})
    dead_time_losses: dict = field(default_factory=lambda: {c: 0 for c in CHANNELS})


# ---------------------------------------------------------------------------
# source-purity maps


def pulsed_source_g2(multiphoton_prob, mean_photons_per_slot):
    """Pulsed-HBT ``g2(0)`` of the emitter model.

    ``mean_photons_per_slot`` is ``P*(1+p_m)``, the mean number of emitted
    photons per excitation slot.  Center/side area ratio is
    ``2 p_m / (P (1 + p_m)^2)``.
    """
    p = multiphoton_prob
    beta = mean_photons_per_slot
    return 2 * p / (beta * (1 + p))


def pulsed_multiphoton_prob(g2, mean_photons_per_slot):
    """Inverse of :func:`pulsed_source_g2`."""
    gb = g2 * mean_photons_per_slot
    if not 0 <= gb < 2:
        raise ConfigError("g2 * photons per slot must lie in [0, 2)")
    return gb / (2 - gb)


def cw_source_g2(multiphoton_prob, lifetime_ns, photon_rate_hz):
    """Leading-order CW ``g2(0)`` of the emitter model.

    Pairs from one excitation land within ``lifetime_ns`` of each other, so
    their weight relative to the Poisson level grows as ``1/(R tau)``.
    """
    p = multiphoton_prob
    r_tau = photon_rate_hz * lifetime_ns * 1e-9
    return (p / r_tau + 2 * p + p * p) / (1 + p) ** 2


def cw_multiphoton_prob(g2, lifetime_ns, photon_rate_hz):
    """Inverse of :func:`cw_source_g2` on ``p_m in [0, 1)``."""
    if g2 <= 0:
        return 0.0
    hi = 1 - 1e-12
    if cw_source_g2(hi, lifetime_ns, photon_rate_hz) < g2:
        raise ConfigError("requested g2 not reachable with p_m < 1")
    return brentq(lambda p: cw_source_g2(p, lifetime_ns, photon_rate_hz) - g2, 0.0, hi,
                  xtol=1e-15, rtol=1e-12)


def background_rate_for_fraction(signal_rate_hz, rho):
    """Background rate giving signal fraction ``rho = S/(S+B)``."""
    if not 0 < rho <= 1:
        raise ConfigError("rho must lie in (0, 1]")
    return signal_rate_hz * (1 - rho) / rho


def signal_fraction(cfg: SimConfig):
    b = cfg.emitter.brightness
    bg = cfg.background_rate_hz
    if cfg.pulsed:
        bg = bg * cfg.pulsing.rep_period_ns * 1e-9
    return b / (b + bg)


# ---------------------------------------------------------------------------
# plan


def _route_probability_ch1(cfg):
    s = cfg.splitters
    if cfg.topology == "hbt":
        return 0.5
    if cfg.topology == "mmi-hbt":
        return s.mmi_ratio
    return s.t1 * s.t2 + s.r1 * s.r2


def effective_efficiency(cfg):
    """Probability that an emitted photon is detected on any channel."""
    p1 = _route_probability_ch1(cfg)
    e1, e2 = (d.efficiency for d in cfg.detectors)
    return p1 * e1 + (1 - p1) * e2


@dataclass(frozen=True)
class _Plan:
    tau_ps: float
    p_m: float
    pump_per_ps: float
    exc_prob: float
    slot_offsets_ps: tuple
    period_ps: float
    window_ps: float
    n_windows: int
    periods_per_window: int
    background_per_ps: float
    acquisition_ps: int


def _plan(cfg: SimConfig) -> _Plan:
    em = cfg.emitter
    tau_ps = em.lifetime_ns * PS_PER_NS
    p = em.multiphoton_prob
    eta = effective_efficiency(cfg)
    bg_per_ps = cfg.background_rate_hz / eta / PS_PER_S if cfg.topology == "mmi-hbt" else 0.0
    acq = cfg.acquisition_ps
    if cfg.pulsed:
        period = cfg.pulsing.rep_period_ns * PS_PER_NS
        slots = (0.0,) if cfg.topology != "hom-mzi" else (0.0, cfg.pulsing.mzi_delay_ns * PS_PER_NS)
        prob = em.brightness / (eta * (1 + p))
        if prob > 1:
            raise ConfigError(
                f"brightness {em.brightness} photons/pulse needs excitation probability {prob:.3g} > 1")
        per_period = len(slots) * prob * (1 + p) + bg_per_ps * period
        ppw = max(1, int(_PHOTONS_PER_WINDOW / max(per_period, 1e-12)))
        ppw = min(ppw, cfg.pulsing.n_pulses, 1 << 22)
        n_windows = math.ceil(cfg.pulsing.n_pulses / ppw)
        return _Plan(tau_ps, p, 0.0, prob, slots, period, ppw * period, n_windows, ppw,
                     bg_per_ps, acq)
    rate = em.brightness / (eta * (1 + p))  # primary photons per second
    inv_pump_s = 1.0 / rate - em.lifetime_ns * 1e-9
    if inv_pump_s <= 0:
        raise ConfigError(
            f"brightness {em.brightness} counts/s exceeds the saturated emission rate")
    pump_per_ps = 1.0 / (inv_pump_s * PS_PER_S)
    total_per_ps = rate * (1 + p) / PS_PER_S + bg_per_ps
    window = min(float(acq), max(_PHOTONS_PER_WINDOW / total_per_ps, 1e6))
    n_windows = math.ceil(acq / window)
    return _Plan(tau_ps, p, pump_per_ps, 1.0, (), 0.0, window, n_windows, 0, bg_per_ps, acq)


def emitter_photon_rate_hz(cfg: SimConfig):
    """Emitted primary photon rate (CW) used by :func:`cw_source_g2`."""
    if cfg.pulsed:
        raise ConfigError("emitter_photon_rate_hz applies to CW configs")
    return cfg.emitter.brightness / (effective_efficiency(cfg) * (1 + cfg.emitter.multiphoton_prob))


# ---------------------------------------------------------------------------
# photon generation


def _cw_emissions(rng, plan: _Plan, w0, w1):
    """Renewal-process primaries and same-excitation secondaries in [w0, w1)."""
    mean_cycle = 1.0 / plan.pump_per_ps + plan.tau_ps
    span = w1 - w0
    exc_parts, em_parts = [], []
    start = w0
    while True:
        n = int(span / mean_cycle * 1.02 + 10 * math.sqrt(span / mean_cycle + 1) + 16)
        wait = rng.exponential(1.0 / plan.pump_per_ps, n)
        delay = rng.exponential(plan.tau_ps, n)
        emission = start + np.cumsum(wait + delay)
        excitation = emission - delay
        inside = excitation < w1
        exc_parts.append(excitation[inside])
        em_parts.append(emission[inside])
        if not inside[-1]:
            break
        start = emission[-1]
        span = w1 - start
    excitation = np.concatenate(exc_parts)
    primaries = np.concatenate(em_parts)
    return _add_secondaries(rng, plan, excitation, primaries)


def _add_secondaries(rng, plan, excitation, primaries):
    if plan.p_m > 0:
        extra = rng.random(excitation.size) < plan.p_m
        secondaries = excitation[extra] + rng.exponential(plan.tau_ps, int(extra.sum()))
        photons = np.concatenate([primaries, secondaries])
        photons.sort(kind="stable")
        return photons
    return primaries


def _pulsed_emissions(rng, plan: _Plan, k0, k1):
    periods = np.arange(k0, k1, dtype=np.float64) * plan.period_ps
    slots = (periods[:, None] + np.asarray(plan.slot_offsets_ps)[None, :]).ravel()
    excited = slots[rng.random(slots.size) < plan.exc_prob]
    primaries = excited + rng.exponential(plan.tau_ps, excited.size)
    order = np.argsort(primaries, kind="stable")
    return _add_secondaries(rng, plan, excited[order], primaries[order])


def _background(rng, plan: _Plan, w0, w1):
    if plan.background_per_ps <= 0:
        return np.zeros(0)
    n = rng.poisson(plan.background_per_ps * (w1 - w0))
    t = w0 + rng.random(n) * (w1 - w0)
    t.sort()
    return t


def _interfere(rng, arrival, is_long, to_ch1, visibility, tau_c_ps):
    """Pair-level two-photon interference at the second splitter.

    A short-arm/long-arm pair that would leave by different ports is sent
    out of a common port with probability ``V exp(-2|dt|/tau_c)``, which
    multiplies the cross-port coincidence probability by
    ``1 - V exp(-2|dt|/tau_c)``.
    """
    reach = _INTERFERENCE_REACH * tau_c_ps
    k = 1
    while k < arrival.size:
        dt = arrival[k:] - arrival[:-k]
        cand = np.flatnonzero(dt < reach)
        if cand.size == 0:
            break
        i, j = cand, cand + k
        sel = (is_long[i] != is_long[j]) & (to_ch1[i] != to_ch1[j])
        i, j, d = i[sel], j[sel], dt[cand][sel]
        hit = rng.random(i.size) < visibility * np.exp(-2.0 * d / tau_c_ps)
        common = rng.random(int(hit.sum())) < 0.5
        to_ch1[i[hit]] = common
        to_ch1[j[hit]] = common
        k += 1


def _route(rng, cfg: SimConfig, photons):
    """Arrival times at the detectors and the channel-1 mask."""
    if cfg.topology == "hom-mzi":
        s = cfg.splitters
        is_long = rng.random(photons.size) < s.r1
        arrival = photons + is_long * (cfg.delay_ns * PS_PER_NS)
        order = np.argsort(arrival, kind="stable")
        arrival, is_long = arrival[order], is_long[order]
        transmitted = rng.random(arrival.size) < s.t2
        to_ch1 = np.where(is_long, ~transmitted, transmitted)
        if cfg.polarization == "parallel" and cfg.hom_visibility > 0:
            _interfere(rng, arrival, is_long, to_ch1, cfg.hom_visibility,
                       cfg.emitter.coherence_ns * PS_PER_NS)
        return arrival, to_ch1
    return photons, rng.random(photons.size) < _route_probability_ch1(cfg)


def _detect(rng, det: DetectorParams, arrival, w0, w1):
    """Efficiency thinning, dark counts and jitter for one channel."""
    kept = arrival if det.efficiency >= 1 else arrival[rng.random(arrival.size) < det.efficiency]
    n_dark = rng.poisson(det.dark_rate_hz / PS_PER_S * (w1 - w0)) if det.dark_rate_hz > 0 else 0
    dark = w0 + rng.random(n_dark) * (w1 - w0)
    t = np.concatenate([kept, dark])
    if det.jitter_fwhm_ps > 0:
        t = t + rng.normal(0.0, det.jitter_sigma_ps, t.size)
    return np.rint(t).astype(np.int64), t.size - n_dark, n_dark


def _window_events(cfg: SimConfig, plan: _Plan, k: int, seed_seq):
    """Jittered detection events of window ``k`` (unsorted across channels)."""
    rng = np.random.default_rng(seed_seq)
    if cfg.pulsed:
        k0 = k * plan.periods_per_window
        k1 = min(k0 + plan.periods_per_window, cfg.pulsing.n_pulses)
        w0, w1 = k0 * plan.period_ps, k1 * plan.period_ps
        photons = _pulsed_emissions(rng, plan, k0, k1)
    else:
        w0 = k * plan.window_ps
        w1 = min(w0 + plan.window_ps, float(plan.acquisition_ps))
        photons = _cw_emissions(rng, plan, w0, w1)
    n_emitted = photons.size
    bg = _background(rng, plan, w0, w1)
    if bg.size:
        photons = np.concatenate([photons, bg])
        photons.sort(kind="stable")
    arrival, to_ch1 = _route(rng, cfg, photons)
    chans, times, info = [], [], {}
    for ch, det, mask in ((1, cfg.detectors[0], to_ch1), (2, cfg.detectors[1], ~to_ch1)):
        t, n_det, n_dark = _detect(rng, det, arrival[mask], w0, w1)
        times.append(t)
        chans.append(np.full(t.size, ch, np.uint8))
        info[ch] = (n_det, n_dark)
    return np.concatenate(chans), np.concatenate(times), n_emitted, bg.size, info


def _dead_time_filter(ts, dead_ps, last_accepted):
    """Non-paralyzable dead time on one channel's sorted timestamps."""
    keep = np.ones(ts.size, dtype=bool)
    if dead_ps <= 0 or ts.size == 0:
        return keep, last_accepted
    gaps = np.diff(ts, prepend=last_accepted)
    if np.all(gaps >= dead_ps):
        return keep, int(ts[-1])
    last = last_accepted
    for idx in range(ts.size):
        if ts[idx] - last < dead_ps:
            keep[idx] = False
        else:
            last = ts[idx]
    return keep, int(last)


def _windows(cfg, plan, workers):
    seeds = np.random.SeedSequence(int(cfg.seed)).spawn(plan.n_windows)
    if workers <= 1:
        for k in range(plan.n_windows):
            yield _window_events(cfg, plan, k, seeds[k])
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = []
        k_next = 0
        while k_next < plan.n_windows or pending:
            while k_next < plan.n_windows and len(pending) < workers:
                pending.append(pool.submit(_window_events, cfg, plan, k_next, seeds[k_next]))
                k_next += 1
            yield pending.pop(0).result()


def iter_chunks(cfg: SimConfig, stats: Optional[SimStats] = None,
                workers: int = 1) -> Iterator[TimeTagStream]:
    """Yield the simulated stream as mutually time-ordered chunks.

    Concatenating the chunks gives exactly :func:`simulate`'s output for any
    ``workers``.
    """
    plan = _plan(cfg)
    stats = SimStats() if stats is None else stats
    sigma = max(d.jitter_sigma_ps for d in cfg.detectors)
    guard = int(math.ceil(12 * sigma)) + 1
    acq = plan.acquisition_ps
    dead_ps = {ch: d.dead_time_ns * PS_PER_NS for ch, d in zip(CHANNELS, cfg.detectors)}
    last_accepted = {ch: -(1 << 62) for ch in CHANNELS}
    held_ch = np.zeros(0, np.uint8)
    held_t = np.zeros(0, np.int64)
    last_emitted = -1
    windows = _windows(cfg, plan, workers)
    for k in range(plan.n_windows + 1):
        if k < plan.n_windows:
            ch, t, n_em, n_bg, info = next(windows)
            stats.emitted_photons += n_em
            stats.background_photons += n_bg
            for c in CHANNELS:
                stats.dark_counts[c] += info[c][1]
            ch = np.concatenate([held_ch, ch])
            t = np.concatenate([held_t, t])
            if cfg.pulsed:
                horizon = min((k + 1) * plan.periods_per_window, cfg.pulsing.n_pulses) * plan.period_ps
            else:
                horizon = min((k + 1) * plan.window_ps, float(acq))
            cut = horizon - guard if k + 1 < plan.n_windows else np.inf
        else:
            ch, t, cut = held_ch, held_t, np.inf
        order = np.argsort(t, kind="stable")
        ch, t = ch[order], t[order]
        split = int(np.searchsorted(t, cut, side="left")) if np.isfinite(cut) else t.size
        held_ch, held_t = ch[split:], t[split:]
        ch, t = ch[:split], t[:split]
        if t.size and (t[0] < 0 or t[-1] > acq):
            valid = (t >= 0) & (t <= acq)
            ch, t = ch[valid], t[valid]
        if t.size and t[0] < last_emitted:
            t = np.maximum(t, last_emitted)
        if any(dead_ps.values()):
            keep = np.ones(t.size, dtype=bool)
            for c in CHANNELS:
                mask = ch == c
                kc, last_accepted[c] = _dead_time_filter(t[mask], dead_ps[c], last_accepted[c])
                stats.dead_time_losses[c] += int(np.count_nonzero(~kc))
                idx = np.flatnonzero(mask)
                keep[idx[~kc]] = False
            ch, t = ch[keep], t[keep]
        per_channel = np.bincount(ch, minlength=max(CHANNELS) + 1)
        for c in CHANNELS:
            stats.detected[c] += int(per_channel[c])
        if t.size:
            last_emitted = int(t[-1])
        if k == plan.n_windows and t.size == 0:
            break
        yield TimeTagStream(ch, t, acq, CHANNELS)


def simulate(cfg: SimConfig, workers: int = 1, with_stats: bool = False):
    """Simulate the configured topology; returns the full stream (and stats)."""
    stats = SimStats()
    stream = TimeTagStream.concatenate(list(iter_chunks(cfg, stats, workers)), cfg.acquisition_ps)
    return (stream, stats) if with_stats else stream


def _require_topology(cfg, topology):
    if not isinstance(cfg, SimConfig):
        raise ConfigError("expected a SimConfig")
    if cfg.topology != topology:
        raise ConfigError(f"config topology is {cfg.topology!r}, expected {topology!r}")


def simulate_hbt(cfg: SimConfig, workers: int = 1) -> TimeTagStream:
    """Two-detector HBT behind a 50/50 splitter, CW or pulsed."""
    _require_topology(cfg, "hbt")
    return simulate(cfg, workers)


def simulate_hom_mzi(cfg: SimConfig, workers: int = 1) -> TimeTagStream:
    """Unbalanced Mach-Zehnder HOM.  Channel 1 is the port that receives the
    transmitted short-arm light, so ``+delay`` coincidences carry ``t2**2``."""
    _require_topology(cfg, "hom-mzi")
    return simulate(cfg, workers)


def simulate_mmi_hbt(cfg: SimConfig, workers: int = 1) -> TimeTagStream:
    """Single emitter plus Poissonian background through the on-chip MMI."""
    _require_topology(cfg, "mmi-hbt")
    return simulate(cfg, workers)


def _default_decay_bin(period_ps):
    for width in range(16, 0, -1):
        if period_ps % width == 0:
            return width
    return 1


def simulate_decay_trace(emitter: EmitterParams, pulsing: PulseTrain, irf_fwhm_ps=0.0,
                         n_counts=100_000, seed=0, bin_width_ps=None,
                         offset_ps=None) -> CorrelationHistogram:
    """Time-resolved decay histogram folded into one repetition period.

    Each count is an exponential delay (mean ``lifetime_ns``) plus Gaussian
    instrument response, shifted by ``offset_ps`` (default three IRF FWHM)
    and folded into ``[0, T_rep)``.  Bin centers are ``(k + 1/2) * width``.
    """
    if int(n_counts) != n_counts or n_counts < 1000:
        raise ConfigError("n_counts must be an integer >= 1000")
    if irf_fwhm_ps < 0:
        raise ConfigError("irf_fwhm_ps must be >= 0")
    period = int(round(pulsing.rep_period_ns * PS_PER_NS))
    width = _default_decay_bin(period) if bin_width_ps is None else int(bin_width_ps)
    if width < 1 or period % width:
        raise ConfigError(f"bin width {width} ps must divide the period {period} ps")
    if offset_ps is None:
        offset_ps = 3 * irf_fwhm_ps
    rng = np.random.default_rng(int(seed))
    t = rng.exponential(emitter.lifetime_ns * PS_PER_NS, int(n_counts)) + offset_ps
    if irf_fwhm_ps > 0:
        t += rng.normal(0.0, irf_fwhm_ps / 2.355, t.size)
    folded = np.mod(t, period)
    n_bins = period // width
    idx = np.minimum((folded // width).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    centers = (np.arange(n_bins) + 0.5) * width
    return CorrelationHistogram(width, centers, counts)


__all__ = [
    "SimConfig", "SimStats", "TOPOLOGIES", "CHANNELS", "MissingDelayError",
    "simulate", "simulate_hbt", "simulate_hom_mzi", "simulate_mmi_hbt", "iter_chunks",
    "simulate_decay_trace", "pulsed_source_g2", "pulsed_multiphoton_prob",
    "cw_source_g2", "cw_multiphoton_prob", "background_rate_for_fraction",
    "signal_fraction", "effective_efficiency", "emitter_photon_rate_hz",
]
