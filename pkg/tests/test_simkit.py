import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binomtest

from qdcircuit import analyses, correlator, simkit
from qdcircuit.errors import ConfigError
from qdcircuit.simkit import MissingDelayError, SimConfig, SimStats
from qdcircuit.types import DetectorParams, EmitterParams, PulseTrain, SplitterParams

EM = EmitterParams(lifetime_ns=1.0, coherence_ns=0.4, brightness=2e5)


def _cfg(**kw):
    base = dict(topology="hbt", emitter=EM, duration_s=0.05, seed=3)
    base.update(kw)
    return SimConfig(**base)


def test_same_seed_bit_identical():
    a = simkit.simulate(_cfg())
    b = simkit.simulate(_cfg())
    assert a == b and len(a) > 0
    assert simkit.simulate(_cfg(seed=4)) != a


@pytest.mark.parametrize("topology,extra", [
    ("hbt", {}),
    ("hom-mzi", dict(mzi_delay_ns=4.0, polarization="parallel", hom_visibility=0.9)),
    ("mmi-hbt", dict(background_rate_hz=5e4)),
])
def test_worker_count_does_not_change_output(topology, extra):
    cfg = _cfg(topology=topology, emitter=EmitterParams(1.0, 0.4, 0.02, 4e6),
               duration_s=1.2, **extra)
    assert simkit.simulate(cfg, workers=1) == simkit.simulate(cfg, workers=3)


def test_chunks_concatenate_to_stream():
    cfg = _cfg(emitter=EmitterParams(1.0, 0.4, 0.0, 4e6), duration_s=1.5,
               detectors=(DetectorParams(50.0), DetectorParams(450.0)))
    chunks = list(simkit.iter_chunks(cfg))
    assert len(chunks) > 1
    for prev, nxt in zip(chunks, chunks[1:]):
        if len(prev) and len(nxt):
            assert prev.timestamps[-1] <= nxt.timestamps[0]
    stream = simkit.simulate(cfg)
    assert np.array_equal(np.concatenate([c.timestamps for c in chunks]), stream.timestamps)


@pytest.mark.parametrize("topology,extra", [
    ("hbt", {}),
    ("hom-mzi", dict(mzi_delay_ns=4.0, polarization="parallel")),
    ("hbt", dict(pulsing=PulseTrain(12.5, 4.0, 20000), emitter=EmitterParams(1.0, 0.4, 0.1, 0.3))),
])
def test_lossless_photon_conservation(topology, extra):
    cfg = _cfg(topology=topology, **extra)
    stream, stats = simkit.simulate(cfg, with_stats=True)
    # duration cut can drop the last few photons emitted after the window
    lost = stats.emitted_photons - len(stream)
    assert 0 <= lost <= 10
    assert sum(stats.detected.values()) == len(stream)


def test_pulsed_conservation_exact_with_margin():
    em = EmitterParams(0.05, 0.04, 0.1, 0.3)
    cfg = _cfg(pulsing=PulseTrain(12.5, 4.0, 5000), emitter=em)
    stream, stats = simkit.simulate(cfg, with_stats=True)
    # lifetime 50 ps vs a 12.5 ns period: nothing leaves the acquisition
    assert stats.emitted_photons == len(stream)


def test_routing_matches_configured_ratio():
    cfg = _cfg(topology="mmi-hbt", splitters=SplitterParams(mmi_ratio=0.507), duration_s=0.5)
    s = simkit.simulate(cfg)
    n1, n = s.counts[1], len(s)
    assert binomtest(n1, n, 0.507).pvalue > 1e-3


def test_hom_routing_long_arm_fraction():
    sp = SplitterParams(0.5, 0.5, 0.53, 0.47)
    cfg = _cfg(topology="hom-mzi", splitters=sp, mzi_delay_ns=4.0)
    s = simkit.simulate(cfg)
    p1 = sp.t1 * sp.t2 + sp.r1 * sp.r2
    assert binomtest(s.counts[1], len(s), p1).pvalue > 1e-3


def test_efficiency_thinning_and_dark_counts():
    det = DetectorParams(efficiency=0.25, dark_rate_hz=1e4)
    cfg = _cfg(detectors=(det, det), duration_s=0.5)
    stream, stats = simkit.simulate(cfg, with_stats=True)
    # brightness is the detected rate, dark counts come on top
    expected = 2e5 * 0.5 + 2 * 1e4 * 0.5
    assert len(stream) == pytest.approx(expected, rel=0.02)
    assert sum(stats.dark_counts.values()) == pytest.approx(1e4, rel=0.05)


def test_dead_time_enforced_per_channel():
    det = DetectorParams(dead_time_ns=50.0)
    cfg = _cfg(emitter=EmitterParams(1.0, 0.4, 0.0, 4e6), detectors=(det, det), duration_s=0.2)
    stream, stats = simkit.simulate(cfg, with_stats=True)
    for c in (1, 2):
        assert np.diff(stream.channel(c)).min() >= 50_000
        assert stats.dead_time_losses[c] > 0


def test_no_same_excitation_pairs_without_multiphoton():
    # p_m = 0 with seconds-long lifetime spacing: each excitation gives one tag
    em = EmitterParams(0.5, 0.4, 0.0, 0.2)
    cfg = _cfg(pulsing=PulseTrain(12.5, 4.0, 100_000), emitter=em)
    h = correlator.cross_correlate(simkit.simulate(cfg), 1, 2, 500, 25_000)
    center = correlator.peak_areas(h, [0.0], 6000)[0][1]
    assert center == 0


def test_pulsed_purity_map_round_trip():
    g2 = simkit.pulsed_source_g2(simkit.pulsed_multiphoton_prob(0.05, 0.3), 0.3)
    assert g2 == pytest.approx(0.05, abs=1e-12)
    p = simkit.cw_multiphoton_prob(0.05, 1.0, 1e6)
    assert simkit.cw_source_g2(p, 1.0, 1e6) == pytest.approx(0.05, rel=1e-9)


def test_background_fraction_helper():
    bg = simkit.background_rate_for_fraction(2e5, 0.8)
    assert bg == pytest.approx(5e4)
    cfg = _cfg(topology="mmi-hbt", background_rate_hz=bg)
    assert simkit.signal_fraction(cfg) == pytest.approx(0.8)


def test_decay_trace_conserves_counts():
    h = simkit.simulate_decay_trace(EmitterParams(1.0, 0.4), PulseTrain(12.5, 4.0), n_counts=1000)
    assert int(h.counts.sum()) == 1000
    assert h.bin_width_ps == 10


def test_decay_trace_rejects_small_n():
    with pytest.raises(ConfigError):
        simkit.simulate_decay_trace(EmitterParams(1.0, 0.4), PulseTrain(12.5, 4.0), n_counts=999)


@pytest.mark.parametrize("tau", [0.945, 1.41])
def test_decay_round_trip_lifetime(tau):
    h = simkit.simulate_decay_trace(EmitterParams(tau, 0.4), PulseTrain(12.5, 4.0),
                                    n_counts=2_000_000, seed=5)
    r = analyses.fit_lifetime(h)
    assert r["tau"] == pytest.approx(tau, rel=0.01)


def test_config_errors():
    with pytest.raises(ConfigError):
        _cfg(topology="sagnac")
    with pytest.raises(ConfigError):
        _cfg(duration_s=0.0)
    with pytest.raises(MissingDelayError):
        _cfg(topology="hom-mzi")
    with pytest.raises(ConfigError):
        _cfg(background_rate_hz=10.0)
    with pytest.raises(ConfigError):
        simkit.simulate(_cfg(emitter=EmitterParams(1.0, 0.4, 0.0, 2e9)))
    with pytest.raises(ConfigError):
        simkit.simulate_hom_mzi(_cfg())
    with pytest.raises(ConfigError):
        simkit.simulate(_cfg(pulsing=PulseTrain(12.5, 4.0, 10),
                             emitter=EmitterParams(1.0, 0.4, 0.0, 1.5)))


def test_orthogonal_hom_matches_model():
    em = EmitterParams(1.0, 0.4, 0.0, 2e6)
    cfg = SimConfig("hom-mzi", em, duration_s=20.0, seed=21, mzi_delay_ns=4.0)
    summary = correlator.StreamSummary()
    h = correlator.correlate_chunks(simkit.iter_chunks(cfg), 1, 2, 50, 20_000, summary)
    h = correlator.normalize_stream_cw(h, summary, 1, 2)
    from qdcircuit.analyses import models
    c = models.hom_cw_coefficients(0.5, 0.5, 0.5, 0.5)
    for t_ns in (0.0, 4.0, -4.0):
        sel = np.abs(h.tau_ns - t_ns) <= 0.5
        # window average beats down shot noise; compare with the same average of the model
        expect = models.hom_cw_perp(h.tau_ns[sel], (0.0, 1.0), c, 4.0).mean()
        assert h.values[sel].mean() == pytest.approx(expect, abs=0.02)
    far = np.abs(h.tau_ns) > 14
    assert h.values[far].mean() == pytest.approx(1.0, abs=0.01)


def test_parallel_perfect_interference_suppresses_zero():
    em = EmitterParams(1.0, 0.4, 0.0, 2e6)
    cfg = SimConfig("hom-mzi", em, duration_s=6.0, seed=22, mzi_delay_ns=4.0,
                    polarization="parallel", hom_visibility=1.0)
    summary = correlator.StreamSummary()
    h = correlator.correlate_chunks(simkit.iter_chunks(cfg), 1, 2, 20, 6000, summary)
    h = correlator.normalize_stream_cw(h, summary, 1, 2)
    assert h.values[h.bin_index(0.0)] == pytest.approx(0.0, abs=0.05)


def test_mmi_background_dilution():
    rho = 0.8
    em = EmitterParams(1.0, 0.4, 0.0, 2e6)
    bg = simkit.background_rate_for_fraction(em.brightness, rho)
    cfg = SimConfig("mmi-hbt", em, duration_s=10.0, seed=8, background_rate_hz=bg)
    summary = correlator.StreamSummary()
    h = correlator.correlate_chunks(simkit.iter_chunks(cfg), 1, 2, 50, 20_000, summary)
    r = analyses.fit_antibunching_cw(correlator.normalize_stream_cw(h, summary, 1, 2))
    assert r["A"] == pytest.approx(1 - rho ** 2, abs=0.03)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**63), st.floats(1e4, 1e6))
def test_stream_validity_property(seed, brightness):
    cfg = _cfg(emitter=EmitterParams(1.0, 0.4, 0.05, brightness), seed=seed, duration_s=0.01,
               detectors=(DetectorParams(450.0), DetectorParams(50.0, 0.5, 100.0, 22.0)))
    s = simkit.simulate(cfg)
    assert np.all(np.diff(s.timestamps) >= 0)
    assert s.timestamps.min(initial=0) >= 0 and s.timestamps.max(initial=0) <= s.duration_ps
