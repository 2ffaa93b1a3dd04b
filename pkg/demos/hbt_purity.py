"""
Single-photon purity from simulated HBT data, pulsed and CW.

A pulsed emitter with a small multi-photon probability is simulated, the
coincidence histogram is reduced to peak areas and g2(0) is read off as the
center area over the mean side area.  The CW half adds uncorrelated
background on the on-chip splitter and shows that the fitted dip depth
follows 1 - rho^2 for signal fraction rho.

Run:  python demos/hbt_purity.py [--pulses 2000000] [--seconds 10]
"""
import argparse

from qdcircuit import analyses, correlator, simkit
from qdcircuit.types import EmitterParams, PulseTrain


def pulsed(n_pulses, g2_target=0.05, photons_per_pulse=0.2):
    pm = simkit.pulsed_multiphoton_prob(g2_target, photons_per_pulse)
    cfg = simkit.SimConfig("hbt", EmitterParams(1.0, 0.4, pm, photons_per_pulse), seed=1,
                           pulsing=PulseTrain(12.5, 4.0, n_pulses))
    hist = correlator.correlate_chunks(simkit.iter_chunks(cfg), 1, 2, 100, 50_000)
    table = correlator.pulsed_peak_table(hist, 12_500, n_side=3)
    print("peak areas (delay ps, counts):")
    for pos, area in table:
        print(f"  {pos:9.0f}  {area:7d}")
    est = analyses.hbt_pulsed_g2(table)
    print(f"pulsed g2(0) = {est.value:.4f} +- {est.error:.4f}   (source value {g2_target})")


def cw_with_background(seconds, rho=0.8, brightness=2e6):
    bg = simkit.background_rate_for_fraction(brightness, rho)
    cfg = simkit.SimConfig("mmi-hbt", EmitterParams(1.0, 0.4, 0.0, brightness),
                           duration_s=seconds, seed=2, background_rate_hz=bg)
    summary = correlator.StreamSummary()
    raw = correlator.correlate_chunks(simkit.iter_chunks(cfg), 1, 2, 100, 20_000, summary)
    g2 = correlator.normalize_stream_cw(raw, summary, 1, 2)
    fit = analyses.fit_antibunching_cw(g2)
    print(f"CW fit: A = {fit['A']:.3f} +- {fit.error('A'):.3f}, "
          f"tau1 = {fit['tau1']:.3f} ns   (expected A = {1 - rho ** 2:.2f})")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--pulses", type=int, default=2_000_000)
    ap.add_argument("--seconds", type=float, default=10.0)
    args = ap.parse_args()
    pulsed(args.pulses)
    cw_with_background(args.seconds)
