"""
Fit models and their analytic Jacobians.

Every model is a pair ``value(x, p)`` / ``jacobian(x, p)`` with ``x`` the
independent variable (delays in ns, angles in degrees, ...) and ``p`` the
parameter vector.  :data:`MODELS` lists them for gradient checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


# -- CW antibunching ---------------------------------------------------------

def antibunching(t, p):
    """``g2(t) = 1 - (1 - A) exp(-|t| / tau1)``, ``p = (A, tau1)``."""
    a, tau = p
    return 1.0 - (1.0 - a) * np.exp(-np.abs(t) / tau)


def antibunching_jac(t, p):
    a, tau = p
    at = np.abs(t)
    e = np.exp(-at / tau)
    return np.column_stack([e, -(1.0 - a) * e * at / tau ** 2])


# -- CW HOM (unbalanced MZI) --------------------------------------------------

def hom_cw_coefficients(r1, t1, r2, t2):
    """Weights of ``g2(t)``, ``g2(t - dt)`` and ``g2(t + dt)`` in the
    orthogonal-polarization cross-correlation."""
    return (4 * (t1 ** 2 + r1 ** 2) * t2 * r2, 4 * t1 * r1 * t2 ** 2, 4 * t1 * r1 * r2 ** 2)


def hom_cw_parts(t, a, tau1, coeffs, delay):
    """``(G1, G2)``: same-arm and cross-arm parts of ``g2_perp``."""
    c0, c1, c2 = coeffs
    g1 = c0 * antibunching(t, (a, tau1))
    g2 = c1 * antibunching(t - delay, (a, tau1)) + c2 * antibunching(t + delay, (a, tau1))
    return g1, g2


def hom_cw_perp(t, p, coeffs, delay):
    """``g2_perp(t) = G1(t) + G2(t)``, ``p = (A, tau1)``."""
    g1, g2 = hom_cw_parts(t, p[0], p[1], coeffs, delay)
    return g1 + g2


def hom_cw_perp_jac(t, p, coeffs, delay):
    c0, c1, c2 = coeffs
    return (c0 * antibunching_jac(t, p) + c1 * antibunching_jac(t - delay, p)
            + c2 * antibunching_jac(t + delay, p))


def hom_cw_par(t, p, a, tau1, coeffs, delay):
    """``g2_par(t) = G1 + G2 [1 - V exp(-|2t/tau_c|)]``, ``p = (V, tau_c)``."""
    v, tau_c = p
    g1, g2 = hom_cw_parts(t, a, tau1, coeffs, delay)
    return g1 + g2 * (1.0 - v * np.exp(-2.0 * np.abs(t) / tau_c))


def hom_cw_par_jac(t, p, a, tau1, coeffs, delay):
    v, tau_c = p
    _, g2 = hom_cw_parts(t, a, tau1, coeffs, delay)
    at = np.abs(t)
    e = np.exp(-2.0 * at / tau_c)
    return np.column_stack([-g2 * e, -g2 * v * e * 2.0 * at / tau_c ** 2])


# -- pulsed HOM (Lorentzian peaks) ------------------------------------------

def lorentz(x, width):
    """Unit-height peak ``w^2 / (4 x^2 + w^2)``; integral ``pi w / 2``."""
    return width ** 2 / (4.0 * x ** 2 + width ** 2)


def lorentz_dwidth(x, width):
    d = 4.0 * x ** 2 + width ** 2
    return 8.0 * width * x ** 2 / d ** 2


HOM_PULSED_NAMES = ("A0", "A00", "A1", "A2", "A3", "A1p", "A2p", "A3p", "tau1", "tauc")


def hom_pulsed(t, p, positions, t0=0.0):
    """Peak model with ``p = (A0, A00, A1..A3, A1'..A3', tau1, tau_c)``.

    ``positions = (t1, t2, t3, t1', t2', t3')``.  With ``A00 = 0`` this is
    the orthogonal model; otherwise a coherence dip of width ``tau_c`` is
    carved out of the center peak.
    """
    a0, a00 = p[0], p[1]
    amps = p[2:8]
    tau1, tau_c = p[8], p[9]
    out = a0 * lorentz(t - t0, tau1) - a00 * lorentz(t - t0, tau_c)
    for amp, pos in zip(amps, positions):
        out = out + amp * lorentz(t - pos, tau1)
    return (2.0 / np.pi) * out


def perp_full(p):
    """Orthogonal vector ``(A0, A1..A3, A1'..A3', tau1)`` -> full vector with
    ``A00 = 0`` (``tau_c`` is then irrelevant and set to 1)."""
    return np.r_[p[0], 0.0, p[1:7], p[7], 1.0]


# columns of the full Jacobian that belong to the orthogonal parameters
PERP_COLUMNS = [0, 2, 3, 4, 5, 6, 7, 8]


def hom_pulsed_jac(t, p, positions, t0=0.0):
    a0, a00 = p[0], p[1]
    amps = p[2:8]
    tau1, tau_c = p[8], p[9]
    cols = [lorentz(t - t0, tau1), -lorentz(t - t0, tau_c)]
    dtau1 = a0 * lorentz_dwidth(t - t0, tau1)
    for amp, pos in zip(amps, positions):
        cols.append(lorentz(t - pos, tau1))
        dtau1 = dtau1 + amp * lorentz_dwidth(t - pos, tau1)
    cols.append(dtau1)
    cols.append(-a00 * lorentz_dwidth(t - t0, tau_c))
    return (2.0 / np.pi) * np.column_stack(cols)


# -- decay, polarization, power law -----------------------------------------

def decay(t, p, t_start=0.0):
    """``B + C exp(-(t - t_start) / tau)``, ``p = (B, C, tau)``."""
    b, c, tau = p
    return b + c * np.exp(-(t - t_start) / tau)


def decay_jac(t, p, t_start=0.0):
    b, c, tau = p
    e = np.exp(-(t - t_start) / tau)
    return np.column_stack([np.ones_like(t), e, c * e * (t - t_start) / tau ** 2])


def malus(theta_deg, p):
    """``offset + amplitude cos^2(theta - theta0)``, ``p = (amplitude, offset, theta0)``."""
    amp, off, th0 = p
    return off + amp * np.cos(np.deg2rad(theta_deg - th0)) ** 2


def malus_jac(theta_deg, p):
    amp, off, th0 = p
    phi = np.deg2rad(theta_deg - th0)
    # d/dtheta0 of cos^2(phi) = sin(2 phi) * pi/180
    return np.column_stack([np.cos(phi) ** 2, np.ones_like(phi),
                            amp * np.sin(2 * phi) * np.pi / 180.0])


def loglinear(logx, p):
    """``log I = intercept + slope * log P``, ``p = (intercept, slope)``."""
    return p[0] + p[1] * logx


def loglinear_jac(logx, p):
    return np.column_stack([np.ones_like(logx), logx])


# -- 2D Gaussian --------------------------------------------------------------

GAUSS2D_NAMES = ("x0", "y0", "sigma_x", "sigma_y", "amplitude", "baseline")


def gaussian_2d(xy, p):
    """Axis-aligned ``baseline + amplitude exp(-dx^2/2sx^2 - dy^2/2sy^2)``.

    ``xy = (x, y)`` flattened coordinate arrays.
    """
    x, y = xy
    x0, y0, sx, sy, amp, base = p
    return base + amp * np.exp(-0.5 * ((x - x0) / sx) ** 2 - 0.5 * ((y - y0) / sy) ** 2)


def gaussian_2d_jac(xy, p):
    x, y = xy
    x0, y0, sx, sy, amp, base = p
    dx, dy = x - x0, y - y0
    e = np.exp(-0.5 * (dx / sx) ** 2 - 0.5 * (dy / sy) ** 2)
    g = amp * e
    return np.column_stack([g * dx / sx ** 2, g * dy / sy ** 2, g * dx ** 2 / sx ** 3,
                            g * dy ** 2 / sy ** 3, e, np.ones_like(x)])


@dataclass(frozen=True)
class ModelEntry:
    """A registered model with a representative evaluation point."""

    value: Callable
    jacobian: Callable
    names: tuple
    sample_x: Callable
    sample_p: tuple


def _t_grid():
    return np.linspace(-12.0, 12.0, 241)


def _xy_grid():
    yy, xx = np.mgrid[0:11, 0:11] * 250.0
    return (xx.ravel(), yy.ravel())


_BAL = hom_cw_coefficients(0.5, 0.5, 0.53, 0.47)
_POS = (4.0, 4.5, 8.0, -4.0, -4.5, -8.0)

MODELS = {
    "antibunching": ModelEntry(antibunching, antibunching_jac, ("A", "tau1"),
                               _t_grid, (0.05, 1.2)),
    "hom_cw_perp": ModelEntry(lambda t, p: hom_cw_perp(t, p, _BAL, 4.0),
                              lambda t, p: hom_cw_perp_jac(t, p, _BAL, 4.0),
                              ("A", "tau1"), _t_grid, (0.03, 1.0)),
    "hom_cw_par": ModelEntry(lambda t, p: hom_cw_par(t, p, 0.03, 1.0, _BAL, 4.0),
                             lambda t, p: hom_cw_par_jac(t, p, 0.03, 1.0, _BAL, 4.0),
                             ("V", "tauc"), _t_grid, (0.9, 0.4)),
    "hom_pulsed_perp": ModelEntry(
        lambda t, p: hom_pulsed(t, perp_full(p), _POS),
        lambda t, p: hom_pulsed_jac(t, perp_full(p), _POS)[:, PERP_COLUMNS],
        ("A0", "A1", "A2", "A3", "A1p", "A2p", "A3p", "tau1"), _t_grid,
        (1.0, 1.0, 0.5, 0.25, 1.0, 0.5, 0.25, 0.9)),
    "hom_pulsed_par": ModelEntry(
        lambda t, p: hom_pulsed(t, p, _POS), lambda t, p: hom_pulsed_jac(t, p, _POS),
        HOM_PULSED_NAMES, _t_grid, (1.0, 0.8, 1.0, 0.5, 0.25, 1.0, 0.5, 0.25, 0.9, 0.35)),
    "decay": ModelEntry(lambda t, p: decay(t, p, 0.5), lambda t, p: decay_jac(t, p, 0.5),
                        ("B", "C", "tau"), lambda: np.linspace(0.5, 10.0, 200), (3.0, 500.0, 0.945)),
    "malus": ModelEntry(malus, malus_jac, ("amplitude", "offset", "theta0"),
                        lambda: np.arange(0.0, 360.0, 15.0), (86.0, 7.0, 25.0)),
    "loglinear": ModelEntry(loglinear, loglinear_jac, ("intercept", "slope"),
                            lambda: np.linspace(-2.0, 2.0, 12), (0.3, 1.2)),
    "gaussian_2d": ModelEntry(gaussian_2d, gaussian_2d_jac, GAUSS2D_NAMES, _xy_grid,
                              (1000.0, 750.0, 400.0, 380.0, 500.0, 5.0)),
}
