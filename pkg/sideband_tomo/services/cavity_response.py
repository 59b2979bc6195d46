"""Reflection off a detuned cavity and the noise coefficients it produces.

Detunings are in units of the cavity bandwidth. The carrier sits at detuning
delta, the sidebands at delta +/- omega_ratio.
"""

import logging

import numpy as np
import pandas as pd

from sideband_tomo.config import settings
from sideband_tomo.schemas import CavityParams, CoefficientSet, TwoBeamCoefficientSet

logger = logging.getLogger(__name__)

COEFFICIENT_COLUMNS = ["delta", "c_alpha", "c_beta", "c_gamma", "c_delta", "c_v"]


def _check_d(d: float) -> None:
    if not 0 <= d <= 1:
        raise ValueError("d_out_of_range", d)


def reflection(d: float, delta):
    """Complex reflection coefficient r(delta); accepts scalars or arrays."""
    _check_d(d)
    delta = np.asarray(delta, dtype=float)
    r = -(np.sqrt(d) + 2j * delta) / (1 - 2j * delta)
    return complex(r) if r.ndim == 0 else r


def transmission(d: float, delta):
    """Vacuum transmission amplitude t = sqrt(1 - |r|^2), from |t|^2 = (1 - d) / (1 + 4 delta^2)."""
    _check_d(d)
    delta = np.asarray(delta, dtype=float)
    t = np.sqrt((1 - d) / (1 + 4 * delta**2))
    return float(t) if np.ndim(t) == 0 else t


def _carrier_phase(d: float, delta: np.ndarray) -> np.ndarray:
    r0 = np.asarray(reflection(d, delta))
    mod = np.abs(r0)
    if np.any(mod == 0):
        raise ValueError("singular_reflection", float(np.asarray(delta)[mod == 0].flat[0]))
    return r0 / mod


def _gains(p: CavityParams, delta):
    delta = np.asarray(delta, dtype=float)
    u = _carrier_phase(p.d, delta)
    upper = u * np.conj(reflection(p.d, delta + p.omega_ratio))
    lower = np.conj(u) * reflection(p.d, delta - p.omega_ratio)
    return (upper + lower) / 2, 1j * (upper - lower) / 2


def sideband_coeffs(p: CavityParams, delta: float) -> tuple[complex, complex]:
    g_plus, g_minus = _gains(p, delta)
    return complex(g_plus), complex(g_minus)


def transmission_coeffs(p: CavityParams, delta: float) -> tuple[complex, complex]:
    """Gains of the vacuum modes transmitted through the cavity in place of the sidebands."""
    u = complex(_carrier_phase(p.d, np.asarray(delta, dtype=float)))
    upper = u * transmission(p.d, delta + p.omega_ratio)
    lower = u.conjugate() * transmission(p.d, delta - p.omega_ratio)
    return (upper + lower) / 2, 1j * (upper - lower) / 2


def _coefficients(g_plus, g_minus):
    c_alpha = np.abs(g_plus) ** 2
    c_beta = np.abs(g_minus) ** 2
    mixed = 2 * np.conj(g_plus) * g_minus
    return c_alpha, c_beta, mixed.real, mixed.imag, 1 - c_alpha - c_beta


def noise_coefficients(p: CavityParams, delta: float) -> CoefficientSet:
    g_plus, g_minus = sideband_coeffs(p, delta)
    c_alpha, c_beta, c_gamma, c_delta, c_v = _coefficients(g_plus, g_minus)
    return CoefficientSet(
        c_alpha=c_alpha,
        c_beta=c_beta,
        c_gamma=c_gamma,
        c_delta=c_delta,
        c_v=c_v,
        g_plus=g_plus,
        g_minus=g_minus,
    )


def coefficients_from_gains(gains1: tuple[complex, complex], gains2: tuple[complex, complex]) -> TwoBeamCoefficientSet:
    """Raw products 2 g1* g2 of two beams' gain pairs."""
    p1, m1 = gains1
    p2, m2 = gains2
    pp = 2 * np.conj(p1) * p2
    mm = 2 * np.conj(m1) * m2
    pm = 2 * np.conj(p1) * m2
    mp = 2 * np.conj(m1) * p2
    return TwoBeamCoefficientSet(
        c_mu=pp.real,
        c_eta=-pp.imag,
        c_nu=mm.real,
        c_tau=-mm.imag,
        c_xi=pm.real,
        c_kappa=-pm.imag,
        c_zeta=mp.real,
        c_lambda=-mp.imag,
    )


def cross_coefficients(p1: CavityParams, d1: float, p2: CavityParams, d2: float) -> TwoBeamCoefficientSet:
    return coefficients_from_gains(sideband_coeffs(p1, d1), sideband_coeffs(p2, d2))


def hd_limit_phase(p: CavityParams, delta: float) -> float:
    """LO phase an HD would need to see what a lossless cavity shows at this detuning."""
    if p.d != 1:
        raise ValueError("hd_limit_requires_lossless", p.d)
    c = noise_coefficients(p, delta)
    return float(0.5 * np.arctan2(c.c_gamma, c.c_alpha - c.c_beta))


def hd_limit_frame(p: CavityParams, delta: float) -> float:
    """Common phase sigma with g+ = e^{i sigma} cos(phi) and g- = e^{i sigma} sin(phi) at d=1."""
    phi = hd_limit_phase(p, delta)
    g_plus, g_minus = sideband_coeffs(p, delta)
    return float(np.angle(g_plus * np.cos(phi) + g_minus * np.sin(phi)))


def detuning_grid(dmin: float, dmax: float, count: int, d: float | None = None) -> np.ndarray:
    if count < 2 or dmax <= dmin:
        raise ValueError("invalid_grid", (dmin, dmax, count))
    grid = np.linspace(dmin, dmax, count)
    if d == 0:
        # r vanishes on resonance of an impedance-matched cavity
        grid[grid == 0] = settings.SINGULAR_OFFSET
    return grid


def coefficient_curves(p: CavityParams, deltas) -> pd.DataFrame:
    deltas = np.asarray(deltas, dtype=float)
    g_plus, g_minus = _gains(p, deltas)
    c_alpha, c_beta, c_gamma, c_delta, c_v = _coefficients(g_plus, g_minus)
    frame = pd.DataFrame(
        {
            "delta": deltas,
            "c_alpha": c_alpha,
            "c_beta": c_beta,
            "c_gamma": c_gamma,
            "c_delta": c_delta,
            "c_v": c_v,
        },
        columns=COEFFICIENT_COLUMNS,
    )
    logger.debug("Computed %d coefficient rows for d=%s omega_ratio=%s", len(frame), p.d, p.omega_ratio)
    return frame
