"""Forward models for spectral homodyne (HD) and resonator (RD) detection.

Every detector is described by a gain pair (g+, g-): its demodulated photocurrent
is J = g+ P + g- Q with P = (p_s + i q_a)/sqrt(2) and Q = (q_s - i p_a)/sqrt(2).
HD at LO phase phi has (g+, g-) = (cos phi, sin phi). The cos and sin components
of the photocurrent are sqrt(2) Re J and sqrt(2) Im J.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg

from sideband_tomo.config import settings
from sideband_tomo.schemas import (
    CoefficientSet,
    CovarianceMatrix,
    MeasurementSetting,
    ObservableKind,
    PhotocurrentStats,
    QuadratureBasis,
    SampledStats,
    Scheme,
    StationaryBeamMoments,
    TwoBeamCoefficientSet,
    TwoBeamCrossMoments,
)
from sideband_tomo.services import cavity_response
from sideband_tomo.services.modal_algebra import change_basis

logger = logging.getLogger(__name__)


def gains(setting: MeasurementSetting) -> tuple[complex, complex, float]:
    """(g+, g-, vacuum variance) of a detector."""
    if setting.scheme == Scheme.HD:
        return complex(np.cos(setting.phi)), complex(np.sin(setting.phi)), 0.0
    g_plus, g_minus = cavity_response.sideband_coeffs(setting.cavity, setting.delta)
    c_v = 1 - abs(g_plus) ** 2 - abs(g_minus) ** 2
    return g_plus, g_minus, max(c_v, 0.0)


def _rows(g_plus: complex, g_minus: complex) -> np.ndarray:
    xp, yp = g_plus.real, g_plus.imag
    xm, ym = g_minus.real, g_minus.imag
    return np.array(
        [
            [xp, xm, ym, -yp],
            [yp, ym, -xm, xp],
        ]
    )


def component_map(setting: MeasurementSetting) -> tuple[np.ndarray, float]:
    """2x4 map from (p_s, q_s, p_a, q_a) to the (cos, sin) components, plus added vacuum variance."""
    g_plus, g_minus, c_v = gains(setting)
    return _rows(g_plus, g_minus), c_v


def _vacuum_map(setting: MeasurementSetting) -> np.ndarray | None:
    if setting.scheme == Scheme.HD:
        return None
    t_plus, t_minus = cavity_response.transmission_coeffs(setting.cavity, setting.delta)
    return _rows(t_plus, t_minus)


def _sa_array(V: CovarianceMatrix) -> np.ndarray:
    return change_basis(V, QuadratureBasis.SymAsymSA).matrix


def _beam_block(V: np.ndarray, k: int) -> np.ndarray:
    n = V.shape[0] // 4
    idx = [2 * k, 2 * k + 1, 2 * n + 2 * k, 2 * n + 2 * k + 1]
    return V[np.ix_(idx, idx)]


# --- single beam ---
def s_hd(phi: float, m: StationaryBeamMoments) -> float:
    c, s = np.cos(phi), np.sin(phi)
    return float(c * c * m.alpha + s * s * m.beta + np.sin(2 * phi) * m.gamma)


def s_hd_general(phi: float, V: CovarianceMatrix) -> float:
    if V.dim != 4:
        raise ValueError("dimension_mismatch", V.dim)
    v = _sa_array(V)
    c, s = np.cos(phi), np.sin(phi)
    return float(
        c * c * (v[0, 0] + v[3, 3]) / 2
        + s * s * (v[2, 2] + v[1, 1]) / 2
        + np.sin(2 * phi) * (v[0, 1] - v[2, 3]) / 2
    )


def s_rd(c: CoefficientSet, m: StationaryBeamMoments) -> float:
    return float(c.c_alpha * m.alpha + c.c_beta * m.beta + c.c_gamma * m.gamma + c.c_delta * m.delta + c.c_v)


def noise_row(setting: MeasurementSetting) -> tuple[np.ndarray, float]:
    """Coefficients of (alpha, beta, gamma, delta) and the known additive offset."""
    g_plus, g_minus, c_v = gains(setting)
    mixed = 2 * np.conj(g_plus) * g_minus
    return np.array([abs(g_plus) ** 2, abs(g_minus) ** 2, mixed.real, mixed.imag]), c_v


# --- two beams ---
def hd_cross(phi1: float, phi2: float, x: TwoBeamCrossMoments) -> tuple[float, float]:
    c1, s1, c2, s2 = np.cos(phi1), np.sin(phi1), np.cos(phi2), np.sin(phi2)
    re = c1 * c2 * x.mu + s1 * s2 * x.nu + c1 * s2 * x.xi + s1 * c2 * x.zeta
    im = c1 * s2 * x.kappa + s1 * c2 * x.lambda_ + s1 * s2 * x.tau + c1 * c2 * x.eta
    return float(re), float(im)


def _cross_design(tc: TwoBeamCoefficientSet) -> tuple[np.ndarray, np.ndarray]:
    # over (mu, nu, xi, zeta, kappa, lambda, tau, eta)
    re = np.array([tc.c_mu, tc.c_nu, tc.c_xi, tc.c_zeta, -tc.c_kappa, -tc.c_lambda, -tc.c_tau, -tc.c_eta]) / 2
    im = np.array([tc.c_eta, tc.c_tau, tc.c_kappa, tc.c_lambda, tc.c_xi, tc.c_zeta, tc.c_nu, tc.c_mu]) / 2
    return re, im


def rd_cross(tc: TwoBeamCoefficientSet, x: TwoBeamCrossMoments) -> tuple[float, float]:
    re_row, im_row = _cross_design(tc)
    v = x.as_vector()
    return float(re_row @ v), float(im_row @ v)


def cross_rows(setting1: MeasurementSetting, setting2: MeasurementSetting) -> tuple[np.ndarray, np.ndarray]:
    g1 = gains(setting1)[:2]
    g2 = gains(setting2)[:2]
    return _cross_design(cavity_response.coefficients_from_gains(g1, g2))


def predict(
    settings_: tuple[MeasurementSetting, ...],
    kind: ObservableKind,
    beams: dict[str, StationaryBeamMoments],
    crosses: dict[tuple[str, str], TwoBeamCrossMoments] | None = None,
) -> float:
    """Forward model for one record."""
    if kind == ObservableKind.NoisePower:
        (setting,) = settings_
        row, offset = noise_row(setting)
        return float(row @ beams[setting.beam].as_vector() + offset)
    s1, s2 = settings_
    crosses = crosses or {}
    if (s1.beam, s2.beam) in crosses:
        x = crosses[(s1.beam, s2.beam)]
    elif (s2.beam, s1.beam) in crosses:
        x = crosses[(s2.beam, s1.beam)].swapped()
    else:
        x = TwoBeamCrossMoments()
    re_row, im_row = cross_rows(s1, s2)
    row = re_row if kind == ObservableKind.CrossRe else im_row
    return float(row @ x.as_vector())


# --- phase mixing and stationarity ---
def _component_covariance(settings_: list[MeasurementSetting], V: np.ndarray) -> np.ndarray:
    n = V.shape[0] // 4
    if len(settings_) != n:
        raise ValueError("dimension_mismatch", (len(settings_), n))
    L = np.zeros((2 * n, 4 * n))
    vac = np.zeros(2 * n)
    for k, setting in enumerate(settings_):
        rows, c_v = component_map(setting)
        cols = [2 * k, 2 * k + 1, 2 * n + 2 * k, 2 * n + 2 * k + 1]
        L[2 * k : 2 * k + 2, cols] = rows
        vac[2 * k : 2 * k + 2] = c_v
    return L @ V @ L.T + np.diag(vac)


def _mix(block: np.ndarray, thetas: np.ndarray) -> tuple[float, float]:
    """Theta-averaged variance of I_theta and its correlation with I_theta+pi/2."""
    var = 0.0
    corr = 0.0
    for theta in thetas:
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, s], [-s, c]])
        rotated = rot @ block @ rot.T
        var += rotated[0, 0]
        corr += rotated[0, 1]
    return var / len(thetas), corr / len(thetas)


def phase_mixed_stats(settings_, V: CovarianceMatrix, theta_grid: int | None = None) -> PhotocurrentStats:
    """Statistics after uniform averaging over the electronic LO phase.

    A single setting on a one-beam V gives the noise power. Two settings, in V's
    beam order, give the cross correlation under a common eLO phase.
    """
    settings_ = list(settings_)
    C = _component_covariance(settings_, _sa_array(V))
    count = theta_grid or settings.THETA_GRID
    thetas = 2 * np.pi * np.arange(count) / count
    for k in range(len(settings_)):
        block = C[2 * k : 2 * k + 2, 2 * k : 2 * k + 2]
        var, corr = _mix(block, thetas)
        expected = (block[0, 0] + block[1, 1]) / 2
        scale = max(1.0, abs(expected))
        if abs(var - expected) > 1e-9 * scale or abs(corr) > 1e-9 * scale:
            raise ValueError("postcondition_failed", "phase_mixing", var, corr)
    if len(settings_) == 1:
        return PhotocurrentStats(noise_power=float(var))
    # a common rotation leaves the complex correlation unchanged
    re = float((C[0, 2] + C[1, 3]) / 2)
    im = float((C[1, 2] - C[0, 3]) / 2)
    return PhotocurrentStats(cross_re=re, cross_im=im)


def stationarity_residual(V: CovarianceMatrix, phi_grid: int | None = None) -> float:
    """Largest |(var I_cos - var I_sin, <I_cos I_sin>)| over HD phases and beams; zero iff stationary."""
    v = _sa_array(V)
    count = phi_grid or settings.STATIONARITY_PHI_GRID
    phis = np.linspace(0, np.pi, count)
    worst = 0.0
    for k in range(V.dim // 4):
        block = _beam_block(v, k)
        for phi in phis:
            rows = _rows(complex(np.cos(phi)), complex(np.sin(phi)))
            C = rows @ block @ rows.T
            worst = max(worst, float(np.hypot(C[0, 0] - C[1, 1], C[0, 1])))
    return worst


# --- sampling oracle ---
def _sampling_factor(V: np.ndarray) -> np.ndarray:
    w, q = linalg.eigh(V)
    if w[0] < -settings.PHYSICALITY_TOL * max(1.0, abs(w[-1])):
        raise ValueError("sampling_covariance_not_psd", float(w[0]))
    return q * np.sqrt(np.clip(w, 0, None))


def _sample_block(seed_seq, size, factor, maps, vac_maps, n):
    rng = np.random.default_rng(seed_seq)
    x = rng.standard_normal((size, factor.shape[1])) @ factor.T
    comps = []
    for k in range(n):
        cols = [2 * k, 2 * k + 1, 2 * n + 2 * k, 2 * n + 2 * k + 1]
        c = x[:, cols] @ maps[k].T
        if vac_maps[k] is not None:
            c = c + rng.standard_normal((size, 4)) @ vac_maps[k].T
        comps.append(c)
    sums = {}
    for k in range(n):
        power = (comps[k][:, 0] ** 2 + comps[k][:, 1] ** 2) / 2
        sums[(k,)] = np.array([power.sum(), (power**2).sum()])
    for i in range(n):
        for j in range(i + 1, n):
            ci, cj = comps[i], comps[j]
            re = (ci[:, 0] * cj[:, 0] + ci[:, 1] * cj[:, 1]) / 2
            im = (ci[:, 1] * cj[:, 0] - ci[:, 0] * cj[:, 1]) / 2
            sums[(i, j)] = np.array([re.sum(), (re**2).sum(), im.sum(), (im**2).sum()])
    return sums


def _mean_se(total: float, total_sq: float, n: int) -> tuple[float, float]:
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0)
    return float(mean), float(np.sqrt(var / n))


def mc_sample(
    V: CovarianceMatrix,
    settings_,
    n: int,
    seed: int,
    workers: int | None = None,
) -> SampledStats:
    """Monte-Carlo estimate of every photocurrent statistic from joint Gaussian draws.

    Samples are drawn in fixed-size blocks, each with its own child seed, and block
    sums are combined in block order, so results depend on the seed only.
    """
    settings_ = list(settings_)
    if n < 1000:
        raise ValueError("too_few_samples", n)
    v = _sa_array(V)
    beams = V.beam_names()
    if len(settings_) != len(beams):
        raise ValueError("dimension_mismatch", (len(settings_), len(beams)))
    factor = _sampling_factor(v)
    maps = [component_map(s)[0] for s in settings_]
    vac_maps = [_vacuum_map(s) for s in settings_]
    block = settings.MC_BLOCK_SIZE
    sizes = [block] * (n // block) + ([n % block] if n % block else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    k = len(beams)
    workers = workers or settings.MC_WORKERS

    def run(idx):
        logger.debug("Sampling block %d (%d draws)", idx, sizes[idx])
        return _sample_block(children[idx], sizes[idx], factor, maps, vac_maps, k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    else:
        blocks = [run(idx) for idx in range(len(sizes))]

    totals = {key: np.zeros_like(value) for key, value in blocks[0].items()}
    for sums in blocks:
        for key, value in sums.items():
            totals[key] = totals[key] + value

    single = {}
    pairs = {}
    for key, value in totals.items():
        if len(key) == 1:
            mean, se = _mean_se(value[0], value[1], n)
            single[beams[key[0]]] = PhotocurrentStats(noise_power=mean, noise_power_se=se)
        else:
            re, re_se = _mean_se(value[0], value[1], n)
            im, im_se = _mean_se(value[2], value[3], n)
            pairs[(beams[key[0]], beams[key[1]])] = PhotocurrentStats(
                cross_re=re, cross_re_se=re_se, cross_im=im, cross_im_se=im_se
            )
    return SampledStats(n=n, single=single, pairs=pairs)
