"""Gaussian sideband states: covariance forms, basis changes and physicality.

All values are in SQL units (vacuum variance 1). Multibeam covariances list the
symmetric (or lower-sideband) modes of every beam first, then the antisymmetric
(or upper-sideband) ones; each mode contributes a (p, q) pair.
"""

import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg

from sideband_tomo.config import settings
from sideband_tomo.schemas import (
    CovarianceMatrix,
    DuanWitness,
    PhysicalityReport,
    QuadratureBasis,
    SpectralMatrix,
    StationaryBeamMoments,
    TwoBeamCrossMoments,
)

logger = logging.getLogger(__name__)

_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])  # (p, q) -> (q, -p), the a' rotation


def _omega(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), _ROT)


def _sa_from_lu(n_beams: int) -> np.ndarray:
    """Orthogonal M with X_sa = M X_lu."""
    eye = np.eye(2 * n_beams)
    return np.block([[eye, eye], [-eye, eye]]) / np.sqrt(2)


def _prime(n_beams: int) -> np.ndarray:
    """T with (s, a') = T (s, a)."""
    return linalg.block_diag(np.eye(2 * n_beams), np.kron(np.eye(n_beams), _ROT))


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2


def _as_array(V) -> np.ndarray:
    return V.matrix if isinstance(V, CovarianceMatrix) else np.asarray(V, dtype=float)


def _names(beams) -> list:
    return list(beams.keys()) if isinstance(beams, Mapping) else list(range(len(beams)))


def _lookup_cross(crosses: Mapping, b1, b2) -> TwoBeamCrossMoments:
    if (b1, b2) in crosses:
        return crosses[(b1, b2)]
    if (b2, b1) in crosses:
        return crosses[(b2, b1)].swapped()
    raise ValueError("missing_pair", (b1, b2))


def _stationary_sa(m: StationaryBeamMoments) -> np.ndarray:
    a, b, g, d = m.alpha, m.beta, m.gamma, m.delta
    return np.array(
        [
            [a, g, d, 0.0],
            [g, b, 0.0, d],
            [d, 0.0, b, -g],
            [0.0, d, -g, a],
        ]
    )


def _stationary_lu(m: StationaryBeamMoments) -> np.ndarray:
    a, b, g, d = sideband_moments(m)
    return np.array(
        [
            [a, 0.0, g, d],
            [0.0, a, d, -g],
            [g, d, b, 0.0],
            [d, -g, 0.0, b],
        ]
    )


def sideband_moments(m: StationaryBeamMoments) -> tuple[float, float, float, float]:
    """(alpha', beta', gamma', delta') of the sideband form; alpha' is the lower-sideband variance."""
    mean = (m.alpha + m.beta) / 2
    return mean - m.delta, mean + m.delta, (m.alpha - m.beta) / 2, m.gamma


def build_stationary_covariance(
    m: StationaryBeamMoments, basis: QuadratureBasis = QuadratureBasis.SymAsymSA
) -> CovarianceMatrix:
    if basis == QuadratureBasis.SidebandLU:
        return CovarianceMatrix(matrix=_stationary_lu(m), basis=basis)
    return CovarianceMatrix(matrix=_stationary_sa(m), basis=basis)


def stationary_moments(V: CovarianceMatrix) -> StationaryBeamMoments:
    """Read a single-beam covariance back as stationary moments, averaging paired entries."""
    if V.dim != 4:
        raise ValueError("dimension_mismatch", V.dim)
    beams, _ = decompose_multibeam(V)
    return next(iter(beams.values()))


def change_basis(V: CovarianceMatrix, target: QuadratureBasis) -> CovarianceMatrix:
    if V.dim % 4:
        raise ValueError("dimension_not_multiple_of_4", V.dim)
    if V.basis == target:
        return V
    M = _sa_from_lu(V.dim // 4)
    if target == QuadratureBasis.SymAsymSA:
        out = M @ V.matrix @ M.T
    else:
        out = M.T @ V.matrix @ M
    return CovarianceMatrix(matrix=_symmetrize(out), basis=target, beams=V.beams)


def symplectic_eigenvalues(V) -> np.ndarray:
    """Symplectic spectrum in ascending order, one value per mode."""
    arr = _as_array(V)
    n_modes = arr.shape[0] // 2
    eig = np.abs(linalg.eigvals(1j * _omega(n_modes) @ arr))
    return np.sort(eig)[::2]


def check_physicality(V, tol: float | None = None) -> PhysicalityReport:
    arr = _as_array(V)
    asym = float(np.max(np.abs(arr - arr.T)))
    if asym > settings.SYMMETRY_TOL:
        raise ValueError("not_symmetric", asym)
    tol = settings.PHYSICALITY_TOL if tol is None else tol
    nu = symplectic_eigenvalues(arr)
    nu_min = float(nu[0])
    # the symplectic spectrum only means something for positive definite V
    positive = linalg.eigvalsh(_symmetrize(arr))[0] > 0
    return PhysicalityReport(
        min_symplectic_eigenvalue=nu_min,
        symplectic_eigenvalues=[float(x) for x in nu],
        passed=bool(positive and nu_min >= 1 - tol),
    )


def williamson_clip(V: CovarianceMatrix) -> CovarianceMatrix:
    """Raise every symplectic eigenvalue below 1 to 1, keeping the symplectic frame."""
    arr = V.matrix
    w = linalg.eigvalsh(arr)
    if w[0] <= 0:
        raise ValueError("not_positive_definite", float(w[0]))
    root = np.real(linalg.sqrtm(arr))
    root = _symmetrize(root)
    k = root @ _omega(arr.shape[0] // 2) @ root
    nu2, q = linalg.eigh(_symmetrize(-k @ k))
    nu = np.sqrt(np.clip(nu2, 0, None))
    scale = np.maximum(nu, 1.0) / nu
    clipped = root @ (q * scale) @ q.T @ root
    return CovarianceMatrix(matrix=_symmetrize(clipped), basis=V.basis, beams=V.beams)


def spectral_from_moments(m: StationaryBeamMoments) -> SpectralMatrix:
    off = complex(m.gamma, m.delta)
    return SpectralMatrix(matrix=[[m.alpha, off], [off.conjugate(), m.beta]])


def moments_from_spectral(S: SpectralMatrix) -> StationaryBeamMoments:
    if S.matrix.shape != (2, 2):
        raise ValueError("dimension_mismatch", S.matrix.shape)
    s = S.matrix
    return StationaryBeamMoments(alpha=s[0, 0].real, beta=s[1, 1].real, gamma=s[0, 1].real, delta=s[0, 1].imag)


def primed_block_form(S: SpectralMatrix) -> np.ndarray:
    """Covariance in (s, a') quadratures: [[Re S, -Im S], [Im S, Re S]]."""
    re, im = S.matrix.real, S.matrix.imag
    return np.block([[re, -im], [im, re]])


def covariance_from_spectral(S: SpectralMatrix) -> CovarianceMatrix:
    """Covariance in unrotated s/a quadratures; the a' rotation is undone here."""
    n_beams = S.matrix.shape[0] // 2
    T = _prime(n_beams)
    out = T.T @ primed_block_form(S) @ T
    beams = S.beams if S.beams else ()
    return CovarianceMatrix(matrix=_symmetrize(out), basis=QuadratureBasis.SymAsymSA, beams=beams)


def spectral_from_multibeam(beams, crosses: Mapping | None = None) -> SpectralMatrix:
    names = _names(beams)
    values = list(beams.values()) if isinstance(beams, Mapping) else list(beams)
    crosses = crosses or {}
    n = len(names)
    S = np.zeros((2 * n, 2 * n), dtype=complex)
    for i, m in enumerate(values):
        S[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = spectral_from_moments(m).matrix
    for i in range(n):
        for j in range(i + 1, n):
            x = _lookup_cross(crosses, names[i], names[j])
            block = np.array([[x.mu + 1j * x.eta, x.xi + 1j * x.kappa], [x.zeta + 1j * x.lambda_, x.nu + 1j * x.tau]])
            S[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = block
            S[2 * j : 2 * j + 2, 2 * i : 2 * i + 2] = block.conj().T
    return SpectralMatrix(matrix=S, beams=tuple(str(b) for b in names))


def assemble_multibeam(beams: Mapping | Sequence, crosses: Mapping) -> CovarianceMatrix:
    """Joint s/a covariance of several stationary beams.

    crosses maps beam pairs to their cross moments; a pair may be given in either
    order. Sequences of beams are addressed by index.
    """
    names = _names(beams)
    values = list(beams.values()) if isinstance(beams, Mapping) else list(beams)
    n = len(names)
    if any(not isinstance(m, StationaryBeamMoments) for m in values):
        raise ValueError("dimension_mismatch", "beams must be StationaryBeamMoments")
    V = np.zeros((4 * n, 4 * n))

    def s(i):
        return slice(2 * i, 2 * i + 2)

    def a(i):
        return slice(2 * n + 2 * i, 2 * n + 2 * i + 2)
    for i, m in enumerate(values):
        single = _stationary_sa(m)
        V[s(i), s(i)] = single[:2, :2]
        V[a(i), a(i)] = single[2:, 2:]
        V[s(i), a(i)] = single[:2, 2:]
        V[a(i), s(i)] = single[2:, :2]
    for i in range(n):
        for j in range(i + 1, n):
            x = _lookup_cross(crosses, names[i], names[j])
            blocks = [
                (s(i), s(j), [[x.mu, x.xi], [x.zeta, x.nu]]),
                (a(i), a(j), [[x.nu, -x.zeta], [-x.xi, x.mu]]),
                # hidden sector
                (s(i), a(j), [[x.kappa, -x.eta], [x.tau, -x.lambda_]]),
                (s(j), a(i), [[-x.lambda_, x.eta], [-x.tau, x.kappa]]),
            ]
            for rows, cols, block in blocks:
                V[rows, cols] = block
                V[cols, rows] = np.transpose(block)
    return CovarianceMatrix(matrix=V, basis=QuadratureBasis.SymAsymSA, beams=tuple(str(b) for b in names))


def decompose_multibeam(
    V: CovarianceMatrix, names: Sequence[str] | None = None
) -> tuple[dict[str, StationaryBeamMoments], dict[tuple[str, str], TwoBeamCrossMoments]]:
    """Stationary moments closest to V, averaging entries the stationary form ties together."""
    V = change_basis(V, QuadratureBasis.SymAsymSA)
    n = V.dim // 4
    names = list(names) if names is not None else list(V.beam_names())
    if len(names) != n:
        raise ValueError("dimension_mismatch", (len(names), n))
    T = _prime(n)
    vp = T @ V.matrix @ T.T
    h = 2 * n
    re = (vp[:h, :h] + vp[h:, h:]) / 2
    im = (vp[h:, :h] - vp[:h, h:]) / 2
    re = _symmetrize(re)
    im = (im - im.T) / 2
    beams: dict[str, StationaryBeamMoments] = {}
    crosses: dict[tuple[str, str], TwoBeamCrossMoments] = {}
    for i, name in enumerate(names):
        k = 2 * i
        beams[name] = StationaryBeamMoments(
            alpha=re[k, k], beta=re[k + 1, k + 1], gamma=re[k, k + 1], delta=im[k, k + 1]
        )
    for i in range(n):
        for j in range(i + 1, n):
            ri, rj = 2 * i, 2 * j
            crosses[(names[i], names[j])] = TwoBeamCrossMoments(
                mu=re[ri, rj],
                xi=re[ri, rj + 1],
                zeta=re[ri + 1, rj],
                nu=re[ri + 1, rj + 1],
                eta=im[ri, rj],
                kappa=im[ri, rj + 1],
                lambda_=im[ri + 1, rj],
                tau=im[ri + 1, rj + 1],
            )
    return beams, crosses


def duan_witness(noise_power: float) -> DuanWitness:
    if noise_power < 0:
        raise ValueError("negative_noise_power", noise_power)
    return DuanWitness(noise_power=noise_power, entangled_sidebands=noise_power < 1)


def hd_noise_bounds(m: StationaryBeamMoments) -> tuple[float, float]:
    """Smallest and largest HD noise power over the LO phase."""
    lo, hi = linalg.eigvalsh(np.array([[m.alpha, m.gamma], [m.gamma, m.beta]]))
    return float(lo), float(hi)


def pair_duan_noise(S: SpectralMatrix, i: int, j: int) -> tuple[float, float]:
    """Duan sums for beams i and j: ((S_P- + S_Q+)/2, (S_P+ + S_Q-)/2)."""
    s = S.matrix.real
    pi, qi, pj, qj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
    p_minus = (s[pi, pi] + s[pj, pj] - 2 * s[pi, pj]) / 2
    p_plus = (s[pi, pi] + s[pj, pj] + 2 * s[pi, pj]) / 2
    q_minus = (s[qi, qi] + s[qj, qj] - 2 * s[qi, qj]) / 2
    q_plus = (s[qi, qi] + s[qj, qj] + 2 * s[qi, qj]) / 2
    return float((p_minus + q_plus) / 2), float((p_plus + q_minus) / 2)


def apply_loss(V: CovarianceMatrix, efficiency: float) -> CovarianceMatrix:
    if not 0 <= efficiency <= 1:
        raise ValueError("efficiency_out_of_range", efficiency)
    out = efficiency * V.matrix + (1 - efficiency) * np.eye(V.dim)
    return CovarianceMatrix(matrix=out, basis=V.basis, beams=V.beams)


def write_matrix(path: str | Path, V: CovarianceMatrix) -> None:
    labels = V.mode_labels()
    frame = pd.DataFrame(V.matrix, index=labels, columns=labels)
    frame.index.name = V.basis.value
    frame.to_csv(path, float_format="%.17g")
    logger.info("Wrote %dx%d covariance to %s", V.dim, V.dim, path)


def read_matrix(path: str | Path) -> CovarianceMatrix:
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    try:
        basis = QuadratureBasis(frame.index.name)
    except ValueError:
        raise ValueError("malformed_matrix", f"{path}: unknown basis tag {frame.index.name!r}")
    if list(frame.index) != list(frame.columns):
        raise ValueError("malformed_matrix", f"{path}: row and column labels differ")
    beams: list[str] = []
    for label in frame.columns[: len(frame.columns) // 2 : 2]:
        if "[" in label and label.endswith("]"):
            beams.append(label[label.index("[") + 1 : -1])
    try:
        values = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise ValueError("malformed_matrix", f"{path}: {e}")
    if values.shape[0] % 4 or len(beams) * 4 != values.shape[0]:
        beams = []
    return CovarianceMatrix(matrix=values, basis=basis, beams=tuple(beams))
