import math
from datetime import datetime
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from sideband_tomo.config import settings

BEAM_MOMENTS = ("alpha", "beta", "gamma", "delta")
CROSS_MOMENTS = ("mu", "nu", "xi", "zeta", "kappa", "lambda", "tau", "eta")
HIDDEN_CROSS = ("kappa", "lambda", "tau", "eta")

_ARRAY_MODEL = {"arbitrary_types_allowed": True, "frozen": True}


def single_param(name: str, beam: str) -> str:
    return f"{name}[{beam}]"


def pair_param(name: str, beam1: str, beam2: str) -> str:
    return f"{name}[{beam1},{beam2}]"


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# --- Modal algebra ---
class QuadratureBasis(str, Enum):
    """Quadrature ordering of a covariance matrix.

    SymAsymSA lists (p_s, q_s) for every beam, then (p_a, q_a) for every beam.
    SidebandLU lists (p_l, q_l) for every beam, then (p_u, q_u) for every beam.
    """

    SidebandLU = "SidebandLU"
    SymAsymSA = "SymAsymSA"


class CovarianceMatrix(BaseModel):
    matrix: np.ndarray
    basis: QuadratureBasis = QuadratureBasis.SymAsymSA
    beams: tuple[str, ...] = ()

    model_config = _ARRAY_MODEL

    @field_validator("matrix", mode="before")
    @classmethod
    def check_matrix(cls, v):
        arr = np.array(v, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"covariance matrix must be square, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[0] % 2:
            raise ValueError(f"covariance dimension must be even and nonzero, got {arr.shape[0]}")
        asym = float(np.max(np.abs(arr - arr.T)))
        if asym > settings.SYMMETRY_TOL:
            raise ValueError(f"covariance matrix is not symmetric (max asymmetry {asym:.3g})")
        return _readonly(arr)

    @model_validator(mode="after")
    def beams_match_dimension(self):
        if self.beams and 4 * len(self.beams) != self.dim:
            raise ValueError(
                f"{len(self.beams)} beams do not fit a {self.dim}x{self.dim} covariance"
            )
        return self

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def beam_names(self) -> tuple[str, ...]:
        if self.beams:
            return self.beams
        return tuple(f"b{k}" for k in range(self.dim // 4))

    def mode_labels(self) -> list[str]:
        if self.dim % 4:
            return [f"{quad}[{k}]" for k in range(self.dim // 2) for quad in ("p", "q")]
        first, second = ("s", "a") if self.basis == QuadratureBasis.SymAsymSA else ("l", "u")
        names = self.beam_names()
        return [f"{quad}_{first}[{b}]" for b in names for quad in ("p", "q")] + [
            f"{quad}_{second}[{b}]" for b in names for quad in ("p", "q")
        ]


class SpectralMatrix(BaseModel):
    matrix: np.ndarray
    beams: tuple[str, ...] = ()

    model_config = _ARRAY_MODEL

    @field_validator("matrix", mode="before")
    @classmethod
    def check_matrix(cls, v):
        arr = np.array(v, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2:
            raise ValueError(f"spectral matrix must be square with even dimension, got {arr.shape}")
        herm = float(np.max(np.abs(arr - arr.conj().T)))
        if herm > settings.SYMMETRY_TOL:
            raise ValueError(f"spectral matrix is not Hermitian (max deviation {herm:.3g})")
        if np.any(np.diag(arr).real <= 0):
            raise ValueError("spectral matrix diagonal must be positive")
        return _readonly(arr)

    @model_validator(mode="after")
    def beams_match_dimension(self):
        if self.beams and 2 * len(self.beams) != self.matrix.shape[0]:
            raise ValueError(f"{len(self.beams)} beams do not fit a {self.matrix.shape[0]}-dim spectral matrix")
        return self

    def beam_names(self) -> tuple[str, ...]:
        return self.beams or tuple(f"b{k}" for k in range(self.matrix.shape[0] // 2))


class StationaryBeamMoments(BaseModel):
    alpha: float = Field(1.0, gt=0)
    beta: float = Field(1.0, gt=0)
    gamma: float = 0.0
    delta: float = 0.0

    model_config = {"frozen": True}

    @classmethod
    def vacuum(cls) -> "StationaryBeamMoments":
        return cls()

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.delta])


class TwoBeamCrossMoments(BaseModel):
    mu: float = 0.0
    nu: float = 0.0
    xi: float = 0.0
    zeta: float = 0.0
    kappa: float = 0.0
    lambda_: float = Field(0.0, alias="lambda")
    tau: float = 0.0
    eta: float = 0.0

    model_config = {"frozen": True, "populate_by_name": True}

    @classmethod
    def from_vector(cls, values) -> "TwoBeamCrossMoments":
        return cls(**{name: float(v) for name, v in zip(CROSS_MOMENTS, values)})

    def as_vector(self) -> np.ndarray:
        return np.array([self.mu, self.nu, self.xi, self.zeta, self.kappa, self.lambda_, self.tau, self.eta])

    def swapped(self) -> "TwoBeamCrossMoments":
        """Same correlations seen with the two beams exchanged."""
        return TwoBeamCrossMoments(
            mu=self.mu,
            nu=self.nu,
            xi=self.zeta,
            zeta=self.xi,
            kappa=-self.lambda_,
            lambda_=-self.kappa,
            tau=-self.tau,
            eta=-self.eta,
        )


class PhysicalityReport(BaseModel):
    min_symplectic_eigenvalue: float
    symplectic_eigenvalues: list[float]
    passed: bool


class DuanWitness(BaseModel):
    noise_power: float
    entangled_sidebands: bool


# --- Cavity response ---
class CavityParams(BaseModel):
    d: float = Field(..., ge=0, le=1)  # impedance matching
    omega_ratio: float = Field(..., gt=0)  # analysis frequency over cavity bandwidth

    model_config = {"frozen": True}


class CoefficientSet(BaseModel):
    c_alpha: float
    c_beta: float
    c_gamma: float
    c_delta: float
    c_v: float
    g_plus: complex
    g_minus: complex

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def check_invariants(self):
        tol = 1e-12
        if self.c_alpha < 0 or self.c_beta < 0 or self.c_v < -tol:
            raise ValueError("noise coefficients c_alpha, c_beta, c_v must be non-negative")
        if abs(self.c_alpha + self.c_beta + self.c_v - 1) > tol:
            raise ValueError("c_alpha + c_beta + c_v must equal 1")
        if self.c_gamma**2 + self.c_delta**2 > 4 * self.c_alpha * self.c_beta + tol:
            raise ValueError("c_gamma^2 + c_delta^2 exceeds 4 c_alpha c_beta")
        return self

    def as_row(self) -> np.ndarray:
        return np.array([self.c_alpha, self.c_beta, self.c_gamma, self.c_delta])


class TwoBeamCoefficientSet(BaseModel):
    c_mu: float
    c_eta: float
    c_nu: float
    c_tau: float
    c_xi: float
    c_kappa: float
    c_zeta: float
    c_lambda: float

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def check_bounded(self):
        # raw products 2 g1* g2 of gains with |g+|^2 + |g-|^2 <= 1
        for name, value in self.model_dump().items():
            if abs(value) > 2 + 1e-12:
                raise ValueError(f"{name}={value} exceeds the product bound 2")
        return self


# --- Detection ---
class Scheme(str, Enum):
    HD = "HD"
    RD = "RD"


class ObservableKind(str, Enum):
    NoisePower = "NoisePower"
    CrossRe = "CrossRe"
    CrossIm = "CrossIm"


class MeasurementSetting(BaseModel):
    scheme: Scheme
    beam: str = Field(..., min_length=1)
    phi: float | None = None  # LO phase, HD only
    cavity: CavityParams | None = None  # RD only
    delta: float | None = None  # detuning in cavity bandwidths, RD only

    model_config = {"frozen": True}

    @field_validator("phi")
    @classmethod
    def wrap_phase(cls, v):
        if v is None:
            return v
        wrapped = math.fmod(v, 2 * math.pi)
        if wrapped < 0:
            wrapped += 2 * math.pi
        return 0.0 if wrapped >= 2 * math.pi else wrapped

    @model_validator(mode="after")
    def check_scheme_fields(self):
        if self.scheme == Scheme.HD:
            if self.phi is None or self.cavity is not None or self.delta is not None:
                raise ValueError("HD setting takes a LO phase and no cavity")
        elif self.cavity is None or self.delta is None or self.phi is not None:
            raise ValueError("RD setting takes a cavity and a detuning and no LO phase")
        return self

    @classmethod
    def hd(cls, beam: str, phi: float) -> "MeasurementSetting":
        return cls(scheme=Scheme.HD, beam=beam, phi=phi)

    @classmethod
    def rd(cls, beam: str, cavity: CavityParams, delta: float) -> "MeasurementSetting":
        return cls(scheme=Scheme.RD, beam=beam, cavity=cavity, delta=delta)

    @property
    def control(self) -> float:
        return self.phi if self.scheme == Scheme.HD else self.delta


class PhotocurrentStats(BaseModel):
    noise_power: float | None = Field(None, ge=0)
    noise_power_se: float | None = Field(None, ge=0)
    cross_re: float | None = None
    cross_re_se: float | None = Field(None, ge=0)
    cross_im: float | None = None
    cross_im_se: float | None = Field(None, ge=0)


class SampledStats(BaseModel):
    n: int
    single: dict[str, PhotocurrentStats]
    pairs: dict[tuple[str, str], PhotocurrentStats]


# --- Reconstruction ---
class ScanRecord(BaseModel):
    settings: tuple[MeasurementSetting, ...]
    kind: ObservableKind
    value: float
    sigma: float | None = Field(None, gt=0)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def check_settings(self):
        if self.kind == ObservableKind.NoisePower:
            if len(self.settings) != 1:
                raise ValueError("NoisePower records take exactly one setting")
        else:
            if len(self.settings) != 2:
                raise ValueError(f"{self.kind.value} records take exactly two settings")
            if self.settings[0].beam == self.settings[1].beam:
                raise ValueError("cross records need two distinct beams")
        if len({s.scheme for s in self.settings}) != 1:
            raise ValueError("all settings of a record must share one scheme")
        return self

    @property
    def beams(self) -> tuple[str, ...]:
        return tuple(s.beam for s in self.settings)

    @property
    def scheme(self) -> Scheme:
        return self.settings[0].scheme


class ScanDataset(BaseModel):
    records: list[ScanRecord] = Field(..., min_length=1)

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def merge(cls, datasets) -> "ScanDataset":
        return cls(records=[r for data in datasets for r in data.records])

    def beams(self) -> list[str]:
        seen: list[str] = []
        for record in self.records:
            for beam in record.beams:
                if beam not in seen:
                    seen.append(beam)
        return seen

    def pairs(self) -> list[tuple[str, str]]:
        """Beam pairs with cross records, each listed once in first-seen order."""
        found: list[tuple[str, str]] = []
        for record in self.records:
            if record.kind == ObservableKind.NoisePower:
                continue
            b1, b2 = record.beams
            if (b1, b2) not in found and (b2, b1) not in found:
                found.append((b1, b2))
        return found


class ModelSpec(BaseModel):
    parameters: tuple[str, ...] = Field(..., min_length=1)
    fixed: tuple[str, ...] = ()  # held at zero

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def check_disjoint(self):
        overlap = set(self.parameters) & set(self.fixed)
        if overlap:
            raise ValueError(f"parameters also listed as fixed: {sorted(overlap)}")
        if len(set(self.parameters)) != len(self.parameters):
            raise ValueError("duplicate parameters")
        return self

    @classmethod
    def for_dataset(cls, data: ScanDataset, hidden: bool = True) -> "ModelSpec":
        """Full model, or with every HD-hidden moment fixed to zero when hidden=False."""
        params: list[str] = []
        fixed: list[str] = []
        single_beams = [
            b for b in data.beams()
            if any(r.kind == ObservableKind.NoisePower and r.beams[0] == b for r in data.records)
        ]
        for beam in single_beams:
            for name in BEAM_MOMENTS:
                target = fixed if (name == "delta" and not hidden) else params
                target.append(single_param(name, beam))
        for b1, b2 in data.pairs():
            for name in CROSS_MOMENTS:
                target = fixed if (name in HIDDEN_CROSS and not hidden) else params
                target.append(pair_param(name, b1, b2))
        return cls(parameters=tuple(params), fixed=tuple(fixed))


class ParameterEstimate(BaseModel):
    value: float
    stderr: float  # inf when the parameter overlaps the design null space
    identifiable: bool


class FitResult(BaseModel):
    parameters: tuple[str, ...]
    fixed: tuple[str, ...] = ()
    estimates: dict[str, ParameterEstimate]
    chi2: float = Field(..., ge=0)
    dof: int
    n_records: int
    rank: int
    condition_number: float
    null_space: list[list[float]] = []

    @model_validator(mode="after")
    def check_dof(self):
        if self.dof != self.n_records - self.rank:
            raise ValueError("dof must equal records minus rank")
        return self

    def value(self, name: str) -> float:
        if name in self.fixed:
            return 0.0
        return self.estimates[name].value

    def beam_moments(self, beam: str) -> StationaryBeamMoments:
        return StationaryBeamMoments(**{name: self.value(single_param(name, beam)) for name in BEAM_MOMENTS})

    def cross_moments(self, beam1: str, beam2: str) -> TwoBeamCrossMoments:
        return TwoBeamCrossMoments(**{name: self.value(pair_param(name, beam1, beam2)) for name in CROSS_MOMENTS})


class Identifiability(BaseModel):
    rank: int
    condition_number: float
    unidentifiable: tuple[str, ...]
    null_space: list[list[float]] = []


class ModelComparison(BaseModel):
    delta_chi2: float
    delta_dof: int
    threshold: float
    preferred: Literal["full", "constrained"]
    p_value: float | None = None


class PhysicalProjection(BaseModel):
    beams: dict[str, StationaryBeamMoments]
    crosses: dict[tuple[str, str], TwoBeamCrossMoments]
    covariance: CovarianceMatrix
    distance: float


# --- Experiment config ---
class CavityConfig(BaseModel):
    d: float = Field(..., ge=0, le=1)
    bandwidth_mhz: float = Field(..., gt=0)


class BeamConfig(BaseModel):
    name: str = Field(..., min_length=1)
    cavity: CavityConfig
    scheme: Scheme = Scheme.RD


class GridConfig(BaseModel):
    """Detuning grid in units of the cavity bandwidth. HD beams reuse count over [0, 2pi)."""

    min: float = -5.0
    max: float = 5.0
    count: int = Field(450, ge=2)

    @model_validator(mode="after")
    def check_order(self):
        if self.max <= self.min:
            raise ValueError("grid max must exceed grid min")
        return self


class SyncConfig(BaseModel):
    # second beam of an RD pair is scanned at slope * delta1 + offset
    slope: float = 1.0
    offset: float = 0.0


class CrossTruth(BaseModel):
    beams: tuple[str, str]
    moments: TwoBeamCrossMoments


class GroundTruth(BaseModel):
    beams: dict[str, StationaryBeamMoments]
    crosses: list[CrossTruth] = []


class ExperimentConfig(BaseModel):
    schema_version: Literal[1] = 1
    beams: list[BeamConfig] = Field(..., min_length=1)
    analysis_frequency_mhz: float = Field(..., gt=0)
    grid: GridConfig = GridConfig()
    sync: SyncConfig = SyncConfig()
    pairs: bool = True
    noise_sigma: float = Field(0.01, ge=0)
    seed: int = 0
    ground_truth: GroundTruth | None = None  # None selects the embedded six-mode fixture

    @model_validator(mode="after")
    def check_references(self):
        names = [b.name for b in self.beams]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate beam names: {names}")
        if self.ground_truth is not None:
            missing = [n for n in names if n not in self.ground_truth.beams]
            if missing:
                raise ValueError(f"ground truth lacks moments for beams {missing}")
            for cross in self.ground_truth.crosses:
                unknown = [b for b in cross.beams if b not in names]
                if unknown:
                    raise ValueError(f"ground truth cross references unknown beams {unknown}")
        return self

    def beam(self, name: str) -> BeamConfig:
        for beam in self.beams:
            if beam.name == name:
                return beam
        raise ValueError("beam_not_found", name)

    def omega_ratio(self, name: str) -> float:
        return self.analysis_frequency_mhz / self.beam(name).cavity.bandwidth_mhz

    def cavity_params(self, name: str) -> CavityParams:
        return CavityParams(d=self.beam(name).cavity.d, omega_ratio=self.omega_ratio(name))


# --- Fixture ---
class FixtureMatrix(BaseModel):
    beams: tuple[str, ...]
    real: np.ndarray
    imag: np.ndarray
    delta_uncertainty: float
    cross_uncertainty: float

    model_config = _ARRAY_MODEL

    @field_validator("real", "imag", mode="before")
    @classmethod
    def as_array(cls, v):
        return _readonly(np.array(v, dtype=float))

    @model_validator(mode="after")
    def check_shape(self):
        n = 2 * len(self.beams)
        if self.real.shape != (n, n) or self.imag.shape != (n, n):
            raise ValueError(f"fixture blocks must be {n}x{n}")
        return self

    def spectral(self) -> SpectralMatrix:
        return SpectralMatrix(matrix=self.real + 1j * self.imag, beams=self.beams)


# --- Scan files ---
class ScanRow(BaseModel):
    beam1: str = Field(..., min_length=1)
    beam2: str | None = None
    scheme: Scheme
    phi_or_delta1: float
    phi_or_delta2: float | None = None
    kind: ObservableKind
    value: float
    sigma: float | None = Field(None, gt=0)

    @field_validator("beam2", "phi_or_delta2", "sigma", mode="before")
    @classmethod
    def empty_is_missing(cls, v):
        return None if v == "" else v

    @field_validator("phi_or_delta1", "phi_or_delta2", "value", "sigma")
    @classmethod
    def finite(cls, v):
        if v is not None and not math.isfinite(v):
            raise ValueError("must be finite")
        return v

    @model_validator(mode="after")
    def check_pairing(self):
        paired = self.kind != ObservableKind.NoisePower
        if paired != (self.beam2 is not None) or paired != (self.phi_or_delta2 is not None):
            raise ValueError(f"{self.kind.value} rows {'need' if paired else 'take no'} beam2 and phi_or_delta2")
        return self


class CavityRow(BaseModel):
    beam: str = Field(..., min_length=1)
    d: float = Field(..., ge=0, le=1)
    omega_ratio: float = Field(..., gt=0)


# --- Archive ---
class FitEstimateResponse(BaseModel):
    parameter: str
    estimate: float
    stderr: float | None
    identifiable: bool

    model_config = {"from_attributes": True}


class FitRunResponse(BaseModel):
    id: str
    label: str
    model: str
    chi2: float
    dof: int
    rank: int
    condition_number: float | None
    sources: str
    created_at: datetime
    estimates: list[FitEstimateResponse] = []

    model_config = {"from_attributes": True}
