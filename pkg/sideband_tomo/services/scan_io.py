import csv
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from sideband_tomo.config import settings
from sideband_tomo.schemas import (
    BeamConfig,
    CavityConfig,
    CavityParams,
    CavityRow,
    CovarianceMatrix,
    ExperimentConfig,
    FixtureMatrix,
    MeasurementSetting,
    ObservableKind,
    ScanDataset,
    ScanRecord,
    ScanRow,
    Scheme,
    StationaryBeamMoments,
    TwoBeamCrossMoments,
)
from sideband_tomo.services.cavity_response import detuning_grid
from sideband_tomo.services.detection_models import predict
from sideband_tomo.services.modal_algebra import (
    assemble_multibeam,
    check_physicality,
    covariance_from_spectral,
    decompose_multibeam,
)

logger = logging.getLogger(__name__)

SCAN_COLUMNS = ["beam1", "beam2", "scheme", "phi_or_delta1", "phi_or_delta2", "kind", "value", "sigma"]
CAVITY_TAG = "# cavity"

FIXTURE_BEAMS = ("pump", "signal", "idler")

# Upper triangles as printed, ordering (P, Q) per beam.
_FIXTURE_RE = [
    [1.30, -0.07, -0.47, 0.00, -0.48, -0.03],
    [1.07, 0.12, 0.16, 0.14, 0.08],
    [1.52, -0.02, 1.00, 0.05],
    [2.87, 0.05, -0.91],
    [1.52, -0.05],
    [3.64],
]
_FIXTURE_IM = [
    [0.00, -0.04, 0.10, 0.04, 0.07, 0.14],
    [0.00, -0.03, -0.03, -0.02, 0.38],
    [0.00, 0.34, 0.05, -0.08],
    [0.00, 0.04, 0.54],
    [0.00, 0.17],
    [0.00],
]


def _complete(rows: list[list[float]], antisymmetric: bool) -> np.ndarray:
    n = len(rows)
    out = np.zeros((n, n))
    for i, row in enumerate(rows):
        out[i, i:] = row
    lower = -out.T if antisymmetric else out.T
    return np.triu(out) + np.tril(lower, -1)


# --- Fixture ---
def load_fixture() -> tuple[FixtureMatrix, CovarianceMatrix]:
    fixture = FixtureMatrix(
        beams=FIXTURE_BEAMS,
        real=_complete(_FIXTURE_RE, antisymmetric=False),
        imag=_complete(_FIXTURE_IM, antisymmetric=True),
        delta_uncertainty=0.2,
        cross_uncertainty=0.05,
    )
    return fixture, covariance_from_spectral(fixture.spectral())


def fixture_moments() -> tuple[dict[str, StationaryBeamMoments], dict[tuple[str, str], TwoBeamCrossMoments]]:
    _, covariance = load_fixture()
    return decompose_multibeam(covariance)


def write_fixture(path: str | Path) -> None:
    fixture, _ = load_fixture()
    labels = [f"{quad}[{beam}]" for beam in fixture.beams for quad in ("P", "Q")]
    rows = []
    for i in range(len(labels)):
        for j in range(i, len(labels)):
            rows.append({"row": labels[i], "col": labels[j], "re": fixture.real[i, j], "im": fixture.imag[i, j]})
    pd.DataFrame(rows).to_csv(path, index=False, float_format="%.17g")
    logger.info("Wrote fixture to %s", path)


# --- Config ---
def default_config() -> ExperimentConfig:
    return ExperimentConfig(
        beams=[BeamConfig(name=name, cavity=CavityConfig(d=0.85, bandwidth_mhz=12.0)) for name in FIXTURE_BEAMS],
        analysis_frequency_mhz=21.0,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def write_config(path: str | Path, config: ExperimentConfig) -> None:
    Path(path).write_text(config.model_dump_json(indent=2, by_alias=True) + "\n", encoding="utf-8")


def _ground_truth(config: ExperimentConfig):
    names = [b.name for b in config.beams]
    if config.ground_truth is None:
        fixture_beams, fixture_crosses = fixture_moments()
        unknown = [n for n in names if n not in fixture_beams]
        if unknown:
            raise ValueError("fixture_beams_mismatch", unknown)
        beams = {n: fixture_beams[n] for n in names}
        crosses = {
            (a, b): x for (a, b), x in fixture_crosses.items() if a in beams and b in beams
        }
        return beams, crosses, True
    beams = {n: config.ground_truth.beams[n] for n in names}
    crosses = {tuple(c.beams): c.moments for c in config.ground_truth.crosses}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            if (a, b) not in crosses and (b, a) not in crosses:
                crosses[(a, b)] = TwoBeamCrossMoments()
    return beams, crosses, False


def _grid(config: ExperimentConfig, beam: BeamConfig) -> np.ndarray:
    if beam.scheme == Scheme.HD:
        return 2 * np.pi * np.arange(config.grid.count) / config.grid.count
    return detuning_grid(config.grid.min, config.grid.max, config.grid.count, beam.cavity.d)


def _setting(config: ExperimentConfig, beam: BeamConfig, control: float) -> MeasurementSetting:
    if beam.scheme == Scheme.HD:
        return MeasurementSetting.hd(beam.name, control)
    return MeasurementSetting.rd(beam.name, config.cavity_params(beam.name), control)


def _partner_control(config: ExperimentConfig, first: BeamConfig, second: BeamConfig, control: float) -> float:
    if first.scheme == Scheme.HD:
        # phi2 = phi1 + const would leave xi and zeta in a single column
        return 2 * control
    value = config.sync.slope * control + config.sync.offset
    if second.cavity.d == 0 and value == 0:
        return settings.SINGULAR_OFFSET
    return value


def expand_config(config: ExperimentConfig) -> dict[str, ScanDataset]:
    """One dataset per beam (noise power) and per beam pair (cross correlations)."""
    beams, crosses, from_fixture = _ground_truth(config)
    report = check_physicality(assemble_multibeam(beams, crosses))
    if not report.passed:
        if not from_fixture:
            raise ValueError("unphysical_ground_truth", report.model_dump())
        logger.warning(
            "Fixture ground truth fails physicality (min symplectic eigenvalue %.4g); using it anyway",
            report.min_symplectic_eigenvalue,
        )
    for beam in config.beams:
        if beam.scheme == Scheme.RD and config.omega_ratio(beam.name) <= math.sqrt(2):
            logger.warning("Beam %s: omega_ratio %.3g is below sqrt(2); sidebands overlap the resonance", beam.name, config.omega_ratio(beam.name))

    rng = np.random.default_rng(config.seed)
    sigma = config.noise_sigma

    def record(settings_, kind):
        value = predict(settings_, kind, beams, crosses)
        if sigma > 0:
            value += sigma * rng.standard_normal()
        return ScanRecord(settings=settings_, kind=kind, value=value, sigma=sigma if sigma > 0 else None)

    datasets: dict[str, ScanDataset] = {}
    for beam in config.beams:
        records = [
            record((_setting(config, beam, float(c)),), ObservableKind.NoisePower) for c in _grid(config, beam)
        ]
        datasets[beam.name] = ScanDataset(records=records)
    if config.pairs:
        for i, first in enumerate(config.beams):
            for second in config.beams[i + 1 :]:
                if first.scheme != second.scheme:
                    logger.warning("Skipping pair %s-%s: schemes differ", first.name, second.name)
                    continue
                records = []
                for c in _grid(config, first):
                    pair = (
                        _setting(config, first, float(c)),
                        _setting(config, second, _partner_control(config, first, second, float(c))),
                    )
                    records.append(record(pair, ObservableKind.CrossRe))
                    records.append(record(pair, ObservableKind.CrossIm))
                datasets[f"{first.name}-{second.name}"] = ScanDataset(records=records)
    return datasets


def generate_scan(config: ExperimentConfig) -> ScanDataset:
    return ScanDataset.merge(expand_config(config).values())


# --- Scan files ---
def _fmt(x: float | None) -> str:
    return "" if x is None else format(x, ".17g")


def write_scan(path: str | Path, data: ScanDataset) -> None:
    cavities: dict[str, CavityParams] = {}
    for r in data.records:
        for s in r.settings:
            if s.cavity is None:
                continue
            if cavities.setdefault(s.beam, s.cavity) != s.cavity:
                raise ValueError("inconsistent_cavity", s.beam)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        for beam, cavity in cavities.items():
            writer.writerow([CAVITY_TAG, beam, _fmt(cavity.d), _fmt(cavity.omega_ratio)])
        writer.writerow(SCAN_COLUMNS)
        for r in data.records:
            paired = len(r.settings) == 2
            writer.writerow(
                [
                    r.settings[0].beam,
                    r.settings[1].beam if paired else "",
                    r.scheme.value,
                    _fmt(r.settings[0].control),
                    _fmt(r.settings[1].control) if paired else "",
                    r.kind.value,
                    _fmt(r.value),
                    _fmt(r.sigma),
                ]
            )
    logger.info("Wrote %d records to %s", len(data), path)


def _errors(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'row'}: {err['msg']}" for err in e.errors())


def read_scan(path: str | Path) -> ScanDataset:
    cavities: dict[str, CavityParams] = {}
    records: list[ScanRecord] = []
    header_seen = False

    def fail(line: int, message: str):
        raise ValueError("malformed_scan", f"{path}:{line}: {message}")

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        for fields in reader:
            line = reader.line_num
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if fields[0].startswith("#"):
                if fields[0].strip() != CAVITY_TAG:
                    continue
                if header_seen:
                    fail(line, "cavity lines must precede the header")
                if len(fields) != 4:
                    fail(line, f"cavity line needs beam, d, omega_ratio; got {len(fields) - 1} fields")
                try:
                    row = CavityRow(beam=fields[1], d=fields[2], omega_ratio=fields[3])
                except ValidationError as e:
                    fail(line, _errors(e))
                cavities[row.beam] = CavityParams(d=row.d, omega_ratio=row.omega_ratio)
                continue
            if not header_seen:
                if fields != SCAN_COLUMNS:
                    fail(line, f"expected header {','.join(SCAN_COLUMNS)}")
                header_seen = True
                continue
            if len(fields) != len(SCAN_COLUMNS):
                fail(line, f"expected {len(SCAN_COLUMNS)} fields, got {len(fields)}")
            try:
                row = ScanRow(**dict(zip(SCAN_COLUMNS, fields)))
            except ValidationError as e:
                fail(line, _errors(e))
            pairs = [(row.beam1, row.phi_or_delta1)]
            if row.beam2 is not None:
                pairs.append((row.beam2, row.phi_or_delta2))
            settings_ = []
            for beam, control in pairs:
                if row.scheme == Scheme.HD:
                    settings_.append(MeasurementSetting.hd(beam, control))
                elif beam not in cavities:
                    fail(line, f"no cavity line for RD beam {beam!r}")
                else:
                    settings_.append(MeasurementSetting.rd(beam, cavities[beam], control))
            try:
                records.append(ScanRecord(settings=tuple(settings_), kind=row.kind, value=row.value, sigma=row.sigma))
            except ValidationError as e:
                fail(line, _errors(e))
    if not header_seen:
        raise ValueError("malformed_scan", f"{path}: missing header")
    if not records:
        raise ValueError("malformed_scan", f"{path}: no records")
    return ScanDataset(records=records)
