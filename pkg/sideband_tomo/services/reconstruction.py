import logging
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg, stats

from sideband_tomo.config import settings
from sideband_tomo.schemas import (
    BEAM_MOMENTS,
    CROSS_MOMENTS,
    FitResult,
    Identifiability,
    MeasurementSetting,
    ModelComparison,
    ModelSpec,
    ObservableKind,
    ParameterEstimate,
    PhysicalProjection,
    ScanDataset,
    ScanRecord,
    StationaryBeamMoments,
    TwoBeamCrossMoments,
    pair_param,
    single_param,
)
from sideband_tomo.services.detection_models import cross_rows, noise_row, predict
from sideband_tomo.services.modal_algebra import (
    assemble_multibeam,
    check_physicality,
    decompose_multibeam,
    williamson_clip,
)

logger = logging.getLogger(__name__)


def _known(model: ModelSpec, name: str) -> bool:
    return name in model.parameters or name in model.fixed


def design_row(
    settings_: tuple[MeasurementSetting, ...], kind: ObservableKind, model: ModelSpec
) -> tuple[np.ndarray, float]:
    """Row over model.parameters and the known offset, so that prediction = row . params + offset."""
    if kind == ObservableKind.NoisePower:
        if len(settings_) != 1:
            raise ValueError("incompatible_kind", kind.value, len(settings_))
        (setting,) = settings_
        coeffs, offset = noise_row(setting)
        names = [single_param(n, setting.beam) for n in BEAM_MOMENTS]
    else:
        if len(settings_) != 2:
            raise ValueError("incompatible_kind", kind.value, len(settings_))
        first, second = settings_
        sign = 1.0
        if not _known(model, pair_param("mu", first.beam, second.beam)):
            # stored for the reversed pair: <J2 J1*> is the conjugate of <J1 J2*>
            first, second = second, first
            sign = -1.0
        re, im = cross_rows(first, second)
        coeffs = re if kind == ObservableKind.CrossRe else sign * im
        offset = 0.0
        names = [pair_param(n, first.beam, second.beam) for n in CROSS_MOMENTS]

    index = {name: k for k, name in enumerate(model.parameters)}
    row = np.zeros(len(model.parameters))
    for name, c in zip(names, coeffs):
        if name in index:
            row[index[name]] += c
        elif name not in model.fixed:
            raise ValueError("incompatible_model", name)
    return row, offset


def _record_key(record: ScanRecord):
    return (
        record.kind.value,
        record.beams,
        tuple(s.control for s in record.settings),
        record.value,
        record.sigma or 0.0,
    )


def _weighted_system(data: ScanDataset, model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    records = sorted(data.records, key=_record_key)
    rows = []
    y = []
    sigma = []
    for record in records:
        row, offset = design_row(record.settings, record.kind, model)
        rows.append(row)
        y.append(record.value - offset)
        sigma.append(record.sigma if record.sigma is not None else np.nan)
    A = np.array(rows)
    y = np.array(y)
    sigma = np.array(sigma)
    missing = np.isnan(sigma)
    if missing.any():
        logger.warning("%d records carry no sigma; using unit weights for them", int(missing.sum()))
        sigma[missing] = 1.0
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y)) and np.all(np.isfinite(sigma))):
        raise ValueError("non_finite_data")
    w = 1.0 / sigma
    return A * w[:, None], y * w


def _svd(Aw: np.ndarray):
    m, p = Aw.shape
    if m < p:
        Aw = np.vstack([Aw, np.zeros((p - m, p))])
    return linalg.svd(Aw, full_matrices=False)


def _analyse(Aw: np.ndarray, model: ModelSpec, rtol: float | None) -> tuple[Identifiability, tuple]:
    if not np.any(Aw):
        raise ValueError("zero_design")
    rtol = settings.RANK_RTOL if rtol is None else rtol
    U, s, Vt = _svd(Aw)
    rank = int(np.sum(s > rtol * s[0]))
    p = len(model.parameters)
    condition = float(s[0] / s[-1]) if rank == p else float("inf")
    null = Vt[rank:]
    overlap = np.linalg.norm(null, axis=0) if len(null) else np.zeros(p)
    unidentifiable = tuple(
        name for name, o in zip(model.parameters, overlap) if o > settings.NULL_OVERLAP_TOL
    )
    if rank < p:
        logger.warning("Design is rank deficient (%d of %d); unidentifiable: %s", rank, p, ", ".join(unidentifiable))
    ident = Identifiability(
        rank=rank,
        condition_number=condition,
        unidentifiable=unidentifiable,
        null_space=null.tolist(),
    )
    return ident, (U, s, Vt)


def identifiability(data: ScanDataset, model: ModelSpec, rtol: float | None = None) -> Identifiability:
    Aw, _ = _weighted_system(data, model)
    ident, _ = _analyse(Aw, model, rtol)
    return ident


def fit_wls(data: ScanDataset, model: ModelSpec, rtol: float | None = None) -> FitResult:
    """Weighted least squares with a minimum-norm solution on rank-deficient designs."""
    Aw, yw = _weighted_system(data, model)
    ident, (U, s, Vt) = _analyse(Aw, model, rtol)
    r = ident.rank
    m = Aw.shape[0]
    Ur = U[:m, :r]
    Vr = Vt[:r].T
    x = Vr @ ((Ur.T @ yw) / s[:r])
    cov = (Vr / s[:r] ** 2) @ Vr.T
    resid = Aw @ x - yw
    chi2 = float(resid @ resid)
    estimates = {}
    for k, name in enumerate(model.parameters):
        identifiable = name not in ident.unidentifiable
        stderr = float(np.sqrt(max(cov[k, k], 0.0))) if identifiable else float("inf")
        estimates[name] = ParameterEstimate(value=float(x[k]), stderr=stderr, identifiable=identifiable)
    logger.info("Fitted %d parameters to %d records: chi2=%.4g dof=%d rank=%d", len(model.parameters), m, chi2, m - r, r)
    return FitResult(
        parameters=model.parameters,
        fixed=model.fixed,
        estimates=estimates,
        chi2=chi2,
        dof=m - r,
        n_records=m,
        rank=r,
        condition_number=ident.condition_number,
        null_space=ident.null_space,
    )


def compare_models(data: ScanDataset, full: ModelSpec, constrained: ModelSpec) -> ModelComparison:
    dropped = set(full.parameters) - set(constrained.parameters)
    nested = (
        set(constrained.parameters) <= set(full.parameters)
        and dropped <= set(constrained.fixed)
        and set(full.fixed) <= set(constrained.fixed)
    )
    if not nested:
        raise ValueError("models_not_nested")
    fit_full = fit_wls(data, full)
    fit_constrained = fit_wls(data, constrained)
    delta_chi2 = fit_constrained.chi2 - fit_full.chi2
    delta_dof = fit_constrained.dof - fit_full.dof
    threshold = settings.COMPARE_THRESHOLD_PER_PARAM * len(dropped)
    p_value = float(stats.chi2.sf(max(delta_chi2, 0.0), delta_dof)) if delta_dof > 0 else None
    return ModelComparison(
        delta_chi2=float(delta_chi2),
        delta_dof=delta_dof,
        threshold=threshold,
        preferred="full" if delta_chi2 > threshold else "constrained",
        p_value=p_value,
    )


def predict_dataset(
    data: ScanDataset,
    beams: dict[str, StationaryBeamMoments],
    crosses: dict[tuple[str, str], TwoBeamCrossMoments] | None = None,
) -> np.ndarray:
    return np.array([predict(r.settings, r.kind, beams, crosses) for r in data.records])


def project_physical(beams, crosses: dict | None = None) -> PhysicalProjection:
    """Nearest state with every symplectic eigenvalue at least 1, by clipping the Williamson spectrum."""
    if isinstance(beams, StationaryBeamMoments):
        beams = {"b0": beams}
    crosses = crosses or {}
    V = assemble_multibeam(beams, crosses)
    if check_physicality(V).passed:
        _, canonical = decompose_multibeam(V)
        return PhysicalProjection(beams=dict(beams), crosses=canonical, covariance=V, distance=0.0)
    clipped = williamson_clip(V)
    new_beams, new_crosses = decompose_multibeam(clipped)
    distance = float(np.linalg.norm(clipped.matrix - V.matrix))
    logger.info("Projected onto physical states, Frobenius distance %.4g", distance)
    return PhysicalProjection(beams=new_beams, crosses=new_crosses, covariance=clipped, distance=distance)


def estimates_frame(result: FitResult) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "parameter": list(result.parameters),
            "estimate": [result.estimates[p].value for p in result.parameters],
            "stderr": [result.estimates[p].stderr for p in result.parameters],
            "identifiable": [result.estimates[p].identifiable for p in result.parameters],
        }
    )


def write_estimates(path: str | Path, result: FitResult) -> None:
    estimates_frame(result).to_csv(path, index=False, float_format="%.17g")


def format_fit_report(
    result: FitResult,
    ident: Identifiability,
    comparison: ModelComparison | None = None,
    model_name: str = "full",
    extra: list[str] | None = None,
) -> str:
    lines = [
        f"model: {model_name}",
        f"records: {result.n_records}",
        f"parameters: {len(result.parameters)} (fixed to zero: {len(result.fixed)})",
        f"rank: {result.rank}",
        f"condition number: {result.condition_number:.6g}",
        f"chi2: {result.chi2:.6g}  dof: {result.dof}",
        f"unidentifiable: {', '.join(ident.unidentifiable) or 'none'}",
    ]
    if comparison is not None:
        p = "n/a" if comparison.p_value is None else f"{comparison.p_value:.4g}"
        lines.append(
            f"full vs no-hidden: delta_chi2={comparison.delta_chi2:.6g} delta_dof={comparison.delta_dof} "
            f"threshold={comparison.threshold:.6g} p={p} preferred={comparison.preferred}"
        )
    lines.append("")
    lines.append(estimates_frame(result).to_string(index=False))
    if extra:
        lines.extend(extra)
    return "\n".join(lines) + "\n"


def write_fit_report(
    path: str | Path,
    result: FitResult,
    ident: Identifiability,
    comparison: ModelComparison | None = None,
    model_name: str = "full",
    extra: list[str] | None = None,
) -> None:
    Path(path).write_text(format_fit_report(result, ident, comparison, model_name, extra), encoding="utf-8")
    logger.info("Wrote fit report to %s", path)
