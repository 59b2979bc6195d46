import math

from sqlalchemy.orm import Session, selectinload

from sideband_tomo.models import FitEstimate, FitRun
from sideband_tomo.schemas import FitResult


def _finite_or_none(x: float) -> float | None:
    return x if math.isfinite(x) else None


def save_fit(db: Session, result: FitResult, label: str, model: str, sources: list[str]) -> FitRun:
    run = FitRun(
        label=label,
        model=model,
        chi2=result.chi2,
        dof=result.dof,
        rank=result.rank,
        condition_number=_finite_or_none(result.condition_number),
        sources=";".join(sources),
    )
    for name in result.parameters:
        est = result.estimates[name]
        run.estimates.append(
            FitEstimate(
                parameter=name,
                estimate=est.value,
                stderr=_finite_or_none(est.stderr),
                identifiable=est.identifiable,
            )
        )
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def list_runs(db: Session) -> list[FitRun]:
    return db.query(FitRun).order_by(FitRun.created_at).all()


def get_run(db: Session, run_id: str) -> FitRun:
    run = db.query(FitRun).options(selectinload(FitRun.estimates)).filter(FitRun.id == run_id).first()
    if not run:
        raise ValueError("run_not_found", run_id)
    return run
