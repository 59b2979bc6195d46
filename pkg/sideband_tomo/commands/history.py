import sys

from sideband_tomo.db import get_db
from sideband_tomo.schemas import FitRunResponse
from sideband_tomo.services import archive_service


def register(sub) -> None:
    p = sub.add_parser("history", help="list archived fits")
    p.add_argument("--run", default=None, help="show one archived fit in full")
    p.set_defaults(handler=run)


def run(args) -> int:
    with get_db(args.db) as db:
        if args.run:
            fit = FitRunResponse.model_validate(archive_service.get_run(db, args.run))
            sys.stdout.write(fit.model_dump_json(indent=2) + "\n")
            return 0
        for row in archive_service.list_runs(db):
            fit = FitRunResponse.model_validate(row)
            cond = "inf" if fit.condition_number is None else f"{fit.condition_number:.4g}"
            print(
                f"{fit.id}  {fit.created_at:%Y-%m-%d %H:%M:%S}  {fit.model:<9}  chi2={fit.chi2:.4g} "
                f"dof={fit.dof} rank={fit.rank} cond={cond}  {fit.label}"
            )
    return 0
