import sys

from sideband_tomo.commands import CommandError
from sideband_tomo.db import get_db
from sideband_tomo.schemas import ModelSpec, ScanDataset
from sideband_tomo.services import archive_service, reconstruction, scan_io


def register(sub) -> None:
    p = sub.add_parser("fit", help="reconstruct moments from scan files")
    p.add_argument("--scan", nargs="+", required=True, help="scan CSV files")
    p.add_argument("--model", choices=["full", "no-hidden"], default="full")
    p.add_argument("--report", default=None, help="report file (default: stdout)")
    p.add_argument("--estimates", default=None, help="CSV of parameter, estimate, stderr")
    p.add_argument("--project", action="store_true", help="also report the nearest physical state")
    p.add_argument("--archive", action="store_true", help="store the fit in the archive database")
    p.add_argument("--label", default=None, help="archive label (default: scan file names)")
    p.set_defaults(handler=run)


def _projection_lines(result, data: ScanDataset) -> list[str]:
    single = [b for b in data.beams() if f"alpha[{b}]" in result.parameters]
    beams = {b: result.beam_moments(b) for b in single}
    crosses = {}
    for i, b1 in enumerate(single):
        for b2 in single[i + 1 :]:
            if f"mu[{b1},{b2}]" in result.parameters:
                crosses[(b1, b2)] = result.cross_moments(b1, b2)
            elif f"mu[{b2},{b1}]" in result.parameters:
                crosses[(b1, b2)] = result.cross_moments(b2, b1).swapped()
    try:
        projection = reconstruction.project_physical(beams, crosses)
    except ValueError as e:
        if e.args[0] == "missing_pair":
            return ["physical projection: skipped, cross moments missing for " + "-".join(e.args[1])]
        raise
    lines = [f"physical projection: Frobenius distance {projection.distance:.6g}"]
    for name, m in projection.beams.items():
        lines.append(f"  {name}: alpha={m.alpha:.6g} beta={m.beta:.6g} gamma={m.gamma:.6g} delta={m.delta:.6g}")
    return lines


def run(args) -> int:
    data = ScanDataset.merge(scan_io.read_scan(path) for path in args.scan)
    full = ModelSpec.for_dataset(data, hidden=True)
    constrained = ModelSpec.for_dataset(data, hidden=False)
    model = full if args.model == "full" else constrained
    try:
        result = reconstruction.fit_wls(data, model)
        ident = reconstruction.identifiability(data, model)
        comparison = reconstruction.compare_models(data, full, constrained)
    except ValueError as e:
        if e.args[0] == "incompatible_model":
            raise CommandError(2, f"scan records need parameter {e.args[1]} which the model lacks")
        raise
    extra = ["", *_projection_lines(result, data)] if args.project else None
    if args.report:
        reconstruction.write_fit_report(args.report, result, ident, comparison, args.model, extra)
    else:
        sys.stdout.write(reconstruction.format_fit_report(result, ident, comparison, args.model, extra))
    if args.estimates:
        reconstruction.write_estimates(args.estimates, result)
    if args.archive:
        with get_db(args.db) as db:
            run_ = archive_service.save_fit(db, result, args.label or ",".join(args.scan), args.model, list(args.scan))
        print(f"archived as {run_.id}", file=sys.stderr)
    return 0
