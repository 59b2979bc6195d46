from pathlib import Path

from sideband_tomo.services import scan_io
from sideband_tomo.services.modal_algebra import write_matrix


def register(sub) -> None:
    p = sub.add_parser("fixture", help="export the six-mode spectral matrix and its covariance")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=run)


def run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, covariance = scan_io.load_fixture()
    scan_io.write_fixture(out / "fixture.csv")
    write_matrix(out / "fixture_covariance.csv", covariance)
    print(out / "fixture.csv")
    print(out / "fixture_covariance.csv")
    return 0
